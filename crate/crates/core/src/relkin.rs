//! Four-vectors, boosts and the angular-momentum tensor.
//!
//! Conventions: metric (+,-,-,-), contravariant components throughout, and
//! boosts are passive maps from a particle's rest frame (primed) to the lab,
//! where the particle moves with velocity `v * direction`.

use nalgebra::{Matrix4, Vector3};

use crate::error::{domain, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourVector {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FourVector {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        FourVector { t, x, y, z }
    }

    pub fn spatial(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    fn from_parts(t: f64, r: Vec3) -> Self {
        FourVector::new(t, r.x, r.y, r.z)
    }

    /// Minkowski product with signature (+,-,-,-).
    pub fn dot(&self, other: &FourVector) -> f64 {
        self.t * other.t - self.spatial().dot(&other.spatial())
    }

    pub fn boost(&self, b: &BoostParams) -> FourVector {
        let n = b.direction;
        let r = self.spatial();
        let along = n.dot(&r);
        let t = b.gamma * (self.t + b.v * along);
        let r = r + ((b.gamma - 1.0) * along + b.gamma * b.v * self.t) * n;
        FourVector::from_parts(t, r)
    }
}

/// Rest-frame to lab boost. `gamma` is derived from `v`, never set directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    v: f64,
    direction: Vec3,
    gamma: f64,
}

impl BoostParams {
    /// `direction` is normalized; its norm must be positive and finite.
    pub fn new(v: f64, direction: Vec3) -> Result<Self> {
        if !v.is_finite() || !(0.0..1.0).contains(&v) {
            return Err(domain(format!("boost speed must lie in [0, 1), got {v}")));
        }
        let norm = direction.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(domain("boost direction must be a non-zero finite vector"));
        }
        Ok(BoostParams {
            v,
            direction: direction / norm,
            gamma: 1.0 / ((1.0 - v) * (1.0 + v)).sqrt(),
        })
    }

    pub fn along_x(v: f64) -> Result<Self> {
        Self::new(v, Vec3::x())
    }

    /// Boost with Lorentz factor `gamma` (>= 1) along `direction`.
    pub fn from_gamma(gamma: f64, direction: Vec3) -> Result<Self> {
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(domain(format!("Lorentz factor must be >= 1, got {gamma}")));
        }
        let v = (1.0 - 1.0 / (gamma * gamma)).sqrt();
        let mut b = Self::new(v, direction)?;
        b.gamma = gamma;
        Ok(b)
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn velocity(&self) -> Vec3 {
        self.v * self.direction
    }

    pub fn reversed(&self) -> Self {
        BoostParams {
            direction: -self.direction,
            ..*self
        }
    }
}

/// Antisymmetric `L^{μν}` stored as its boost part `K^i = L^{0i}` and spin
/// part `s_i = ½ ε_ijk L^{jk}`. Antisymmetry holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularMomentumTensor {
    pub k: Vec3,
    pub s: Vec3,
}

impl AngularMomentumTensor {
    pub fn new(k: Vec3, s: Vec3) -> Self {
        AngularMomentumTensor { k, s }
    }

    /// Orbital tensor `x^μ p^ν - x^ν p^μ` of a point particle.
    pub fn orbital(x: &FourVector, p: &FourVector) -> Self {
        let r = x.spatial();
        let mom = p.spatial();
        AngularMomentumTensor {
            k: x.t * mom - p.t * r,
            s: r.cross(&mom),
        }
    }

    /// Component `L^{03}`.
    pub fn l03(&self) -> f64 {
        self.k.z
    }

    /// Full antisymmetric `L^{μν}`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let (k, s) = (self.k, self.s);
        Matrix4::new(
            0.0, k.x, k.y, k.z, //
            -k.x, 0.0, s.z, -s.y, //
            -k.y, -s.z, 0.0, s.x, //
            -k.z, s.y, -s.x, 0.0,
        )
    }

    /// Reads the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        AngularMomentumTensor {
            k: Vec3::new(m[(0, 1)], m[(0, 2)], m[(0, 3)]),
            s: Vec3::new(m[(2, 3)], -m[(1, 3)], m[(1, 2)]),
        }
    }
}

/// Transforms `t` from the rest frame to the lab: `Λ L Λᵀ`, evaluated in the
/// (K, s) split.
pub fn boost_tensor(t: &AngularMomentumTensor, b: &BoostParams) -> AngularMomentumTensor {
    let beta = b.velocity();
    let g = b.gamma;
    let c = g * g / (g + 1.0);
    AngularMomentumTensor {
        k: g * (t.k - beta.cross(&t.s)) - c * beta.dot(&t.k) * beta,
        s: g * (t.s + beta.cross(&t.k)) - c * beta.dot(&t.s) * beta,
    }
}

/// `L'^{03} = t' p'_z - E' z'` in the rest frame.
pub fn l03_rest(t_prime: f64, p_z_prime: f64, e_prime: f64, z_prime: f64) -> f64 {
    debug_assert!(e_prime > 0.0);
    t_prime * p_z_prime - e_prime * z_prime
}

/// Lab-frame y angular momentum after a boost along x:
/// `L_y = γ (s'_y - v L'^{03})`.
pub fn spin_lab_y(s_y_rest: f64, b: &BoostParams, l03: f64) -> Result<f64> {
    if (b.direction - Vec3::x()).norm() > 1e-12 {
        return Err(domain("closed-form L_y requires a boost along +x"));
    }
    Ok(b.gamma * (s_y_rest - b.v * l03))
}
