//! Spin precession about a uniform field along +z and the angular-momentum
//! budget that ties the neutrino precession to the muon moment.
//!
//! The moment vector of a spin-½ state is taken as `2 μ s`, so that
//! `|μ⃗| = μ` at `|s| = ½` and `ds/dt = 2μ (s × B ẑ)`. For `s = (½, 0, 0)` this
//! gives `ds_y/dt = -μB`. Time steps in the `δL` formulas are proper times.

use std::f64::consts::PI;

use crate::constants::ConstantsTable;
use crate::error::{domain, Error, Result};
use crate::relkin::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub s: Vec3,
}

impl SpinState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        SpinState {
            s: Vec3::new(x, y, z),
        }
    }

    pub fn norm(&self) -> f64 {
        self.s.norm()
    }

    pub fn azimuth(&self) -> f64 {
        self.s.y.atan2(self.s.x)
    }
}

/// Uniform field along +z, stored in natural units (GeV^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    strength: f64,
}

impl FieldConfig {
    pub fn natural(strength: f64) -> Result<Self> {
        if !strength.is_finite() || strength < 0.0 {
            return Err(domain(format!("field must be finite and >= 0, got {strength}")));
        }
        Ok(FieldConfig { strength })
    }

    pub fn from_tesla(b_tesla: f64, table: &ConstantsTable) -> Result<Self> {
        if !b_tesla.is_finite() || b_tesla < 0.0 {
            return Err(domain(format!("field must be finite and >= 0 T, got {b_tesla}")));
        }
        Self::natural(table.tesla_to_natural(b_tesla))
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

fn rate(s: &Vec3, omega: f64) -> Vec3 {
    // 2μ (s × B ẑ) = ω (s_y, -s_x, 0)
    Vec3::new(omega * s.y, -omega * s.x, 0.0)
}

fn rk4_step(s: &Vec3, omega: f64, h: f64) -> Vec3 {
    let k1 = rate(s, omega);
    let k2 = rate(&(s + 0.5 * h * k1), omega);
    let k3 = rate(&(s + 0.5 * h * k2), omega);
    let k4 = rate(&(s + h * k3), omega);
    s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates the precession with `steps` classical RK4 steps and returns the
/// full path (`steps + 1` states, starting with `s0`).
///
/// The per-step rotation error of RK4 is `O((ωh)^5)`; with `ωh = 0.01` the norm
/// drifts by ~1e-14 per step.
pub fn precess_path(
    s0: SpinState,
    mu: f64,
    field: &FieldConfig,
    t: f64,
    steps: usize,
) -> Result<Vec<SpinState>> {
    if steps == 0 {
        return Err(domain("precession needs at least one step"));
    }
    if !(mu.is_finite() && t.is_finite() && s0.s.iter().all(|c| c.is_finite())) {
        return Err(domain("precession inputs must be finite"));
    }
    let omega = 2.0 * mu * field.strength;
    let h = t / steps as f64;
    check_step(omega, h, t)?;
    let mut path = Vec::with_capacity(steps + 1);
    let mut s = s0.s;
    path.push(s0);
    for _ in 0..steps {
        s = rk4_step(&s, omega, h);
        path.push(SpinState { s });
    }
    Ok(path)
}

/// Spin after time `t`.
pub fn precess(s0: SpinState, mu: f64, field: &FieldConfig, t: f64, steps: usize) -> Result<SpinState> {
    if steps == 0 {
        return Err(domain("precession needs at least one step"));
    }
    if !(mu.is_finite() && t.is_finite() && s0.s.iter().all(|c| c.is_finite())) {
        return Err(domain("precession inputs must be finite"));
    }
    let omega = 2.0 * mu * field.strength;
    let h = t / steps as f64;
    check_step(omega, h, t)?;
    let mut s = s0.s;
    for _ in 0..steps {
        s = rk4_step(&s, omega, h);
    }
    Ok(SpinState { s })
}

/// RK4 on a rotation diverges for `|ω h|` near 2.8 and is far from the
/// documented accuracy well before that.
fn check_step(omega: f64, h: f64, t: f64) -> Result<()> {
    if (omega * h).abs() > 1.0 {
        let need = (omega * t).abs().ceil();
        return Err(domain(format!(
            "step too coarse: |2 mu B dt| = {:e} > 1, use at least {need} steps",
            (omega * h).abs()
        )));
    }
    Ok(())
}

/// Total clockwise (about +z) angle swept along a path, unwrapped.
pub fn clockwise_angle(path: &[SpinState]) -> f64 {
    path.windows(2)
        .map(|w| {
            let mut d = w[0].azimuth() - w[1].azimuth();
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            d
        })
        .sum()
}

/// Angular momentum picked up by the neutrino over a proper-time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularStep {
    pub delta: f64,
    /// Set when `2 μ B dt >= 0.01`, i.e. the step is not infinitesimal.
    pub coarse: bool,
}

/// `δL_y = -γ_ν μ_ν B dt`.
pub fn delta_ly_neutrino(gamma_nu: f64, mu_nu: f64, b: f64, dt: f64) -> AngularStep {
    AngularStep {
        delta: -gamma_nu * mu_nu * b * dt,
        coarse: (2.0 * mu_nu * b * dt).abs() >= 0.01,
    }
}

/// Muon-moment shift from `δμ_μ γ_μ = 2 μ_ν γ_ν`.
pub fn delta_mu_mu(mu_nu: f64, gamma_nu: f64, gamma_mu: f64) -> Result<f64> {
    if !(gamma_mu >= 1.0) {
        return Err(domain(format!("muon Lorentz factor must be >= 1, got {gamma_mu}")));
    }
    if !(gamma_nu >= 1.0) {
        return Err(domain(format!("neutrino Lorentz factor must be >= 1, got {gamma_nu}")));
    }
    Ok(2.0 * mu_nu * gamma_nu / gamma_mu)
}

/// Proper-time precession frequency `2 μ B` of a moment `mu`.
pub fn proper_frequency(mu: f64, field: &FieldConfig) -> f64 {
    2.0 * mu * field.strength
}

/// Converts a moment given in Bohr magnetons to natural units (GeV^-1).
pub fn bohr_to_natural(mu_bohr: f64, table: &ConstantsTable) -> Result<f64> {
    if !mu_bohr.is_finite() {
        return Err(Error::Domain("moment must be finite".into()));
    }
    Ok(mu_bohr * table.bohr_magneton())
}
