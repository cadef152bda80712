//! Polarized muon decay Monte Carlo.
//!
//! Rest-frame positrons are drawn from the Michel density
//! `x² [(3 - 2x) + P (2x - 1) cosθ]` by rejection, boosted to the lab with
//! massless kinematics, and binned in `y = E_p / E_max`. The neutrinos carry
//! the remaining fraction `f = 1 - y`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::constants::ConstantsTable;
use crate::error::{domain, Error, Result};
use crate::numeric::{bisect, integrate};
use crate::rng::{chunks, substream, StreamRng};
use crate::weighting::Weighting;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestFrameDecay {
    /// `2 E'_e / m_mu`.
    pub x: f64,
    /// Cosine of the angle to the muon spin.
    pub cos_theta: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuonBeam {
    gamma_mu: f64,
    polarization: f64,
    e_max: f64,
    m_mu: f64,
}

impl MuonBeam {
    pub fn new(gamma_mu: f64, polarization: f64, e_max: f64, m_mu: f64) -> Result<Self> {
        if !(gamma_mu >= 1.0) || !gamma_mu.is_finite() {
            return Err(domain(format!("gamma_mu must be >= 1, got {gamma_mu}")));
        }
        if !(polarization.abs() <= 1.0) {
            return Err(domain(format!("polarization must lie in [-1, 1], got {polarization}")));
        }
        if !(e_max > 0.0 && m_mu > 0.0) {
            return Err(domain("E_max and m_mu must be positive"));
        }
        Ok(MuonBeam {
            gamma_mu,
            polarization,
            e_max,
            m_mu,
        })
    }

    /// Beam at the magic Lorentz factor with `E_max` from the table.
    pub fn from_table(table: &ConstantsTable, polarization: f64) -> Result<Self> {
        Self::new(table.gamma_magic(), polarization, table.e_max(), table.m_mu())
    }

    /// Same beam with `E_max` set to the kinematic endpoint.
    pub fn with_kinematic_endpoint(self) -> Self {
        MuonBeam {
            e_max: self.endpoint(),
            ..self
        }
    }

    pub fn gamma_mu(&self) -> f64 {
        self.gamma_mu
    }

    pub fn polarization(&self) -> f64 {
        self.polarization
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn beta(&self) -> f64 {
        (1.0 - 1.0 / (self.gamma_mu * self.gamma_mu)).sqrt()
    }

    /// Largest lab positron energy, `γ (1 + β) m_mu / 2`.
    pub fn endpoint(&self) -> f64 {
        self.gamma_mu * (1.0 + self.beta()) * self.m_mu / 2.0
    }

    /// Ratio `E_max / endpoint`: maps the configured `y` onto the variable in
    /// which the closed-form spectrum is exact (for `γ → ∞`).
    pub fn y_scale(&self) -> f64 {
        self.e_max / self.endpoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabEvent {
    pub e_p: f64,
    pub y: f64,
    pub f: f64,
    /// +1 when the muon spin points along the beam, -1 when against.
    pub spin_sign: f64,
}

/// Upper bound of the Michel density over the unit square for `|P| <= 1`:
/// `x²(3-2x) <= 1` and `x²|2x-1| <= 1`.
fn michel_envelope(p: f64) -> f64 {
    1.0 + p.abs()
}

pub fn michel_density(x: f64, cos_theta: f64, p: f64) -> f64 {
    x * x * ((3.0 - 2.0 * x) + p * (2.0 * x - 1.0) * cos_theta)
}

pub fn sample_rest<R: Rng + ?Sized>(p: f64, rng: &mut R) -> RestFrameDecay {
    let envelope = michel_envelope(p);
    loop {
        let x: f64 = rng.gen();
        let c: f64 = 2.0 * rng.gen::<f64>() - 1.0;
        let u: f64 = rng.gen::<f64>() * envelope;
        if u < michel_density(x, c, p) {
            return RestFrameDecay {
                x,
                cos_theta: c,
                phi: 2.0 * PI * rng.gen::<f64>(),
            };
        }
    }
}

/// Lab event for a muon whose spin points along the beam axis.
pub fn boost_to_lab(d: &RestFrameDecay, beam: &MuonBeam) -> LabEvent {
    boost_with_spin(d, beam, 1.0)
}

/// Lab event with the spin along (`spin_sign = 1`) or against (`-1`) the beam.
pub fn boost_with_spin(d: &RestFrameDecay, beam: &MuonBeam, spin_sign: f64) -> LabEvent {
    let e_rest = d.x * beam.m_mu / 2.0;
    let cos_beam = spin_sign * d.cos_theta;
    let e_p = beam.gamma_mu * e_rest * (1.0 + beam.beta() * cos_beam);
    let y = (e_p / beam.e_max).clamp(0.0, 1.0);
    LabEvent {
        e_p,
        y,
        f: 1.0 - y,
        spin_sign,
    }
}

pub(crate) fn n_unchecked(y: f64) -> f64 {
    (y - 1.0) * (4.0 * y * y - 5.0 * y - 5.0)
}

pub(crate) fn a_unchecked(y: f64) -> f64 {
    (-8.0 * y * y + y + 1.0) / (4.0 * y * y - 5.0 * y - 5.0)
}

/// Antiderivative of `N`: `y⁴ - 3y³ + 5y`; `∫₀¹ N = 3`.
fn n_integral(y: f64) -> f64 {
    y * y * y * y - 3.0 * y * y * y + 5.0 * y
}

/// Antiderivative of `N·A = -8y³ + 9y² - 1`.
fn na_integral(y: f64) -> f64 {
    -2.0 * y * y * y * y + 3.0 * y * y * y - y
}

/// Probability that `u = E/endpoint` falls in `[u1, u2]` for a beam of
/// velocity `beta`, and the spin-signed moment divided by `P`. Integrates the
/// Michel density over `x`; for fixed `x` the beam-axis cosine is linear in `u`.
fn finite_gamma_bin(beta: f64, u1: f64, u2: f64) -> (f64, f64) {
    if beta < 1e-12 {
        let cdf = |x: f64| 2.0 * x * x * x - x * x * x * x;
        return (cdf(u2) - cdf(u1), 0.0);
    }
    let k = 1.0 + beta;
    let eps = (1.0 - beta) / (1.0 + beta);
    let range = |x: f64| {
        let c = |u: f64| ((k * u / x - 1.0) / beta).clamp(-1.0, 1.0);
        (c(u1), c(u2))
    };
    let n_part = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let (lo, hi) = range(x);
        x * x * (3.0 - 2.0 * x) * (hi - lo)
    };
    let a_part = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let (lo, hi) = range(x);
        x * x * (2.0 * x - 1.0) * (hi * hi - lo * lo) / 2.0
    };
    let mut cuts = vec![0.0, 1.0];
    for u in [u1, u2] {
        cuts.push(u);
        if eps > 0.0 {
            cuts.push(u / eps);
        }
    }
    cuts.retain(|c| (0.0..=1.0).contains(c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut w = 0.0;
    let mut m = 0.0;
    for pair in cuts.windows(2) {
        w += integrate(n_part, pair[0], pair[1], 1e-12);
        m += integrate(a_part, pair[0], pair[1], 1e-12);
    }
    (w, m)
}

fn check_unit(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(domain(format!("y must lie in [0, 1], got {y}")))
    }
}

/// Unnormalized lab positron spectrum `N(y) = (y-1)(4y²-5y-5)`.
pub fn analytic_n(y: f64) -> Result<f64> {
    check_unit(y)?;
    Ok(n_unchecked(y))
}

/// Lab asymmetry `A(y) = (-8y²+y+1)/(4y²-5y-5)`.
pub fn analytic_a(y: f64) -> Result<f64> {
    check_unit(y)?;
    Ok(a_unchecked(y))
}

/// Root of `A(y)` in `(0, 1)`, located by bisection.
pub fn asymmetry_zero() -> f64 {
    bisect(a_unchecked, 0.0, 1.0, 1e-15).expect("A changes sign on [0, 1]")
}

pub fn f_of_y(y: f64) -> Result<f64> {
    check_unit(y)?;
    Ok(1.0 - y)
}

/// Stream of lab events for one chunk. Spin orientation is a fair coin, so the
/// spin-summed spectrum is `N` and the spin-signed one is `P·N·A`.
pub struct EventStream<'a> {
    beam: &'a MuonBeam,
    rng: StreamRng,
    remaining: u64,
}

impl<'a> EventStream<'a> {
    pub fn new(beam: &'a MuonBeam, rng: StreamRng, len: u64) -> Self {
        EventStream {
            beam,
            rng,
            remaining: len,
        }
    }
}

impl Iterator for EventStream<'_> {
    type Item = LabEvent;

    fn next(&mut self) -> Option<LabEvent> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let spin = if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
        let d = sample_rest(self.beam.polarization, &mut self.rng);
        Some(boost_with_spin(&d, self.beam, spin))
    }
}

/// Runs `f` on every chunk of an `n`-event sample in parallel and returns the
/// per-chunk results in chunk order. Independent of the thread count.
pub fn map_event_chunks<T, F>(beam: &MuonBeam, n: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(EventStream<'_>) -> T + Sync,
{
    chunks(n)
        .into_par_iter()
        .map(|(idx, len)| f(EventStream::new(beam, substream(seed, &[idx]), len)))
        .collect()
}

pub fn generate_events(beam: &MuonBeam, n: u64, seed: u64) -> Vec<LabEvent> {
    map_event_chunks(beam, n, seed, |s| s.collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Binned `y` spectrum with spin-signed sums for the asymmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumHistogram {
    pub counts: Vec<u64>,
    pub spin_sum: Vec<i64>,
}

impl SpectrumHistogram {
    pub fn generate(beam: &MuonBeam, n: u64, seed: u64, nbins: usize) -> Self {
        let parts = map_event_chunks(beam, n, seed, |stream| {
            let mut h = SpectrumHistogram {
                counts: vec![0; nbins],
                spin_sum: vec![0; nbins],
            };
            for ev in stream {
                let b = ((ev.y * nbins as f64) as usize).min(nbins - 1);
                h.counts[b] += 1;
                h.spin_sum[b] += ev.spin_sign as i64;
            }
            h
        });
        let mut total = SpectrumHistogram {
            counts: vec![0; nbins],
            spin_sum: vec![0; nbins],
        };
        for p in parts {
            for b in 0..nbins {
                total.counts[b] += p.counts[b];
                total.spin_sum[b] += p.spin_sum[b];
            }
        }
        total
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        let n = self.nbins() as f64;
        (0..self.nbins()).map(|i| (i as f64 + 0.5) / n).collect()
    }

    /// Expected probability content and mean asymmetry per bin for `beam`,
    /// exact at the beam's finite `γ` (the lowest bin loses a sliver of width
    /// `(1-β)/(1+β)` in the endpoint-scaled variable).
    pub fn expected(&self, beam: &MuonBeam) -> Vec<(f64, f64)> {
        let beta = beam.beta();
        self.bins_in_u(beam)
            .into_iter()
            .map(|(lo, hi)| {
                let (w, m) = finite_gamma_bin(beta, lo, hi);
                (w, if w > 0.0 { m / w } else { 0.0 })
            })
            .collect()
    }

    /// Bin contents of the `γ → ∞` closed forms `N(y)` and `N(y)A(y)`.
    pub fn expected_limit(&self, beam: &MuonBeam) -> Vec<(f64, f64)> {
        self.bins_in_u(beam)
            .into_iter()
            .map(|(lo, hi)| {
                let w = n_integral(hi) - n_integral(lo);
                let a = if w > 0.0 {
                    (na_integral(hi) - na_integral(lo)) / w
                } else {
                    0.0
                };
                (w / 3.0, a)
            })
            .collect()
    }

    /// Bin edges mapped to `u = E/endpoint`.
    fn bins_in_u(&self, beam: &MuonBeam) -> Vec<(f64, f64)> {
        let n = self.nbins();
        let s = beam.y_scale();
        (0..n)
            .map(|i| {
                let lo = (i as f64 / n as f64 * s).min(1.0);
                let hi = if i + 1 == n {
                    // clamped events pile into the last bin
                    1.0
                } else {
                    ((i + 1) as f64 / n as f64 * s).min(1.0)
                };
                (lo, hi)
            })
            .collect()
    }

    /// Chi-square against the finite-`γ` expectation.
    pub fn compare(&self, beam: &MuonBeam) -> Result<SpectrumCheck> {
        self.compare_with(&self.expected(beam), beam.polarization())
    }

    /// Chi-square against the `γ → ∞` closed forms.
    pub fn compare_limit(&self, beam: &MuonBeam) -> Result<SpectrumCheck> {
        self.compare_with(&self.expected_limit(beam), beam.polarization())
    }

    /// Chi-square of the spectrum and of the asymmetry against per-bin
    /// `(probability, mean asymmetry)`. Adjacent bins are merged until every
    /// group expects at least 10 events.
    pub fn compare_with(&self, exp: &[(f64, f64)], p: f64) -> Result<SpectrumCheck> {
        let total = self.total() as f64;
        if total == 0.0 {
            return Err(Error::Domain("empty spectrum".into()));
        }
        if exp.len() != self.nbins() {
            return Err(Error::Domain("expectation and histogram differ in length".into()));
        }
        let mut groups: Vec<(f64, f64, f64, f64)> = Vec::new(); // (obs, expected, spin_sum, expected N·A prob)
        let mut cur = (0.0, 0.0, 0.0, 0.0);
        for ((&n, &s), &(w, m)) in self.counts.iter().zip(&self.spin_sum).zip(exp) {
            cur.0 += n as f64;
            cur.1 += w * total;
            cur.2 += s as f64;
            cur.3 += w * m;
            if cur.1 >= 10.0 {
                groups.push(cur);
                cur = (0.0, 0.0, 0.0, 0.0);
            }
        }
        if cur.1 > 0.0 || cur.0 > 0.0 {
            match groups.last_mut() {
                Some(last) => {
                    last.0 += cur.0;
                    last.1 += cur.1;
                    last.2 += cur.2;
                    last.3 += cur.3;
                }
                None => groups.push(cur),
            }
        }
        let chi2_n: f64 = groups
            .iter()
            .map(|g| (g.0 - g.1).powi(2) / g.1)
            .sum();
        let dof_n = groups.len().saturating_sub(1);

        let (chi2_a, dof_a) = if p != 0.0 {
            let mut chi2 = 0.0;
            let mut dof = 0;
            for g in &groups {
                if g.0 == 0.0 {
                    continue;
                }
                let a_exp = g.3 / (g.1 / total);
                let a_obs = g.2 / (p * g.0);
                let var = (1.0 - (p * a_exp).powi(2)) / (p * p * g.0);
                chi2 += (a_obs - a_exp).powi(2) / var;
                dof += 1;
            }
            (chi2, dof)
        } else {
            (f64::NAN, 0)
        };
        Ok(SpectrumCheck {
            chi2_n,
            dof_n,
            chi2_a,
            dof_a,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumCheck {
    pub chi2_n: f64,
    pub dof_n: usize,
    pub chi2_a: f64,
    pub dof_a: usize,
}

impl SpectrumCheck {
    pub fn reduced_n(&self) -> f64 {
        self.chi2_n / self.dof_n as f64
    }

    pub fn reduced_a(&self) -> f64 {
        self.chi2_a / self.dof_a as f64
    }
}

/// Normalized distribution of the neutrino fraction within a window.
#[derive(Debug, Clone, PartialEq)]
pub struct FDistribution {
    /// Bin edges in `f`, ascending.
    pub edges: Vec<f64>,
    /// Normalized weight per bin (sums to 1).
    pub weights: Vec<f64>,
    pub mode: f64,
    pub mean: f64,
}

pub enum FSource<'a> {
    /// Deterministic quadrature of the weight over `bins` bins in `f`.
    Quadrature { bins: usize, rel_tol: f64 },
    /// Monte Carlo events, each weighted by `w(y) / N(y)`.
    Events { beam: &'a MuonBeam, n: u64, seed: u64, bins: usize },
}

/// Distribution of `f` over the energy window `[e_lo, e_hi]` (GeV) under `weighting`.
pub fn f_distribution(
    weighting: &Weighting,
    window: (f64, f64),
    e_max: f64,
    source: FSource<'_>,
) -> Result<FDistribution> {
    let (e_lo, e_hi) = window;
    if !(e_lo >= 0.0 && e_hi <= e_max) || !(e_lo <= e_hi) {
        return Err(domain(format!(
            "window [{e_lo}, {e_hi}] GeV must be non-empty and within [0, {e_max}]"
        )));
    }
    let (y_lo, y_hi) = (e_lo / e_max, e_hi / e_max);
    if e_lo == e_hi {
        let f = 1.0 - y_lo;
        return Ok(FDistribution {
            edges: vec![f, f],
            weights: vec![1.0],
            mode: f,
            mean: f,
        });
    }
    let (f_lo, f_hi) = (1.0 - y_hi, 1.0 - y_lo);
    match source {
        FSource::Quadrature { bins, rel_tol } => {
            let edges: Vec<f64> = (0..=bins)
                .map(|i| f_lo + (f_hi - f_lo) * i as f64 / bins as f64)
                .collect();
            let raw: Vec<f64> = edges
                .windows(2)
                .map(|e| weighting.moments(1.0 - e[1], 1.0 - e[0], e_max, rel_tol).w0)
                .collect();
            let moments = weighting.moments(y_lo, y_hi, e_max, rel_tol);
            if !(moments.w0 > 0.0) {
                return Err(Error::DegenerateWeight(moments.w0));
            }
            finish(edges, raw, moments.w0, moments.mean_f())
        }
        FSource::Events { beam, n, seed, bins } => {
            let edges: Vec<f64> = (0..=bins)
                .map(|i| f_lo + (f_hi - f_lo) * i as f64 / bins as f64)
                .collect();
            let width = (f_hi - f_lo) / bins as f64;
            let parts = map_event_chunks(beam, n, seed, |stream| {
                let mut hist = vec![0.0; bins];
                let mut sum_wf = 0.0;
                for ev in stream {
                    if ev.e_p < e_lo || ev.e_p > e_hi {
                        continue;
                    }
                    let n_y = n_unchecked(ev.y);
                    if n_y <= 0.0 {
                        continue;
                    }
                    let w = weighting.density(ev.y, e_max) / n_y;
                    let b = (((ev.f - f_lo) / width) as usize).min(bins - 1);
                    hist[b] += w;
                    sum_wf += w * ev.f;
                }
                (hist, sum_wf)
            });
            let mut raw = vec![0.0; bins];
            let mut sum_wf = 0.0;
            for (h, s) in parts {
                for (r, v) in raw.iter_mut().zip(h) {
                    *r += v;
                }
                sum_wf += s;
            }
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateWeight(total));
            }
            finish(edges, raw, total, sum_wf / total)
        }
    }
}

fn finish(edges: Vec<f64>, raw: Vec<f64>, total: f64, mean: f64) -> Result<FDistribution> {
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let imax = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
    let mode = 0.5 * (edges[imax] + edges[imax + 1]);
    Ok(FDistribution {
        edges,
        weights,
        mode,
        mean,
    })
}
