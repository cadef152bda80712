//! The anomaly correction `δa_μ = C·f`, its window averages and the
//! comparison against reference anomalies.

use std::f64::consts::{PI, SQRT_2};
use std::io::BufRead;

use crate::constants::{coefficient_c, ConstantsTable, Measured};
use crate::decaygen::{map_event_chunks, n_unchecked, MuonBeam};
use crate::error::{domain, Error, Result};
use crate::weighting::{EmpiricalWeights, Weighting};

/// Leading-order Dirac-neutrino moment `3 e G_F m_ν / (8√2 π²)`, returned in
/// Bohr magnetons for a mass given in eV.
pub fn neutrino_magnetic_moment(m_nu_ev: f64, table: &ConstantsTable) -> Result<f64> {
    if !(m_nu_ev >= 0.0) || !m_nu_ev.is_finite() {
        return Err(domain(format!("neutrino mass must be >= 0, got {m_nu_ev} eV")));
    }
    // (3 e G_F m / 8√2π²) / (e / 2 m_e)
    Ok(3.0 * table.g_f() * (m_nu_ev * 1e-9) * table.m_e() / (4.0 * SQRT_2 * PI * PI))
}

/// Same moment in natural units (GeV^-1).
pub fn neutrino_magnetic_moment_natural(m_nu_ev: f64, table: &ConstantsTable) -> Result<f64> {
    Ok(neutrino_magnetic_moment(m_nu_ev, table)? * table.bohr_magneton())
}

const C_BAND: (f64, f64) = (5e-9, 9e-9);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionModel {
    coefficient: f64,
    a_mu_ref: f64,
}

impl CorrectionModel {
    /// Coefficient computed from the constants; must fall in the sanity band.
    pub fn from_table(table: &ConstantsTable) -> Result<Self> {
        let c = coefficient_c(table);
        if !(C_BAND.0..=C_BAND.1).contains(&c) {
            return Err(Error::Invalid(format!(
                "coefficient {c:e} outside the sanity band [{:e}, {:e}]",
                C_BAND.0, C_BAND.1
            )));
        }
        Ok(CorrectionModel {
            coefficient: c,
            a_mu_ref: table.a_mu_ref(),
        })
    }

    /// Arbitrary non-negative coefficient, for closure tests and injections.
    pub fn custom(coefficient: f64, a_mu_ref: f64) -> Result<Self> {
        if !(coefficient >= 0.0) || !coefficient.is_finite() || !(a_mu_ref > 0.0) {
            return Err(domain("coefficient must be finite and >= 0, a_mu_ref > 0"));
        }
        Ok(CorrectionModel {
            coefficient,
            a_mu_ref,
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn a_mu_ref(&self) -> f64 {
        self.a_mu_ref
    }

    pub fn delta_a(&self, f: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&f) {
            return Err(domain(format!("energy fraction must lie in [0, 1], got {f}")));
        }
        Ok(self.coefficient * f)
    }

    pub fn ppm(&self, delta: f64) -> f64 {
        delta / self.a_mu_ref * 1e6
    }
}

pub fn to_ppm(delta: f64, table: &ConstantsTable) -> f64 {
    delta / table.a_mu_ref() * 1e6
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingConfig {
    pub window: (f64, f64),
    pub weighting: Weighting,
    pub e_max: f64,
    pub rel_tol: f64,
}

impl AveragingConfig {
    /// Window in GeV, `0 <= lo < hi <= e_max`.
    pub fn new(window: (f64, f64), weighting: Weighting, e_max: f64) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo >= 0.0 && lo < hi && hi <= e_max) {
            return Err(domain(format!(
                "window [{lo}, {hi}] GeV must satisfy 0 <= lo < hi <= {e_max}"
            )));
        }
        Ok(AveragingConfig {
            window,
            weighting,
            e_max,
            rel_tol: 1e-8,
        })
    }

    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn y_window(&self) -> (f64, f64) {
        (self.window.0 / self.e_max, self.window.1 / self.e_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedAnomaly {
    pub mean_abs: f64,
    pub mean_ppm: f64,
    /// Weighted standard deviation of `δa(y)` across the window.
    pub sigma_abs: f64,
    pub sigma_ppm: f64,
    pub mean_f: f64,
    pub weighting: String,
    pub window: (f64, f64),
}

/// Weighted average of `C·(1-y)` over the window.
pub fn average_anomaly(cfg: &AveragingConfig, model: &CorrectionModel) -> Result<AveragedAnomaly> {
    let (y_lo, y_hi) = cfg.y_window();
    let m = cfg.weighting.moments(y_lo, y_hi, cfg.e_max, cfg.rel_tol);
    if !(m.w0 > 0.0) {
        return Err(Error::DegenerateWeight(m.w0));
    }
    let mean_f = m.mean_f();
    let mean_abs = model.coefficient * mean_f;
    let sigma_abs = model.coefficient * m.std_f();
    Ok(AveragedAnomaly {
        mean_abs,
        mean_ppm: model.ppm(mean_abs),
        sigma_abs,
        sigma_ppm: model.ppm(sigma_abs),
        mean_f,
        weighting: cfg.weighting.name().to_string(),
        window: cfg.window,
    })
}

/// Monte Carlo estimate of the window average: events weighted by
/// `w(y)/N(y)`. Returns `(mean_abs, standard error)`.
pub fn mc_window_average(
    beam: &MuonBeam,
    n: u64,
    seed: u64,
    cfg: &AveragingConfig,
    model: &CorrectionModel,
) -> Result<(f64, f64)> {
    let (y_lo, y_hi) = cfg.y_window();
    let parts = map_event_chunks(beam, n, seed, |stream| {
        // (Σw, Σw f, Σw², Σw² f, Σw² f²)
        let mut acc = [0.0f64; 5];
        for ev in stream {
            if ev.y < y_lo || ev.y > y_hi {
                continue;
            }
            let n_y = n_unchecked(ev.y);
            if n_y <= 0.0 {
                continue;
            }
            let w = cfg.weighting.density(ev.y, cfg.e_max) / n_y;
            acc[0] += w;
            acc[1] += w * ev.f;
            acc[2] += w * w;
            acc[3] += w * w * ev.f;
            acc[4] += w * w * ev.f * ev.f;
        }
        acc
    });
    let mut s = [0.0f64; 5];
    for p in parts {
        for (a, b) in s.iter_mut().zip(p) {
            *a += b;
        }
    }
    if !(s[0] > 0.0) {
        return Err(Error::DegenerateWeight(s[0]));
    }
    let mean = s[1] / s[0];
    // ratio-estimator variance: Σ w²(f - mean)² / (Σw)²
    let var = (s[4] - 2.0 * mean * s[3] + mean * mean * s[2]) / (s[0] * s[0]);
    Ok((model.coefficient * mean, model.coefficient * var.max(0.0).sqrt()))
}

/// Reads a binned-data CSV (`E_lo_GeV,E_hi_GeV,counts,asymmetry`) into an
/// empirical weighting with `counts * asymmetry^asym_power`.
pub fn ingest_bins<R: BufRead>(reader: R, asym_power: u32) -> Result<Weighting> {
    Ok(Weighting::Empirical(EmpiricalWeights::from_csv(reader, asym_power)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub central: f64,
    pub err_low: f64,
    pub err_high: f64,
}

/// Rows for the experiment, the experiment minus each averaged correction,
/// and the two Standard Model references. Values are dimensionless.
pub fn fig1_table(results: &[AveragedAnomaly], table: &ConstantsTable) -> Result<Vec<ComparisonRow>> {
    let missing = |name: &str| Error::Config(format!("reference `{name}` missing from constants"));
    let exp = table.a_mu_exp().ok_or_else(|| missing("a_mu_exp"))?;
    let dd = table.a_mu_sm_datadriven().ok_or_else(|| missing("a_mu_sm_datadriven"))?;
    let lat = table.a_mu_sm_lattice().ok_or_else(|| missing("a_mu_sm_lattice"))?;
    let sym = |label: String, m: Measured| ComparisonRow {
        label,
        central: m.value,
        err_low: m.err,
        err_high: m.err,
    };
    let mut rows = vec![sym("experiment".into(), exp)];
    for r in results {
        let err = exp.err.hypot(r.sigma_abs);
        rows.push(sym(
            format!("corrected_{}-{}GeV_{}", r.window.0, r.window.1, r.weighting),
            Measured {
                value: exp.value - r.mean_abs,
                err,
            },
        ));
    }
    rows.push(sym("sm_datadriven".into(), dd));
    rows.push(sym("sm_lattice".into(), lat));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CorrectionModel {
        CorrectionModel::from_table(&ConstantsTable::default()).unwrap()
    }

    #[test]
    fn delta_a_domain() {
        let m = model();
        assert_eq!(m.delta_a(0.0).unwrap(), 0.0);
        assert_eq!(m.delta_a(1.0).unwrap(), m.coefficient());
        assert!(m.delta_a(1.01).is_err());
        assert!(m.delta_a(-0.01).is_err());
    }

    #[test]
    fn ppm_examples() {
        let t = ConstantsTable::default();
        assert_eq!(to_ppm(0.0, &t), 0.0);
        assert!((to_ppm(t.a_mu_ref(), &t) - 1e6).abs() < 1e-9);
        let t2 = t.with_value("a_mu_ref", 1.16592e-3).unwrap();
        assert!((to_ppm(2.5e-9, &t2) / 2.14 - 1.0).abs() < 0.01);
    }

    #[test]
    fn neutrino_moment_linear() {
        let t = ConstantsTable::default();
        assert_eq!(neutrino_magnetic_moment(0.0, &t).unwrap(), 0.0);
        let one = neutrino_magnetic_moment(1.0, &t).unwrap();
        assert_eq!(neutrino_magnetic_moment(2.0, &t).unwrap(), 2.0 * one);
        assert!(neutrino_magnetic_moment(-1.0, &t).is_err());
    }

    #[test]
    fn window_validation() {
        assert!(AveragingConfig::new((2.0, 2.0), Weighting::N, 3.1).is_err());
        assert!(AveragingConfig::new((-0.1, 2.0), Weighting::N, 3.1).is_err());
        assert!(AveragingConfig::new((1.0, 3.2), Weighting::N, 3.1).is_err());
    }

    #[test]
    fn negative_asymmetry_window_degenerate() {
        // A < 0 below y ≈ 0.42, so the A weight integrates negative on a low window
        let cfg = AveragingConfig::new((0.0, 1.0), Weighting::A, 3.1).unwrap();
        assert!(matches!(average_anomaly(&cfg, &model()), Err(Error::DegenerateWeight(_))));
    }

    #[test]
    fn fig1_zero_correction() {
        let t = ConstantsTable::default();
        let zero = AveragedAnomaly {
            mean_abs: 0.0,
            mean_ppm: 0.0,
            sigma_abs: 0.0,
            sigma_ppm: 0.0,
            mean_f: 0.0,
            weighting: "NA2".into(),
            window: (1.5, 3.1),
        };
        let rows = fig1_table(&[zero], &t).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].central, rows[0].central);
        assert_eq!(rows[1].err_low, rows[0].err_low);
    }

    #[test]
    fn fig1_missing_reference() {
        let t = ConstantsTable::parse_overrides("a_mu_sm_lattice = none", "t").unwrap();
        assert!(matches!(fig1_table(&[], &t), Err(Error::Config(_))));
    }
}
