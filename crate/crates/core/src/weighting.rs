//! Energy weights used to average over a positron-energy window.
//!
//! `y = E / E_max`. The analytic weights use the high-boost lab spectrum
//! `N(y)` and asymmetry `A(y)`; the empirical weight is piecewise constant
//! over ingested energy bins.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use crate::decaygen::{n_unchecked, a_unchecked};
use crate::error::{Error, Result};
use crate::numeric::integrate;

#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    N,
    A,
    NA,
    NA2,
    Empirical(EmpiricalWeights),
}

impl Weighting {
    pub fn name(&self) -> &'static str {
        match self {
            Weighting::N => "N",
            Weighting::A => "A",
            Weighting::NA => "NA",
            Weighting::NA2 => "NA2",
            Weighting::Empirical(_) => "empirical",
        }
    }

    /// Pointwise weight density at `y`, with `e_max` converting the
    /// empirical energy bins.
    pub fn density(&self, y: f64, e_max: f64) -> f64 {
        match self {
            Weighting::N => n_unchecked(y),
            Weighting::A => a_unchecked(y),
            Weighting::NA => n_unchecked(y) * a_unchecked(y),
            Weighting::NA2 => {
                let a = a_unchecked(y);
                n_unchecked(y) * a * a
            }
            Weighting::Empirical(w) => w.density(y * e_max) * e_max,
        }
    }

    /// Moments `∫ (1-y)^k w(y) dy`, k = 0, 1, 2, over `[y_lo, y_hi]`.
    pub fn moments(&self, y_lo: f64, y_hi: f64, e_max: f64, rel_tol: f64) -> Moments {
        match self {
            Weighting::Empirical(w) => w.moments(y_lo, y_hi, e_max),
            _ => Moments {
                w0: integrate(|y| self.density(y, e_max), y_lo, y_hi, rel_tol),
                w1: integrate(|y| (1.0 - y) * self.density(y, e_max), y_lo, y_hi, rel_tol),
                w2: integrate(
                    |y| (1.0 - y).powi(2) * self.density(y, e_max),
                    y_lo,
                    y_hi,
                    rel_tol,
                ),
            },
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses the analytic weight names; `empirical` needs ingested bins and is
/// built through [`EmpiricalWeights`].
impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(Weighting::N),
            "A" => Ok(Weighting::A),
            "NA" => Ok(Weighting::NA),
            "NA2" => Ok(Weighting::NA2),
            other => Err(Error::Format(format!(
                "unknown weighting `{other}` (expected N, A, NA, NA2 or empirical)"
            ))),
        }
    }
}

/// Moments of a weight over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Moments {
    pub fn mean_f(&self) -> f64 {
        self.w1 / self.w0
    }

    /// Weighted spread of `f = 1 - y`; clamped at zero for signed weights.
    pub fn std_f(&self) -> f64 {
        let m = self.mean_f();
        (self.w2 / self.w0 - m * m).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBin {
    pub e_lo: f64,
    pub e_hi: f64,
    pub counts: f64,
    pub asymmetry: f64,
}

/// Piecewise-constant weights from binned data: each bin carries a total
/// weight `counts * asymmetry^k`, spread uniformly over its energy range.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalWeights {
    bins: Vec<EnergyBin>,
    asym_power: u32,
}

pub const BIN_HEADER: [&str; 4] = ["E_lo_GeV", "E_hi_GeV", "counts", "asymmetry"];

impl EmpiricalWeights {
    /// Bins must be sorted, contiguous and non-overlapping; `asym_power` is 1 or 2.
    pub fn new(bins: Vec<EnergyBin>, asym_power: u32) -> Result<Self> {
        if !(1..=2).contains(&asym_power) {
            return Err(Error::Format(format!(
                "asymmetry power must be 1 or 2, got {asym_power}"
            )));
        }
        if bins.is_empty() {
            return Err(Error::Format("no bins".into()));
        }
        let mut bad = Vec::new();
        for (i, b) in bins.iter().enumerate() {
            if !(b.e_hi > b.e_lo) || b.e_lo < 0.0 || !b.counts.is_finite() || !b.asymmetry.is_finite() {
                bad.push(format!("row {}: invalid bin [{}, {}]", i + 1, b.e_lo, b.e_hi));
            }
        }
        for (i, w) in bins.windows(2).enumerate() {
            let gap = w[1].e_lo - w[0].e_hi;
            let tol = 1e-9 * w[0].e_hi.abs().max(1.0);
            if gap < -tol {
                bad.push(format!("rows {} and {}: overlap", i + 1, i + 2));
            } else if gap > tol {
                bad.push(format!("rows {} and {}: gap", i + 1, i + 2));
            }
        }
        if !bad.is_empty() {
            return Err(Error::Format(bad.join("; ")));
        }
        Ok(EmpiricalWeights { bins, asym_power })
    }

    pub fn from_csv<R: BufRead>(reader: R, asym_power: u32) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Format("empty bins file".into())),
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != BIN_HEADER {
            return Err(Error::Format(format!(
                "bad header `{}`; expected columns {}",
                header.trim(),
                BIN_HEADER.join(",")
            )));
        }
        let mut bins = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "line {}: expected 4 columns, found {}",
                    idx + 1,
                    fields.len()
                )));
            }
            let mut v = [0.0; 4];
            for (slot, (field, name)) in v.iter_mut().zip(fields.iter().zip(BIN_HEADER)) {
                *slot = field.parse().map_err(|_| {
                    Error::Format(format!("line {}: bad {name} `{field}`", idx + 1))
                })?;
            }
            bins.push(EnergyBin {
                e_lo: v[0],
                e_hi: v[1],
                counts: v[2],
                asymmetry: v[3],
            });
        }
        Self::new(bins, asym_power)
    }

    pub fn bins(&self) -> &[EnergyBin] {
        &self.bins
    }

    pub fn asym_power(&self) -> u32 {
        self.asym_power
    }

    fn bin_weight(&self, b: &EnergyBin) -> f64 {
        b.counts * b.asymmetry.powi(self.asym_power as i32)
    }

    /// Weight per GeV at energy `e`.
    pub fn density(&self, e: f64) -> f64 {
        self.bins
            .iter()
            .find(|b| e >= b.e_lo && e < b.e_hi)
            .map_or(0.0, |b| self.bin_weight(b) / (b.e_hi - b.e_lo))
    }

    fn moments(&self, y_lo: f64, y_hi: f64, e_max: f64) -> Moments {
        let mut m = Moments { w0: 0.0, w1: 0.0, w2: 0.0 };
        for b in &self.bins {
            let a = (b.e_lo / e_max).max(y_lo);
            let c = (b.e_hi / e_max).min(y_hi);
            if c <= a {
                continue;
            }
            // density in y
            let d = self.bin_weight(b) / ((b.e_hi - b.e_lo) / e_max);
            m.w0 += d * (c - a);
            m.w1 += d * ((c - a) - 0.5 * (c * c - a * a));
            m.w2 += d * ((1.0 - a).powi(3) - (1.0 - c).powi(3)) / 3.0;
        }
        m
    }
}
