//! Synthetic decay-time ensembles with anomalous precession and the
//! five-parameter wiggle fit.
//!
//! Model rate: `N0/τ · e^{-t/τ} [1 + A cos(ω_a t + φ)]`, so `N0` is the number of
//! decays over `[0, ∞)` with the modulation averaged out. The experiments'
//! `1 - A cos(...)` form corresponds to `φ → φ + π`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{Matrix5, Vector5};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::anomaly::CorrectionModel;
use crate::constants::ConstantsTable;
use crate::error::{domain, Error, Result};
use crate::rng::{chunks, substream};
use crate::weighting::Weighting;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WiggleParams {
    pub n0: f64,
    /// Dilated lifetime `γ τ_μ`, seconds.
    pub tau_lab: f64,
    pub asymmetry: f64,
    /// rad/s
    pub omega_a: f64,
    pub phase: f64,
}

pub const PARAM_NAMES: [&str; 5] = ["N0", "tau_lab", "A", "omega_a", "phi"];

impl WiggleParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = self.to_vector().iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(domain("wiggle parameters must be finite"));
        }
        if !(self.n0 > 0.0) || !(self.tau_lab > 0.0) {
            return Err(domain("N0 and tau_lab must be positive"));
        }
        if !(self.asymmetry.abs() < 1.0) {
            return Err(domain(format!("|A| must be < 1, got {}", self.asymmetry)));
        }
        Ok(())
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.n0, self.tau_lab, self.asymmetry, self.omega_a, self.phase)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        WiggleParams {
            n0: v[0],
            tau_lab: v[1],
            asymmetry: v[2],
            omega_a: v[3],
            phase: v[4],
        }
    }

    /// Expected counts in `[t1, t2]`.
    pub fn bin_expectation(&self, t1: f64, t2: f64) -> f64 {
        let lam = 1.0 / self.tau_lab;
        let w = self.omega_a;
        let h = |t: f64| {
            let arg = w * t + self.phase;
            (-lam * t).exp() * (w * arg.sin() - lam * arg.cos()) / (lam * lam + w * w)
        };
        let decay = (-lam * t1).exp() - (-lam * t2).exp();
        self.n0 * (decay + self.asymmetry * lam * (h(t2) - h(t1)))
    }

    /// `N0` giving an expected `n_events` decays in `[0, t_max]`.
    pub fn n0_for(&self, n_events: f64, t_max: f64) -> f64 {
        let unit = WiggleParams { n0: 1.0, ..*self };
        n_events / unit.bin_expectation(0.0, t_max)
    }

    fn density(&self, t: f64) -> f64 {
        1.0 + self.asymmetry * (self.omega_a * t + self.phase).cos()
    }
}

/// `ω_a = a e B / m_μ` in rad/s for a field in tesla.
pub fn omega_a(a: f64, b_tesla: f64, table: &ConstantsTable) -> Result<f64> {
    if !(b_tesla >= 0.0) {
        return Err(domain(format!("field must be >= 0 T, got {b_tesla}")));
    }
    Ok(a * cyclotron_factor(b_tesla, table))
}

/// Inverse of [`omega_a`] for `B > 0`.
pub fn anomaly_from_omega(omega: f64, b_tesla: f64, table: &ConstantsTable) -> f64 {
    omega / cyclotron_factor(b_tesla, table)
}

fn cyclotron_factor(b_tesla: f64, table: &ConstantsTable) -> f64 {
    table.charge_times_field(b_tesla) / table.m_mu() / table.hbar_gev_s()
}

fn sample_time<R: Rng + ?Sized>(p: &WiggleParams, t_max: f64, rng: &mut R) -> f64 {
    // inverse CDF of the exponential truncated to [0, t_max]
    let span = -(-t_max / p.tau_lab).exp_m1();
    let envelope = 1.0 + p.asymmetry.abs();
    loop {
        let u: f64 = rng.gen();
        let t = -p.tau_lab * (-u * span).ln_1p();
        if rng.gen::<f64>() * envelope < p.density(t) {
            return t;
        }
    }
}

/// Decay times drawn from the modulated exponential on `[0, t_max]` by
/// rejection against `e^{-t/τ}(1 + |A|)`.
pub fn synth<R: Rng + ?Sized>(p: &WiggleParams, n_events: usize, t_max: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_synth(p, t_max)?;
    Ok((0..n_events).map(|_| sample_time(p, t_max, rng)).collect())
}

fn check_synth(p: &WiggleParams, t_max: f64) -> Result<()> {
    if !(p.asymmetry.abs() < 1.0) {
        return Err(domain("|A| must be < 1"));
    }
    if !(p.tau_lab > 0.0) || !(t_max > 0.0) {
        return Err(domain("tau_lab and t_max must be positive"));
    }
    Ok(())
}

/// Binned decay times. Bins are contiguous; `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl TimeHistogram {
    pub fn uniform(t_min: f64, t_max: f64, nbins: usize) -> Self {
        let edges = (0..=nbins)
            .map(|i| t_min + (t_max - t_min) * i as f64 / nbins as f64)
            .collect();
        TimeHistogram {
            edges,
            counts: vec![0.0; nbins],
        }
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    pub fn t_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Index of the uniform bin containing `t`.
    fn locate(&self, t: f64) -> Option<usize> {
        let (lo, hi) = (self.t_min(), self.t_max());
        if t < lo || t > hi {
            return None;
        }
        let i = ((t - lo) / (hi - lo) * self.nbins() as f64) as usize;
        Some(i.min(self.nbins() - 1))
    }

    pub fn fill(&mut self, times: &[f64]) {
        for &t in times {
            if let Some(i) = self.locate(t) {
                self.counts[i] += 1.0;
            }
        }
    }

    /// Noise-free histogram: the expected counts of `p` in every bin.
    pub fn expected(p: &WiggleParams, t_max: f64, nbins: usize) -> Self {
        let mut h = Self::uniform(0.0, t_max, nbins);
        h.counts = h
            .edges
            .windows(2)
            .map(|e| p.bin_expectation(e[0], e[1]))
            .collect();
        h
    }

    /// `n_events` synthetic decays on `[0, t_max]`, generated in parallel
    /// chunks. Chunk `k` draws from the stream `(seed, stream..., k)`, so the
    /// result does not depend on the number of threads.
    pub fn synthesize(
        p: &WiggleParams,
        n_events: u64,
        t_max: f64,
        nbins: usize,
        seed: u64,
        stream: &[u64],
    ) -> Result<Self> {
        check_synth(p, t_max)?;
        let template = Self::uniform(0.0, t_max, nbins);
        let parts: Vec<Vec<u32>> = chunks(n_events)
            .into_par_iter()
            .map(|(idx, len)| {
                let mut path = stream.to_vec();
                path.push(idx);
                let mut rng = substream(seed, &path);
                let mut counts = vec![0u32; nbins];
                for _ in 0..len {
                    let t = sample_time(p, t_max, &mut rng);
                    if let Some(i) = template.locate(t) {
                        counts[i] += 1;
                    }
                }
                counts
            })
            .collect();
        let mut total = vec![0u64; nbins];
        for part in parts {
            for (t, c) in total.iter_mut().zip(part) {
                *t += c as u64;
            }
        }
        Ok(TimeHistogram {
            edges: template.edges,
            counts: total.into_iter().map(|c| c as f64).collect(),
        })
    }

    /// Merges adjacent bins until each holds at least `min_count`; a short
    /// remainder at the end joins the last group.
    pub fn merged(&self, min_count: f64) -> Self {
        let mut edges = vec![self.edges[0]];
        let mut counts = Vec::new();
        let mut acc = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            acc += c;
            if acc >= min_count {
                counts.push(acc);
                edges.push(self.edges[i + 1]);
                acc = 0.0;
            }
        }
        if *edges.last().unwrap() < self.t_max() {
            if let Some(last) = counts.last_mut() {
                *last += acc;
                *edges.last_mut().unwrap() = self.t_max();
            } else {
                counts.push(acc);
                edges.push(self.t_max());
            }
        }
        TimeHistogram { edges, counts }
    }

    /// `t_bin_center,counts` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_bin_center,counts\n");
        for (t, c) in self.centers().iter().zip(&self.counts) {
            let _ = writeln!(out, "{},{}", crate::output::fmt_num(*t), c);
        }
        out
    }

    /// Parses `t_bin_center,counts` rows (comment lines start with `#`).
    /// Bins must be uniform; their width is taken from the center spacing.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut centers = Vec::new();
        let mut counts = Vec::new();
        let mut header_seen = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = s.split(',').map(str::trim).collect();
                if cols != ["t_bin_center", "counts"] {
                    return Err(Error::Format(format!(
                        "bad header `{s}`; expected t_bin_center,counts"
                    )));
                }
                header_seen = true;
                continue;
            }
            let (t, c) = s
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected 2 columns", idx + 1)))?;
            let parse = |v: &str, what: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad {what} `{}`", idx + 1, v.trim())))
            };
            centers.push(parse(t, "t_bin_center")?);
            counts.push(parse(c, "counts")?);
        }
        if centers.len() < 2 {
            return Err(Error::Format("histogram needs at least two bins".into()));
        }
        let width = (centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64;
        for (i, w) in centers.windows(2).enumerate() {
            if ((w[1] - w[0]) - width).abs() > 1e-6 * width {
                return Err(Error::Format(format!("non-uniform bin spacing at row {}", i + 2)));
            }
        }
        let mut edges: Vec<f64> = centers.iter().map(|c| c - 0.5 * width).collect();
        edges.push(centers[centers.len() - 1] + 0.5 * width);
        Ok(TimeHistogram { edges, counts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative chi-square change that ends the iteration.
    pub tolerance: f64,
    /// Half-width, relative to the initial `ω_a`, of the frequency pre-scan
    /// that seeds the fit. `None` starts directly from `init`.
    pub frequency_scan: Option<f64>,
    /// Minimum counts per bin after merging.
    pub min_count: f64,
    /// Parameters held at their starting value, in `PARAM_NAMES` order.
    pub fixed: [bool; 5],
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: 1e-10,
            frequency_scan: Some(0.2),
            min_count: 10.0,
            fixed: [false; 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: WiggleParams,
    pub covariance: Matrix5<f64>,
    pub chi2: f64,
    pub ndof: usize,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Option<String>,
}

impl FitResult {
    pub fn errors(&self) -> Vector5<f64> {
        Vector5::from_fn(|i, _| self.covariance[(i, i)].max(0.0).sqrt())
    }

    fn failed(init: &WiggleParams, ndof: usize, msg: String) -> Self {
        FitResult {
            params: *init,
            covariance: Matrix5::from_element(f64::NAN),
            chi2: f64::NAN,
            ndof,
            converged: false,
            iterations: 0,
            diagnostics: Some(msg),
        }
    }
}

struct Problem<'a> {
    hist: &'a TimeHistogram,
    inv_sigma: Vec<f64>,
}

impl Problem<'_> {
    fn model(&self, p: &WiggleParams) -> Vec<f64> {
        self.hist
            .edges
            .windows(2)
            .map(|e| p.bin_expectation(e[0], e[1]))
            .collect()
    }

    fn chi2(&self, p: &WiggleParams) -> f64 {
        self.model(p)
            .iter()
            .zip(&self.hist.counts)
            .zip(&self.inv_sigma)
            .map(|((m, n), s)| ((n - m) * s).powi(2))
            .sum()
    }

    /// Normalized residuals and their Jacobian (central differences).
    fn linearize(&self, p: &WiggleParams) -> (Vec<Vector5<f64>>, Vec<f64>) {
        let v = p.to_vector();
        let steps = Vector5::new(
            1e-6 * v[0].abs(),
            1e-6 * v[1].abs(),
            1e-6,
            1e-7 * v[3].abs().max(1.0),
            1e-6,
        );
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(5);
        for j in 0..5 {
            let mut up = v;
            let mut dn = v;
            up[j] += steps[j];
            dn[j] -= steps[j];
            let mu = self.model(&WiggleParams::from_vector(&up));
            let md = self.model(&WiggleParams::from_vector(&dn));
            cols.push(mu.iter().zip(&md).map(|(a, b)| (a - b) / (2.0 * steps[j])).collect());
        }
        let model = self.model(p);
        let rows = (0..self.hist.nbins())
            .map(|i| Vector5::from_fn(|j, _| cols[j][i] * self.inv_sigma[i]))
            .collect();
        let resid = model
            .iter()
            .zip(&self.hist.counts)
            .zip(&self.inv_sigma)
            .map(|((m, n), s)| (n - m) * s)
            .collect();
        (rows, resid)
    }
}

/// Inverts a symmetric positive-definite matrix after diagonal scaling.
fn spd_inverse(a: &Matrix5<f64>) -> Option<Matrix5<f64>> {
    let d = Vector5::from_fn(|i, _| {
        let v = a[(i, i)];
        if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }
    });
    if d.iter().any(|&x| x == 0.0 || !x.is_finite()) {
        return None;
    }
    let scaled = Matrix5::from_fn(|i, j| a[(i, j)] * d[i] * d[j]);
    let inv = scaled.cholesky()?.inverse();
    Some(Matrix5::from_fn(|i, j| inv[(i, j)] * d[i] * d[j]))
}

/// `JᵀJ` and `Jᵀr`; fixed parameters get a unit diagonal and no coupling.
fn normal_equations(rows: &[Vector5<f64>], resid: &[f64], fixed: &[bool; 5]) -> (Matrix5<f64>, Vector5<f64>) {
    let mut a = Matrix5::zeros();
    let mut g = Vector5::zeros();
    for (j, r) in rows.iter().zip(resid) {
        a += j * j.transpose();
        g += j * *r;
    }
    for (i, _) in fixed.iter().enumerate().filter(|(_, f)| **f) {
        for k in 0..5 {
            a[(i, k)] = 0.0;
            a[(k, i)] = 0.0;
        }
        a[(i, i)] = 1.0;
        g[i] = 0.0;
    }
    (a, g)
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Coarse periodogram over `ω ∈ ω₀(1 ± half_range)`: projects the ratio to a
/// pure exponential onto `cos ωt`, `sin ωt` and keeps the best frequency,
/// with the amplitude and phase of that projection.
fn scan_frequency(hist: &TimeHistogram, init: &WiggleParams, half_range: f64) -> WiggleParams {
    let plain = WiggleParams {
        n0: 1.0,
        asymmetry: 0.0,
        ..*init
    };
    let base: Vec<f64> = hist
        .edges
        .windows(2)
        .map(|e| plain.bin_expectation(e[0], e[1]))
        .collect();
    let norm = hist.total() / base.iter().sum::<f64>();
    let t = hist.centers();
    let (ratio, weight): (Vec<f64>, Vec<f64>) = hist
        .counts
        .iter()
        .zip(&base)
        .map(|(n, b)| {
            let e = b * norm;
            (n / e - 1.0, e)
        })
        .unzip();
    let span = hist.t_max() - hist.t_min();
    let w0 = init.omega_a.abs();
    let step = 0.25 / span;
    let lo = w0 * (1.0 - half_range);
    let npts = ((2.0 * half_range * w0) / step).ceil() as usize + 1;
    let mut best = (f64::NEG_INFINITY, init.omega_a, 0.0, 0.0);
    for k in 0..npts {
        let w = lo + step * k as f64;
        let (mut scc, mut sss, mut scs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..t.len() {
            let (s, c) = (w * t[i]).sin_cos();
            let wi = weight[i];
            scc += wi * c * c;
            sss += wi * s * s;
            scs += wi * c * s;
            yc += wi * ratio[i] * c;
            ys += wi * ratio[i] * s;
        }
        let det = scc * sss - scs * scs;
        if det <= 0.0 {
            continue;
        }
        let a = (yc * sss - ys * scs) / det;
        let b = (ys * scc - yc * scs) / det;
        let gain = a * yc + b * ys;
        if gain > best.0 {
            best = (gain, w, a, b);
        }
    }
    let (_, w, a, b) = best;
    WiggleParams {
        n0: norm,
        tau_lab: init.tau_lab,
        asymmetry: a.hypot(b).min(0.95),
        omega_a: w,
        phase: (-b).atan2(a),
    }
}

/// Five-parameter fit with default options.
pub fn fit(hist: &TimeHistogram, init: &WiggleParams) -> FitResult {
    fit_with(hist, init, &FitOptions::default())
}

/// Minimizes `Σ (n_i - m_i)² / max(n_i, 1)` by Levenberg-Marquardt.
///
/// Never panics on bad data: too few bins, a non-finite start or a singular
/// curvature come back as `converged = false` with a diagnostic.
pub fn fit_with(hist: &TimeHistogram, init: &WiggleParams, opts: &FitOptions) -> FitResult {
    let hist = hist.merged(opts.min_count);
    let free = opts.fixed.iter().filter(|f| !**f).count();
    let ndof = hist.nbins().saturating_sub(free);
    if hist.nbins() < 20 {
        return FitResult::failed(
            init,
            ndof,
            format!("{} usable bins after merging, need at least 20", hist.nbins()),
        );
    }
    if let Err(e) = init.validate() {
        return FitResult::failed(init, ndof, format!("invalid start: {e}"));
    }
    let problem = Problem {
        inv_sigma: hist.counts.iter().map(|n| 1.0 / n.max(1.0).sqrt()).collect(),
        hist: &hist,
    };

    let mut p = *init;
    let mut chi2 = problem.chi2(&p);
    if let Some(range) = opts.frequency_scan.filter(|_| !opts.fixed[3]) {
        let mut seeded = scan_frequency(&hist, init, range).to_vector();
        let start = init.to_vector();
        for (i, _) in opts.fixed.iter().enumerate().filter(|(_, f)| **f) {
            seeded[i] = start[i];
        }
        let seeded = WiggleParams::from_vector(&seeded);
        if seeded.validate().is_ok() {
            let c = problem.chi2(&seeded);
            if c < chi2 {
                p = seeded;
                chi2 = c;
            }
        }
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let floor = 1e-20 * hist.nbins() as f64;
    while iterations < opts.max_iterations {
        iterations += 1;
        if chi2 <= floor {
            converged = true;
            break;
        }
        let (rows, resid) = problem.linearize(&p);
        let (a, g) = normal_equations(&rows, &resid, &opts.fixed);
        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = a;
            for i in 0..5 {
                damped[(i, i)] *= 1.0 + lambda;
            }
            let trial = spd_inverse(&damped)
                .map(|inv| WiggleParams::from_vector(&(p.to_vector() + inv * g)));
            match trial {
                Some(t) if t.validate().is_ok() => {
                    let c = problem.chi2(&t);
                    if c < chi2 {
                        lambda = (lambda / 10.0).max(1e-12);
                        accepted = Some((t, c));
                        break;
                    }
                }
                _ => {}
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((t, c)) => {
                let rel = (chi2 - c) / chi2.max(f64::MIN_POSITIVE);
                p = t;
                chi2 = c;
                if rel < opts.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent step left: at the minimum to rounding
                converged = true;
                break;
            }
        }
    }

    let (rows, _) = problem.linearize(&p);
    let (curvature, _) = normal_equations(&rows, &vec![0.0; rows.len()], &opts.fixed);
    let mut diagnostics = None;
    let covariance = match spd_inverse(&curvature) {
        Some(c) => Matrix5::from_fn(|i, j| if opts.fixed[i] || opts.fixed[j] { 0.0 } else { c[(i, j)] }),
        None => {
            converged = false;
            diagnostics = Some(format!("singular curvature matrix at {:?}", p));
            Matrix5::from_element(f64::NAN)
        }
    };
    if !converged && diagnostics.is_none() {
        diagnostics = Some(format!("no convergence after {iterations} iterations"));
    }
    p.phase = wrap_phase(p.phase);
    FitResult {
        params: p,
        covariance,
        chi2,
        ndof,
        converged,
        iterations,
        diagnostics,
    }
}

/// Pulls `(fit - truth) / σ` of `n_experiments` independent pseudo-experiments,
/// one row of five per experiment. Each experiment draws its event count from
/// a Poisson distribution of mean `n_events`. Experiments that fail to
/// converge give `None`.
pub fn pull_study(
    truth: &WiggleParams,
    n_events: u64,
    t_max: f64,
    nbins: usize,
    n_experiments: usize,
    seed: u64,
) -> Result<Vec<Option<[f64; 5]>>> {
    let truth = WiggleParams {
        n0: truth.n0_for(n_events as f64, t_max),
        ..*truth
    };
    (0..n_experiments)
        .into_par_iter()
        .map(|k| {
            let n = Poisson::new(n_events as f64)
                .map_err(|e| domain(format!("event count: {e}")))?
                .sample(&mut substream(seed, &[k as u64])) as u64;
            let hist = TimeHistogram::synthesize(&truth, n, t_max, nbins, seed, &[k as u64])?;
            let r = fit(&hist, &truth);
            if !r.converged {
                return Ok(None);
            }
            let err = r.errors();
            let tv = truth.to_vector();
            let mut fv = r.params.to_vector();
            fv[4] = tv[4] + wrap_phase(fv[4] - tv[4]);
            Ok(Some(std::array::from_fn(|j| (fv[j] - tv[j]) / err[j])))
        })
        .collect()
}

/// Beam and detector settings shared by every energy bin of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScenario {
    pub b_tesla: f64,
    pub tau_lab: f64,
    pub polarization: f64,
    pub phase: f64,
    pub t_max: f64,
    pub nbins: usize,
    pub e_max: f64,
    pub weighting: Weighting,
}

impl ScanScenario {
    pub fn from_table(table: &ConstantsTable) -> Self {
        ScanScenario {
            b_tesla: table.b_tesla(),
            tau_lab: table.tau_lab(),
            polarization: 1.0,
            phase: 2.0,
            t_max: 300e-6,
            nbins: 1000,
            e_max: table.e_max(),
            weighting: Weighting::NA2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub e_center: f64,
    pub f_bar: f64,
    pub a_injected: f64,
    pub a_fit: f64,
    pub a_err: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    /// Weighted least-squares slope of fitted anomaly against `f̄` and its
    /// error; absent with fewer than two usable bins.
    pub slope: Option<(f64, f64)>,
}

/// Per energy bin: inject `a = base_a + C·f̄`, synthesize, fit, and regress
/// the fitted anomalies against `f̄`.
pub fn binned_scan(
    energy_bins: &[(f64, f64)],
    base_a: f64,
    model: &CorrectionModel,
    events_per_bin: u64,
    seed: u64,
    scenario: &ScanScenario,
    table: &ConstantsTable,
) -> Result<ScanResult> {
    for &(lo, hi) in energy_bins {
        if !(lo >= 0.0 && lo < hi && hi <= scenario.e_max) {
            return Err(domain(format!(
                "energy bin [{lo}, {hi}] must lie within [0, {}]",
                scenario.e_max
            )));
        }
    }
    let per_bin: Vec<Result<ScanRow>> = energy_bins
        .par_iter()
        .enumerate()
        .map(|(k, &(lo, hi))| {
            let (y_lo, y_hi) = (lo / scenario.e_max, hi / scenario.e_max);
            let m = scenario.weighting.moments(y_lo, y_hi, scenario.e_max, 1e-10);
            if !(m.w0 > 0.0) {
                return Err(Error::DegenerateWeight(m.w0));
            }
            let f_bar = m.mean_f();
            let a_injected = base_a + model.coefficient() * f_bar;
            let n_moments = Weighting::N.moments(y_lo, y_hi, scenario.e_max, 1e-10);
            let na_moments = Weighting::NA.moments(y_lo, y_hi, scenario.e_max, 1e-10);
            let asymmetry = scenario.polarization * na_moments.w0 / n_moments.w0;
            let truth = WiggleParams {
                n0: 1.0,
                tau_lab: scenario.tau_lab,
                asymmetry,
                omega_a: omega_a(a_injected, scenario.b_tesla, table)?,
                phase: scenario.phase,
            };
            let truth = WiggleParams {
                n0: truth.n0_for(events_per_bin as f64, scenario.t_max),
                ..truth
            };
            let hist = TimeHistogram::synthesize(
                &truth,
                events_per_bin,
                scenario.t_max,
                scenario.nbins,
                seed,
                &[k as u64],
            )?;
            // start from the energy-independent anomaly
            let init = WiggleParams {
                omega_a: omega_a(base_a, scenario.b_tesla, table)?,
                ..truth
            };
            let r = fit(&hist, &init);
            let a_fit = anomaly_from_omega(r.params.omega_a, scenario.b_tesla, table);
            let a_err = anomaly_from_omega(r.errors()[3], scenario.b_tesla, table);
            Ok(ScanRow {
                e_center: 0.5 * (lo + hi),
                f_bar,
                a_injected,
                a_fit,
                a_err,
                converged: r.converged,
            })
        })
        .collect();
    let rows = per_bin.into_iter().collect::<Result<Vec<_>>>()?;
    let slope = weighted_slope(
        rows.iter()
            .filter(|r| r.converged && r.a_err > 0.0)
            .map(|r| (r.f_bar, r.a_fit, r.a_err)),
    );
    Ok(ScanResult { rows, slope })
}

/// Weighted least-squares slope of `y` on `x` with `(slope, σ_slope)`.
pub fn weighted_slope(points: impl Iterator<Item = (f64, f64, f64)>) -> Option<(f64, f64)> {
    let pts: Vec<_> = points.collect();
    if pts.len() < 2 {
        return None;
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, e) in &pts {
        let w = 1.0 / (e * e);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    if !(det > 0.0) {
        return None;
    }
    Some(((s * sxy - sx * sy) / det, (s / det).sqrt()))
}

/// `key=value` report of a fit, one entry per line.
pub fn fit_report(r: &FitResult, b_tesla: f64, table: &ConstantsTable) -> String {
    use crate::output::fmt_num;
    let v = r.params.to_vector();
    let e = r.errors();
    let mut out = String::new();
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let _ = writeln!(out, "{name}={}", fmt_num(v[i]));
        let _ = writeln!(out, "{name}_err={}", fmt_num(e[i]));
    }
    let _ = writeln!(out, "a_mu={}", fmt_num(anomaly_from_omega(v[3], b_tesla, table)));
    let _ = writeln!(out, "a_mu_err={}", fmt_num(anomaly_from_omega(e[3], b_tesla, table)));
    let _ = writeln!(out, "chi2={}", fmt_num(r.chi2));
    let _ = writeln!(out, "ndof={}", r.ndof);
    let _ = writeln!(out, "converged={}", r.converged);
    let _ = writeln!(out, "iterations={}", r.iterations);
    if let Some(d) = &r.diagnostics {
        let _ = writeln!(out, "diagnostics={d}");
    }
    out
}
