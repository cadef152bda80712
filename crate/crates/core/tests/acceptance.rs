//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mug2::anomaly::{self, AveragingConfig, CorrectionModel};
use mug2::constants::{coefficient_c, ConstantsTable};
use mug2::decaygen::{self, MuonBeam, SpectrumHistogram};
use mug2::numeric::mean_std;
use mug2::precession::{self, FieldConfig, SpinState};
use mug2::relkin::{spin_lab_y, BoostParams};
use mug2::weighting::{EmpiricalWeights, EnergyBin, Weighting};
use mug2::wigglefit::{self, ScanScenario, WiggleParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn coefficient() -> Outcome {
    let t = ConstantsTable::default();
    let c = coefficient_c(&t);
    let in_band = (6.85e-9..=7.15e-9).contains(&c);
    let vs_quoted = rel(c, 7.2e-9);
    check(
        in_band && vs_quoted < 0.05,
        format!("C = {c:.5e} in [6.85e-9, 7.15e-9]; vs quoted 7.2e-9: {:.2}% (< 5%)", 100.0 * vs_quoted),
    )
}

fn point_correction() -> Outcome {
    let t = ConstantsTable::default();
    let m = CorrectionModel::from_table(&t).unwrap();
    let d = m.delta_a(0.35).unwrap();
    let ppm = anomaly::to_ppm(d, &t);
    let (r1, r2) = (rel(d, 2.5e-9), rel(ppm, 2.14));
    check(
        r1 < 0.05 && r2 < 0.05,
        format!(
            "delta_a(0.35) = {d:.4e} ({:.2}% from 2.5e-9); {ppm:.4} ppm ({:.2}% from 2.14)",
            100.0 * r1,
            100.0 * r2
        ),
    )
}

fn neutrino_moment() -> Outcome {
    let t = ConstantsTable::default();
    let mu = anomaly::neutrino_magnetic_moment(1.0, &t).unwrap();
    let r = rel(mu, 3.2e-19);
    check(r < 0.03, format!("mu_nu(1 eV) = {mu:.4e} mu_B ({:.2}% from 3.2e-19)", 100.0 * r))
}

fn window_averages() -> Outcome {
    let t = ConstantsTable::default();
    let m = CorrectionModel::from_table(&t).unwrap();
    let avg = |win| {
        let cfg = AveragingConfig::new(win, Weighting::NA2, t.e_max()).unwrap();
        anomaly::average_anomaly(&cfg, &m).unwrap().mean_ppm
    };
    let hi = avg((1.5, 3.1));
    let lo = avg((1.0, 2.7));
    let hi_ok = (hi - 1.28).abs() <= 0.15;
    let lo_ok = (1.5..=2.4).contains(&lo);

    // two equal-width bins, counts 1 and 3, asymmetry 1, k = 1
    let bins = vec![
        EnergyBin { e_lo: 1.5, e_hi: 2.3, counts: 1.0, asymmetry: 1.0 },
        EnergyBin { e_lo: 2.3, e_hi: 3.1, counts: 3.0, asymmetry: 1.0 },
    ];
    let w = Weighting::Empirical(EmpiricalWeights::new(bins, 1).unwrap());
    let cfg = AveragingConfig::new((1.5, 3.1), w, t.e_max()).unwrap();
    let got = anomaly::average_anomaly(&cfg, &m).unwrap().mean_f;
    let f1 = 1.0 - 1.9 / 3.1;
    let f2 = 1.0 - 2.7 / 3.1;
    let want = (f1 + 3.0 * f2) / 4.0;
    let emp_ok = (got - want).abs() <= 4.0 * f64::EPSILON * want;

    let header = Command::new(env!("CARGO_BIN_EXE_mug2"))
        .args(["average", "--window", "1.5,3.1"])
        .output()
        .map(|o| String::from_utf8_lossy(&o.stdout).into_owned())
        .unwrap_or_default();
    let documented = header
        .lines()
        .any(|l| l.starts_with('#') && l.contains("depends on the energy weighting"));

    check(
        hi_ok && lo_ok && emp_ok && documented,
        format!(
            "[1.5,3.1] NA2 = {hi:.3} ppm (1.28 +- 0.15); [1.0,2.7] NA2 = {lo:.3} ppm ([1.5, 2.4]); \
             two-bin mean f {got:.15} vs {want:.15}; weighting note in header: {documented}"
        ),
    )
}

fn tensor_boost() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let k = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let s = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let rapidity: f64 = rng.gen_range(0.0..5.0);
        let b = BoostParams::along_x(rapidity.tanh()).unwrap();
        let l = tensor_matrix(&k, &s);
        let lam = boost_matrix(b.gamma(), b.velocity());
        let lab = lam * l * lam.transpose();
        // L_y = L^{31}
        let oracle = lab[(3, 1)];
        let closed = spin_lab_y(s.y, &b, k.z).unwrap();
        let scale = b.gamma() * (s.y.abs() + b.v() * k.z.abs());
        worst = worst.max((closed - oracle).abs() / scale);
    }
    check(worst <= 1e-12, format!("max relative error {worst:.2e} over 1e5 cases (<= 1e-12)"))
}

fn tensor_matrix(k: &Vector3<f64>, s: &Vector3<f64>) -> Matrix4<f64> {
    Matrix4::new(
        0.0, k.x, k.y, k.z, //
        -k.x, 0.0, s.z, -s.y, //
        -k.y, -s.z, 0.0, s.x, //
        -k.z, s.y, -s.x, 0.0,
    )
}

fn boost_matrix(g: f64, beta: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 0)] = g;
    let b2 = beta.norm_squared();
    for i in 0..3 {
        m[(0, i + 1)] = g * beta[i];
        m[(i + 1, 0)] = g * beta[i];
        for j in 0..3 {
            let extra = if b2 > 0.0 { (g - 1.0) * beta[i] * beta[j] / b2 } else { 0.0 };
            m[(i + 1, j + 1)] += extra;
        }
    }
    m
}

fn precession_checks() -> Outcome {
    let field = FieldConfig::natural(1.0).unwrap();
    let mu = 0.5;
    let t = 100.0;
    let s0 = SpinState::new(0.3, -0.4, 0.2);
    let path = precession::precess_path(s0, mu, &field, t, 10_000).unwrap();
    let n0 = s0.norm();
    let drift = path.iter().map(|s| (s.norm() - n0).abs()).fold(0.0, f64::max);
    let angle = precession::clockwise_angle(&path);
    let phase_rel = rel(angle, 2.0 * mu * field.strength() * t);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mu_nu = 10f64.powf(rng.gen_range(-30.0..-10.0));
        let g_nu = 10f64.powf(rng.gen_range(0.0..6.0));
        let g_mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let b = 10f64.powf(rng.gen_range(-3.0..3.0));
        let dt = 10f64.powf(rng.gen_range(-3.0..3.0));
        let lhs = 2.0 * precession::delta_ly_neutrino(g_nu, mu_nu, b, dt).delta;
        let rhs = -g_mu * precession::delta_mu_mu(mu_nu, g_nu, g_mu).unwrap() * b * dt;
        worst = worst.max(rel(lhs, rhs));
    }
    check(
        drift <= 1e-9 && phase_rel <= 1e-6 && worst <= 1e-12,
        format!(
            "norm drift {drift:.2e} (<= 1e-9); phase rel {phase_rel:.2e} at 2muBt = 100 (<= 1e-6); \
             identity max rel {worst:.2e} over 1e4 draws (<= 1e-12)"
        ),
    )
}

/// Gate: mean chi2/dof of ten independent 1e6-event samples (seeds 0-9)
/// against the finite-gamma expectation. A single sample has sigma ~ 0.2.
fn mc_spectra() -> Outcome {
    let start = Instant::now();
    let t = ConstantsTable::default();
    let beam = MuonBeam::from_table(&t, 1.0).unwrap();
    let (mut rn, mut ra, mut ln, mut la) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10 {
        let h = SpectrumHistogram::generate(&beam, 1_000_000, seed, 50);
        let c = h.compare(&beam).unwrap();
        let l = h.compare_limit(&beam).unwrap();
        rn.push(c.reduced_n());
        ra.push(c.reduced_a());
        ln.push(l.reduced_n());
        la.push(l.reduced_a());
    }
    let (mn, _) = mean_std(&rn);
    let (ma, _) = mean_std(&ra);
    let (mln, _) = mean_std(&ln);
    let (mla, _) = mean_std(&la);
    let y0 = decaygen::asymmetry_zero();
    let y0_true = (1.0 + 33f64.sqrt()) / 16.0;
    let secs = start.elapsed().as_secs_f64();
    let band = 0.8..=1.2;
    check(
        band.contains(&mn) && band.contains(&ma) && (y0 - y0_true).abs() <= 1e-9 && secs < 30.0,
        format!(
            "chi2/dof mean of 10 seeds: N {mn:.3}, A {ma:.3} (each in [0.8, 1.2]; seed 0: {:.3}, {:.3}; \
             against gamma->inf forms: {mln:.3}, {mla:.3}); A zero |dy| = {:.1e} (<= 1e-9); {secs:.1} s (< 30 s)",
            rn[0],
            ra[0],
            (y0 - y0_true).abs()
        ),
    )
}

fn wiggle_closure() -> Outcome {
    let t = ConstantsTable::default();
    let truth = WiggleParams {
        n0: 1.0,
        tau_lab: t.tau_lab(),
        asymmetry: 0.4,
        omega_a: wigglefit::omega_a(t.a_mu_ref(), t.b_tesla(), &t).unwrap(),
        phase: 2.0,
    };
    let pulls = wigglefit::pull_study(&truth, 1_000_000, 300e-6, 1000, 200, 0).unwrap();
    let failed = pulls.iter().filter(|p| p.is_none()).count();
    let omega: Vec<f64> = pulls.iter().flatten().map(|p| p[3]).collect();
    let (m, s) = mean_std(&omega);
    let pull_ok = failed == 0 && m.abs() < 0.1 && (0.85..=1.15).contains(&s);

    let model = CorrectionModel::from_table(&t).unwrap();
    let bins: Vec<(f64, f64)> = (0..8).map(|i| (1.5 + 0.2 * i as f64, 1.7 + 0.2 * i as f64)).collect();
    let scan = wigglefit::binned_scan(
        &bins,
        t.a_mu_ref(),
        &model,
        1_000_000,
        0,
        &ScanScenario::from_table(&t),
        &t,
    )
    .unwrap();
    let (slope_ok, slope_detail) = match scan.slope {
        Some((s, e)) => (
            (s - model.coefficient()).abs() <= 2.0 * e,
            format!("slope {s:.3e} +- {e:.2e} vs C {:.3e}", model.coefficient()),
        ),
        None => (false, "slope absent".to_string()),
    };
    check(
        pull_ok && slope_ok,
        format!(
            "omega_a pull mean {m:.3} (|.| < 0.1), std {s:.3} ([0.85, 1.15]), {failed} failed fits; {slope_detail} (within 2 sigma)"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    let hist_s = hist.to_str().unwrap().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["constants".into()],
        vec!["precess".into(), "--s0".into(), "0.5,0,0".into(), "--mu".into(), "1e-10".into(), "--B".into(), "1.45".into(), "--t".into(), "1e-2".into(), "--steps".into(), "200".into()],
        vec!["spectrum".into(), "--events".into(), "200000".into(), "--seed".into(), "7".into()],
        vec!["correction".into(), "--f".into(), "0.35".into()],
        vec!["average".into(), "--window".into(), "1.0,2.7".into()],
        vec!["fig1".into()],
        vec!["wiggle".into(), "synth".into(), "--n".into(), "300000".into(), "--seed".into(), "3".into()],
        vec!["wiggle".into(), "scan".into(), "--events-per-bin".into(), "100000".into(), "--bins".into(), "1.5,2.3;2.3,3.1".into()],
    ];
    let run = |args: &[String], threads: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mug2"));
        c.args(args);
        if let Some(n) = threads {
            c.args(["--threads", n]);
        }
        c.output().expect("run mug2")
    };
    let mut mismatches = Vec::new();
    let mut total = 0;
    for args in &runs {
        let base = run(args, None);
        if !base.status.success() {
            mismatches.push(format!("{} (exit {:?})", args.join(" "), base.status.code()));
            continue;
        }
        for th in [None, Some("1"), Some("3")] {
            total += 1;
            if run(args, th).stdout != base.stdout {
                mismatches.push(args.join(" "));
            }
        }
    }
    // fit of a written histogram
    let synth = run(&runs[6], None);
    std::fs::write(&hist, &synth.stdout).unwrap();
    let fit_args: Vec<String> = vec!["wiggle".into(), "fit".into(), "--in".into(), hist_s];
    let a = run(&fit_args, Some("1"));
    let b = run(&fit_args, Some("2"));
    total += 1;
    if !a.status.success() || a.stdout != b.stdout {
        mismatches.push("wiggle fit".into());
    }
    check(
        mismatches.is_empty(),
        format!("{total} repeated invocations byte-identical; mismatches: {mismatches:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("coefficient", coefficient),
        ("point-correction", point_correction),
        ("neutrino-moment", neutrino_moment),
        ("window-averages", window_averages),
        ("tensor-boost-oracle", tensor_boost),
        ("precession", precession_checks),
        ("mc-spectra", mc_spectra),
        ("wiggle-closure", wiggle_closure),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
