//! The `mug2` command line.
//!
//! Data goes to the output stream (or `--output`), diagnostics to the error
//! stream. Exit codes: 0 success, 1 domain or input error, 2 usage error.
//! `--threads` only caps the worker pool; it never changes the output and is
//! therefore not echoed in the header.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::anomaly::{self, AveragingConfig, CorrectionModel};
use crate::constants::{load_constants, ConstantsTable};
use crate::decaygen::{self, FSource, MuonBeam, SpectrumHistogram};
use crate::error::{Error, Result};
use crate::output::{fmt_num, Delimiter, Table};
use crate::precession::{self, FieldConfig, SpinState};
use crate::weighting::Weighting;
use crate::wigglefit::{self, FitOptions, ScanScenario, TimeHistogram, WiggleParams};

pub const CONSTANTS_ENV: &str = "MUG2_CONSTANTS";

#[derive(Parser, Debug)]
#[command(
    name = "mug2",
    version,
    about = "Muon g-2 anomaly correction toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// Constants file (`key = value`); falls back to $MUG2_CONSTANTS, then built-in defaults.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write data here instead of standard output.
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Maximum worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Tsv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective constants in canonical form.
    Constants,
    /// Integrate spin precession about +z and print (t, sx, sy, sz).
    Precess {
        /// Initial spin, `x,y,z` in units of hbar.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        s0: [f64; 3],
        /// Magnetic moment in Bohr magnetons.
        #[arg(long)]
        mu: f64,
        /// Field in tesla.
        #[arg(long = "B")]
        b: f64,
        /// Duration in seconds.
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Monte Carlo positron spectrum and neutrino-fraction distribution.
    Spectrum {
        #[arg(long, value_parser = parse_count, default_value = "1000000")]
        events: u64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        pol: f64,
        /// Energy window `lo,hi` in GeV for the f table (default: full range).
        #[arg(long, value_parser = parse_pair)]
        window: Option<(f64, f64)>,
        #[arg(long, default_value = "NA2")]
        weighting: String,
        /// Number of y bins.
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, default_value_t = 50)]
        f_bins: usize,
    },
    /// Anomaly correction for one neutrino energy fraction.
    Correction {
        #[arg(long)]
        f: f64,
    },
    /// Window-averaged correction.
    Average {
        #[arg(long, value_parser = parse_pair)]
        window: (f64, f64),
        /// N, A, NA, NA2 or empirical (needs --bins).
        #[arg(long, default_value = "NA2")]
        weighting: String,
        /// Binned data CSV: E_lo_GeV,E_hi_GeV,counts,asymmetry.
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        asym_power: u32,
    },
    /// Comparison rows: experiment, corrected experiment per window, SM references.
    Fig1 {
        /// Windows `lo,hi;lo,hi` in GeV.
        #[arg(long, value_parser = parse_pairs, default_value = "1.0,2.7;1.5,3.1")]
        windows: Pairs,
        #[arg(long, default_value = "NA2")]
        weighting: String,
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        asym_power: u32,
    },
    /// Synthetic precession data, fits and energy-binned scans.
    #[command(subcommand)]
    Wiggle(WiggleCommand),
}

#[derive(Subcommand, Debug)]
enum WiggleCommand {
    /// Histogram of synthetic decay times: (t_bin_center, counts).
    Synth {
        #[arg(long, value_parser = parse_count, default_value = "1000000")]
        n: u64,
        /// Anomaly setting the precession frequency (default a_mu_ref).
        #[arg(long)]
        a: Option<f64>,
        /// Field in tesla (default B_tesla).
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
        asym: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        phi: f64,
        /// Histogram range in seconds.
        #[arg(long, default_value_t = 300e-6)]
        t_max: f64,
        #[arg(long, default_value_t = 1000)]
        nbins: usize,
    },
    /// Five-parameter fit of a (t_bin_center, counts) histogram.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Anomaly for the starting frequency (default a_mu_ref).
        #[arg(long)]
        a: Option<f64>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
        asym: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi: f64,
        /// Start the fit at the given frequency without a pre-scan.
        #[arg(long)]
        no_scan: bool,
    },
    /// Inject an energy-dependent anomaly per energy bin and fit each bin.
    Scan {
        /// Energy bins `lo,hi;lo,hi;...` in GeV (default: 8 bins over 1.5-3.1).
        #[arg(long, value_parser = parse_pairs)]
        bins: Option<Pairs>,
        #[arg(long, value_parser = parse_count, default_value = "1000000")]
        events_per_bin: u64,
        /// Energy-independent part of the anomaly (default a_mu_ref).
        #[arg(long)]
        base_a: Option<f64>,
        /// Override the injected coefficient C.
        #[arg(long)]
        coefficient: Option<f64>,
        #[arg(long, default_value = "NA2")]
        weighting: String,
    },
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > 9.0e15 {
        return Err(format!("`{s}` is not a non-negative integer count"));
    }
    Ok(v as u64)
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("`{s}` is not a comma-separated list of numbers"))?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = parse_floats(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_floats(s, 2)?;
    Ok((v[0], v[1]))
}

/// `lo,hi;lo,hi;...`
#[derive(Debug, Clone)]
struct Pairs(Vec<(f64, f64)>);

fn parse_pairs(s: &str) -> std::result::Result<Pairs, String> {
    let v = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(parse_pair)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("expected at least one `lo,hi` pair".into());
    }
    Ok(Pairs(v))
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn dispatch<O: Write, E: Write>(argv: &[String], out: &mut O, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(rendered.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    2
                }
            };
        }
    };
    match run(&cli) {
        Ok(text) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, text.as_bytes()),
                None => out.write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_command(cli))
}

fn constants_path(cli: &Cli) -> Option<PathBuf> {
    cli.constants
        .clone()
        .or_else(|| std::env::var_os(CONSTANTS_ENV).map(PathBuf::from))
}

fn parse_weighting(name: &str, bins: Option<&Path>, asym_power: u32) -> Result<Weighting> {
    if name == "empirical" || bins.is_some() {
        if name != "empirical" {
            return Err(Error::Config(format!(
                "--bins given with --weighting {name}; use --weighting empirical"
            )));
        }
        let path = bins.ok_or_else(|| Error::Config("empirical weighting needs --bins".into()))?;
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        anomaly::ingest_bins(BufReader::new(file), asym_power)
    } else {
        name.parse()
    }
}

fn start_table(cli: &Cli, command: &str, path: &Option<PathBuf>) -> Table {
    let mut t = Table::new(match cli.format {
        Format::Csv => Delimiter::Csv,
        Format::Tsv => Delimiter::Tsv,
    });
    t.comment(format!("mug2 {} {command}", env!("CARGO_PKG_VERSION")));
    t.meta(
        "constants",
        path.as_ref()
            .map_or_else(|| "built-in defaults".to_string(), |p| p.display().to_string()),
    );
    t.meta("seed", cli.seed);
    t
}

fn run_command(cli: &Cli) -> Result<String> {
    let path = constants_path(cli);
    let table = load_constants(path.as_deref())?;
    match &cli.command {
        Command::Constants => {
            let mut t = start_table(cli, "constants", &path);
            t.raw(&table.dump());
            Ok(t.finish())
        }
        Command::Precess { s0, mu, b, t, steps } => precess(cli, &path, &table, *s0, *mu, *b, *t, *steps),
        Command::Spectrum {
            events,
            pol,
            window,
            weighting,
            bins,
            f_bins,
        } => spectrum(cli, &path, &table, *events, *pol, *window, weighting, *bins, *f_bins),
        Command::Correction { f } => {
            let model = CorrectionModel::from_table(&table)?;
            let delta = model.delta_a(*f)?;
            let mut t = start_table(cli, "correction", &path);
            t.meta("coefficient_C", fmt_num(model.coefficient()));
            t.meta("a_mu_ref", fmt_num(table.a_mu_ref()));
            t.header(&["f", "delta_a", "ppm"]);
            t.row([fmt_num(*f), fmt_num(delta), fmt_num(model.ppm(delta))]);
            Ok(t.finish())
        }
        Command::Average {
            window,
            weighting,
            bins,
            asym_power,
        } => {
            let w = parse_weighting(weighting, bins.as_deref(), *asym_power)?;
            let model = CorrectionModel::from_table(&table)?;
            let cfg = AveragingConfig::new(*window, w, table.e_max())?;
            let avg = anomaly::average_anomaly(&cfg, &model)?;
            let mut t = start_table(cli, "average", &path);
            t.meta("weighting", &avg.weighting);
            if let Some(b) = bins {
                t.meta("bins", b.display());
                t.meta("asym_power", asym_power);
            }
            t.meta("E_max_GeV", fmt_num(table.e_max()));
            t.meta("coefficient_C", fmt_num(model.coefficient()));
            t.comment(AVERAGE_NOTE);
            t.header(&["E_lo_GeV", "E_hi_GeV", "weighting", "mean_f", "mean_abs", "mean_ppm", "sigma_ppm"]);
            t.row([
                fmt_num(window.0),
                fmt_num(window.1),
                avg.weighting.clone(),
                fmt_num(avg.mean_f),
                fmt_num(avg.mean_abs),
                fmt_num(avg.mean_ppm),
                fmt_num(avg.sigma_ppm),
            ]);
            Ok(t.finish())
        }
        Command::Fig1 {
            windows,
            weighting,
            bins,
            asym_power,
        } => {
            let w = parse_weighting(weighting, bins.as_deref(), *asym_power)?;
            let model = CorrectionModel::from_table(&table)?;
            let averages = windows
                .0
                .iter()
                .map(|&win| {
                    let cfg = AveragingConfig::new(win, w.clone(), table.e_max())?;
                    anomaly::average_anomaly(&cfg, &model)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = anomaly::fig1_table(&averages, &table)?;
            let mut t = start_table(cli, "fig1", &path);
            t.meta("weighting", w.name());
            t.meta("units", "1e-11");
            t.comment(AVERAGE_NOTE);
            t.header(&["label", "central", "err_low", "err_high"]);
            for r in rows {
                t.row([
                    r.label,
                    fmt_num(r.central * 1e11),
                    fmt_num(r.err_low * 1e11),
                    fmt_num(r.err_high * 1e11),
                ]);
            }
            Ok(t.finish())
        }
        Command::Wiggle(w) => wiggle(cli, &path, &table, w),
    }
}

const AVERAGE_NOTE: &str = "the window average depends on the energy weighting (N, A, NA, NA2, empirical); \
sigma is the weighted spread of delta_a across the window, not a statistical error";

#[allow(clippy::too_many_arguments)]
fn precess(
    cli: &Cli,
    path: &Option<PathBuf>,
    table: &ConstantsTable,
    s0: [f64; 3],
    mu: f64,
    b: f64,
    t_s: f64,
    steps: usize,
) -> Result<String> {
    let field = FieldConfig::from_tesla(b, table)?;
    let mu_nat = precession::bohr_to_natural(mu, table)?;
    let t_nat = table.seconds_to_natural(t_s);
    let states = precession::precess_path(SpinState::new(s0[0], s0[1], s0[2]), mu_nat, &field, t_nat, steps)?;
    let mut t = start_table(cli, "precess", path);
    t.meta("s0", format!("{},{},{}", fmt_num(s0[0]), fmt_num(s0[1]), fmt_num(s0[2])));
    t.meta("mu_bohr", fmt_num(mu));
    t.meta("B_tesla", fmt_num(b));
    t.meta("steps", steps);
    t.meta(
        "omega_rad_per_s",
        fmt_num(precession::proper_frequency(mu_nat, &field) / table.hbar_gev_s()),
    );
    t.header(&["t", "sx", "sy", "sz"]);
    for (i, s) in states.iter().enumerate() {
        let ti = t_s * i as f64 / steps as f64;
        t.row([fmt_num(ti), fmt_num(s.s.x), fmt_num(s.s.y), fmt_num(s.s.z)]);
    }
    Ok(t.finish())
}

#[allow(clippy::too_many_arguments)]
fn spectrum(
    cli: &Cli,
    path: &Option<PathBuf>,
    table: &ConstantsTable,
    events: u64,
    pol: f64,
    window: Option<(f64, f64)>,
    weighting: &str,
    bins: usize,
    f_bins: usize,
) -> Result<String> {
    if bins == 0 || f_bins == 0 {
        return Err(Error::Domain("bin counts must be positive".into()));
    }
    let beam = MuonBeam::from_table(table, pol)?;
    let w: Weighting = weighting.parse()?;
    let window = window.unwrap_or((0.0, table.e_max()));
    let hist = SpectrumHistogram::generate(&beam, events, cli.seed, bins);
    let expected = hist.expected(&beam);
    let total = hist.total() as f64;
    let fdist = decaygen::f_distribution(
        &w,
        window,
        table.e_max(),
        FSource::Quadrature {
            bins: f_bins,
            rel_tol: 1e-10,
        },
    )?;

    let mut t = start_table(cli, "spectrum", path);
    t.meta("events", events);
    t.meta("polarization", fmt_num(pol));
    t.meta("gamma_mu", fmt_num(beam.gamma_mu()));
    t.meta("E_max_GeV", fmt_num(beam.e_max()));
    t.meta("endpoint_GeV", fmt_num(beam.endpoint()));
    if let Ok(check) = hist.compare(&beam) {
        t.meta("chi2_N", format!("{} / {}", fmt_num(check.chi2_n), check.dof_n));
        t.meta("chi2_A", format!("{} / {}", fmt_num(check.chi2_a), check.dof_a));
    }
    t.comment("table: spectrum");
    t.header(&["y", "N_mc", "N_analytic", "A_mc", "A_analytic"]);
    for (i, y) in hist.centers().into_iter().enumerate() {
        let n = hist.counts[i] as f64;
        let a_mc = if n > 0.0 && pol != 0.0 {
            hist.spin_sum[i] as f64 / (pol * n)
        } else {
            f64::NAN
        };
        t.row([
            fmt_num(y),
            fmt_num(n),
            fmt_num(expected[i].0 * total),
            fmt_num(a_mc),
            fmt_num(expected[i].1),
        ]);
    }
    t.comment("table: f_distribution");
    t.meta("window_GeV", format!("{},{}", fmt_num(window.0), fmt_num(window.1)));
    t.meta("weighting", w.name());
    t.meta("f_mode", fmt_num(fdist.mode));
    t.meta("f_mean", fmt_num(fdist.mean));
    for other in [Weighting::N, Weighting::A, Weighting::NA, Weighting::NA2] {
        let src = FSource::Quadrature {
            bins: f_bins,
            rel_tol: 1e-10,
        };
        let mode = decaygen::f_distribution(&other, window, table.e_max(), src)
            .map_or_else(|e| format!("undefined ({e})"), |d| fmt_num(d.mode));
        t.meta(&format!("f_mode_{}", other.name()), mode);
    }
    t.header(&["f", "weight"]);
    for (e, wt) in fdist.edges.windows(2).zip(&fdist.weights) {
        t.row([fmt_num(0.5 * (e[0] + e[1])), fmt_num(*wt)]);
    }
    Ok(t.finish())
}

fn wiggle(cli: &Cli, path: &Option<PathBuf>, table: &ConstantsTable, cmd: &WiggleCommand) -> Result<String> {
    match cmd {
        WiggleCommand::Synth {
            n,
            a,
            b,
            asym,
            phi,
            t_max,
            nbins,
        } => {
            let a = a.unwrap_or(table.a_mu_ref());
            let b = b.unwrap_or(table.b_tesla());
            let mut p = WiggleParams {
                n0: 1.0,
                tau_lab: table.tau_lab(),
                asymmetry: *asym,
                omega_a: wigglefit::omega_a(a, b, table)?,
                phase: *phi,
            };
            p.n0 = p.n0_for(*n as f64, *t_max);
            if *nbins == 0 {
                return Err(Error::Domain("nbins must be positive".into()));
            }
            let hist = TimeHistogram::synthesize(&p, *n, *t_max, *nbins, cli.seed, &[])?;
            let mut t = start_table(cli, "wiggle synth", path);
            t.meta("n", n);
            t.meta("a", fmt_num(a));
            t.meta("B_tesla", fmt_num(b));
            t.meta("N0", fmt_num(p.n0));
            t.meta("tau_lab", fmt_num(p.tau_lab));
            t.meta("A", fmt_num(p.asymmetry));
            t.meta("omega_a", fmt_num(p.omega_a));
            t.meta("phi", fmt_num(p.phase));
            t.meta("t_max", fmt_num(*t_max));
            t.header(&["t_bin_center", "counts"]);
            for (c, n) in hist.centers().iter().zip(&hist.counts) {
                t.row([fmt_num(*c), fmt_num(*n)]);
            }
            Ok(t.finish())
        }
        WiggleCommand::Fit {
            input,
            a,
            b,
            asym,
            phi,
            no_scan,
        } => {
            let file = File::open(input).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(input.clone()),
                _ => Error::Io(e),
            })?;
            let hist = TimeHistogram::from_csv(BufReader::new(file))?;
            let a = a.unwrap_or(table.a_mu_ref());
            let b = b.unwrap_or(table.b_tesla());
            let mut init = WiggleParams {
                n0: 1.0,
                tau_lab: table.tau_lab(),
                asymmetry: *asym,
                omega_a: wigglefit::omega_a(a, b, table)?,
                phase: *phi,
            };
            let unit = init.bin_expectation(hist.t_min(), hist.t_max());
            init.n0 = hist.total() / unit;
            let opts = FitOptions {
                frequency_scan: if *no_scan { None } else { FitOptions::default().frequency_scan },
                ..FitOptions::default()
            };
            let r = wigglefit::fit_with(&hist, &init, &opts);
            let mut text = String::new();
            text.push_str(&format!("# mug2 {} wiggle fit\n", env!("CARGO_PKG_VERSION")));
            text.push_str(&format!(
                "# constants = {}\n# input = {}\n# B_tesla = {}\n",
                path.as_ref()
                    .map_or_else(|| "built-in defaults".to_string(), |p| p.display().to_string()),
                input.display(),
                fmt_num(b)
            ));
            text.push_str(&format!("t_min={}\nt_max={}\n", fmt_num(hist.t_min()), fmt_num(hist.t_max())));
            text.push_str(&wigglefit::fit_report(&r, b, table));
            Ok(text)
        }
        WiggleCommand::Scan {
            bins,
            events_per_bin,
            base_a,
            coefficient,
            weighting,
        } => {
            let bins = bins.as_ref().map(|b| b.0.clone()).unwrap_or_else(|| {
                (0..8).map(|i| (1.5 + 0.2 * i as f64, 1.7 + 0.2 * i as f64)).collect()
            });
            let base_a = base_a.unwrap_or(table.a_mu_ref());
            let model = match coefficient {
                Some(c) => CorrectionModel::custom(*c, table.a_mu_ref())?,
                None => CorrectionModel::from_table(table)?,
            };
            let mut scenario = ScanScenario::from_table(table);
            scenario.weighting = weighting.parse()?;
            let res = wigglefit::binned_scan(&bins, base_a, &model, *events_per_bin, cli.seed, &scenario, table)?;
            let mut t = start_table(cli, "wiggle scan", path);
            t.meta("events_per_bin", events_per_bin);
            t.meta("base_a", fmt_num(base_a));
            t.meta("coefficient_C", fmt_num(model.coefficient()));
            t.meta("weighting", scenario.weighting.name());
            t.meta("B_tesla", fmt_num(scenario.b_tesla));
            t.header(&["E_center", "f_bar", "a_fit", "a_err", "converged"]);
            for r in &res.rows {
                t.row([
                    fmt_num(r.e_center),
                    fmt_num(r.f_bar),
                    fmt_num(r.a_fit),
                    fmt_num(r.a_err),
                    r.converged.to_string(),
                ]);
            }
            match res.slope {
                Some((s, e)) => {
                    t.meta("slope", fmt_num(s));
                    t.meta("slope_err", fmt_num(e));
                }
                None => {
                    t.meta("slope", "absent (fewer than two usable bins)");
                }
            }
            Ok(t.finish())
        }
    }
}
