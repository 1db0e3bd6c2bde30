//! Command-line front end: summary-level testing (`analyze`), the raw-data
//! monitoring pipeline (`monitor`), the Monte Carlo harness (`simulate`),
//! and known-correlation critical-value tables (`critvals`).
//!
//! Exit codes: 0 success, 2 rejection under `--exit-on-reject`, 64 usage or
//! malformed input, 65 bad covariance matrix, 70 numeric failure.

mod monitor;
mod summary;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use onesided::cone::t_statistic;
use onesided::drm::BasisSpec;
use onesided::error::{Error, Result};
use onesided::linalg::CovEstimate;
use onesided::sim::{self, SimulationConfig};
use onesided::testing::{monitor_transform, Calibration, Method};

use monitor::{build_dataset, parse_clustered_csv, MonitorOptions};
use summary::SummaryInput;

const EXIT_REJECT: i32 = 2;
const EXIT_USAGE: i32 = 64;
const EXIT_BAD_MATRIX: i32 = 65;
const EXIT_NUMERIC: i32 = 70;

#[derive(Parser)]
#[command(
    name = "onesided",
    version,
    about = "Multi-parameter one-sided tests, quantile monitoring, and Monte Carlo studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test H0: theta >= theta* from a summary file (estimate + covariance).
    Analyze {
        /// Summary file: theta_hat, optional theta_star, n, cov.
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Comma-separated subset of lrt,pw,mlr,uit.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Use the large-sample chi-square calibration instead of finite-sample F.
        #[arg(long)]
        asymptotic: bool,
        /// Exit with status 2 when any requested method rejects.
        #[arg(long)]
        exit_on_reject: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the density ratio model to clustered data and test each
    /// population against the baseline.
    Monitor {
        /// CSV with columns population, cluster, value.
        data: PathBuf,
        /// Baseline population label (default: population of the first row).
        #[arg(long)]
        baseline: Option<String>,
        /// Basis: quad (1, y, y^2) or quadlog (1, y, y^2, log y).
        #[arg(long, default_value = "quad")]
        basis: String,
        /// Monitored quantile levels.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.5])]
        levels: Vec<f64>,
        /// Bootstrap replicates.
        #[arg(long = "boot", default_value_t = 999)]
        boot: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        asymptotic: bool,
        /// Seed for the bootstrap streams (drawn from entropy and echoed if absent).
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the report and per-population summary files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        exit_on_reject: bool,
    },
    /// Run a simulation described by a TOML configuration file.
    Simulate {
        config: PathBuf,
        /// Directory for report.csv and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Critical values of the projected statistic for known correlations.
    Critvals {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Comma-separated correlation values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
              default_values_t = vec![-1.0, -0.9, -0.5, 0.0, 0.5, 0.9])]
        rho: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                EXIT_USAGE
            };
        }
    };
    let run = match cli.command {
        Command::Analyze { input, alpha, methods, asymptotic, exit_on_reject, out } => {
            cmd_analyze(&input, alpha, methods, asymptotic, exit_on_reject, out.as_deref())
        }
        Command::Monitor {
            data,
            baseline,
            basis,
            levels,
            boot,
            alpha,
            methods,
            asymptotic,
            seed,
            out,
            exit_on_reject,
        } => cmd_monitor(
            &data,
            baseline.as_deref(),
            &basis,
            levels,
            boot,
            alpha,
            methods,
            asymptotic,
            seed,
            out.as_deref(),
            exit_on_reject,
        ),
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out.as_deref(), seed),
        Command::Critvals { n, p, alpha, rho, out } => cmd_critvals(n, p, alpha, &rho, out.as_deref()),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::NotPositiveDefinite | Error::DegenerateMatrix => EXIT_BAD_MATRIX,
        Error::BadInput(_)
        | Error::Domain(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::UnsupportedDimension { .. } => EXIT_USAGE,
        Error::NoBracket
        | Error::NonConvergence { .. }
        | Error::CollinearBasis
        | Error::BootstrapDegenerate { .. } => EXIT_NUMERIC,
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::BadInput(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)
        .map_err(|e| Error::BadInput(format!("cannot write {}: {e}", path.display())))
}

fn parse_methods(raw: Option<Vec<String>>, p: usize) -> Result<Vec<Method>> {
    match raw {
        Some(names) => names.iter().map(|s| s.parse()).collect(),
        None => {
            // default LRT, PW, mLR; PW exists only for two parameters
            let mut m = vec![Method::Lrt];
            if p == 2 {
                m.push(Method::Pw);
            }
            m.push(Method::MLr);
            Ok(m)
        }
    }
}

fn parse_basis(name: &str) -> Result<BasisSpec> {
    match name {
        "quad" | "quadratic" => Ok(BasisSpec::Quadratic),
        "quadlog" | "quadratic_log" => Ok(BasisSpec::QuadraticLog),
        other => Err(Error::BadInput(format!("unknown basis '{other}' (use quad or quadlog)"))),
    }
}

fn fmt_p(p: f64) -> String {
    format!("{p:.6e}")
}

fn entropy_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nanos =
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
    nanos ^ ((std::process::id() as u64) << 32) ^ 0x9E37_79B9_7F4A_7C15
}

fn cmd_analyze(
    input: &Path,
    alpha: f64,
    methods: Option<Vec<String>>,
    asymptotic: bool,
    exit_on_reject: bool,
    out: Option<&Path>,
) -> Result<i32> {
    let summary = SummaryInput::parse(&read_file(input)?)?;
    let p = summary.theta_hat.len();
    let methods = parse_methods(methods, p)?;
    let calibration = if asymptotic { Calibration::AsymptoticChisq } else { Calibration::ExactF };
    summary.cov.factor()?;
    let cov = CovEstimate::of_estimator(summary.cov.clone(), summary.n)?;
    let x = monitor_transform(&summary.theta_hat, &summary.theta_star)?;
    let ts = t_statistic(&x, &cov)?;

    let mut report = String::new();
    report.push_str(&format!("T_n     = {:.6}\n", ts.t_n));
    report.push_str(&format!("R_n     = {:.6}\n", ts.r_n));
    if let Some(rho) = ts.rho() {
        report.push_str(&format!("rho_hat = {rho:.6}\n"));
    }
    report.push_str(&format!("n       = {}\n\n", summary.n));
    report.push_str(&format!(
        "{:<7} {:<17} {:>13}  reject@alpha={alpha}\n",
        "method", "calibration", "p-value"
    ));
    let mut any_reject = false;
    for &method in &methods {
        let outcome = run_one(method, &x, &cov, alpha, calibration)?;
        any_reject |= outcome.reject;
        report.push_str(&format!(
            "{:<7} {:<17} {:>13}  {}\n",
            method.name(),
            outcome.calibration.name(),
            fmt_p(outcome.p_value),
            if outcome.reject { "yes" } else { "no" }
        ));
    }
    print!("{report}");
    if let Some(path) = out {
        write_file(path, &report)?;
    }
    Ok(if exit_on_reject && any_reject { EXIT_REJECT } else { 0 })
}

fn run_one(
    method: Method,
    x: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    calibration: Calibration,
) -> Result<onesided::testing::TestOutcome> {
    match method {
        Method::Lrt => onesided::testing::lrt_test(x, cov, alpha, calibration),
        Method::MLr => onesided::testing::mlr_test(x, cov, alpha, calibration),
        Method::Pw => onesided::testing::pw_test(x, cov, alpha, calibration),
        Method::Uit => onesided::testing::uit_test(x, cov, alpha, false),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_monitor(
    data_path: &Path,
    baseline: Option<&str>,
    basis: &str,
    levels: Vec<f64>,
    boot: usize,
    alpha: f64,
    methods: Option<Vec<String>>,
    asymptotic: bool,
    seed: Option<u64>,
    out: Option<&Path>,
    exit_on_reject: bool,
) -> Result<i32> {
    if levels.is_empty() || levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::BadInput("quantile levels must lie in (0, 1)".into()));
    }
    let raw = parse_clustered_csv(&read_file(data_path)?)?;
    let data = build_dataset(raw, baseline)?;
    let methods = parse_methods(methods, levels.len())?;
    let (seed, seed_was_drawn) = match seed {
        Some(s) => (s, false),
        None => (entropy_seed(), true),
    };
    let opts = MonitorOptions {
        basis: parse_basis(basis)?,
        levels: levels.clone(),
        bootstrap_b: boot,
        alpha,
        calibration: if asymptotic { Calibration::AsymptoticChisq } else { Calibration::ExactF },
        methods: methods.clone(),
        seed,
    };
    let report = monitor::run_monitor(&data, &opts)?;

    let mut text = String::new();
    text.push_str(&format!(
        "# baseline={} basis={basis} levels={} B={boot} seed={seed} calibration={} N={}\n",
        data.population(0).label,
        levels.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        opts.calibration.name(),
        report.n_observations,
    ));
    text.push_str(&format!(
        "# fit: {} iterations, gradient {:.2e}; bootstrap redraws: {}\n",
        report.fit.iterations, report.fit.final_grad_norm, report.bootstrap_failures
    ));
    text.push_str(&format!("{:<14}", "population"));
    for &a in &levels {
        text.push_str(&format!(" {:>12}", format!("theta@{a}")));
    }
    text.push_str(&format!(" {:>10}", "T_n"));
    for m in &methods {
        text.push_str(&format!(" {:>13}", format!("p[{}]", m.name())));
    }
    text.push_str(" reject\n");
    let mut any_reject = false;
    for res in &report.results {
        text.push_str(&format!("{:<14}", res.label));
        for t in &res.theta_hat {
            text.push_str(&format!(" {t:>12.6}"));
        }
        let t_n = res.outcomes.first().map(|o| o.statistic).unwrap_or(0.0);
        text.push_str(&format!(" {t_n:>10.4}"));
        let mut rejected: Vec<&str> = Vec::new();
        for out in &res.outcomes {
            text.push_str(&format!(" {:>13}", fmt_p(out.p_value)));
            if out.reject {
                rejected.push(out.method.name());
                any_reject = true;
            }
        }
        text.push_str(&format!(" {}\n", if rejected.is_empty() { "-".into() } else { rejected.join(",") }));
    }
    if seed_was_drawn {
        text.push_str(&format!("# seed drawn from entropy; rerun with --seed {seed}\n"));
    }
    print!("{text}");

    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| Error::BadInput(format!("cannot create {}: {e}", dir.display())))?;
        write_file(&dir.join("report.txt"), &text)?;
        for res in &report.results {
            let header = format!(
                "summary for population '{}' against baseline '{}'",
                res.label,
                data.population(0).label
            );
            let path = dir.join(format!("summary_{}.txt", res.label));
            write_file(&path, &res.summary.render(&header))?;
        }
    }
    Ok(if exit_on_reject && any_reject { EXIT_REJECT } else { 0 })
}

fn cmd_simulate(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<i32> {
    let mut cfg = SimulationConfig::from_toml(&read_file(config_path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = sim::run(&cfg)?;
    print!("{}", report.to_table());
    println!("# wall clock: {:.2}s", report.wall_clock_secs);
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| Error::BadInput(format!("cannot create {}: {e}", dir.display())))?;
        write_file(&dir.join("report.csv"), &report.to_csv())?;
        write_file(&dir.join("report.txt"), &report.to_table())?;
        println!("# wrote {}/report.csv and report.txt", dir.display());
    }
    Ok(0)
}

fn cmd_critvals(n: usize, p: usize, alpha: f64, rho: &[f64], out: Option<&Path>) -> Result<i32> {
    let table = sim::critical_value_table(n, p, rho, alpha)?;
    let mut text = format!("# critical values: n={n} p={p} alpha={alpha}\n");
    text.push_str("rho ");
    for (r, _) in &table {
        text.push_str(&format!(" {r:>8.2}"));
    }
    text.push_str("\nc   ");
    for (_, c) in &table {
        text.push_str(&format!(" {c:>8.4}"));
    }
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        write_file(path, &text)?;
    }
    Ok(0)
}
