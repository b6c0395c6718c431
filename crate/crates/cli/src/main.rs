//! `gwve`: constants, classification, verification checks and raw simulations for
//! Galton-Watson processes in varying environment.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gwve::config::{EnvSpec, ExperimentConfig};
use gwve::experiments::{self, Experiment, ExperimentReport, SimulationKind};
use gwve::{pgf, Error};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "gwve", version, about = "Galton-Watson processes in varying environment")]
struct Cli {
    /// JSON experiment config (environment, horizons, replicates, grids, tolerances).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reference environment e1, e2 or e3; overrides the config's environment.
    #[arg(long, global = true)]
    env: Option<String>,
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed [default: 20240601].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Horizons, comma separated; overrides the config.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Replicate count; overrides the config.
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// Run limit experiments on environments that are not classified critical.
    #[arg(long, global = true)]
    allow_noncritical: bool,
    /// Suppress CSV on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Table of n, mu_n, S_n, a_n, survival probability and the Kolmogorov ratio.
    Constants,
    /// Regime label with trend diagnostics and sup regularity ratios, as JSON.
    Classify {
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Run a verification experiment: identities, decomposition, uniform-limit,
    /// g-convergence, kolmogorov, exponential or yaglom. Exit 0 iff every row passes.
    Check { name: String },
    /// Run a sampler (gw, one-spine, two-spine, yaglom) at the last horizon and emit
    /// its histogram or samples.
    Simulate { kind: String },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            e => Failure::Run(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("gwve: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("gwve: {msg}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &cli.env {
        cfg.environment = EnvSpec::reference(name)
            .ok_or_else(|| Failure::Usage(format!("--env: unknown reference environment `{name}` (e1, e2, e3)")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(n) = &cli.n {
        cfg.horizons = Some(n.clone());
    }
    if let Some(r) = cli.replicates {
        cfg.replicates = Some(r);
    }
    cfg.allow_noncritical |= cli.allow_noncritical;
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    if let Some(dir) = &cfg.output {
        fs::create_dir_all(dir)?;
    }
    match &cli.command {
        Command::Constants => constants(cli, &cfg),
        Command::Classify { horizon, tol } => classify(&cfg, *horizon, *tol),
        Command::Check { name } => check(cli, &cfg, name),
        Command::Simulate { kind } => simulate(cli, &cfg, kind),
    }
}

fn emit(cli: &Cli, cfg: &ExperimentConfig, file: &str, body: &str) -> Result<(), Failure> {
    if let Some(dir) = &cfg.output {
        fs::write(dir.join(file), body)?;
    }
    if !cli.quiet {
        io::stdout().write_all(body.as_bytes())?;
    }
    Ok(())
}

fn write_file(dir: Option<&Path>, file: &str, body: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = dir {
        fs::write(dir.join(file), body)?;
    }
    Ok(())
}

fn constants(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let env = cfg.environment.build()?;
    let mut body = String::from("n,mu,s,a,survival,kolmogorov_ratio\n");
    for n in cfg.horizons_or(&[1, 5, 10, 100, 1000]) {
        let ratio = pgf::kolmogorov_ratio(&env, n).map(|r| format!("{r:?}")).unwrap_or_default();
        body.push_str(&format!(
            "{n},{:?},{:?},{:?},{:?},{ratio}\n",
            env.mu(n),
            env.cum_nu_over_mu(n),
            env.a_n(n),
            pgf::survival_prob(&env, n)
        ));
    }
    emit(cli, cfg, "constants.csv", &body)?;
    Ok(0)
}

fn classify(cfg: &ExperimentConfig, horizon: usize, tol: f64) -> Result<u8, Failure> {
    let env = cfg.environment.build()?;
    let doc = serde_json::json!({
        "environment": env.label(),
        "diagnostics": env.classify(horizon, tol),
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    write_file(cfg.output.as_deref(), "classify.json", text.as_bytes())?;
    print!("{text}");
    Ok(0)
}

fn finish(cli: &Cli, cfg: &ExperimentConfig, stem: &str, report: &ExperimentReport, judged: bool) -> Result<u8, Failure> {
    emit(cli, cfg, &format!("{stem}.csv"), &report.csv())?;
    let threads = gwve::montecarlo::Driver::new(cfg.threads)?.threads();
    let summary = serde_json::to_string_pretty(&report.summary(threads)).expect("serializable") + "\n";
    write_file(cfg.output.as_deref(), &format!("{stem}.summary.json"), summary.as_bytes())?;
    let aborts_ok = report.abort_fraction() <= cfg.tolerances.abort_fraction;
    let ok = aborts_ok && (!judged || report.passed());
    if !cli.quiet {
        eprintln!(
            "{}: {} (seed {}, {} replicates, {} aborted, {:.2}s)",
            report.experiment,
            if ok { "pass" } else { "FAIL" },
            report.seed,
            report.replicates,
            report.aborted,
            report.wall_time_secs
        );
    }
    Ok(if ok { 0 } else { EXIT_FAIL })
}

fn check(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> Result<u8, Failure> {
    let experiment: Experiment = name.parse()?;
    let report = experiment.run(cfg)?;
    finish(cli, cfg, experiment.name(), &report, true)
}

fn simulate(cli: &Cli, cfg: &ExperimentConfig, kind: &str) -> Result<u8, Failure> {
    let kind: SimulationKind = kind.parse()?;
    let sim = experiments::simulate(kind, cfg)?;
    let dir = cfg.output.as_deref();
    let stem = format!("simulate_{}", kind.name().replace('-', "_"));
    let mut buf = Vec::new();
    if kind == SimulationKind::Yaglom {
        sim.write_samples_csv(&mut buf)?;
        write_file(dir, &format!("{stem}_samples.csv"), &buf)?;
    } else {
        sim.write_histogram_csv(&mut buf)?;
        write_file(dir, &format!("{stem}_histogram.csv"), &buf)?;
    }
    if kind == SimulationKind::TwoSpine {
        buf.clear();
        sim.write_branch_csv(&mut buf)?;
        write_file(dir, &format!("{stem}_branch.csv"), &buf)?;
    }
    finish(cli, cfg, &stem, &sim.report, false)
}
