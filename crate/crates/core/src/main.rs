use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use degenlab::experiments::{
    config_keys, parse_config, persist_report, run_approximation_study, run_carleman_sweep, run_observability_and_ucp,
    run_observability_study, run_solve, run_ucp_check, run_weight_verification, ExperimentConfig, StudyReport,
};
use degenlab::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Environment variable overriding the output directory (below `--out`).
const OUT_ENV: &str = "DEGENLAB_OUT";

#[derive(Parser, Debug)]
#[command(name = "degenlab", version, about = "Studies of the backward degenerate parabolic equation with weight |x|^alpha")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (a single object; missing keys take their defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set alpha=0.5`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Random seed; replaces `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; replaces `output` and the DEGENLAB_OUT variable.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-sample parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print monitors, warnings and written files.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Matching, identities, derivative orders and A_2 constants of the regularized weight.
    VerifyWeights,
    /// One solve with the `solve` section; writes the mesh and trajectory too.
    Solve,
    /// Regularized solutions against the |x|^alpha solution over the k levels.
    Converge,
    /// Observability ratios per sampler family and mesh level.
    Observe,
    /// Initial-energy chain and the composite unique-continuation bound.
    Ucp,
    /// Implied constants of the weighted inequalities over the parameter grids.
    Carleman,
    /// Every study, each in its own subdirectory.
    All,
}

fn key_listing() -> String {
    let mut text = String::from("Configuration keys (for --set and the JSON file) with defaults:\n");
    for (k, v) in config_keys() {
        text.push_str(&format!("  {k} = {v}\n"));
    }
    text.push_str("\nExit codes: 0 all checks passed, 1 a check failed or a study errored, 2 configuration error.");
    text
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. })
}

struct Runner {
    verbose: bool,
    failed: bool,
}

impl Runner {
    fn emit(&mut self, report: &StudyReport, dir: &Path, started: Instant) -> Result<(), Error> {
        let paths = persist_report(report, dir)?;
        let passed = report.passed();
        self.failed |= !passed;
        eprintln!(
            "{}: {} ({:.1} s)",
            report.study,
            if passed { "ok" } else { "FAILED" },
            started.elapsed().as_secs_f64()
        );
        for c in &report.checks {
            if self.verbose || !c.passed {
                eprintln!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
        }
        if self.verbose {
            for m in &report.monitors {
                eprintln!("  [monitor {}] {}: {}", if m.passed { "ok" } else { "off" }, m.name, m.detail);
            }
            for p in &paths {
                eprintln!("  wrote {}", p.display());
            }
        }
        for w in &report.warnings {
            eprintln!("  warning: {w}");
        }
        Ok(())
    }

    fn run(&mut self, command: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<(), Error> {
        let started = Instant::now();
        match command {
            Command::VerifyWeights => self.emit(&run_weight_verification(cfg)?, dir, started),
            Command::Solve => self.emit(&run_solve(cfg, Some(dir))?, dir, started),
            Command::Converge => self.emit(&run_approximation_study(cfg)?, dir, started),
            Command::Observe => self.emit(&run_observability_study(cfg)?, dir, started),
            Command::Ucp => self.emit(&run_ucp_check(cfg)?, dir, started),
            Command::Carleman => self.emit(&run_carleman_sweep(cfg)?, dir, started),
            Command::All => {
                for (sub, name) in [(Command::VerifyWeights, "verify-weights"), (Command::Solve, "solve"), (Command::Converge, "converge")] {
                    self.run(sub, cfg, &dir.join(name))?;
                }
                let started = Instant::now();
                let (obs, ucp) = run_observability_and_ucp(cfg)?;
                self.emit(&obs, &dir.join("observe"), started)?;
                self.emit(&ucp, &dir.join("ucp"), started)?;
                self.run(Command::Carleman, cfg, &dir.join("carleman"))
            }
        }
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(key_listing()).after_help("Use --help for the configuration keys.").get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let mut cfg = match parse_config(cli.config.as_deref(), &cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| cfg.output.clone());
    cfg.output = out.clone();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("configuration error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("could not configure {jobs} workers: {e}");
            return ExitCode::from(1);
        }
    }
    if cli.verbose {
        eprintln!("config {} (seed {}), output {}", cfg.digest(), cfg.seed, out.display());
    }
    let mut runner = Runner { verbose: cli.verbose, failed: false };
    match runner.run(cli.command, &cfg, &out) {
        Ok(()) if runner.failed => ExitCode::from(1),
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
