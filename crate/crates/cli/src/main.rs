//! Command-line front end: simulation, mean-field solving, long-time
//! analysis, scaling experiments and the inhibition test.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical/explosion
//! report, 3 I/O failure.

mod config;

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::{RunConfig, SolverMethod};
use hawkes_ei::{
    detect_oscillation, longtime, meanfield, simulate, stats, EventLog, PopulationConfig,
    SimOptions,
};

#[derive(Parser)]
#[command(name = "hawkes-ei", version, about = "Two-population Hawkes processes with multiplicative inhibition")]
struct Cli {
    /// Worker threads for batch commands (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the N-particle system; writes events.csv and meta.json.
    Simulate(RunArgs),
    /// Solve the limit intensity system; writes meanfield.csv and oscillation.json.
    Meanfield(RunArgs),
    /// Long-time regime classification; writes analysis.json.
    Analyze(RunArgs),
    /// Finite-size scaling of the particle/limit coupling; writes chaos.csv and chaos.json.
    Chaos(RunArgs),
    /// One-sided test of inhibition between two recordings.
    TestInhibition(TestArgs),
    /// Print the fully explicit configuration.
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Control events.csv (metadata sidecar resolved next to it).
    #[arg(long)]
    control: PathBuf,
    /// Toxin events.csv.
    #[arg(long)]
    toxin: PathBuf,
    /// Optional wash events.csv, reported descriptively.
    #[arg(long)]
    wash: Option<PathBuf>,
    /// Asymptotic level of the test.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Neurons averaged per estimate.
    #[arg(long, default_value_t = 1)]
    subset: u32,
    /// Directory for test.json (defaults to stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

fn classify_core(e: hawkes_ei::Error) -> CliError {
    use hawkes_ei::Error as E;
    match e {
        E::Io(io) => CliError::Io(io.to_string()),
        E::EventCapExceeded { .. }
        | E::Numerical(_)
        | E::SimultaneousEvents(_)
        | E::DominatingRate { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<(), CliError> {
        match &cli.command {
            Command::Simulate(args) => cmd_simulate(args),
            Command::Meanfield(args) => cmd_meanfield(args),
            Command::Analyze(args) => cmd_analyze(args),
            Command::Chaos(args) => cmd_chaos(args),
            Command::TestInhibition(args) => cmd_test(args),
            Command::PrintConfig { config } => cmd_print_config(config.as_deref()),
        }
    };
    let outcome = match cli.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build();
            match pool {
                Ok(pool) => pool.install(run),
                Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
            }
        }
        None => run(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
    write_file(path, text.as_bytes())
}

fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let pop = PopulationConfig::new(cfg.run.n, cfg.model.alpha).map_err(classify_core)?;
    let opts = SimOptions { event_cap: cfg.run.event_cap };
    let log = simulate::simulate_with_options(
        &cfg.model,
        &pop,
        cfg.run.horizon,
        cfg.run.seed,
        &opts,
    )
    .map_err(classify_core)?;

    ensure_out(&cfg.run.out_dir)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv).map_err(classify_core)?;
    write_file(&cfg.run.out_dir.join("events.csv"), &csv)?;
    let mut meta = Vec::new();
    log.write_meta(&mut meta).map_err(classify_core)?;
    write_file(&cfg.run.out_dir.join("meta.json"), &meta)?;
    println!(
        "simulated {} events (N = {}, T = {}, seed = {}) -> {}",
        log.events.len(),
        pop.n,
        cfg.run.horizon,
        cfg.run.seed,
        cfg.run.out_dir.display()
    );
    Ok(())
}

fn cmd_meanfield(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let sol = match cfg.run.method {
        SolverMethod::Volterra => meanfield::solve_volterra(&cfg.model, cfg.run.horizon, cfg.run.dt),
        SolverMethod::OdeReduction => {
            meanfield::solve_ode_reduction(&cfg.model, cfg.run.horizon, cfg.run.dt)
        }
    }
    .map_err(classify_core)?;

    ensure_out(&cfg.run.out_dir)?;
    let mut csv = Vec::new();
    sol.trajectory.write_csv(&mut csv).map_err(classify_core)?;
    write_file(&cfg.run.out_dir.join("meanfield.csv"), &csv)?;

    if let Some(div) = sol.divergence {
        write_json(&cfg.run.out_dir.join("divergence.json"), &div)?;
        return Err(CliError::Numerical(format!(
            "intensities diverge at t = {:.6}; partial trajectory written to {}",
            div.time,
            cfg.run.out_dir.display()
        )));
    }

    let report = detect_oscillation(&sol.trajectory, cfg.run.burn_in, cfg.run.osc_threshold)
        .map_err(classify_core)?;
    write_json(&cfg.run.out_dir.join("oscillation.json"), &report)?;
    let tail_a = *sol.trajectory.lambda_a.last().unwrap_or(&0.0);
    let tail_b = *sol.trajectory.lambda_b.last().unwrap_or(&0.0);
    println!(
        "lambda_A(T) = {tail_a:.6}, lambda_B(T) = {tail_b:.6}, oscillating = {}",
        report.oscillating
    );
    if report.oscillating {
        println!(
            "lambda_B range [{:.6}, {:.6}], period ~ {}",
            report.lower_b,
            report.upper_b,
            report.period.map_or("n/a".into(), |p| format!("{p:.4}")),
        );
    }
    Ok(())
}

fn cmd_analyze(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let report = longtime::classify_regime(&cfg.model);
    ensure_out(&cfg.run.out_dir)?;
    write_json(&cfg.run.out_dir.join("analysis.json"), &report)?;
    println!("regime: {:?}", report.regime);
    println!("rule: {}", report.rule);
    println!(
        "kappas: ({:.6}, {:.6}, {:.6}, {:.6})",
        report.kappas.k1, report.kappas.k2, report.kappas.k3, report.kappas.k4
    );
    if let Some(ell) = report.ell {
        println!("fixed point ell = {ell:.6}");
    }
    println!("predicted limits: lambda_A -> {:?}, lambda_B -> {:?}", report.limit_a, report.limit_b);
    println!(
        "checks: subcritical_condition = {}, assumption_u = {:?}, ub_in_admissible = {:?}",
        report.checks.subcritical_condition,
        report.checks.assumption_u,
        report.checks.ub_in_admissible
    );
    if let Some(h) = report.threshold_heuristic {
        println!("threshold heuristic: {h:?}");
    }
    Ok(())
}

fn cmd_chaos(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let result = stats::chaos_experiment(
        &cfg.model,
        &cfg.chaos.pop_sizes,
        cfg.run.horizon,
        cfg.run.dt,
        cfg.chaos.replicas,
        cfg.run.seed,
    )
    .map_err(classify_core)?;

    ensure_out(&cfg.run.out_dir)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv).map_err(classify_core)?;
    write_file(&cfg.run.out_dir.join("chaos.csv"), &csv)?;
    write_json(&cfg.run.out_dir.join("chaos.json"), &result)?;
    for p in &result.points {
        println!(
            "N = {}: mean sup discrepancy {:.6} (se {:.6}, {} replicas)",
            p.n, p.mean_sup_discrepancy, p.std_error, p.replicas_used
        );
    }
    match result.slope {
        Some(s) => println!("log-log slope: {s:.4}"),
        None => println!("fit degenerate (no positive discrepancies)"),
    }
    if result.excluded > 0 {
        println!("excluded {} divergent runs", result.excluded);
    }
    Ok(())
}

/// Locates the metadata sidecar of an events file: `meta.json` next to it,
/// else `<stem>.meta.json`.
fn sidecar_for(events: &Path) -> Result<PathBuf, CliError> {
    let dir = events.parent().unwrap_or(Path::new("."));
    let shared = dir.join("meta.json");
    if shared.exists() {
        return Ok(shared);
    }
    if let Some(stem) = events.file_stem() {
        let named = dir.join(format!("{}.meta.json", stem.to_string_lossy()));
        if named.exists() {
            return Ok(named);
        }
    }
    Err(CliError::Io(format!(
        "no metadata sidecar found for {}",
        events.display()
    )))
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    let meta_path = sidecar_for(path)?;
    let csv = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let meta = fs::File::open(&meta_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", meta_path.display())))?;
    EventLog::read(BufReader::new(csv), BufReader::new(meta)).map_err(classify_core)
}

fn cmd_test(args: &TestArgs) -> Result<(), CliError> {
    let control = read_log(&args.control)?;
    let toxin = read_log(&args.toxin)?;
    let wash = args.wash.as_deref().map(read_log).transpose()?;
    let result =
        stats::inhibition_test_with(&control, &toxin, wash.as_ref(), args.level, args.subset)
            .map_err(classify_core)?;
    let text = serde_json::to_string_pretty(&result)
        .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
    println!("{text}");
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        write_file(&dir.join("test.json"), text.as_bytes())?;
    }
    Ok(())
}

fn cmd_print_config(path: Option<&Path>) -> Result<(), CliError> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    print!("{}", cfg.to_toml());
    Ok(())
}
