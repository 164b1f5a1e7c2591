//! `hgtlab`: thresholds, regime classification and simulations for the
//! selection-mutation model with horizontal transfer.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use hgt_core::config::{config_hash, ConfigSpec};
use hgt_core::crosscheck::{cross_check, CrossCheckError, CrossCheckOptions};
use hgt_core::eps_solver::{EpsError, EpsRunOptions, EpsSolver};
use hgt_core::grid::write_atomic;
use hgt_core::kernels::verify_hypotheses;
use hgt_core::limit_solver::{LimitError, LimitRunOptions, LimitSolver};
use hgt_core::model::{classify_initial_fitness_type, classify_regime, compute_thresholds, ModelConfig, ModelError};
use hgt_core::record::RunRecord;

#[derive(Parser, Debug)]
#[command(name = "hgtlab", version, about = "Selection-mutation model with horizontal gene transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for records, snapshots and reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a configuration key after the file is read.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write a snapshot of u every STRIDE recorded rows.
    #[arg(long, global = true, value_name = "STRIDE")]
    snapshots: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// d1, mu1, z_H, mu, 2 sqrt(g) and the regime.
    Thresholds,
    /// Regime and the type of the initial fitness.
    Classify,
    /// Kernel and growth hypotheses.
    Hypotheses,
    /// Run the solver at positive epsilon.
    SimulateEps,
    /// Run the constrained limit solver.
    SimulateLimit,
    /// Compare the limit solver with the oracles and an epsilon sweep.
    CrossCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Classify => "classify",
            Command::Hypotheses => "hypotheses",
            Command::SimulateEps => "simulate-eps",
            Command::SimulateLimit => "simulate-limit",
            Command::CrossCheck => "cross-check",
        }
    }
}

enum Failure {
    Config(String),
    Hypothesis(String),
    Numerical(String),
    Checks(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 1,
            Failure::Hypothesis(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Checks(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Hypothesis(m) | Failure::Numerical(m) | Failure::Checks(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Hypothesis(e.to_string()),
        }
    }
}

impl From<EpsError> for Failure {
    fn from(e: EpsError) -> Self {
        match e {
            EpsError::Model(m) => m.into(),
            EpsError::Maladapted { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<LimitError> for Failure {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::Model(m) => m.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<CrossCheckError> for Failure {
    fn from(e: CrossCheckError) -> Self {
        match e {
            CrossCheckError::Regime(_) => Failure::Hypothesis(e.to_string()),
            CrossCheckError::Model(m) => m.into(),
            CrossCheckError::Eps(x) => x.into(),
            CrossCheckError::Limit(x) => x.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

struct Context {
    cfg: ModelConfig,
    kernel_label: String,
    out: Option<PathBuf>,
    snapshots: Option<usize>,
}

fn load(cli: &Cli) -> Result<Context, Failure> {
    let mut spec = match &cli.config {
        Some(p) => ConfigSpec::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => ConfigSpec::default(),
    };
    for kv in &cli.overrides {
        spec.apply_override(kv).map_err(|e| Failure::Config(e.to_string()))?;
    }
    let cfg = spec.build().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(Context {
        kernel_label: cfg.kernel.kind().to_string(),
        cfg,
        out: cli.out.clone(),
        snapshots: cli.snapshots,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report(ctx: &Context, name: &str, text: &str) -> Result<(), Failure> {
    print!("{text}");
    if let Some(dir) = &ctx.out {
        write_file(&dir.join(format!("{name}.txt")), text)?;
    }
    Ok(())
}

fn header(ctx: &Context) -> String {
    format!("# config_hash={}\n", config_hash(&ctx.cfg, &ctx.kernel_label))
}

/// Checks that describe the regime rather than the admissibility of the model.
const ADVISORY: &[&str] = &["HR2"];

fn hypotheses_text(ctx: &Context) -> Result<(String, bool), Failure> {
    let dom = ctx.cfg.domain()?;
    let rep = verify_hypotheses(&ctx.cfg.kernel, &ctx.cfg.growth, &dom, ctx.cfg.tau);
    let mut s = header(ctx);
    let _ = write!(s, "{rep}");
    let blocking: Vec<&str> = rep.failures().map(|c| c.id).filter(|id| !ADVISORY.contains(id)).collect();
    let advisory: Vec<&str> = rep.failures().map(|c| c.id).filter(|id| ADVISORY.contains(id)).collect();
    if !blocking.is_empty() {
        let _ = writeln!(s, "violated: {}", blocking.join(", "));
    }
    if !advisory.is_empty() {
        let _ = writeln!(s, "advisory: {} (expected when tau > 2 sqrt g)", advisory.join(", "));
    }
    Ok((s, blocking.is_empty()))
}

fn hypotheses(ctx: &Context) -> Result<(), Failure> {
    let (text, ok) = hypotheses_text(ctx)?;
    report(ctx, "hypotheses", &text)?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Hypothesis("kernel or growth hypotheses violated".into()))
    }
}

fn require_hypotheses(ctx: &Context) -> Result<(), Failure> {
    let (text, ok) = hypotheses_text(ctx)?;
    if ok {
        return Ok(());
    }
    report(ctx, "hypotheses", &text)?;
    Err(Failure::Hypothesis("kernel or growth hypotheses violated".into()))
}

fn thresholds(ctx: &Context) -> Result<(), Failure> {
    require_hypotheses(ctx)?;
    let cfg = &ctx.cfg;
    let th = compute_thresholds(&cfg.kernel)?;
    let reg = classify_regime(cfg)?;
    let mut s = header(ctx);
    let _ = writeln!(s, "kernel={}", ctx.kernel_label);
    let _ = writeln!(s, "d1={:.15}", th.d1);
    let _ = writeln!(s, "mu1={:.15}", th.mu1);
    let _ = writeln!(s, "mu1_alt={:.15}", th.mu1_alt);
    let _ = writeln!(s, "z_H={:.15}", th.z_h);
    let _ = writeln!(s, "d1_exceeds_z_H={}", th.d1_exceeds_z_h());
    let _ = writeln!(s, "mu={:.15}", reg.mu);
    let _ = writeln!(s, "two_sqrt_g={:.15}", 2.0 * cfg.g.sqrt());
    let _ = writeln!(s, "regime={}", reg.regime);
    report(ctx, "thresholds", &s)
}

fn classify(ctx: &Context) -> Result<(), Failure> {
    require_hypotheses(ctx)?;
    let cfg = &ctx.cfg;
    let reg = classify_regime(cfg)?;
    let init = classify_initial_fitness_type(cfg);
    let mut s = header(ctx);
    let _ = writeln!(s, "mu={:.15}", reg.mu);
    let _ = writeln!(s, "mu1={:.15}", reg.mu1);
    let _ = writeln!(s, "regime={}", reg.regime);
    let flags: Vec<&str> = reg.flags.iter().map(|r| r.name()).collect();
    let _ = writeln!(s, "flags={}", flags.join(","));
    if let Some(z) = reg.predicted_limit_trait {
        let _ = writeln!(s, "predicted_limit_trait={z:.15}");
    }
    if let Some(z) = reg.predicted_extinction_trait {
        let _ = writeln!(s, "predicted_extinction_trait={z:.15}");
    }
    let _ = writeln!(s, "initial_fitness={}", init.kind.name());
    for (a, b) in &init.intervals {
        let _ = writeln!(s, "positivity_interval=[{a:.9}, {b:.9}]");
    }
    report(ctx, "classify", &s)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn emit_record(ctx: &Context, stem: &str, record: &RunRecord) -> Result<(), Failure> {
    let text = record.to_csv(Some(unix_now()));
    match &ctx.out {
        Some(dir) => {
            write_file(&dir.join(format!("{stem}.csv")), &text)?;
            for (k, (_, snap)) in record.snapshot_texts().iter().enumerate() {
                write_file(&dir.join("snapshots").join(format!("{stem}_{k:05}.txt")), snap)?;
            }
        }
        None => print!("{text}"),
    }
    println!("status: {}", record.status);
    if record.status.is_abort() {
        return Err(Failure::Numerical(record.status.to_string()));
    }
    Ok(())
}

fn simulate_eps(ctx: &Context) -> Result<(), Failure> {
    ctx.cfg.validate()?;
    require_hypotheses(ctx)?;
    let solver = EpsSolver::new(&ctx.cfg)?;
    let run = solver.run(&EpsRunOptions {
        snapshot_every: ctx.snapshots,
        ..EpsRunOptions::default()
    });
    emit_record(ctx, "eps_record", &run.record)
}

fn simulate_limit(ctx: &Context) -> Result<(), Failure> {
    ctx.cfg.validate()?;
    require_hypotheses(ctx)?;
    let solver = LimitSolver::new(&ctx.cfg)?;
    let run = solver.run(&LimitRunOptions {
        snapshot_every: ctx.snapshots,
        ..LimitRunOptions::default()
    })?;
    emit_record(ctx, "limit_record", &run.record)
}

fn crosscheck(ctx: &Context) -> Result<(), Failure> {
    ctx.cfg.validate()?;
    require_hypotheses(ctx)?;
    let opts = CrossCheckOptions {
        parallelism: ctx.cfg.options.parallelism,
        ..CrossCheckOptions::default()
    };
    let rep = cross_check(&ctx.cfg, &opts)?;
    let mut s = header(ctx);
    for l in rep.lines() {
        let _ = writeln!(s, "{l}");
    }
    let verdict = if rep.all_pass() { "all checks passed" } else { "some checks failed" };
    let _ = writeln!(s, "{verdict}");
    report(ctx, "cross_check", &s)?;
    if rep.all_pass() {
        Ok(())
    } else {
        Err(Failure::Checks(verdict.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|ctx| match cli.command {
        Command::Thresholds => thresholds(&ctx),
        Command::Classify => classify(&ctx),
        Command::Hypotheses => hypotheses(&ctx),
        Command::SimulateEps => simulate_eps(&ctx),
        Command::SimulateLimit => simulate_limit(&ctx),
        Command::CrossCheck => crosscheck(&ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hgtlab {}: {}", cli.command.name(), f.message());
            ExitCode::from(f.code())
        }
    }
}
