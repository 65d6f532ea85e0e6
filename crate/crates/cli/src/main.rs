use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use safe_bai::algorithms::{AlgoConfig, ConstantsLedger};
use safe_bai::harness::{run_experiment_with, Execution, ExperimentSpec, GeneratorSpec, InstanceSource};
use safe_bai::instances::{ProblemInstance, Prop1Kind};
use safe_bai::oracle::{oracle_lower_bound, BoundForm, LbSolver};

#[derive(Parser)]
#[command(name = "safe-bai", version, about = "Best safe arm identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    GenInstance(GenArgs),
    /// Run one experiment from a config file or flags.
    Run(RunArgs),
    /// Run an experiment config that has a sweep block.
    Sweep(SweepArgs),
    /// Print the oracle lower bound of a single-constraint instance.
    LowerBound(LbArgs),
    /// Check the constants against every checkable inequality.
    ValidateConstants(ConstArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    MabHard,
    Prop1I1,
    Prop1I2,
    Random,
    Bai,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 10)]
    n_arms: usize,
    #[arg(long, default_value_t = 0.1)]
    safety_margin_best: f64,
    #[arg(long, default_value_t = 0.05)]
    value_gap: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    n_x: usize,
    #[arg(long, default_value_t = 10)]
    n_z: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated arm means for `bai`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExecArgs {
    /// Run trials one after another on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report the oracle lower bound next to the summary.
    #[arg(long)]
    lower_bound: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    GapRatios,
    Projection,
}

#[derive(Args)]
struct LbArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Grid points for two-arm instances; Frank-Wolfe otherwise.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, value_enum, default_value_t = Form::GapRatios)]
    form: Form,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Practical,
}

#[derive(Args)]
struct ConstArgs {
    #[arg(long, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    /// Override a constant, e.g. `--set c_4=0.3`. Repeatable.
    #[arg(long = "set", value_parser = parse_assignment)]
    overrides: Vec<(String, f64)>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn gen_instance(a: &GenArgs) -> Result<()> {
    let g = match a.kind {
        Kind::MabHard => GeneratorSpec::MabHard {
            n_arms: a.n_arms,
            safety_margin_best: a.safety_margin_best,
            value_gap: a.value_gap,
        },
        Kind::Prop1I1 => GeneratorSpec::Prop1 { kind: Prop1Kind::I1, alpha: a.alpha },
        Kind::Prop1I2 => GeneratorSpec::Prop1 { kind: Prop1Kind::I2, alpha: a.alpha },
        Kind::Random => GeneratorSpec::Random { d: a.d, n_x: a.n_x, n_z: a.n_z, m: a.m, seed: Some(a.seed) },
        Kind::Bai => GeneratorSpec::BaiBasis { theta: a.theta.clone() },
    };
    g.build(a.seed)?.save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn execute(spec: &ExperimentSpec, exec: &ExecArgs) -> Result<()> {
    let mode = if exec.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = run_experiment_with(spec, mode)?;
    match &spec.output_path {
        Some(path) => {
            out.save(path)?;
            println!("wrote {}", path.display());
        }
        None => out.write_csv(std::io::stdout().lock())?,
    }
    for row in out.summary() {
        let cell = row.sweep_value.map(|v| format!(" @ {v}")).unwrap_or_default();
        let ratio = row.ratio_to_reference.map(|r| format!(" ratio={r:.3}")).unwrap_or_default();
        let lb = row.lower_bound.map(|b| format!(" lower_bound={b:.1}")).unwrap_or_default();
        eprintln!(
            "{}{cell}: mean={:.1} median={:.1} std={:.1} error_rate={:.3} failed={}{ratio}{lb}",
            row.algorithm, row.mean_pulls, row.median_pulls, row.std_pulls, row.error_rate, row.n_failed
        );
    }
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => {
            let instance = a.instance.clone().context("--instance is required without --config")?;
            ExperimentSpec {
                instance: InstanceSource::File { file: instance },
                algorithms: vec!["beside".into()],
                eps: a.eps.context("--eps is required without --config")?,
                delta: a.delta.context("--delta is required without --config")?,
                n_trials: 1,
                base_seed: 0,
                sweep: None,
                output_path: None,
                lower_bound: false,
                config: AlgoConfig::default(),
            }
        }
    };
    if let Some(i) = &a.instance {
        spec.instance = InstanceSource::File { file: i.clone() };
    }
    if !a.algo.is_empty() {
        spec.algorithms = a.algo.clone();
    }
    spec.eps = a.eps.unwrap_or(spec.eps);
    spec.delta = a.delta.unwrap_or(spec.delta);
    spec.n_trials = a.trials.unwrap_or(spec.n_trials);
    spec.base_seed = a.seed.unwrap_or(spec.base_seed);
    spec.lower_bound |= a.lower_bound;
    if a.out.is_some() {
        spec.output_path = a.out.clone();
    }
    execute(&spec, &a.exec)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.config)?;
    if spec.sweep.is_none() {
        bail!("{} has no sweep block", a.config.display());
    }
    if a.out.is_some() {
        spec.output_path = a.out.clone();
    }
    execute(&spec, &a.exec)
}

fn lower_bound(a: &LbArgs) -> Result<()> {
    let inst = ProblemInstance::load(&a.instance)?;
    let solver = a.grid.map_or(LbSolver::FrankWolfe, |points| LbSolver::Grid { points });
    let form = match a.form {
        Form::GapRatios => BoundForm::GapRatios,
        Form::Projection => BoundForm::Projection,
    };
    let lb = oracle_lower_bound(&inst, a.delta, solver, form)?;
    if lb.value.is_infinite() {
        println!("lower_bound=inf (a competitor ties z* or z* sits on the threshold)");
    } else {
        println!("lower_bound={}", lb.value);
        println!("complexity={}", lb.complexity);
        println!("lambda={:?}", lb.lambda.as_slice());
    }
    Ok(())
}

fn validate_constants(a: &ConstArgs) -> Result<bool> {
    let base = match a.preset {
        Preset::Paper => ConstantsLedger::paper(),
        Preset::Practical => ConstantsLedger::practical(),
    };
    let mut value = serde_json::to_value(&base)?;
    for (k, v) in &a.overrides {
        let map = value.as_object_mut().context("constants serialize as an object")?;
        if !map.contains_key(k) {
            bail!("unknown constant `{k}`");
        }
        map.insert(k.clone(), serde_json::json!(v));
    }
    let ledger: ConstantsLedger = serde_json::from_value(value)?;
    let mut all = true;
    for c in ledger.checks() {
        let op = if c.upper { "<=" } else { ">=" };
        println!("{} {:<40} {:.6} {op} {:.6}", if c.holds { "ok  " } else { "FAIL" }, c.name, c.lhs, c.rhs);
        all &= c.holds;
    }
    println!("{}", if all { "all constraints hold" } else { "constraints violated" });
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenInstance(a) => gen_instance(a).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::LowerBound(a) => lower_bound(a).map(|_| true),
        Command::ValidateConstants(a) => validate_constants(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
