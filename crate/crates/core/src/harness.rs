//! Multi-trial experiments: instance construction, seeding, parallel
//! execution, CSV output and summaries.
//!
//! Trial seeds depend on the base seed, the sweep index and the trial index
//! only. Every algorithm in a cell therefore sees the same noise stream, and
//! adding an algorithm never shifts another's results.

use std::io::Write;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{baseline, beside, beside_elim, single_design_ablation, Ablation, AlgoConfig, Environment, RunRecord};
use crate::error::{Error, Result};
use crate::instances::{
    gen_bai_instance, gen_mab_hard_instance, gen_prop1_instance, gen_random_instance, ProblemInstance, Prop1Kind,
};
use crate::oracle::{oracle_lower_bound, BoundForm, LbSolver};

pub const ALGORITHMS: [&str; 5] = ["beside", "beside-elim", "baseline", "xy-diff-only", "xy-safe-only"];

/// Tag mixed into the seed of generated random instances so they never
/// share a stream with trial noise.
const INSTANCE_TAG: u64 = 0x696e_7374;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based seed derivation.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |h, p| splitmix64(h ^ splitmix64(*p)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    MabHard {
        n_arms: usize,
        #[serde(default = "default_margin")]
        safety_margin_best: f64,
        #[serde(default = "default_value_gap")]
        value_gap: f64,
    },
    Prop1 {
        kind: Prop1Kind,
        alpha: f64,
    },
    Random {
        d: usize,
        n_x: usize,
        n_z: usize,
        #[serde(default = "default_m")]
        m: usize,
        /// Derived from the base seed and sweep index when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
    BaiBasis {
        theta: Vec<f64>,
    },
}

fn default_margin() -> f64 {
    0.1
}

fn default_value_gap() -> f64 {
    0.05
}

fn default_m() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { file: PathBuf },
    Generator(GeneratorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub instance: InstanceSource,
    pub algorithms: Vec<String>,
    pub eps: f64,
    pub delta: f64,
    pub n_trials: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Compute the oracle lower bound per cell (single-constraint instances).
    #[serde(default)]
    pub lower_bound: bool,
    #[serde(default)]
    pub config: AlgoConfig,
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidArgument(format!("sweep value {v} for `{name}` must be a positive integer")))
    }
}

impl GeneratorSpec {
    pub fn build(&self, seed: u64) -> Result<ProblemInstance> {
        match self {
            GeneratorSpec::MabHard { n_arms, safety_margin_best, value_gap } => {
                gen_mab_hard_instance(*n_arms, *safety_margin_best, *value_gap)
            }
            GeneratorSpec::Prop1 { kind, alpha } => gen_prop1_instance(*kind, *alpha),
            GeneratorSpec::Random { d, n_x, n_z, m, seed: s } => gen_random_instance(*d, *n_x, *n_z, *m, s.unwrap_or(seed)),
            GeneratorSpec::BaiBasis { theta } => gen_bai_instance(theta),
        }
    }

    fn with_param(&self, name: &str, v: f64) -> Result<Self> {
        let mut g = self.clone();
        let unknown = || Error::InvalidArgument(format!("generator has no sweepable parameter `{name}`"));
        match (&mut g, name) {
            (GeneratorSpec::MabHard { n_arms, .. }, "n_arms") => *n_arms = as_count(name, v)?,
            (GeneratorSpec::MabHard { safety_margin_best, .. }, "safety_margin_best") => *safety_margin_best = v,
            (GeneratorSpec::MabHard { value_gap, .. }, "value_gap") => *value_gap = v,
            (GeneratorSpec::Prop1 { alpha, .. }, "alpha") => *alpha = v,
            (GeneratorSpec::Random { d, .. }, "d") => *d = as_count(name, v)?,
            (GeneratorSpec::Random { n_x, .. }, "n_x") => *n_x = as_count(name, v)?,
            (GeneratorSpec::Random { n_z, .. }, "n_z") => *n_z = as_count(name, v)?,
            (GeneratorSpec::Random { m, .. }, "m") => *m = as_count(name, v)?,
            _ => return Err(unknown()),
        }
        Ok(g)
    }
}

/// One sweep cell: the instance and the run parameters it is tried at.
#[derive(Clone, Debug)]
pub struct Cell {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub instance: ProblemInstance,
    pub eps: f64,
    pub delta: f64,
    pub lower_bound: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("no algorithms listed".into()));
        }
        if let Some(a) = self.algorithms.iter().find(|a| !ALGORITHMS.contains(&a.as_str())) {
            return Err(Error::UnknownAlgorithm(a.clone()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::InvalidArgument("sweep has no values".into()));
            }
        }
        Ok(())
    }

    fn cell(&self, index: usize, value: Option<f64>) -> Result<Cell> {
        let (mut eps, mut delta) = (self.eps, self.delta);
        let mut source = self.instance.clone();
        if let (Some(s), Some(v)) = (&self.sweep, value) {
            match (s.param.as_str(), &source) {
                ("eps", _) => eps = v,
                ("delta", _) => delta = v,
                (p, InstanceSource::Generator(g)) => source = InstanceSource::Generator(g.with_param(p, v)?),
                (p, InstanceSource::File { .. }) => {
                    return Err(Error::InvalidArgument(format!("cannot sweep `{p}` over an instance file")))
                }
            }
        }
        let instance = match source {
            InstanceSource::File { file } => ProblemInstance::load(&file)?,
            InstanceSource::Generator(g) => g.build(derive_seed(self.base_seed, &[index as u64, INSTANCE_TAG]))?,
        };
        let lower_bound = if self.lower_bound && instance.m() == 1 {
            oracle_lower_bound(&instance, delta, LbSolver::FrankWolfe, BoundForm::GapRatios).ok().map(|lb| lb.value)
        } else {
            None
        };
        Ok(Cell { index, sweep_value: value, instance, eps, delta, lower_bound })
    }

    /// The instances and parameters of every sweep cell, in order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        match &self.sweep {
            None => Ok(vec![self.cell(0, None)?]),
            Some(s) => s.values.iter().enumerate().map(|(i, v)| self.cell(i, Some(*v))).collect(),
        }
    }
}

/// Runs one registered algorithm to completion.
pub fn run_algorithm(name: &str, env: &mut Environment, eps: f64, delta: f64, cfg: &AlgoConfig) -> Result<RunRecord> {
    let out = match name {
        "beside" => beside(env, eps, delta, cfg),
        "beside-elim" => beside_elim(env, eps, delta, cfg),
        "baseline" => baseline(env, eps, delta, cfg),
        "xy-diff-only" => single_design_ablation(env, eps, delta, Ablation::XyDiffOnly, cfg),
        "xy-safe-only" => single_design_ablation(env, eps, delta, Ablation::XySafeOnly, cfg),
        other => return Err(Error::UnknownAlgorithm(other.to_string())),
    };
    out.map(|(_, record)| record)
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub algorithm: String,
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub trial: u32,
    pub seed: u64,
    /// Failed runs keep their error so the batch still completes.
    pub result: std::result::Result<RunRecord, Error>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub sweep_param: Option<String>,
    pub cells: Vec<Cell>,
    pub outcomes: Vec<TrialOutcome>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment_with(spec, Execution::Parallel)
}

pub fn run_experiment_with(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = spec.cells()?;
    let mut jobs = Vec::new();
    for cell in &cells {
        for algo in &spec.algorithms {
            for trial in 0..spec.n_trials {
                jobs.push((cell, algo.as_str(), trial));
            }
        }
    }
    let run = |&(cell, algo, trial): &(&Cell, &str, u32)| {
        let seed = derive_seed(spec.base_seed, &[cell.index as u64, u64::from(trial)]);
        let mut env = Environment::new(cell.instance.clone(), seed);
        TrialOutcome {
            algorithm: algo.to_string(),
            sweep_index: cell.index,
            sweep_value: cell.sweep_value,
            trial,
            seed,
            result: run_algorithm(algo, &mut env, cell.eps, cell.delta, &spec.config),
        }
    };
    let outcomes: Vec<TrialOutcome> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => jobs.par_iter().map(run).collect(),
        _ => jobs.iter().map(run).collect(),
    };
    Ok(ExperimentOutput { sweep_param: spec.sweep.as_ref().map(|s| s.param.clone()), cells, outcomes })
}

/// One CSV line. Failed runs leave the arm and pull columns empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub algorithm: String,
    pub sweep_param: Option<String>,
    pub sweep_value: Option<f64>,
    pub trial: u32,
    pub seed: u64,
    pub returned_arm: Option<usize>,
    pub total_pulls: Option<u64>,
    pub pulls_safety: Option<u64>,
    pub pulls_optimality: Option<u64>,
    pub is_eps_good: bool,
    pub is_eps_safe: bool,
    pub wall_ms: Option<f64>,
}

impl ExperimentOutput {
    pub fn rows(&self) -> Vec<TrialRow> {
        self.outcomes
            .iter()
            .map(|o| {
                let r = o.result.as_ref().ok();
                TrialRow {
                    algorithm: o.algorithm.clone(),
                    sweep_param: self.sweep_param.clone(),
                    sweep_value: o.sweep_value,
                    trial: o.trial,
                    seed: o.seed,
                    returned_arm: r.map(|r| r.returned_arm),
                    total_pulls: r.map(|r| r.total_pulls),
                    pulls_safety: r.map(|r| r.pulls_safety),
                    pulls_optimality: r.map(|r| r.pulls_optimality),
                    is_eps_good: r.is_some_and(|r| r.is_eps_good),
                    is_eps_safe: r.is_some_and(|r| r.is_eps_safe),
                    wall_ms: r.map(|r| r.wall_ms),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.rows() {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = summarize(&self.outcomes);
        for row in &mut rows {
            row.lower_bound = self.cells.iter().find(|c| c.sweep_value == row.sweep_value).and_then(|c| c.lower_bound);
        }
        rows
    }

    /// Writes the trial CSV to `path` and the summary next to it as
    /// `<stem>.summary.csv`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
        self.write_csv(std::fs::File::create(path).map_err(io)?)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        let summary_path = path.with_file_name(format!("{stem}.summary.csv"));
        write_summary_csv(&self.summary(), std::fs::File::create(&summary_path).map_err(io)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub sweep_value: Option<f64>,
    pub n_trials: usize,
    pub n_failed: usize,
    pub mean_pulls: f64,
    pub median_pulls: f64,
    pub std_pulls: f64,
    /// `1 −` fraction of ε-good returns; failed runs count as errors.
    pub error_rate: f64,
    pub mean_wall_ms: f64,
    /// Mean pulls over the reference algorithm's mean pulls in the same cell.
    /// The reference is `beside` when present, otherwise the first algorithm.
    pub ratio_to_reference: Option<f64>,
    pub lower_bound: Option<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per (algorithm, sweep cell) statistics in first-appearance order. Pull
/// statistics use successful runs only; the standard deviation is the
/// sample one.
pub fn summarize(outcomes: &[TrialOutcome]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for o in outcomes {
        let k = (o.sweep_index, o.algorithm.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut rows: Vec<(usize, SummaryRow)> = keys
        .iter()
        .map(|&(cell, algo)| {
            let group: Vec<&TrialOutcome> =
                outcomes.iter().filter(|o| o.sweep_index == cell && o.algorithm == algo).collect();
            let ok: Vec<&RunRecord> = group.iter().filter_map(|o| o.result.as_ref().ok()).collect();
            let mut pulls: Vec<f64> = ok.iter().map(|r| r.total_pulls as f64).collect();
            pulls.sort_by(f64::total_cmp);
            let n_ok = pulls.len() as f64;
            let mean = pulls.iter().sum::<f64>() / n_ok;
            let var = if pulls.len() > 1 {
                pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n_ok - 1.0)
            } else {
                0.0
            };
            let good = ok.iter().filter(|r| r.is_eps_good).count();
            let row = SummaryRow {
                algorithm: algo.to_string(),
                sweep_value: group[0].sweep_value,
                n_trials: group.len(),
                n_failed: group.len() - ok.len(),
                mean_pulls: mean,
                median_pulls: median(&pulls),
                std_pulls: var.sqrt(),
                error_rate: 1.0 - good as f64 / group.len() as f64,
                mean_wall_ms: ok.iter().map(|r| r.wall_ms).sum::<f64>() / n_ok,
                ratio_to_reference: None,
                lower_bound: None,
            };
            (cell, row)
        })
        .collect();
    let reference = if keys.iter().any(|k| k.1 == "beside") { "beside".to_string() } else { keys[0].1.to_string() };
    let means: Vec<(usize, String, f64)> = rows.iter().map(|(c, r)| (*c, r.algorithm.clone(), r.mean_pulls)).collect();
    for (cell, row) in &mut rows {
        row.ratio_to_reference = means
            .iter()
            .find(|(c, a, _)| c == cell && *a == reference)
            .map(|(_, _, m)| row.mean_pulls / m)
            .filter(|r| r.is_finite());
    }
    rows.into_iter().map(|(_, r)| r).collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
