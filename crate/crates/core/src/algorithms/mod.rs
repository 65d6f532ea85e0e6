//! Adaptive algorithms for ε-safe, ε-good arm identification.
//!
//! Every algorithm runs in rounds of the same shape: solve a design, draw its
//! budget of pulls from one [`Environment`], then fit robust estimates on those
//! pulls only. Rounds never reuse samples. Every budget is booked into the
//! [`RunRecord`] and every confidence level into a [`ConfidenceLedger`].
//!
//! Arms in `Z` are referred to by index throughout. Value is maximized, so
//! `Δ(z) = θ*ᵀ(z* − z)` and a positive safety gap means safe.

mod baseline;
mod beside;
mod constants;
mod elim;
mod env;
mod rage;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use baseline::baseline;
pub use beside::{beside, beside_traced, single_design_ablation, Ablation, BesideTrace, GapTable};
pub use constants::{ConstantsLedger, ConstraintCheck};
pub use elim::{beside_elim, rage_elim};
pub use env::{Batch, Channel, Environment};
pub use rage::{rage_eps, DesignMode, RageReport};

use crate::design::{Design, DesignConfig};
use crate::error::{Error, Result};
use crate::estimators::{rips_estimate, RipsConfig};
use crate::geometry::{ArmSet, SimplexWeights, Vector};
use crate::instances::{eps_good_set, is_eps_safe};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    pub constants: ConstantsLedger,
    pub design: DesignConfig,
    pub rips: RipsConfig,
    /// Baseline safety widths count as resolved below this multiple of `ε`.
    pub baseline_resolution: f64,
    /// `τ = factor · design value · L / ε_ℓ²` in the elimination variants.
    pub elim_budget_factor: f64,
    /// Hard cap on pulls per run.
    pub max_pulls: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            constants: ConstantsLedger::practical(),
            design: DesignConfig::default(),
            rips: RipsConfig::default(),
            baseline_resolution: 0.25,
            elim_budget_factor: 4.0,
            max_pulls: 200_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Safety,
    Optimality,
}

/// One sampling step: `tau` pulls certified by a design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBudget {
    pub phase: Phase,
    pub round: u32,
    pub tau: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub returned_arm: usize,
    pub total_pulls: u64,
    pub pulls_safety: u64,
    pub pulls_optimality: u64,
    pub eps: f64,
    pub delta: f64,
    pub is_eps_good: bool,
    pub is_eps_safe: bool,
    pub seed: u64,
    pub wall_ms: f64,
    pub phases: Vec<PhaseBudget>,
}

impl RunRecord {
    pub fn phase_total(&self) -> u64 {
        self.phases.iter().map(|p| p.tau).sum()
    }
}

/// Union-bound bookkeeping: each estimate that must hold charges its failure
/// probability here.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfidenceLedger {
    charges: Vec<(&'static str, f64)>,
}

impl ConfidenceLedger {
    pub fn charge(&mut self, label: &'static str, delta: f64) -> f64 {
        self.charges.push((label, delta));
        delta
    }

    pub fn total(&self) -> f64 {
        self.charges.iter().map(|c| c.1).sum()
    }

    pub fn charges(&self) -> &[(&'static str, f64)] {
        &self.charges
    }
}

pub(crate) fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Per-run state shared by the subroutines.
pub(crate) struct Session<'a> {
    pub env: &'a mut Environment,
    pub cfg: &'a AlgoConfig,
    pub arms: ArmSet,
    pub z: Vec<Vector>,
    pub phases: Vec<PhaseBudget>,
    pub confidence: ConfidenceLedger,
    started: Instant,
    pulls_before: u64,
}

impl<'a> Session<'a> {
    pub fn new(env: &'a mut Environment, cfg: &'a AlgoConfig) -> Result<Self> {
        let arms = ArmSet::new(env.instance().x().to_vec())?;
        let z = env.instance().z().to_vec();
        let pulls_before = env.pulls();
        Ok(Self {
            env,
            cfg,
            arms,
            z,
            phases: Vec::new(),
            confidence: ConfidenceLedger::default(),
            started: Instant::now(),
            pulls_before,
        })
    }

    pub fn m(&self) -> usize {
        self.env.instance().m()
    }

    pub fn gamma(&self) -> f64 {
        self.env.instance().gamma()
    }

    pub fn draw(&mut self, lambda: &SimplexWeights, tau: u64, phase: Phase, round: u32) -> Result<Batch> {
        let cap = self.cfg.max_pulls;
        if (self.env.pulls() - self.pulls_before).saturating_add(tau) > cap {
            return Err(Error::PullCap { cap });
        }
        let batch = self.env.sample(lambda, tau)?;
        self.phases.push(PhaseBudget { phase, round, tau });
        Ok(batch)
    }

    pub fn draw_design(&mut self, design: &Design, phase: Phase, round: u32) -> Result<Batch> {
        self.draw(&design.lambda, design.tau, phase, round)
    }

    /// RIPS fit of one channel along `directions`. Zero directions carry no
    /// information and are skipped; if nothing is left the estimate is zero.
    pub fn fit(
        &mut self,
        batch: &Batch,
        channel: Channel,
        lambda: &SimplexWeights,
        directions: &[&Vector],
        delta: f64,
        label: &'static str,
    ) -> Result<Vector> {
        let dirs: Vec<Vector> = directions.iter().filter(|v| v.iter().any(|x| *x != 0.0)).map(|v| (*v).clone()).collect();
        if dirs.is_empty() {
            return Ok(Vector::zeros(self.arms.dim()));
        }
        let delta = self.confidence.charge(label, delta);
        Ok(rips_estimate(batch.channel(channel), lambda, &self.arms, &dirs, delta, &self.cfg.rips)?.theta_hat)
    }

    pub fn finish(self, algorithm: &str, arm: usize, eps: f64, delta: f64) -> Result<(RunRecord, ConfidenceLedger)> {
        let inst = self.env.instance();
        let is_eps_good = eps_good_set(inst, eps)?.contains(&arm);
        let is_eps_safe = is_eps_safe(inst, arm, eps);
        let sum = |ph: Phase| self.phases.iter().filter(|p| p.phase == ph).map(|p| p.tau).sum::<u64>();
        let record = RunRecord {
            algorithm: algorithm.to_string(),
            returned_arm: arm,
            total_pulls: self.env.pulls() - self.pulls_before,
            pulls_safety: sum(Phase::Safety),
            pulls_optimality: sum(Phase::Optimality),
            eps,
            delta,
            is_eps_good,
            is_eps_safe,
            seed: self.env.seed(),
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
            phases: self.phases,
        };
        debug_assert_eq!(record.total_pulls, record.phase_total());
        Ok((record, self.confidence))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_by<I: IntoIterator<Item = (usize, f64)>>(items: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        if best.is_none_or(|b| v > b.1) {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_by([(3, 1.0), (1, 2.0), (0, 2.0)]), Some(1));
        assert_eq!(argmax_by(std::iter::empty()), None);
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = AlgoConfig::default();
        let back: AlgoConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
        let partial: AlgoConfig = serde_json::from_str(r#"{"max_pulls": 10}"#).unwrap();
        assert_eq!(partial.max_pulls, 10);
    }
}
