use serde::{Deserialize, Serialize};

use super::{argmax_by, check_eps_delta, AlgoConfig, Channel, Environment, Phase, PhaseBudget, Session};
use crate::design::{design_for_allocation, solve_design, xy_allocation, xy_diff_problem, Design, DesignProblem};
use crate::error::{Error, Result};
use crate::geometry::{positive_part, Vector};

/// How an allocation is chosen.
///
/// `Adaptive` solves the offset design. The other two fix the allocation to
/// the plain difference (`z − ŷ`) or plain safety (`z`) design and only let
/// the offsets decide the budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    Adaptive,
    DiffOnly,
    SafeOnly,
}

/// Result of a standalone gap-refinement run.
#[derive(Clone, Debug, PartialEq)]
pub struct RageReport {
    /// `Δ̂(z)` aligned with the `z` index list.
    pub delta_hat: Vec<f64>,
    /// Final incumbent, an index into the decision arms.
    pub y_hat: usize,
    /// One entry per round.
    pub phases: Vec<PhaseBudget>,
}

pub(crate) struct RageOutput {
    /// `Δ̂(z)` aligned with the `z` index list.
    pub delta_hat: Vec<f64>,
    pub y_hat: usize,
}

/// Design in one of the fixed-allocation modes. `diff_targets` and
/// `safe_targets` are the plain designs' targets.
pub(crate) fn mode_design(
    s: &Session,
    mode: DesignMode,
    problem: &DesignProblem,
    diff_targets: &[Vector],
    safe_targets: &[Vector],
) -> Result<Design> {
    let cfg = &s.cfg.design;
    match mode {
        DesignMode::Adaptive => solve_design(problem, &s.arms, cfg),
        DesignMode::DiffOnly | DesignMode::SafeOnly => {
            let targets = if mode == DesignMode::DiffOnly { diff_targets } else { safe_targets };
            let (raw, _) = xy_allocation(&s.arms, targets, cfg)?;
            design_for_allocation(problem, &s.arms, raw, cfg)
        }
    }
}

/// RAGE^ε inside a run. `z` and `y ⊆ z` are arm indices, `safe_neg[k]` is
/// `𝔭(−Δ̂_safe)` for `z[k]`, and `y0` is the starting incumbent.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rage_in(
    s: &mut Session,
    z: &[usize],
    y: &[usize],
    eps: f64,
    delta: f64,
    safe_neg: &[f64],
    y0: usize,
    mode: DesignMode,
    phase: Phase,
) -> Result<RageOutput> {
    if y.is_empty() || z.is_empty() {
        return Err(Error::InvalidArgument("RAGE needs non-empty Z and Y".into()));
    }
    if safe_neg.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: safe_neg.len() });
    }
    if !y.contains(&y0) {
        return Err(Error::InvalidArgument("initial incumbent must lie in Y".into()));
    }
    let k = s.cfg.constants.clone();
    let nz = z.len() as f64;
    let mut delta_hat = vec![0.0; z.len()];
    let mut y_hat = y0;
    let differences: Vec<Vector> = (0..z.len())
        .flat_map(|a| ((a + 1)..z.len()).map(move |b| (a, b)))
        .map(|(a, b)| &s.z[z[a]] - &s.z[z[b]])
        .filter(|w| w.iter().any(|v| *v != 0.0))
        .collect();
    if differences.is_empty() {
        // Every arm is the same vector; all gaps are zero.
        return Ok(RageOutput { delta_hat, y_hat });
    }
    let rounds = (2.0 / (k.c_f * eps)).log2().ceil().max(1.0) as u32;
    let zv: Vec<Vector> = z.iter().map(|&i| s.z[i].clone()).collect();
    for l in 1..=rounds {
        let lf = l as f64;
        let eps_l = 2.0 / k.c_f * 0.5f64.powi(l as i32);
        let log_term = (4.0 * nz * nz * lf * lf / delta).ln();
        let tau_min = (4.0 * log_term).ceil() as u64;
        let yv = s.z[y_hat].clone();
        let gaps: Vec<f64> = delta_hat.iter().map(|d| positive_part(*d)).collect();
        let problem = xy_diff_problem(&zv, &yv, safe_neg, &gaps, eps_l, k.c_a, log_term, tau_min, k.c_c * eps_l)?;
        let design = mode_design(s, mode, &problem, &problem.targets, &zv)?;
        let batch = s.draw_design(&design, phase, l)?;
        let dirs: Vec<&Vector> = differences.iter().collect();
        let theta = s.fit(&batch, Channel::Value, &design.lambda, &dirs, delta / (2.0 * lf * lf), "rage")?;
        let prec = s.arms.precision(design.lambda.as_slice(), s.cfg.design.ridge)?;
        let tau = design.tau as f64;
        let width = |a: &Vector, b: &Vector| -> Result<f64> { Ok((prec.quad(&(a - b))? * log_term / tau).sqrt()) };
        let prev = s.z[y_hat].clone();
        let mut scored = Vec::with_capacity(y.len());
        for &i in y {
            scored.push((i, s.z[i].dot(&theta) - k.yhat_bonus * width(&s.z[i], &prev)?));
        }
        y_hat = argmax_by(scored).expect("Y is non-empty");
        let best = &s.z[y_hat];
        for (d, &i) in delta_hat.iter_mut().zip(z) {
            *d = (best - &s.z[i]).dot(&theta) + width(&s.z[i], best)?;
        }
    }
    Ok(RageOutput { delta_hat, y_hat })
}

/// Gap estimates `Δ̂(z)` relative to the best arm of `y`, accurate to about
/// `c_f(ε + 𝔭(Δ(z)) + 𝔭(−Δ̂_safe(z)))`.
///
/// `z` and `y` index the instance's decision arms and `y` must be a subset
/// of `z`. `safe_neg_hat[k]` is the estimated safety violation of `z[k]`,
/// which lets the design spend less on arms already known to be unsafe.
pub fn rage_eps(
    env: &mut Environment,
    z: &[usize],
    y: &[usize],
    eps: f64,
    delta: f64,
    safe_neg_hat: &[f64],
    cfg: &AlgoConfig,
) -> Result<RageReport> {
    check_eps_delta(eps, delta)?;
    if z.iter().any(|i| *i >= env.instance().z().len()) || y.iter().any(|i| !z.contains(i)) {
        return Err(Error::InvalidArgument("Y must be a subset of Z and both must index decision arms".into()));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("Y must be non-empty".into()));
    }
    if safe_neg_hat.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: safe_neg_hat.len() });
    }
    let y0 = argmax_by(y.iter().map(|&i| (i, -safe_neg_hat[z.iter().position(|j| *j == i).unwrap()]))).unwrap();
    let mut s = Session::new(env, cfg)?;
    let out = rage_in(&mut s, z, y, eps, delta, safe_neg_hat, y0, DesignMode::Adaptive, Phase::Optimality)?;
    Ok(RageReport { delta_hat: out.delta_hat, y_hat: out.y_hat, phases: s.phases })
}
