use serde::{Deserialize, Serialize};

use super::rage::{mode_design, rage_in, DesignMode};
use super::{argmax_by, check_eps_delta, AlgoConfig, Channel, ConfidenceLedger, Environment, Phase, RunRecord, Session};
use crate::design::{xy_safe_problem, Design};
use crate::error::Result;
use crate::geometry::{positive_part, Vector};

/// Estimates at the end of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub round: u32,
    pub eps_l: f64,
    pub delta_hat: Vec<f64>,
    /// `[constraint][arm]`.
    pub delta_safe_hat: Vec<Vec<f64>>,
    /// Membership in the certified-safe set `Y_ℓ`.
    pub safe_set_flags: Vec<bool>,
    /// Safety design of the round; `None` for round zero.
    pub design_used: Option<Design>,
}

/// Everything a traced run exposes beyond its record.
#[derive(Clone, Debug)]
pub struct BesideTrace {
    pub tables: Vec<GapTable>,
    pub y_end: Vec<usize>,
    pub confidence: ConfidenceLedger,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    XyDiffOnly,
    XySafeOnly,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::XyDiffOnly => "xy-diff-only",
            Ablation::XySafeOnly => "xy-safe-only",
        }
    }

    fn mode(self) -> DesignMode {
        match self {
            Ablation::XyDiffOnly => DesignMode::DiffOnly,
            Ablation::XySafeOnly => DesignMode::SafeOnly,
        }
    }
}

/// `min_j |Δ̂_safe^j| + max_j 𝔭(−Δ̂_safe^j) + 𝔭(Δ̂)` per arm.
fn tolerance_terms(ds: &[Vec<f64>], dh: &[f64]) -> Vec<f64> {
    (0..dh.len())
        .map(|z| {
            let min_abs = ds.iter().map(|row| row[z].abs()).fold(f64::INFINITY, f64::min);
            min_abs + safe_violation(ds, z) + positive_part(dh[z])
        })
        .collect()
}

/// `max_j 𝔭(−Δ̂_safe^j(z))`.
fn safe_violation(ds: &[Vec<f64>], z: usize) -> f64 {
    ds.iter().map(|row| positive_part(-row[z])).fold(0.0, f64::max)
}

fn min_safety(ds: &[Vec<f64>], z: usize) -> f64 {
    ds.iter().map(|row| row[z]).fold(f64::INFINITY, f64::min)
}

/// `κ c_d c(z) + κ(c_d + c_e)ε − slack ≤ Δ̂_safe^i(z)` for every constraint.
fn passes_inclusion(cfg: &AlgoConfig, c: f64, eps: f64, slack: f64, ds: &[Vec<f64>], z: usize) -> bool {
    let k = &cfg.constants;
    let lhs = k.kappa_safe * k.c_d * c + k.kappa_safe * (k.c_d + k.c_e) * eps - slack;
    ds.iter().all(|row| lhs <= row[z])
}

fn run(
    env: &mut Environment,
    eps: f64,
    delta: f64,
    cfg: &AlgoConfig,
    mode: DesignMode,
    name: &str,
) -> Result<(usize, RunRecord, BesideTrace)> {
    check_eps_delta(eps, delta)?;
    let mut s = Session::new(env, cfg)?;
    let k = cfg.constants.clone();
    let n = s.z.len();
    let m = s.m();
    let gamma = s.gamma();
    let all: Vec<usize> = (0..n).collect();
    let rounds = (k.eps0() / eps).log2().ceil().max(1.0) as u32;

    let mut ds = vec![vec![0.0; n]; m];
    let mut dh = vec![0.0; n];
    let mut in_y = vec![false; n];
    let mut incumbent = 0usize;
    let mut tables = vec![GapTable {
        round: 0,
        eps_l: k.eps0(),
        delta_hat: dh.clone(),
        delta_safe_hat: ds.clone(),
        safe_set_flags: in_y.clone(),
        design_used: None,
    }];

    for l in 1..=rounds {
        let lf = l as f64;
        let eps_l = k.eps0() * 0.5f64.powi(l as i32);
        let c_prev = tolerance_terms(&ds, &dh);

        // Safety design and estimates.
        let log_term = (4.0 * (m * n) as f64 * lf * lf / delta).ln();
        let tau_min = (4.0 * log_term).ceil() as u64;
        let problem = xy_safe_problem(&s.z, &c_prev, eps_l, k.c_d, log_term, tau_min, k.c_e * eps_l)?;
        let diff: Vec<Vector> = s.z.iter().map(|zz| zz - &s.z[incumbent]).collect();
        let design = mode_design(&s, mode, &problem, &diff, &s.z)?;
        let batch = s.draw_design(&design, Phase::Safety, l)?;
        let prec = s.arms.precision(design.lambda.as_slice(), cfg.design.ridge)?;
        let tau = design.tau as f64;
        let mut widths = Vec::with_capacity(n);
        for zz in &s.z {
            widths.push((prec.quad(zz)? * log_term / tau).sqrt());
        }
        let arms_z = s.z.clone();
        let dirs: Vec<&Vector> = arms_z.iter().collect();
        for (i, row) in ds.iter_mut().enumerate() {
            let mu = s.fit(&batch, Channel::Constraint(i), &design.lambda, &dirs, delta / (2.0 * (m as f64) * lf * lf), "safety")?;
            for (zi, v) in row.iter_mut().enumerate() {
                *v = gamma - dirs[zi].dot(&mu) + widths[zi];
            }
        }
        for z in 0..n {
            if !in_y[z] && passes_inclusion(cfg, c_prev[z], eps_l, 0.0, &ds, z) {
                in_y[z] = true;
            }
        }

        // Optimality gaps against the certified-safe arms.
        let y: Vec<usize> = (0..n).filter(|&z| in_y[z]).collect();
        if !y.is_empty() {
            let safe_neg: Vec<f64> = (0..n).map(|z| safe_violation(&ds, z)).collect();
            let y0 = argmax_by(y.iter().map(|&z| (z, min_safety(&ds, z)))).expect("non-empty");
            let out = rage_in(&mut s, &all, &y, eps_l, delta / (4.0 * lf * lf), &safe_neg, y0, mode, Phase::Optimality)?;
            dh = out.delta_hat;
            incumbent = out.y_hat;
        }
        tables.push(GapTable {
            round: l,
            eps_l,
            delta_hat: dh.clone(),
            delta_safe_hat: ds.clone(),
            safe_set_flags: in_y.clone(),
            design_used: Some(design),
        });
    }

    // Arms at most ε-unsafe, then the best of them.
    let c_end = tolerance_terms(&ds, &dh);
    let mut y_end: Vec<usize> = (0..n).filter(|&z| passes_inclusion(cfg, c_end[z], eps, k.c_g * eps, &ds, z)).collect();
    if y_end.is_empty() {
        y_end = (0..n).filter(|&z| in_y[z]).collect();
    }
    if y_end.is_empty() {
        y_end = vec![argmax_by((0..n).map(|z| (z, min_safety(&ds, z)))).expect("Z is non-empty")];
    }
    let safe_neg: Vec<f64> = y_end.iter().map(|&z| safe_violation(&ds, z)).collect();
    let y0 = argmax_by(y_end.iter().map(|&z| (z, min_safety(&ds, z)))).expect("non-empty");
    let out = rage_in(&mut s, &y_end, &y_end, eps, delta, &safe_neg, y0, mode, Phase::Optimality)?;
    let pick = argmax_by(out.delta_hat.iter().enumerate().map(|(k, d)| (k, -d))).expect("non-empty");
    let arm = y_end[pick];
    let (record, confidence) = s.finish(name, arm, eps, delta)?;
    Ok((arm, record, BesideTrace { tables, y_end, confidence }))
}

/// Returns an arm that is ε-safe and ε-good with probability at least
/// `1 − 2δ` under the reference constants.
pub fn beside(env: &mut Environment, eps: f64, delta: f64, cfg: &AlgoConfig) -> Result<(usize, RunRecord)> {
    let (arm, record, _) = run(env, eps, delta, cfg, DesignMode::Adaptive, "beside")?;
    Ok((arm, record))
}

pub fn beside_traced(env: &mut Environment, eps: f64, delta: f64, cfg: &AlgoConfig) -> Result<(usize, RunRecord, BesideTrace)> {
    run(env, eps, delta, cfg, DesignMode::Adaptive, "beside")
}

/// The same loop with every allocation fixed to one plain design. Budgets
/// still follow the adaptive stopping rules.
pub fn single_design_ablation(
    env: &mut Environment,
    eps: f64,
    delta: f64,
    which: Ablation,
    cfg: &AlgoConfig,
) -> Result<(usize, RunRecord)> {
    let (arm, record, _) = run(env, eps, delta, cfg, which.mode(), which.name())?;
    Ok((arm, record))
}
