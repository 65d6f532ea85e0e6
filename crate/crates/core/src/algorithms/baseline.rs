use super::elim::rage_elim_in;
use super::{argmax_by, check_eps_delta, AlgoConfig, Channel, Environment, Phase, RunRecord, Session};
use crate::design::{solve_design, xy_safe_problem};
use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Doubling rounds allowed before the safety stage gives up.
const MAX_SAFETY_ROUNDS: u32 = 60;

/// Two-stage reference strategy: resolve every arm's safety first, then find
/// the best arm among those classified safe.
///
/// Stage one repeats the plain safety design over the unresolved arms with
/// the width target halving each round. An arm is resolved once, for every
/// constraint, its width is at most `max(r·ε, |Δ̂_safe|/2)` with
/// `r = baseline_resolution`, and it counts as safe unless some constraint's
/// upper confidence bound `Δ̂_safe + width` is negative. Stage two runs
/// elimination over the safe arms with confidence `δ/2`.
pub fn baseline(env: &mut Environment, eps: f64, delta: f64, cfg: &AlgoConfig) -> Result<(usize, RunRecord)> {
    check_eps_delta(eps, delta)?;
    let mut s = Session::new(env, cfg)?;
    let n = s.z.len();
    let m = s.m();
    let gamma = s.gamma();
    let tolerance = cfg.baseline_resolution * eps;
    let mut unresolved: Vec<usize> = (0..n).collect();
    let mut safe = Vec::new();
    // Upper bound on min_i Δ_safe^i per arm, for the fallback.
    let mut optimistic = vec![f64::NEG_INFINITY; n];
    let mut k = 0u32;
    while !unresolved.is_empty() {
        k += 1;
        if k > MAX_SAFETY_ROUNDS {
            return Err(Error::BudgetExplosion { cap_log2: MAX_SAFETY_ROUNDS });
        }
        let kf = k as f64;
        let target = 0.5f64.powi(k as i32);
        let arms_z: Vec<Vector> = unresolved.iter().map(|&i| s.z[i].clone()).collect();
        let log_term = (8.0 * (m * n) as f64 * kf * kf / delta).ln();
        let tau_min = (4.0 * log_term).ceil() as u64;
        let zeros = vec![0.0; arms_z.len()];
        let problem = xy_safe_problem(&arms_z, &zeros, 0.0, 0.0, log_term, tau_min, target)?;
        let design = solve_design(&problem, &s.arms, &cfg.design)?;
        let batch = s.draw_design(&design, Phase::Safety, k)?;
        let prec = s.arms.precision(design.lambda.as_slice(), cfg.design.ridge)?;
        let mut widths = Vec::with_capacity(arms_z.len());
        for v in &arms_z {
            widths.push((prec.quad(v)? * log_term / design.tau as f64).sqrt());
        }
        let dirs: Vec<&Vector> = arms_z.iter().collect();
        let mut resolved = vec![true; arms_z.len()];
        let mut upper = vec![f64::INFINITY; arms_z.len()];
        for i in 0..m {
            let mu = s.fit(&batch, Channel::Constraint(i), &design.lambda, &dirs, delta / (4.0 * m as f64 * kf * kf), "safety")?;
            for (a, v) in arms_z.iter().enumerate() {
                let p = gamma - v.dot(&mu);
                resolved[a] &= widths[a] <= tolerance.max(p.abs() / 2.0);
                upper[a] = upper[a].min(p + widths[a]);
            }
        }
        let mut next = Vec::new();
        for (a, &i) in unresolved.iter().enumerate() {
            optimistic[i] = upper[a];
            if !resolved[a] {
                next.push(i);
            } else if upper[a] >= 0.0 {
                safe.push(i);
            }
        }
        unresolved = next;
    }
    safe.sort_unstable();
    let arm = if safe.is_empty() {
        argmax_by(optimistic.iter().copied().enumerate()).expect("Z is non-empty")
    } else {
        rage_elim_in(&mut s, &safe, &safe, eps, delta / 2.0, Phase::Optimality)?.leader
    };
    let (record, _) = s.finish("baseline", arm, eps, delta)?;
    Ok((arm, record))
}
