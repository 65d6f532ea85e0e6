use super::{argmax_by, check_eps_delta, AlgoConfig, Channel, Environment, Phase, RunRecord, Session};
use crate::design::xy_allocation;
use crate::error::{Error, Result};
use crate::geometry::{SimplexWeights, Vector};

pub(crate) struct ElimOutcome {
    pub active: Vec<usize>,
    pub optimal: Vec<usize>,
    /// Best estimated member of `optimal` in the last round that sampled.
    pub leader: usize,
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Samples for an elimination round: `max(⌈f·value·L/ε²⌉, ⌈4L⌉)`.
fn elim_budget(cfg: &AlgoConfig, value: f64, log_term: f64, eps_l: f64) -> u64 {
    let scaled = (cfg.elim_budget_factor * value * log_term / (eps_l * eps_l)).ceil();
    scaled.max((4.0 * log_term).ceil()) as u64
}

fn nonzero(v: &Vector) -> bool {
    v.iter().any(|x| *x != 0.0)
}

pub(crate) fn rage_elim_in(
    s: &mut Session,
    z: &[usize],
    y: &[usize],
    eps: f64,
    delta: f64,
    phase: Phase,
) -> Result<ElimOutcome> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("elimination needs a non-empty optimal set".into()));
    }
    let rounds = (1.0 / eps).log2().ceil().max(1.0) as u32;
    let (mut zs, mut ys) = (z.to_vec(), y.to_vec());
    let mut leader = ys[0];
    for l in 1..=rounds {
        let lf = l as f64;
        let eps_l = 0.5f64.powi(l as i32);
        let u = union(&zs, &ys);
        let mut targets = Vec::new();
        for &a in &u {
            for &b in &ys {
                let skip = a == b || (ys.contains(&a) && a > b);
                let t = &s.z[a] - &s.z[b];
                if !skip && nonzero(&t) {
                    targets.push(t);
                }
            }
        }
        if targets.is_empty() {
            break;
        }
        let (raw, value) = xy_allocation(&s.arms, &targets, &s.cfg.design)?;
        let lambda: SimplexWeights = raw.mix_uniform(s.cfg.design.mix);
        let n_u = u.len() as f64;
        let log_term = (4.0 * n_u * n_u * lf * lf / delta).ln();
        let tau = elim_budget(s.cfg, value, log_term, eps_l);
        let batch = s.draw(&lambda, tau, phase, l)?;
        let arms_z: Vec<Vector> = u.iter().map(|&i| s.z[i].clone()).collect();
        let dirs: Vec<&Vector> = arms_z.iter().collect();
        let theta = s.fit(&batch, Channel::Value, &lambda, &dirs, delta / (2.0 * lf * lf), "elim")?;
        let value_of = |i: usize| s.z[i].dot(&theta);
        leader = argmax_by(ys.iter().map(|&i| (i, value_of(i)))).expect("non-empty");
        let best = value_of(leader);
        zs.retain(|&i| best - value_of(i) <= eps_l);
        ys.retain(|&i| best - value_of(i) <= eps_l);
    }
    Ok(ElimOutcome { active: zs, optimal: ys, leader })
}

/// Phased elimination: keeps the arms of `z` and `y` whose estimated gap to
/// the best of `y` stays within the round tolerance `2^{−ℓ}`.
pub fn rage_elim(
    env: &mut Environment,
    z: &[usize],
    y: &[usize],
    eps: f64,
    delta: f64,
    cfg: &AlgoConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_eps_delta(eps, delta)?;
    let n = env.instance().z().len();
    if z.iter().chain(y).any(|i| *i >= n) {
        return Err(Error::InvalidArgument("arm index out of range".into()));
    }
    let mut s = Session::new(env, cfg)?;
    let out = rage_elim_in(&mut s, z, y, eps, delta, Phase::Optimality)?;
    Ok((out.active, out.optimal))
}

/// Elimination form of the safe search: each round sorts active arms into
/// still-uncertain, newly safe and discarded, then eliminates suboptimal arms
/// against the safe ones.
pub fn beside_elim(env: &mut Environment, eps: f64, delta: f64, cfg: &AlgoConfig) -> Result<(usize, RunRecord)> {
    check_eps_delta(eps, delta)?;
    let mut s = Session::new(env, cfg)?;
    let n = s.z.len();
    let m = s.m();
    let gamma = s.gamma();
    let rounds = (1.0 / eps).log2().ceil().max(1.0) as u32;
    let mut active: Vec<usize> = (0..n).collect();
    let mut safe: Vec<usize> = Vec::new();
    let mut eps_l = 1.0;
    for l in 1..=rounds {
        let lf = l as f64;
        eps_l = 0.5f64.powi(l as i32);
        let (mut still, mut fresh) = (Vec::new(), Vec::new());
        if !active.is_empty() {
            let arms_z: Vec<Vector> = active.iter().map(|&i| s.z[i].clone()).collect();
            let (raw, value) = xy_allocation(&s.arms, &arms_z, &s.cfg.design)?;
            let lambda = raw.mix_uniform(s.cfg.design.mix);
            let log_term = (4.0 * (m * active.len()) as f64 * lf * lf / delta).ln();
            let tau = elim_budget(s.cfg, value, log_term, eps_l);
            let batch = s.draw(&lambda, tau, Phase::Safety, l)?;
            let dirs: Vec<&Vector> = arms_z.iter().collect();
            let mut gap = vec![f64::INFINITY; active.len()];
            for i in 0..m {
                let mu = s.fit(&batch, Channel::Constraint(i), &lambda, &dirs, delta / (2.0 * m as f64 * lf * lf), "safety")?;
                for (g, v) in gap.iter_mut().zip(&arms_z) {
                    *g = g.min(gamma - v.dot(&mu));
                }
            }
            for (&i, &g) in active.iter().zip(&gap) {
                if g >= 2.0 * eps_l {
                    fresh.push(i);
                } else if g >= -eps_l {
                    still.push(i);
                }
            }
        }
        let optimal = union(&fresh, &safe);
        if optimal.is_empty() {
            active = still;
            safe = Vec::new();
        } else {
            let out = rage_elim_in(&mut s, &union(&still, &optimal), &optimal, eps_l, delta / (4.0 * lf * lf), Phase::Optimality)?;
            active = out.active.into_iter().filter(|i| !out.optimal.contains(i)).collect();
            safe = out.optimal;
        }
        if active.is_empty() && safe.is_empty() {
            return Err(Error::AllDiscarded);
        }
    }
    let last = union(&active, &safe);
    let out = rage_elim_in(&mut s, &last, &last, eps_l, delta, Phase::Optimality)?;
    let arm = out.leader;
    let (record, _) = s.finish("beside-elim", arm, eps, delta)?;
    Ok((arm, record))
}
