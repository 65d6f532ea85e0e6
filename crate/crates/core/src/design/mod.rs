//! Experiment design with per-target tolerance offsets.
//!
//! A [`DesignProblem`] asks for an allocation `λ` over the action arms and a
//! power-of-two budget `τ` such that
//!
//! ```text
//! max_t [ −scale·o_t + sqrt(‖t‖²_{A(λ̃)⁻¹} · L / τ) ] ≤ threshold
//! ```
//!
//! where `λ̃` mixes `λ` with the uniform allocation. For a fixed `τ` the
//! allocation is found by Frank-Wolfe on the convex surrogate obtained from
//! `2√(xy) = min_{α>0} αx + y/α` with `α` restricted to a geometric grid.

mod frank_wolfe;

use serde::{Deserialize, Serialize};

pub(crate) use frank_wolfe::{minimize_max, FwOptions, MaxTerms};

use crate::error::{Error, Result};
use crate::geometry::{mix_slice, ArmSet, Precision, SimplexWeights, Vector, DEFAULT_MIX, DEFAULT_RIDGE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub fw_iters: usize,
    pub alpha_grid_points: usize,
    /// Uniform mixing weight `η`.
    pub mix: f64,
    pub ridge: f64,
    pub tau_cap_log2: u32,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { fw_iters: 200, alpha_grid_points: 25, mix: DEFAULT_MIX, ridge: DEFAULT_RIDGE, tau_cap_log2: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct DesignProblem {
    pub targets: Vec<Vector>,
    pub offsets: Vec<f64>,
    pub scale: f64,
    pub log_term: f64,
    pub threshold: f64,
    pub tau_min: u64,
}

impl DesignProblem {
    pub fn new(
        targets: Vec<Vector>,
        offsets: Vec<f64>,
        scale: f64,
        log_term: f64,
        threshold: f64,
        tau_min: u64,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("design needs at least one target".into()));
        }
        if offsets.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: targets.len(), got: offsets.len() });
        }
        if offsets.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(Error::InvalidArgument("offsets must be finite and nonnegative".into()));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} must be positive")));
        }
        if !(scale >= 0.0 && log_term > 0.0 && log_term.is_finite()) {
            return Err(Error::InvalidArgument("scale must be nonnegative and log_term positive".into()));
        }
        if tau_min == 0 {
            return Err(Error::InvalidArgument("tau_min must be at least 1".into()));
        }
        Ok(Self { targets, offsets, scale, log_term, threshold, tau_min })
    }

    /// Slack `threshold + scale·o_t` each target's width may use.
    fn budgets(&self) -> Vec<f64> {
        self.offsets.iter().map(|o| self.threshold + self.scale * o).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    /// The mixed allocation samples are drawn from.
    pub lambda: SimplexWeights,
    /// The allocation before uniform mixing.
    pub raw_lambda: SimplexWeights,
    pub tau: u64,
    pub achieved_objective: f64,
}

/// Exact design objective at a raw allocation.
pub fn design_objective(
    p: &DesignProblem,
    arms: &ArmSet,
    lambda: &SimplexWeights,
    tau: u64,
    cfg: &DesignConfig,
) -> Result<f64> {
    let prec = arms.precision(&mix_slice(lambda.as_slice(), cfg.mix), cfg.ridge)?;
    let mut worst = f64::NEG_INFINITY;
    for (t, o) in p.targets.iter().zip(&p.offsets) {
        let h = prec.quad(t)?;
        worst = worst.max(-p.scale * o + (h * p.log_term / tau as f64).sqrt());
    }
    Ok(worst)
}

/// Smallest real budget at which the raw allocation meets the threshold.
pub fn min_feasible_budget(p: &DesignProblem, arms: &ArmSet, lambda: &SimplexWeights, cfg: &DesignConfig) -> Result<f64> {
    let prec = arms.precision(&mix_slice(lambda.as_slice(), cfg.mix), cfg.ridge)?;
    let mut worst = 0.0_f64;
    for (t, b) in p.targets.iter().zip(p.budgets()) {
        worst = worst.max(prec.quad(t)? * p.log_term / (b * b));
    }
    Ok(worst)
}

fn is_zero(v: &Vector) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// Per-target `h_t = ‖t‖²_{A(λ̃)⁻¹}` and its gradient with respect to the raw
/// allocation, shared by the surrogate and the plain designs.
pub(crate) struct Quadratics<'a> {
    pub arms: &'a ArmSet,
    pub targets: Vec<&'a Vector>,
    pub mix: f64,
    pub ridge: f64,
}

impl Quadratics<'_> {
    fn precision(&self, lambda: &[f64]) -> Result<Precision> {
        self.arms.precision(&mix_slice(lambda, self.mix), self.ridge)
    }

    pub fn values(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let prec = self.precision(lambda)?;
        self.targets.iter().map(|t| prec.quad(t)).collect()
    }

    /// `Σ_t c_t ∇h_t` with `∂h_t/∂λ_x = −(1−η)(xᵀA⁻¹t)²`.
    pub fn grad(&self, lambda: &[f64], coefs: &[f64]) -> Result<Vec<f64>> {
        let prec = self.precision(lambda)?;
        let mut g = vec![0.0; self.arms.len()];
        for (t, c) in self.targets.iter().zip(coefs) {
            if *c == 0.0 {
                continue;
            }
            let u = prec.solve(t)?;
            for (x, gx) in g.iter_mut().enumerate() {
                let s = self.arms.dot(x, &u);
                *gx -= c * (1.0 - self.mix) * s * s;
            }
        }
        Ok(g)
    }
}

/// `max_t min_{α∈grid} [−scale·o_t + ½(α h_t + L/(α τ))]` over the nonzero
/// targets. The ½ makes the grid minimum equal `sqrt(h_t L/τ)` at the
/// optimal `α`.
struct Surrogate<'a> {
    q: Quadratics<'a>,
    shifts: Vec<f64>,
    log_over_tau: f64,
    alphas: Vec<f64>,
}

impl Surrogate<'_> {
    fn best_alpha(&self, h: f64) -> (f64, f64) {
        self.alphas
            .iter()
            .map(|a| (0.5 * (a * h + self.log_over_tau / a), *a))
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
    }
}

impl MaxTerms for Surrogate<'_> {
    fn n_arms(&self) -> usize {
        self.q.arms.len()
    }

    fn values(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q.values(lambda)?.into_iter().zip(&self.shifts).map(|(h, s)| s + self.best_alpha(h).0).collect())
    }

    fn weighted_grad(&self, lambda: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let hs = if weights.iter().any(|w| *w > 0.0) { self.q.values(lambda)? } else { vec![0.0; weights.len()] };
        let coefs: Vec<f64> =
            weights.iter().zip(&hs).map(|(w, h)| if *w == 0.0 { 0.0 } else { w * 0.5 * self.best_alpha(*h).1 }).collect();
        self.q.grad(lambda, &coefs)
    }
}

/// `max_t w_t h_t`.
struct Weighted<'a> {
    q: Quadratics<'a>,
    weights: Vec<f64>,
}

impl MaxTerms for Weighted<'_> {
    fn n_arms(&self) -> usize {
        self.q.arms.len()
    }

    fn values(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q.values(lambda)?.into_iter().zip(&self.weights).map(|(h, w)| w * h).collect())
    }

    fn weighted_grad(&self, lambda: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let coefs: Vec<f64> = weights.iter().zip(&self.weights).map(|(a, b)| a * b).collect();
        self.q.grad(lambda, &coefs)
    }
}

fn fw_options(cfg: &DesignConfig) -> FwOptions {
    FwOptions { iters: cfg.fw_iters, ..FwOptions::default() }
}

/// Minimizes `max_t ‖t‖²_{A(λ̃)⁻¹}` (the unweighted transductive design).
/// Returns the raw allocation and the optimal value.
pub fn xy_allocation(arms: &ArmSet, targets: &[Vector], cfg: &DesignConfig) -> Result<(SimplexWeights, f64)> {
    let nonzero: Vec<&Vector> = targets.iter().filter(|t| !is_zero(t)).collect();
    let n = arms.len();
    if nonzero.is_empty() {
        return Ok((SimplexWeights::uniform(n), 0.0));
    }
    let obj = Weighted { weights: vec![1.0; nonzero.len()], q: Quadratics { arms, targets: nonzero, mix: cfg.mix, ridge: cfg.ridge } };
    let out = minimize_max(&obj, SimplexWeights::uniform(n).as_slice(), &fw_options(cfg))?;
    Ok((SimplexWeights::normalized(out.lambda)?, out.value))
}

/// Geometric grid of `points` values spanning `[10⁻³, 10³]·center`.
pub fn alpha_grid(center: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![center];
    }
    (0..points).map(|k| center * 10f64.powf(-3.0 + 6.0 * k as f64 / (points - 1) as f64)).collect()
}

struct Solver<'a> {
    p: &'a DesignProblem,
    arms: &'a ArmSet,
    cfg: &'a DesignConfig,
    nonzero: Vec<usize>,
    uniform_hmax: f64,
    opts: FwOptions,
}

impl<'a> Solver<'a> {
    fn surrogate(&self, tau: u64) -> Surrogate<'a> {
        let log_over_tau = self.p.log_term / tau as f64;
        let center = (log_over_tau / self.uniform_hmax).sqrt();
        Surrogate {
            q: Quadratics {
                arms: self.arms,
                targets: self.nonzero.iter().map(|&i| &self.p.targets[i]).collect(),
                mix: self.cfg.mix,
                ridge: self.cfg.ridge,
            },
            shifts: self.nonzero.iter().map(|&i| -self.p.scale * self.p.offsets[i]).collect(),
            log_over_tau,
            alphas: alpha_grid(center, self.cfg.alpha_grid_points),
        }
    }

    /// Surrogate minimization at `τ = 2^j`, followed by the exact check.
    fn attempt(&self, j: u32, warm: &[f64]) -> Result<(SimplexWeights, f64)> {
        let tau = 1u64 << j;
        let out = minimize_max(&self.surrogate(tau), warm, &self.opts)?;
        let lambda = SimplexWeights::normalized(out.lambda)?;
        let exact = design_objective(self.p, self.arms, &lambda, tau, self.cfg)?;
        Ok((lambda, exact))
    }
}

fn ceil_log2(x: f64) -> u32 {
    if x <= 1.0 {
        0
    } else {
        x.log2().ceil() as u32
    }
}

/// Smallest power-of-two budget `τ ≥ tau_min` (with its allocation) whose
/// exact objective meets the threshold.
///
/// Feasibility is monotone in `τ`, so instead of visiting every doubling the
/// search gallops: an infeasible attempt at `2^j` still certifies the budget
/// its own allocation needs, which bounds the answer from above, and the gap
/// is closed by bisection over exponents.
pub fn solve_design(p: &DesignProblem, arms: &ArmSet, cfg: &DesignConfig) -> Result<Design> {
    for t in &p.targets {
        if t.len() != arms.dim() {
            return Err(Error::DimensionMismatch { expected: arms.dim(), got: t.len() });
        }
    }
    let n = arms.len();
    let uniform = SimplexWeights::uniform(n);
    let j0 = ceil_log2(p.tau_min as f64);
    let cap = cfg.tau_cap_log2;
    if j0 > cap {
        return Err(Error::BudgetExplosion { cap_log2: cap });
    }
    let nonzero: Vec<usize> = (0..p.targets.len()).filter(|&i| !is_zero(&p.targets[i])).collect();
    let finish = |raw: SimplexWeights, j: u32| -> Result<Design> {
        let tau = 1u64 << j;
        let achieved = design_objective(p, arms, &raw, tau, cfg)?;
        Ok(Design { lambda: raw.mix_uniform(cfg.mix), raw_lambda: raw, tau, achieved_objective: achieved })
    };
    if nonzero.is_empty() {
        return finish(uniform, j0);
    }
    let uprec = arms.precision(uniform.as_slice(), cfg.ridge)?;
    let mut uniform_hmax = 0.0_f64;
    for &i in &nonzero {
        uniform_hmax = uniform_hmax.max(uprec.quad(&p.targets[i])?);
    }
    let solver = Solver { p, arms, cfg, nonzero, uniform_hmax: uniform_hmax.max(f64::MIN_POSITIVE), opts: fw_options(cfg) };

    let (lam0, val0) = solver.attempt(j0, uniform.as_slice())?;
    if val0 <= p.threshold {
        return finish(lam0, j0);
    }
    let needed = |lam: &SimplexWeights| -> Result<u32> { Ok(ceil_log2(min_feasible_budget(p, arms, lam, cfg)?)) };
    let (mut lo, mut hi) = (j0, needed(&lam0)?.max(j0 + 1));
    let mut best = lam0;
    if hi > cap {
        // The first allocation may be poor; re-solve near the cap before giving up.
        let (lam, val) = solver.attempt(cap, best.as_slice())?;
        if val > p.threshold {
            return Err(Error::BudgetExplosion { cap_log2: cap });
        }
        hi = needed(&lam)?.clamp(j0 + 1, cap);
        best = lam;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (lam, val) = solver.attempt(mid, best.as_slice())?;
        if val <= p.threshold {
            hi = mid;
            best = lam;
        } else {
            let bound = needed(&lam)?;
            if bound < hi {
                hi = bound.max(mid + 1);
                best = lam;
            }
            lo = mid;
        }
    }
    // The exact check at τ/2 with the final allocation guards against an
    // earlier surrogate solve that stopped short.
    while hi > j0 && design_objective(p, arms, &best, 1u64 << (hi - 1), cfg)? <= p.threshold {
        hi -= 1;
    }
    let design = finish(best, hi)?;
    debug_assert!(design.achieved_objective <= p.threshold * (1.0 + 1e-12));
    Ok(design)
}

/// Smallest power-of-two budget `τ ≥ tau_min` meeting the threshold with the
/// allocation held fixed.
pub fn design_for_allocation(p: &DesignProblem, arms: &ArmSet, raw: SimplexWeights, cfg: &DesignConfig) -> Result<Design> {
    let needed = min_feasible_budget(p, arms, &raw, cfg)?;
    let mut j = ceil_log2(p.tau_min as f64).max(ceil_log2(needed));
    // Rounding in the closed form can leave the exact objective a hair above.
    while j <= cfg.tau_cap_log2 {
        let achieved = design_objective(p, arms, &raw, 1u64 << j, cfg)?;
        if achieved <= p.threshold {
            return Ok(Design { lambda: raw.mix_uniform(cfg.mix), raw_lambda: raw, tau: 1u64 << j, achieved_objective: achieved });
        }
        j += 1;
    }
    Err(Error::BudgetExplosion { cap_log2: cfg.tau_cap_log2 })
}

pub fn xy_safe_problem(
    z: &[Vector],
    c_of_z: &[f64],
    eps_l: f64,
    scale: f64,
    log_term: f64,
    tau_min: u64,
    threshold: f64,
) -> Result<DesignProblem> {
    if c_of_z.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: c_of_z.len() });
    }
    if c_of_z.iter().any(|c| *c < 0.0) {
        return Err(Error::InvalidArgument("tolerance terms must be nonnegative".into()));
    }
    DesignProblem::new(z.to_vec(), c_of_z.iter().map(|c| c + eps_l).collect(), scale, log_term, threshold, tau_min)
}

#[allow(clippy::too_many_arguments)]
pub fn xy_diff_problem(
    z: &[Vector],
    y_hat: &Vector,
    safe_neg: &[f64],
    opt_gap_pos: &[f64],
    eps_l: f64,
    scale: f64,
    log_term: f64,
    tau_min: u64,
    threshold: f64,
) -> Result<DesignProblem> {
    if safe_neg.len() != z.len() || opt_gap_pos.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: safe_neg.len().min(opt_gap_pos.len()) });
    }
    if safe_neg.iter().chain(opt_gap_pos).any(|c| *c < 0.0) {
        return Err(Error::InvalidArgument("tolerance terms must be nonnegative".into()));
    }
    let targets = z.iter().map(|zz| zz - y_hat).collect();
    let offsets = safe_neg.iter().zip(opt_gap_pos).map(|(a, b)| a + b + eps_l).collect();
    DesignProblem::new(targets, offsets, scale, log_term, threshold, tau_min)
}
