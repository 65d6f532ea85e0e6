//! Information-theoretic lower bound for a single safety constraint.
//!
//! With Gaussian noise, the KL divergence of an alternative `(θ, μ)` under an
//! allocation `λ` is `½‖θ* − θ‖²_{A(λ)} + ½‖μ* − μ‖²_{A(λ)}`. An alternative
//! either makes the best safe arm `z*` unsafe or makes some other arm safe
//! and at least as good. [`alt_projection`] computes the smallest such
//! distance in closed form; [`alt_projection_qp`] and
//! [`alt_projection_numeric`] recompute it by independent routes.
//!
//! The safety threshold is the instance's `γ`; `α` is reserved for the
//! hard-instance parameter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{minimize_max, FwOptions, MaxTerms, Quadratics};
use crate::error::{Error, Result};
use crate::geometry::{info_matrix, positive_part, ArmSet, SimplexWeights, Vector, DEFAULT_RIDGE};
use crate::instances::{true_gaps, ProblemInstance};

/// Allocations inside the oracle are mixed with uniform by this much.
pub const ORACLE_MIX: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltProjection {
    /// `min_{(θ,μ) ∈ C_alt} ‖θ − θ*‖²_{A(λ)} + ‖μ − μ*‖²_{A(λ)}`.
    pub value: f64,
    /// The arm made safe and competitive, or `None` when flipping `z*` to
    /// unsafe is cheapest.
    pub witness_arm: Option<usize>,
}

fn single_constraint(inst: &ProblemInstance) -> Result<()> {
    if inst.m() != 1 {
        return Err(Error::Unsupported(format!("lower bound needs m = 1, got m = {}", inst.m())));
    }
    Ok(())
}

/// `p²/h`, with `0/0 = 0` (nothing to move) and `p²/0 = ∞` (cannot move).
fn ratio(p: f64, h: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if h <= 0.0 {
        f64::INFINITY
    } else {
        p * p / h
    }
}

fn mixed(lambda: &SimplexWeights, eta: f64) -> SimplexWeights {
    lambda.mix_uniform(eta)
}

/// Closed-form projection onto the alternative set at the `η`-mixed `λ`.
pub fn alt_projection(inst: &ProblemInstance, lambda: &SimplexWeights, eta: f64) -> Result<AltProjection> {
    single_constraint(inst)?;
    let arms = ArmSet::new(inst.x().to_vec())?;
    let prec = arms.precision(mixed(lambda, eta).as_slice(), DEFAULT_RIDGE)?;
    let star = true_gaps(inst)?.best_safe_arm;
    let (z, theta, mu, gamma) = (inst.z(), inst.theta_star(), &inst.mu_star()[0], inst.gamma());
    let zs = &z[star];
    let mut best = AltProjection { value: ratio(zs.dot(mu) - gamma, prec.quad(zs)?), witness_arm: None };
    for (i, zi) in z.iter().enumerate() {
        if i == star {
            continue;
        }
        let make_safe = ratio(positive_part(zi.dot(mu) - gamma), prec.quad(zi)?);
        let make_better = ratio(positive_part((zs - zi).dot(theta)), prec.quad(&(zi - zs))?);
        let v = make_safe + make_better;
        if v < best.value {
            best = AltProjection { value: v, witness_arm: Some(i) };
        }
    }
    Ok(best)
}

/// `p(Aκ* − b)ᵀ (AΓ⁻¹Aᵀ)⁻¹ p(Aκ* − b)` for `κ = [θ; μ]`, `Γ = I₂ ⊗ A(λ)`,
/// built and inverted as dense matrices. Zero rows are dropped when already
/// satisfied and make the branch infeasible otherwise.
fn qp_value(a_rows: &[DVector<f64>], b: &[f64], kappa: &DVector<f64>, gamma_inv: &DMatrix<f64>) -> f64 {
    let mut rows = Vec::new();
    let mut viol = Vec::new();
    for (r, bi) in a_rows.iter().zip(b) {
        let v = positive_part(r.dot(kappa) - bi);
        if r.iter().all(|x| *x == 0.0) {
            if v > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        rows.push(r.transpose());
        viol.push(v);
    }
    if rows.is_empty() {
        return 0.0;
    }
    let a = DMatrix::from_rows(&rows);
    let m = &a * gamma_inv * a.transpose();
    let v = DVector::from_vec(viol);
    match m.clone().cholesky() {
        Some(ch) => v.dot(&ch.solve(&v)),
        None => m.pseudo_inverse(1e-14).map(|pinv| v.dot(&(pinv * &v))).unwrap_or(f64::INFINITY),
    }
}

/// The projection evaluated branch by branch through the generic quadratic
/// program solution.
pub fn alt_projection_qp(inst: &ProblemInstance, lambda: &SimplexWeights, eta: f64) -> Result<f64> {
    single_constraint(inst)?;
    let d = inst.d();
    let info = info_matrix(&mixed(lambda, eta), inst.x(), DEFAULT_RIDGE)?;
    let mut gamma_mat = DMatrix::<f64>::zeros(2 * d, 2 * d);
    gamma_mat.view_mut((0, 0), (d, d)).copy_from(info.matrix());
    gamma_mat.view_mut((d, d), (d, d)).copy_from(info.matrix());
    let gamma_inv = gamma_mat.try_inverse().ok_or(Error::SingularDesign)?;
    let (theta, mu, gamma) = (inst.theta_star(), &inst.mu_star()[0], inst.gamma());
    let kappa = DVector::from_iterator(2 * d, theta.iter().chain(mu.iter()).copied());
    let lift = |top: Option<&Vector>, bottom: Option<&Vector>| {
        DVector::from_fn(2 * d, |k, _| match (k < d, top, bottom) {
            (true, Some(t), _) => t[k],
            (false, _, Some(b)) => b[k - d],
            _ => 0.0,
        })
    };
    let star = true_gaps(inst)?.best_safe_arm;
    let zs = &inst.z()[star];
    // Making z* unsafe: −z*ᵀμ ≤ −γ.
    let mut best = qp_value(&[lift(None, Some(&-zs))], &[-gamma], &kappa, &gamma_inv);
    for (i, zi) in inst.z().iter().enumerate() {
        if i == star {
            continue;
        }
        let rows = [lift(Some(&(zs - zi)), None), lift(None, Some(zi))];
        best = best.min(qp_value(&rows, &[0.0, gamma], &kappa, &gamma_inv));
    }
    Ok(best)
}

/// `min ‖x − x₀‖²_A` over the halfspace `{aᵀx ≤ b}` by accelerated projected
/// gradient with Euclidean projections. Uses no inverse of `A`.
fn halfspace_qp(a_mat: &DMatrix<f64>, x0: &DVector<f64>, a: &DVector<f64>, b: f64, iters: usize) -> f64 {
    let an = a.norm_squared();
    if a.dot(x0) <= b {
        return 0.0;
    }
    if an == 0.0 {
        return f64::INFINITY;
    }
    let project = |x: DVector<f64>| {
        let s = a.dot(&x) - b;
        if s > 0.0 { x - a * (s / an) } else { x }
    };
    let f = |x: &DVector<f64>| {
        let r = x - x0;
        r.dot(&(a_mat * &r))
    };
    let lip = 2.0 * a_mat.symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
    let mut x = project(x0.clone());
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = f(&x);
    for _ in 0..iters {
        let g = (a_mat * (&y - x0)) * 2.0;
        let xn = project(&y - g / lip);
        let fxn = f(&xn);
        if fxn > fx {
            // Restart momentum when the objective goes up.
            y = x.clone();
            t = 1.0;
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &xn + (&xn - &x) * ((t - 1.0) / tn);
        let done = (fx - fxn) <= 1e-16 * fx.max(1e-300) && (&xn - &x).norm() <= 1e-14 * (1.0 + x.norm());
        x = xn;
        fx = fxn;
        t = tn;
        if done {
            break;
        }
    }
    fx
}

/// Brute-force projection. Each branch splits into independent `θ` and `μ`
/// halfspace problems, solved numerically in the primal.
pub fn alt_projection_numeric(inst: &ProblemInstance, lambda: &SimplexWeights, eta: f64, iters: usize) -> Result<f64> {
    single_constraint(inst)?;
    let info = info_matrix(&mixed(lambda, eta), inst.x(), DEFAULT_RIDGE)?;
    let a = info.matrix();
    let (theta, mu, gamma) = (inst.theta_star(), &inst.mu_star()[0], inst.gamma());
    let star = true_gaps(inst)?.best_safe_arm;
    let zs = &inst.z()[star];
    let mut best = halfspace_qp(a, mu, &-zs, -gamma, iters);
    for (i, zi) in inst.z().iter().enumerate() {
        if i == star {
            continue;
        }
        let v = halfspace_qp(a, theta, &(zs - zi), 0.0, iters) + halfspace_qp(a, mu, zi, gamma, iters);
        best = best.min(v);
    }
    Ok(best)
}

/// `‖θ − θ*‖²_{A(λ)} + ‖μ − μ*‖²_{A(λ)}` for a given alternative.
pub fn alt_distance(inst: &ProblemInstance, lambda: &SimplexWeights, eta: f64, theta: &Vector, mu: &Vector) -> Result<f64> {
    single_constraint(inst)?;
    let info = info_matrix(&mixed(lambda, eta), inst.x(), 0.0)?;
    let a = info.matrix();
    let dt = theta - inst.theta_star();
    let dm = mu - &inst.mu_star()[0];
    Ok(dt.dot(&(a * &dt)) + dm.dot(&(a * &dm)))
}

/// Whether `(θ, μ)` lies in the closure of the alternative set, with
/// comparisons relaxed by `tol`.
pub fn in_alternative(inst: &ProblemInstance, theta: &Vector, mu: &Vector, tol: f64) -> Result<bool> {
    single_constraint(inst)?;
    let star = true_gaps(inst)?.best_safe_arm;
    let zs = &inst.z()[star];
    let gamma = inst.gamma();
    if zs.dot(mu) >= gamma - tol {
        return Ok(true);
    }
    Ok(inst.z().iter().enumerate().any(|(i, zi)| i != star && zi.dot(mu) <= gamma + tol && theta.dot(&(zs - zi)) <= tol))
}

/// Which expression of the bound to minimize over allocations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `max{ max_{z≠z*} min{‖z‖²/𝔭(−Δ_safe)², ‖z − z*‖²/𝔭(Δ)²}, ‖z*‖²/(z*ᵀμ* − γ)² }`.
    GapRatios,
    /// `2 / alt_projection`, the transportation quantity itself.
    Projection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbSolver {
    /// Frank-Wolfe restarted from several allocations.
    FrankWolfe,
    /// Exhaustive grid, two action arms only.
    Grid { points: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    /// `log(1/(2.4δ))` times `complexity`.
    pub value: f64,
    pub complexity: f64,
    pub lambda: SimplexWeights,
}

/// Per-arm numerators and squared gaps for the bound's terms.
struct BoundTerms<'a> {
    q: Quadratics<'a>,
    /// For arm term `k`: `(index of ‖z‖² target, 𝔭(−Δ_safe)², index of
    /// ‖z − z*‖² target, 𝔭(Δ)²)`.
    arms: Vec<(usize, f64, usize, f64)>,
    /// `(index of ‖z*‖² target, (z*ᵀμ* − γ)²)`.
    star: (usize, f64),
    form: BoundForm,
}

impl BoundTerms<'_> {
    /// Values with the partial derivatives `∂value/∂h_t` per target.
    fn eval(&self, h: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let mut vals = Vec::with_capacity(self.arms.len() + 1);
        let mut grads = Vec::with_capacity(self.arms.len() + 1);
        let (si, sg) = self.star;
        let scale = if self.form == BoundForm::Projection { 2.0 } else { 1.0 };
        vals.push(scale * h[si] / sg);
        grads.push(vec![(si, scale / sg)]);
        for &(zi, gs, di, gd) in &self.arms {
            match self.form {
                BoundForm::GapRatios => {
                    let a = if gs > 0.0 { h[zi] / gs } else { f64::INFINITY };
                    let b = if gd > 0.0 { h[di] / gd } else { f64::INFINITY };
                    if a <= b {
                        vals.push(a);
                        grads.push(vec![(zi, 1.0 / gs)]);
                    } else {
                        vals.push(b);
                        grads.push(vec![(di, 1.0 / gd)]);
                    }
                }
                BoundForm::Projection => {
                    let x = if gs > 0.0 { gs / h[zi] } else { 0.0 };
                    let y = if gd > 0.0 { gd / h[di] } else { 0.0 };
                    let s = x + y;
                    vals.push(2.0 / s);
                    let c = 2.0 / (s * s);
                    let mut g = Vec::new();
                    if gs > 0.0 {
                        g.push((zi, c * gs / (h[zi] * h[zi])));
                    }
                    if gd > 0.0 {
                        g.push((di, c * gd / (h[di] * h[di])));
                    }
                    grads.push(g);
                }
            }
        }
        (vals, grads)
    }
}

impl MaxTerms for BoundTerms<'_> {
    fn n_arms(&self) -> usize {
        self.q.arms.len()
    }

    fn values(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(&self.q.values(lambda)?).0)
    }

    fn weighted_grad(&self, lambda: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let h = self.q.values(lambda)?;
        let (_, grads) = self.eval(&h);
        let mut coefs = vec![0.0; h.len()];
        for (w, g) in weights.iter().zip(grads) {
            if *w == 0.0 {
                continue;
            }
            for (t, c) in g {
                coefs[t] += w * c;
            }
        }
        self.q.grad(lambda, &coefs)
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log(1/(2.4δ)) · min_λ max{…}` for the chosen form. Instances where some
/// term is infinite for every allocation (a tied competitor, or `z*` exactly
/// on the threshold) return `value = ∞`.
pub fn oracle_lower_bound(inst: &ProblemInstance, delta: f64, solver: LbSolver, form: BoundForm) -> Result<LowerBound> {
    oracle_lower_bound_mixed(inst, delta, solver, form, ORACLE_MIX)
}

/// [`oracle_lower_bound`] with allocations mixed with uniform by `eta`.
pub fn oracle_lower_bound_mixed(
    inst: &ProblemInstance,
    delta: f64,
    solver: LbSolver,
    form: BoundForm,
    eta: f64,
) -> Result<LowerBound> {
    single_constraint(inst)?;
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("mixing {eta} outside [0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0 / 2.4) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1/2.4)")));
    }
    let log_factor = (1.0 / (2.4 * delta)).ln();
    let gaps = true_gaps(inst)?;
    let star = gaps.best_safe_arm;
    let arm_set = ArmSet::new(inst.x().to_vec())?;
    let n = arm_set.len();
    let zs = &inst.z()[star];
    let star_gap = (zs.dot(&inst.mu_star()[0]) - inst.gamma()).powi(2);
    let infinite = |lambda| Ok(LowerBound { value: f64::INFINITY, complexity: f64::INFINITY, lambda });
    if star_gap == 0.0 {
        return infinite(SimplexWeights::uniform(n));
    }
    let mut targets: Vec<Vector> = vec![zs.clone()];
    let mut terms = Vec::new();
    for (i, zi) in inst.z().iter().enumerate() {
        if i == star {
            continue;
        }
        let gs = positive_part(-gaps.delta_safe[0][i]).powi(2);
        let gd = positive_part(gaps.delta[i]).powi(2);
        let diff = zi - zs;
        if gs == 0.0 && gd == 0.0 {
            return infinite(SimplexWeights::uniform(n));
        }
        if diff.iter().all(|v| *v == 0.0) && gs == 0.0 {
            return infinite(SimplexWeights::uniform(n));
        }
        targets.push(zi.clone());
        targets.push(diff);
        terms.push((targets.len() - 2, gs, targets.len() - 1, gd));
    }
    let obj = BoundTerms {
        q: Quadratics { arms: &arm_set, targets: targets.iter().collect(), mix: eta, ridge: DEFAULT_RIDGE },
        arms: terms,
        star: (0, star_gap),
        form,
    };
    let (lambda, complexity) = match solver {
        LbSolver::FrankWolfe => {
            let uniform = SimplexWeights::uniform(n);
            let mut starts = vec![uniform.as_slice().to_vec()];
            for k in 0..4.min(n) {
                starts.push(uniform.as_slice().iter().enumerate().map(|(i, u)| 0.5 * u + if i == k { 0.5 } else { 0.0 }).collect());
            }
            let opts = FwOptions { iters: 500, ..FwOptions::default() };
            let mut best: Option<(Vec<f64>, f64)> = None;
            for s in starts {
                let out = minimize_max(&obj, &s, &opts)?;
                if best.as_ref().is_none_or(|b| out.value < b.1) {
                    best = Some((out.lambda, out.value));
                }
            }
            best.expect("at least one start")
        }
        LbSolver::Grid { points } => {
            if n != 2 {
                return Err(Error::Unsupported("grid search needs exactly two action arms".into()));
            }
            let mut best = (vec![0.5, 0.5], f64::INFINITY);
            for k in 1..points {
                let l1 = k as f64 / points as f64;
                let lam = vec![l1, 1.0 - l1];
                let v = max_of(&obj.values(&lam)?);
                if v < best.1 {
                    best = (lam, v);
                }
            }
            best
        }
    };
    Ok(LowerBound { value: log_factor * complexity, complexity, lambda: SimplexWeights::normalized(lambda)? })
}
