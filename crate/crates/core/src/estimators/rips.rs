use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::catoni::{psi_and_slope, solve_decreasing, CatoniConfig, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::geometry::{ArmSet, SimplexWeights, Vector, DEFAULT_RIDGE};

/// Scalar observations grouped by the arm that produced them, in pull order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observations {
    per_arm: Vec<Vec<f64>>,
    total: usize,
}

impl Observations {
    pub fn new(n_arms: usize) -> Self {
        Self { per_arm: vec![Vec::new(); n_arms], total: 0 }
    }

    pub fn from_pairs(n_arms: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut obs = Self::new(n_arms);
        for &(arm, v) in pairs {
            if arm >= n_arms {
                return Err(Error::InvalidArgument(format!("arm index {arm} out of range")));
            }
            obs.push(arm, v);
        }
        Ok(obs)
    }

    pub fn push(&mut self, arm: usize, value: f64) {
        self.per_arm[arm].push(value);
        self.total += 1;
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn n_arms(&self) -> usize {
        self.per_arm.len()
    }

    pub fn arm(&self, i: usize) -> &[f64] {
        &self.per_arm[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RipsConfig {
    /// Catoni variance bound is `variance_factor · ‖y‖²_{A⁻¹}`.
    pub variance_factor: f64,
    pub projection_iters: usize,
    pub root_tol: f64,
    pub ridge: f64,
}

impl Default for RipsConfig {
    fn default() -> Self {
        Self { variance_factor: 2.0, projection_iters: 500, root_tol: 1e-10, ridge: DEFAULT_RIDGE }
    }
}

#[derive(Clone, Debug)]
pub struct RipsEstimate {
    pub theta_hat: Vector,
    /// `‖y‖_{A⁻¹}·sqrt(8 log(2|Y|/δ)/T)` per direction.
    pub per_direction_width: Vec<f64>,
    /// Per-direction Catoni estimates `W^y`.
    pub catoni: Vec<f64>,
    /// `‖y‖_{A⁻¹}` per direction.
    pub direction_norms: Vec<f64>,
    /// `max_y |θ̂ᵀy − W^y| / ‖y‖_{A⁻¹}`.
    pub minimax_residual: f64,
}

pub fn min_samples(n_directions: usize, delta: f64) -> usize {
    (4.0 * (2.0 * n_directions as f64 / delta).ln()).ceil().max(1.0) as usize
}

/// Robust inverse-propensity estimate of `θ` from observations `r_t` at arms
/// `x_t ~ λ`, accurate along each direction in `directions`.
pub fn rips_estimate(
    obs: &Observations,
    lambda: &SimplexWeights,
    arms: &ArmSet,
    directions: &[Vector],
    delta: f64,
    cfg: &RipsConfig,
) -> Result<RipsEstimate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    if directions.is_empty() {
        return Err(Error::InvalidArgument("no estimation directions".into()));
    }
    if obs.n_arms() != arms.len() || lambda.len() != arms.len() {
        return Err(Error::DimensionMismatch { expected: arms.len(), got: obs.n_arms().min(lambda.len()) });
    }
    if let Some(y) = directions.iter().find(|y| y.len() != arms.dim()) {
        return Err(Error::DimensionMismatch { expected: arms.dim(), got: y.len() });
    }
    if directions.iter().any(|y| y.iter().all(|v| *v == 0.0)) {
        return Err(Error::InvalidArgument("zero direction has no defined width".into()));
    }
    let t = obs.total();
    let needed = min_samples(directions.len(), delta);
    if t < needed {
        return Err(Error::InsufficientSamples { needed, got: t });
    }
    let prec = arms.precision(lambda.as_slice(), cfg.ridge)?;
    let log_term = (2.0 * directions.len() as f64 / delta).ln();

    let per_dir = |y: &Vector| -> Result<(f64, f64)> {
        let u = prec.solve(y)?;
        let norm_sq = y.dot(&u).max(0.0);
        let alpha = (2.0 * log_term / (t as f64 * cfg.variance_factor * norm_sq)).sqrt();
        let catoni = CatoniConfig { alpha, root_tol: cfg.root_tol, max_iter: DEFAULT_MAX_ITER };
        let coefs: Vec<f64> = (0..arms.len()).map(|i| arms.dot(i, &u)).collect();
        Ok((weighted_root(obs, &coefs, &catoni), norm_sq.sqrt()))
    };

    #[cfg(feature = "parallel")]
    let solved: Vec<Result<(f64, f64)>> = {
        use rayon::prelude::*;
        directions.par_iter().map(per_dir).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let solved: Vec<Result<(f64, f64)>> = directions.iter().map(per_dir).collect();

    let mut catoni = Vec::with_capacity(directions.len());
    let mut norms = Vec::with_capacity(directions.len());
    for r in solved {
        let (w, n) = r?;
        catoni.push(w);
        norms.push(n);
    }
    let (theta_hat, minimax_residual) = minimax_projection(directions, &catoni, &norms, cfg.projection_iters);
    let scale = (8.0 * log_term / t as f64).sqrt();
    Ok(RipsEstimate {
        theta_hat,
        per_direction_width: norms.iter().map(|n| n * scale).collect(),
        catoni,
        direction_norms: norms,
        minimax_residual,
    })
}

/// Catoni root over the importance-weighted samples `c_x·r`. Arms with a zero
/// coefficient contribute `count·ψ(−αz)` in one term.
fn weighted_root(obs: &Observations, coefs: &[f64], cfg: &CatoniConfig) -> f64 {
    let mut zeros = 0usize;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (i, &c) in coefs.iter().enumerate() {
        let vals = obs.arm(i);
        if vals.is_empty() {
            continue;
        }
        if c == 0.0 {
            zeros += vals.len();
            continue;
        }
        for &r in vals {
            let s = c * r;
            lo = lo.min(s);
            hi = hi.max(s);
            sum += s;
        }
    }
    if zeros > 0 {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    let alpha = cfg.alpha;
    let mean = sum / obs.total() as f64;
    let active: Vec<(f64, &[f64])> =
        coefs.iter().enumerate().filter(|(i, c)| **c != 0.0 && !obs.arm(*i).is_empty()).map(|(i, c)| (*c, obs.arm(i))).collect();
    solve_decreasing(cfg, lo - 1.0 / alpha, hi + 1.0 / alpha, mean, |z| {
        let (mut f, mut slope) = (0.0, 0.0);
        for (c, vals) in &active {
            for &r in *vals {
                let (p, dp) = psi_and_slope(alpha * (c * r - z));
                f += p;
                slope += dp;
            }
        }
        if zeros > 0 {
            let (p, dp) = psi_and_slope(-alpha * z);
            f += zeros as f64 * p;
            slope += zeros as f64 * dp;
        }
        (f, -alpha * slope)
    })
}

/// Normalized rows `a_y = y/n_y`, `b_y = W^y/n_y`, stored sparsely.
struct Rows {
    idx: Vec<Vec<usize>>,
    val: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Rows {
    fn residual(&self, r: usize, theta: &[f64]) -> f64 {
        let dot: f64 = self.idx[r].iter().zip(&self.val[r]).map(|(k, v)| theta[*k] * v).sum();
        dot - self.rhs[r]
    }

    /// `(max |residual|, argmax, signed residual at argmax)`; ties → lowest index.
    fn worst(&self, theta: &[f64]) -> (f64, usize, f64) {
        let mut best = (f64::NEG_INFINITY, 0, 0.0);
        for r in 0..self.rhs.len() {
            let res = self.residual(r, theta);
            if res.abs() > best.0 {
                best = (res.abs(), r, res);
            }
        }
        best
    }
}

/// Least-squares fit of `yᵀθ ≈ W^y` with per-row weights, via pseudo-inverse
/// of the normal equations.
pub(crate) fn least_squares(directions: &[Vector], targets: &[f64], weights: &[f64]) -> Vector {
    let d = directions[0].len();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = Vector::zeros(d);
    for ((y, w), t) in directions.iter().zip(weights).zip(targets) {
        gram.syger(*w, y, y, 1.0);
        rhs.axpy(w * t, y, 1.0);
    }
    gram.fill_upper_triangle_with_lower_triangle();
    let max_diag = gram.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let svd = gram.svd(true, true);
    svd.solve(&rhs, 1e-12 * max_diag.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| Vector::zeros(d))
}

/// `argmin_θ max_y |θᵀy − W^y| / n_y` by normalized subgradient descent with
/// `1/√k` steps from the better of the plain and the normalized least-squares
/// fits, keeping the best iterate.
pub(crate) fn minimax_projection(directions: &[Vector], w: &[f64], norms: &[f64], iters: usize) -> (Vector, f64) {
    let d = directions[0].len();
    let mut rows = Rows { idx: Vec::new(), val: Vec::new(), rhs: Vec::new() };
    for ((y, wy), n) in directions.iter().zip(w).zip(norms) {
        let (idx, val): (Vec<usize>, Vec<f64>) =
            y.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k, v / n)).unzip();
        rows.idx.push(idx);
        rows.val.push(val);
        rows.rhs.push(wy / n);
    }
    let plain = least_squares(directions, w, &vec![1.0; directions.len()]);
    let inv_sq: Vec<f64> = norms.iter().map(|n| 1.0 / (n * n)).collect();
    let weighted = least_squares(directions, w, &inv_sq);
    let f_plain = rows.worst(plain.as_slice()).0;
    let f_weighted = rows.worst(weighted.as_slice()).0;
    let (mut theta, mut f) = if f_weighted < f_plain { (weighted, f_weighted) } else { (plain, f_plain) };
    let mut best = (theta.clone(), f);
    if f == 0.0 || iters == 0 {
        return best;
    }
    let (_, r0, _) = rows.worst(theta.as_slice());
    let row_norm0 = rows.val[r0].iter().map(|v| v * v).sum::<f64>().sqrt();
    let step0 = f / row_norm0.max(f64::MIN_POSITIVE);
    let mut grad = vec![0.0; d];
    for k in 1..=iters {
        let (_, r, res) = rows.worst(theta.as_slice());
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, v) in rows.idx[r].iter().zip(&rows.val[r]) {
            grad[*i] = res.signum() * v;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            break;
        }
        let step = step0 / (k as f64).sqrt() / gnorm;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
        f = rows.worst(theta.as_slice()).0;
        if f < best.1 {
            best = (theta.clone(), f);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn basis(d: usize) -> Vec<Vector> {
        (0..d).map(|i| Vector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })).collect()
    }

    #[test]
    fn zero_noise_zero_theta() {
        let arms = ArmSet::new(basis(3)).unwrap();
        let lambda = SimplexWeights::uniform(3);
        let mut obs = Observations::new(3);
        for t in 0..60 {
            obs.push(t % 3, 0.0);
        }
        let dirs = vec![Vector::from_vec(vec![1.0, 1.0, 0.0]), Vector::from_vec(vec![0.0, -1.0, 2.0])];
        let est = rips_estimate(&obs, &lambda, &arms, &dirs, 0.1, &RipsConfig::default()).unwrap();
        for (w, y) in est.catoni.iter().zip(&dirs) {
            assert!(w.abs() < 1e-9);
            assert!(est.theta_hat.dot(y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_noise_basis_within_width() {
        let theta = [0.3, -0.6, 0.9];
        let arms = ArmSet::new(basis(3)).unwrap();
        let lambda = SimplexWeights::uniform(3);
        let mut obs = Observations::new(3);
        for t in 0..300 {
            obs.push(t % 3, theta[t % 3]);
        }
        let dirs = basis(3);
        let est = rips_estimate(&obs, &lambda, &arms, &dirs, 0.05, &RipsConfig::default()).unwrap();
        for (j, y) in dirs.iter().enumerate() {
            let err = (est.theta_hat.dot(y) - theta[j]).abs();
            assert!(err <= est.per_direction_width[j], "direction {j}: {err}");
        }
        assert_relative_eq!(est.direction_norms[0], 3.0_f64.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn rejects_zero_direction_and_small_samples() {
        let arms = ArmSet::new(basis(2)).unwrap();
        let lambda = SimplexWeights::uniform(2);
        let obs = Observations::from_pairs(2, &[(0, 1.0), (1, 1.0)]).unwrap();
        let cfg = RipsConfig::default();
        let zero = vec![Vector::zeros(2)];
        assert!(matches!(rips_estimate(&obs, &lambda, &arms, &zero, 0.1, &cfg), Err(Error::InvalidArgument(_))));
        let dirs = basis(2);
        assert!(matches!(
            rips_estimate(&obs, &lambda, &arms, &dirs, 0.1, &cfg),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn projection_exact_when_consistent() {
        let dirs = vec![
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::from_vec(vec![1.0, 1.0]),
        ];
        let w = vec![0.5, -0.25, 0.25];
        let (theta, f) = minimax_projection(&dirs, &w, &[1.0, 1.0, 1.5], 500);
        assert!(f < 1e-12);
        assert_relative_eq!(theta[0], 0.5, epsilon = 1e-12);
    }
}
