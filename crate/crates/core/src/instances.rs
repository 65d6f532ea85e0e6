//! Problem instances, ground-truth gaps, and the synthetic generators.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Slack used when comparing values and safety margins against thresholds so
/// that exact ties are not lost to rounding.
const CMP_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    x: Vec<Vector>,
    z: Vec<Vector>,
    theta_star: Vector,
    mu_star: Vec<Vector>,
    gamma: f64,
    noise_sigma: f64,
}

impl ProblemInstance {
    /// Validates dimensions and rejects instances without a safe decision arm.
    pub fn new(
        x: Vec<Vector>,
        z: Vec<Vector>,
        theta_star: Vector,
        mu_star: Vec<Vector>,
        gamma: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if x.is_empty() || z.is_empty() || mu_star.is_empty() {
            return Err(Error::InvalidArgument("X, Z and the constraint set must be non-empty".into()));
        }
        let d = theta_star.len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        for v in x.iter().chain(&z).chain(&mu_star) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        let all_finite = x
            .iter()
            .chain(&z)
            .chain(&mu_star)
            .chain(std::iter::once(&theta_star))
            .all(|v| v.iter().all(|e| e.is_finite()));
        if !all_finite || !gamma.is_finite() {
            return Err(Error::InvalidArgument("non-finite instance entry".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sigma {noise_sigma} must be finite and nonnegative")));
        }
        let inst = Self { x, z, theta_star, mu_star, gamma, noise_sigma };
        true_gaps(&inst)?;
        Ok(inst)
    }

    pub fn x(&self) -> &[Vector] {
        &self.x
    }

    pub fn z(&self) -> &[Vector] {
        &self.z
    }

    pub fn theta_star(&self) -> &Vector {
        &self.theta_star
    }

    pub fn mu_star(&self) -> &[Vector] {
        &self.mu_star
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn d(&self) -> usize {
        self.theta_star.len()
    }

    pub fn m(&self) -> usize {
        self.mu_star.len()
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sigma {sigma} must be finite and nonnegative")));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// Minimum safety gap `min_i (γ − μ_iᵀz)` of an arbitrary vector.
    pub fn min_safety_gap(&self, z: &Vector) -> f64 {
        self.mu_star.iter().map(|mu| self.gamma - mu.dot(z)).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<InstanceFile>(s)?.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// JSON interchange form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub d: usize,
    pub m: usize,
    pub gamma: f64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub mu_star: Vec<Vec<f64>>,
}

fn default_sigma() -> f64 {
    1.0
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(p: &ProblemInstance) -> Self {
        let rows = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
        Self {
            d: p.d(),
            m: p.m(),
            gamma: p.gamma,
            noise_sigma: p.noise_sigma,
            x: rows(&p.x),
            z: rows(&p.z),
            theta_star: p.theta_star.iter().copied().collect(),
            mu_star: rows(&p.mu_star),
        }
    }
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let vecs = |rows: Vec<Vec<f64>>| rows.into_iter().map(Vector::from_vec).collect::<Vec<_>>();
        let (x, z, mu) = (vecs(f.x), vecs(f.z), vecs(f.mu_star));
        if f.theta_star.len() != f.d {
            return Err(Error::DimensionMismatch { expected: f.d, got: f.theta_star.len() });
        }
        if mu.len() != f.m {
            return Err(Error::DimensionMismatch { expected: f.m, got: mu.len() });
        }
        if let Some(v) = x.iter().chain(&z).find(|v| v.norm() > 1.0 + NORM_TOL) {
            return Err(Error::InvalidArgument(format!("arm norm {} exceeds 1", v.norm())));
        }
        ProblemInstance::new(x, z, Vector::from_vec(f.theta_star), mu, f.gamma, f.noise_sigma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueGaps {
    pub best_safe_arm: usize,
    pub delta: Vec<f64>,
    /// Indexed `[constraint][arm]`.
    pub delta_safe: Vec<Vec<f64>>,
    pub value: Vec<f64>,
}

impl TrueGaps {
    pub fn min_delta_safe(&self, arm: usize) -> f64 {
        self.delta_safe.iter().map(|row| row[arm]).fold(f64::INFINITY, f64::min)
    }
}

pub fn true_gaps(inst: &ProblemInstance) -> Result<TrueGaps> {
    let value: Vec<f64> = inst.z.iter().map(|z| z.dot(&inst.theta_star)).collect();
    let delta_safe: Vec<Vec<f64>> =
        inst.mu_star.iter().map(|mu| inst.z.iter().map(|z| inst.gamma - mu.dot(z)).collect()).collect();
    let mut best: Option<usize> = None;
    for j in 0..inst.z.len() {
        let safe = delta_safe.iter().all(|row| row[j] >= 0.0);
        if safe && best.is_none_or(|b| value[j] > value[b]) {
            best = Some(j);
        }
    }
    let best = best.ok_or(Error::NoSafeArm)?;
    let delta = value.iter().map(|v| value[best] - v).collect();
    Ok(TrueGaps { best_safe_arm: best, delta, delta_safe, value })
}

/// Value deficit of `z` against the best arm whose minimum safety gap is at
/// least `eps`; `None` when no arm qualifies.
pub fn eps_safe_optimality_gap(inst: &ProblemInstance, z: &Vector, eps: f64) -> Option<f64> {
    let vz = z.dot(&inst.theta_star);
    inst.z
        .iter()
        .filter(|zp| inst.min_safety_gap(zp) >= eps)
        .map(|zp| zp.dot(&inst.theta_star) - vz)
        .reduce(f64::max)
}

/// Indices of the ε-good arms: within `eps` of the best safe value and
/// violating no constraint by more than `eps`.
pub fn eps_good_set(inst: &ProblemInstance, eps: f64) -> Result<Vec<usize>> {
    let g = true_gaps(inst)?;
    let best = g.value[g.best_safe_arm];
    Ok((0..inst.z.len())
        .filter(|&j| g.value[j] >= best - eps - CMP_TOL && g.min_delta_safe(j) >= -eps - CMP_TOL)
        .collect())
}

pub fn is_eps_safe(inst: &ProblemInstance, arm: usize, eps: f64) -> bool {
    inst.min_safety_gap(&inst.z[arm]) >= -eps - CMP_TOL
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prop1Kind {
    I1,
    I2,
}

fn basis(d: usize) -> Vec<Vector> {
    (0..d).map(|i| Vector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })).collect()
}

/// The two-arm instances separating the safety-only and difference-only
/// designs. `alpha` must lie in `(0, 0.1]`.
pub fn gen_prop1_instance(which: Prop1Kind, alpha: f64) -> Result<ProblemInstance> {
    if !(alpha > 0.0 && alpha <= 0.1) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 0.1]")));
    }
    let v = |a: f64, b: f64| Vector::from_vec(vec![a, b]);
    match which {
        Prop1Kind::I1 => ProblemInstance::new(
            basis(2),
            vec![v(0.25, 0.5), v(0.75, 0.5 + alpha)],
            v(1.0, 0.0),
            vec![v(0.0, 1.0)],
            0.5 + alpha / 2.0,
            1.0,
        ),
        Prop1Kind::I2 => ProblemInstance::new(
            basis(2),
            vec![v(0.5 + alpha * alpha / 2.0, 0.0), v(0.5, alpha / 2.0)],
            v(0.5, 0.0),
            vec![v(0.0, 0.0)],
            1.0,
            1.0,
        ),
    }
}

/// Multi-armed bandit where the best arm is barely safe and the runner-up is
/// clearly safe. Per-arm means stay in `[−1, 1]`, but `θ*` and `μ*` are not
/// norm-bounded for large `n_arms`.
pub fn gen_mab_hard_instance(n_arms: usize, safety_margin_best: f64, value_gap: f64) -> Result<ProblemInstance> {
    const GAMMA: f64 = 0.5;
    const TAIL_SAFETY: f64 = 0.6;
    const TAIL_VALUE: f64 = 0.1;
    if n_arms < 3 {
        return Err(Error::InvalidArgument("n_arms must be at least 3".into()));
    }
    if !(safety_margin_best > 0.0 && safety_margin_best <= 1.0) {
        return Err(Error::InvalidArgument(format!("safety_margin_best {safety_margin_best} outside (0, 1]")));
    }
    if !(value_gap > 0.0 && 1.0 - value_gap > TAIL_VALUE) {
        return Err(Error::InvalidArgument(format!("value_gap {value_gap} must lie in (0, 0.9)")));
    }
    let tail = (n_arms - 2) as f64;
    let theta = Vector::from_fn(n_arms, |k, _| match k {
        0 => 1.0,
        1 => 1.0 - value_gap,
        _ => TAIL_VALUE * (n_arms - k) as f64 / tail,
    });
    let mu = Vector::from_fn(n_arms, |k, _| if k == 0 { GAMMA - safety_margin_best } else { GAMMA - TAIL_SAFETY });
    ProblemInstance::new(basis(n_arms), basis(n_arms), theta, vec![mu], GAMMA, 1.0)
}

/// Best-arm identification as a special case: standard-basis arms, `μ* = 0`,
/// `γ = 1`, so every arm is safe.
pub fn gen_bai_instance(theta: &[f64]) -> Result<ProblemInstance> {
    let d = theta.len();
    ProblemInstance::new(basis(d), basis(d), Vector::from_vec(theta.to_vec()), vec![Vector::zeros(d)], 1.0, 1.0)
}

/// Gaussian instance with every vector rescaled into the unit ball.
pub fn gen_random_instance(d: usize, n_x: usize, n_z: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    if d == 0 || n_x == 0 || n_z == 0 || m == 0 {
        return Err(Error::InvalidArgument("d, n_x, n_z and m must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        if n > 1.0 { v / n } else { v }
    };
    let x: Vec<Vector> = (0..n_x).map(|_| draw()).collect();
    let z: Vec<Vector> = (0..n_z).map(|_| draw()).collect();
    let theta = draw();
    let mu: Vec<Vector> = (0..m).map(|_| draw()).collect();
    let worst: Vec<f64> = z.iter().map(|zz| mu.iter().map(|mi| mi.dot(zz)).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut gamma = 0.0;
    if worst.iter().all(|w| *w > gamma) {
        let mut sorted = worst.clone();
        sorted.sort_by(f64::total_cmp);
        gamma = sorted[(sorted.len() - 1) / 2];
    }
    ProblemInstance::new(x, z, theta, mu, gamma, 1.0)
}
