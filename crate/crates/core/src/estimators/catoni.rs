use crate::error::{Error, Result};

pub const DEFAULT_ROOT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatoniConfig {
    pub alpha: f64,
    pub root_tol: f64,
    pub max_iter: usize,
}

impl CatoniConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("catoni alpha {alpha} must be finite and positive")));
        }
        Ok(Self { alpha, root_tol: DEFAULT_ROOT_TOL, max_iter: DEFAULT_MAX_ITER })
    }

    /// Influence scale `α = sqrt(2 log(1/δ) / (T σ²))`.
    pub fn for_confidence(n: usize, delta: f64, variance_bound: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
        }
        if !(variance_bound > 0.0 && variance_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance bound {variance_bound} must be positive")));
        }
        Self::new((2.0 * (1.0 / delta).ln() / (n as f64 * variance_bound)).sqrt())
    }
}

/// Influence function `sign(y)·log(1 + |y| + y²)`.
pub fn catoni_psi(y: f64) -> f64 {
    let a = y.abs();
    (a + a * a).ln_1p().copysign(y)
}

/// Returns `(ψ(y), ψ'(y))`; `ψ' > 0` everywhere so the estimating equation
/// has a unique root.
#[inline]
pub(crate) fn psi_and_slope(y: f64) -> (f64, f64) {
    let a = y.abs();
    let q = a + a * a;
    (q.ln_1p().copysign(y), (1.0 + 2.0 * a) / (1.0 + q))
}

/// Minimum sample count for the concentration guarantee at level `delta`.
pub fn min_samples(delta: f64) -> usize {
    (4.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize
}

pub fn catoni_estimate(samples: &[f64], delta: f64, variance_bound: f64) -> Result<f64> {
    let needed = min_samples(delta);
    if samples.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: samples.len() });
    }
    let cfg = CatoniConfig::for_confidence(samples.len(), delta, variance_bound)?;
    catoni_root(samples, &cfg)
}

/// Root of `z ↦ Σ ψ(α(X_t − z))`.
pub fn catoni_root(samples: &[f64], cfg: &CatoniConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(*s), h.max(*s)));
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let alpha = cfg.alpha;
    Ok(solve_decreasing(cfg, lo - 1.0 / alpha, hi + 1.0 / alpha, mean, |z| {
        let (mut f, mut slope) = (0.0, 0.0);
        for s in samples {
            let (p, dp) = psi_and_slope(alpha * (s - z));
            f += p;
            slope += dp;
        }
        (f, -alpha * slope)
    }))
}

/// Safeguarded Newton for a strictly decreasing `f` with `f(lo) > 0 > f(hi)`.
/// `eval` returns `(f(z), f'(z))`.
pub(crate) fn solve_decreasing(
    cfg: &CatoniConfig,
    mut lo: f64,
    mut hi: f64,
    init: f64,
    mut eval: impl FnMut(f64) -> (f64, f64),
) -> f64 {
    let mut z = if init > lo && init < hi { init } else { 0.5 * (lo + hi) };
    for _ in 0..cfg.max_iter {
        let (f, fp) = eval(z);
        if f == 0.0 {
            return z;
        }
        if f > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let newton = z - f / fp;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let scale = 1.0 + z.abs();
        if (next - z).abs() <= cfg.root_tol * scale || hi - lo <= cfg.root_tol * scale {
            return next;
        }
        z = next;
    }
    z
}
