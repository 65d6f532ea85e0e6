//! Frank-Wolfe with away steps for `min_λ max_t v_t(λ)` over the simplex.
//!
//! The max is replaced by the log-sum-exp smoothing
//! `G_μ = μ log Σ exp(v_t/μ)`, minimized with a golden-section line search.
//! The temperature `μ` is halved whenever progress stalls. `G_μ` only
//! decreases as `μ` shrinks, so the recorded trace is non-increasing. The
//! returned allocation is the iterate with the smallest exact max.

use crate::error::Result;

/// A finite family of convex-ish functions of the allocation.
pub(crate) trait MaxTerms {
    fn n_arms(&self) -> usize;
    fn values(&self, lambda: &[f64]) -> Result<Vec<f64>>;
    /// `Σ_t weights_t ∇v_t(λ)`; zero weights may be skipped.
    fn weighted_grad(&self, lambda: &[f64], weights: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FwOptions {
    pub iters: usize,
    /// Smoothing temperature relative to the objective scale.
    pub smoothing: f64,
    pub line_search_iters: usize,
    /// Relative duality-gap stopping tolerance.
    pub gap_tol: f64,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { iters: 200, smoothing: 1e-2, line_search_iters: 30, gap_tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FwOutcome {
    pub lambda: Vec<f64>,
    pub value: f64,
    /// Smoothed objective after each accepted step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn softmax(v: &[f64], mu: f64) -> Vec<f64> {
    let m = max_of(v);
    let mut w: Vec<f64> = v.iter().map(|x| ((x - m) / mu).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| {
        *x /= s;
        if *x < 1e-14 {
            *x = 0.0;
        }
    });
    w
}

fn along(lambda: &[f64], dir: &[f64], gamma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = lambda.iter().zip(dir).map(|(l, d)| (l + gamma * d).max(0.0)).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

fn smoothed(v: &[f64], mu: f64) -> f64 {
    let m = max_of(v);
    m + mu * v.iter().map(|x| ((x - m) / mu).exp()).sum::<f64>().ln()
}

pub(crate) fn minimize_max<T: MaxTerms + ?Sized>(obj: &T, init: &[f64], opts: &FwOptions) -> Result<FwOutcome> {
    const GOLD: f64 = 0.618_033_988_749_895;
    let n = obj.n_arms();
    let mut lambda = init.to_vec();
    let mut values = obj.values(&lambda)?;
    let g0 = max_of(&values);
    let spread = g0 - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = g0.abs().max(spread).max(1e-300);
    let mut mu = opts.smoothing * scale;
    let mu_floor = mu * 1e-6;
    let mut best = (lambda.clone(), g0);
    let mut current = smoothed(&values, mu);
    let mut trace = vec![current];

    let mut k = 0;
    while k < opts.iters {
        let w = softmax(&values, mu);
        let g = obj.weighted_grad(&lambda, &w)?;
        let (mut toward, mut away) = (0usize, None::<usize>);
        for i in 0..n {
            if g[i] < g[toward] {
                toward = i;
            }
            if lambda[i] > 0.0 && away.is_none_or(|a| g[i] > g[a]) {
                away = Some(i);
            }
        }
        let g_dot: f64 = lambda.iter().zip(&g).map(|(l, gi)| l * gi).sum();
        let fw_gap = g_dot - g[toward];
        let away = away.unwrap_or(toward);
        let away_gap = g[away] - g_dot;
        let stalled = if fw_gap.max(away_gap) <= opts.gap_tol * (current.abs() + mu) {
            true
        } else {
            let (dir, gamma_max): (Vec<f64>, f64) = if away_gap > fw_gap && lambda[away] < 1.0 {
                let la = lambda[away];
                ((0..n).map(|i| lambda[i] - if i == away { 1.0 } else { 0.0 }).collect(), la / (1.0 - la))
            } else {
                ((0..n).map(|i| if i == toward { 1.0 } else { 0.0 } - lambda[i]).collect(), 1.0)
            };
            let eval = |gamma: f64| -> Result<f64> { Ok(smoothed(&obj.values(&along(&lambda, &dir, gamma))?, mu)) };
            let (mut a, mut b) = (0.0, gamma_max);
            let mut c = b - GOLD * (b - a);
            let mut d = a + GOLD * (b - a);
            let (mut fc, mut fd) = (eval(c)?, eval(d)?);
            for _ in 0..opts.line_search_iters {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLD * (b - a);
                    fc = eval(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLD * (b - a);
                    fd = eval(d)?;
                }
            }
            let mut step = if fc <= fd { (c, fc) } else { (d, fd) };
            let f_end = eval(gamma_max)?;
            if f_end < step.1 {
                step = (gamma_max, f_end);
            }
            if step.1 < current {
                lambda = along(&lambda, &dir, step.0);
                values = obj.values(&lambda)?;
                current = smoothed(&values, mu);
                trace.push(current);
                let exact = max_of(&values);
                if exact < best.1 {
                    best = (lambda.clone(), exact);
                }
                k += 1;
                false
            } else {
                true
            }
        };
        if stalled {
            mu *= 0.5;
            if mu < mu_floor {
                break;
            }
            current = smoothed(&values, mu);
            trace.push(current);
        }
    }
    Ok(FwOutcome { lambda: best.0, value: best.1, trace })
}
