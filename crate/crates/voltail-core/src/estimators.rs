//! Statistical estimators shared across the toolkit: Hill tail-index
//! estimation, log-log regression, autocorrelation, and realized volatility
//! of volatility. All estimators are pure functions of their inputs.

use serde::Serialize;
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid order-statistic count k = {k} for n = {n} (need 10 <= k < n/2)")]
    InvalidK { k: usize, n: usize },
    #[error("non-positive data in fit window")]
    NonPositiveData,
    #[error("fewer than {needed} points in fit window (got {got})")]
    WindowTooSmall { needed: usize, got: usize },
    #[error("series is degenerate (zero variance)")]
    DegenerateSeries,
    #[error("path too short for window: {steps} steps of {dt} vs window {window}")]
    PathTooShort { steps: usize, dt: f64, window: f64 },
}

/// A point estimate with its standard error and fit metadata.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "R: Serialize"))]
pub struct FitResult<R> {
    pub estimate: R,
    pub stderr: R,
    pub window: String,
    pub n_used: usize,
}

/// Hill estimator of the tail index `α` in `P(X > x) ∝ x^{-α}`, computed on
/// the `k` largest order statistics. The standard error is `α/√k`.
pub fn hill<R: Real>(samples: &[R], k: usize) -> Result<FitResult<R>, EstimatorError> {
    let n = samples.len();
    if k < 10 || 2 * k >= n {
        return Err(EstimatorError::InvalidK { k, n });
    }
    let mut sorted: Vec<R> = samples.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let pivot = sorted[k];
    if !(pivot > R::zero()) {
        return Err(EstimatorError::NonPositiveData);
    }
    let mean_log: R = sorted[..k]
        .iter()
        .map(|&x| (x / pivot).ln())
        .sum::<R>()
        / R::from_usize_lossy(k);
    if !(mean_log > R::zero()) {
        return Err(EstimatorError::NonPositiveData);
    }
    let estimate = mean_log.recip();
    Ok(FitResult {
        estimate,
        stderr: estimate / R::from_usize_lossy(k).sqrt(),
        window: format!("top {k} of {n} order statistics"),
        n_used: k,
    })
}

/// Default order-statistic count for [`hill`]: `n^{2/3}` capped at `n/10`.
pub fn default_hill_k(n: usize) -> usize {
    let k = (n as f64).powf(2.0 / 3.0).round() as usize;
    k.min(n / 10).max(10)
}

/// Ordinary least squares of `ln y` on `ln x` restricted to `x` in `window`.
pub fn loglog_slope<R: Real>(
    x: &[R],
    y: &[R],
    window: (R, R),
) -> Result<FitResult<R>, EstimatorError> {
    let fit = loglog_fit(x, y, window)?;
    Ok(fit.0)
}

/// As [`loglog_slope`], additionally returning the intercept `exp(c)` of the
/// fitted `y = exp(c) x^slope`.
pub fn loglog_fit<R: Real>(
    x: &[R],
    y: &[R],
    window: (R, R),
) -> Result<(FitResult<R>, R), EstimatorError> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&xi, &yi) in x.iter().zip(y) {
        if xi < window.0 || xi > window.1 {
            continue;
        }
        if !(xi > R::zero()) || !(yi > R::zero()) {
            return Err(EstimatorError::NonPositiveData);
        }
        lx.push(xi.ln());
        ly.push(yi.ln());
    }
    let n = lx.len();
    if n < 5 {
        return Err(EstimatorError::WindowTooSmall { needed: 5, got: n });
    }
    let nr = R::from_usize_lossy(n);
    let mx = lx.iter().copied().sum::<R>() / nr;
    let my = ly.iter().copied().sum::<R>() / nr;
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    for (u, v) in lx.iter().zip(&ly) {
        sxx += (*u - mx) * (*u - mx);
        sxy += (*u - mx) * (*v - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = R::zero();
    for (u, v) in lx.iter().zip(&ly) {
        let resid = *v - intercept - slope * *u;
        sse += resid * resid;
    }
    let dof = R::from_usize_lossy(n - 2);
    let stderr = (sse / dof / sxx).sqrt();
    Ok((
        FitResult {
            estimate: slope,
            stderr,
            window: format!("x in [{:e}, {:e}]", window.0, window.1),
            n_used: n,
        },
        intercept.exp(),
    ))
}

/// Autocorrelation at the requested lags, biased (1/n) normalization.
pub fn acf<R: Real>(series: &[R], lags: &[usize]) -> Result<Vec<R>, EstimatorError> {
    let n = series.len();
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if n < max_lag + 2 {
        return Err(EstimatorError::InsufficientSamples {
            needed: max_lag + 2,
            got: n,
        });
    }
    let nr = R::from_usize_lossy(n);
    let mean = series.iter().copied().sum::<R>() / nr;
    let c0 = series.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / nr;
    if !(c0 > R::zero()) {
        return Err(EstimatorError::DegenerateSeries);
    }
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut c = R::zero();
        for i in 0..n - lag {
            c += (series[i] - mean) * (series[i + lag] - mean);
        }
        out.push(c / nr / c0);
    }
    Ok(out)
}

/// Realized volatility of volatility: the standard deviation of per-step
/// relative changes `Δσ/σ`, computed window by window and scaled to rate
/// units by `1/√dt`, averaged across windows.
pub fn vol_of_vol<R: Real>(
    sigma_path: &[R],
    dt_sim: R,
    window: R,
) -> Result<R, EstimatorError> {
    let steps_per_window = (window / dt_sim).to_f64_lossy().round() as usize;
    if steps_per_window < 2 || sigma_path.len() < steps_per_window + 1 {
        return Err(EstimatorError::PathTooShort {
            steps: sigma_path.len(),
            dt: dt_sim.to_f64_lossy(),
            window: window.to_f64_lossy(),
        });
    }
    let rel: Vec<R> = sigma_path
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .collect();
    let mut window_vols = Vec::new();
    for chunk in rel.chunks_exact(steps_per_window) {
        let nr = R::from_usize_lossy(chunk.len());
        let mean = chunk.iter().copied().sum::<R>() / nr;
        let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>()
            / R::from_usize_lossy(chunk.len() - 1);
        window_vols.push(var.sqrt() / dt_sim.sqrt());
    }
    if window_vols.is_empty() {
        return Err(EstimatorError::PathTooShort {
            steps: sigma_path.len(),
            dt: dt_sim.to_f64_lossy(),
            window: window.to_f64_lossy(),
        });
    }
    Ok(window_vols.iter().copied().sum::<R>() / R::from_usize_lossy(window_vols.len()))
}
