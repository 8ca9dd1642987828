//! The volatility model class.
//!
//! Drift and diffusion of the volatility SDE are `α = σ³ f(r₀ σ^{-2})` and
//! `β = σ² g(r₀ σ^{-2})` for a nondimensional coefficient pair `(f, g)`. The
//! built-in family is `f(x) = k x^{3/2} - A x`, `g(x) = B`: the smallest
//! regularization of the asymptotic model `dσ = -A r₀ σ dt + B σ² dW` that
//! keeps `f(0) = 0`, `f'(0) = -A`, makes σ = 0 repelling, and admits a
//! closed-form stationary density.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{lit, Real};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("diffusion coefficient g evaluated non-positive: g = {g} at sigma = {sigma}")]
    NegativeDiffusion { sigma: f64, g: f64 },
    #[error("coefficient condition violated: {0}")]
    ConditionViolated(ConditionViolation),
    #[error("sigma grid is empty or not ascending/positive")]
    InvalidGrid,
    #[error("sigma_min {sigma_min} outside grid span [{lo}, {hi}]")]
    SigmaMinOutsideGrid { sigma_min: f64, lo: f64, hi: f64 },
}

/// Which of the admissibility conditions on `(f, g)` failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionViolation {
    /// `f(0) = 0` fails; carries the extrapolated `f(0+)`.
    FZeroNonzero(f64),
    /// `f'(0) ≤ 0` fails; carries the extrapolated slope.
    FSlopePositive(f64),
    /// `g(0) > 0` fails; carries the extrapolated `g(0+)`.
    GZeroNotPositive(f64),
}

impl std::fmt::Display for ConditionViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FZeroNonzero(v) => write!(f, "f(0) = {v:.6e}, expected 0"),
            Self::FSlopePositive(v) => write!(f, "f'(0) = {v:.6e}, expected <= 0"),
            Self::GZeroNotPositive(v) => write!(f, "g(0) = {v:.6e}, expected > 0"),
        }
    }
}

/// Scalar parameters of a volatility model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound(
    serialize = "R: Serialize",
    deserialize = "R: serde::de::DeserializeOwned"
))]
pub struct ModelParams<R> {
    /// Mean-reversion strength, `A = -f'(0)` (dimensionless, ≥ 0).
    pub a: R,
    /// Volatility-of-volatility level, `B = g(0)` (dimensionless, > 0).
    pub b: R,
    /// Low-volatility regularization strength (dimensionless, ≥ 0).
    pub k: R,
    /// Mean-reversion rate, units 1/time (> 0).
    pub r0: R,
    /// Correlation of the price and volatility Wiener drivers, in [-1, 1].
    /// The tail predictions do not depend on it; treat as experimental.
    pub rho: R,
    /// Price drift rate, units 1/time.
    pub mu: R,
}

impl<R: Real> ModelParams<R> {
    /// Built-in defaults `A = B = k = 1`, `ρ = μ = 0` at the given rate.
    pub fn defaults(r0: R) -> Self {
        Self {
            a: R::one(),
            b: R::one(),
            k: R::one(),
            r0,
            rho: R::zero(),
            mu: R::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.b > R::zero()) {
            return Err(ModelError::InvalidParams(format!("B must be > 0, got {}", self.b)));
        }
        if self.a < R::zero() {
            return Err(ModelError::InvalidParams(format!("A must be >= 0, got {}", self.a)));
        }
        if self.k < R::zero() {
            return Err(ModelError::InvalidParams(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.r0 > R::zero()) {
            return Err(ModelError::InvalidParams(format!("r0 must be > 0, got {}", self.r0)));
        }
        if self.rho.abs() > R::one() {
            return Err(ModelError::InvalidParams(format!(
                "rho must be in [-1, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Nondimensional coefficient pair `(f, g)` on `x = r₀ σ^{-2} ≥ 0`.
pub trait VolCoefficients<R>: Send + Sync {
    fn f(&self, x: R) -> R;
    fn g(&self, x: R) -> R;

    /// The built-in family exposes its scalars so integrators can specialize.
    fn builtin(&self) -> Option<BuiltinCoeffs<R>>
    where
        R: Copy,
    {
        None
    }
}

/// Built-in pair `f(x) = k x^{3/2} - A x`, `g(x) = B`.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinCoeffs<R> {
    pub a: R,
    pub b: R,
    pub k: R,
}

impl<R: Real> BuiltinCoeffs<R> {
    pub fn from_params(params: &ModelParams<R>) -> Self {
        Self {
            a: params.a,
            b: params.b,
            k: params.k,
        }
    }
}

impl<R: Real> VolCoefficients<R> for BuiltinCoeffs<R> {
    fn f(&self, x: R) -> R {
        x * (self.k * x.sqrt() - self.a)
    }

    fn g(&self, _x: R) -> R {
        self.b
    }

    fn builtin(&self) -> Option<BuiltinCoeffs<R>> {
        Some(*self)
    }
}

/// Arbitrary user-supplied coefficient pair.
pub struct ClosureCoeffs<F, G> {
    pub f: F,
    pub g: G,
}

impl<R, F, G> VolCoefficients<R> for ClosureCoeffs<F, G>
where
    F: Fn(R) -> R + Send + Sync,
    G: Fn(R) -> R + Send + Sync,
{
    fn f(&self, x: R) -> R {
        (self.f)(x)
    }

    fn g(&self, x: R) -> R {
        (self.g)(x)
    }
}

/// Volatility drift `α(σ) = σ³ f(r₀ σ^{-2})`, units `T^{-3/2}`.
pub fn alpha<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    sigma: R,
) -> Result<R, ModelError> {
    if !(sigma > R::zero()) {
        return Err(ModelError::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let x = params.r0 / (sigma * sigma);
    Ok(sigma * sigma * sigma * coeffs.f(x))
}

/// Volatility diffusion `β(σ) = σ² g(r₀ σ^{-2})`, units `T^{-1}`.
pub fn beta<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    sigma: R,
) -> Result<R, ModelError> {
    if !(sigma > R::zero()) {
        return Err(ModelError::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let x = params.r0 / (sigma * sigma);
    let g = coeffs.g(x);
    if !(g > R::zero()) {
        return Err(ModelError::NegativeDiffusion {
            sigma: sigma.to_f64_lossy(),
            g: g.to_f64_lossy(),
        });
    }
    Ok(sigma * sigma * g)
}

/// Iterated Aitken extrapolation of a sequence tending to a limit.
fn aitken_limit<R: Real>(mut seq: Vec<R>) -> R {
    while seq.len() >= 3 {
        let mut next = Vec::with_capacity(seq.len() - 2);
        for w in seq.windows(3) {
            let d1 = w[1] - w[0];
            let d2 = w[2] - w[1];
            let den = d2 - d1;
            if den.abs() > R::epsilon() * (w[2].abs() + R::one()) {
                next.push(w[2] - d2 * d2 / den);
            } else {
                next.push(w[2]);
            }
        }
        seq = next;
    }
    *seq.last().expect("sequence is non-empty")
}

/// Asymptotic coefficients extracted from a coefficient pair.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(bound(serialize = "R: Serialize"))]
pub struct AsymptoticCoeffs<R> {
    /// `A = -f'(0+)`.
    pub a: R,
    /// `B = g(0+)`.
    pub b: R,
    /// Extrapolated `f(0+)` (should vanish).
    pub f_at_zero: R,
}

/// Recover `(A, B)` from one-sided limits at `x = 0+` and verify the
/// admissibility conditions `f(0) = 0`, `f'(0) ≤ 0`, `g(0) > 0`.
///
/// One-sided divided differences on the geometric grid `h = h₀ 4^{-j}` are
/// extrapolated by iterated Aitken steps, which handles both smooth error
/// expansions and the `√h` terms a `x^{3/2}` component contributes.
pub fn asymptotic_coeffs<R: Real>(
    coeffs: &(impl VolCoefficients<R> + ?Sized),
) -> Result<AsymptoticCoeffs<R>, ModelError> {
    let h0 = lit::<R>(1e-3);
    let q = lit::<R>(0.25);
    let levels = 14;

    let mut hs = Vec::with_capacity(levels);
    let mut h = h0;
    for _ in 0..levels {
        hs.push(h);
        h = h * q;
    }

    let f_vals: Vec<R> = hs.iter().map(|&h| coeffs.f(h)).collect();
    let slopes: Vec<R> = hs.iter().zip(&f_vals).map(|(&h, &fv)| fv / h).collect();
    let g_vals: Vec<R> = hs.iter().map(|&h| coeffs.g(h)).collect();

    let f_scale = f_vals
        .iter()
        .fold(R::one(), |acc, v| acc.max(v.abs()));
    let f_at_zero = aitken_limit(f_vals);
    let tol = lit::<R>(1e-7);
    if f_at_zero.abs() > tol * f_scale {
        return Err(ModelError::ConditionViolated(
            ConditionViolation::FZeroNonzero(f_at_zero.to_f64_lossy()),
        ));
    }

    let slope = aitken_limit(slopes);
    if slope > tol {
        return Err(ModelError::ConditionViolated(
            ConditionViolation::FSlopePositive(slope.to_f64_lossy()),
        ));
    }

    let b = aitken_limit(g_vals);
    if !(b > R::zero()) {
        return Err(ModelError::ConditionViolated(
            ConditionViolation::GZeroNotPositive(b.to_f64_lossy()),
        ));
    }

    Ok(AsymptoticCoeffs {
        a: -slope.min(R::zero()),
        b,
        f_at_zero,
    })
}

/// Stylized-fact validation outcome.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "R: Serialize"))]
pub struct StylizedFactReport<R> {
    /// `α ≤ 0` for every grid point at or above `sigma_min`.
    pub mean_reversion_ok: bool,
    /// Worst offender `(σ, α)` if mean reversion fails.
    pub worst_positive_alpha: Option<(R, R)>,
    /// `|α| σ^{-3}` decays monotonically to below 0.1 on the top grid decade.
    pub long_memory_ok: bool,
    /// Supremum of `|α| σ^{-3}` over the top decade.
    pub persistence_sup: R,
    /// Final (largest-σ) value of `|α| σ^{-3}`.
    pub persistence_final: R,
    /// `β σ^{-2}` stays bounded away from zero over the top decade (positive
    /// infimum and no decaying trend).
    pub vvol_ok: bool,
    /// Infimum of `β σ^{-2}` over the top decade.
    pub vvol_inf: R,
    /// Log-log trend of `β σ^{-2}` over the top decade (0 for a positive limit).
    pub vvol_trend: R,
}

impl<R: Real> StylizedFactReport<R> {
    pub fn all_ok(&self) -> bool {
        self.mean_reversion_ok && self.long_memory_ok && self.vvol_ok
    }
}

/// Check the three stylized facts on a σ grid: mean reversion above
/// `sigma_min`, persistence (`|α| σ^{-3} → 0`), and non-vanishing relative
/// volatility of volatility (`β σ^{-2}` bounded away from 0).
pub fn validate_stylized_facts<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    sigma_min: R,
    sigma_grid: &[R],
) -> Result<StylizedFactReport<R>, ModelError> {
    if sigma_grid.is_empty() {
        return Err(ModelError::InvalidGrid);
    }
    for (i, w) in sigma_grid.windows(2).enumerate() {
        if !(w[0] > R::zero()) || w[1] <= w[0] {
            let _ = i;
            return Err(ModelError::InvalidGrid);
        }
    }
    if !(*sigma_grid.last().unwrap() > R::zero()) {
        return Err(ModelError::InvalidGrid);
    }
    let lo = sigma_grid[0];
    let hi = *sigma_grid.last().unwrap();
    if sigma_min < lo || sigma_min > hi {
        return Err(ModelError::SigmaMinOutsideGrid {
            sigma_min: sigma_min.to_f64_lossy(),
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }

    let mut mean_reversion_ok = true;
    let mut worst: Option<(R, R)> = None;
    for &s in sigma_grid.iter().filter(|&&s| s >= sigma_min) {
        let a = alpha(params, coeffs, s)?;
        // Allow float-level noise at an exact α = 0 crossing.
        let slack = lit::<R>(1e-12) * (R::one() + s * s * s);
        if a > slack {
            mean_reversion_ok = false;
            if worst.map_or(true, |(_, wa)| a > wa) {
                worst = Some((s, a));
            }
        }
    }

    let decade_lo = hi / lit::<R>(10.0);
    let tail: Vec<R> = sigma_grid
        .iter()
        .copied()
        .filter(|&s| s >= decade_lo)
        .collect();

    let mut persistence = Vec::with_capacity(tail.len());
    let mut vvol = Vec::with_capacity(tail.len());
    for &s in &tail {
        let a = alpha(params, coeffs, s)?;
        let b = beta(params, coeffs, s)?;
        persistence.push(a.abs() / (s * s * s));
        vvol.push(b / (s * s));
    }

    let persistence_sup = persistence.iter().fold(R::zero(), |m, &v| m.max(v));
    let persistence_final = *persistence.last().unwrap();
    let mut decaying = true;
    for w in persistence.windows(2) {
        if w[1] > w[0] + lit::<R>(1e-9) * (w[0] + lit::<R>(1e-30)) {
            decaying = false;
            break;
        }
    }
    let long_memory_ok = decaying && persistence_final < lit::<R>(0.1);

    let vvol_inf = vvol.iter().fold(R::infinity(), |m, &v| m.min(v));
    // A positive grid minimum is not enough for a positive liminf: a decaying
    // trend over the top decade means β σ^{-2} → 0. Fit the log-log slope and
    // require it to be flat or rising.
    let vvol_trend = if vvol_inf > R::zero() && tail.len() >= 2 {
        log_log_trend(&tail, &vvol)
    } else {
        R::neg_infinity()
    };
    let vvol_ok = vvol_inf > R::zero() && vvol_trend >= lit::<R>(-0.05);

    Ok(StylizedFactReport {
        mean_reversion_ok,
        worst_positive_alpha: worst,
        long_memory_ok,
        persistence_sup,
        persistence_final,
        vvol_ok,
        vvol_inf,
        vvol_trend,
    })
}

fn log_log_trend<R: Real>(xs: &[R], ys: &[R]) -> R {
    let n = R::from_usize_lossy(xs.len());
    let lx: Vec<R> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<R> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().copied().sum::<R>() / n;
    let my = ly.iter().copied().sum::<R>() / n;
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (*x - mx) * (*x - mx);
        sxy += (*x - mx) * (*y - my);
    }
    if sxx == R::zero() {
        R::zero()
    } else {
        sxy / sxx
    }
}

/// Short-term / high-volatility regime diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(bound(serialize = "R: Serialize"))]
pub struct RegimeReport<R> {
    /// `σ² Δt`: squared relative price move over one sampling interval.
    pub sigma2_dt: R,
    /// `σ² / r₀`: diffusion-to-reversion timescale separation.
    pub sigma2_over_r0: R,
    pub short_term_ok: bool,
    pub high_vol_ok: bool,
    /// Threshold on `σ² Δt` for the short-term flag.
    pub short_term_threshold: R,
    /// Threshold on `σ² / r₀` for the high-volatility flag.
    pub high_vol_threshold: R,
}

/// Evaluate the double-limit diagnostics `σ² Δt → 0`, `σ²/r₀ → ∞` with one
/// decade of slack against the exemplar magnitudes 0.004 and 10⁴.
pub fn regime_diagnostics<R: Real>(sigma: R, r0: R, dt: R) -> Result<RegimeReport<R>, ModelError> {
    if !(sigma > R::zero() && r0 > R::zero() && dt > R::zero()) {
        return Err(ModelError::Domain(
            "sigma, r0 and dt must all be positive".into(),
        ));
    }
    let sigma2 = sigma * sigma;
    let sigma2_dt = sigma2 * dt;
    let sigma2_over_r0 = sigma2 / r0;
    let short_term_threshold = lit::<R>(0.01);
    let high_vol_threshold = lit::<R>(100.0);
    Ok(RegimeReport {
        sigma2_dt,
        sigma2_over_r0,
        short_term_ok: sigma2_dt <= short_term_threshold,
        high_vol_ok: sigma2_over_r0 >= high_vol_threshold,
        short_term_threshold,
        high_vol_threshold,
    })
}

/// Log-spaced grid of `n` points covering `[lo, hi]`.
pub fn log_spaced<R: Real>(lo: R, hi: R, n: usize) -> Vec<R> {
    assert!(n >= 2, "need at least two grid points");
    let ll = lo.ln();
    let lh = hi.ln();
    let step = (lh - ll) / R::from_usize_lossy(n - 1);
    (0..n)
        .map(|i| (ll + step * R::from_usize_lossy(i)).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ModelParams<f64> {
        ModelParams::defaults(1.0)
    }

    #[test]
    fn alpha_matches_direct_substitution() {
        // A = 1, k = 0, r0 = 1: α(σ) = -σ r0 A.
        let params = ModelParams { k: 0.0, ..defaults() };
        let coeffs = BuiltinCoeffs::from_params(&params);
        let a = alpha(&params, &coeffs, 2.0).unwrap();
        assert!((a - (-2.0)).abs() < 1e-14);
    }

    #[test]
    fn alpha_zero_drift_case() {
        let params = ModelParams { a: 0.0, k: 0.0, ..defaults() };
        let coeffs = BuiltinCoeffs::from_params(&params);
        for s in [0.3, 1.0, 7.5] {
            assert_eq!(alpha(&params, &coeffs, s).unwrap(), 0.0);
        }
    }

    #[test]
    fn alpha_balance_point() {
        // k r0^{3/2} = A r0 σ at σ = k √r0 / A.
        let params = ModelParams {
            r0: 0.04,
            ..defaults()
        };
        let coeffs = BuiltinCoeffs::from_params(&params);
        let a = alpha(&params, &coeffs, 0.2).unwrap();
        assert!(a.abs() < 1e-15, "got {a}");
    }

    #[test]
    fn beta_direct_substitution() {
        let params = defaults();
        let coeffs = BuiltinCoeffs::from_params(&params);
        assert!((beta(&params, &coeffs, 3.0).unwrap() - 9.0).abs() < 1e-14);
        let params2 = ModelParams { b: 2.0, ..defaults() };
        let coeffs2 = BuiltinCoeffs::from_params(&params2);
        assert!((beta(&params2, &coeffs2, 0.1).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn beta_with_linear_g_term() {
        // g(x) = B + x with B = 2: β(σ) = σ²(g(0) + g'(0) r0 σ^{-2}·σ²/σ²)
        // evaluated directly at r0 = 0.04, σ = 0.2, where x = 1.
        let params = ModelParams {
            b: 2.0,
            r0: 0.04,
            ..defaults()
        };
        let coeffs = ClosureCoeffs {
            f: |x: f64| -x,
            g: |x: f64| 2.0 + x,
        };
        let b = beta(&params, &coeffs, 0.2).unwrap();
        assert!((b - 0.12).abs() < 1e-15, "got {b}");
    }

    #[test]
    fn beta_rejects_nonpositive_g() {
        let params = defaults();
        let coeffs = ClosureCoeffs {
            f: |x: f64| -x,
            g: |_: f64| -1.0,
        };
        assert!(matches!(
            beta(&params, &coeffs, 1.0),
            Err(ModelError::NegativeDiffusion { .. })
        ));
    }

    #[test]
    fn domain_errors_on_nonpositive_sigma() {
        let params = defaults();
        let coeffs = BuiltinCoeffs::from_params(&params);
        assert!(alpha(&params, &coeffs, 0.0).is_err());
        assert!(beta(&params, &coeffs, -1.0).is_err());
    }

    #[test]
    fn asymptotic_coeffs_linear_f() {
        let coeffs = ClosureCoeffs {
            f: |x: f64| -x,
            g: |_: f64| 1.0,
        };
        let out = asymptotic_coeffs(&coeffs).unwrap();
        assert!((out.a - 1.0).abs() < 1e-9);
        assert!((out.b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_coeffs_with_three_halves_term() {
        // f(x) = x^{3/2} - 2x has f'(0) = -2; the x^{3/2} term contributes 0.
        let coeffs = ClosureCoeffs {
            f: |x: f64| x.powf(1.5) - 2.0 * x,
            g: |_: f64| 3.0,
        };
        let out = asymptotic_coeffs(&coeffs).unwrap();
        assert!((out.a - 2.0).abs() < 2e-6 * 2.0, "a = {}", out.a);
        assert!((out.b - 3.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_coeffs_builtin_recovery() {
        let params = ModelParams {
            a: 1.7,
            b: 0.6,
            k: 2.5,
            ..defaults()
        };
        let coeffs = BuiltinCoeffs::from_params(&params);
        let out = asymptotic_coeffs(&coeffs).unwrap();
        assert!((out.a - 1.7).abs() < 1e-6 * 1.7);
        assert!((out.b - 0.6).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_coeffs_rejects_f_not_vanishing() {
        let coeffs = ClosureCoeffs {
            f: |x: f64| 1.0 + x,
            g: |_: f64| 1.0,
        };
        match asymptotic_coeffs(&coeffs) {
            Err(ModelError::ConditionViolated(ConditionViolation::FZeroNonzero(v))) => {
                assert!((v - 1.0).abs() < 1e-6)
            }
            other => panic!("expected FZeroNonzero, got {other:?}"),
        }
    }

    #[test]
    fn asymptotic_coeffs_rejects_positive_slope() {
        let coeffs = ClosureCoeffs {
            f: |x: f64| x,
            g: |_: f64| 1.0,
        };
        assert!(matches!(
            asymptotic_coeffs(&coeffs),
            Err(ModelError::ConditionViolated(ConditionViolation::FSlopePositive(_)))
        ));
    }

    #[test]
    fn asymptotic_coeffs_rejects_nonpositive_g() {
        let coeffs = ClosureCoeffs {
            f: |x: f64| -x,
            g: |_: f64| 0.0,
        };
        assert!(matches!(
            asymptotic_coeffs(&coeffs),
            Err(ModelError::ConditionViolated(ConditionViolation::GZeroNotPositive(_)))
        ));
    }

    #[test]
    fn stylized_facts_pass_for_builtin_defaults() {
        let params = ModelParams {
            r0: 0.04,
            ..defaults()
        };
        let coeffs = BuiltinCoeffs::from_params(&params);
        let grid = log_spaced(1e-2, 1e3, 400);
        let report = validate_stylized_facts(&params, &coeffs, 0.4, &grid).unwrap();
        assert!(report.all_ok(), "{report:?}");
        assert!(report.persistence_final < 1e-6);
    }

    #[test]
    fn stylized_facts_flag_positive_drift() {
        let params = defaults();
        let coeffs = ClosureCoeffs {
            f: |_: f64| 1.0,
            g: |_: f64| 1.0,
        };
        let grid = log_spaced(1e-2, 1e3, 200);
        let report = validate_stylized_facts(&params, &coeffs, 0.4, &grid).unwrap();
        assert!(!report.mean_reversion_ok);
        assert!(report.worst_positive_alpha.is_some());
        // |α| σ^{-3} = 1 everywhere: also fails persistence.
        assert!(!report.long_memory_ok);
    }

    #[test]
    fn stylized_facts_flag_vanishing_vvol() {
        // β = B σ^{3/2} means β σ^{-2} → 0: encoded as g(x) = B x^{1/4} r0^{-1/4}.
        let params = defaults();
        let coeffs = ClosureCoeffs {
            f: |x: f64| -x,
            g: |x: f64| x.powf(0.25),
        };
        let grid = log_spaced(1e-2, 1e3, 200);
        let report = validate_stylized_facts(&params, &coeffs, 0.4, &grid).unwrap();
        assert!(!report.vvol_ok, "decaying β σ^{{-2}} must fail: {report:?}");
        assert!((report.vvol_trend - (-0.5)).abs() < 0.01);
        // The long-memory criterion is unaffected.
        assert!(report.long_memory_ok);
    }

    #[test]
    fn stylized_facts_reject_bad_grid() {
        let params = defaults();
        let coeffs = BuiltinCoeffs::from_params(&params);
        assert!(matches!(
            validate_stylized_facts(&params, &coeffs, 1.0, &[]),
            Err(ModelError::InvalidGrid)
        ));
        assert!(matches!(
            validate_stylized_facts(&params, &coeffs, 5.0, &[1.0, 2.0]),
            Err(ModelError::SigmaMinOutsideGrid { .. })
        ));
    }

    #[test]
    fn regime_matches_exemplar_magnitudes() {
        // σ² = 400/yr, Δt = 5 calendar minutes = 9.51e-6 yr, r0 = 0.04/yr.
        let sigma = 20.0f64;
        let dt = 5.0 / 525_600.0;
        let report = regime_diagnostics(sigma, 0.04, dt).unwrap();
        assert!((report.sigma2_dt - 0.0038).abs() < 2e-4);
        assert!((report.sigma2_over_r0 - 10_000.0).abs() < 1e-9);
        assert!(report.short_term_ok);
        assert!(report.high_vol_ok);
    }

    #[test]
    fn regime_boundary_fails_both_flags() {
        // σ² = r0 and Δt = 1/σ²: neither limit holds.
        let report = regime_diagnostics(0.2f64, 0.04, 25.0).unwrap();
        assert!(!report.short_term_ok);
        assert!(!report.high_vol_ok);
    }

    #[test]
    fn regime_rejects_nonpositive_input() {
        assert!(regime_diagnostics(0.0f64, 1.0, 1.0).is_err());
    }
}
