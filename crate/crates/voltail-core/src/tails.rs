//! Tail probabilities of short-term log returns.
//!
//! Under the short-term approximation the return is `X = σ √Δt Z` with σ
//! drawn from the stationary volatility density and `Z` standard normal, so
//! the return pdf is the product-density integral
//!
//! ```text
//! p(x) = (2π Δt)^{-1/2} ∫₀^∞ q(z) exp[-x² / (2 z² Δt)] z⁻¹ dz,
//! ```
//!
//! and a `σ⁻⁴` volatility tail produces the inverse-cubic return tail
//! `P̄(x) = C r₀^{3/2} Δt^{3/2} x⁻³` with `P̄` scaling like `Δt^{3/2}`.
//!
//! The volatility density lives on `(0, ∞)`; folding the two-sided constant
//! integral onto that support halves it, so the tail constant used here is
//! `C = (C₀/3) √(2/π) · c_integral() / 2` with `c_integral() = 4`.

use serde::Serialize;
use thiserror::Error;

use crate::density::DensityGrid;
use crate::estimators::{self, EstimatorError, FitResult};
use crate::interp::{CubicSpline, InterpError};
use crate::num::{lit, Real};
use crate::quad::{self, QuadError, QuadResult};

#[derive(Debug, Error)]
pub enum TailsError {
    #[error("empty input")]
    EmptyInput,
    #[error("quadrature failed at x = {x}: {source}")]
    Quadrature { x: f64, source: QuadError },
    #[error("invalid tail curve: {0}")]
    InvalidCurve(String),
    #[error("density grid unusable for quadrature: {0}")]
    BadDensity(String),
    #[error("scaling fit needs {0}")]
    ScalingFit(String),
    #[error("x_ref {x_ref} outside curve support [{lo}, {hi}]")]
    WindowMismatch { x_ref: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailSource {
    Quadrature,
    McApprox,
    McExact,
    Asymptotic,
}

impl std::fmt::Display for TailSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TailSource::Quadrature => write!(f, "quadrature"),
            TailSource::McApprox => write!(f, "mc-approx"),
            TailSource::McExact => write!(f, "mc-exact"),
            TailSource::Asymptotic => write!(f, "asymptotic"),
        }
    }
}

/// Tail probability curve `P̄(x) = Prob(|X| ≥ x)` at a fixed Δt.
#[derive(Debug, Clone)]
pub struct TailCurve<R> {
    pub x_nodes: Vec<R>,
    pub pbar: Vec<R>,
    /// Wilson confidence bands for sample-based curves.
    pub ci: Option<(Vec<R>, Vec<R>)>,
    pub dt: R,
    pub source: TailSource,
    pub n_samples: u64,
}

impl<R: Real> TailCurve<R> {
    /// Validate monotonicity and range; values are capped at 1 and trailing
    /// zero entries (exhausted sample tails) are dropped.
    pub fn new(
        x_nodes: Vec<R>,
        pbar: Vec<R>,
        ci: Option<(Vec<R>, Vec<R>)>,
        dt: R,
        source: TailSource,
        n_samples: u64,
    ) -> Result<Self, TailsError> {
        if x_nodes.is_empty() || x_nodes.len() != pbar.len() {
            return Err(TailsError::InvalidCurve(
                "node/value length mismatch or empty".into(),
            ));
        }
        let mut keep = pbar.len();
        while keep > 0 && !(pbar[keep - 1] > R::zero()) {
            keep -= 1;
        }
        if keep == 0 {
            return Err(TailsError::InvalidCurve("all values zero".into()));
        }
        let mut x_nodes = x_nodes;
        let mut pbar = pbar;
        x_nodes.truncate(keep);
        pbar.truncate(keep);
        let ci = ci.map(|(mut lo, mut hi)| {
            lo.truncate(keep);
            hi.truncate(keep);
            (lo, hi)
        });
        for v in &mut pbar {
            if *v > R::one() {
                *v = R::one();
            }
        }
        let slack = lit::<R>(1e-12);
        for w in x_nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(TailsError::InvalidCurve("x nodes not ascending".into()));
            }
        }
        for w in pbar.windows(2) {
            if w[1] > w[0] * (R::one() + slack) {
                return Err(TailsError::InvalidCurve(format!(
                    "tail probabilities not non-increasing ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            x_nodes,
            pbar,
            ci,
            dt,
            source,
            n_samples,
        })
    }

    /// Interpolate `P̄(x)` log-log linearly between nodes.
    pub fn eval(&self, x: R) -> Result<R, TailsError> {
        let n = self.x_nodes.len();
        if x < self.x_nodes[0] || x > self.x_nodes[n - 1] {
            return Err(TailsError::WindowMismatch {
                x_ref: x.to_f64_lossy(),
                lo: self.x_nodes[0].to_f64_lossy(),
                hi: self.x_nodes[n - 1].to_f64_lossy(),
            });
        }
        let idx = self
            .x_nodes
            .partition_point(|&v| v <= x)
            .min(n - 1)
            .max(1);
        let (x0, x1) = (self.x_nodes[idx - 1], self.x_nodes[idx]);
        let (y0, y1) = (self.pbar[idx - 1], self.pbar[idx]);
        let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
        Ok((y0.ln() + t * (y1.ln() - y0.ln())).exp())
    }

    /// Audited fit window: the x-range where `P̄ ∈ [1e-5, 1e-2]`, and (for
    /// sample-based curves) at least 100 exceedances at the upper end.
    pub fn fit_window(&self) -> Option<(R, R)> {
        let mut pmin = lit::<R>(1e-5);
        let pmax = lit::<R>(1e-2);
        if self.n_samples > 0 {
            let floor = lit::<R>(100.0) / R::from_f64_lossy(self.n_samples as f64);
            pmin = pmin.max(floor);
        }
        let mut lo = None;
        let mut hi = None;
        for (x, p) in self.x_nodes.iter().zip(&self.pbar) {
            if *p <= pmax && lo.is_none() {
                lo = Some(*x);
            }
            if *p >= pmin {
                hi = Some(*x);
            }
        }
        match (lo, hi) {
            (Some(l), Some(h)) if h > l => Some((l, h)),
            _ => None,
        }
    }

    /// Log-log slope of the curve over a window.
    pub fn slope(&self, window: (R, R)) -> Result<FitResult<R>, TailsError> {
        Ok(estimators::loglog_slope(&self.x_nodes, &self.pbar, window)?)
    }

    /// CSV rows `x,pbar,ci_lo,ci_hi,source,dt`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,pbar,ci_lo,ci_hi,source,dt")?;
        for (i, (x, p)) in self.x_nodes.iter().zip(&self.pbar).enumerate() {
            match &self.ci {
                Some((lo, hi)) => writeln!(
                    w,
                    "{x},{p},{},{},{},{}",
                    lo[i], hi[i], self.source, self.dt
                )?,
                None => writeln!(w, "{x},{p},,,{},{}", self.source, self.dt)?,
            }
        }
        Ok(())
    }
}

/// Log-log spline over the strictly positive contiguous block of a density.
fn density_interpolant<R: Real>(
    q: &DensityGrid<R>,
) -> Result<(CubicSpline<R>, R, R), TailsError> {
    let n = q.sigma_nodes.len();
    // Largest contiguous run of positive values.
    let mut best = (0usize, 0usize);
    let mut start = None;
    for i in 0..=n {
        let positive = i < n && q.q_values[i] > R::zero();
        match (positive, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    let (s, e) = best;
    if e - s < 4 {
        return Err(TailsError::BadDensity(
            "fewer than 4 strictly positive nodes".into(),
        ));
    }
    let xs: Vec<R> = q.sigma_nodes[s..e].iter().map(|v| v.ln()).collect();
    let ys: Vec<R> = q.q_values[s..e].iter().map(|v| v.ln()).collect();
    let lo = q.sigma_nodes[s];
    let hi = q.sigma_nodes[e - 1];
    Ok((CubicSpline::new(xs, ys)?, lo, hi))
}

/// Return pdf by adaptive quadrature of the product-density integral, one
/// value per requested x node (only |x| matters; the pdf is symmetric).
pub fn return_pdf_quadrature<R: Real>(
    q: &DensityGrid<R>,
    dt: R,
    x_nodes: &[R],
) -> Result<Vec<R>, TailsError> {
    if x_nodes.is_empty() {
        return Err(TailsError::EmptyInput);
    }
    let (spline, z_lo, z_hi) = density_interpolant(q)?;
    let norm = (lit::<R>(2.0) * R::PI() * dt).sqrt().recip();
    let (t_lo, t_hi) = (z_lo.ln(), z_hi.ln());
    let mut out = Vec::with_capacity(x_nodes.len());
    for &x in x_nodes {
        let x = x.abs();
        let x2_over_2dt = x * x / (dt + dt);
        let integrand = |t: R| {
            let qv = spline.eval(t).exp();
            let e = -x2_over_2dt * (-(t + t)).exp();
            if e < lit::<R>(-700.0) {
                R::zero()
            } else {
                qv * e.exp()
            }
        };
        let res = quad::integrate(integrand, t_lo, t_hi, lit(1e-8), lit(1e-300)).map_err(|e| {
            TailsError::Quadrature {
                x: x.to_f64_lossy(),
                source: e,
            }
        })?;
        out.push(norm * res.value);
    }
    Ok(out)
}

/// Tail curve from pdf samples: `P̄(x) = 2 ∫ₓ^∞ p`, integrating a log-log
/// spline of the pdf between nodes and closing the far tail with the local
/// power law of the last two nodes.
pub fn tail_from_pdf<R: Real>(
    pdf: &[R],
    x_nodes: &[R],
    dt: R,
) -> Result<TailCurve<R>, TailsError> {
    if pdf.is_empty() || pdf.len() != x_nodes.len() {
        return Err(TailsError::EmptyInput);
    }
    let n = pdf.len();
    // Positive block for the log-log spline (x = 0 handled separately).
    let mut si = 0;
    while si < n && !(x_nodes[si] > R::zero() && pdf[si] > R::zero()) {
        si += 1;
    }
    if n - si < 4 {
        return Err(TailsError::BadDensity(
            "need at least 4 positive pdf nodes".into(),
        ));
    }
    for i in si..n {
        if !(pdf[i] > R::zero()) {
            return Err(TailsError::BadDensity(
                "pdf not strictly positive beyond its first positive node".into(),
            ));
        }
    }
    let lx: Vec<R> = x_nodes[si..].iter().map(|v| v.ln()).collect();
    let lp: Vec<R> = pdf[si..].iter().map(|v| v.ln()).collect();
    let spline = CubicSpline::new(lx, lp)?;

    // Far-tail closure: p ≈ c x^{-m} from the last two nodes.
    let m = (pdf[n - 2].ln() - pdf[n - 1].ln()) / (x_nodes[n - 1].ln() - x_nodes[n - 2].ln());
    let one = R::one();
    let tail_beyond = if m > one {
        pdf[n - 1] * x_nodes[n - 1] / (m - one)
    } else {
        R::zero()
    };

    // Cumulative from the right in log-x coordinates: ∫ p dx = ∫ p x d ln x.
    let mut pbar = vec![R::zero(); n];
    let two = lit::<R>(2.0);
    pbar[n - 1] = (two * tail_beyond).min(one);
    for i in (si..n - 1).rev() {
        let a = x_nodes[i].ln();
        let b = x_nodes[i + 1].ln();
        let seg = quad::integrate(
            |t: R| spline.eval(t).exp() * t.exp(),
            a,
            b,
            lit(1e-9),
            lit(1e-300),
        )
        .map_err(|e| TailsError::Quadrature {
            x: x_nodes[i].to_f64_lossy(),
            source: e,
        })?;
        pbar[i] = pbar[i + 1] + two * seg.value;
    }
    // Nodes at or below the first positive x (typically x = 0): add the mass
    // of the remaining strip by direct trapezoid on the raw pdf values.
    for i in (0..si).rev() {
        let width = x_nodes[i + 1] - x_nodes[i];
        pbar[i] = pbar[i + 1] + two * (pdf[i] + pdf[i + 1]) * width * lit::<R>(0.5);
    }
    TailCurve::new(x_nodes.to_vec(), pbar, None, dt, TailSource::Quadrature, 0)
}

/// Empirical tail curve with Wilson 95% confidence bands.
pub fn tail_from_samples<R: Real>(
    samples: &[R],
    x_nodes: &[R],
    dt: R,
    source: TailSource,
) -> Result<TailCurve<R>, TailsError> {
    if samples.is_empty() || x_nodes.is_empty() {
        return Err(TailsError::EmptyInput);
    }
    let mut abs: Vec<R> = samples.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = abs.len();
    let nf = R::from_usize_lossy(n);
    let z = lit::<R>(1.959_963_984_540_054);
    let z2 = z * z;
    let mut pbar = Vec::with_capacity(x_nodes.len());
    let mut lo = Vec::with_capacity(x_nodes.len());
    let mut hi = Vec::with_capacity(x_nodes.len());
    for &x in x_nodes {
        let below = abs.partition_point(|&v| v < x);
        let count = n - below;
        let p = R::from_usize_lossy(count) / nf;
        let denom = R::one() + z2 / nf;
        let center = (p + z2 / (nf + nf)) / denom;
        let half = z * (p * (R::one() - p) / nf + z2 / (lit::<R>(4.0) * nf * nf)).sqrt() / denom;
        pbar.push(p);
        lo.push((center - half).max(R::zero()));
        hi.push((center + half).min(R::one()));
    }
    TailCurve::new(x_nodes.to_vec(), pbar, Some((lo, hi)), dt, source, n as u64)
}

/// The constant integral `∫_{-∞}^{∞} |z|⁻⁵ exp(-z⁻²/2) dz`.
///
/// The substitution `u = z⁻²` turns each half into `½ ∫₀^∞ u e^{-u/2} du`, so
/// the two-sided value equals `∫₀^∞ u e^{-u/2} du = 4`.
pub fn c_integral<R: Real>() -> QuadResult<R> {
    quad::integrate_to_inf(
        |u: R| u * (-u * lit::<R>(0.5)).exp(),
        R::zero(),
        lit(1e-12),
        lit(1e-16),
    )
    .expect("smooth exponential integrand converges")
}

/// Asymptotic inverse-cubic tail `P̄(x) = C r₀^{3/2} Δt^{3/2} x⁻³`, capped at
/// 1, with `C = (C₀/3) √(2/π) · c_integral()/2` (the volatility density is
/// one-sided, which halves the two-sided constant integral).
pub fn asymptotic_tail<R: Real>(c0: R, r0: R, dt: R, x_nodes: &[R]) -> TailCurve<R> {
    let c_int: QuadResult<R> = c_integral();
    let three = lit::<R>(3.0);
    let c = c0 / three
        * (lit::<R>(2.0) / R::PI()).sqrt()
        * (c_int.value * lit::<R>(0.5));
    let amp = c * r0.powf(lit(1.5)) * dt.powf(lit(1.5));
    let one = R::one();
    let pbar: Vec<R> = x_nodes
        .iter()
        .map(|&x| {
            if x <= R::zero() {
                one
            } else {
                (amp / (x * x * x)).min(one)
            }
        })
        .collect();
    TailCurve {
        x_nodes: x_nodes.to_vec(),
        pbar,
        ci: None,
        dt,
        source: TailSource::Asymptotic,
        n_samples: 0,
    }
}

/// OLS slope of `ln P̄(x_ref)` against `ln Δt` across curves.
pub fn dt_scaling_fit<R: Real>(
    curves: &[TailCurve<R>],
    x_ref: R,
) -> Result<FitResult<R>, TailsError> {
    if curves.len() < 4 {
        return Err(TailsError::ScalingFit(format!(
            "at least 4 curves, got {}",
            curves.len()
        )));
    }
    let mut dts: Vec<R> = curves.iter().map(|c| c.dt).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dts.dedup();
    if dts.len() < 4 {
        return Err(TailsError::ScalingFit("4 distinct dt values".into()));
    }
    if dts[dts.len() - 1] / dts[0] < lit::<R>(10.0) {
        return Err(TailsError::ScalingFit(
            "dt values spanning at least one decade".into(),
        ));
    }
    let mut ln_dt = Vec::with_capacity(curves.len());
    let mut ln_p = Vec::with_capacity(curves.len());
    for c in curves {
        let p = c.eval(x_ref)?;
        if !(p > R::zero()) {
            return Err(TailsError::ScalingFit(format!(
                "P̄(x_ref) vanishes for dt = {}",
                c.dt
            )));
        }
        ln_dt.push(c.dt.ln());
        ln_p.push(p.ln());
    }
    let nr = R::from_usize_lossy(curves.len());
    let mx = ln_dt.iter().copied().sum::<R>() / nr;
    let my = ln_p.iter().copied().sum::<R>() / nr;
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    for (x, y) in ln_dt.iter().zip(&ln_p) {
        sxx += (*x - mx) * (*x - mx);
        sxy += (*x - mx) * (*y - my);
    }
    let slope = sxy / sxx;
    let mut sse = R::zero();
    for (x, y) in ln_dt.iter().zip(&ln_p) {
        let r = *y - my - slope * (*x - mx);
        sse += r * r;
    }
    let dof = R::from_usize_lossy((curves.len() - 2).max(1));
    let stderr = (sse / dof / sxx).sqrt();
    Ok(FitResult {
        estimate: slope,
        stderr,
        window: format!("x_ref = {:e}, {} curves", x_ref, curves.len()),
        n_used: curves.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{self, DensityGrid, DensitySource};
    use crate::model::{self, ModelParams};
    use crate::num::erfc;

    const TRADING_MINUTES_PER_YEAR: f64 = 252.0 * 6.5 * 60.0;

    fn five_minutes() -> f64 {
        5.0 / TRADING_MINUTES_PER_YEAR
    }

    #[test]
    fn c_integral_matches_riemann_oracle_and_exact_value() {
        // Brute-force midpoint rule on the original integrand
        // |z|^-5 exp(-z^-2/2), two-sided by symmetry.
        let (a, b, n) = (1e-2f64, 200.0, 4_000_000usize);
        let h = (b - a) / n as f64;
        let mut acc = 0.0f64;
        for i in 0..n {
            let z = a + (i as f64 + 0.5) * h;
            acc += z.powi(-5) * (-0.5 / (z * z)).exp();
        }
        let riemann = 2.0 * acc * h;
        let quadrature: QuadResult<f64> = c_integral();
        assert!(
            (quadrature.value - riemann).abs() < 5e-8,
            "quadrature {} vs riemann {riemann}",
            quadrature.value
        );
        assert!((quadrature.value - 4.0).abs() < 1e-8);
        assert!(quadrature.abs_error <= 1e-10);
    }

    #[test]
    fn c_integral_is_converged_and_symmetric() {
        // Tightening the tolerance must not move the value beyond 1e-9.
        let loose = quad::integrate_to_inf(|u: f64| u * (-u / 2.0).exp(), 0.0, 1e-10, 1e-14)
            .unwrap()
            .value;
        let tight = quad::integrate_to_inf(|u: f64| u * (-u / 2.0).exp(), 0.0, 1e-13, 1e-16)
            .unwrap()
            .value;
        assert!((loose - tight).abs() < 1e-9);
        // One-sided z-integral times two equals the two-sided value.
        let one_sided = 0.5
            * quad::integrate_to_inf(|u: f64| u * (-u / 2.0).exp(), 0.0, 1e-12, 1e-16)
                .unwrap()
                .value;
        let two_sided: QuadResult<f64> = c_integral();
        assert!((2.0 * one_sided - two_sided.value).abs() < 1e-12);
    }

    /// Narrow lognormal spike around σ = c on a log grid.
    fn spike_density(c: f64, width: f64) -> DensityGrid<f64> {
        let nodes = model::log_spaced(c * (-8.0 * width).exp(), c * (8.0 * width).exp(), 400);
        let q: Vec<f64> = nodes
            .iter()
            .map(|&s| {
                let t = (s.ln() - c.ln()) / width;
                (-0.5 * t * t).exp() / (s * width * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        let mut g = DensityGrid {
            sigma_nodes: nodes,
            q_values: q,
            norm_check: 1.0,
            source: DensitySource::ClosedForm,
            low_confidence: None,
        };
        g.norm_check = g.moment(0);
        g
    }

    #[test]
    fn pdf_quadrature_degenerates_to_normal_for_spike_density() {
        let c = 0.3f64;
        let dt = 1e-3f64;
        let q = spike_density(c, 1e-4);
        let var = c * c * dt;
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0 * 2.0 * var.sqrt()).collect();
        let pdf = return_pdf_quadrature(&q, dt, &xs).unwrap();
        for (x, p) in xs.iter().zip(&pdf) {
            let expected = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            assert!(
                ((p - expected) / expected).abs() <= 1e-3,
                "x = {x}: {p} vs {expected}"
            );
        }
    }

    #[test]
    fn pdf_quadrature_conserves_normalization() {
        let params = ModelParams::defaults(0.04);
        let grid = density::default_grid(0.04);
        let q = density::closed_form_stationary(&params, &grid).unwrap();
        let dt = five_minutes();
        // 2 ∫₀^∞ p(x) dx = 1; integrate p over a log-x grid plus a linear
        // strip near zero.
        let sr = (0.04f64).sqrt();
        let x_scale = sr * dt.sqrt();
        let lo = 1e-3 * x_scale;
        let hi = 400.0 * x_scale;
        let mass_low = {
            // p is flat near 0 on scales below lo: p(0) * lo bounds the strip.
            let p0 = return_pdf_quadrature(&q, dt, &[0.0]).unwrap()[0];
            let pl = return_pdf_quadrature(&q, dt, &[lo]).unwrap()[0];
            assert!((p0 - pl).abs() / p0 < 1e-4);
            0.5 * (p0 + pl) * lo
        };
        let body = quad::integrate(
            |t: f64| {
                let x = t.exp();
                return_pdf_quadrature(&q, dt, &[x]).unwrap()[0] * x
            },
            lo.ln(),
            hi.ln(),
            1e-7,
            1e-14,
        )
        .unwrap()
        .value;
        let total = 2.0 * (mass_low + body);
        assert!((total - 1.0).abs() < 1e-6, "total mass {total}");
    }

    #[test]
    fn quadrature_tail_matches_erfc_oracle() {
        // Independent route: P̄(x) = ∫ q(z) erfc(x / (z √(2Δt))) dz computed
        // directly, against the pdf → cumulative pipeline.
        let params = ModelParams::defaults(0.04);
        let grid = density::default_grid(0.04);
        let q = density::closed_form_stationary(&params, &grid).unwrap();
        let dt = five_minutes();
        let sr = 0.2f64;
        let x_scale = sr * dt.sqrt();
        let xs: Vec<f64> = model::log_spaced(0.05 * x_scale, 400.0 * x_scale, 160);
        let pdf = return_pdf_quadrature(&q, dt, &xs).unwrap();
        let curve = tail_from_pdf(&pdf, &xs, dt).unwrap();

        for (i, &x) in xs.iter().enumerate().step_by(31) {
            let oracle = quad::integrate(
                |t: f64| {
                    // z = e^t over the grid span.
                    let z = t.exp();
                    let qi = {
                        // piecewise interpolation consistent with the grid
                        let idx = grid.partition_point(|&g| g <= z).clamp(1, grid.len() - 1);
                        let (g0, g1) = (grid[idx - 1], grid[idx]);
                        let (q0, q1) = (q.q_values[idx - 1], q.q_values[idx]);
                        if q0 > 0.0 && q1 > 0.0 {
                            let u = (z.ln() - g0.ln()) / (g1.ln() - g0.ln());
                            (q0.ln() + u * (q1.ln() - q0.ln())).exp()
                        } else {
                            0.0
                        }
                    };
                    qi * erfc(x / (z * (2.0 * dt).sqrt())) * z
                },
                (1e-3 * sr_ln_guard(sr)).ln(),
                (1e3 * sr).ln(),
                1e-9,
                1e-30,
            )
            .unwrap()
            .value;
            if oracle > 1e-12 {
                let rel = (curve.pbar[i] - oracle).abs() / oracle;
                assert!(rel < 2e-3, "x = {x}: pipeline {} vs oracle {oracle}", curve.pbar[i]);
            }
        }
    }

    fn sr_ln_guard(sr: f64) -> f64 {
        sr
    }

    #[test]
    fn tail_from_pdf_is_one_at_zero() {
        let params = ModelParams::defaults(0.04);
        let grid = density::default_grid(0.04);
        let q = density::closed_form_stationary(&params, &grid).unwrap();
        let dt = five_minutes();
        let x_scale = 0.2 * dt.sqrt();
        let mut xs = vec![0.0f64];
        xs.extend(model::log_spaced(1e-3 * x_scale, 400.0 * x_scale, 200));
        let pdf = return_pdf_quadrature(&q, dt, &xs).unwrap();
        let curve = tail_from_pdf(&pdf, &xs, dt).unwrap();
        assert!((curve.pbar[0] - 1.0).abs() < 1e-5, "P̄(0) = {}", curve.pbar[0]);
        for w in curve.pbar.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sample_tail_of_standard_normal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 200_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                z
            })
            .collect();
        let xs = vec![0.5f64, 1.0, 1.96, 2.5];
        let curve = tail_from_samples(&samples, &xs, 1.0, TailSource::McApprox).unwrap();
        // P(|Z| >= 1.96) = 0.05.
        let (lo, hi) = curve.ci.as_ref().unwrap();
        assert!(lo[2] <= 0.05 && 0.05 <= hi[2], "bands [{}, {}]", lo[2], hi[2]);
        assert!((curve.pbar[2] - 0.05).abs() < 0.005);
    }

    #[test]
    fn sample_tail_x_zero_is_one() {
        let samples = vec![0.5f64, -1.0, 2.0];
        let curve = tail_from_samples(&samples, &[0.0, 1.5], 1.0, TailSource::McExact).unwrap();
        assert_eq!(curve.pbar[0], 1.0);
        assert!((curve.pbar[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sorted_route_equals_naive_counting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let xs = vec![0.1f64, 0.5, 1.0, 1.9];
        let curve = tail_from_samples(&samples, &xs, 1.0, TailSource::McApprox).unwrap();
        for (x, p) in xs.iter().zip(&curve.pbar) {
            let naive =
                samples.iter().filter(|v| v.abs() >= *x).count() as f64 / samples.len() as f64;
            assert_eq!(*p, naive);
        }
    }

    #[test]
    fn asymptotic_tail_scales_exactly() {
        let xs: Vec<f64> = model::log_spaced(0.01, 1.0, 30);
        let c0 = 0.39267246150579366;
        let r0 = 0.04;
        let a = asymptotic_tail(c0, r0, five_minutes(), &xs);
        let b = asymptotic_tail(c0, r0, 2.0 * five_minutes(), &xs);
        let factor = 2.0f64.powf(1.5);
        for (pa, pb) in a.pbar.iter().zip(&b.pbar) {
            if *pb < 1.0 {
                assert!((pb / pa - factor).abs() < 1e-13);
            }
        }
        // Doubling x divides by 8.
        let xs2: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let c = asymptotic_tail(c0, r0, five_minutes(), &xs2);
        for (pa, pc) in a.pbar.iter().zip(&c.pbar) {
            if *pa < 1.0 {
                assert!((pa / pc - 8.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymptote_matches_quadrature_within_five_percent() {
        let params = ModelParams::defaults(0.04);
        let grid = density::default_grid(0.04);
        let q = density::closed_form_stationary(&params, &grid).unwrap();
        let dt = five_minutes();
        let sr = 0.2f64;
        let x_scale = sr * dt.sqrt();
        let xs: Vec<f64> = model::log_spaced(0.05 * x_scale, 400.0 * x_scale, 220);
        let pdf = return_pdf_quadrature(&q, dt, &xs).unwrap();
        let curve = tail_from_pdf(&pdf, &xs, dt).unwrap();
        let fit = density::tail_fit(&q, (10.0 * sr, 100.0 * sr), 0.04).unwrap();
        let asym = asymptotic_tail(fit.c0, 0.04, dt, &xs);
        // Compare on the window where σ²/r0 ∈ [10², 10⁴] maps to x.
        for (i, &x) in xs.iter().enumerate() {
            if x >= 10.0 * x_scale && x <= 100.0 * x_scale {
                let rel = (asym.pbar[i] - curve.pbar[i]).abs() / curve.pbar[i];
                assert!(rel <= 0.05, "x/x_scale = {}: rel {rel}", x / x_scale);
            }
        }
    }

    #[test]
    fn quadrature_slope_is_inverse_cubic() {
        let params = ModelParams::defaults(0.04);
        let grid = density::default_grid(0.04);
        let q = density::closed_form_stationary(&params, &grid).unwrap();
        let dt = five_minutes();
        let x_scale = 0.2 * dt.sqrt();
        let xs: Vec<f64> = model::log_spaced(0.05 * x_scale, 400.0 * x_scale, 220);
        let pdf = return_pdf_quadrature(&q, dt, &xs).unwrap();
        let curve = tail_from_pdf(&pdf, &xs, dt).unwrap();
        let window = curve.fit_window().expect("window exists");
        let slope = curve.slope(window).unwrap();
        assert!(
            (slope.estimate + 3.0).abs() <= 0.10,
            "slope {} over {:?}",
            slope.estimate,
            window
        );
    }

    #[test]
    fn scaling_fit_recovers_three_halves_exactly_from_asymptote() {
        let c0 = 0.39267246150579366;
        let r0 = 0.04;
        let xs: Vec<f64> = model::log_spaced(1e-3, 1.0, 200);
        let curves: Vec<TailCurve<f64>> = [5.0, 10.0, 30.0, 60.0, 120.0]
            .iter()
            .map(|m| {
                let dt = m / TRADING_MINUTES_PER_YEAR;
                asymptotic_tail(c0, r0, dt, &xs)
            })
            .collect();
        let fit = dt_scaling_fit(&curves, 0.05).unwrap();
        assert!((fit.estimate - 1.5).abs() < 1e-12, "slope {}", fit.estimate);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn scaling_fit_rejects_degenerate_input() {
        let xs: Vec<f64> = model::log_spaced(1e-3, 1.0, 50);
        let c = asymptotic_tail(0.4, 0.04, 1e-5, &xs);
        assert!(matches!(
            dt_scaling_fit(&[c.clone(), c.clone(), c.clone()], 0.05),
            Err(TailsError::ScalingFit(_))
        ));
        let close: Vec<TailCurve<f64>> = [1.0, 1.5, 2.0, 3.0]
            .iter()
            .map(|m| asymptotic_tail(0.4, 0.04, m * 1e-5, &xs))
            .collect();
        assert!(matches!(
            dt_scaling_fit(&close, 0.05),
            Err(TailsError::ScalingFit(_))
        ));
        let fine: Vec<TailCurve<f64>> = [1.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|m| asymptotic_tail(0.4, 0.04, m * 1e-5, &xs))
            .collect();
        assert!(matches!(
            dt_scaling_fit(&fine, 1e9),
            Err(TailsError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn curve_construction_enforces_invariants() {
        assert!(TailCurve::new(vec![1.0f64, 2.0], vec![0.5, 0.9], None, 1.0, TailSource::Quadrature, 0).is_err());
        assert!(TailCurve::new(vec![2.0f64, 1.0], vec![0.9, 0.5], None, 1.0, TailSource::Quadrature, 0).is_err());
        let capped =
            TailCurve::new(vec![1.0f64, 2.0], vec![1.7, 0.5], None, 1.0, TailSource::Quadrature, 0)
                .unwrap();
        assert_eq!(capped.pbar[0], 1.0);
        // Trailing zeros are dropped.
        let truncated = TailCurve::new(
            vec![1.0f64, 2.0, 3.0],
            vec![0.5, 0.1, 0.0],
            None,
            1.0,
            TailSource::McApprox,
            100,
        )
        .unwrap();
        assert_eq!(truncated.x_nodes.len(), 2);
    }
}
