//! Stationary probability density of volatility, three ways: closed form for
//! the built-in model, a zero-flux stationary Fokker–Planck solve for any
//! coefficient pair, and histograms of simulated or sampled volatilities.
//!
//! For the built-in model the zero-flux first integral `α q = ½ (β² q)'`
//! integrates to
//!
//! ```text
//! q(σ) = N σ⁻⁴ exp[ -(2 k r₀^{3/2} / 3B²) σ⁻³ + (A r₀ / B²) σ⁻² ]
//! ```
//!
//! which decays like `σ⁻⁴` at large σ and vanishes with all derivatives at
//! σ = 0 as long as `k > 0`. With `k = 0` the exponential factor blows up as
//! σ → 0 and no normalizable stationary density exists.

use serde::Serialize;
use thiserror::Error;

use crate::estimators::{self, EstimatorError, FitResult};
use crate::interp::{InterpError, MonotoneCubic};
use crate::model::{self, ModelParams, VolCoefficients};
use crate::num::{lit, Real};
use crate::quad::{self, QuadError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("no normalizable stationary density: k = 0 (bare asymptotic model)")]
    NotNormalizable,
    #[error("stationary density not integrable on the grid (diverges at the {end} end)")]
    NonIntegrable { end: GridEnd },
    #[error("empty sample set")]
    EmptySamples,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("grid must span at least four decades around sqrt(r0)")]
    GridTooNarrow,
    #[error("density is not normalized (norm_check = {norm_check})")]
    NonNormalized { norm_check: f64 },
    #[error("invalid fit window: {0}")]
    Window(String),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridEnd {
    Lower,
    Upper,
}

impl std::fmt::Display for GridEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridEnd::Lower => write!(f, "lower"),
            GridEnd::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensitySource {
    ClosedForm,
    Fpe,
    Histogram,
}

impl std::fmt::Display for DensitySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DensitySource::ClosedForm => write!(f, "closed-form"),
            DensitySource::Fpe => write!(f, "fpe"),
            DensitySource::Histogram => write!(f, "histogram"),
        }
    }
}

/// Stationary density sampled on an ascending (log-spaced) volatility grid.
#[derive(Debug, Clone)]
pub struct DensityGrid<R> {
    pub sigma_nodes: Vec<R>,
    pub q_values: Vec<R>,
    /// `∫ q dσ` as computed by the producing routine.
    pub norm_check: R,
    pub source: DensitySource,
    /// For histogram grids: bins with fewer than 10 counts.
    pub low_confidence: Option<Vec<bool>>,
}

impl<R: Real> DensityGrid<R> {
    /// Trapezoid integral of `σ^p q(σ)` over the grid.
    pub fn moment(&self, p: i32) -> R {
        let mut acc = R::zero();
        for i in 1..self.sigma_nodes.len() {
            let h = self.sigma_nodes[i] - self.sigma_nodes[i - 1];
            let fa = self.sigma_nodes[i - 1].powi(p) * self.q_values[i - 1];
            let fb = self.sigma_nodes[i].powi(p) * self.q_values[i];
            acc += (fa + fb) * h * lit::<R>(0.5);
        }
        acc
    }

    /// L1 distance between the bin masses of two grids on identical nodes.
    pub fn l1_distance(&self, other: &DensityGrid<R>) -> R {
        assert_eq!(self.sigma_nodes.len(), other.sigma_nodes.len());
        let mut acc = R::zero();
        for i in 1..self.sigma_nodes.len() {
            let h = self.sigma_nodes[i] - self.sigma_nodes[i - 1];
            let half = lit::<R>(0.5);
            let ma = (self.q_values[i - 1] + self.q_values[i]) * h * half;
            let mb = (other.q_values[i - 1] + other.q_values[i]) * h * half;
            acc += (ma - mb).abs();
        }
        acc
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sigma,q,source")?;
        for (s, q) in self.sigma_nodes.iter().zip(&self.q_values) {
            writeln!(w, "{s},{q},{}", self.source)?;
        }
        Ok(())
    }
}

/// Default log-spaced grid: 2048 nodes covering `[1e-3, 1e3]·√r₀`.
pub fn default_grid<R: Real>(r0: R) -> Vec<R> {
    let sr = r0.sqrt();
    model::log_spaced(lit::<R>(1e-3) * sr, lit::<R>(1e3) * sr, 2048)
}

struct ClosedForm<R> {
    c3: R,
    c2: R,
    log_n: R,
}

impl<R: Real> ClosedForm<R> {
    fn new(params: &ModelParams<R>) -> Result<Self, DensityError> {
        params.validate()?;
        if !(params.k > R::zero()) {
            return Err(DensityError::NotNormalizable);
        }
        let b2 = params.b * params.b;
        let c3 = lit::<R>(2.0 / 3.0) * params.k * params.r0.powf(lit(1.5)) / b2;
        let c2 = params.a * params.r0 / b2;
        // Unnormalized mass in u = 1/σ coordinates: ∫₀^∞ u² exp(-3c₃u³/... )
        // with the exponent shifted by its maximum to avoid overflow.
        let phi_max = Self::phi_max(c3, c2);
        let mass = quad::integrate_to_inf(
            |u: R| u * u * (-(c3 * u - c2) * u * u - phi_max).exp(),
            R::zero(),
            lit(1e-10),
            lit(1e-300),
        )?;
        // q = exp(phi(σ) - phi_max) σ⁻⁴ / mass, so log N = -phi_max - ln(mass).
        let log_n = -phi_max - mass.value.ln();
        Ok(Self { c3, c2, log_n })
    }

    fn phi_max(c3: R, c2: R) -> R {
        // φ(u) = -c₃u³ + c₂u² has its maximum at u* = 2c₂/(3c₃).
        if c2 <= R::zero() {
            return R::zero();
        }
        let ustar = lit::<R>(2.0 / 3.0) * c2 / c3;
        (c2 - c3 * ustar) * ustar * ustar
    }

    fn log_q(&self, sigma: R) -> R {
        let u = sigma.recip();
        self.log_n - (self.c3 * u - self.c2) * u * u - lit::<R>(4.0) * sigma.ln()
    }

    fn q(&self, sigma: R) -> R {
        self.log_q(sigma).exp()
    }
}

/// Closed-form stationary density of the built-in model on the given grid.
///
/// Requires `k > 0`; the normalization constant is fixed by adaptive
/// quadrature (relative tolerance 1e-10) under the substitution `u = 1/σ`,
/// which turns the essential singularity at σ = 0 into superexponential decay.
pub fn closed_form_stationary<R: Real>(
    params: &ModelParams<R>,
    grid: &[R],
) -> Result<DensityGrid<R>, DensityError> {
    let cf = ClosedForm::new(params)?;
    let q_values: Vec<R> = grid.iter().map(|&s| cf.q(s)).collect();
    // Verify normalization of the final density by an independent pass.
    let check = quad::integrate_to_inf(
        |u: R| {
            if u <= R::zero() {
                R::zero()
            } else {
                cf.q(u.recip()) / (u * u)
            }
        },
        R::zero(),
        lit(1e-10),
        lit(1e-300),
    )?;
    Ok(DensityGrid {
        sigma_nodes: grid.to_vec(),
        q_values,
        norm_check: check.value,
        source: DensitySource::ClosedForm,
    low_confidence: None,
    })
}

/// Normalization prefactor `N` of the closed form (`q → N σ⁻⁴` at large σ).
pub fn closed_form_prefactor<R: Real>(params: &ModelParams<R>) -> Result<R, DensityError> {
    Ok(ClosedForm::new(params)?.log_n.exp())
}

/// `⟨σ²⟩` of the built-in stationary density, by quadrature in `u = 1/σ`.
pub fn closed_form_mean_square<R: Real>(params: &ModelParams<R>) -> Result<R, DensityError> {
    let b2 = params.b * params.b;
    if !(params.k > R::zero()) {
        return Err(DensityError::NotNormalizable);
    }
    params.validate()?;
    let c3 = lit::<R>(2.0 / 3.0) * params.k * params.r0.powf(lit(1.5)) / b2;
    let c2 = params.a * params.r0 / b2;
    let phi_max = ClosedForm::phi_max(c3, c2);
    let phi = move |u: R| -(c3 * u - c2) * u * u - phi_max;
    let num = quad::integrate_to_inf(|u: R| phi(u).exp(), R::zero(), lit(1e-10), lit(1e-300))?;
    let den =
        quad::integrate_to_inf(|u: R| u * u * phi(u).exp(), R::zero(), lit(1e-10), lit(1e-300))?;
    Ok(num.value / den.value)
}

/// Root-mean-square stationary volatility for any model: closed form when the
/// coefficients are the built-in family, otherwise via the stationary solve
/// on the default grid.
pub fn stationary_rms<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
) -> Result<R, DensityError> {
    if let Some(builtin) = coeffs.builtin() {
        if builtin.k > R::zero() {
            let p = ModelParams {
                a: builtin.a,
                b: builtin.b,
                k: builtin.k,
                ..*params
            };
            return Ok(closed_form_mean_square(&p)?.sqrt());
        }
    }
    let grid = default_grid(params.r0);
    let density = solve_stationary_fpe(params, coeffs, &grid, Boundary::ZeroFlux)?;
    Ok(density.moment(2).sqrt())
}

/// Boundary condition of the stationary solve. Zero probability flux is the
/// only condition compatible with a normalizable density on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    ZeroFlux,
}

/// Solve the stationary Kolmogorov forward equation `(α q)' = ½ (β² q)''`
/// with zero flux for an arbitrary coefficient pair.
///
/// The first integral gives `d ln(β² q)/dσ = 2α/β²`; the right-hand side is
/// accumulated between grid nodes with Gauss–Kronrod quadrature, exponentiated
/// with a max-shift, divided by `β²`, and normalized on the grid.
pub fn solve_stationary_fpe<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    grid: &[R],
    _boundary: Boundary,
) -> Result<DensityGrid<R>, DensityError> {
    let n = grid.len();
    if n < 16 {
        return Err(DensityError::GridTooNarrow);
    }
    let sr = params.r0.sqrt();
    let hundred = lit::<R>(100.0);
    if grid[0] > sr / hundred || grid[n - 1] < sr * hundred {
        return Err(DensityError::GridTooNarrow);
    }

    let ratio = |s: R| -> Result<R, DensityError> {
        let a = model::alpha(params, coeffs, s)?;
        let b = model::beta(params, coeffs, s)?;
        Ok(lit::<R>(2.0) * a / (b * b))
    };

    // ln u with u = β² q, accumulated from the first node.
    let mut log_u = Vec::with_capacity(n);
    log_u.push(R::zero());
    for i in 1..n {
        let seg = quad::integrate(
            |s| ratio(s).unwrap_or(R::nan()),
            grid[i - 1],
            grid[i],
            lit(1e-12),
            lit(1e-14),
        )?;
        if !seg.value.is_finite() {
            // Re-evaluate to surface the underlying model error.
            ratio(grid[i - 1])?;
            ratio(grid[i])?;
        }
        let prev = *log_u.last().unwrap();
        log_u.push(prev + seg.value);
    }

    let mut log_q = Vec::with_capacity(n);
    for (i, &s) in grid.iter().enumerate() {
        let b = model::beta(params, coeffs, s)?;
        log_q.push(log_u[i] - lit::<R>(2.0) * b.ln());
    }

    // Normalizability on the grid: the log-space mass density q·σ must peak
    // in the interior, otherwise the integral is boundary-dominated and the
    // normalization diverges as the grid extends.
    let log_mass: Vec<R> = grid
        .iter()
        .zip(&log_q)
        .map(|(&s, &lq)| lq + s.ln())
        .collect();
    let (imax, _) = log_mass
        .iter()
        .enumerate()
        .fold((0usize, R::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if imax == 0 {
        return Err(DensityError::NonIntegrable {
            end: GridEnd::Lower,
        });
    }
    if imax == n - 1 {
        return Err(DensityError::NonIntegrable {
            end: GridEnd::Upper,
        });
    }

    let shift = log_q.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
    let mut q: Vec<R> = log_q.iter().map(|&v| (v - shift).exp()).collect();
    let mut mass = R::zero();
    for i in 1..n {
        mass += (q[i - 1] + q[i]) * (grid[i] - grid[i - 1]) * lit::<R>(0.5);
    }
    if !mass.is_finite() || mass <= R::zero() {
        return Err(DensityError::NonIntegrable {
            end: GridEnd::Upper,
        });
    }
    for v in &mut q {
        *v = *v / mass;
    }

    Ok(DensityGrid {
        sigma_nodes: grid.to_vec(),
        q_values: q,
        norm_check: R::one(),
        source: DensitySource::Fpe,
        low_confidence: None,
    })
}

/// Histogram density estimate over log-spaced bin edges. Bin values are
/// `count / (n · width)`; bins with fewer than 10 counts are flagged.
pub fn histogram_density<R: Real>(
    samples: &[R],
    edges: &[R],
) -> Result<DensityGrid<R>, DensityError> {
    if samples.is_empty() {
        return Err(DensityError::EmptySamples);
    }
    if samples.len() < 10_000 {
        return Err(DensityError::InsufficientSamples {
            needed: 10_000,
            got: samples.len(),
        });
    }
    let mut counts = vec![0u64; edges.len() - 1];
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    for &s in samples {
        if s < lo || s >= hi {
            continue;
        }
        let idx = match edges.binary_search_by(|e| e.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let last = counts.len() - 1;
        counts[idx.min(last)] += 1;
    }
    histogram_from_counts(edges, &counts, samples.len() as u64)
}

/// Build a histogram [`DensityGrid`] from precomputed bin counts (used by the
/// streaming simulation accumulator).
pub fn histogram_from_counts<R: Real>(
    edges: &[R],
    counts: &[u64],
    n_total: u64,
) -> Result<DensityGrid<R>, DensityError> {
    if n_total == 0 {
        return Err(DensityError::EmptySamples);
    }
    assert_eq!(counts.len() + 1, edges.len());
    let n = R::from_f64_lossy(n_total as f64);
    let mut nodes = Vec::with_capacity(counts.len());
    let mut q = Vec::with_capacity(counts.len());
    let mut low_conf = Vec::with_capacity(counts.len());
    let mut included = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        let width = edges[i + 1] - edges[i];
        nodes.push((edges[i] * edges[i + 1]).sqrt());
        q.push(R::from_f64_lossy(c as f64) / (n * width));
        low_conf.push(c < 10);
        included += c;
    }
    Ok(DensityGrid {
        sigma_nodes: nodes,
        q_values: q,
        norm_check: R::from_f64_lossy(included as f64) / n,
        source: DensitySource::Histogram,
        low_confidence: Some(low_conf),
    })
}

/// Power-law tail fit of a density over a σ window.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "R: Serialize"))]
pub struct TailFit<R> {
    pub exponent: FitResult<R>,
    /// Fitted prefactor `c` in `q ≈ c σ^{exponent}`.
    pub prefactor: R,
    /// Nondimensional constant `C₀ = c / r₀^{3/2}` for a σ⁻⁴ tail.
    pub c0: R,
}

/// Least-squares fit of `ln q` against `ln σ` over `[σ_lo, σ_hi]`, reporting
/// the `σ⁻⁴`-law constant `C₀ = prefactor / r₀^{3/2}`.
pub fn tail_fit<R: Real>(
    density: &DensityGrid<R>,
    window: (R, R),
    r0: R,
) -> Result<TailFit<R>, DensityError> {
    let (lo, hi) = window;
    let n = density.sigma_nodes.len();
    let slack = lit::<R>(1.0 + 1e-9);
    if lo * slack < density.sigma_nodes[0] || hi > density.sigma_nodes[n - 1] * slack {
        return Err(DensityError::Window(format!(
            "window [{lo:e}, {hi:e}] outside grid span"
        )));
    }
    if lo * lo / r0 < lit::<R>(100.0) {
        return Err(DensityError::Window(
            "window start must satisfy sigma_lo^2 / r0 >= 100".into(),
        ));
    }
    if hi < lo * lit::<R>(10.0) {
        return Err(DensityError::Window(
            "window narrower than one decade".into(),
        ));
    }
    // Exclude empty and low-confidence bins from the fit.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let s = density.sigma_nodes[i];
        if s < lo || s > hi {
            continue;
        }
        if density.q_values[i] <= R::zero() {
            continue;
        }
        if let Some(flags) = &density.low_confidence {
            if flags[i] {
                continue;
            }
        }
        xs.push(s);
        ys.push(density.q_values[i]);
    }
    let (fit, prefactor) = estimators::loglog_fit(&xs, &ys, (lo, hi))?;
    let c0 = prefactor / r0.powf(lit(1.5));
    Ok(TailFit {
        exponent: fit,
        prefactor,
        c0,
    })
}

/// Reusable monotone-cubic inverse of a density grid's CDF.
pub struct CdfInverse<R> {
    interp: MonotoneCubic<R>,
}

impl<R: Real> CdfInverse<R> {
    /// Build the inverse CDF; rejects densities whose recorded normalization
    /// is off by more than 1e-3.
    pub fn build(density: &DensityGrid<R>) -> Result<Self, DensityError> {
        let tol = lit::<R>(1e-3);
        if (density.norm_check - R::one()).abs() > tol {
            return Err(DensityError::NonNormalized {
                norm_check: density.norm_check.to_f64_lossy(),
            });
        }
        let nodes = &density.sigma_nodes;
        let mut cdf = Vec::with_capacity(nodes.len());
        cdf.push(R::zero());
        let half = lit::<R>(0.5);
        for i in 1..nodes.len() {
            let inc =
                (density.q_values[i - 1] + density.q_values[i]) * (nodes[i] - nodes[i - 1]) * half;
            let prev = *cdf.last().unwrap();
            cdf.push(prev + inc);
        }
        let total = *cdf.last().unwrap();
        // Keep only strictly increasing CDF knots so the inverse is well defined.
        let mut xs = Vec::with_capacity(cdf.len());
        let mut ys = Vec::with_capacity(cdf.len());
        for (i, &c) in cdf.iter().enumerate() {
            let c = c / total;
            if xs.last().map_or(true, |&last| c > last) {
                xs.push(c);
                ys.push(nodes[i]);
            }
        }
        Ok(Self {
            interp: MonotoneCubic::new(xs, ys)?,
        })
    }

    /// Volatility at CDF level `u` (clamped to the grid span).
    pub fn eval(&self, u: R) -> R {
        self.interp.eval(u)
    }
}

/// Draw `n` volatilities from a normalized density grid by monotone-cubic
/// inversion of the cumulative distribution. Deterministic under `seed`.
pub fn inverse_cdf_sampler<R: Real>(
    density: &DensityGrid<R>,
    n: usize,
    seed: u64,
) -> Result<Vec<R>, DensityError> {
    let inverse = CdfInverse::build(density)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            inverse.eval(R::from_f64_lossy(u))
        })
        .collect())
}
