//! Exact dimensional algebra over powers of the time unit.
//!
//! Every quantity in the volatility model carries a dimension `T^e` with `e`
//! an exact rational; volatility is `T^{-1/2}`, the SDE drift `T^{-3/2}`, the
//! diffusion coefficient `T^{-1}`, and every model parameter `T^{-1}`.
//! Exponent arithmetic is exact so dimension checks are bit-exact, never
//! subject to floating-point rounding.

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::num::Real;

/// Exact rational exponent of the time unit.
pub type Exponent = Ratio<i64>;

#[derive(Debug, Error)]
pub enum DimError {
    #[error("length mismatch: {dims} dimensions vs {weights} weights")]
    LengthMismatch { dims: usize, weights: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: TimeDim, right: TimeDim },
    #[error("no combination of the parameters has dimension inverse time")]
    NoInverseTimeCombination,
    #[error("no exponent combination with denominator <= {max_den} and |numerator| <= {max_num} found")]
    NoSolutionWithinBounds { max_num: i64, max_den: i64 },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Power of the time unit `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeDim {
    exponent: Exponent,
}

impl TimeDim {
    pub const fn from_exponent(exponent: Exponent) -> Self {
        Self { exponent }
    }

    /// `T^{num/den}`.
    pub fn new(num: i64, den: i64) -> Self {
        Self {
            exponent: Ratio::new(num, den),
        }
    }

    pub fn dimensionless() -> Self {
        Self::new(0, 1)
    }

    /// `[W] = T^{1/2}` for a Wiener process.
    pub fn wiener() -> Self {
        Self::new(1, 2)
    }

    /// `[σ] = T^{-1/2}`.
    pub fn volatility() -> Self {
        Self::new(-1, 2)
    }

    /// `[α] = T^{-3/2}` for the volatility drift.
    pub fn vol_drift() -> Self {
        Self::new(-3, 2)
    }

    /// `[β] = T^{-1}` for the volatility diffusion coefficient.
    pub fn vol_diffusion() -> Self {
        Self::new(-1, 1)
    }

    /// `[r] = T^{-1}` for a rate parameter.
    pub fn rate() -> Self {
        Self::new(-1, 1)
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponent == Ratio::new(0, 1)
    }

    /// `T^{a} * T^{b} = T^{a+b}`.
    pub fn mul(&self, other: TimeDim) -> TimeDim {
        Self {
            exponent: self.exponent + other.exponent,
        }
    }

    /// `(T^{a})^{p} = T^{ap}`.
    pub fn power(&self, p: Exponent) -> TimeDim {
        Self {
            exponent: self.exponent * p,
        }
    }

    pub fn inverse(&self) -> TimeDim {
        Self {
            exponent: -self.exponent,
        }
    }
}

impl std::fmt::Display for TimeDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_dimensionless() {
            write!(f, "T^0")
        } else if self.exponent.is_integer() {
            write!(f, "T^{}", self.exponent.numer())
        } else {
            write!(f, "T^{}/{}", self.exponent.numer(), self.exponent.denom())
        }
    }
}

/// Weighted product of dimensions: exponent `Σ wᵢ eᵢ`, exact.
pub fn combine(dims: &[TimeDim], weights: &[Exponent]) -> Result<TimeDim, DimError> {
    if dims.len() != weights.len() {
        return Err(DimError::LengthMismatch {
            dims: dims.len(),
            weights: weights.len(),
        });
    }
    let exponent = dims
        .iter()
        .zip(weights)
        .fold(Ratio::new(0, 1), |acc, (d, w)| acc + d.exponent * *w);
    Ok(TimeDim::from_exponent(exponent))
}

/// A value with an attached time dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<R> {
    pub value: R,
    pub dim: TimeDim,
}

impl<R: Real> Quantity<R> {
    pub fn new(value: R, dim: TimeDim) -> Self {
        Self { value, dim }
    }

    pub fn dimensionless(value: R) -> Self {
        Self::new(value, TimeDim::dimensionless())
    }

    /// Addition requires identical dimensions.
    pub fn try_add(&self, other: &Self) -> Result<Self, DimError> {
        if self.dim != other.dim {
            return Err(DimError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(Self::new(self.value + other.value, self.dim))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.value * other.value, self.dim.mul(other.dim))
    }
}

/// One row of a dimension check.
#[derive(Debug, Clone, Serialize)]
pub struct DimCheck {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

/// Result of checking the SDE coefficient dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct DimReport {
    pub checks: Vec<DimCheck>,
    pub pass: bool,
}

impl DimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DimReport serializes")
    }
}

/// Check that the SDE carries the canonical dimensions: `[σ] = T^{-1/2}`,
/// `[α] = T^{-3/2}`, `[β] = T^{-1}`, and `T^{-1}` for every parameter.
pub fn check_sde_dims(
    alpha_dim: TimeDim,
    beta_dim: TimeDim,
    sigma_dim: TimeDim,
    param_dims: &[TimeDim],
) -> DimReport {
    let mut checks = Vec::with_capacity(3 + param_dims.len());
    let push = |name: String, expected: TimeDim, actual: TimeDim, checks: &mut Vec<DimCheck>| {
        checks.push(DimCheck {
            name,
            expected: expected.to_string(),
            actual: actual.to_string(),
            pass: expected == actual,
        });
    };
    push("sigma".into(), TimeDim::volatility(), sigma_dim, &mut checks);
    push("alpha".into(), TimeDim::vol_drift(), alpha_dim, &mut checks);
    push("beta".into(), TimeDim::vol_diffusion(), beta_dim, &mut checks);
    for (i, dim) in param_dims.iter().enumerate() {
        push(format!("param[{i}]"), TimeDim::rate(), *dim, &mut checks);
    }
    let pass = checks.iter().all(|c| c.pass);
    DimReport { checks, pass }
}

/// Result of the parameter-reduction search: a named product with rational
/// exponents whose combined dimension is `T^{-1}`.
#[derive(Debug, Clone)]
pub struct ReducedParam {
    pub names: Vec<String>,
    pub exponents: Vec<Exponent>,
    pub dim: TimeDim,
}

impl ReducedParam {
    /// Human-readable product, e.g. `r0^-2 * r1^-1`.
    pub fn expression(&self) -> String {
        let mut parts = Vec::new();
        for (name, w) in self.names.iter().zip(&self.exponents) {
            if *w == Ratio::new(0, 1) {
                continue;
            }
            if w.is_integer() {
                parts.push(format!("{name}^{}", w.numer()));
            } else {
                parts.push(format!("{name}^({}/{})", w.numer(), w.denom()));
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join(" * ")
        }
    }
}

const REDUCE_MAX_NUM: i64 = 8;
const REDUCE_MAX_DEN: i64 = 4;

fn candidate_exponents() -> Vec<Exponent> {
    let mut set = std::collections::BTreeSet::new();
    for den in 1..=REDUCE_MAX_DEN {
        for num in -REDUCE_MAX_NUM..=REDUCE_MAX_NUM {
            if num != 0 {
                set.insert(Ratio::new(num, den));
            }
        }
    }
    set.into_iter().collect()
}

fn in_bounds(w: Exponent) -> bool {
    w.numer().abs() <= REDUCE_MAX_NUM && *w.denom() <= REDUCE_MAX_DEN && w != Ratio::new(0, 1)
}

/// Find rational exponents `wᵢ` with `Σ wᵢ eᵢ = -1`, i.e. a product of the
/// parameters with the dimension of inverse time.
///
/// The search prefers solutions with the fewest nonzero exponents. Supports of
/// equal size are visited in lexicographic index order, and candidate values
/// within a support in ascending order, so the result is deterministic.
/// Exponents are restricted to denominators ≤ 4 and |numerator| ≤ 8; a
/// combination outside that bound is reported as an error, not guessed.
pub fn reduce_parameters(params: &[(String, TimeDim)]) -> Result<ReducedParam, DimError> {
    if params.is_empty() || params.iter().all(|(_, d)| d.is_dimensionless()) {
        return Err(DimError::NoInverseTimeCombination);
    }
    let target = Ratio::new(-1i64, 1);
    let candidates = candidate_exponents();
    let n = params.len();

    for k in 1..=n {
        for support in k_subsets(n, k) {
            if support.iter().any(|&i| params[i].1.is_dimensionless()) {
                continue;
            }
            if let Some(ws) = solve_support(params, &support, &candidates, target) {
                let mut exponents = vec![Ratio::new(0, 1); n];
                for (slot, &i) in support.iter().enumerate() {
                    exponents[i] = ws[slot];
                }
                return Ok(ReducedParam {
                    names: params.iter().map(|(n, _)| n.clone()).collect(),
                    exponents,
                    dim: TimeDim::rate(),
                });
            }
        }
    }
    Err(DimError::NoSolutionWithinBounds {
        max_num: REDUCE_MAX_NUM,
        max_den: REDUCE_MAX_DEN,
    })
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if cur[i] != i + n - k {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return out;
        }
    }
}

fn solve_support(
    params: &[(String, TimeDim)],
    support: &[usize],
    candidates: &[Exponent],
    target: Exponent,
) -> Option<Vec<Exponent>> {
    let exps: Vec<Exponent> = support.iter().map(|&i| params[i].1.exponent()).collect();
    let k = support.len();
    let mut ws = vec![Ratio::new(0i64, 1); k];
    fn rec(
        exps: &[Exponent],
        candidates: &[Exponent],
        target: Exponent,
        depth: usize,
        acc: Exponent,
        ws: &mut Vec<Exponent>,
    ) -> bool {
        let k = exps.len();
        if depth == k - 1 {
            // Solve the last exponent exactly: w * e = target - acc.
            let e = exps[depth];
            if e == Ratio::new(0, 1) {
                return false;
            }
            let w = (target - acc) / e;
            if in_bounds(w) {
                ws[depth] = w;
                return true;
            }
            return false;
        }
        for &w in candidates {
            ws[depth] = w;
            if rec(exps, candidates, target, depth + 1, acc + w * exps[depth], ws) {
                return true;
            }
        }
        false
    }
    if rec(&exps, candidates, target, 0, Ratio::new(0, 1), &mut ws) {
        Some(ws)
    } else {
        None
    }
}

/// Coefficient pair sampled on a dimensionless grid by inverting
/// `α = σ³ f(r₀ σ^{-2})`, `β = σ² g(r₀ σ^{-2})`.
#[derive(Debug, Clone)]
pub struct SampledCoeffs<R> {
    pub x_grid: Vec<R>,
    pub f_values: Vec<R>,
    pub g_values: Vec<R>,
}

/// Recover the nondimensional pair `(f, g)` from dimensional coefficient
/// functions on a grid of `x = r₀ σ^{-2}` values.
pub fn nondimensionalize<R: Real>(
    alpha_fn: impl Fn(R) -> R,
    beta_fn: impl Fn(R) -> R,
    r0: R,
    x_grid: &[R],
) -> Result<SampledCoeffs<R>, DimError> {
    if r0 <= R::zero() {
        return Err(DimError::Domain(format!("r0 must be positive, got {r0}")));
    }
    let mut f_values = Vec::with_capacity(x_grid.len());
    let mut g_values = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        if x <= R::zero() {
            return Err(DimError::Domain(format!(
                "grid values must be positive, got {x}"
            )));
        }
        let sigma = (r0 / x).sqrt();
        let s2 = sigma * sigma;
        let s3 = s2 * sigma;
        f_values.push(alpha_fn(sigma) / s3);
        g_values.push(beta_fn(sigma) / s2);
    }
    Ok(SampledCoeffs {
        x_grid: x_grid.to_vec(),
        f_values,
        g_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Exponent {
        Ratio::new(n, d)
    }

    #[test]
    fn combine_doubles_wiener_exponent() {
        let out = combine(&[TimeDim::wiener()], &[r(2, 1)]).unwrap();
        assert_eq!(out, TimeDim::new(1, 1));
    }

    #[test]
    fn sigma_to_minus_two_is_a_timescale() {
        // σ^{-2} has the dimension of time.
        let out = combine(&[TimeDim::volatility()], &[r(-2, 1)]).unwrap();
        assert_eq!(out, TimeDim::new(1, 1));
    }

    #[test]
    fn r0_sigma_minus_two_is_dimensionless() {
        let out = combine(
            &[TimeDim::rate(), TimeDim::volatility()],
            &[r(1, 1), r(-2, 1)],
        )
        .unwrap();
        assert!(out.is_dimensionless());
    }

    #[test]
    fn combine_rejects_length_mismatch() {
        assert!(matches!(
            combine(&[TimeDim::rate()], &[]),
            Err(DimError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn sde_dims_pass_for_canonical_model() {
        let report = check_sde_dims(
            TimeDim::new(-3, 2),
            TimeDim::new(-1, 1),
            TimeDim::new(-1, 2),
            &[TimeDim::rate()],
        );
        assert!(report.pass);
        assert_eq!(report.checks.len(), 4);
    }

    #[test]
    fn sde_dims_flag_wrong_alpha() {
        let report = check_sde_dims(
            TimeDim::new(-1, 1),
            TimeDim::new(-1, 1),
            TimeDim::new(-1, 2),
            &[TimeDim::rate()],
        );
        assert!(!report.pass);
        let alpha = report.checks.iter().find(|c| c.name == "alpha").unwrap();
        assert!(!alpha.pass);
        let beta = report.checks.iter().find(|c| c.name == "beta").unwrap();
        assert!(beta.pass);
    }

    #[test]
    fn sde_dims_pass_with_no_parameters() {
        let report = check_sde_dims(
            TimeDim::new(-3, 2),
            TimeDim::new(-1, 1),
            TimeDim::new(-1, 2),
            &[],
        );
        assert!(report.pass);
        assert_eq!(report.checks.len(), 3);
    }

    #[test]
    fn dim_report_serializes() {
        let report = check_sde_dims(
            TimeDim::new(-3, 2),
            TimeDim::new(-1, 1),
            TimeDim::new(-1, 2),
            &[],
        );
        let json = report.to_json();
        assert!(json.contains("\"expected\": \"T^-3/2\""));
    }

    #[test]
    fn reduce_single_rate_is_identity() {
        let out = reduce_parameters(&[("r0".into(), TimeDim::rate())]).unwrap();
        assert_eq!(out.exponents, vec![r(1, 1)]);
        assert_eq!(out.expression(), "r0^1");
    }

    #[test]
    fn reduce_two_parameter_construction() {
        // Dimensions T^{9/4} and T^{-7/2}: the combination r0 * r1^{1/2} has
        // dimension T^{1/2}, so r0^{-2} r1^{-1} has dimension T^{-1}. Neither
        // parameter alone admits an in-bounds exponent.
        let out = reduce_parameters(&[
            ("r0".into(), TimeDim::new(9, 4)),
            ("r1".into(), TimeDim::new(-7, 2)),
        ])
        .unwrap();
        assert_eq!(out.exponents, vec![r(-2, 1), r(-1, 1)]);
        let total = combine(
            &[TimeDim::new(9, 4), TimeDim::new(-7, 2)],
            &out.exponents,
        )
        .unwrap();
        assert_eq!(total, TimeDim::rate());
    }

    #[test]
    fn reduce_prefers_fewest_nonzero_exponents() {
        let out = reduce_parameters(&[
            ("p0".into(), TimeDim::new(-2, 1)),
            ("p1".into(), TimeDim::new(1, 2)),
            ("p2".into(), TimeDim::dimensionless()),
        ])
        .unwrap();
        assert_eq!(out.exponents, vec![r(1, 2), r(0, 1), r(0, 1)]);
    }

    #[test]
    fn reduce_rejects_all_dimensionless() {
        let err = reduce_parameters(&[
            ("a".into(), TimeDim::dimensionless()),
            ("b".into(), TimeDim::dimensionless()),
        ])
        .unwrap_err();
        assert!(matches!(err, DimError::NoInverseTimeCombination));
    }

    #[test]
    fn reduce_reports_out_of_bounds_solutions() {
        // Only parameter has dimension T^{1/9}; the required exponent -9 is
        // outside the search bound.
        let err = reduce_parameters(&[("p".into(), TimeDim::new(1, 9))]).unwrap_err();
        assert!(matches!(err, DimError::NoSolutionWithinBounds { .. }));
    }

    #[test]
    fn quantity_addition_requires_matching_dims() {
        let a = Quantity::new(1.0f64, TimeDim::rate());
        let b = Quantity::new(2.0f64, TimeDim::rate());
        let c = Quantity::new(2.0f64, TimeDim::volatility());
        assert_eq!(a.try_add(&b).unwrap().value, 3.0);
        assert!(a.try_add(&c).is_err());
        let prod = a.mul(&c);
        assert_eq!(prod.dim, TimeDim::new(-3, 2));
    }

    #[test]
    fn nondimensionalize_linear_drift() {
        // α(σ) = -A r₀ σ corresponds to f(x) = -A x.
        let a = 1.5f64;
        let r0 = 0.04f64;
        let xs = [0.25, 1.0, 4.0, 9.0];
        let out = nondimensionalize(|s| -a * r0 * s, |s| 2.0 * s * s, r0, &xs).unwrap();
        for (x, f) in out.x_grid.iter().zip(&out.f_values) {
            assert!((f - (-a * x)).abs() < 1e-12);
        }
        for g in &out.g_values {
            assert!((g - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nondimensionalize_regularized_drift_at_x_one() {
        // α(σ) = k r₀^{3/2} - A r₀ σ gives f(1) = k - A at σ = √r₀.
        let (k, a, r0) = (0.7f64, 1.3f64, 0.09f64);
        let out = nondimensionalize(
            |s: f64| k * r0.powf(1.5) - a * r0 * s,
            |s| s * s,
            r0,
            &[1.0],
        )
        .unwrap();
        assert!((out.f_values[0] - (k - a)).abs() < 1e-12);
    }

    #[test]
    fn nondimensionalize_rejects_bad_domain() {
        assert!(nondimensionalize(|s: f64| s, |s| s, 1.0, &[-1.0]).is_err());
        assert!(nondimensionalize(|s: f64| s, |s| s, 0.0, &[1.0]).is_err());
    }
}
