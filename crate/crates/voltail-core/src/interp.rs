//! 1-D interpolation: natural cubic splines and monotone (Fritsch–Carlson)
//! cubic Hermite interpolants.
//!
//! The spline is used to reconstruct smooth densities from grid samples; the
//! monotone interpolant backs CDF inversion, where overshoot is not allowed.

use thiserror::Error;

use crate::num::{lit, Real};

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("need at least {needed} knots, got {got}")]
    TooFewKnots { needed: usize, got: usize },
    #[error("knot abscissae must be strictly increasing (violation near index {index})")]
    NotIncreasing { index: usize },
    #[error("knot arrays have mismatched lengths ({xs} vs {ys})")]
    LengthMismatch { xs: usize, ys: usize },
}

fn check_knots<R: Real>(xs: &[R], ys: &[R], needed: usize) -> Result<(), InterpError> {
    if xs.len() != ys.len() {
        return Err(InterpError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < needed {
        return Err(InterpError::TooFewKnots {
            needed,
            got: xs.len(),
        });
    }
    for i in 1..xs.len() {
        if xs[i] <= xs[i - 1] {
            return Err(InterpError::NotIncreasing { index: i });
        }
    }
    Ok(())
}

fn locate<R: Real>(xs: &[R], x: R) -> usize {
    // Index of the interval [xs[i], xs[i+1]] containing x, clamped to the domain.
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 2] {
        return n - 2;
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone)]
pub struct CubicSpline<R> {
    xs: Vec<R>,
    ys: Vec<R>,
    second: Vec<R>,
}

impl<R: Real> CubicSpline<R> {
    pub fn new(xs: Vec<R>, ys: Vec<R>) -> Result<Self, InterpError> {
        check_knots(&xs, &ys, 3)?;
        let n = xs.len();
        let mut second = vec![R::zero(); n];
        let mut gamma = vec![R::zero(); n];
        let mut rhs = vec![R::zero(); n];
        let two = lit::<R>(2.0);
        let six = lit::<R>(6.0);

        // Thomas algorithm on the tridiagonal system for the second derivatives.
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let diag = two * (h0 + h1) - h0 * gamma[i - 1];
            gamma[i] = h1 / diag;
            let d = six * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            rhs[i] = (d - h0 * rhs[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            second[i] = rhs[i] - gamma[i] * second[i + 1];
        }
        Ok(Self { xs, ys, second })
    }

    /// Evaluate the spline; arguments outside the domain are clamped.
    pub fn eval(&self, x: R) -> R {
        let x = x.max(self.xs[0]).min(self.xs[self.xs.len() - 1]);
        let i = locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        let six = lit::<R>(6.0);
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / six
    }
}

/// Monotone piecewise-cubic interpolant (Fritsch–Carlson limiter).
///
/// If the data are monotone, the interpolant is monotone on every interval.
#[derive(Debug, Clone)]
pub struct MonotoneCubic<R> {
    xs: Vec<R>,
    ys: Vec<R>,
    slopes: Vec<R>,
}

impl<R: Real> MonotoneCubic<R> {
    pub fn new(xs: Vec<R>, ys: Vec<R>) -> Result<Self, InterpError> {
        check_knots(&xs, &ys, 2)?;
        let n = xs.len();
        let mut h = Vec::with_capacity(n - 1);
        let mut delta = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            h.push(xs[i + 1] - xs[i]);
            delta.push((ys[i + 1] - ys[i]) / h[i]);
        }
        let mut d = vec![R::zero(); n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            let two = lit::<R>(2.0);
            let three = lit::<R>(3.0);
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= R::zero() {
                    d[i] = R::zero();
                } else {
                    let w1 = two * h[i] + h[i - 1];
                    let w2 = h[i] + two * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            // One-sided endpoint slopes, limited to preserve monotonicity.
            let end = |h0: R, h1: R, d0: R, d1: R| -> R {
                let mut s = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
                if s * d0 <= R::zero() {
                    s = R::zero();
                } else if d0 * d1 <= R::zero() && s.abs() > three * d0.abs() {
                    s = three * d0;
                }
                s
            };
            d[0] = end(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, slopes: d })
    }

    /// Evaluate the interpolant; arguments outside the domain are clamped.
    pub fn eval(&self, x: R) -> R {
        let x = x.max(self.xs[0]).min(self.xs[self.xs.len() - 1]);
        let i = locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = lit::<R>(2.0);
        let three = lit::<R>(3.0);
        let h00 = two * t3 - three * t2 + R::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}
