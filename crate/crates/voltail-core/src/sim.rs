//! Monte Carlo integration of the volatility SDE and the joint price process.
//!
//! The default scheme integrates the reciprocal process `v = 1/σ`. By the
//! Itô chain rule,
//!
//! ```text
//! dv = [ -v² α(1/v) + v³ β(1/v)² ] dt - v² β(1/v) dW₂,
//! ```
//!
//! and for the built-in model this is
//! `dv = [A r₀ v - k r₀^{3/2} v² + B²/v] dt - B dW₂` with *constant* diffusion
//! `B`: the transform removes the superdiffusive `σ²` coefficient that makes
//! explicit stepping of the σ equation explode. The built-in kernel advances
//! the three drift components by their exact flows (the `1/v` term integrates
//! to `v ↦ √(v² + 2B²dt)`), then applies the diffusion increment.
//!
//! Per-step diffusion displacement is kept below a fixed budget everywhere in
//! state space by adaptive substepping: a step at volatility σ is divided into
//! `⌈4 B² σ² dt / 0.01⌉` substeps, so tail excursions are resolved at their own
//! scale while bulk steps pay no overhead. Cost concentrates only in the rare
//! high-volatility excursions (UNDER 2% overall for the default model).
//!
//! Every path draws from its own counter-derived ChaCha stream, so ensembles
//! are bit-reproducible regardless of how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{self, DensityError};
use crate::model::{ModelParams, VolCoefficients};
use crate::num::{lit, Real};

/// Relative displacement budget per substep (squared for the diffusion part).
const STEP_BUDGET: f64 = 0.01;
/// Safety factor applied to the substep count.
const STEP_SAFETY: f64 = 4.0;
/// Hard ceiling on substeps per global step.
const MAX_SUBSTEPS: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("scheme unstable: {fraction:.3e} of substeps hit sigma_cap (limit 1e-3)")]
    SchemeUnstable { fraction: f64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("binary path dump is malformed: {0}")]
    BadDump(String),
}

/// Integration scheme for the volatility SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Integrate `v = 1/σ` (default; exact substeps for the built-in model).
    #[serde(rename = "reciprocal-euler")]
    ReciprocalEuler,
    /// Drift-tamed Euler directly on σ.
    #[serde(rename = "tamed-euler")]
    TamedEuler,
}

/// Simulation specification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound(
    serialize = "R: Serialize",
    deserialize = "R: serde::de::DeserializeOwned"
))]
pub struct SimSpec<R> {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt_sim: R,
    pub burn_in_steps: usize,
    pub sigma0: R,
    pub s0: R,
    pub seed: u64,
    pub scheme: Scheme,
    pub sigma_floor: R,
    pub sigma_cap: R,
}

impl<R: Real> SimSpec<R> {
    /// Defaults derived from the model scales: boundaries at `10^{∓3} √r₀`,
    /// a bulk-resolving step (tail resolution is handled adaptively), and a
    /// burn-in of 20 mean-reversion times.
    pub fn defaults_for(params: &ModelParams<R>, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        let sr = params.r0.sqrt();
        let one = R::one();
        let scale = params.a.max(params.b * params.b).max(params.k).max(one);
        let dt_sim = lit::<R>(1e-3) / (params.r0 * scale);
        let a_eff = if params.a > R::zero() { params.a } else { one };
        let burn_in = (lit::<R>(20.0) / (a_eff * params.r0 * dt_sim))
            .ceil()
            .to_f64_lossy() as usize;
        Self {
            n_paths,
            n_steps,
            dt_sim,
            burn_in_steps: burn_in,
            sigma0: sr,
            s0: one,
            seed,
            scheme: Scheme::ReciprocalEuler,
            sigma_floor: lit::<R>(1e-3) * sr,
            sigma_cap: lit::<R>(1e3) * sr,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_sim > R::zero()) {
            return Err(SimError::InvalidSpec("dt_sim must be > 0".into()));
        }
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(SimError::InvalidSpec("counts must be > 0".into()));
        }
        if !(self.sigma_floor >= R::zero()
            && self.sigma_floor <= self.sigma0
            && self.sigma0 <= self.sigma_cap)
        {
            return Err(SimError::InvalidSpec(
                "need 0 <= sigma_floor <= sigma0 <= sigma_cap".into(),
            ));
        }
        if self.sigma_floor < self.sigma_cap && !(self.sigma_floor > R::zero()) {
            return Err(SimError::InvalidSpec(
                "sigma_floor must be > 0 unless pinned (floor == cap)".into(),
            ));
        }
        Ok(())
    }

    fn pinned(&self) -> bool {
        self.sigma_floor == self.sigma_cap
    }
}

/// Boundary-event and substep accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClampStats {
    pub floor_hits: u64,
    pub cap_hits: u64,
    pub total_substeps: u64,
    pub total_steps: u64,
}

impl ClampStats {
    fn merge(mut self, other: ClampStats) -> ClampStats {
        self.floor_hits += other.floor_hits;
        self.cap_hits += other.cap_hits;
        self.total_substeps += other.total_substeps;
        self.total_steps += other.total_steps;
        self
    }

    pub fn cap_fraction(&self) -> f64 {
        if self.total_substeps == 0 {
            0.0
        } else {
            self.cap_hits as f64 / self.total_substeps as f64
        }
    }

    pub fn floor_fraction(&self) -> f64 {
        if self.total_substeps == 0 {
            0.0
        } else {
            self.floor_hits as f64 / self.total_substeps as f64
        }
    }
}

/// Simulated trajectories, `n_paths × (n_steps + 1)` values row-major.
#[derive(Debug, Clone)]
pub struct PathEnsemble<R> {
    pub spec: SimSpec<R>,
    sigma: Vec<R>,
    s: Option<Vec<R>>,
    pub clamp: ClampStats,
    /// How the per-path random streams were constructed.
    pub rng_note: String,
}

impl<R: Real> PathEnsemble<R> {
    fn row_len(&self) -> usize {
        self.spec.n_steps + 1
    }

    pub fn sigma_path(&self, path: usize) -> &[R] {
        let l = self.row_len();
        &self.sigma[path * l..(path + 1) * l]
    }

    pub fn s_path(&self, path: usize) -> Option<&[R]> {
        let l = self.row_len();
        self.s.as_ref().map(|s| &s[path * l..(path + 1) * l])
    }

    pub fn has_prices(&self) -> bool {
        self.s.is_some()
    }

    /// All recorded σ values of all paths (including burn-in steps).
    pub fn sigma_flat(&self) -> &[R] {
        &self.sigma
    }

    /// CSV rows `path,t,sigma[,s]`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.s.is_some() {
            writeln!(w, "path,t,sigma,s")?;
        } else {
            writeln!(w, "path,t,sigma")?;
        }
        let l = self.row_len();
        for p in 0..self.spec.n_paths {
            for i in 0..l {
                let t = self.spec.dt_sim * R::from_usize_lossy(i);
                match &self.s {
                    Some(s) => writeln!(
                        w,
                        "{p},{t},{},{}",
                        self.sigma[p * l + i],
                        s[p * l + i]
                    )?,
                    None => writeln!(w, "{p},{t},{}", self.sigma[p * l + i])?,
                }
            }
        }
        Ok(())
    }

    /// Compact binary dump. Little-endian layout:
    /// magic `VTPE`, u32 version (1), u64 n_paths, u64 n_points, u8 has_s,
    /// then σ values as f64 row-major, then (if present) S values.
    pub fn write_binary<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"VTPE")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.spec.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.row_len() as u64).to_le_bytes())?;
        w.write_all(&[u8::from(self.s.is_some())])?;
        for v in &self.sigma {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        if let Some(s) = &self.s {
            for v in s {
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Read back a binary dump as `(sigma, s, n_paths, n_points)`.
pub fn read_binary_dump(bytes: &[u8]) -> Result<(Vec<f64>, Option<Vec<f64>>, u64, u64), SimError> {
    let fail = |m: &str| SimError::BadDump(m.to_string());
    if bytes.len() < 25 || &bytes[0..4] != b"VTPE" {
        return Err(fail("missing VTPE header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != 1 {
        return Err(fail("unsupported version"));
    }
    let n_paths = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n_points = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let has_s = bytes[24] != 0;
    let count = (n_paths * n_points) as usize;
    let need = 25 + count * 8 * if has_s { 2 } else { 1 };
    if bytes.len() != need {
        return Err(fail("length mismatch"));
    }
    let read_block = |off: usize| -> Vec<f64> {
        (0..count)
            .map(|i| f64::from_le_bytes(bytes[off + 8 * i..off + 8 * i + 8].try_into().unwrap()))
            .collect()
    };
    let sigma = read_block(25);
    let s = has_s.then(|| read_block(25 + count * 8));
    Ok((sigma, s, n_paths, n_points))
}

struct LocalStats {
    floor_hits: u64,
    cap_hits: u64,
    substeps: u64,
}

/// Reflect into `[v_min, v_max]`, counting boundary events. `v < v_min`
/// corresponds to σ above the cap.
#[inline]
fn reflect<R: Real>(mut v: R, v_min: R, v_max: R, stats: &mut LocalStats) -> R {
    if v < v_min {
        stats.cap_hits += 1;
        v = (v_min + v_min) - v;
    } else if v > v_max {
        stats.floor_hits += 1;
        v = (v_max + v_max) - v;
    }
    v.max(v_min).min(v_max)
}

enum Kernel<'a, R, C: ?Sized> {
    /// Exact-flow splitting for the built-in model in v = 1/σ coordinates.
    BuiltinReciprocal {
        a_r0: R,
        k_r032: R,
        b: R,
    },
    /// Euler–Maruyama on v = 1/σ with chain-rule drift, for any coefficients.
    GenericReciprocal {
        params: &'a ModelParams<R>,
        coeffs: &'a C,
    },
    /// Drift-tamed Euler on σ itself.
    Tamed {
        params: &'a ModelParams<R>,
        coeffs: &'a C,
    },
}

impl<'a, R: Real, C: VolCoefficients<R> + ?Sized> Kernel<'a, R, C>
where
    StandardNormal: Distribution<R>,
{
    fn new(params: &'a ModelParams<R>, coeffs: &'a C, scheme: Scheme) -> Self {
        match scheme {
            Scheme::ReciprocalEuler => match coeffs.builtin() {
                Some(bc) => Kernel::BuiltinReciprocal {
                    a_r0: bc.a * params.r0,
                    k_r032: bc.k * params.r0.powf(lit(1.5)),
                    b: bc.b,
                },
                None => Kernel::GenericReciprocal { params, coeffs },
            },
            Scheme::TamedEuler => Kernel::Tamed { params, coeffs },
        }
    }

    /// Substep count for a global step started at volatility `sigma`.
    fn substeps(&self, sigma: R, dt: R) -> usize {
        let budget = lit::<R>(STEP_BUDGET / STEP_SAFETY);
        let m = match self {
            Kernel::BuiltinReciprocal { b, .. } => {
                // Diffusion displacement in v is B√dt against v = 1/σ.
                (*b * *b * sigma * sigma * dt / budget).to_f64_lossy()
            }
            Kernel::GenericReciprocal { params, coeffs } | Kernel::Tamed { params, coeffs } => {
                let beta = crate::model::beta(*params, *coeffs, sigma).unwrap_or(R::zero());
                let alpha = crate::model::alpha(*params, *coeffs, sigma).unwrap_or(R::zero());
                // Relative diffusion displacement β√dt/σ and drift |α|dt/σ.
                let diff = beta * beta * dt / (sigma * sigma) / budget;
                let drift = alpha.abs() * dt / sigma / budget;
                diff.max(drift).to_f64_lossy()
            }
        };
        if m.is_finite() {
            (m.ceil() as usize).clamp(1, MAX_SUBSTEPS)
        } else {
            MAX_SUBSTEPS
        }
    }

    /// Advance one global step of length `dt`, returning the new σ and the
    /// accumulated Wiener increment of the volatility driver.
    fn step(
        &self,
        sigma: R,
        dt: R,
        v_min: R,
        v_max: R,
        rng: &mut ChaCha8Rng,
        stats: &mut LocalStats,
    ) -> (R, R) {
        let m = self.substeps(sigma, dt);
        stats.substeps += m as u64;
        let dtl = dt / R::from_usize_lossy(m);
        let sq = dtl.sqrt();
        let mut dw_sum = R::zero();
        match self {
            Kernel::BuiltinReciprocal { a_r0, k_r032, b } => {
                let ea = (*a_r0 * dtl).exp();
                let kdt = *k_r032 * dtl;
                let two_b2dt = lit::<R>(2.0) * *b * *b * dtl;
                let bsq = *b * sq;
                let mut v = sigma.recip();
                for _ in 0..m {
                    let z: R = rng.sample(StandardNormal);
                    dw_sum += sq * z;
                    // Exact flows: mean reversion, regularizing drift
                    // (constant in σ), then the Itô 1/v term.
                    v = v * ea;
                    v = v / (R::one() + kdt * v);
                    v = (v * v + two_b2dt).sqrt() - bsq * z;
                    v = reflect(v, v_min, v_max, stats);
                }
                (v.recip(), dw_sum)
            }
            Kernel::GenericReciprocal { params, coeffs } => {
                let mut v = sigma.recip();
                for _ in 0..m {
                    let z: R = rng.sample(StandardNormal);
                    dw_sum += sq * z;
                    let s = v.recip();
                    let alpha = crate::model::alpha(*params, *coeffs, s).unwrap_or(R::zero());
                    let beta = crate::model::beta(*params, *coeffs, s).unwrap_or(R::zero());
                    let drift = -v * v * alpha + v * v * v * beta * beta;
                    // Taming keeps a single oversized drift increment from
                    // overshooting the origin.
                    let tamed = drift * dtl / (R::one() + (drift * dtl / v).abs());
                    v = v + tamed - v * v * beta * sq * z;
                    v = reflect(v, v_min, v_max, stats);
                }
                (v.recip(), dw_sum)
            }
            Kernel::Tamed { params, coeffs } => {
                let mut s = sigma;
                for _ in 0..m {
                    let z: R = rng.sample(StandardNormal);
                    dw_sum += sq * z;
                    let alpha = crate::model::alpha(*params, *coeffs, s).unwrap_or(R::zero());
                    let beta = crate::model::beta(*params, *coeffs, s).unwrap_or(R::zero());
                    let tamed = alpha * dtl / (R::one() + (alpha * dtl / s).abs());
                    let mut next = s + tamed + beta * sq * z;
                    // Reflect in σ coordinates.
                    let floor = v_max.recip();
                    let cap = v_min.recip();
                    if next > cap {
                        stats.cap_hits += 1;
                        next = (cap + cap) - next;
                    } else if next < floor {
                        stats.floor_hits += 1;
                        next = (floor + floor) - next;
                    }
                    s = next.max(floor).min(cap);
                }
                (s, dw_sum)
            }
        }
    }
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn rng_note(seed: u64) -> String {
    format!("chacha8: seed_from_u64({seed}), stream = path index; draw order per step: substep normals (vol driver), then one price-orthogonal normal when prices are simulated")
}

fn run_paths<R: Real, C: VolCoefficients<R> + ?Sized>(
    params: &ModelParams<R>,
    coeffs: &C,
    spec: &SimSpec<R>,
    with_prices: bool,
) -> Result<PathEnsemble<R>, SimError>
where
    StandardNormal: Distribution<R>,
{
    spec.validate()?;
    params.validate()?;
    let l = spec.n_steps + 1;
    let mut sigma = vec![R::zero(); spec.n_paths * l];
    let mut s = with_prices.then(|| vec![R::zero(); spec.n_paths * l]);
    let kernel = Kernel::new(params, coeffs, spec.scheme);
    let v_min = spec.sigma_cap.recip();
    let v_max = if spec.pinned() {
        v_min
    } else {
        spec.sigma_floor.recip()
    };
    let rho = params.rho;
    let rho_perp = (R::one() - rho * rho).max(R::zero()).sqrt();
    let dt = spec.dt_sim;
    let sqdt = dt.sqrt();

    let evolve = |path: usize, sig_row: &mut [R], mut s_row: Option<&mut [R]>| -> LocalStats {
        let mut rng = stream_rng(spec.seed, path as u64);
        let mut stats = LocalStats {
            floor_hits: 0,
            cap_hits: 0,
            substeps: 0,
        };
        let mut cur = spec.sigma0;
        sig_row[0] = cur;
        let mut log_s = R::zero();
        if let Some(row) = s_row.as_deref_mut() {
            row[0] = spec.s0;
        }
        for i in 1..=spec.n_steps {
            let sigma_frozen = cur;
            let dw2 = if spec.pinned() {
                stats.substeps += 1;
                let z: R = rng.sample(StandardNormal);
                sqdt * z
            } else {
                let (next, dw) = kernel.step(cur, dt, v_min, v_max, &mut rng, &mut stats);
                cur = next;
                dw
            };
            sig_row[i] = cur;
            if let Some(row) = s_row.as_deref_mut() {
                let zp: R = rng.sample(StandardNormal);
                let dw1 = rho * dw2 + rho_perp * sqdt * zp;
                log_s += (params.mu - sigma_frozen * sigma_frozen * lit::<R>(0.5)) * dt
                    + sigma_frozen * dw1;
                row[i] = spec.s0 * log_s.exp();
            }
        }
        stats
    };

    let clamp = match &mut s {
        Some(s_vec) => sigma
            .par_chunks_mut(l)
            .zip(s_vec.par_chunks_mut(l))
            .enumerate()
            .map(|(p, (sig_row, s_row))| {
                let st = evolve(p, sig_row, Some(s_row));
                ClampStats {
                    floor_hits: st.floor_hits,
                    cap_hits: st.cap_hits,
                    total_substeps: st.substeps,
                    total_steps: spec.n_steps as u64,
                }
            })
            .reduce(ClampStats::default, ClampStats::merge),
        None => sigma
            .par_chunks_mut(l)
            .enumerate()
            .map(|(p, sig_row)| {
                let st = evolve(p, sig_row, None);
                ClampStats {
                    floor_hits: st.floor_hits,
                    cap_hits: st.cap_hits,
                    total_substeps: st.substeps,
                    total_steps: spec.n_steps as u64,
                }
            })
            .reduce(ClampStats::default, ClampStats::merge),
    };

    if clamp.cap_fraction() > 1e-3 {
        return Err(SimError::SchemeUnstable {
            fraction: clamp.cap_fraction(),
        });
    }

    Ok(PathEnsemble {
        spec: *spec,
        sigma,
        s,
        clamp,
        rng_note: rng_note(spec.seed),
    })
}

/// Simulate volatility paths. Callers are expected to have validated the
/// model (dimension checks and stylized facts); see the `validate` command.
pub fn simulate_volatility<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    spec: &SimSpec<R>,
) -> Result<PathEnsemble<R>, SimError>
where
    StandardNormal: Distribution<R>,
{
    run_paths(params, coeffs, spec, false)
}

/// Simulate joint (σ, S) paths. The price driver is `W₁ = ρ W₂ + √(1-ρ²) W⊥`
/// and S advances by the exact lognormal step with σ frozen over each
/// `dt_sim` interval.
pub fn simulate_joint<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    spec: &SimSpec<R>,
) -> Result<PathEnsemble<R>, SimError>
where
    StandardNormal: Distribution<R>,
{
    run_paths(params, coeffs, spec, true)
}

/// Short-term-approximation returns: `Xᵢ = σᵢ √Δt Zᵢ` with independent
/// standard normals, one per supplied volatility.
pub fn sample_returns_approx<R: Real>(sigma_samples: &[R], dt: R, seed: u64) -> Vec<R>
where
    StandardNormal: Distribution<R>,
{
    let sqdt = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sigma_samples
        .iter()
        .map(|&s| {
            let z: R = rng.sample(StandardNormal);
            s * (sqdt * z)
        })
        .collect()
}

/// Exact log-returns over windows of length `dt`: each window starts from an
/// independent stationary volatility draw and evolves the joint process with
/// σ moving inside the window. Windows are disjoint by construction.
pub fn sample_returns_exact<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    dt: R,
    n: usize,
    spec: &SimSpec<R>,
) -> Result<Vec<R>, SimError>
where
    StandardNormal: Distribution<R>,
    rand::distributions::Standard: Distribution<R>,
{
    spec.validate()?;
    params.validate()?;
    if !(dt >= spec.dt_sim) {
        return Err(SimError::InvalidSpec(
            "window dt must be at least dt_sim".into(),
        ));
    }
    // Stationary initial volatilities via inverse-CDF on the model density.
    // A pinned spec (floor == cap) fixes σ instead.
    let sampler = if spec.pinned() {
        None
    } else {
        let grid = density::default_grid(params.r0);
        let stationary = match coeffs.builtin() {
            Some(bc) if bc.k > R::zero() => {
                let p = ModelParams {
                    a: bc.a,
                    b: bc.b,
                    k: bc.k,
                    ..*params
                };
                density::closed_form_stationary(&p, &grid)?
            }
            _ => {
                density::solve_stationary_fpe(params, coeffs, &grid, density::Boundary::ZeroFlux)?
            }
        };
        Some(density::CdfInverse::build(&stationary)?)
    };

    let m = (dt / spec.dt_sim).to_f64_lossy().ceil() as usize;
    let dt_step = dt / R::from_usize_lossy(m);
    let kernel = Kernel::new(params, coeffs, spec.scheme);
    let v_min = spec.sigma_cap.recip();
    let v_max = if spec.pinned() {
        v_min
    } else {
        spec.sigma_floor.recip()
    };
    let rho = params.rho;
    let rho_perp = (R::one() - rho * rho).max(R::zero()).sqrt();
    let sq_step = dt_step.sqrt();

    let returns: Vec<R> = (0..n)
        .into_par_iter()
        .map(|w| {
            let mut rng = stream_rng(spec.seed, w as u64);
            let mut stats = LocalStats {
                floor_hits: 0,
                cap_hits: 0,
                substeps: 0,
            };
            let mut sigma = match &sampler {
                Some(inv) => {
                    let u: R = rng.gen();
                    inv.eval(u).max(spec.sigma_floor).min(spec.sigma_cap)
                }
                None => spec.sigma0,
            };
            let mut log_ret = R::zero();
            for _ in 0..m {
                let frozen = sigma;
                let dw2 = if spec.pinned() {
                    let z: R = rng.sample(StandardNormal);
                    sq_step * z
                } else {
                    let (next, dw) =
                        kernel.step(sigma, dt_step, v_min, v_max, &mut rng, &mut stats);
                    sigma = next;
                    dw
                };
                let zp: R = rng.sample(StandardNormal);
                let dw1 = rho * dw2 + rho_perp * sq_step * zp;
                log_ret += (params.mu - frozen * frozen * lit::<R>(0.5)) * dt_step + frozen * dw1;
            }
            log_ret
        })
        .collect();
    Ok(returns)
}

/// Streaming stationary histogram: evolve paths, drop the burn-in, and count
/// every post-burn-in σ into `edges` without storing trajectories. Counts
/// merge associatively, so the result is independent of thread scheduling.
pub fn sigma_histogram<R: Real>(
    params: &ModelParams<R>,
    coeffs: &(impl VolCoefficients<R> + ?Sized),
    spec: &SimSpec<R>,
    edges: &[R],
) -> Result<(Vec<u64>, u64, ClampStats), SimError>
where
    StandardNormal: Distribution<R>,
{
    spec.validate()?;
    params.validate()?;
    if spec.burn_in_steps >= spec.n_steps {
        return Err(SimError::InvalidSpec(
            "burn_in_steps must be below n_steps".into(),
        ));
    }
    let kernel = Kernel::new(params, coeffs, spec.scheme);
    let v_min = spec.sigma_cap.recip();
    let v_max = spec.sigma_floor.recip();
    let nbins = edges.len() - 1;
    let lo = edges[0];
    let hi = edges[nbins];
    let log_lo = lo.ln();
    let log_w = (hi.ln() - log_lo) / R::from_usize_lossy(nbins);

    let (counts, recorded, clamp) = (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(spec.seed, p as u64);
            let mut stats = LocalStats {
                floor_hits: 0,
                cap_hits: 0,
                substeps: 0,
            };
            let mut counts = vec![0u64; nbins];
            let mut recorded = 0u64;
            let mut sigma = spec.sigma0;
            for i in 1..=spec.n_steps {
                let (next, _) = kernel.step(sigma, spec.dt_sim, v_min, v_max, &mut rng, &mut stats);
                sigma = next;
                if i > spec.burn_in_steps && sigma >= lo && sigma < hi {
                    // Log-spaced edges admit direct index computation.
                    let idx = ((sigma.ln() - log_lo) / log_w).to_f64_lossy() as usize;
                    counts[idx.min(nbins - 1)] += 1;
                    recorded += 1;
                }
            }
            (
                counts,
                recorded,
                ClampStats {
                    floor_hits: stats.floor_hits,
                    cap_hits: stats.cap_hits,
                    total_substeps: stats.substeps,
                    total_steps: spec.n_steps as u64,
                },
            )
        })
        .reduce(
            || (vec![0u64; nbins], 0u64, ClampStats::default()),
            |(mut ca, ra, sa), (cb, rb, sb)| {
                for (a, b) in ca.iter_mut().zip(&cb) {
                    *a += b;
                }
                (ca, ra + rb, sa.merge(sb))
            },
        );

    if clamp.cap_fraction() > 1e-3 {
        return Err(SimError::SchemeUnstable {
            fraction: clamp.cap_fraction(),
        });
    }
    Ok((counts, recorded, clamp))
}
