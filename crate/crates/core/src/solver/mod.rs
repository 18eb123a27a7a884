//! Zeros of vector fields that point outward on a gauge sphere.
//!
//! If `F` is continuous on a gauge ball `{z : g(z − c) ≤ ρ}` and
//! `⟨F(z), z − c⟩ ≥ 0` on its boundary, `F` vanishes somewhere in the ball.
//! This holds for the (non-convex) affine floor gauge as well as for any norm.
//! Existence is topological; [`find_zero`] searches with damped Newton from
//! several starts inside the ball and falls back to Levenberg–Marquardt on
//! `|F|²`, keeping iterates in the ball by radial projection.

pub mod fields;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::CoefVec;
use crate::error::{Error, Result};
use crate::geometry::{map_g, GaugeContext};
use crate::numeric::{dot, norm2, norm_inf};

pub use fields::{CoerciveField, FnField, IdentityField, LinearField};

/// Pairing values at or above `-BOUNDARY_TOL` count as nonnegative.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Relative slack on ball membership of returned zeros.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Evaluations closer than this (Euclidean) to the excluded point are refused.
pub const PUNCTURE_GUARD: f64 = 1e-12;

/// A map `R^m → R^m`, continuous away from an optional excluded point.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn label(&self) -> &str {
        "field"
    }

    /// Known zero, when the field was built with one.
    fn expected_zero(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Euclidean,
    Max,
    L1,
}

impl NormKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            NormKind::Euclidean => norm2(x),
            NormKind::Max => norm_inf(x),
            NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
        }
    }
}

/// The gauge defining the ball: the affine floor gauge or an ordinary norm.
#[derive(Debug, Clone)]
pub enum Gauge {
    AffineFloor(GaugeContext),
    Norm(NormKind),
}

impl Gauge {
    pub fn eval(&self, x: &CoefVec) -> Result<f64> {
        match self {
            Gauge::AffineFloor(ctx) => ctx.floor(x),
            Gauge::Norm(kind) => Ok(kind.eval(x.as_slice())),
        }
    }

    /// An upper bound on `gauge(x) / |x|₂`.
    pub fn euclidean_bound(&self, m: usize) -> Result<f64> {
        match self {
            Gauge::Norm(NormKind::Euclidean | NormKind::Max) => Ok(1.0),
            Gauge::Norm(NormKind::L1) => Ok((m as f64).sqrt()),
            Gauge::AffineFloor(ctx) => {
                // ⌊x⌋ ≤ ‖x‖ ≤ Σ|x_i| ‖e_i‖ ≤ |x|₂ (Σ ‖e_i‖²)^{1/2}
                let mut s = 0.0;
                for i in 0..ctx.dim() {
                    let n = ctx.norm(&CoefVec::unit(ctx.dim(), i))?;
                    s += n * n;
                }
                Ok(s.sqrt())
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Gauge::AffineFloor(_) => "affine_floor",
            Gauge::Norm(NormKind::Euclidean) => "euclidean",
            Gauge::Norm(NormKind::Max) => "max",
            Gauge::Norm(NormKind::L1) => "l1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaugeBallSpec {
    pub gauge: Gauge,
    pub center: CoefVec,
    pub rho: f64,
    /// Point where the field may be discontinuous; must lie outside the ball.
    pub excluded: Option<CoefVec>,
}

impl GaugeBallSpec {
    pub fn new(gauge: Gauge, center: CoefVec, rho: f64) -> Self {
        GaugeBallSpec {
            gauge,
            center,
            rho,
            excluded: None,
        }
    }

    pub fn with_excluded(mut self, y0: CoefVec) -> Self {
        self.excluded = Some(y0);
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `gauge(z − center)`.
    pub fn radius_of(&self, z: &CoefVec) -> Result<f64> {
        self.gauge.eval(&(z - &self.center))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid("rho", format!("radius must be positive, got {}", self.rho)));
        }
        if let Gauge::AffineFloor(ctx) = &self.gauge {
            if ctx.dim() != self.dim() {
                return Err(Error::LengthMismatch {
                    expected: ctx.dim(),
                    got: self.dim(),
                });
            }
        }
        if let Some(y0) = &self.excluded {
            if y0.len() != self.dim() {
                return Err(Error::LengthMismatch {
                    expected: self.dim(),
                    got: y0.len(),
                });
            }
            let g = self.gauge.eval(&(&self.center - y0))?;
            if g <= self.rho {
                return Err(Error::PunctureInsideBall { gauge: g, rho: self.rho });
            }
        }
        Ok(())
    }

    /// Pulls `z` back along the ray from the center onto the ball.
    fn project(&self, z: CoefVec) -> Result<CoefVec> {
        let d = &z - &self.center;
        let g = self.gauge.eval(&d)?;
        if g <= self.rho {
            return Ok(z);
        }
        Ok(&d.scaled(self.rho / g) + &self.center)
    }

    fn near_excluded(&self, z: &CoefVec) -> bool {
        self.excluded
            .as_ref()
            .is_some_and(|y0| (z - y0).norm2() < PUNCTURE_GUARD)
    }

    /// A point on the gauge sphere in the direction of `dir`.
    fn sphere_point(&self, dir: &CoefVec, scale: f64) -> Result<CoefVec> {
        match &self.gauge {
            Gauge::AffineFloor(ctx) => {
                let n = ctx.norm(dir)?;
                if !(n > 0.0) {
                    return Err(Error::SphereSampling("zero direction".into()));
                }
                let on_sphere = map_g(&dir.scaled(1.0 / n), &self.center, self.rho, ctx)?;
                Ok(&(&on_sphere - &self.center).scaled(scale) + &self.center)
            }
            Gauge::Norm(kind) => {
                let n = kind.eval(dir.as_slice());
                if !(n > 0.0) {
                    return Err(Error::SphereSampling("zero direction".into()));
                }
                Ok(&dir.scaled(scale * self.rho / n) + &self.center)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub samples: usize,
    /// `min ⟨F(z), z − center⟩` over the sampled sphere points.
    pub min_pairing: f64,
    pub max_pairing: f64,
    /// Sample attaining the minimum.
    pub argmin: CoefVec,
    pub pass: bool,
}

/// Samples the gauge sphere of radius `rho` and reports the worst pairing
/// `⟨F(z), z − center⟩`.
pub fn boundary_condition_check(
    field: &dyn VectorField,
    ball: &GaugeBallSpec,
    samples: usize,
    seed: u64,
) -> Result<BoundaryReport> {
    ball.validate()?;
    if samples == 0 {
        return Err(Error::invalid("samples", "need at least one sample"));
    }
    check_dim(field, ball)?;
    let m = ball.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_pairing = f64::INFINITY;
    let mut max_pairing = f64::NEG_INFINITY;
    let mut argmin = ball.center.clone();
    for _ in 0..samples {
        let dir = gaussian_direction(&mut rng, m);
        let z = ball.sphere_point(&dir, 1.0)?;
        let f = field.eval(z.as_slice())?;
        let pairing = dot(&f, (&z - &ball.center).as_slice());
        if !pairing.is_finite() {
            return Err(Error::SphereSampling(format!("non-finite pairing at {:?}", z.0)));
        }
        if pairing < min_pairing {
            min_pairing = pairing;
            argmin = z;
        }
        max_pairing = max_pairing.max(pairing);
    }
    Ok(BoundaryReport {
        samples,
        min_pairing,
        max_pairing,
        argmin,
        pass: min_pairing >= -BOUNDARY_TOL,
    })
}

fn gaussian_direction(rng: &mut ChaCha8Rng, m: usize) -> CoefVec {
    loop {
        let d: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if norm2(&d) > 1e-8 {
            return CoefVec(d);
        }
    }
}

fn check_dim(field: &dyn VectorField, ball: &GaugeBallSpec) -> Result<()> {
    if field.dim() != ball.dim() {
        return Err(Error::LengthMismatch {
            expected: ball.dim(),
            got: field.dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Newton,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOptions {
    pub tol: f64,
    pub multistarts: usize,
    pub newton_iters: usize,
    pub lm_iters: usize,
    pub seed: u64,
    /// Tried before the generated starts.
    pub initial: Option<CoefVec>,
    /// Sphere samples for the boundary check; `None` waives it.
    pub boundary_samples: Option<usize>,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        ZeroOptions {
            tol: 1e-8,
            multistarts: 16,
            newton_iters: 50,
            lm_iters: 200,
            seed: 0,
            initial: None,
            boundary_samples: Some(64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroResult {
    pub z: CoefVec,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub strategy_used: Strategy,
    pub start_index: usize,
    /// `gauge(z − center)`.
    pub gauge_radius: f64,
    pub boundary_check: Option<BoundaryReport>,
}

/// Finds `z` with `|F(z)|_∞ ≤ tol` inside the ball.
pub fn find_zero(field: &dyn VectorField, ball: &GaugeBallSpec, opts: &ZeroOptions) -> Result<ZeroResult> {
    ball.validate()?;
    check_dim(field, ball)?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    let boundary_check = match opts.boundary_samples {
        Some(n) => {
            let report = boundary_condition_check(field, ball, n, opts.seed)?;
            if !report.pass {
                return Err(Error::BoundaryCondition {
                    min_pairing: report.min_pairing,
                });
            }
            Some(report)
        }
        None => None,
    };
    let mut search = Search::new(field, ball, opts.tol);
    let starts = start_points(ball, opts)?;

    let mut best: Option<(f64, CoefVec)> = None;
    for strategy in [Strategy::Newton, Strategy::LevenbergMarquardt] {
        for (idx, start) in starts.iter().enumerate() {
            let (z, r) = match strategy {
                Strategy::Newton => search.newton(start.clone(), opts.newton_iters)?,
                Strategy::LevenbergMarquardt => search.levenberg_marquardt(start.clone(), opts.lm_iters)?,
            };
            if r <= opts.tol {
                return search.finish(z, strategy, idx, boundary_check);
            }
            // ties keep the earlier start
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, z));
            }
        }
    }
    let (r, z) = best.expect("at least one start");
    Err(Error::NotConverged {
        best_residual: r,
        iterations: search.iterations,
        best: z.0,
    })
}

/// [`find_zero`] for fields that may be discontinuous at an excluded point
/// outside the ball.
pub fn find_zero_punctured(field: &dyn VectorField, ball: &GaugeBallSpec, opts: &ZeroOptions) -> Result<ZeroResult> {
    if ball.excluded.is_none() {
        return Err(Error::invalid("excluded", "punctured search needs an excluded point"));
    }
    find_zero(field, ball, opts)
}

/// Center, the optional initial guess, then low-discrepancy directions at
/// varying depths inside the ball.
fn start_points(ball: &GaugeBallSpec, opts: &ZeroOptions) -> Result<Vec<CoefVec>> {
    let m = ball.dim();
    let mut starts = Vec::with_capacity(opts.multistarts + 2);
    if let Some(z0) = &opts.initial {
        if z0.len() != m {
            return Err(Error::LengthMismatch { expected: m, got: z0.len() });
        }
        starts.push(ball.project(z0.clone())?);
    }
    starts.push(ball.center.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let offset: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    for k in 1..opts.multistarts.max(1) {
        let dir: Vec<f64> = (0..m)
            .map(|i| {
                let h = (radical_inverse(k as u64, PRIMES[i % PRIMES.len()]) + offset[i]).fract();
                2.0 * h - 1.0
            })
            .collect();
        let dir = CoefVec(dir);
        if dir.norm2() < 1e-12 {
            continue;
        }
        let depth = radical_inverse(k as u64, 2).max(0.05) * 0.95;
        starts.push(ball.sphere_point(&dir, depth)?);
    }
    Ok(starts)
}

const PRIMES: [u64; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

struct Search<'a> {
    field: &'a dyn VectorField,
    ball: &'a GaugeBallSpec,
    tol: f64,
    iterations: usize,
    evaluations: usize,
}

impl<'a> Search<'a> {
    fn new(field: &'a dyn VectorField, ball: &'a GaugeBallSpec, tol: f64) -> Self {
        Search {
            field,
            ball,
            tol,
            iterations: 0,
            evaluations: 0,
        }
    }

    /// `None` when the point is refused by the puncture guard or the field
    /// returns non-finite values.
    fn eval(&mut self, z: &CoefVec) -> Result<Option<Vec<f64>>> {
        if self.ball.near_excluded(z) {
            return Ok(None);
        }
        self.evaluations += 1;
        let f = self.field.eval(z.as_slice())?;
        Ok(f.iter().all(|v| v.is_finite()).then_some(f))
    }

    /// Central-difference Jacobian, step `1e-6 (1 + |z|_∞)`.
    fn jacobian(&mut self, z: &CoefVec) -> Result<Option<DMatrix<f64>>> {
        let m = z.len();
        let h = 1e-6 * (1.0 + z.norm_inf());
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus.0[j] += h;
            minus.0[j] -= h;
            let (Some(fp), Some(fm)) = (self.eval(&plus)?, self.eval(&minus)?) else {
                return Ok(None);
            };
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(Some(jac))
    }

    /// Backtracking along `dir` on the merit `|F|₂`, with projection.
    fn line_search(
        &mut self,
        z: &CoefVec,
        fz: &[f64],
        dir: &DVector<f64>,
    ) -> Result<Option<(CoefVec, Vec<f64>)>> {
        let r0 = norm2(fz);
        let mut t = 1.0;
        for _ in 0..40 {
            let trial = CoefVec(z.0.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect());
            let trial = self.ball.project(trial)?;
            if let Some(ft) = self.eval(&trial)? {
                if norm2(&ft) <= (1.0 - 1e-4 * t) * r0 {
                    return Ok(Some((trial, ft)));
                }
            }
            t *= 0.5;
        }
        Ok(None)
    }

    fn newton(&mut self, start: CoefVec, max_iter: usize) -> Result<(CoefVec, f64)> {
        let Some(mut fz) = self.eval(&start)? else {
            return Ok((start, f64::INFINITY));
        };
        let mut z = start;
        for _ in 0..max_iter {
            if norm_inf(&fz) <= self.tol {
                break;
            }
            self.iterations += 1;
            let Some(jac) = self.jacobian(&z)? else { break };
            let rhs = -DVector::from_column_slice(&fz);
            let step = match jac.clone().lu().solve(&rhs) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => jac.transpose() * &rhs,
            };
            match self.line_search(&z, &fz, &step)? {
                Some((zn, fn_)) => {
                    z = zn;
                    fz = fn_;
                }
                None => {
                    // Newton direction stalled; try steepest descent on |F|²
                    let grad_dir = jac.transpose() * &rhs;
                    match self.line_search(&z, &fz, &grad_dir)? {
                        Some((zn, fn_)) => {
                            z = zn;
                            fz = fn_;
                        }
                        None => break,
                    }
                }
            }
        }
        let r = norm_inf(&fz);
        Ok((z, r))
    }

    fn levenberg_marquardt(&mut self, start: CoefVec, max_iter: usize) -> Result<(CoefVec, f64)> {
        let Some(mut fz) = self.eval(&start)? else {
            return Ok((start, f64::INFINITY));
        };
        let mut z = start;
        let mut lambda = 1e-3;
        let m = z.len();
        for _ in 0..max_iter {
            if norm_inf(&fz) <= self.tol {
                break;
            }
            self.iterations += 1;
            let Some(jac) = self.jacobian(&z)? else { break };
            let jt = jac.transpose();
            let jtj = &jt * &jac;
            let g = &jt * DVector::from_column_slice(&fz);
            let r0 = norm2(&fz);
            let mut accepted = false;
            for _ in 0..20 {
                let scale = jtj.diagonal().map(|d| d.max(1e-12));
                let a = &jtj + DMatrix::from_diagonal(&(scale * lambda));
                let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial = CoefVec(z.0.iter().zip(step.iter()).map(|(a, d)| a + d).collect());
                let trial = self.ball.project(trial)?;
                if let Some(ft) = self.eval(&trial)? {
                    if norm2(&ft) < r0 {
                        z = trial;
                        fz = ft;
                        lambda = (lambda / 3.0).max(1e-12);
                        accepted = true;
                        break;
                    }
                }
                lambda *= 4.0;
            }
            if !accepted || m == 0 {
                break;
            }
        }
        let r = norm_inf(&fz);
        Ok((z, r))
    }

    fn finish(
        &mut self,
        z: CoefVec,
        strategy: Strategy,
        start_index: usize,
        boundary_check: Option<BoundaryReport>,
    ) -> Result<ZeroResult> {
        let f = self.field.eval(z.as_slice())?;
        let gauge_radius = self.ball.radius_of(&z)?;
        debug_assert!(gauge_radius <= self.ball.rho * (1.0 + MEMBERSHIP_TOL));
        Ok(ZeroResult {
            residual_sup: norm_inf(&f),
            residual_l2: norm2(&f),
            z,
            iterations: self.iterations,
            evaluations: self.evaluations,
            strategy_used: strategy,
            start_index,
            gauge_radius,
            boundary_check,
        })
    }
}
