//! Geometry of the floor gauge `⌊ζ⌋_m = E_p(Σ ζ_j w_j)` on coefficient space.
//!
//! The gauge is absolutely homogeneous and positive definite on `W_m`, but it
//! is not subadditive and its balls are not convex. The maps [`map_t`] and
//! [`map_g`] are mutually inverse radial rescalings between an affine ball
//! and the unit ball of `‖·‖_{1,p,m}`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, expand, grad_lp_norm, BasisSpec, CoefVec, DomainSpec};
use crate::energy::{affine_energy, energy_and_grad, EnergyParams};
use crate::error::{Error, Result};
use crate::sphere::{build_circle_rule, SphereRule};

/// Witness margins at or below this are attributed to quadrature noise.
pub const WITNESS_TOL: f64 = 1e-6;

/// Relative slack for ball-membership checks in the homeomorphism maps.
const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GaugeContext {
    pub basis: Arc<BasisSpec>,
    pub rule: Arc<SphereRule>,
    pub params: EnergyParams,
}

impl GaugeContext {
    pub fn new(basis: Arc<BasisSpec>, rule: Arc<SphereRule>, params: EnergyParams) -> Self {
        GaugeContext { basis, rule, params }
    }

    /// Builds basis, circle rule and parameters from scratch.
    pub fn build(m: usize, p: f64, domain: DomainSpec, sphere_points: usize) -> Result<Self> {
        Ok(GaugeContext {
            basis: Arc::new(build_basis(m, domain)?),
            rule: Arc::new(build_circle_rule(sphere_points)?),
            params: EnergyParams::new(p)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.m
    }

    pub fn p(&self) -> f64 {
        self.params.p
    }

    /// `⌊ζ⌋_m`.
    pub fn floor(&self, zeta: &CoefVec) -> Result<f64> {
        floor_gauge(zeta, self)
    }

    /// `‖ζ‖_{1,p,m}`.
    pub fn norm(&self, zeta: &CoefVec) -> Result<f64> {
        grad_lp_norm(&expand(zeta, &self.basis)?, self.params.p)
    }
}

pub fn floor_gauge(zeta: &CoefVec, ctx: &GaugeContext) -> Result<f64> {
    let field = expand(zeta, &ctx.basis)?;
    Ok(affine_energy(&field, &ctx.rule, &ctx.params)?.energy)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid("rho", format!("radius must be positive, got {rho}")));
    }
    Ok(())
}

/// Closed affine ball membership: `⌊ζ − center⌋_m ≤ rho`.
pub fn in_affine_ball(zeta: &CoefVec, center: &CoefVec, rho: f64, ctx: &GaugeContext) -> Result<bool> {
    check_rho(rho)?;
    Ok(ctx.floor(&(zeta - center))? <= rho)
}

/// `T(x) = (x − c)/ρ · ⌊x − c⌋ / ‖x − c‖`, `T(c) = 0`.
pub fn map_t(x: &CoefVec, center: &CoefVec, rho: f64, ctx: &GaugeContext) -> Result<CoefVec> {
    check_rho(rho)?;
    let d = x - center;
    if d.is_zero() {
        return Ok(CoefVec::zeros(d.len()));
    }
    let g = ctx.floor(&d)?;
    if g > rho * (1.0 + MEMBERSHIP_SLACK) {
        return Err(Error::OutsideBall { gauge: g, rho });
    }
    let n = ctx.norm(&d)?;
    Ok(d.scaled(g / (rho * n)))
}

/// `G(x) = ρ x ‖x‖ / ⌊x⌋ + c`, `G(0) = c`.
pub fn map_g(x: &CoefVec, center: &CoefVec, rho: f64, ctx: &GaugeContext) -> Result<CoefVec> {
    check_rho(rho)?;
    if x.len() != center.len() {
        return Err(Error::LengthMismatch {
            expected: center.len(),
            got: x.len(),
        });
    }
    if x.is_zero() {
        return Ok(center.clone());
    }
    let n = ctx.norm(x)?;
    if n > 1.0 + MEMBERSHIP_SLACK {
        return Err(Error::OutsideBall { gauge: n, rho: 1.0 });
    }
    let g = ctx.floor(x)?;
    Ok(&x.scaled(rho * n / g) + center)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    TriangleViolation,
    Nonconvexity,
}

/// A pair certifying `⌊u+v⌋ > ⌊u⌋ + ⌊v⌋` (triangle violation) or
/// `⌊u⌋, ⌊v⌋ ≤ 1 < ⌊(u+v)/2⌋` (non-convex unit ball).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub margin: f64,
    pub seed: u64,
    pub u: CoefVec,
    pub v: CoefVec,
}

impl Witness {
    /// Recomputes the margin from `u` and `v`.
    pub fn evaluate_margin(&self, ctx: &GaugeContext) -> Result<f64> {
        match self.kind {
            WitnessKind::TriangleViolation => {
                let r = triangle_ratio(&self.u, &self.v, ctx)?;
                Ok(r - 1.0)
            }
            WitnessKind::Nonconvexity => {
                let gu = ctx.floor(&self.u)?;
                let gv = ctx.floor(&self.v)?;
                if gu > 1.0 || gv > 1.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let mid = (&self.u + &self.v).scaled(0.5);
                Ok(ctx.floor(&mid)? - 1.0)
            }
        }
    }

    /// Rescales a triangle-violation pair onto the unit gauge sphere and checks
    /// whether its midpoint leaves the unit ball.
    pub fn to_nonconvexity(&self, ctx: &GaugeContext) -> Result<Option<Witness>> {
        let (u, v) = normalized_pair(&self.u, &self.v, ctx)?;
        let w = Witness {
            kind: WitnessKind::Nonconvexity,
            margin: 0.0,
            seed: self.seed,
            u,
            v,
        };
        let margin = w.evaluate_margin(ctx)?;
        Ok((margin > WITNESS_TOL).then_some(Witness { margin, ..w }))
    }
}

fn triangle_ratio(u: &CoefVec, v: &CoefVec, ctx: &GaugeContext) -> Result<f64> {
    let den = ctx.floor(u)? + ctx.floor(v)?;
    if den <= 0.0 {
        return Ok(0.0);
    }
    Ok(ctx.floor(&(u + v))? / den)
}

/// Scales both vectors to gauge just below one.
fn normalized_pair(u: &CoefVec, v: &CoefVec, ctx: &GaugeContext) -> Result<(CoefVec, CoefVec)> {
    let gu = ctx.floor(u)?;
    let gv = ctx.floor(v)?;
    if gu <= 0.0 || gv <= 0.0 {
        return Err(Error::ZeroField);
    }
    let shrink = 1.0 - 1e-12;
    Ok((u.scaled(shrink / gu), v.scaled(shrink / gv)))
}

/// `⌊ζ⌋` and its gradient; the gradient is zero at the origin.
fn floor_with_grad(z: &CoefVec, ctx: &GaugeContext) -> Result<(f64, Vec<f64>)> {
    let ev = energy_and_grad(z, &ctx.basis, &ctx.rule, &ctx.params)?;
    let e = ev.breakdown.energy;
    if e <= 0.0 {
        return Ok((0.0, vec![0.0; z.len()]));
    }
    let scale = e.powf(ctx.p() - 1.0);
    Ok((e, ev.grad.into_iter().map(|g| g / scale).collect()))
}

/// `⌊u+v⌋ / (⌊u⌋ + ⌊v⌋)` and its gradient in `(u, v)`.
fn triangle_objective(u: &CoefVec, v: &CoefVec, ctx: &GaugeContext) -> Result<(f64, Vec<f64>)> {
    let (eu, gu) = floor_with_grad(u, ctx)?;
    let (ev, gv) = floor_with_grad(v, ctx)?;
    let den = eu + ev;
    if den <= 0.0 {
        return Ok((0.0, vec![0.0; 2 * u.len()]));
    }
    let (es, gs) = floor_with_grad(&(u + v), ctx)?;
    let r = es / den;
    let mut grad: Vec<f64> = gs.iter().zip(&gu).map(|(s, a)| (s - r * a) / den).collect();
    grad.extend(gs.iter().zip(&gv).map(|(s, b)| (s - r * b) / den));
    Ok((r, grad))
}

/// `⌊(u/⌊u⌋ + v/⌊v⌋) / 2⌋` and its gradient in `(u, v)`.
fn midpoint_objective(u: &CoefVec, v: &CoefVec, ctx: &GaugeContext) -> Result<(f64, Vec<f64>)> {
    let (eu, gu) = floor_with_grad(u, ctx)?;
    let (ev, gv) = floor_with_grad(v, ctx)?;
    if eu <= 0.0 || ev <= 0.0 {
        return Ok((0.0, vec![0.0; 2 * u.len()]));
    }
    let mid = &u.scaled(0.5 / eu) + &v.scaled(0.5 / ev);
    let (f, gw) = floor_with_grad(&mid, ctx)?;
    let part = |x: &CoefVec, ex: f64, gx: &[f64]| -> Vec<f64> {
        let wx: f64 = gw.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
        gw.iter().zip(gx).map(|(w, g)| (w - wx * g / ex) / (2.0 * ex)).collect::<Vec<_>>()
    };
    let mut grad = part(u, eu, &gu);
    grad.extend(part(v, ev, &gv));
    Ok((f, grad))
}

/// Searches for `u, v` with `⌊u+v⌋ > (1 + 1e-6)(⌊u⌋ + ⌊v⌋)`.
///
/// `budget` counts objective evaluations. `None` means the search was
/// inconclusive, not that the gauge is subadditive.
pub fn search_triangle_violation(ctx: &GaugeContext, seed: u64, budget: usize) -> Result<Option<Witness>> {
    let best = search_pairs(ctx, seed, budget, |u, v| triangle_objective(u, v, ctx))?;
    let Some((u, v)) = best else { return Ok(None) };
    let w = Witness {
        kind: WitnessKind::TriangleViolation,
        margin: 0.0,
        seed,
        u,
        v,
    };
    let margin = w.evaluate_margin(ctx)?;
    Ok((margin > WITNESS_TOL).then_some(Witness { margin, ..w }))
}

/// Searches for a pair in the unit affine ball whose midpoint lies outside.
pub fn search_nonconvexity(ctx: &GaugeContext, seed: u64, budget: usize) -> Result<Option<Witness>> {
    let best = search_pairs(ctx, seed, budget, |u, v| midpoint_objective(u, v, ctx))?;
    let Some((u, v)) = best else { return Ok(None) };
    let (u, v) = normalized_pair(&u, &v, ctx)?;
    let w = Witness {
        kind: WitnessKind::Nonconvexity,
        margin: 0.0,
        seed,
        u,
        v,
    };
    let margin = w.evaluate_margin(ctx)?;
    Ok((margin > WITNESS_TOL).then_some(Witness { margin, ..w }))
}

/// Evaluations allowed per local ascent, as a fraction of the budget.
const ASCENT_SHARE: usize = 16;

/// Gradient ascent from a stream of random starts (alternately sparse and
/// dense), then Nelder–Mead on the incumbent with whatever budget is left.
/// Starts are not ranked by their initial value: near-parallel pairs score
/// close to 1 but sit on a plateau of local maxima. The objective is
/// invariant under joint scaling of `(u, v)` and is maximized.
fn search_pairs(
    ctx: &GaugeContext,
    seed: u64,
    budget: usize,
    objective: impl Fn(&CoefVec, &CoefVec) -> Result<(f64, Vec<f64>)>,
) -> Result<Option<(CoefVec, CoefVec)>> {
    let m = ctx.dim();
    if m < 2 {
        return Err(Error::invalid("m", "witness searches need m >= 2"));
    }
    if budget == 0 {
        return Ok(None);
    }
    let split = |x: &[f64]| (CoefVec(x[..m].to_vec()), CoefVec(x[m..].to_vec()));
    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (u, v) = split(x);
        objective(&u, &v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = (budget / ASCENT_SHARE).max(1);
    let mut used = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut start = 0usize;
    while used < budget {
        let x: Vec<f64> = if start.is_multiple_of(2) {
            sparse_pair(&mut rng, ctx)
        } else {
            (0..2 * m).map(|_| rng.sample(StandardNormal)).collect()
        };
        start += 1;
        let (fx, xs, n) = gradient_ascent(&eval, x, cap.min(budget - used))?;
        used += n;
        if best.as_ref().is_none_or(|b| fx > b.0) {
            best = Some((fx, xs));
        }
        // leave room for a final polish once a witness is in hand
        if best.as_ref().is_some_and(|b| b.0 > 1.0 + WITNESS_TOL) && budget - used < 2 * cap {
            break;
        }
    }
    let mut best = best.expect("budget > 0 runs one ascent");
    let leftover = budget.saturating_sub(used);
    if leftover > 2 * m + 2 {
        let mut value = |x: &[f64]| eval(x).map(|r| r.0);
        let (fx, xs) = nelder_mead_max(&mut value, best.1.clone(), best.0, leftover)?;
        if fx > best.0 {
            best = (fx, xs);
        }
    }
    Ok((best.0 > 0.0).then(|| split(&best.1)))
}

fn unit(x: Vec<f64>) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.into_iter().map(|v| v / n).collect()
}

/// Armijo gradient ascent on the unit sphere of `ℝ^{2m}`. Returns the best
/// value, its point and the evaluations spent.
fn gradient_ascent(
    eval: &impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    budget: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    if budget == 0 {
        return Ok((f64::NEG_INFINITY, x0, 0));
    }
    let mut x = unit(x0);
    let (mut f, mut g) = eval(&x)?;
    let mut used = 1;
    let mut step: f64 = 1.0;
    while used < budget {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() <= 1e-12 * (1.0 + f.abs()) {
            break;
        }
        let mut t = 2.0 * step;
        let mut accepted = None;
        while used < budget {
            let trial = unit(x.iter().zip(&g).map(|(a, b)| a + t * b).collect());
            let (ft, gt) = eval(&trial)?;
            used += 1;
            if ft >= f + 1e-4 * t * gn2 {
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                break;
            }
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        let gain = fnew - f;
        x = xn;
        f = fnew;
        g = gnew;
        step = t;
        if gain <= 1e-15 * f.abs() {
            break;
        }
    }
    Ok((f, x, used))
}

/// Random pair where each vector uses one to three modes, biased toward
/// modes of opposite anisotropy in `u` and `v`.
fn sparse_pair(rng: &mut ChaCha8Rng, ctx: &GaugeContext) -> Vec<f64> {
    let m = ctx.dim();
    let pairs = &ctx.basis.index_pairs;
    let mut x = vec![0.0; 2 * m];
    for half in 0..2 {
        let support = rng.random_range(1..=3.min(m));
        for _ in 0..support {
            // rejection step: prefer j > k in u and j < k in v
            let mut i = rng.random_range(0..m);
            for _ in 0..3 {
                let (j, k) = pairs[i];
                let wanted = if half == 0 { j >= k } else { j <= k };
                if wanted {
                    break;
                }
                i = rng.random_range(0..m);
            }
            x[half * m + i] += rng.sample::<f64, _>(StandardNormal);
        }
    }
    x
}

/// Maximizes `f` from `x0` with the standard Nelder–Mead moves; restarts the
/// simplex around the incumbent whenever it collapses.
fn nelder_mead_max(
    f: &mut impl FnMut(&[f64]) -> Result<f64>,
    x0: Vec<f64>,
    f0: f64,
    budget: usize,
) -> Result<(f64, Vec<f64>)> {
    let d = x0.len();
    let mut used = 0usize;
    let mut best = (f0, x0);

    while used + d + 1 < budget {
        let scale = best.1.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-3);
        let mut simplex: Vec<(f64, Vec<f64>)> = vec![best.clone()];
        for i in 0..d {
            let mut x = best.1.clone();
            x[i] += 0.25 * scale;
            let fx = f(&x)?;
            used += 1;
            simplex.push((fx, x));
        }
        let start = best.0;
        loop {
            simplex.sort_by(|a, b| b.0.total_cmp(&a.0));
            let spread = simplex[0].0 - simplex[d].0;
            if used >= budget || spread <= 1e-13 * (1.0 + simplex[0].0.abs()) {
                break;
            }
            let mut centroid = vec![0.0; d];
            for (_, x) in &simplex[..d] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / d as f64;
                }
            }
            let worst = simplex[d].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.1)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(1.0);
            let fr = f(&xr)?;
            used += 1;
            if fr > simplex[0].0 {
                let xe = along(2.0);
                let fe = f(&xe)?;
                used += 1;
                simplex[d] = if fe > fr { (fe, xe) } else { (fr, xr) };
            } else if fr > simplex[d - 1].0 {
                simplex[d] = (fr, xr);
            } else {
                let (t, base) = if fr > worst.0 { (0.5, fr) } else { (-0.5, worst.0) };
                let xc = along(t);
                let fc = f(&xc)?;
                used += 1;
                if fc > base {
                    simplex[d] = (fc, xc);
                } else {
                    let top = simplex[0].1.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = top.iter().zip(&entry.1).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let fs = f(&xs)?;
                        used += 1;
                        *entry = (fs, xs);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| b.0.total_cmp(&a.0));
        if simplex[0].0 > best.0 {
            best = simplex[0].clone();
        }
        if best.0 <= start + 1e-12 * (1.0 + start.abs()) {
            break;
        }
    }
    Ok(best)
}
