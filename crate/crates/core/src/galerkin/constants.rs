//! Finite-dimensional estimates of the constants relating the affine energy
//! to the usual norms on `W_m`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, expand, grad_lp_norm, lq_norm, w1pm_norm, CoefVec, DomainSpec};
use crate::energy::{affine_energy, energy_flux, pair_with_basis, signed_pow, EnergyParams};
use crate::error::{Error, Result};
use crate::geometry::GaugeContext;
use crate::numeric::{dot, norm2};
use crate::sphere::build_circle_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptions {
    pub multistarts: usize,
    /// Descent iterations per start.
    pub budget: usize,
    /// Stationarity threshold on the preconditioned gradient, relative to
    /// the ratio.
    pub gtol: f64,
}

impl Default for MuOptions {
    fn default() -> Self {
        MuOptions {
            multistarts: 6,
            budget: 300,
            gtol: 1e-7,
        }
    }
}

/// Upper estimate of `μ_{p,q} = inf E(u) / ‖u‖_{L^q}` over `W_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub m: usize,
    pub p: f64,
    pub q: f64,
    pub value: f64,
    pub argmin: CoefVec,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Ratio {
    value: f64,
    grad: Vec<f64>,
}

fn ratio(ctx: &GaugeContext, q: f64, zeta: &CoefVec) -> Result<Ratio> {
    let p = ctx.p();
    let field = expand(zeta, &ctx.basis)?;
    let bd = affine_energy(&field, &ctx.rule, &ctx.params)?;
    let nq = lq_norm(&field, q)?;
    if bd.is_zero() || nq == 0.0 {
        return Err(Error::ZeroField);
    }
    let e = bd.energy;
    let flux = energy_flux(&field, &ctx.rule, &ctx.params, &bd);
    let ge = pair_with_basis(&flux, &ctx.basis);
    let pow: Vec<f64> = field.values.iter().map(|&u| signed_pow(u, q - 1.0)).collect();
    let gn = ctx.basis.project(&pow);
    let r = e / nq;
    let ep1 = e.powf(p - 1.0);
    let nq1 = nq.powf(q - 1.0);
    let grad = ge
        .iter()
        .zip(&gn)
        .map(|(a, b)| (a / ep1 - r * b / nq1) / nq)
        .collect();
    Ok(Ratio { value: r, grad })
}

fn laplace_precond(ctx: &GaugeContext) -> Vec<f64> {
    ctx.basis
        .index_pairs
        .iter()
        .map(|&(j, k)| 1.0 / (PI * PI * (j * j + k * k) as f64))
        .collect()
}

fn normalized(z: Vec<f64>) -> CoefVec {
    let n = norm2(&z);
    CoefVec(z.into_iter().map(|v| v / n).collect())
}

struct Descent {
    z: CoefVec,
    value: f64,
    converged: bool,
    iterations: usize,
    evaluations: usize,
}

fn descend_ratio(ctx: &GaugeContext, q: f64, start: CoefVec, opts: &MuOptions, precond: &[f64]) -> Result<Descent> {
    let mut z = normalized(start.0);
    let mut cur = ratio(ctx, q, &z)?;
    let mut evaluations = 1;
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < opts.budget {
        let dir: Vec<f64> = cur.grad.iter().zip(precond).map(|(g, s)| -g * s).collect();
        let slope = dot(&cur.grad, &dir);
        if (-slope).sqrt() <= opts.gtol * cur.value {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = (2.0 * step).min(1e4);
        let mut accepted = None;
        for _ in 0..50 {
            let trial = normalized(z.0.iter().zip(&dir).map(|(a, d)| a + t * d).collect());
            evaluations += 1;
            // a step through zero energy is just rejected
            if let Ok(r) = ratio(ctx, q, &trial) {
                if r.value <= cur.value + 1e-4 * t * slope {
                    accepted = Some((trial, r));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((zn, rn)) = accepted else { break };
        let drop = cur.value - rn.value;
        z = zn;
        cur = rn;
        step = t;
        if drop <= 1e-15 * cur.value {
            stalls += 1;
            if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(Descent {
        z,
        value: cur.value,
        converged,
        iterations,
        evaluations,
    })
}

/// Minimizes `E(u)/‖u‖_q` over `W_m` by preconditioned descent on the unit
/// sphere of coefficient space. Starts are `warm` (if given), the first few
/// basis vectors, then smooth random vectors.
pub fn estimate_mu_from(
    ctx: &GaugeContext,
    q: f64,
    opts: &MuOptions,
    seed: u64,
    warm: Option<&CoefVec>,
) -> Result<MuEstimate> {
    let m = ctx.dim();
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::invalid("q", format!("need finite q >= 1, got {q}")));
    }
    let p = ctx.p();
    if p < 2.0 {
        let crit = 2.0 * p / (2.0 - p);
        if q > crit {
            return Err(Error::invalid("q", format!("need q <= p* = {crit}, got {q}")));
        }
    }
    if opts.multistarts == 0 {
        return Err(Error::invalid("multistarts", "need at least one start"));
    }
    let precond = laplace_precond(ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<CoefVec> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.resized(m));
    }
    let unit_starts = m.min(opts.multistarts.div_ceil(2));
    starts.extend((0..unit_starts).map(|j| CoefVec::unit(m, j)));
    while starts.len() < opts.multistarts + usize::from(warm.is_some()) {
        starts.push(CoefVec(
            precond
                .iter()
                .map(|s| rng.sample::<f64, _>(StandardNormal) * s.sqrt())
                .collect(),
        ));
    }

    let mut best: Option<Descent> = None;
    let (mut iterations, mut evaluations) = (0, 0);
    for start in starts {
        if start.is_zero() {
            continue;
        }
        let d = descend_ratio(ctx, q, start, opts, &precond)?;
        iterations += d.iterations;
        evaluations += d.evaluations;
        if best.as_ref().is_none_or(|b| d.value < b.value) {
            best = Some(d);
        }
    }
    let best = best.ok_or(Error::ZeroField)?;
    Ok(MuEstimate {
        m,
        p,
        q,
        value: best.value,
        argmin: best.z,
        converged: best.converged,
        iterations,
        evaluations,
    })
}

pub fn estimate_mu(ctx: &GaugeContext, q: f64, opts: &MuOptions, seed: u64) -> Result<MuEstimate> {
    estimate_mu_from(ctx, q, opts, seed, None)
}

/// Estimates on nested spaces, each warm-started from the previous minimizer,
/// so the values are nonincreasing in `m`.
pub fn estimate_mu_sweep(
    m_list: &[usize],
    p: f64,
    q: f64,
    domain: DomainSpec,
    sphere_points: usize,
    opts: &MuOptions,
    seed: u64,
) -> Result<Vec<MuEstimate>> {
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("m_list", "need a nonempty strictly increasing list"));
    }
    let rule = Arc::new(build_circle_rule(sphere_points)?);
    let params = EnergyParams::new(p)?;
    let mut out: Vec<MuEstimate> = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let ctx = GaugeContext::new(Arc::new(build_basis(m, domain)?), rule.clone(), params);
        let warm = out.last().map(|e| e.argmin.clone());
        out.push(estimate_mu_from(&ctx, q, opts, seed, warm.as_ref())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
}

impl RatioRange {
    fn empty() -> Self {
        RatioRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// Sampled extrema of the norm ratios on `W_m`. Each range is over random
/// coefficient vectors and, where a direction appears, over the circle nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub m: usize,
    pub p: f64,
    pub samples: usize,
    pub mu: Vec<MuEstimate>,
    /// `⌊ζ⌋ / |ζ|₂`.
    pub floor_over_euclid: RatioRange,
    /// `‖∇u‖_p / |ζ|₂`; its max is the sampled `c(m)`.
    pub norm_over_euclid: RatioRange,
    /// `E(u) / ‖∇u‖_p`: lower end estimates `C`, upper end is at most 1.
    pub energy_over_grad: RatioRange,
    /// `‖∇_ξ u‖_p / ‖u‖_p`: lower end estimates `D₁`.
    pub dir_over_lp: RatioRange,
    /// `‖∇_ξ u‖_p / ‖∇u‖_p`: lower end estimates `D₂`.
    pub dir_over_grad: RatioRange,
    /// `E(u) / ‖∇_ξ u‖_p`: upper end estimates `D₃`.
    pub energy_over_dir: RatioRange,
    /// Samples violating `⌊ζ⌋ ≤ ‖∇u‖_p` beyond rounding.
    pub floor_norm_violations: usize,
}

impl ConstantsEstimate {
    pub fn c_m(&self) -> f64 {
        self.norm_over_euclid.max
    }

    pub fn all_positive(&self) -> bool {
        let ranges = [
            self.floor_over_euclid,
            self.norm_over_euclid,
            self.energy_over_grad,
            self.dir_over_lp,
            self.dir_over_grad,
            self.energy_over_dir,
        ];
        ranges.iter().all(|r| r.min > 0.0 && r.max.is_finite()) && self.mu.iter().all(|m| m.value > 0.0)
    }
}

/// Samples the ratios at `samples` random vectors (half white, half with
/// Laplacian-smoothed coefficients) and estimates `μ_{p,q}` for each `q`.
pub fn estimate_constants(
    ctx: &GaugeContext,
    qs: &[f64],
    samples: usize,
    mu_opts: &MuOptions,
    seed: u64,
) -> Result<ConstantsEstimate> {
    if samples == 0 {
        return Err(Error::invalid("samples", "need at least one sample"));
    }
    let m = ctx.dim();
    let p = ctx.p();
    let precond = laplace_precond(ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut floor_eu = RatioRange::empty();
    let mut norm_eu = RatioRange::empty();
    let mut e_grad = RatioRange::empty();
    let mut dir_lp = RatioRange::empty();
    let mut dir_grad = RatioRange::empty();
    let mut e_dir = RatioRange::empty();
    let mut violations = 0;
    let mut taken = 0;
    while taken < samples {
        let smooth = taken % 2 == 1;
        let z = CoefVec(
            precond
                .iter()
                .map(|s| {
                    let g: f64 = rng.sample(StandardNormal);
                    if smooth {
                        g * s.sqrt()
                    } else {
                        g
                    }
                })
                .collect(),
        );
        let eu = z.norm2();
        if eu == 0.0 {
            continue;
        }
        taken += 1;
        let field = expand(&z, &ctx.basis)?;
        let bd = affine_energy(&field, &ctx.rule, &ctx.params)?;
        let grad = grad_lp_norm(&field, p)?;
        let lp = lq_norm(&field, p)?;
        let norm = w1pm_norm(&z, &ctx.basis, p)?;
        floor_eu.push(bd.energy / eu);
        norm_eu.push(norm / eu);
        e_grad.push(bd.energy / grad);
        if bd.energy > norm * (1.0 + 1e-9) {
            violations += 1;
        }
        for &d in &bd.dir_norms {
            dir_lp.push(d / lp);
            dir_grad.push(d / grad);
            e_dir.push(bd.energy / d);
        }
    }
    let mu = qs
        .iter()
        .map(|&q| estimate_mu(ctx, q, mu_opts, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsEstimate {
        m,
        p,
        samples,
        mu,
        floor_over_euclid: floor_eu,
        norm_over_euclid: norm_eu,
        energy_over_grad: e_grad,
        dir_over_lp: dir_lp,
        dir_over_grad: dir_grad,
        energy_over_dir: e_dir,
        floor_norm_violations: violations,
    })
}
