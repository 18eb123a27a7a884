//! Critical points of
//!
//! ```text
//! Φ_m(u) = E_p(u)^p / p − ‖u‖_{L^α}^α / α − ∫_Ω f u dx,   1 < α < p,
//! ```
//!
//! restricted to the Galerkin space `W_m`. The coefficient-space gradient
//! `F(ζ)` satisfies `⟨F(ζ), ζ⟩ = E^p − ‖u‖_α^α − ∫ f u`, which is positive on
//! the affine sphere `⌊ζ⌋_m = ρ` once `ρ` exceeds the radius returned by
//! [`rho_bound`]. A zero of `F` inside that affine ball is then guaranteed and
//! [`solve_critical_point`] finds and certifies it.

pub mod constants;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, expand, lq_norm, CoefVec, DomainSpec, GradField};
use crate::energy::{affine_energy, energy_flux, pair_with_basis, signed_pow, EnergyParams};
use crate::error::{Error, Result};
use crate::geometry::GaugeContext;
use crate::numeric::{abs_pow, dot, norm_inf};
use crate::solver::{boundary_condition_check, find_zero, BoundaryReport, Gauge, GaugeBallSpec, VectorField, ZeroOptions};
use crate::sphere::build_circle_rule;

pub use constants::{estimate_constants, estimate_mu, estimate_mu_sweep, ConstantsEstimate, MuEstimate, MuOptions};

/// Nodes where `|u|` falls below this contribute nothing to `|u|^{α-2} u`.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub x_pow: u32,
    pub y_pow: u32,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub j: u32,
    pub k: u32,
    pub coef: f64,
}

/// Closed-form source terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceTerm {
    Constant { value: f64 },
    Polynomial { terms: Vec<PolyTerm> },
    SineProduct { terms: Vec<SineTerm> },
}

impl SourceTerm {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            SourceTerm::Constant { value } => *value,
            SourceTerm::Polynomial { terms } => terms
                .iter()
                .map(|t| t.coef * x.powi(t.x_pow as i32) * y.powi(t.y_pow as i32))
                .sum(),
            SourceTerm::SineProduct { terms } => terms
                .iter()
                .map(|t| t.coef * (t.j as f64 * PI * x).sin() * (t.k as f64 * PI * y).sin())
                .sum(),
        }
    }

    /// Parses `const:<c>`, `poly:<i>,<j>,<c>;...` (terms `c x^i y^j`) or
    /// `sine:<j>,<k>,<c>;...` (terms `c sin(jπx) sin(kπy)`).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::invalid("f", format!("{why} in `{s}`"));
        let (kind, body) = s.split_once(':').ok_or_else(|| bad("expected `kind:terms`"))?;
        let triples = |body: &str| -> Result<Vec<(f64, f64, f64)>> {
            body.split(';')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    let v: Vec<f64> = t
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("non-numeric term"))?;
                    match v.as_slice() {
                        [a, b, c] => Ok((*a, *b, *c)),
                        _ => Err(bad("each term needs three numbers")),
                    }
                })
                .collect()
        };
        let as_index = |v: f64| -> Result<u32> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u32)
            } else {
                Err(bad("exponents and frequencies must be nonnegative integers"))
            }
        };
        match kind.trim() {
            "const" | "constant" => {
                let value = body.trim().parse().map_err(|_| bad("non-numeric constant"))?;
                Ok(SourceTerm::Constant { value })
            }
            "poly" | "polynomial" => Ok(SourceTerm::Polynomial {
                terms: triples(body)?
                    .into_iter()
                    .map(|(i, j, c)| Ok(PolyTerm { x_pow: as_index(i)?, y_pow: as_index(j)?, coef: c }))
                    .collect::<Result<_>>()?,
            }),
            "sine" | "sine_product" => Ok(SourceTerm::SineProduct {
                terms: triples(body)?
                    .into_iter()
                    .map(|(j, k, c)| {
                        let (j, k) = (as_index(j)?, as_index(k)?);
                        if j == 0 || k == 0 {
                            return Err(bad("sine frequencies start at 1"));
                        }
                        Ok(SineTerm { j, k, coef: c })
                    })
                    .collect::<Result<_>>()?,
            }),
            _ => Err(bad("unknown source kind")),
        }
    }
}

impl std::fmt::Display for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: Vec<String>| v.join(";");
        match self {
            SourceTerm::Constant { value } => write!(f, "const:{value}"),
            SourceTerm::Polynomial { terms } => write!(
                f,
                "poly:{}",
                join(terms.iter().map(|t| format!("{},{},{}", t.x_pow, t.y_pow, t.coef)).collect())
            ),
            SourceTerm::SineProduct { terms } => write!(
                f,
                "sine:{}",
                join(terms.iter().map(|t| format!("{},{},{}", t.j, t.k, t.coef)).collect())
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub p: f64,
    pub alpha: f64,
    pub source: SourceTerm,
    pub m: usize,
    pub quad_order: usize,
    pub sphere_points: usize,
    pub eps_zero: f64,
    /// Sup-norm residual certificate.
    pub tol: f64,
    /// Relative energy-identity certificate.
    pub identity_tol: f64,
    /// Affine sphere samples for the coercivity check.
    pub boundary_samples: usize,
    /// Known Poincaré constants; estimated on `W_m` when absent.
    pub mu_pp: Option<f64>,
    pub mu_palpha: Option<f64>,
    pub mu_options: MuOptions,
}

impl ProblemSpec {
    pub fn new(p: f64, alpha: f64, source: SourceTerm, m: usize) -> Self {
        ProblemSpec {
            p,
            alpha,
            source,
            m,
            quad_order: crate::basis::DEFAULT_QUAD_ORDER,
            sphere_points: crate::sphere::DEFAULT_SPHERE_POINTS,
            eps_zero: crate::energy::DEFAULT_EPS_ZERO,
            tol: 1e-8,
            identity_tol: 1e-6,
            boundary_samples: 200,
            mu_pp: None,
            mu_palpha: None,
            mu_options: MuOptions::default(),
        }
    }

    /// Conjugate exponent `p' = p / (p − 1)`.
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Critical Sobolev exponent `np/(n − p)` for `p < n`, `None` (infinite)
    /// otherwise.
    pub fn critical_exponent(&self) -> Option<f64> {
        let n = 2.0;
        (self.p < n).then(|| n * self.p / (n - self.p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::invalid("p", format!("need p > 1, got {}", self.p)));
        }
        if !(self.alpha > 1.0 && self.alpha < self.p) {
            return Err(Error::invalid(
                "alpha",
                format!("need 1 < alpha < p, got alpha = {} with p = {}", self.alpha, self.p),
            ));
        }
        if !(self.tol > 0.0) || !(self.identity_tol > 0.0) {
            return Err(Error::invalid("tol", "tolerances must be positive"));
        }
        if self.boundary_samples == 0 {
            return Err(Error::invalid("boundary_samples", "need at least one sample"));
        }
        for (name, mu) in [("mu_pp", self.mu_pp), ("mu_palpha", self.mu_palpha)] {
            if let Some(v) = mu {
                if !(v > 0.0) {
                    return Err(Error::invalid(name, format!("must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn with_m(&self, m: usize) -> Self {
        ProblemSpec { m, ..self.clone() }
    }
}

/// A [`ProblemSpec`] with assembled tables. Implements [`VectorField`] as
/// `ζ ↦ F(ζ)`.
#[derive(Debug, Clone)]
pub struct GalerkinProblem {
    pub spec: ProblemSpec,
    pub ctx: GaugeContext,
    /// `f` at the domain nodes.
    pub f_nodes: Vec<f64>,
    /// `∫_Ω f w_j dx`.
    pub f_proj: Vec<f64>,
}

/// Everything computed from one expansion of `ζ`.
#[derive(Debug, Clone)]
pub struct PhiEval {
    pub phi: f64,
    pub grad: Vec<f64>,
    pub energy: f64,
    pub field: GradField,
}

impl GalerkinProblem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let domain = DomainSpec::unit_square(spec.quad_order)?;
        let basis = Arc::new(build_basis(spec.m, domain)?);
        let rule = Arc::new(build_circle_rule(spec.sphere_points)?);
        let params = EnergyParams::with_eps(spec.p, spec.eps_zero)?;
        let f_nodes: Vec<f64> = basis.quad.points.iter().map(|&[x, y]| spec.source.eval(x, y)).collect();
        if f_nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("f", "source is not finite on the domain"));
        }
        let f_proj = basis.project(&f_nodes);
        Ok(GalerkinProblem {
            ctx: GaugeContext::new(basis, rule, params),
            spec,
            f_nodes,
            f_proj,
        })
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn source_is_zero(&self) -> bool {
        self.f_nodes.iter().all(|&v| v == 0.0)
    }

    /// `‖f‖_{L^{p'}(Ω)}` by domain quadrature.
    pub fn source_norm(&self) -> f64 {
        let q = self.spec.p_conj();
        let s: f64 = self
            .ctx
            .basis
            .quad
            .weights
            .iter()
            .zip(&self.f_nodes)
            .map(|(w, f)| w * abs_pow(*f, q))
            .sum();
        s.powf(1.0 / q)
    }

    pub fn evaluate(&self, zeta: &CoefVec) -> Result<PhiEval> {
        let (p, alpha) = (self.spec.p, self.spec.alpha);
        let field = expand(zeta, &self.ctx.basis)?;
        let breakdown = affine_energy(&field, &self.ctx.rule, &self.ctx.params)?;
        let flux = energy_flux(&field, &self.ctx.rule, &self.ctx.params, &breakdown);
        let mut grad = pair_with_basis(&flux, &self.ctx.basis);

        let quad = &self.ctx.basis.quad;
        let nonlinear: Vec<f64> = field
            .values
            .iter()
            .map(|&u| if u.abs() < TINY { 0.0 } else { signed_pow(u, alpha - 1.0) })
            .collect();
        let nl_proj = self.ctx.basis.project(&nonlinear);
        for ((g, a), b) in grad.iter_mut().zip(&nl_proj).zip(&self.f_proj) {
            *g -= a + b;
        }

        let energy = breakdown.energy;
        let alpha_term: f64 = quad
            .weights
            .iter()
            .zip(&field.values)
            .map(|(w, u)| w * abs_pow(*u, alpha))
            .sum();
        let source_term = dot(&quad.weights.iter().zip(&self.f_nodes).map(|(w, f)| w * f).collect::<Vec<_>>(), &field.values);
        let phi = energy.powf(p) / p - alpha_term / alpha - source_term;
        Ok(PhiEval { phi, grad, energy, field })
    }

    /// `Φ_m(ζ)`.
    pub fn phi(&self, zeta: &CoefVec) -> Result<f64> {
        Ok(self.evaluate(zeta)?.phi)
    }

    /// `F(ζ)`: the coefficient-space gradient of `Φ_m`.
    pub fn assemble_f(&self, zeta: &CoefVec) -> Result<Vec<f64>> {
        Ok(self.evaluate(zeta)?.grad)
    }

    /// `E^p − ‖u‖_α^α − ∫ f u`, each term by its own quadrature.
    pub fn pairing_identity(&self, zeta: &CoefVec) -> Result<f64> {
        let field = expand(zeta, &self.ctx.basis)?;
        let energy = affine_energy(&field, &self.ctx.rule, &self.ctx.params)?.energy;
        let la = lq_norm(&field, self.spec.alpha)?;
        let fu: Vec<f64> = field.values.iter().zip(&self.f_nodes).map(|(u, f)| u * f).collect();
        Ok(energy.powf(self.spec.p) - la.powf(self.spec.alpha) - field.quad.integrate(&fu))
    }

    /// The existence radius for the given Poincaré constants.
    pub fn rho_bound(&self, mu_pp: f64, mu_palpha: f64) -> Result<f64> {
        rho_bound(self.spec.p, self.spec.alpha, self.source_norm(), mu_pp, mu_palpha)
    }

    /// The affine ball of radius `rho` about the origin.
    pub fn affine_ball(&self, rho: f64) -> GaugeBallSpec {
        GaugeBallSpec::new(Gauge::AffineFloor(self.ctx.clone()), CoefVec::zeros(self.m()), rho)
    }
}

impl VectorField for GalerkinProblem {
    fn dim(&self) -> usize {
        self.m()
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.assemble_f(&CoefVec(z.to_vec()))
    }

    fn label(&self) -> &str {
        "galerkin"
    }
}

/// `ρ = max{ [2 ‖f‖_{p'} / μ_{p,p}]^{1/(p−1)}, [2 μ_{p,α}^{−α}]^{1/(p−α)} } + 1`.
pub fn rho_bound(p: f64, alpha: f64, f_norm: f64, mu_pp: f64, mu_palpha: f64) -> Result<f64> {
    if !(mu_pp > 0.0) || !(mu_palpha > 0.0) {
        return Err(Error::invalid("mu", "Poincaré constants must be positive"));
    }
    if !(f_norm >= 0.0) {
        return Err(Error::invalid("f_norm", "source norm must be nonnegative"));
    }
    if !(p > 1.0 && alpha > 1.0 && alpha < p) {
        return Err(Error::invalid("alpha", "need 1 < alpha < p"));
    }
    let source_part = (2.0 * f_norm / mu_pp).powf(1.0 / (p - 1.0));
    let power_part = (2.0 * mu_palpha.powf(-alpha)).powf(1.0 / (p - alpha));
    Ok(source_part.max(power_part) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSource {
    Estimated,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Certified,
    /// `f ≡ 0`: `ζ = 0` is a critical point and no nontrivial one is claimed.
    TrivialAdmissible,
    CertificateFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificates {
    pub residual: bool,
    pub ball: bool,
    pub identity: bool,
    pub nontrivial: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.residual && self.ball && self.identity && self.nontrivial
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub m: usize,
    pub status: SolveStatus,
    pub zeta_star: CoefVec,
    pub energy: f64,
    pub energy_p: f64,
    pub phi_value: f64,
    pub residual_sup: f64,
    pub rho_used: f64,
    /// Times `ρ` was doubled before the coercivity check passed.
    pub rho_inflations: usize,
    pub mu_pp: f64,
    pub mu_palpha: f64,
    pub mu_source: MuSource,
    pub source_norm: f64,
    pub boundary_min_pairing: f64,
    pub identity_gap: f64,
    pub identity_gap_rel: f64,
    pub l2_norm_of_u: f64,
    pub descent_iterations: usize,
    pub newton_iterations: usize,
    pub certificates: Certificates,
}

/// Radius doublings allowed when the sampled coercivity check fails.
const MAX_RHO_INFLATIONS: usize = 5;

/// Preconditioned steepest descent on `Φ_m` with Armijo backtracking.
///
/// The preconditioner is the inverse Dirichlet–Laplacian eigenvalue of each
/// mode, which makes the energy part of the Hessian close to a multiple of
/// the identity.
pub fn descend(problem: &GalerkinProblem, start: CoefVec, max_iter: usize, gtol: f64) -> Result<(CoefVec, usize)> {
    let precond: Vec<f64> = problem
        .ctx
        .basis
        .index_pairs
        .iter()
        .map(|&(j, k)| 1.0 / (PI * PI * (j * j + k * k) as f64))
        .collect();
    let mut z = start;
    let mut cur = problem.evaluate(&z)?;
    let mut iters = 0;
    let mut step: f64 = 1.0;
    while iters < max_iter {
        if norm_inf(&cur.grad) <= gtol {
            break;
        }
        iters += 1;
        let dir: Vec<f64> = cur.grad.iter().zip(&precond).map(|(g, s)| -g * s).collect();
        let slope = dot(&cur.grad, &dir);
        let mut t = (step * 2.0).min(1e6);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = CoefVec(z.0.iter().zip(&dir).map(|(a, d)| a + t * d).collect());
            let ev = problem.evaluate(&trial)?;
            if ev.phi <= cur.phi + 1e-4 * t * slope {
                accepted = Some((trial, ev));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((zn, ev)) => {
                let progress = cur.phi - ev.phi;
                z = zn;
                cur = ev;
                step = t;
                if progress <= 1e-16 * (1.0 + cur.phi.abs()) {
                    break;
                }
            }
            None => break,
        }
    }
    Ok((z, iters))
}

/// Finds and certifies a nontrivial critical point of `Φ_m`.
pub fn solve_critical_point(problem: &GalerkinProblem, seed: u64) -> Result<SolveResult> {
    let spec = &problem.spec;
    let m = problem.m();
    let (mu_pp, mu_palpha, mu_source) = match (spec.mu_pp, spec.mu_palpha) {
        (Some(a), Some(b)) => (a, b, MuSource::Supplied),
        _ => {
            let a = match spec.mu_pp {
                Some(v) => v,
                None => estimate_mu(&problem.ctx, spec.p, &spec.mu_options, seed)?.value,
            };
            let b = match spec.mu_palpha {
                Some(v) => v,
                None => estimate_mu(&problem.ctx, spec.alpha, &spec.mu_options, seed)?.value,
            };
            (a, b, MuSource::Estimated)
        }
    };
    let source_norm = problem.source_norm();

    if problem.source_is_zero() {
        let zero = CoefVec::zeros(m);
        let residual = norm_inf(&problem.assemble_f(&zero)?);
        return Ok(SolveResult {
            m,
            status: SolveStatus::TrivialAdmissible,
            zeta_star: zero,
            energy: 0.0,
            energy_p: 0.0,
            phi_value: 0.0,
            residual_sup: residual,
            rho_used: rho_bound(spec.p, spec.alpha, 0.0, mu_pp, mu_palpha)?,
            rho_inflations: 0,
            mu_pp,
            mu_palpha,
            mu_source,
            source_norm,
            boundary_min_pairing: f64::NAN,
            identity_gap: 0.0,
            identity_gap_rel: 0.0,
            l2_norm_of_u: 0.0,
            descent_iterations: 0,
            newton_iterations: 0,
            certificates: Certificates {
                residual: residual <= spec.tol,
                ball: true,
                identity: true,
                nontrivial: false,
            },
        });
    }

    let (rho, inflations, report) = coercive_radius(problem, mu_pp, mu_palpha, seed)?;

    let (descended, descent_iterations) = descend(problem, CoefVec::zeros(m), 5000, 1e-7)?;
    let ball = problem.affine_ball(rho);
    let opts = ZeroOptions {
        tol: spec.tol,
        seed,
        initial: Some(descended),
        boundary_samples: None,
        ..ZeroOptions::default()
    };
    let zero = find_zero(problem, &ball, &opts)?;

    let z = zero.z;
    let ev = problem.evaluate(&z)?;
    let residual_sup = norm_inf(&ev.grad);
    let energy_p = ev.energy.powf(spec.p);
    let identity_gap = problem.pairing_identity(&z)?.abs();
    let identity_gap_rel = identity_gap / (1.0 + energy_p);
    let l2 = lq_norm(&ev.field, 2.0)?;
    let certificates = Certificates {
        residual: residual_sup <= spec.tol,
        ball: ev.energy <= rho * (1.0 + 1e-9),
        identity: identity_gap_rel <= spec.identity_tol,
        nontrivial: l2 > 0.0,
    };
    Ok(SolveResult {
        m,
        status: if certificates.all() {
            SolveStatus::Certified
        } else {
            SolveStatus::CertificateFailure
        },
        zeta_star: z,
        energy: ev.energy,
        energy_p,
        phi_value: ev.phi,
        residual_sup,
        rho_used: rho,
        rho_inflations: inflations,
        mu_pp,
        mu_palpha,
        mu_source,
        source_norm,
        boundary_min_pairing: report.min_pairing,
        identity_gap,
        identity_gap_rel,
        l2_norm_of_u: l2,
        descent_iterations,
        newton_iterations: zero.iterations,
        certificates,
    })
}

/// `ρ` from [`rho_bound`], doubled until the sampled pairing `⟨F(ζ), ζ⟩` is
/// positive on the affine sphere.
pub fn coercive_radius(
    problem: &GalerkinProblem,
    mu_pp: f64,
    mu_palpha: f64,
    seed: u64,
) -> Result<(f64, usize, BoundaryReport)> {
    let mut rho = problem.rho_bound(mu_pp, mu_palpha)?;
    let mut inflations = 0;
    loop {
        let report = boundary_condition_check(problem, &problem.affine_ball(rho), problem.spec.boundary_samples, seed)?;
        if report.min_pairing > 0.0 {
            return Ok((rho, inflations, report));
        }
        if inflations == MAX_RHO_INFLATIONS {
            return Err(Error::BoundaryCondition {
                min_pairing: report.min_pairing,
            });
        }
        rho *= 2.0;
        inflations += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub energy: f64,
    pub energy_p: f64,
    pub phi: f64,
    pub residual: f64,
    pub identity_gap: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyDiff {
    pub m_from: usize,
    pub m_to: usize,
    /// `‖u_{m_to} − u_{m_from}‖_{L^s}`.
    pub ls_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub s: f64,
    pub rho: f64,
    pub mu_pp: f64,
    pub mu_palpha: f64,
    pub rows: Vec<SweepRow>,
    pub differences: Vec<CauchyDiff>,
    pub results: Vec<SolveResult>,
    pub max_energy_p: f64,
}

/// Solves on each `W_m` of an increasing list and reports the `L^s`
/// differences of consecutive solutions. The Poincaré constants are estimated
/// once on the largest space, so every solve shares one `ρ`.
pub fn convergence_study(spec: &ProblemSpec, m_list: &[usize], s: f64, seed: u64) -> Result<ConvergenceTable> {
    spec.validate()?;
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("m_list", "need a nonempty strictly increasing list"));
    }
    if !(s >= 1.0) {
        return Err(Error::invalid("s", format!("need s >= 1, got {s}")));
    }
    if let Some(crit) = spec.critical_exponent() {
        if s >= crit {
            return Err(Error::invalid("s", format!("need s < p* = {crit}, got {s}")));
        }
    }
    let m_max = *m_list.last().expect("nonempty");
    let largest = GalerkinProblem::new(spec.with_m(m_max))?;
    let mu_pp = match spec.mu_pp {
        Some(v) => v,
        None => estimate_mu(&largest.ctx, spec.p, &spec.mu_options, seed)?.value,
    };
    let mu_palpha = match spec.mu_palpha {
        Some(v) => v,
        None => estimate_mu(&largest.ctx, spec.alpha, &spec.mu_options, seed)?.value,
    };

    let mut results = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut sub = spec.with_m(m);
        sub.mu_pp = Some(mu_pp);
        sub.mu_palpha = Some(mu_palpha);
        let problem = GalerkinProblem::new(sub)?;
        let mut res = solve_critical_point(&problem, seed)?;
        if spec.mu_pp.is_none() || spec.mu_palpha.is_none() {
            res.mu_source = MuSource::Estimated;
        }
        results.push(res);
    }

    let mut differences = Vec::new();
    for w in results.windows(2) {
        let diff = &w[1].zeta_star.resized(m_max) - &w[0].zeta_star.resized(m_max);
        let field = expand(&diff, &largest.ctx.basis)?;
        differences.push(CauchyDiff {
            m_from: w[0].m,
            m_to: w[1].m,
            ls_diff: lq_norm(&field, s)?,
        });
    }
    let rows = results
        .iter()
        .map(|r| SweepRow {
            m: r.m,
            energy: r.energy,
            energy_p: r.energy_p,
            phi: r.phi_value,
            residual: r.residual_sup,
            identity_gap: r.identity_gap,
            status: r.status,
        })
        .collect();
    let max_energy_p = results.iter().map(|r| r.energy_p).fold(0.0, f64::max);
    Ok(ConvergenceTable {
        s,
        rho: results.iter().map(|r| r.rho_used).fold(0.0, f64::max),
        mu_pp,
        mu_palpha,
        rows,
        differences,
        results,
        max_energy_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_problem(m: usize, source: SourceTerm) -> GalerkinProblem {
        let mut spec = ProblemSpec::new(2.0, 1.5, source, m);
        spec.quad_order = 24;
        spec.sphere_points = 128;
        GalerkinProblem::new(spec).unwrap()
    }

    #[test]
    fn rho_formula() {
        assert_relative_eq!(rho_bound(2.0, 1.5, 0.5, 1.0, 1.0).unwrap(), 5.0, max_relative = 1e-15);
        // f → 0 leaves the power part
        let lim = 2f64.powf(1.0 / 0.5) + 1.0;
        assert_relative_eq!(rho_bound(2.0, 1.5, 0.0, 1.0, 1.0).unwrap(), lim, max_relative = 1e-15);
        let mut prev = 0.0;
        for k in 0..12 {
            let r = rho_bound(2.5, 1.2, 0.01 * 2f64.powi(k), 0.7, 1.3).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        assert!(rho_bound(2.0, 1.5, 1.0, 0.0, 1.0).is_err());
        assert!(rho_bound(2.0, 1.5, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = ProblemSpec::new(2.0, 2.5, SourceTerm::Constant { value: 1.0 }, 3);
        assert!(GalerkinProblem::new(spec.clone()).is_err());
        spec.alpha = 1.0;
        assert!(spec.validate().is_err());
        spec.alpha = 1.5;
        spec.mu_pp = Some(-1.0);
        assert!(spec.validate().is_err());
        spec.mu_pp = None;
        assert!(spec.validate().is_ok());
        assert_eq!(spec.critical_exponent(), None);
        assert_eq!(spec.p_conj(), 2.0);
        let s = ProblemSpec::new(1.5, 1.2, SourceTerm::Constant { value: 1.0 }, 3);
        assert_relative_eq!(s.critical_exponent().unwrap(), 6.0);
    }

    #[test]
    fn source_parsing_round_trips() {
        for text in ["const:1", "poly:0,0,1;1,2,-0.5", "sine:1,1,2;3,1,0.25"] {
            let s = SourceTerm::parse(text).unwrap();
            assert_eq!(SourceTerm::parse(&s.to_string()).unwrap(), s);
        }
        assert!(SourceTerm::parse("const").is_err());
        assert!(SourceTerm::parse("sine:0,1,1").is_err());
        assert!(SourceTerm::parse("poly:1.5,0,1").is_err());
        assert!(SourceTerm::parse("wave:1").is_err());
        let p = SourceTerm::parse("poly:1,0,2;0,1,3").unwrap();
        assert_relative_eq!(p.eval(0.5, 0.25), 1.75);
    }

    #[test]
    fn phi_at_zero_and_first_mode() {
        let pr = small_problem(3, SourceTerm::Constant { value: 1.0 });
        assert_eq!(pr.phi(&CoefVec::zeros(3)).unwrap(), 0.0);
        let f0 = pr.assemble_f(&CoefVec::zeros(3)).unwrap();
        for (a, b) in f0.iter().zip(&pr.f_proj) {
            assert_eq!(*a, -b);
        }

        let pr0 = small_problem(1, SourceTerm::Constant { value: 0.0 });
        let e1 = CoefVec::unit(1, 0);
        let u = expand(&e1, &pr0.ctx.basis).unwrap();
        let la = lq_norm(&u, 1.5).unwrap().powf(1.5);
        let want = PI * PI / 4.0 - la / 1.5;
        assert_relative_eq!(pr0.phi(&e1).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn phi_is_coercive_along_rays() {
        let pr = small_problem(4, SourceTerm::Constant { value: 1.0 });
        let z = CoefVec(vec![0.3, -0.2, 0.5, 0.1]);
        let vals: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&t| pr.phi(&z.scaled(t)).unwrap()).collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
    }

    #[test]
    fn pairing_matches_identity() {
        let pr = small_problem(5, SourceTerm::SineProduct {
            terms: vec![SineTerm { j: 1, k: 2, coef: 1.0 }],
        });
        let z = CoefVec(vec![0.4, -0.1, 0.3, 0.2, -0.25]);
        let lhs = dot(&pr.assemble_f(&z).unwrap(), z.as_slice());
        let rhs = pr.pairing_identity(&z).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn zero_source_is_trivial() {
        let mut pr = small_problem(3, SourceTerm::Constant { value: 0.0 });
        pr.spec.mu_pp = Some(4.0);
        pr.spec.mu_palpha = Some(4.0);
        let res = solve_critical_point(&pr, 0).unwrap();
        assert_eq!(res.status, SolveStatus::TrivialAdmissible);
        assert_eq!(res.residual_sup, 0.0);
        assert!(res.zeta_star.is_zero());
    }

    #[test]
    fn convergence_study_argument_checks() {
        let spec = ProblemSpec::new(1.5, 1.2, SourceTerm::Constant { value: 1.0 }, 3);
        assert!(convergence_study(&spec, &[3, 2], 2.0, 0).is_err());
        assert!(convergence_study(&spec, &[1, 2], 6.0, 0).is_err());
        assert!(convergence_study(&spec, &[1, 2], 0.5, 0).is_err());
    }
}
