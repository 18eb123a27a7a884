//! The affine L^p energy and its derivative.
//!
//! For `u` sampled on the domain nodes, with `N(ξ) = ‖∇u·ξ‖_{L^p(Ω)}`,
//!
//! ```text
//! E_p(u) = γ_{n,p} ( ∫_{S^{n-1}} N(ξ)^{-n} dσ(ξ) )^{-1/n}
//! γ_{n,p} = (n ω_n)^{1/n} ( n ω_n ω_{p-1} / (2 ω_{n+p-2}) )^{1/p}
//! ```
//!
//! This normalization gives `E_p(u) ≤ ‖∇u‖_{L^p}` with equality whenever
//! `N` is constant over directions. The derivative of `E_p^p / p` in the
//! direction `φ` is `∫_Ω V·∇φ dx` with the nodal flux
//!
//! ```text
//! V(x) = γ^{-n} E^{n+p} ∫ N(ξ)^{-(n+p)} {∇u(x)·ξ}^{p-1} ξ dσ(ξ)
//! ```
//!
//! where `{t}^q = |t|^q sign(t)`. Pairing `V` with `∇u` itself recovers `E^p`.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::basis::{expand, grad_lp_norm, BasisSpec, CoefVec, GradField};
use crate::error::{Error, Result};
use crate::numeric::{abs_pow, pairwise_sum};
use crate::sphere::SphereRule;

pub const DEFAULT_EPS_ZERO: f64 = 1e-12;

/// Volume `ω_κ = π^{κ/2} / Γ(κ/2 + 1)` of the unit ball in `R^κ`, extended
/// to real `κ > 0`.
pub fn unit_ball_volume(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid("kappa", format!("need kappa > 0, got {kappa}")));
    }
    Ok(PI.powf(0.5 * kappa) / gamma(0.5 * kappa + 1.0))
}

pub fn gamma_np(n: usize, p: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need n >= 2, got {n}")));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::invalid("p", format!("need p > 1, got {p}")));
    }
    let nf = n as f64;
    let omega_n = unit_ball_volume(nf)?;
    let ratio = nf * omega_n * unit_ball_volume(p - 1.0)? / (2.0 * unit_ball_volume(nf + p - 2.0)?);
    Ok((nf * omega_n).powf(1.0 / nf) * ratio.powf(1.0 / p))
}

/// `{x}^p = |x|^p sign(x)`, with `sign(0) = 0`.
pub fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        abs_pow(x, p).copysign(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub n: usize,
    pub p: f64,
    pub gamma: f64,
    pub eps_zero: f64,
}

impl EnergyParams {
    /// Planar parameters (`n = 2`) with the default zero guard.
    pub fn new(p: f64) -> Result<Self> {
        Self::with_eps(p, DEFAULT_EPS_ZERO)
    }

    pub fn with_eps(p: f64, eps_zero: f64) -> Result<Self> {
        if !(eps_zero > 0.0 && eps_zero <= 1e-8) {
            return Err(Error::invalid(
                "eps_zero",
                format!("must lie in (0, 1e-8], got {eps_zero}"),
            ));
        }
        Ok(EnergyParams {
            n: 2,
            p,
            gamma: gamma_np(2, p)?,
            eps_zero,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    /// `‖∇_ξ u‖_{L^p}` for every node of the sphere rule.
    pub dir_norms: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
}

impl EnergyBreakdown {
    pub fn is_zero(&self) -> bool {
        self.energy == 0.0
    }
}

/// Second-moment matrix `∫ ∇u ∇uᵀ` as `[xx, xy, yy]`.
fn moment_matrix(field: &GradField) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (w, g) in field.quad.weights.iter().zip(&field.grads) {
        m[0] += w * g[0] * g[0];
        m[1] += w * g[0] * g[1];
        m[2] += w * g[1] * g[1];
    }
    m
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::invalid("p", format!("need p > 1, got {p}")));
    }
    Ok(())
}

/// `‖∇u·ξ_k‖_{L^p(Ω)}` for every direction of the rule.
pub fn directional_lp_norms(field: &GradField, rule: &SphereRule, p: f64) -> Result<Vec<f64>> {
    check_p(p)?;
    field.validate()?;
    if p == 2.0 {
        // ‖∇u·ξ‖₂² = ξᵀ M ξ
        let [mxx, mxy, myy] = moment_matrix(field);
        return Ok(rule
            .xis
            .iter()
            .map(|&[c, s]| (c * c * mxx + 2.0 * c * s * mxy + s * s * myy).max(0.0).sqrt())
            .collect());
    }
    Ok(directional_lp_norms_direct(field, rule, p))
}

/// Direct nodal sweep, valid for every `p`.
pub(crate) fn directional_lp_norms_direct(field: &GradField, rule: &SphereRule, p: f64) -> Vec<f64> {
    let w = &field.quad.weights;
    rule.xis
        .iter()
        .map(|&[c, s]| {
            let acc: f64 = field
                .grads
                .iter()
                .zip(w)
                .map(|(g, wq)| wq * abs_pow(g[0] * c + g[1] * s, p))
                .sum();
            acc.powf(1.0 / p)
        })
        .collect()
}

fn energy_from_dir_norms(dir_norms: &[f64], rule: &SphereRule, params: &EnergyParams) -> f64 {
    let n = params.n as f64;
    let terms: Vec<f64> = rule
        .weights
        .iter()
        .zip(dir_norms)
        .map(|(w, d)| w * d.powf(-n))
        .collect();
    params.gamma * pairwise_sum(&terms).powf(-1.0 / n)
}

pub fn affine_energy(field: &GradField, rule: &SphereRule, params: &EnergyParams) -> Result<EnergyBreakdown> {
    if params.n != 2 {
        return Err(Error::invalid("n", "only planar domains are supported"));
    }
    let grad_norm = grad_lp_norm(field, params.p)?;
    let dir_norms = directional_lp_norms(field, rule, params.p)?;
    if grad_norm < params.eps_zero {
        return Ok(EnergyBreakdown {
            dir_norms,
            energy: 0.0,
            grad_norm,
        });
    }
    let min_dir = dir_norms.iter().copied().fold(f64::INFINITY, f64::min);
    if min_dir < params.eps_zero {
        return Err(Error::DegenerateDirection {
            dir_norm: min_dir,
            grad_norm,
        });
    }
    let energy = energy_from_dir_norms(&dir_norms, rule, params);
    Ok(EnergyBreakdown {
        dir_norms,
        energy,
        grad_norm,
    })
}

/// Per-direction weights `c_k = w_k γ^{-n} E^{n+p} N_k^{-(n+p)}`.
fn flux_weights(breakdown: &EnergyBreakdown, rule: &SphereRule, params: &EnergyParams) -> Vec<f64> {
    let n = params.n as f64;
    let p = params.p;
    let scale = params.gamma.powf(-n) * breakdown.energy.powf(n + p);
    rule.weights
        .iter()
        .zip(&breakdown.dir_norms)
        .map(|(w, d)| w * scale * d.powf(-(n + p)))
        .collect()
}

/// Nodal flux `V(x_q) = H_u^{p-1}(∇u) ∇H_u(∇u)` at every domain node; zero
/// when the energy vanishes.
pub fn energy_flux(
    field: &GradField,
    rule: &SphereRule,
    params: &EnergyParams,
    breakdown: &EnergyBreakdown,
) -> Vec<[f64; 2]> {
    let mut flux = vec![[0.0; 2]; field.len()];
    if breakdown.is_zero() {
        return flux;
    }
    let c = flux_weights(breakdown, rule, params);
    let p = params.p;
    if p == 2.0 {
        // Σ_k c_k (g·ξ_k) ξ_k = B g
        let mut b = [0.0; 3];
        for (ck, &[x, y]) in c.iter().zip(&rule.xis) {
            b[0] += ck * x * x;
            b[1] += ck * x * y;
            b[2] += ck * y * y;
        }
        for (v, g) in flux.iter_mut().zip(&field.grads) {
            *v = [b[0] * g[0] + b[1] * g[1], b[1] * g[0] + b[2] * g[1]];
        }
        return flux;
    }
    for (ck, &[x, y]) in c.iter().zip(&rule.xis) {
        for (v, g) in flux.iter_mut().zip(&field.grads) {
            let t = ck * signed_pow(g[0] * x + g[1] * y, p - 1.0);
            v[0] += t * x;
            v[1] += t * y;
        }
    }
    flux
}

/// Energy of `Σ ζ_j w_j` together with the coefficient-space gradient of
/// `E_p^p / p`.
#[derive(Debug, Clone)]
pub struct EnergyEval {
    pub field: GradField,
    pub breakdown: EnergyBreakdown,
    pub grad: Vec<f64>,
}

pub fn energy_and_grad(
    zeta: &CoefVec,
    basis: &BasisSpec,
    rule: &SphereRule,
    params: &EnergyParams,
) -> Result<EnergyEval> {
    let field = expand(zeta, basis)?;
    let breakdown = affine_energy(&field, rule, params)?;
    let flux = energy_flux(&field, rule, params, &breakdown);
    let grad = pair_with_basis(&flux, basis);
    Ok(EnergyEval {
        field,
        breakdown,
        grad,
    })
}

/// `∫_Ω V·∇w_j dx` for every basis function.
pub(crate) fn pair_with_basis(flux: &[[f64; 2]], basis: &BasisSpec) -> Vec<f64> {
    let w = &basis.quad.weights;
    basis
        .grads
        .iter()
        .map(|gj| {
            gj.iter()
                .zip(flux)
                .zip(w)
                .map(|((a, v), wq)| wq * (a[0] * v[0] + a[1] * v[1]))
                .sum()
        })
        .collect()
}

/// Gradient of `ζ ↦ E_p(Σ ζ_j w_j)^p / p`.
pub fn energy_grad(zeta: &CoefVec, basis: &BasisSpec, rule: &SphereRule, params: &EnergyParams) -> Result<Vec<f64>> {
    Ok(energy_and_grad(zeta, basis, rule, params)?.grad)
}

/// The gauge `H_u(ς) = [γ^{-n} E^{n+p} ∫ N(ξ)^{-(n+p)} |⟨ξ,ς⟩|^p dσ]^{1/p}`.
pub fn h_function(field: &GradField, rule: &SphereRule, params: &EnergyParams, varsigma: [f64; 2]) -> Result<f64> {
    let breakdown = affine_energy(field, rule, params)?;
    if breakdown.is_zero() {
        return Err(Error::ZeroField);
    }
    Ok(h_from_breakdown(&breakdown, rule, params, varsigma))
}

pub(crate) fn h_from_breakdown(
    breakdown: &EnergyBreakdown,
    rule: &SphereRule,
    params: &EnergyParams,
    varsigma: [f64; 2],
) -> f64 {
    let c = flux_weights(breakdown, rule, params);
    let terms: Vec<f64> = c
        .iter()
        .zip(&rule.xis)
        .map(|(ck, xi)| ck * abs_pow(xi[0] * varsigma[0] + xi[1] * varsigma[1], params.p))
        .collect();
    pairwise_sum(&terms).powf(1.0 / params.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, DomainSpec};
    use crate::sphere::build_circle_rule;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn setup(m: usize) -> (BasisSpec, SphereRule) {
        (
            build_basis(m, DomainSpec::default()).unwrap(),
            build_circle_rule(256).unwrap(),
        )
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(2.0).unwrap(), PI, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(3.0).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-14);
        // Γ(1.75) = 0.75 Γ(0.75), Γ(0.75) = 1.2254167024651776
        let want = PI.powf(0.75) / (0.75 * 1.225_416_702_465_177_6);
        assert_relative_eq!(unit_ball_volume(1.5).unwrap(), want, max_relative = 1e-13);
        assert!(unit_ball_volume(0.0).is_err());
        assert!(unit_ball_volume(-1.0).is_err());
    }

    #[test]
    fn gamma_constants() {
        assert_relative_eq!(gamma_np(2, 2.0).unwrap(), 2.0 * PI.sqrt(), max_relative = 1e-14);
        let omega3 = 4.0 * PI / 3.0;
        let want = (2.0 * PI).sqrt() * ((2.0 * PI * PI) / (2.0 * omega3)).powf(1.0 / 3.0);
        assert_relative_eq!(gamma_np(2, 3.0).unwrap(), want, max_relative = 1e-14);
        for p in [1.1, 1.5, 2.5, 4.0, 7.3] {
            assert!(gamma_np(2, p).unwrap() > 0.0);
            assert!(gamma_np(3, p).unwrap() > 0.0);
        }
        assert!(gamma_np(1, 2.0).is_err());
        assert!(gamma_np(2, 1.0).is_err());
    }

    #[test]
    fn signed_pow_basics() {
        assert_eq!(signed_pow(0.0, 2.0), 0.0);
        assert_eq!(signed_pow(-2.0, 2.0), -4.0);
        for &x in &[0.3, 1.7, 5.0] {
            for &p in &[1.5, 2.0, 2.5, 3.0] {
                assert_eq!(signed_pow(-x, p), -signed_pow(x, p));
            }
        }
    }

    #[test]
    fn first_mode_is_isotropic() {
        let (b, rule) = setup(1);
        let u = expand(&CoefVec::unit(1, 0), &b).unwrap();
        let dirs = directional_lp_norms(&u, &rule, 2.0).unwrap();
        assert!(dirs.iter().all(|d| (d - PI / 2.0).abs() < 1e-12));
        let direct = directional_lp_norms_direct(&u, &rule, 2.0);
        for (a, c) in dirs.iter().zip(&direct) {
            assert!((a - c).abs() < 1e-12);
        }
        let e = affine_energy(&u, &rule, &EnergyParams::new(2.0).unwrap()).unwrap();
        assert_relative_eq!(e.energy, PI / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(e.energy, e.grad_norm, max_relative = 1e-12);
    }

    #[test]
    fn zero_field_has_zero_energy_and_gradient() {
        let (b, rule) = setup(3);
        let params = EnergyParams::new(2.5).unwrap();
        let zero = GradField::zeros(Arc::clone(&b.quad));
        let e = affine_energy(&zero, &rule, &params).unwrap();
        assert_eq!(e.energy, 0.0);
        assert!(e.dir_norms.iter().all(|&d| d == 0.0));
        let g = energy_grad(&CoefVec::zeros(3), &b, &rule, &params).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert!(matches!(
            h_function(&zero, &rule, &params, [1.0, 0.0]),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn degenerate_direction_is_reported() {
        // u depends on x only: ∇u·(0,1) vanishes identically
        let (b, rule) = setup(1);
        let field = GradField::from_fn(Arc::clone(&b.quad), |x, _| {
            ((PI * x).sin(), [PI * (PI * x).cos(), 0.0])
        })
        .unwrap();
        let err = affine_energy(&field, &rule, &EnergyParams::new(2.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { .. }));
    }

    #[test]
    fn dir_norms_bounded_by_gradient_norm() {
        let (b, rule) = setup(10);
        let z = CoefVec(vec![0.3, -1.2, 0.5, 0.05, 0.9, -0.4, 0.2, 0.0, -0.7, 0.33]);
        let u = expand(&z, &b).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let gn = grad_lp_norm(&u, p).unwrap();
            let dirs = directional_lp_norms(&u, &rule, p).unwrap();
            assert!(dirs.iter().all(|&d| d <= gn * (1.0 + 1e-10)));
        }
    }

    #[test]
    fn h_function_homogeneity_and_integral() {
        let (b, rule) = setup(6);
        let z = CoefVec(vec![1.0, 0.4, -0.3, 0.2, 0.1, -0.5]);
        let u = expand(&z, &b).unwrap();
        for p in [2.0, 2.5] {
            let params = EnergyParams::new(p).unwrap();
            assert_eq!(h_function(&u, &rule, &params, [0.0, 0.0]).unwrap(), 0.0);
            let s = [0.3, -1.1];
            let h = h_function(&u, &rule, &params, s).unwrap();
            let h3 = h_function(&u, &rule, &params, [-3.0 * s[0], -3.0 * s[1]]).unwrap();
            assert_relative_eq!(h3, 3.0 * h, max_relative = 1e-12);

            let br = affine_energy(&u, &rule, &params).unwrap();
            let integrand: Vec<f64> = u
                .grads
                .iter()
                .map(|g| h_from_breakdown(&br, &rule, &params, *g).powf(p))
                .collect();
            let lhs = u.quad.integrate(&integrand);
            assert_relative_eq!(lhs, br.energy.powf(p), max_relative = 1e-8);
        }
    }

    #[test]
    fn p2_fast_path_matches_direct_flux() {
        let (b, rule) = setup(6);
        let z = CoefVec(vec![0.7, -0.4, 0.9, 0.1, -0.2, 0.3]);
        let u = expand(&z, &b).unwrap();
        let params = EnergyParams::new(2.0).unwrap();
        let br = affine_energy(&u, &rule, &params).unwrap();
        let fast = energy_flux(&u, &rule, &params, &br);
        let c = flux_weights(&br, &rule, &params);
        for (q, g) in u.grads.iter().enumerate() {
            let mut v = [0.0; 2];
            for (ck, xi) in c.iter().zip(&rule.xis) {
                let t = ck * (g[0] * xi[0] + g[1] * xi[1]);
                v[0] += t * xi[0];
                v[1] += t * xi[1];
            }
            assert!((v[0] - fast[q][0]).abs() < 1e-10 * (1.0 + v[0].abs()));
            assert!((v[1] - fast[q][1]).abs() < 1e-10 * (1.0 + v[1].abs()));
        }
    }
}
