use std::f64::consts::PI;
use std::sync::Arc;

use affine_core::basis::{build_basis, expand, grad_lp_norm, CoefVec, DomainSpec, GradField, Quadrature};
use affine_core::energy::{affine_energy, energy_grad, h_function, EnergyParams};
use affine_core::sphere::build_circle_rule;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `∫₀¹ cos(aπx) sin(bπx) dx` for positive integers.
fn cos_sin(a: usize, b: usize) -> f64 {
    if (a + b).is_multiple_of(2) {
        0.0
    } else {
        let (a, b) = (a as f64, b as f64);
        2.0 * b / (PI * (b * b - a * a))
    }
}

/// `∫ ∇u ∇uᵀ` for `u = Σ ζ_i sin(j_i πx) sin(k_i πy)`, from exact 1-D integrals.
fn moment_matrix(z: &[f64], pairs: &[(usize, usize)]) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for (a, &(ja, ka)) in pairs.iter().enumerate() {
        for (b, &(jb, kb)) in pairs.iter().enumerate() {
            let c = z[a] * z[b] * PI * PI;
            if ja == jb && ka == kb {
                m[0][0] += c * (ja * ja) as f64 / 4.0;
                m[1][1] += c * (ka * ka) as f64 / 4.0;
            }
            // ∂x w_a ∂y w_b
            let xy = c * (ja * kb) as f64 * cos_sin(ja, jb) * cos_sin(kb, ka);
            m[0][1] += xy;
            m[1][0] += xy;
        }
    }
    m
}

fn closed_form_p2(z: &[f64], pairs: &[(usize, usize)]) -> f64 {
    let m = moment_matrix(z, pairs);
    2f64.sqrt() * (m[0][0] * m[1][1] - m[0][1] * m[1][0]).powf(0.25)
}

#[test]
fn p2_energy_matches_exact_moment_formula() {
    let basis = build_basis(10, DomainSpec::default()).unwrap();
    let rule = build_circle_rule(256).unwrap();
    let params = EnergyParams::new(2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let z: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        let field = expand(&CoefVec(z.clone()), &basis).unwrap();
        let e = affine_energy(&field, &rule, &params).unwrap().energy;
        let want = closed_form_p2(&z, &basis.index_pairs);
        assert!((e - want).abs() < 1e-10 * want, "{e} vs {want}");
    }
}

fn radial_bump(quad: Arc<Quadrature>, sigma: f64) -> GradField {
    GradField::from_fn(quad, |x, y| {
        let (dx, dy) = (x - 0.5, y - 0.5);
        let u = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        (u, [-dx * u / (sigma * sigma), -dy * u / (sigma * sigma)])
    })
    .unwrap()
}

#[test]
fn radial_bump_is_isotropic_for_several_p() {
    let quad = Arc::new(DomainSpec::unit_square(120).unwrap().quadrature());
    let rule = build_circle_rule(256).unwrap();
    let field = radial_bump(quad, 0.06);
    for p in [1.5, 2.0, 2.5, 3.0, 4.0] {
        let params = EnergyParams::new(p).unwrap();
        let e = affine_energy(&field, &rule, &params).unwrap().energy;
        let g = grad_lp_norm(&field, p).unwrap();
        assert!((e - g).abs() < 1e-6 * g, "p={p}: {e} vs {g}");
    }
}

const ORDER: usize = 320;

#[test]
fn shear_invariance_for_p3() {
    // |∇u·ξ|³ has a kink where ∇u·ξ = 0, so the domain rule needs more nodes
    // than for p = 2
    let quad = Arc::new(DomainSpec::unit_square(ORDER).unwrap().quadrature());
    let rule = build_circle_rule(256).unwrap();
    let params = EnergyParams::new(3.0).unwrap();
    let sigma = 0.04;
    let sheared = |a: [[f64; 2]; 2]| {
        GradField::from_fn(quad.clone(), |x, y| {
            let (dx, dy) = (x - 0.5, y - 0.5);
            let s = [a[0][0] * dx + a[0][1] * dy, a[1][0] * dx + a[1][1] * dy];
            let u = (-(s[0] * s[0] + s[1] * s[1]) / (2.0 * sigma * sigma)).exp();
            let g = [-s[0] * u / (sigma * sigma), -s[1] * u / (sigma * sigma)];
            (u, [a[0][0] * g[0] + a[1][0] * g[1], a[0][1] * g[0] + a[1][1] * g[1]])
        })
        .unwrap()
    };
    let base = affine_energy(&sheared([[1.0, 0.0], [0.0, 1.0]]), &rule, &params).unwrap().energy;
    for s in [-0.8, -0.3, 0.4, 0.9] {
        let e = affine_energy(&sheared([[1.0, s], [0.0, 1.0]]), &rule, &params).unwrap().energy;
        assert!((e - base).abs() < 1e-6 * base, "shear {s}: {e} vs {base}");
        // the plain gradient norm is not invariant
        let g0 = grad_lp_norm(&sheared([[1.0, 0.0], [0.0, 1.0]]), 3.0).unwrap();
        let g = grad_lp_norm(&sheared([[1.0, s], [0.0, 1.0]]), 3.0).unwrap();
        assert!((g - g0).abs() > 1e-3 * g0);
    }
}

fn phi(z: &CoefVec, p: f64, ctx: &(affine_core::BasisSpec, affine_core::SphereRule, EnergyParams)) -> f64 {
    let field = expand(z, &ctx.0).unwrap();
    affine_energy(&field, &ctx.1, &ctx.2).unwrap().energy.powf(p) / p
}

#[test]
fn gradient_matches_central_differences() {
    for p in [1.5, 2.0, 2.5, 3.0] {
        let ctx = (
            build_basis(6, DomainSpec::unit_square(32).unwrap()).unwrap(),
            build_circle_rule(128).unwrap(),
            EnergyParams::new(p).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let z = CoefVec((0..6).map(|_| rng.sample(StandardNormal)).collect());
            let g = energy_grad(&z, &ctx.0, &ctx.1, &ctx.2).unwrap();
            for j in 0..6 {
                let h = 1e-5;
                let mut zp = z.clone();
                zp.0[j] += h;
                let mut zm = z.clone();
                zm.0[j] -= h;
                let fd = (phi(&zp, p, &ctx) - phi(&zm, p, &ctx)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-5 * g[j].abs().max(1e-3), "p={p} j={j}: {fd} vs {}", g[j]);
            }
        }
    }
}

#[test]
fn gradient_is_homogeneous_and_zero_at_origin() {
    let basis = build_basis(8, DomainSpec::unit_square(32).unwrap()).unwrap();
    let rule = build_circle_rule(128).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let params = EnergyParams::new(p).unwrap();
        let zero = energy_grad(&CoefVec::zeros(8), &basis, &rule, &params).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let z = CoefVec(vec![0.3, -1.2, 0.5, 0.0, 0.8, -0.1, 0.2, 0.4]);
        let g = energy_grad(&z, &basis, &rule, &params).unwrap();
        for t in [0.1, 3.0] {
            let gt = energy_grad(&z.scaled(t), &basis, &rule, &params).unwrap();
            let s = t.powf(p - 1.0);
            for (a, b) in gt.iter().zip(&g) {
                assert!((a - s * b).abs() <= 1e-10 * (s * b).abs().max(1e-12));
            }
        }
    }
}

#[test]
fn h_integral_recovers_energy() {
    let basis = build_basis(5, DomainSpec::unit_square(32).unwrap()).unwrap();
    let rule = build_circle_rule(128).unwrap();
    for p in [2.0, 2.5] {
        let params = EnergyParams::new(p).unwrap();
        let field = expand(&CoefVec(vec![1.0, 0.4, -0.7, 0.2, 0.5]), &basis).unwrap();
        let e = affine_energy(&field, &rule, &params).unwrap().energy;
        let integrand: Vec<f64> = field
            .grads
            .iter()
            .map(|&g| h_function(&field, &rule, &params, g).unwrap().powf(p))
            .collect();
        let total = field.quad.integrate(&integrand);
        assert!((total - e.powf(p)).abs() < 1e-8 * e.powf(p), "p={p}: {total} vs {}", e.powf(p));
        assert_eq!(h_function(&field, &rule, &params, [0.0, 0.0]).unwrap(), 0.0);
    }
}

#[test]
fn energy_is_continuous_along_sequences() {
    let basis = build_basis(6, DomainSpec::unit_square(32).unwrap()).unwrap();
    let rule = build_circle_rule(128).unwrap();
    let params = EnergyParams::new(2.5).unwrap();
    let energy = |z: &CoefVec| affine_energy(&expand(z, &basis).unwrap(), &rule, &params).unwrap().energy;
    for base in [CoefVec(vec![1.0, -0.5, 0.3, 0.0, 0.2, 0.1]), CoefVec::zeros(6)] {
        let d = CoefVec(vec![0.2, 0.7, -0.4, 0.5, -0.3, 0.6]);
        let e0 = energy(&base);
        let gaps: Vec<f64> = (1..=8)
            .map(|t| (energy(&(&base + &d.scaled(10f64.powi(-t)))) - e0).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}

#[test]
fn sphere_refinement_is_stable() {
    let basis = build_basis(10, DomainSpec::default()).unwrap();
    let params = EnergyParams::new(3.0).unwrap();
    let field = expand(&CoefVec(vec![1.0, 0.3, -0.2, 0.1, 0.4, -0.3, 0.05, 0.2, -0.1, 0.15]), &basis).unwrap();
    let e256 = affine_energy(&field, &build_circle_rule(256).unwrap(), &params).unwrap().energy;
    let e512 = affine_energy(&field, &build_circle_rule(512).unwrap(), &params).unwrap().energy;
    assert!((e256 - e512).abs() < 1e-8 * e512);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_is_absolutely_homogeneous_and_bounded(
        z in prop::collection::vec(-2.0f64..2.0, 6),
        t in -5.0f64..5.0,
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
    ) {
        prop_assume!(z.iter().any(|v| v.abs() > 1e-3) && t.abs() > 1e-3);
        let basis = build_basis(6, DomainSpec::unit_square(24).unwrap()).unwrap();
        let rule = build_circle_rule(64).unwrap();
        let params = EnergyParams::new(p).unwrap();
        let z = CoefVec(z);
        let field = expand(&z, &basis).unwrap();
        let b = affine_energy(&field, &rule, &params).unwrap();
        let bt = affine_energy(&expand(&z.scaled(t), &basis).unwrap(), &rule, &params).unwrap();
        prop_assert!((bt.energy - t.abs() * b.energy).abs() <= 1e-12 * t.abs() * b.energy);
        prop_assert!(b.energy > 0.0);
        prop_assert!(b.energy <= (1.0 + 1e-6) * b.grad_norm);
        prop_assert!(b.dir_norms.iter().all(|&d| d <= b.grad_norm * (1.0 + 1e-10)));
    }
}
