//! Quadrature on the unit circle `S¹`.
//!
//! The equispaced trapezoid rule is exact for trigonometric polynomials of
//! degree below `M` and converges spectrally for smooth periodic integrands.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

pub const DEFAULT_SPHERE_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub thetas: Vec<f64>,
    pub xis: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn build_circle_rule(points: usize) -> Result<SphereRule> {
    build_shifted_circle_rule(points, 0.0)
}

/// Trapezoid rule with every angle offset by `shift`.
pub fn build_shifted_circle_rule(points: usize, shift: f64) -> Result<SphereRule> {
    if points < 4 {
        return Err(Error::invalid(
            "sphere_points",
            format!("need at least 4 circle nodes, got {points}"),
        ));
    }
    let h = 2.0 * PI / points as f64;
    let thetas: Vec<f64> = (0..points).map(|k| shift + h * k as f64).collect();
    let xis = thetas
        .iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            [c, s]
        })
        .collect();
    Ok(SphereRule {
        thetas,
        xis,
        weights: vec![h; points],
    })
}

/// `Σ_k w_k f_k` with a fixed pairwise reduction order.
pub fn integrate_sphere(rule: &SphereRule, f: &[f64]) -> Result<f64> {
    if f.len() != rule.len() {
        return Err(Error::LengthMismatch {
            expected: rule.len(),
            got: f.len(),
        });
    }
    let terms: Vec<f64> = rule.weights.iter().zip(f).map(|(w, v)| w * v).collect();
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_rule() {
        let r = build_circle_rule(4).unwrap();
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (xi, w) in r.xis.iter().zip(want) {
            assert!((xi[0] - w[0]).abs() < 1e-15 && (xi[1] - w[1]).abs() < 1e-15);
        }
        assert!(r.weights.iter().all(|&w| (w - PI / 2.0).abs() < 1e-15));
        assert!(build_circle_rule(3).is_err());
    }

    #[test]
    fn rule_invariants() {
        for m in [4, 7, 64, 256, 1000] {
            let r = build_circle_rule(m).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
            assert!(r
                .xis
                .iter()
                .all(|x| ((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0).abs() < 1e-14));
            let ones = vec![1.0; m];
            assert!((integrate_sphere(&r, &ones).unwrap() - 2.0 * PI).abs() < 1e-12);
            let c = vec![-3.5; m];
            assert!((integrate_sphere(&r, &c).unwrap() + 7.0 * PI).abs() < 1e-11);
        }
    }

    #[test]
    fn cos_squared_and_abs_cos_cubed() {
        let r = build_circle_rule(8).unwrap();
        let f: Vec<f64> = r.thetas.iter().map(|t| t.cos().powi(2)).collect();
        assert!((integrate_sphere(&r, &f).unwrap() - PI).abs() < 1e-14);

        // |cos|³ has a jump in its third derivative, so convergence is O(M⁻⁴)
        let abs_cos3 = |m: usize| {
            let r = build_circle_rule(m).unwrap();
            let f: Vec<f64> = r.thetas.iter().map(|t| t.cos().abs().powi(3)).collect();
            integrate_sphere(&r, &f).unwrap()
        };
        assert!((abs_cos3(64) - 8.0 / 3.0).abs() < 5e-6);
        assert!((abs_cos3(1024) - 8.0 / 3.0).abs() < 1e-10);

        let r = build_circle_rule(64).unwrap();

        let zeros = vec![0.0; 64];
        assert_eq!(integrate_sphere(&r, &zeros).unwrap(), 0.0);
        assert!(integrate_sphere(&r, &zeros[..10]).is_err());
    }

    #[test]
    fn shift_invariance_for_low_degree_trig_polynomials() {
        let m = 32;
        let poly = |t: f64| 1.0 + 0.3 * t.cos() - 2.0 * (3.0 * t).sin() + 0.7 * (15.0 * t).cos();
        let base = build_circle_rule(m).unwrap();
        let f0: Vec<f64> = base.thetas.iter().map(|&t| poly(t)).collect();
        let i0 = integrate_sphere(&base, &f0).unwrap();
        for shift in [0.1, 0.5, 1.7, 3.0] {
            let r = build_shifted_circle_rule(m, shift).unwrap();
            let f: Vec<f64> = r.thetas.iter().map(|&t| poly(t)).collect();
            assert!((integrate_sphere(&r, &f).unwrap() - i0).abs() < 1e-12);
        }
    }
}
