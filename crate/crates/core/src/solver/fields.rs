//! Reference vector fields for exercising the zero finder.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::VectorField;
use crate::error::{Error, Result};

fn check_len(expected: usize, z: &[f64]) -> Result<()> {
    if z.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: z.len(),
        });
    }
    Ok(())
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.sample(StandardNormal))
}

/// `F(z) = z`.
#[derive(Debug, Clone)]
pub struct IdentityField {
    pub m: usize,
}

impl VectorField for IdentityField {
    fn dim(&self) -> usize {
        self.m
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, z)?;
        Ok(z.to_vec())
    }

    fn label(&self) -> &str {
        "identity"
    }

    fn expected_zero(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.m])
    }
}

/// `F(z) = A z − b`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearField {
    /// `A = MᵀM/m + I` with Gaussian `M`, `b = A z*` for a Gaussian `z*`
    /// scaled to Euclidean length `target_norm`.
    pub fn random_spd(m: usize, seed: u64, target_norm: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mm = gaussian_matrix(&mut rng, m);
        let a = mm.transpose() * &mm / m as f64 + DMatrix::identity(m, m);
        let zs = gaussian_vector(&mut rng, m);
        let zs = &zs * (target_norm / zs.norm().max(1e-300));
        let b = &a * zs;
        LinearField { a, b }
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z)?;
        let r = &self.a * DVector::from_column_slice(z) - &self.b;
        Ok(r.as_slice().to_vec())
    }

    fn label(&self) -> &str {
        "linear"
    }

    fn expected_zero(&self) -> Option<Vec<f64>> {
        self.a
            .clone()
            .cholesky()
            .map(|c| c.solve(&self.b).as_slice().to_vec())
    }
}

/// `F(z) = (Q + S) d + c ∘ d³ − b` with `d = z − center`, `Q ⪰ I` symmetric,
/// `S` skew and `c ≥ 0`: the gradient of a coercive polynomial plus a skew
/// perturbation. Then `⟨F(z), d⟩ ≥ |d|₂ (|d|₂ − |b|₂)`, so the field points
/// outward on any gauge sphere that stays outside the Euclidean ball of
/// radius `|b|₂`.
#[derive(Debug, Clone)]
pub struct CoerciveField {
    pub center: Vec<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub cubic: Vec<f64>,
    pub b: DVector<f64>,
}

impl CoerciveField {
    pub fn random(m: usize, seed: u64, center: Vec<f64>) -> Self {
        assert_eq!(center.len(), m, "center dimension");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mq = gaussian_matrix(&mut rng, m);
        let q = mq.transpose() * &mq / m as f64 + DMatrix::identity(m, m);
        let ms = gaussian_matrix(&mut rng, m);
        let s = (&ms - ms.transpose()) * 0.25;
        let cubic = (0..m).map(|_| rng.random_range(0.0..0.5)).collect();
        let b = gaussian_vector(&mut rng, m);
        CoerciveField { center, q, s, cubic, b }
    }

    /// Radius of the Euclidean ball outside which the boundary pairing is
    /// nonnegative.
    pub fn outward_radius(&self) -> f64 {
        self.b.norm()
    }
}

impl VectorField for CoerciveField {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z)?;
        let d = DVector::from_fn(self.dim(), |i, _| z[i] - self.center[i]);
        let mut r = (&self.q + &self.s) * &d - &self.b;
        for i in 0..self.dim() {
            r[i] += self.cubic[i] * d[i].powi(3);
        }
        Ok(r.as_slice().to_vec())
    }

    fn label(&self) -> &str {
        "random_coercive"
    }
}

/// Wraps a closure.
pub struct FnField<F> {
    pub m: usize,
    pub label: String,
    pub f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(m: usize, label: impl Into<String>, f: F) -> Self {
        FnField {
            m,
            label: label.into(),
            f,
        }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.m
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, z)?;
        Ok((self.f)(z))
    }

    fn label(&self) -> &str {
        &self.label
    }
}
