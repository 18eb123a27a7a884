//! Domain quadrature on Ω = (0,1)² and the nested tensor-sine Galerkin basis.
//!
//! Basis functions are `w_(j,k)(x, y) = sin(jπx) sin(kπy)`, enumerated along
//! anti-diagonals `j + k = 2, 3, ...` with ties broken by increasing `j`.
//! Every table is evaluated mode by mode, so the tables for `m` are a prefix
//! of the tables for `m + 1`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::abs_pow;

pub const DEFAULT_QUAD_ORDER: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainShape {
    UnitSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: DomainShape,
    /// Gauss–Legendre points per axis.
    pub quad_order: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            shape: DomainShape::UnitSquare,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    }
}

impl DomainSpec {
    pub fn unit_square(quad_order: usize) -> Result<Self> {
        if quad_order < 2 {
            return Err(Error::invalid("quad_order", "must be at least 2"));
        }
        Ok(DomainSpec {
            shape: DomainShape::UnitSquare,
            quad_order,
        })
    }

    /// Tensor Gauss–Legendre rule, x-major node ordering.
    pub fn quadrature(&self) -> Quadrature {
        let (x1, w1) = gauss_legendre_unit(self.quad_order);
        let n = self.quad_order;
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&x, &wx) in x1.iter().zip(&w1) {
            for (&y, &wy) in x1.iter().zip(&w1) {
                points.push([x, y]);
                weights.push(wx * wy);
            }
        }
        Quadrature { points, weights }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

/// Nodes and positive weights of a quadrature rule on Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫_Ω g dx` for nodal samples `g`.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }
}

/// Coefficients `ζ` of `u = Σ ζ_j w_j`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefVec(pub Vec<f64>);

impl CoefVec {
    pub fn zeros(m: usize) -> Self {
        CoefVec(vec![0.0; m])
    }

    pub fn unit(m: usize, j: usize) -> Self {
        let mut v = vec![0.0; m];
        v[j] = 1.0;
        CoefVec(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &CoefVec) -> f64 {
        crate::numeric::dot(&self.0, &other.0)
    }

    /// Euclidean length `|ζ|₂`.
    pub fn norm2(&self) -> f64 {
        crate::numeric::norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        crate::numeric::norm_inf(&self.0)
    }

    pub fn scaled(&self, t: f64) -> CoefVec {
        CoefVec(self.0.iter().map(|x| t * x).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Pads with zeros (or truncates) to length `m`; an element of `W_k` is
    /// also an element of `W_m` for `k ≤ m`.
    pub fn resized(&self, m: usize) -> CoefVec {
        let mut v = self.0.clone();
        v.resize(m, 0.0);
        CoefVec(v)
    }
}

impl From<Vec<f64>> for CoefVec {
    fn from(v: Vec<f64>) -> Self {
        CoefVec(v)
    }
}

impl Add for &CoefVec {
    type Output = CoefVec;
    fn add(self, rhs: &CoefVec) -> CoefVec {
        assert_eq!(self.len(), rhs.len(), "coefficient length mismatch");
        CoefVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CoefVec {
    type Output = CoefVec;
    fn sub(self, rhs: &CoefVec) -> CoefVec {
        assert_eq!(self.len(), rhs.len(), "coefficient length mismatch");
        CoefVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<&CoefVec> for f64 {
    type Output = CoefVec;
    fn mul(self, rhs: &CoefVec) -> CoefVec {
        rhs.scaled(self)
    }
}

/// Values and gradients of a function sampled at the domain nodes.
#[derive(Debug, Clone)]
pub struct GradField {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub quad: Arc<Quadrature>,
}

impl GradField {
    pub fn zeros(quad: Arc<Quadrature>) -> Self {
        let n = quad.len();
        GradField {
            values: vec![0.0; n],
            grads: vec![[0.0; 2]; n],
            quad,
        }
    }

    /// Samples a function given in closed form; `f` returns `(u, ∇u)`.
    pub fn from_fn(quad: Arc<Quadrature>, f: impl Fn(f64, f64) -> (f64, [f64; 2])) -> Result<Self> {
        let (values, grads): (Vec<f64>, Vec<[f64; 2]>) =
            quad.points.iter().map(|&[x, y]| f(x, y)).unzip();
        let field = GradField { values, grads, quad };
        field.validate()?;
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.quad.len();
        if self.values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.values.len(),
            });
        }
        if self.grads.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.grads.len(),
            });
        }
        let finite = self.values.iter().all(|v| v.is_finite())
            && self.grads.iter().all(|g| g[0].is_finite() && g[1].is_finite());
        if !finite {
            return Err(Error::invalid("field", "non-finite sample"));
        }
        Ok(())
    }

    pub fn scaled(&self, t: f64) -> GradField {
        GradField {
            values: self.values.iter().map(|v| t * v).collect(),
            grads: self.grads.iter().map(|g| [t * g[0], t * g[1]]).collect(),
            quad: Arc::clone(&self.quad),
        }
    }
}

/// Nested Galerkin basis with precomputed nodal tables.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    pub m: usize,
    pub domain: DomainSpec,
    pub index_pairs: Vec<(usize, usize)>,
    pub quad: Arc<Quadrature>,
    /// `values[i][q] = w_i(x_q)`.
    pub values: Vec<Vec<f64>>,
    /// `grads[i][q] = ∇w_i(x_q)`.
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl BasisSpec {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn max_frequency(&self) -> usize {
        max_frequency(&self.index_pairs)
    }

    fn check_len(&self, zeta: &CoefVec) -> Result<()> {
        if zeta.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                got: zeta.len(),
            });
        }
        Ok(())
    }

    /// `∫_Ω g w_j dx` for every basis function.
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        let w = &self.quad.weights;
        self.values
            .iter()
            .map(|wj| wj.iter().zip(g).zip(w).map(|((a, b), c)| a * b * c).sum())
            .collect()
    }
}

/// First `m` index pairs along anti-diagonals `j + k = s`, increasing `j`.
pub fn diagonal_indices(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m);
    let mut s = 2;
    while out.len() < m {
        for j in 1..s {
            if out.len() == m {
                break;
            }
            out.push((j, s - j));
        }
        s += 1;
    }
    out
}

fn max_frequency(pairs: &[(usize, usize)]) -> usize {
    pairs.iter().map(|&(j, k)| j.max(k)).max().unwrap_or(0)
}

pub fn build_basis(m: usize, domain: DomainSpec) -> Result<BasisSpec> {
    if m == 0 {
        return Err(Error::invalid("m", "basis dimension must be at least 1"));
    }
    if domain.quad_order < 2 {
        return Err(Error::invalid("quad_order", "must be at least 2"));
    }
    let index_pairs = diagonal_indices(m);
    let max_freq = max_frequency(&index_pairs);
    if 2 * max_freq > domain.quad_order {
        return Err(Error::QuadratureTooCoarse {
            quad_order: domain.quad_order,
            max_frequency: max_freq,
        });
    }
    let quad = Arc::new(domain.quadrature());
    let mut values = Vec::with_capacity(m);
    let mut grads = Vec::with_capacity(m);
    for &(j, k) in &index_pairs {
        let (fj, fk) = (j as f64 * PI, k as f64 * PI);
        let mut v = Vec::with_capacity(quad.len());
        let mut g = Vec::with_capacity(quad.len());
        for &[x, y] in &quad.points {
            let (sx, cx) = (fj * x).sin_cos();
            let (sy, cy) = (fk * y).sin_cos();
            v.push(sx * sy);
            g.push([fj * cx * sy, fk * sx * cy]);
        }
        values.push(v);
        grads.push(g);
    }
    Ok(BasisSpec {
        m,
        domain,
        index_pairs,
        quad,
        values,
        grads,
    })
}

/// Samples `u = Σ ζ_i w_i` and its gradient at the domain nodes.
pub fn expand(zeta: &CoefVec, basis: &BasisSpec) -> Result<GradField> {
    basis.check_len(zeta)?;
    let mut field = GradField::zeros(Arc::clone(&basis.quad));
    for (i, &c) in zeta.0.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (v, wi) in field.values.iter_mut().zip(&basis.values[i]) {
            *v += c * wi;
        }
        for (g, gi) in field.grads.iter_mut().zip(&basis.grads[i]) {
            g[0] += c * gi[0];
            g[1] += c * gi[1];
        }
    }
    Ok(field)
}

/// `‖u‖_{L^q(Ω)}` by domain quadrature.
pub fn lq_norm(field: &GradField, q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::invalid("q", format!("need q >= 1, got {q}")));
    }
    let s: f64 = field
        .quad
        .weights
        .iter()
        .zip(&field.values)
        .map(|(w, v)| w * abs_pow(*v, q))
        .sum();
    Ok(s.powf(1.0 / q))
}

/// `‖∇u‖_{L^p(Ω)}` with the Euclidean length of the gradient.
pub fn grad_lp_norm(field: &GradField, p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::invalid("p", format!("need p > 1, got {p}")));
    }
    let s: f64 = field
        .quad
        .weights
        .iter()
        .zip(&field.grads)
        .map(|(w, g)| {
            let sq = g[0] * g[0] + g[1] * g[1];
            w * if p == 2.0 { sq } else { abs_pow(sq, 0.5 * p) }
        })
        .sum();
    Ok(s.powf(1.0 / p))
}

/// The coefficient-space norm `‖ζ‖_{1,p,m} = ‖∇(Σ ζ_j w_j)‖_{L^p}`.
pub fn w1pm_norm(zeta: &CoefVec, basis: &BasisSpec, p: f64) -> Result<f64> {
    grad_lp_norm(&expand(zeta, basis)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn basis(m: usize) -> BasisSpec {
        build_basis(m, DomainSpec::default()).unwrap()
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        for order in [2, 5, 48, 64] {
            let q = DomainSpec::unit_square(order).unwrap().quadrature();
            assert_eq!(q.len(), order * order);
            assert!((q.measure() - 1.0).abs() < 1e-14);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            assert!(q
                .points
                .iter()
                .all(|&[x, y]| x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0));
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        // degree 13 is the highest exact degree for 7 points
        for deg in 0..=13 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let want = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(DomainSpec::unit_square(1).is_err());
        assert!(build_basis(0, DomainSpec::default()).is_err());
        // m = 10 reaches frequency 4; order 6 allows only 3
        let err = build_basis(10, DomainSpec::unit_square(6).unwrap()).unwrap_err();
        assert!(matches!(err, Error::QuadratureTooCoarse { .. }));
    }

    #[test]
    fn index_ordering_is_diagonal_then_j() {
        assert_eq!(basis(1).index_pairs, vec![(1, 1)]);
        assert_eq!(basis(3).index_pairs, vec![(1, 1), (1, 2), (2, 1)]);
        assert_eq!(
            diagonal_indices(6),
            vec![(1, 1), (1, 2), (2, 1), (1, 3), (2, 2), (3, 1)]
        );
        let b = basis(6);
        assert_eq!(b.quad.len(), 48 * 48);
        assert_eq!(b.values.len(), 6);
    }

    #[test]
    fn bases_are_nested_bit_for_bit() {
        for m in 1..12 {
            let small = basis(m);
            let big = basis(m + 1);
            assert_eq!(small.index_pairs[..], big.index_pairs[..m]);
            assert_eq!(small.values[..], big.values[..m]);
            assert_eq!(small.grads[..], big.grads[..m]);
        }
    }

    #[test]
    fn expand_zero_and_first_mode() {
        let b = basis(4);
        let z = expand(&CoefVec::zeros(4), &b).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert!(z.grads.iter().all(|g| g == &[0.0, 0.0]));

        let e1 = expand(&CoefVec::unit(4, 0), &b).unwrap();
        for (q, &[x, y]) in b.quad.points.iter().enumerate() {
            let want = (PI * x).sin() * (PI * y).sin();
            assert!((e1.values[q] - want).abs() < 1e-15);
            let gx = PI * (PI * x).cos() * (PI * y).sin();
            assert!((e1.grads[q][0] - gx).abs() < 1e-14);
        }
        assert!(matches!(
            expand(&CoefVec::zeros(3), &b),
            Err(Error::LengthMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn first_mode_norms_match_closed_form() {
        let b = basis(1);
        let u = expand(&CoefVec::unit(1, 0), &b).unwrap();
        assert_relative_eq!(lq_norm(&u, 2.0).unwrap(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(
            grad_lp_norm(&u, 2.0).unwrap(),
            PI / 2f64.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            w1pm_norm(&CoefVec::unit(1, 0), &b, 2.0).unwrap(),
            PI / 2f64.sqrt(),
            max_relative = 1e-13
        );
        let zero = GradField::zeros(Arc::clone(&b.quad));
        assert_eq!(lq_norm(&zero, 3.0).unwrap(), 0.0);
        assert_eq!(grad_lp_norm(&zero, 1.5).unwrap(), 0.0);
        assert!(lq_norm(&u, 0.5).is_err());
        assert!(grad_lp_norm(&u, 1.0).is_err());
    }

    #[test]
    fn l2_quadrature_exact_for_low_frequencies() {
        // ∫ (sin jπx sin kπy)² = 1/4 for any j, k ≥ 1; Gauss–Legendre with
        // 48 points resolves this to 1e-10 up to frequency 20
        let b = build_basis(210, DomainSpec::unit_square(48).unwrap()).unwrap();
        for i in 0..b.m {
            let (j, k) = b.index_pairs[i];
            if j.max(k) > 20 {
                continue;
            }
            let u = expand(&CoefVec::unit(b.m, i), &b).unwrap();
            assert!((lq_norm(&u, 2.0).unwrap() - 0.5).abs() < 1e-10, "mode {j},{k}");
        }
    }

    #[test]
    fn grad_norm_ignores_node_order() {
        let b = basis(5);
        let u = expand(&CoefVec(vec![0.3, -1.0, 0.2, 0.7, -0.4]), &b).unwrap();
        let mut points = b.quad.points.clone();
        let mut weights = b.quad.weights.clone();
        let mut grads = u.grads.clone();
        let mut values = u.values.clone();
        points.reverse();
        weights.reverse();
        grads.reverse();
        values.reverse();
        let rev = GradField {
            values,
            grads,
            quad: Arc::new(Quadrature { points, weights }),
        };
        let a = grad_lp_norm(&u, 2.7).unwrap();
        let c = grad_lp_norm(&rev, 2.7).unwrap();
        assert!((a - c).abs() < 1e-12 * a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn expand_is_linear(
            z in proptest::collection::vec(-2.0..2.0f64, 6),
            e in proptest::collection::vec(-2.0..2.0f64, 6),
            a in -3.0..3.0f64,
            c in -3.0..3.0f64,
        ) {
            let b = build_basis(6, DomainSpec::unit_square(12).unwrap()).unwrap();
            let (z, e) = (CoefVec(z), CoefVec(e));
            let lhs = expand(&(&a.mul(&z) + &c.mul(&e)), &b).unwrap();
            let fz = expand(&z, &b).unwrap();
            let fe = expand(&e, &b).unwrap();
            for q in 0..lhs.len() {
                let v = a * fz.values[q] + c * fe.values[q];
                prop_assert!((lhs.values[q] - v).abs() < 1e-12 * (1.0 + v.abs()));
                for d in 0..2 {
                    let g = a * fz.grads[q][d] + c * fe.grads[q][d];
                    prop_assert!((lhs.grads[q][d] - g).abs() < 1e-11 * (1.0 + g.abs()));
                }
            }
        }

        #[test]
        fn w1pm_is_a_norm(
            z in proptest::collection::vec(-2.0..2.0f64, 6),
            e in proptest::collection::vec(-2.0..2.0f64, 6),
            t in -5.0..5.0f64,
            p in 1.2..4.0f64,
        ) {
            let b = build_basis(6, DomainSpec::unit_square(16).unwrap()).unwrap();
            let (z, e) = (CoefVec(z), CoefVec(e));
            let nz = w1pm_norm(&z, &b, p).unwrap();
            let ne = w1pm_norm(&e, &b, p).unwrap();
            if !z.is_zero() {
                prop_assert!(nz > 0.0);
            }
            let nt = w1pm_norm(&t.mul(&z), &b, p).unwrap();
            prop_assert!((nt - t.abs() * nz).abs() <= 1e-12 * (1.0 + nt));
            let nsum = w1pm_norm(&(&z + &e), &b, p).unwrap();
            prop_assert!(nsum <= nz + ne + 1e-12 * (1.0 + nz + ne));
        }
    }
}
