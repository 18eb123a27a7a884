//! Small numeric helpers shared across modules.

/// `|x|^p`, with fast paths for the exponents that dominate runtime.
#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if p == 3.0 {
        a * a * a
    } else if p == 0.5 {
        a.sqrt()
    } else if p == 1.5 {
        a * a.sqrt()
    } else if a == 0.0 {
        0.0
    } else {
        a.powf(p)
    }
}

/// Fixed-tree pairwise summation; the result depends only on the input order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_paths_agree_with_powf() {
        for &p in &[1.0, 1.5, 2.0, 3.0, 0.5, 2.5, 1.25] {
            for &x in &[-3.2, -0.1, 0.0, 0.7, 5.0] {
                let want = f64::abs(x).powf(p);
                assert!((abs_pow(x, p) - want).abs() <= 1e-14 * (1.0 + want));
            }
        }
    }

    #[test]
    fn pairwise_matches_naive_sum() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
