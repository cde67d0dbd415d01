//! Dense vector helpers over plain slices.

use crate::Scalar;

/// `y += a * x`
#[inline]
pub fn axpy<S: Scalar>(a: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y -= a * x`, written so that `a == 1` reproduces `y - x` bit for bit.
#[inline]
pub fn sub_scaled<S: Scalar>(a: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi - a * xi;
    }
}

#[inline]
pub fn scale<S: Scalar>(a: S, x: &mut [S]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

#[inline]
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

#[inline]
pub fn norm2<S: Scalar>(x: &[S]) -> S {
    dot(x, x)
}

#[inline]
pub fn norm<S: Scalar>(x: &[S]) -> S {
    norm2(x).sqrt()
}

pub fn sub<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

/// Largest absolute coordinate difference.
pub fn max_abs_diff<S: Scalar>(x: &[S], y: &[S]) -> S {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b).abs())
        .fold(S::zero(), S::max)
}

pub fn is_finite<S: Scalar>(x: &[S]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Residual normalised by `1 + ‖reference‖`.
pub fn relative_residual<S: Scalar>(residual: &[S], reference: &[S]) -> S {
    norm(residual) / (S::one() + norm(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_scaled_with_unit_factor_is_plain_subtraction() {
        let mut y = vec![0.1_f64, -3.7, 1e-17];
        let x = [0.3_f64, 0.2, 5.0];
        let expect: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        sub_scaled(1.0, &x, &mut y);
        assert_eq!(y, expect);
    }

    #[test]
    fn norms() {
        assert_eq!(norm2(&[3.0_f64, 4.0]), 25.0);
        assert_eq!(norm(&[3.0_f32, 4.0]), 5.0);
        assert_eq!(max_abs_diff(&[1.0_f64, 2.0], &[1.5, 0.0]), 2.0);
    }
}
