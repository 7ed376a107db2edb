use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::problem::hermitian_eigenvalues;

/// Eigenvalues of a Hermitian PSD matrix in descending order. Values below
/// `1e-8 · λ_max` in magnitude on the negative side are clipped to zero.
pub fn extract_rank_profile(x: &DMatrix<Complex64>) -> Vec<f64> {
    let herm = (x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev = hermitian_eigenvalues(&herm);
    ev.reverse();
    let lmax = ev.first().copied().unwrap_or(0.0).max(0.0);
    for v in ev.iter_mut() {
        if *v < 0.0 && *v >= -1e-8 * lmax {
            *v = 0.0;
        }
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_product_profile() {
        let v = DMatrix::from_column_slice(
            3,
            1,
            &[Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0), Complex64::new(3.0, 0.5)],
        );
        let x = &v * v.adjoint();
        let p = extract_rank_profile(&x);
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((p[0] - n2).abs() < 1e-12);
        assert!(p[1..].iter().all(|l| l.abs() < 1e-12));
    }

    #[test]
    fn identity_profile() {
        let p = extract_rank_profile(&DMatrix::identity(3, 3));
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|l| (l - 1.0).abs() < 1e-14));
    }
}
