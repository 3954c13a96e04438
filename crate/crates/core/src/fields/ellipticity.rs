use nalgebra::DMatrix;

use super::field::{Ellipticity, Field, Kind};
use crate::error::{Error, Result};

/// Smallest eigenvalue of the symmetric part `(M + M^T) / 2`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Computes `(lambda, Lambda)` over all nodes and stores the certificate.
///
/// Fails with [`Error::NotElliptic`] when the smallest symmetric eigenvalue is
/// not positive somewhere.
pub fn ellipticity_constants(a: &mut Field) -> Result<Ellipticity> {
    let e = measure_ellipticity(a)?;
    a.set_ellipticity(e);
    Ok(e)
}

/// Same as [`ellipticity_constants`] without mutating the field.
pub fn measure_ellipticity(a: &Field) -> Result<Ellipticity> {
    if !matches!(a.kind(), Kind::Matrix(_)) {
        return Err(Error::Shape("ellipticity needs a matrix field".into()));
    }
    let mut lambda = f64::INFINITY;
    let mut worst = 0;
    let mut big_lambda: f64 = 0.0;
    for node in 0..a.grid().node_count() {
        let m = a.matrix_at(node);
        let l = min_symmetric_eigenvalue(&m);
        if l < lambda {
            lambda = l;
            worst = node;
        }
        big_lambda = big_lambda.max(spectral_norm(&m));
    }
    if lambda <= 0.0 {
        return Err(Error::NotElliptic { lambda, node: worst });
    }
    Ok(Ellipticity { lambda, big_lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn grid() -> Grid {
        Grid::new(2, 4, 0.5, 1, 3).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        let mut f = Field::identity(grid());
        let e = ellipticity_constants(&mut f).unwrap();
        assert_eq!((e.lambda, e.big_lambda), (1.0, 1.0));
        assert_eq!(f.ellipticity(), Some(e));

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let e = measure_ellipticity(&Field::constant_matrix(grid(), "d", &m).unwrap()).unwrap();
        assert!((e.lambda - 0.5).abs() < 1e-14 && (e.big_lambda - 2.0).abs() < 1e-14);
        assert!((e.constant() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn upper_triangular_against_closed_form() {
        // dense 2x2 oracle: eig of [[1, 1/2], [1/2, 1]] is 1/2 and 3/2;
        // singular values of [[1, 1], [0, 1]] are the golden ratio and its inverse
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let e = measure_ellipticity(&Field::constant_matrix(grid(), "u", &m).unwrap()).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((e.lambda - 0.5).abs() < 1e-14);
        assert!((e.big_lambda - golden).abs() < 1e-12);
    }

    #[test]
    fn non_elliptic_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        let f = Field::constant_matrix(grid(), "bad", &m).unwrap();
        assert!(matches!(measure_ellipticity(&f), Err(Error::NotElliptic { .. })));
    }
}
