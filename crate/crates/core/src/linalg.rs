//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest |A - A^H| entry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn ensure_hermitian(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let defect = hermitian_defect(a);
    if defect > 1e-9 * scale {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

pub fn real_trace(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = a.nrows();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Largest eigenvalue and a unit-norm eigenvector for it.
pub fn principal_eigenpair(a: &CMatrix) -> (f64, CVector) {
    let (values, vectors) = hermitian_eigen(a);
    let n = values.len();
    let v = vectors.column(n - 1).into_owned();
    (values[n - 1], normalize_phase(v))
}

/// Rotate a vector so its largest-magnitude entry is real positive.
/// Removes the arbitrary global phase from eigen solvers.
pub fn normalize_phase(v: CVector) -> CVector {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(C64::new(1.0, 0.0));
    if pivot.norm() == 0.0 {
        return v;
    }
    let rot = pivot.conj() / pivot.norm();
    v.map(|z| z * rot)
}

pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    hermitian_eigen(a).0[0]
}

/// v^H A v (real part; exact for Hermitian A).
pub fn quad_form(a: &CMatrix, v: &CVector) -> f64 {
    (v.adjoint() * a * v)[(0, 0)].re
}

/// Rank-one matrix v v^H.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn real_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()).scale(0.5);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_pair_of_rank_one() {
        let v = CVector::from_vec(vec![C64::new(1.0, 1.0), C64::new(0.0, 2.0), C64::new(0.5, 0.0)]);
        let w = outer(&v);
        let (lam, u) = principal_eigenpair(&w);
        assert!((lam - v.norm_squared()).abs() < 1e-10);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let rebuilt = outer(&u).scale(lam);
        assert!((rebuilt - w).norm() < 1e-9);
    }

    #[test]
    fn hermitian_check_rejects_asymmetric() {
        let mut a = CMatrix::identity(2, 2);
        a[(0, 1)] = C64::new(0.0, 1.0);
        assert!(ensure_hermitian(&a).is_err());
        a[(1, 0)] = C64::new(0.0, -1.0);
        assert!(ensure_hermitian(&a).is_ok());
    }
}
