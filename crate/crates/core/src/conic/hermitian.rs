//! Complex Hermitian matrix variables through their real parameters.

use nalgebra::DMatrix;

use super::{Affine, ConicProgram, ConicSolution, Var};
use crate::error::Result;
use crate::linalg::{self, CMatrix, C64};

/// Real symmetric embedding `[[X, -Y], [Y, X]]` of `H = X + jY`.
pub fn embed_hermitian(h: &CMatrix) -> Result<DMatrix<f64>> {
    linalg::ensure_hermitian(h)?;
    let m = h.nrows();
    Ok(DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let z = h[(i % m, j % m)];
        match (i < m, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

/// An `m × m` Hermitian matrix variable: `m` real diagonal entries followed by
/// the real and imaginary parts of each strictly upper entry.
#[derive(Debug, Clone)]
pub struct HermitianVar {
    pub dim: usize,
    pub params: Vec<Var>,
}

impl HermitianVar {
    pub fn new(prog: &mut ConicProgram, name: &str, dim: usize) -> Self {
        let mut params = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            params.push(prog.var(format!("{name}[{i},{i}]")));
        }
        for j in 0..dim {
            for i in 0..j {
                params.push(prog.var(format!("re {name}[{i},{j}]")));
                params.push(prog.var(format!("im {name}[{i},{j}]")));
            }
        }
        Self { dim, params }
    }

    fn pair_offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        self.dim + 2 * (j * (j - 1) / 2 + i)
    }

    /// Real and imaginary parts of entry `(i, j)` as affine expressions.
    pub fn entry(&self, i: usize, j: usize) -> (Affine, Affine) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => (self.params[i].aff(), Affine::default()),
            Less => {
                let o = self.pair_offset(i, j);
                (self.params[o].aff(), self.params[o + 1].aff())
            }
            Greater => {
                let o = self.pair_offset(j, i);
                (self.params[o].aff(), -self.params[o + 1].aff())
            }
        }
    }

    /// Basis matrix for parameter `p`.
    pub fn basis(&self, p: usize) -> CMatrix {
        let mut b = CMatrix::zeros(self.dim, self.dim);
        if p < self.dim {
            b[(p, p)] = C64::new(1.0, 0.0);
            return b;
        }
        let q = (p - self.dim) / 2;
        let imag = (p - self.dim) % 2 == 1;
        let mut j = 1;
        while j * (j + 1) / 2 <= q {
            j += 1;
        }
        let i = q - j * (j - 1) / 2;
        let z = if imag { C64::new(0.0, 1.0) } else { C64::new(1.0, 0.0) };
        b[(i, j)] = z;
        b[(j, i)] = z.conj();
        b
    }

    /// Affine form of a real-linear functional of the matrix.
    pub fn linear(&self, f: impl Fn(&CMatrix) -> f64) -> Affine {
        let terms = (0..self.params.len())
            .map(|p| (self.params[p].0, f(&self.basis(p))))
            .filter(|t| t.1 != 0.0)
            .collect();
        Affine {
            terms,
            constant: 0.0,
        }
    }

    /// Affine forms of a real-linear vector-valued map of the matrix.
    pub fn linear_vec(&self, len: usize, f: impl Fn(&CMatrix) -> Vec<f64>) -> Vec<Affine> {
        let mut out = vec![Affine::default(); len];
        for p in 0..self.params.len() {
            let col = f(&self.basis(p));
            for (o, c) in out.iter_mut().zip(col) {
                if c != 0.0 {
                    o.terms.push((self.params[p].0, c));
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Affine {
        (0..self.dim).map(|i| self.params[i].aff()).sum()
    }

    /// `Re tr(A W)` for a Hermitian `A`.
    pub fn inner(&self, a: &CMatrix) -> Affine {
        self.linear(|b| (a * b).trace().re)
    }

    /// Constrain the matrix to be PSD via its real embedding.
    pub fn constrain_psd(&self, prog: &mut ConicProgram, label: &str) {
        let m = self.dim;
        prog.psd(label, 2 * m, |i, j| {
            let (re, im) = self.entry(i % m, j % m);
            match (i < m, j < m) {
                (true, true) | (false, false) => re,
                (true, false) => -im,
                (false, true) => im,
            }
        });
    }

    pub fn value(&self, sol: &ConicSolution) -> CMatrix {
        self.from_params(&self.params.iter().map(|v| sol.value(*v)).collect::<Vec<_>>())
    }

    pub fn from_params(&self, vals: &[f64]) -> CMatrix {
        let mut w = CMatrix::zeros(self.dim, self.dim);
        for (p, v) in vals.iter().enumerate() {
            w += self.basis(p) * C64::new(*v, 0.0);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, ConicSettings};
    use crate::rng::SeedTree;
    use rand::Rng;

    fn random_psd(m: usize, seed: u64) -> CMatrix {
        let mut rng = SeedTree::new(seed).stream("psd");
        let a = CMatrix::from_fn(m, m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &a * a.adjoint()
    }

    #[test]
    fn identity_embeds_to_identity() {
        let e = embed_hermitian(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(e, DMatrix::identity(4, 4));
    }

    #[test]
    fn embedding_doubles_eigenvalues() {
        for seed in 0..10 {
            let h = random_psd(3, seed);
            let mut want: Vec<f64> = linalg::hermitian_eigen(&h).0.iter().flat_map(|&l| [l, l]).collect();
            want.sort_by(f64::total_cmp);
            let e = embed_hermitian(&h).unwrap();
            let mut got: Vec<f64> = e.symmetric_eigenvalues().iter().copied().collect();
            got.sort_by(f64::total_cmp);
            for (a, b) in want.iter().zip(&got) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(got[0] >= -1e-10);
            assert!((e.trace() - 2.0 * h.trace().re).abs() < 1e-9);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut h = CMatrix::identity(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(embed_hermitian(&h).is_err());
    }

    #[test]
    fn basis_reconstructs_matrix() {
        let mut prog = ConicProgram::new();
        let hv = HermitianVar::new(&mut prog, "W", 4);
        let h = random_psd(4, 3);
        let params: Vec<f64> = (0..hv.params.len())
            .map(|p| {
                let b = hv.basis(p);
                let scale = if p < hv.dim { 1.0 } else { 2.0 };
                (b.adjoint() * &h).trace().re / scale
            })
            .collect();
        let back = hv.from_params(&params);
        assert!((back - &h).norm() < 1e-12);
        let a = random_psd(4, 4);
        let inner = hv.inner(&a).eval(&params);
        assert!((inner - (&a * &h).trace().re).abs() < 1e-10);
    }

    #[test]
    fn complex_psd_agrees_with_eigen_check() {
        // min tr(W) s.t. W psd, <a a^H, W> >= 1  ->  tr = 1/||a||^2, rank one
        let mut prog = ConicProgram::new();
        let hv = HermitianVar::new(&mut prog, "W", 3);
        let a = crate::linalg::CVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.0, 1.0)]);
        let aa = crate::linalg::outer(&a);
        prog.minimize(hv.trace());
        prog.ge("gain", hv.inner(&aa), 1.0);
        hv.constrain_psd(&mut prog, "W psd");
        let sol = solve(&prog, &ConicSettings::default());
        let w = hv.value(&sol);
        assert!((sol.objective - 1.0 / a.norm_squared()).abs() < 1e-6);
        assert!(crate::linalg::min_eigenvalue(&w) > -1e-7);
        let (lam, _) = crate::linalg::principal_eigenpair(&w);
        assert!((w.trace().re - lam) / w.trace().re < 1e-5);
    }
}
