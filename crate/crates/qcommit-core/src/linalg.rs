//! Dense complex matrices with the handful of operations the lab needs:
//! tensor products, Hermitian eigendecompositions, PSD square roots and
//! isometry completion. Backed by `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result, Tolerances};

/// Immutable dense complex matrix, row-major semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<Complex64>,
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
#[derive(Clone, Debug)]
pub struct EigH {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: ComplexMatrix,
}

impl ComplexMatrix {
    pub fn from_inner(inner: DMatrix<Complex64>) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.inner
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_inner(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_inner(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        Self::from_inner(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds from a row-major slice of entries.
    pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self::from_inner(DMatrix::from_row_slice(rows, cols, entries)))
    }

    /// Rank-one projector |v⟩⟨v| of a (not necessarily normalized) vector.
    pub fn outer(v: &[Complex64], w: &[Complex64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self::from_fn(diag.len(), diag.len(), |i, j| {
            if i == j {
                diag[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.inner[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        Self::from_inner(self.inner.adjoint())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self::from_inner(&self.inner * &rhs.inner)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self::from_inner(&self.inner + &rhs.inner)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self::from_inner(&self.inner - &rhs.inner)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_inner(self.inner.map(|z| z * s))
    }

    /// Applies the matrix to a vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols(), v.len(), "apply: dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows()];
        for (j, &vj) in v.iter().enumerate() {
            if vj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..self.rows() {
                out[i] += self.inner[(i, j)] * vj;
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        let mut t = Complex64::new(0.0, 0.0);
        for i in 0..self.rows().min(self.cols()) {
            t += self.inner[(i, i)];
        }
        t
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.inner.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest elementwise deviation from `M = M†`.
    pub fn hermitian_error(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        let mut err = 0.0f64;
        for i in 0..self.rows() {
            for j in i..self.cols() {
                let d = self.inner[(i, j)] - self.inner[(j, i)].conj();
                err = err.max(d.norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_error() <= tol
    }

    /// Largest elementwise deviation of `M†M` from the identity.
    pub fn unitary_error(&self) -> f64 {
        let g = self.dagger().mul(self);
        let mut err = 0.0f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                let d = g.get(i, j) - Complex64::new(want, 0.0);
                err = err.max(d.norm());
            }
        }
        err
    }

    /// Tensor product in standard lexicographic block order (left factor is
    /// the most significant index).
    pub fn kron(&self, rhs: &Self, tol: &Tolerances) -> Result<Self> {
        let entries = (self.rows() as u128 * rhs.rows() as u128)
            * (self.cols() as u128 * rhs.cols() as u128);
        tol.check_entries("kron result", entries)?;
        Ok(Self::from_inner(self.inner.kronecker(&rhs.inner)))
    }

    /// Hermitian eigendecomposition, eigenvalues ascending. The permutation is
    /// stable in the backend output so results are deterministic per input.
    pub fn eigh(&self) -> Result<EigH> {
        if self.rows() != self.cols() {
            return Err(Error::DimensionMismatch(format!(
                "eigh needs a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        let se = self.inner.clone().symmetric_eigen();
        let n = self.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            se.eigenvalues[a]
                .partial_cmp(&se.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("eigh produced non-finite eigenvalues".into()));
        }
        let vectors = ComplexMatrix::from_fn(n, n, |i, j| se.eigenvectors[(i, order[j])]);
        Ok(EigH { values, vectors })
    }

    /// PSD square root via eigendecomposition. Eigenvalues in `[-psd_tol, 0)`
    /// are clipped to zero; anything more negative is rejected.
    pub fn psd_sqrt(&self, tol: &Tolerances) -> Result<Self> {
        let eig = self.eigh()?;
        if let Some(min) = eig.values.first() {
            if *min < -tol.psd {
                return Err(Error::Validity(format!(
                    "psd_sqrt: eigenvalue {min:.3e} below -{:.0e}",
                    tol.psd
                )));
            }
        }
        let roots: Vec<Complex64> = eig
            .values
            .iter()
            .map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0))
            .collect();
        let d = ComplexMatrix::from_diagonal(&roots);
        Ok(eig.vectors.mul(&d).mul(&eig.vectors.dagger()))
    }

    /// Pseudo-inverse square root on the support. Returns `(S^{-1/2}, P)`
    /// where `P` projects onto the support (eigenvalues above the cutoff).
    pub fn psd_inv_sqrt(&self, tol: &Tolerances) -> Result<(Self, Self)> {
        let eig = self.eigh()?;
        if let Some(min) = eig.values.first() {
            if *min < -tol.psd {
                return Err(Error::Validity(format!(
                    "psd_inv_sqrt: eigenvalue {min:.3e} below -{:.0e}",
                    tol.psd
                )));
            }
        }
        let inv_roots: Vec<Complex64> = eig
            .values
            .iter()
            .map(|&v| {
                if v > tol.support_cutoff {
                    Complex64::new(1.0 / v.sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let support: Vec<Complex64> = eig
            .values
            .iter()
            .map(|&v| {
                if v > tol.support_cutoff {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let inv = eig
            .vectors
            .mul(&ComplexMatrix::from_diagonal(&inv_roots))
            .mul(&eig.vectors.dagger());
        let proj = eig
            .vectors
            .mul(&ComplexMatrix::from_diagonal(&support))
            .mul(&eig.vectors.dagger());
        Ok((inv, proj))
    }
}

/// Completes an isometry (orthonormal columns) to a full unitary by
/// Gram-Schmidt over the standard basis. Column order is deterministic.
pub fn complete_isometry(w: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dim = w.rows();
    let have = w.cols();
    if have > dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot complete {have} columns in dimension {dim}"
        )));
    }
    let mut cols: Vec<Vec<Complex64>> = (0..have)
        .map(|j| (0..dim).map(|i| w.get(i, j)).collect())
        .collect();
    for basis in 0..dim {
        if cols.len() == dim {
            break;
        }
        let mut v: Vec<Complex64> = (0..dim)
            .map(|i| {
                if i == basis {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        // Two orthogonalization passes for numerical stability.
        for _ in 0..2 {
            for c in &cols {
                let ip: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= ip * ci;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for vi in &mut v {
                *vi /= Complex64::new(norm, 0.0);
            }
            cols.push(v);
        }
    }
    if cols.len() != dim {
        return Err(Error::Numeric(format!(
            "isometry completion found only {} of {} columns",
            cols.len(),
            dim
        )));
    }
    Ok(ComplexMatrix::from_fn(dim, dim, |i, j| cols[j][i]))
}

/// ⟨a|b⟩ with the left argument conjugated.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
