//! Density matrices, partial trace, fidelity and trace distance.

use num_complex::Complex64;

use crate::linalg::ComplexMatrix;
use crate::registers::RegisterLayout;
use crate::{Error, Result, Tolerances};

/// A validated density matrix: Hermitian, unit trace, PSD.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    dim: usize,
    mat: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if mat.rows() != mat.cols() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        if !mat.all_finite() {
            return Err(Error::Validity("density matrix has non-finite entries".into()));
        }
        let herm = mat.hermitian_error();
        if herm > tol.hermitian {
            return Err(Error::Validity(format!(
                "density matrix not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::Validity(format!(
                "density matrix trace {} not 1",
                tr.re
            )));
        }
        let eig = mat.eigh()?;
        if let Some(min) = eig.values.first() {
            if *min < -tol.psd {
                return Err(Error::Validity(format!(
                    "density matrix not PSD (eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(Self { dim: mat.rows(), mat })
    }

    /// Density matrix of a pure state vector.
    pub fn from_pure(v: &[Complex64], tol: &Tolerances) -> Result<Self> {
        let n2 = crate::linalg::vec_norm(v);
        if (n2 - 1.0).abs() > tol.norm {
            return Err(Error::Validity(format!("pure state has norm {n2}")));
        }
        Self::new(ComplexMatrix::outer(v, v), tol)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.mat.eigh()?.values)
    }
}

/// Uhlmann fidelity `F(ρ,σ) = (Tr √(√σ ρ √σ))²` via Hermitian
/// eigendecompositions with negative eigenvalues clipped at zero.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix, tol: &Tolerances) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity of dims {} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let rs = sigma.mat().psd_sqrt(tol)?;
    let inner = rs.mul(rho.mat()).mul(&rs);
    let eig = inner.eigh()?;
    if let Some(min) = eig.values.first() {
        if *min < -tol.psd {
            return Err(Error::Validity(format!(
                "fidelity inner matrix not PSD (eigenvalue {min:.3e})"
            )));
        }
    }
    let root_sum: f64 = eig.values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Trace distance `½‖ρ−σ‖₁` via the eigenvalues of the Hermitian difference.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance of dims {} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let diff = rho.mat().sub(sigma.mat());
    let eig = diff.eigh()?;
    Ok((0.5 * eig.values.iter().map(|v| v.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

/// Partial trace of `rho` over every register of `layout` not in `keep`.
/// Kept registers stay in layout order.
pub fn partial_trace(
    rho: &DensityMatrix,
    layout: &RegisterLayout,
    keep: &[&str],
    tol: &Tolerances,
) -> Result<DensityMatrix> {
    if layout.total_dim() != rho.dim() as u128 {
        return Err(Error::DimensionMismatch(format!(
            "layout dimension {} does not match state dimension {}",
            layout.total_dim(),
            rho.dim()
        )));
    }
    let keep_pos = layout.keep_positions(keep)?;
    let dims = layout.dims();
    let strides = layout.strides();
    let traced_pos: Vec<usize> = (0..dims.len()).filter(|p| !keep_pos.contains(p)).collect();

    let keep_dim: usize = keep_pos.iter().map(|&p| dims[p]).product();
    let traced_dim: usize = traced_pos.iter().map(|&p| dims[p]).product();
    tol.check_entries("partial trace result", (keep_dim as u128) * (keep_dim as u128))?;

    // Flat offsets contributed by the kept / traced multi-indices.
    let offsets = |positions: &[usize], count: usize| -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        let pdims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
        let mut idx = vec![0usize; positions.len()];
        for _ in 0..count {
            out.push(
                positions
                    .iter()
                    .zip(&idx)
                    .map(|(&p, &i)| i * strides[p])
                    .sum(),
            );
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < pdims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    };
    let keep_offsets = offsets(&keep_pos, keep_dim);
    let traced_offsets = offsets(&traced_pos, traced_dim.max(1));

    let out = ComplexMatrix::from_fn(keep_dim, keep_dim, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for s in &traced_offsets {
            acc += rho.mat().get(keep_offsets[i] + s, keep_offsets[j] + s);
        }
        acc
    });
    DensityMatrix::new(out, tol)
}
