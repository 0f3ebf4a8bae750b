//! POVMs, their Naimark dilation, and the pretty-good measurement.

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::{complete_isometry, ComplexMatrix};
use crate::{DensityMatrix, Error, Result, Tolerances};

/// Measurement outcome label: a key guess or the reject symbol ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    Key(u32),
    Reject,
}

/// A finite POVM: PSD elements of a common dimension summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    dim: usize,
    outcomes: Vec<Outcome>,
    elements: Vec<ComplexMatrix>,
}

impl Povm {
    pub fn new(
        outcomes: Vec<Outcome>,
        elements: Vec<ComplexMatrix>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if outcomes.len() != elements.len() || elements.is_empty() {
            return Err(Error::Validity(
                "POVM needs one element per outcome and at least one outcome".into(),
            ));
        }
        let dim = elements[0].rows();
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for (out, el) in outcomes.iter().zip(&elements) {
            if el.rows() != dim || el.cols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "POVM element for {out:?} is {}x{}, expected {dim}x{dim}",
                    el.rows(),
                    el.cols()
                )));
            }
            if el.hermitian_error() > tol.povm {
                return Err(Error::Validity(format!("POVM element for {out:?} not Hermitian")));
            }
            let min = el.eigh()?.values.first().copied().unwrap_or(0.0);
            if min < -tol.povm {
                return Err(Error::Validity(format!(
                    "POVM element for {out:?} not PSD (eigenvalue {min:.3e})"
                )));
            }
            sum = sum.add(el);
        }
        let dev = sum.sub(&ComplexMatrix::identity(dim)).max_abs_entry();
        if dev > tol.povm {
            return Err(Error::Validity(format!(
                "POVM elements sum to identity only within {dev:.3e}"
            )));
        }
        Ok(Self { dim, outcomes, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element_for(&self, outcome: Outcome) -> Option<&ComplexMatrix> {
        self.outcomes
            .iter()
            .position(|o| *o == outcome)
            .map(|i| &self.elements[i])
    }

    /// Outcome probabilities `Tr(E_α ρ)`.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state dimension {} vs POVM dimension {}",
                rho.dim(),
                self.dim
            )));
        }
        Ok(self
            .elements
            .iter()
            .map(|el| el.mul(rho.mat()).trace().re)
            .collect())
    }
}

/// Naimark dilation: a unitary `V` on system ⊗ ancilla (ancilla dimension =
/// number of outcomes) with `V(|v⟩⊗|0⟩) = Σ_α (√E_α |v⟩) ⊗ |α⟩`. The flat
/// index order is system-major: `(i, α) ↦ i·n + α`. Columns outside the
/// ancilla-zero block are completed by orthonormalization.
pub fn naimark_dilate(povm: &Povm, tol: &Tolerances) -> Result<ComplexMatrix> {
    let d = povm.dim();
    let n = povm.n_outcomes();
    let dn = d * n;
    tol.check_entries("Naimark dilation", (dn as u128) * (dn as u128))?;

    let roots: Vec<ComplexMatrix> = povm
        .elements()
        .iter()
        .map(|el| el.psd_sqrt(tol))
        .collect::<Result<_>>()?;
    // Isometry columns for ancilla input |0⟩.
    let w = ComplexMatrix::from_fn(dn, d, |row, i| {
        let j = row / n;
        let alpha = row % n;
        roots[alpha].get(j, i)
    });
    let v = complete_isometry(&w)?;
    // Re-slot: isometry columns belong at ancilla-zero positions (i·n + 0);
    // completion columns fill the remaining slots in order.
    let mut cols: Vec<Vec<Complex64>> = vec![Vec::new(); dn];
    for i in 0..d {
        cols[i * n] = (0..dn).map(|r| v.get(r, i)).collect();
    }
    let mut next = d;
    for (slot, col) in cols.iter_mut().enumerate() {
        if slot % n != 0 {
            *col = (0..dn).map(|r| v.get(r, next)).collect();
            next += 1;
        }
    }
    let v = ComplexMatrix::from_fn(dn, dn, |r, c| cols[c][r]);
    let err = v.unitary_error();
    if err > tol.unitary {
        return Err(Error::Numeric(format!(
            "Naimark completion deviates from unitarity by {err:.3e}"
        )));
    }
    Ok(v)
}

/// Pretty-good measurement `M_k = S^{-1/2} p_k ρ_k S^{-1/2}` with
/// `S = Σ p_k ρ_k`, pseudo-inverted on its support. The residual
/// `I − Σ M_k` (the off-support projector) is assigned to [`Outcome::Reject`].
pub fn pgm(states: &[DensityMatrix], priors: &[f64], tol: &Tolerances) -> Result<Povm> {
    if states.is_empty() || states.len() != priors.len() {
        return Err(Error::Validity("pgm needs one prior per state".into()));
    }
    let psum: f64 = priors.iter().sum();
    if (psum - 1.0).abs() > tol.exact || priors.iter().any(|p| *p < 0.0) {
        return Err(Error::Validity(format!("priors sum to {psum}, expected 1")));
    }
    let dim = states[0].dim();
    for s in states {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch(
                "pgm states must share a dimension".into(),
            ));
        }
    }
    let mut avg = ComplexMatrix::zeros(dim, dim);
    for (s, &p) in states.iter().zip(priors) {
        avg = avg.add(&s.mat().scale(Complex64::new(p, 0.0)));
    }
    let (inv_sqrt, support) = avg.psd_inv_sqrt(tol)?;
    let mut outcomes = Vec::with_capacity(states.len() + 1);
    let mut elements = Vec::with_capacity(states.len() + 1);
    for (k, (s, &p)) in states.iter().zip(priors).enumerate() {
        outcomes.push(Outcome::Key(k as u32));
        elements.push(
            inv_sqrt
                .mul(&s.mat().scale(Complex64::new(p, 0.0)))
                .mul(&inv_sqrt),
        );
    }
    outcomes.push(Outcome::Reject);
    elements.push(ComplexMatrix::identity(dim).sub(&support));
    Povm::new(outcomes, elements, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn projective_qubit() -> Povm {
        let tol = tols();
        let p0 = ComplexMatrix::outer(&[c(1., 0.), c(0., 0.)], &[c(1., 0.), c(0., 0.)]);
        let p1 = ComplexMatrix::outer(&[c(0., 0.), c(1., 0.)], &[c(0., 0.), c(1., 0.)]);
        Povm::new(vec![Outcome::Key(0), Outcome::Key(1)], vec![p0, p1], &tol).unwrap()
    }

    #[test]
    fn completeness_violation_rejected() {
        let tol = tols();
        let p0 = ComplexMatrix::outer(&[c(1., 0.), c(0., 0.)], &[c(1., 0.), c(0., 0.)]);
        assert!(matches!(
            Povm::new(vec![Outcome::Key(0)], vec![p0], &tol),
            Err(Error::Validity(_))
        ));
    }

    #[test]
    fn naimark_of_projective_measurement_relabels() {
        let tol = tols();
        let v = naimark_dilate(&projective_qubit(), &tol).unwrap();
        assert!(v.unitary_error() < 1e-10);
        // |0⟩|0⟩ ↦ |0⟩|0⟩ and |1⟩|0⟩ ↦ |1⟩|1⟩ in the (i·n + α) indexing.
        let col0 = (0..4).map(|r| v.get(r, 0)).collect::<Vec<_>>();
        assert!((col0[0] - c(1., 0.)).norm() < 1e-12);
        let col1 = (0..4).map(|r| v.get(r, 2)).collect::<Vec<_>>();
        assert!((col1[3] - c(1., 0.)).norm() < 1e-12);
    }

    #[test]
    fn naimark_of_half_identity_povm() {
        let tol = tols();
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.));
        let povm = Povm::new(
            vec![Outcome::Key(0), Outcome::Key(1)],
            vec![half.clone(), half],
            &tol,
        )
        .unwrap();
        let v = naimark_dilate(&povm, &tol).unwrap();
        assert!(v.unitary_error() < 1e-10);
        // Ancilla-zero columns carry (1/√2)·I blocks for both outcomes.
        let want = 1.0 / 2f64.sqrt();
        for i in 0..2 {
            for alpha in 0..2 {
                for j in 0..2 {
                    let got = v.get(j * 2 + alpha, i * 2);
                    let expect = if i == j { want } else { 0.0 };
                    assert!((got - c(expect, 0.)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn naimark_reproduces_outcome_statistics() {
        // Ancilla measurement statistics of V(|v⟩|0⟩) equal Tr(E_α ρ).
        let tol = tols();
        let states: Vec<DensityMatrix> = [
            vec![c(1., 0.), c(0., 0.)],
            vec![c(1.0 / 2f64.sqrt(), 0.), c(1.0 / 2f64.sqrt(), 0.)],
        ]
        .iter()
        .map(|v| DensityMatrix::from_pure(v, &tol).unwrap())
        .collect();
        let povm = pgm(&states, &[0.5, 0.5], &tol).unwrap();
        let v = naimark_dilate(&povm, &tol).unwrap();
        let n = povm.n_outcomes();
        let test_vec = vec![c(0.6, 0.), c(0., 0.8)];
        let rho = DensityMatrix::from_pure(&test_vec, &tol).unwrap();
        let want = povm.probabilities(&rho).unwrap();
        // Embed |v⟩|0⟩, apply V, read ancilla marginals.
        let mut input = vec![c(0., 0.); 2 * n];
        for (i, &amp) in test_vec.iter().enumerate() {
            input[i * n] = amp;
        }
        let out = v.apply(&input);
        for alpha in 0..n {
            let p: f64 = (0..2).map(|i| out[i * n + alpha].norm_sqr()).sum();
            assert!((p - want[alpha]).abs() < 1e-10, "outcome {alpha}");
        }
    }

    #[test]
    fn pgm_on_orthogonal_states_is_projective() {
        let tol = tols();
        let states: Vec<DensityMatrix> = [
            vec![c(1., 0.), c(0., 0.)],
            vec![c(0., 0.), c(1., 0.)],
        ]
        .iter()
        .map(|v| DensityMatrix::from_pure(v, &tol).unwrap())
        .collect();
        let povm = pgm(&states, &[0.5, 0.5], &tol).unwrap();
        for (k, s) in states.iter().enumerate() {
            let probs = povm.probabilities(s).unwrap();
            assert!((probs[k] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pgm_of_single_state_is_identity_on_support() {
        let tol = tols();
        let state = DensityMatrix::from_pure(&[c(1., 0.), c(0., 0.)], &tol).unwrap();
        let povm = pgm(&[state.clone()], &[1.0], &tol).unwrap();
        let m = povm.element_for(Outcome::Key(0)).unwrap();
        // Identity on the support of |0⟩⟨0|.
        assert!((m.get(0, 0) - c(1., 0.)).norm() < 1e-12);
        assert!(m.get(1, 1).norm() < 1e-12);
        let probs = povm.probabilities(&state).unwrap();
        assert!((probs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_success_on_bb84_pair_matches_closed_form() {
        // Uniform ensemble {|0⟩,|+⟩}⊗{|0⟩,|+⟩}: the square-root measurement
        // factorizes, each factor succeeding with ½(1+1/√2).
        let tol = tols();
        let h = 1.0 / 2f64.sqrt();
        let single: Vec<Vec<Complex64>> = vec![
            vec![c(1., 0.), c(0., 0.)],
            vec![c(h, 0.), c(h, 0.)],
        ];
        let mut states = Vec::new();
        for a in &single {
            for b in &single {
                let mut v = vec![c(0., 0.); 4];
                for i in 0..2 {
                    for j in 0..2 {
                        v[i * 2 + j] = a[i] * b[j];
                    }
                }
                states.push(DensityMatrix::from_pure(&v, &tol).unwrap());
            }
        }
        let priors = vec![0.25; 4];
        let povm = pgm(&states, &priors, &tol).unwrap();
        let success: f64 = states
            .iter()
            .enumerate()
            .map(|(k, s)| priors[k] * povm.probabilities(s).unwrap()[k])
            .sum();
        let per_qubit = 0.5 * (1.0 + 1.0 / 2f64.sqrt());
        assert!((success - per_qubit * per_qubit).abs() < 1e-10);
    }
}
