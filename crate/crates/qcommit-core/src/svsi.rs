//! Secretly-verifiable, statistically-invertible generators and their
//! conversion into inefficiently-verified instances: verification measures
//! the inverting POVM and accepts exactly when the outcome names the
//! candidate key.

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::ComplexMatrix;
use crate::owsg::{IvOwsg, Key};
use crate::povm::{Outcome, Povm};
use crate::{DensityMatrix, Error, Result, Tolerances};

/// A generator whose states can be inverted by a (possibly inefficient)
/// POVM within a declared per-instance tolerance.
#[derive(Clone, Debug)]
pub struct SvsiOwsg {
    lambda: u32,
    key_probs: Vec<f64>,
    states: Vec<DensityMatrix>,
    inv_povm: Povm,
    tol_inv: f64,
}

impl SvsiOwsg {
    /// Validates the invertibility contract: `Tr(Π_k φ_k) ≥ 1 − tol_inv` and
    /// `Tr(Π_{k'} φ_k) ≤ tol_inv` for `k' ≠ k`.
    pub fn new(
        lambda: u32,
        key_probs: Vec<f64>,
        states: Vec<DensityMatrix>,
        inv_povm: Povm,
        tol_inv: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        let n = 1usize << lambda;
        if key_probs.len() != n || states.len() != n {
            return Err(Error::Validity(format!("instance needs {n} keys worth of data")));
        }
        let psum: f64 = key_probs.iter().sum();
        if (psum - 1.0).abs() > tol.exact || key_probs.iter().any(|p| *p < 0.0) {
            return Err(Error::Validity(format!(
                "key distribution sums to {psum}, expected 1"
            )));
        }
        for k in 0..n as Key {
            if inv_povm.element_for(Outcome::Key(k)).is_none() {
                return Err(Error::Validity(format!("inverting POVM lacks outcome {k}")));
            }
        }
        for (k, phi) in states.iter().enumerate() {
            if phi.dim() != inv_povm.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "state {k} has dimension {}, POVM has {}",
                    phi.dim(),
                    inv_povm.dim()
                )));
            }
            for kp in 0..n as Key {
                let pi = inv_povm.element_for(Outcome::Key(kp)).expect("checked");
                let val = pi.mul(phi.mat()).trace().re;
                if kp as usize == k {
                    if val < 1.0 - tol_inv - tol.exact {
                        return Err(Error::Validity(format!(
                            "statistical invertibility fails: Tr(Π_{k} φ_{k}) = {val}"
                        )));
                    }
                } else if val > tol_inv + tol.exact {
                    return Err(Error::Validity(format!(
                        "statistical invertibility fails: Tr(Π_{kp} φ_{k}) = {val}"
                    )));
                }
            }
        }
        Ok(Self {
            lambda,
            key_probs,
            states,
            inv_povm,
            tol_inv,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn n_keys(&self) -> usize {
        1usize << self.lambda
    }

    pub fn tol_inv(&self) -> f64 {
        self.tol_inv
    }

    pub fn state(&self, k: Key) -> &DensityMatrix {
        &self.states[k as usize]
    }

    pub fn inv_povm(&self) -> &Povm {
        &self.inv_povm
    }

    /// The orthogonal-states instance: `φ_k = |k⟩⟨k|` with its projective
    /// inverting measurement.
    pub fn orthogonal(lambda: u32, tol: &Tolerances) -> Result<Self> {
        let n = 1usize << lambda;
        let mut states = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        let mut elements = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            v[k] = Complex64::new(1.0, 0.0);
            states.push(DensityMatrix::from_pure(&v, tol)?);
            outcomes.push(Outcome::Key(k as Key));
            elements.push(ComplexMatrix::outer(&v, &v));
        }
        let povm = Povm::new(outcomes, elements, tol)?;
        Self::new(lambda, vec![1.0 / n as f64; n], states, povm, 1e-12, tol)
    }

    /// Two pure states on a qubit pair with the given real inner product,
    /// inverted by their pretty-good measurement.
    pub fn near_orthogonal_pair(overlap: f64, tol_inv: f64, tol: &Tolerances) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::Validity(format!("overlap {overlap} outside [0,1)")));
        }
        let mut a = vec![Complex64::new(0.0, 0.0); 4];
        a[0] = Complex64::new(1.0, 0.0);
        let mut b = vec![Complex64::new(0.0, 0.0); 4];
        b[0] = Complex64::new(overlap, 0.0);
        b[3] = Complex64::new((1.0 - overlap * overlap).sqrt(), 0.0);
        let states = vec![
            DensityMatrix::from_pure(&a, tol)?,
            DensityMatrix::from_pure(&b, tol)?,
        ];
        let povm = crate::povm::pgm(&states, &[0.5, 0.5], tol)?;
        Self::new(1, vec![0.5, 0.5], states, povm, tol_inv, tol)
    }

    /// Builds the inefficiently-verified instance whose acceptance operator
    /// for candidate `k'` is the inverting POVM element `Π_{k'}`.
    pub fn to_ivowsg(&self, tol: &Tolerances) -> Result<IvOwsg> {
        let n = self.n_keys();
        // Purify each state; the environment dimension is the largest rank.
        let mut decomps = Vec::with_capacity(n);
        let mut d_env = 1usize;
        for phi in &self.states {
            let eig = phi.mat().eigh()?;
            let kept: Vec<(f64, usize)> = eig
                .values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > tol.support_cutoff)
                .map(|(i, &v)| (v, i))
                .collect();
            d_env = d_env.max(kept.len());
            decomps.push((eig, kept));
        }
        let d_out = self.inv_povm.dim();
        let mut purifications = Vec::with_capacity(n);
        for (eig, kept) in &decomps {
            let mut x = vec![Complex64::new(0.0, 0.0); d_out * d_env];
            for (e, (val, col)) in kept.iter().enumerate() {
                let w = val.sqrt();
                for a in 0..d_out {
                    x[a * d_env + e] += eig.vectors.get(a, *col) * Complex64::new(w, 0.0);
                }
            }
            purifications.push(x);
        }
        let ver: Vec<ComplexMatrix> = (0..n as Key)
            .map(|k| {
                self.inv_povm
                    .element_for(Outcome::Key(k))
                    .expect("validated at construction")
                    .clone()
            })
            .collect();
        IvOwsg::new(
            self.lambda,
            self.key_probs.clone(),
            purifications,
            d_out,
            d_env,
            ver,
            tol,
        )
    }

    /// Evaluates the two-term bound on any tabulated adversary: the total
    /// verification success splits into a diagonal part (at most the exact
    /// guessing probability) and an off-diagonal part (at most `tol_inv`).
    pub fn security_accounting(
        &self,
        guesses: &[Vec<f64>],
        tol: &Tolerances,
    ) -> Result<SecurityAccounting> {
        let n = self.n_keys();
        if guesses.len() != n {
            return Err(Error::Validity(format!("need one guess distribution per {n} keys")));
        }
        for (k, g) in guesses.iter().enumerate() {
            if g.len() != n {
                return Err(Error::Validity(format!("guess distribution {k} has wrong length")));
            }
            let s: f64 = g.iter().sum();
            if (s - 1.0).abs() > tol.exact || g.iter().any(|p| *p < 0.0) {
                return Err(Error::Validity(format!(
                    "guess distribution {k} sums to {s}, expected 1"
                )));
            }
        }
        let mut total = 0.0;
        let mut diagonal = 0.0;
        let mut exact_guess = 0.0;
        for k in 0..n {
            let pk = self.key_probs[k];
            exact_guess += pk * guesses[k][k];
            for kp in 0..n {
                let pi = self
                    .inv_povm
                    .element_for(Outcome::Key(kp as Key))
                    .expect("validated");
                let acc = pi.mul(self.states[k].mat()).trace().re;
                let term = pk * guesses[k][kp] * acc;
                total += term;
                if kp == k {
                    diagonal += term;
                }
            }
        }
        let off_diagonal = total - diagonal;
        Ok(SecurityAccounting {
            total,
            diagonal,
            off_diagonal,
            exact_guess,
            tol_inv: self.tol_inv,
            diagonal_ok: diagonal <= exact_guess + tol.exact,
            off_diagonal_ok: off_diagonal <= self.tol_inv + tol.exact,
            bound_ok: total <= exact_guess + self.tol_inv + tol.exact,
        })
    }
}

/// The decomposition checked by [`SvsiOwsg::security_accounting`].
#[derive(Clone, Debug, Serialize)]
pub struct SecurityAccounting {
    pub total: f64,
    pub diagonal: f64,
    pub off_diagonal: f64,
    pub exact_guess: f64,
    pub tol_inv: f64,
    pub diagonal_ok: bool,
    pub off_diagonal_ok: bool,
    pub bound_ok: bool,
}
