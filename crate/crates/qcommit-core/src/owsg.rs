//! Finite one-way state generator instances with inefficient verification:
//! exact acceptance probabilities, good-set enumeration, the trivial-attack
//! winning probability and the key-counting bound built on it.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::labeled::{LabeledLayout, LabeledState, RegKind};
use crate::linalg::ComplexMatrix;
use crate::{DensityMatrix, Error, Result, Tolerances};

pub type Key = u32;

/// Register names used by purifications: the generated output register and
/// the purifying environment kept by the generator.
pub const GEN_OUT: &str = "gen_out";
pub const GEN_ENV: &str = "gen_env";

/// An instance with a tabulated key distribution, purified generated states
/// and one binary acceptance operator per candidate key.
#[derive(Clone, Debug)]
pub struct IvOwsg {
    lambda: u32,
    key_probs: Vec<f64>,
    /// Purification amplitudes on output ⊗ environment, output-major.
    purifications: Vec<Vec<Complex64>>,
    d_out: usize,
    d_env: usize,
    /// Acceptance operator `E_{k'}`; rejection is `I − E_{k'}`.
    ver_accept: Vec<ComplexMatrix>,
}

impl IvOwsg {
    pub fn new(
        lambda: u32,
        key_probs: Vec<f64>,
        purifications: Vec<Vec<Complex64>>,
        d_out: usize,
        d_env: usize,
        ver_accept: Vec<ComplexMatrix>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let n_keys = 1usize << lambda;
        if key_probs.len() != n_keys || purifications.len() != n_keys || ver_accept.len() != n_keys
        {
            return Err(Error::Validity(format!(
                "instance needs {n_keys} keys worth of data"
            )));
        }
        let psum: f64 = key_probs.iter().sum();
        if (psum - 1.0).abs() > tol.exact || key_probs.iter().any(|p| *p < 0.0) {
            return Err(Error::Validity(format!(
                "key distribution sums to {psum}, expected 1"
            )));
        }
        for (k, x) in purifications.iter().enumerate() {
            if x.len() != d_out * d_env {
                return Err(Error::DimensionMismatch(format!(
                    "purification {k} has length {}, expected {}",
                    x.len(),
                    d_out * d_env
                )));
            }
            let n = crate::linalg::vec_norm(x);
            if (n - 1.0).abs() > tol.norm {
                return Err(Error::Validity(format!("purification {k} has norm {n}")));
            }
        }
        for (k, e) in ver_accept.iter().enumerate() {
            if e.rows() != d_out || e.cols() != d_out {
                return Err(Error::DimensionMismatch(format!(
                    "acceptance operator {k} is {}x{}, expected {d_out}x{d_out}",
                    e.rows(),
                    e.cols()
                )));
            }
            if e.hermitian_error() > tol.hermitian {
                return Err(Error::Validity(format!("acceptance operator {k} not Hermitian")));
            }
            let eig = e.eigh()?;
            let min = eig.values.first().copied().unwrap_or(0.0);
            let max = eig.values.last().copied().unwrap_or(0.0);
            if min < -tol.psd || max > 1.0 + tol.psd {
                return Err(Error::Validity(format!(
                    "acceptance operator {k} outside [0, I] (eigenvalues {min:.3e}..{max:.3e})"
                )));
            }
        }
        Ok(Self {
            lambda,
            key_probs,
            purifications,
            d_out,
            d_env,
            ver_accept,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn n_keys(&self) -> usize {
        1usize << self.lambda
    }

    pub fn key_prob(&self, k: Key) -> f64 {
        self.key_probs[k as usize]
    }

    pub fn key_probs(&self) -> &[f64] {
        &self.key_probs
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_env(&self) -> usize {
        self.d_env
    }

    pub fn purification_amplitudes(&self, k: Key) -> &[Complex64] {
        &self.purifications[k as usize]
    }

    /// The purification as a labeled state on (output, environment).
    pub fn purification_state(&self, k: Key, tol: &Tolerances) -> Result<LabeledState> {
        let layout = LabeledLayout::new(vec![
            (GEN_OUT, self.d_out, RegKind::Quantum),
            (GEN_ENV, self.d_env, RegKind::Quantum),
        ])?;
        let mut blocks = BTreeMap::new();
        blocks.insert(Vec::new(), self.purifications[k as usize].clone());
        LabeledState::new(layout, blocks, tol)
    }

    pub fn ver_accept(&self, k_prime: Key) -> &ComplexMatrix {
        &self.ver_accept[k_prime as usize]
    }

    /// Generated mixed state `φ_k`, the environment marginal of the
    /// purification.
    pub fn phi(&self, k: Key, tol: &Tolerances) -> Result<DensityMatrix> {
        let x = &self.purifications[k as usize];
        let m = ComplexMatrix::from_fn(self.d_out, self.d_out, |a, ap| {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..self.d_env {
                acc += x[a * self.d_env + e] * x[ap * self.d_env + e].conj();
            }
            acc
        });
        DensityMatrix::new(m, tol)
    }

    /// `φ_k^{⊗t}`; `t = 0` gives the trivial one-dimensional state.
    pub fn phi_tensor(&self, k: Key, t: u32, tol: &Tolerances) -> Result<DensityMatrix> {
        let mut acc = ComplexMatrix::identity(1);
        let phi = self.phi(k, tol)?;
        for _ in 0..t {
            acc = acc.kron(phi.mat(), tol)?;
        }
        DensityMatrix::new(acc, tol)
    }

    /// `Pr[⊤ ← Ver(k', φ_k)] = Tr(E_{k'} φ_k)`, evaluated exactly on the
    /// purification.
    pub fn accept_prob(&self, k_prime: Key, k: Key) -> f64 {
        let e = &self.ver_accept[k_prime as usize];
        let x = &self.purifications[k as usize];
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..self.d_out {
            for ap in 0..self.d_out {
                let eij = e.get(ap, a);
                if eij == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for env in 0..self.d_env {
                    acc += x[ap * self.d_env + env].conj() * eij * x[a * self.d_env + env];
                }
            }
        }
        acc.re.clamp(0.0, 1.0)
    }

    /// `Σ_k Pr[k]·Pr[⊤ ← Ver(k, φ_k)]`.
    pub fn correctness_prob(&self) -> f64 {
        (0..self.n_keys() as Key)
            .map(|k| self.key_prob(k) * self.accept_prob(k, k))
            .sum()
    }

    /// `G_k = {k' : Pr[⊤ ← Ver(k', φ_k)] ≥ 1 − 1/p}`; ties at the threshold
    /// count as members (≥ with exact-tolerance slack).
    pub fn good_set(&self, k: Key, p: f64, tol: &Tolerances) -> Result<BTreeSet<Key>> {
        if p <= 1.0 {
            return Err(Error::Validity(format!("good-set threshold needs p > 1, got {p}")));
        }
        let threshold = 1.0 - 1.0 / p;
        Ok((0..self.n_keys() as Key)
            .filter(|&kp| self.accept_prob(kp, k) >= threshold - tol.exact)
            .collect())
    }

    /// Winning probability of the attack that ignores the state and guesses a
    /// uniform key: `Σ_{k,k'} Pr[k]·2^{−λ}·Tr(E_{k'} φ_k)`.
    pub fn uniform_guess_winprob(&self) -> f64 {
        let inv = 1.0 / self.n_keys() as f64;
        (0..self.n_keys() as Key)
            .map(|k| {
                let pk = self.key_prob(k);
                pk * inv
                    * (0..self.n_keys() as Key)
                        .map(|kp| self.accept_prob(kp, k))
                        .sum::<f64>()
            })
            .sum()
    }

    /// The exponent for which the trivial attack saturates its security bound
    /// with equality: `−log₂` of the uniform-guess winning probability.
    pub fn empirical_delta(&self) -> f64 {
        let w = self.uniform_guess_winprob();
        if w <= 0.0 {
            f64::INFINITY
        } else {
            -w.log2()
        }
    }

    /// Evaluates the key-counting chain at `(p, r)` and reports the exact
    /// mass of oversized good sets together with the bound it must satisfy.
    pub fn lemma1_report(&self, p: f64, r: f64, tol: &Tolerances) -> Result<GoodSetReport> {
        if p <= 1.0 {
            return Err(Error::Validity(format!("lemma1 needs p > 1, got {p}")));
        }
        if r < 0.0 {
            return Err(Error::Validity(format!("lemma1 needs r ≥ 0, got {r}")));
        }
        let n = self.n_keys();
        let two_r = 2f64.powf(r);
        let mut sizes = Vec::with_capacity(n);
        let mut t_mass = 0.0;
        let mut prob_k_in_gk_small = 0.0;
        let mut prob_gk_nonempty_small = 0.0;
        for k in 0..n as Key {
            let gset = self.good_set(k, p, tol)?;
            let size = gset.len();
            sizes.push(size);
            let small = (size as f64) <= two_r + tol.exact;
            if !small {
                t_mass += self.key_prob(k);
            }
            if small && gset.contains(&k) {
                prob_k_in_gk_small += self.key_prob(k);
            }
            if small && size >= 1 {
                prob_gk_nonempty_small += self.key_prob(k);
            }
        }
        let winprob = self.uniform_guess_winprob();
        let delta_emp = self.empirical_delta();
        let lam = self.lambda as f64;
        let factor = 1.0 - 1.0 / p;
        // Rearranged chain: mass(T) ≤ 2^{λ−δ} / (2^r (1 − 1/p)).
        let mass_bound = 2f64.powf(lam - delta_emp) / (two_r * factor);
        let chain_lhs = t_mass * two_r * 2f64.powf(-lam) * factor;
        Ok(GoodSetReport {
            lambda: self.lambda,
            p,
            r,
            goodset_sizes: sizes,
            t_mass,
            winprob,
            delta_emp,
            mass_bound,
            mass_bound_ok: t_mass <= mass_bound + tol.exact,
            mass_bound_vacuous: mass_bound >= 1.0,
            chain_lhs,
            chain_ok: chain_lhs <= winprob + tol.exact,
            prob_k_in_gk_small,
            prob_gk_nonempty_small,
            sandwich_ok: prob_gk_nonempty_small >= prob_k_in_gk_small - tol.exact,
        })
    }
}

/// Output of [`IvOwsg::lemma1_report`]: per-key good-set sizes, the mass of
/// keys whose good set exceeds `2^r`, and the verified inequalities.
#[derive(Clone, Debug, Serialize)]
pub struct GoodSetReport {
    pub lambda: u32,
    pub p: f64,
    pub r: f64,
    pub goodset_sizes: Vec<usize>,
    /// Σ_{k : |G_k| > 2^r} Pr[k].
    pub t_mass: f64,
    pub winprob: f64,
    pub delta_emp: f64,
    /// 2^{λ−δ} / (2^r (1 − 1/p)).
    pub mass_bound: f64,
    pub mass_bound_ok: bool,
    /// The bound proves nothing when it reaches 1.
    pub mass_bound_vacuous: bool,
    /// mass(T)·2^r·2^{−λ}·(1 − 1/p), which the chain keeps below `winprob`.
    pub chain_lhs: f64,
    pub chain_ok: bool,
    pub prob_k_in_gk_small: f64,
    pub prob_gk_nonempty_small: f64,
    pub sandwich_ok: bool,
}

/// Concrete instantiations used throughout the lab.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ToyKind {
    /// Per key bit, |0⟩ or |+⟩; verification projects onto the ideal state.
    Bb84Pure,
    /// Same, with each qubit depolarized at rate η before output.
    Bb84Depolarized(f64),
    /// A fixed single-qubit output with an always-accepting verifier.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToyInstance {
    pub kind: ToyKind,
    pub lambda: u32,
}

impl ToyInstance {
    pub fn new(kind: ToyKind, lambda: u32) -> Result<Self> {
        if lambda < 1 || lambda > 8 {
            return Err(Error::Validity(format!("lambda {lambda} outside 1..=8")));
        }
        if let ToyKind::Bb84Depolarized(eta) = kind {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Validity(format!("depolarization rate {eta} outside [0,1]")));
            }
        }
        Ok(Self { kind, lambda })
    }

    pub fn build(&self, tol: &Tolerances) -> Result<IvOwsg> {
        self.build_with_probs(None, tol)
    }

    /// Builds the instance, optionally overriding the uniform key
    /// distribution with a tabulated one.
    pub fn build_with_probs(
        &self,
        key_probs: Option<Vec<f64>>,
        tol: &Tolerances,
    ) -> Result<IvOwsg> {
        let n = 1usize << self.lambda;
        let probs = key_probs.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        match self.kind {
            ToyKind::Bb84Pure => self.build_bb84(0.0, probs, tol),
            ToyKind::Bb84Depolarized(eta) => self.build_bb84(eta, probs, tol),
            ToyKind::Constant => {
                let x = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
                let accept = ComplexMatrix::identity(2);
                IvOwsg::new(
                    self.lambda,
                    probs,
                    vec![x; n],
                    2,
                    1,
                    vec![accept; n],
                    tol,
                )
            }
        }
    }

    fn build_bb84(&self, eta: f64, probs: Vec<f64>, tol: &Tolerances) -> Result<IvOwsg> {
        let lambda = self.lambda;
        let n = 1usize << lambda;
        let h = 1.0 / 2f64.sqrt();
        // Conjugate-coding single-qubit states and their orthogonal partners.
        let basis = |bit: u32| -> ([f64; 2], [f64; 2]) {
            if bit == 0 {
                ([1.0, 0.0], [0.0, 1.0])
            } else {
                ([h, h], [h, -h])
            }
        };
        let ideal = |k: Key| -> Vec<Complex64> {
            let mut v = vec![Complex64::new(1.0, 0.0)];
            for i in 0..lambda {
                let bit = (k >> (lambda - 1 - i)) & 1;
                let (s, _) = basis(bit);
                let mut next = Vec::with_capacity(v.len() * 2);
                for amp in &v {
                    next.push(amp * Complex64::new(s[0], 0.0));
                    next.push(amp * Complex64::new(s[1], 0.0));
                }
                v = next;
            }
            v
        };
        let d_out = n;
        let (d_env, purifications) = if eta == 0.0 {
            (1, (0..n as Key).map(ideal).collect::<Vec<_>>())
        } else {
            // Per qubit: amplitude √(1−η/2) on (state, env 0) and √(η/2) on
            // (orthogonal partner, env 1); outputs first, environments last.
            let keep = (1.0 - eta / 2.0).sqrt();
            let flip = (eta / 2.0).sqrt();
            let mut purs = Vec::with_capacity(n);
            for k in 0..n as Key {
                let lam = lambda as usize;
                let mut x = vec![Complex64::new(0.0, 0.0); n * n];
                for a in 0..n {
                    for e in 0..n {
                        let mut amp = 1.0f64;
                        for i in 0..lam {
                            let bit = (k >> (lam - 1 - i)) & 1;
                            let (s, sp) = basis(bit);
                            let ai = (a >> (lam - 1 - i)) & 1;
                            let ei = (e >> (lam - 1 - i)) & 1;
                            amp *= if ei == 0 { keep * s[ai] } else { flip * sp[ai] };
                        }
                        x[a * n + e] = Complex64::new(amp, 0.0);
                    }
                }
                purs.push(x);
            }
            (n, purs)
        };
        let ver: Vec<ComplexMatrix> = (0..n as Key)
            .map(|k| {
                let v = ideal(k);
                ComplexMatrix::outer(&v, &v)
            })
            .collect();
        IvOwsg::new(lambda, probs, purifications, d_out, d_env, ver, tol)
    }
}
