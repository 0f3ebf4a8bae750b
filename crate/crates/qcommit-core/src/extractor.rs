//! The reveal-side key extractor behind statistical hiding: acceptance
//! estimates per candidate key, the 3/4-threshold list, hash disambiguation,
//! a pretty-good-measurement realization of the extracting POVM, its dilation
//! to a reveal-register unitary, and the overlap accounting tying the two.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::commit::CommitmentPair;
use crate::hashfam::{HashFamily, HashFn};
use crate::linalg::ComplexMatrix;
use crate::owsg::{IvOwsg, Key};
use crate::povm::{naimark_dilate, pgm, Outcome, Povm};
use crate::{Error, Result, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ShadowBackend {
    /// Estimates are the exact acceptance probabilities.
    Exact,
    /// Per-candidate Bernoulli sampling at the Hoeffding count.
    Sampled,
}

/// Estimation accuracy/confidence and the list threshold.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShadowConfig {
    pub epsilon: f64,
    pub omega: f64,
    pub threshold: f64,
    pub backend: ShadowBackend,
    pub t_samples: Option<u64>,
}

impl ShadowConfig {
    pub fn new(
        epsilon: f64,
        omega: f64,
        threshold: f64,
        backend: ShadowBackend,
        t_samples: Option<u64>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < threshold && threshold < 1.0) {
            return Err(Error::Validity(format!(
                "need 0 < epsilon < threshold < 1, got epsilon {epsilon}, threshold {threshold}"
            )));
        }
        Ok(Self {
            epsilon,
            omega,
            threshold,
            backend,
            t_samples,
        })
    }

    /// Zero-error backend with the standard 1/8 margin and 3/4 threshold.
    pub fn exact(lambda: u32) -> Self {
        Self {
            epsilon: 0.125,
            omega: 2f64.powi(-(lambda as i32)),
            threshold: 0.75,
            backend: ShadowBackend::Exact,
            t_samples: None,
        }
    }

    /// Sampled backend at the union-bound Hoeffding count for failure
    /// probability `ω = 2^{-λ}`.
    pub fn sampled(lambda: u32) -> Self {
        let epsilon = 0.125;
        let omega = 2f64.powi(-(lambda as i32));
        Self {
            epsilon,
            omega,
            threshold: 0.75,
            backend: ShadowBackend::Sampled,
            t_samples: Some(hoeffding_samples(lambda, epsilon, omega)),
        }
    }
}

/// Samples per candidate so that `Pr[any |b − p| > ε] ≤ ω` by Hoeffding and
/// a union bound over the `2^λ` candidates: `⌈ln(2·2^λ/ω) / (2ε²)⌉`.
pub fn hoeffding_samples(lambda: u32, epsilon: f64, omega: f64) -> u64 {
    ((2.0 * 2f64.powi(lambda as i32) / omega).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

/// Acceptance estimates `b_{k'}`, complete over the key space.
#[derive(Clone, Debug, Serialize)]
pub struct ShadowEstimates {
    pub per_key: Vec<f64>,
}

/// Estimates acceptance of every candidate key against `φ_k`. The sampled
/// backend draws an independent seeded stream per candidate.
pub fn shadow_estimate(inst: &IvOwsg, k: Key, cfg: &ShadowConfig, seed: u64) -> ShadowEstimates {
    let n = inst.n_keys();
    let per_key = match cfg.backend {
        ShadowBackend::Exact => (0..n as Key).map(|kp| inst.accept_prob(kp, k)).collect(),
        ShadowBackend::Sampled => {
            let t = cfg.t_samples.expect("sampled backend needs a sample count");
            (0..n as Key)
                .map(|kp| {
                    let p = inst.accept_prob(kp, k);
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    rng.set_stream(kp as u64);
                    let hits = (0..t).filter(|_| rng.random::<f64>() < p).count();
                    hits as f64 / t as f64
                })
                .collect()
        }
    };
    ShadowEstimates { per_key }
}

/// Candidates whose estimate clears the threshold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtractionList(pub BTreeSet<Key>);

pub fn build_list(est: &ShadowEstimates, cfg: &ShadowConfig, tol: &Tolerances) -> ExtractionList {
    ExtractionList(
        est.per_key
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= cfg.threshold - tol.exact)
            .map(|(k, _)| k as Key)
            .collect(),
    )
}

/// The unique listed key matching the digest, if there is exactly one.
pub fn extract(h: &HashFn, y: u32, list: &ExtractionList) -> Option<Key> {
    let mut found = None;
    for &k in &list.0 {
        if h.eval(k) == y {
            if found.is_some() {
                return None;
            }
            found = Some(k);
        }
    }
    found
}

/// Per-key accounting of the exact-backend extraction.
#[derive(Clone, Debug, Serialize)]
pub struct KeyExtraction {
    pub key: Key,
    pub list_size: usize,
    pub good_size: usize,
    /// `{p ≥ 1 − ε·.. }`-style sandwich: high-acceptance keys are listed and
    /// the list stays inside the half-threshold good set.
    pub sandwich_ok: bool,
    /// `1 − (|G_k|−1)/|Y|`, the pairwise-independence lower bound on unique
    /// hashing within the good set.
    pub pairwise_bound: f64,
    /// Fraction of family members for which extraction returns this key.
    pub hash_success: f64,
}

/// Full-enumeration success probability of the extractor.
#[derive(Clone, Debug, Serialize)]
pub struct ExactSuccessReport {
    pub success: f64,
    /// Pr over keys of the event `k ∈ L ⊆ G_k`.
    pub prob_key_listed_in_good: f64,
    pub per_key: Vec<KeyExtraction>,
    pub family_size: u64,
    pub range_size: u64,
}

/// Enumerates every (key, hash) pair under the exact backend:
/// `Σ_k Pr[k] Σ_h |H|⁻¹ · 1[L_k ∩ h⁻¹(h(k)) = {k}]`.
pub fn success_prob_exact(
    inst: &IvOwsg,
    fam: &HashFamily,
    cfg: &ShadowConfig,
    tol: &Tolerances,
) -> Result<ExactSuccessReport> {
    if cfg.backend != ShadowBackend::Exact {
        return Err(Error::Validity(
            "success_prob_exact requires the exact backend".into(),
        ));
    }
    let n = inst.n_keys();
    let fam_size = fam.size();
    let mut success = 0.0;
    let mut prob_key_listed_in_good = 0.0;
    let mut per_key = Vec::with_capacity(n);
    for k in 0..n as Key {
        let est = shadow_estimate(inst, k, cfg, 0);
        let list = build_list(&est, cfg, tol);
        let good = inst.good_set(k, 2.0, tol)?;
        let high: BTreeSet<Key> = (0..n as Key)
            .filter(|&kp| inst.accept_prob(kp, k) >= 1.0 - cfg.epsilon - tol.exact)
            .collect();
        let sandwich_ok = high.is_subset(&list.0) && list.0.is_subset(&good);
        let mut hits = 0u64;
        for h in fam.enumerate() {
            if extract(&h, h.eval(k), &list) == Some(k) {
                hits += 1;
            }
        }
        let hash_success = hits as f64 / fam_size as f64;
        success += inst.key_prob(k) * hash_success;
        if list.0.contains(&k) && list.0.is_subset(&good) {
            prob_key_listed_in_good += inst.key_prob(k);
        }
        per_key.push(KeyExtraction {
            key: k,
            list_size: list.0.len(),
            good_size: good.len(),
            sandwich_ok,
            pairwise_bound: 1.0 - (good.len().saturating_sub(1)) as f64 / fam.range_size() as f64,
            hash_success,
        });
    }
    Ok(ExactSuccessReport {
        success,
        prob_key_listed_in_good,
        per_key,
        family_size: fam_size,
        range_size: fam.range_size(),
    })
}

/// The extracting POVM on reveal registers, block diagonal over the
/// classical `(h, y)` contents: within a block, the pretty-good measurement
/// over `{φ_k^{⊗t}}` keeps outcome `κ` when `h(κ) = y` and folds everything
/// else into the reject outcome.
#[derive(Clone, Debug)]
pub struct ExtractorPovm {
    fam: HashFamily,
    t: u32,
    lambda: u32,
    base: Povm,
}

/// Outcome order used everywhere: keys ascending, then reject.
pub fn outcome_order(lambda: u32) -> Vec<Outcome> {
    let mut v: Vec<Outcome> = (0..(1u32 << lambda)).map(Outcome::Key).collect();
    v.push(Outcome::Reject);
    v
}

pub fn build_extractor_povm(
    inst: &IvOwsg,
    fam: &HashFamily,
    t: u32,
    tol: &Tolerances,
) -> Result<ExtractorPovm> {
    if fam.lambda() != inst.lambda() {
        return Err(Error::Validity(format!(
            "family lambda {} does not match instance lambda {}",
            fam.lambda(),
            inst.lambda()
        )));
    }
    let n = inst.n_keys();
    let states: Vec<_> = (0..n as Key)
        .map(|k| inst.phi_tensor(k, t, tol))
        .collect::<Result<_>>()?;
    let base = pgm(&states, inst.key_probs(), tol)?;
    Ok(ExtractorPovm {
        fam: *fam,
        t,
        lambda: inst.lambda(),
        base,
    })
}

impl ExtractorPovm {
    pub fn base(&self) -> &Povm {
        &self.base
    }

    pub fn family(&self) -> &HashFamily {
        &self.fam
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn n_outcomes(&self) -> usize {
        (1usize << self.lambda) + 1
    }

    pub fn state_dim(&self) -> usize {
        self.base.dim()
    }

    /// POVM elements of the `(h, y)` block in [`outcome_order`].
    pub fn block_elements(&self, h: &HashFn, y: u32) -> Vec<ComplexMatrix> {
        let n = 1usize << self.lambda;
        let d = self.base.dim();
        let mut out = Vec::with_capacity(n + 1);
        let mut reject = self
            .base
            .element_for(Outcome::Reject)
            .expect("pgm always carries a reject element")
            .clone();
        for k in 0..n as Key {
            let m = self
                .base
                .element_for(Outcome::Key(k))
                .expect("pgm covers all keys")
                .clone();
            if h.eval(k) == y {
                out.push(m);
            } else {
                reject = reject.add(&m);
                out.push(ComplexMatrix::zeros(d, d));
            }
        }
        out.push(reject);
        out
    }

    pub fn block_povm(&self, h: &HashFn, y: u32, tol: &Tolerances) -> Result<Povm> {
        Povm::new(outcome_order(self.lambda), self.block_elements(h, y), tol)
    }

    /// Materializes the full POVM on (hash, digest, state) registers.
    /// Feasible only at small sizes; the blockwise paths avoid it.
    pub fn to_full_povm(&self, tol: &Tolerances) -> Result<Povm> {
        let fam_size = self.fam.size() as usize;
        let range = self.fam.range_size() as usize;
        let d = (fam_size * range * self.base.dim()) as u128;
        tol.check_entries(
            "full extractor POVM",
            d * d * (self.n_outcomes() as u128),
        )?;
        let d = d as usize;
        let mut elements = vec![ComplexMatrix::zeros(d, d); self.n_outcomes()];
        for (h_idx, h) in self.fam.enumerate().enumerate() {
            for y in 0..range as u32 {
                let offset = (h_idx * range + y as usize) * self.base.dim();
                for (slot, el) in self.block_elements(&h, y).into_iter().enumerate() {
                    let mut acc = elements[slot].clone();
                    acc = ComplexMatrix::from_fn(d, d, |i, j| {
                        let in_block = i >= offset
                            && i < offset + self.base.dim()
                            && j >= offset
                            && j < offset + self.base.dim();
                        if in_block {
                            acc.get(i, j) + el.get(i - offset, j - offset)
                        } else {
                            acc.get(i, j)
                        }
                    });
                    elements[slot] = acc;
                }
            }
        }
        Povm::new(outcome_order(self.lambda), elements, tol)
    }

    /// The summed diagonal of the extraction outcomes over the commitment
    /// superposition: `Σ_k Σ_h Pr[k]/|H| · ⟨block| Π^{(k)} |block⟩`,
    /// enumerated blockwise.
    pub fn summary_overlap(&self, inst: &IvOwsg, tol: &Tolerances) -> Result<f64> {
        let fam_size = self.fam.size() as f64;
        let mut acc = 0.0;
        for k in 0..inst.n_keys() as Key {
            let phi_t = inst.phi_tensor(k, self.t, tol)?;
            for h in self.fam.enumerate() {
                let y = h.eval(k);
                let m = &self.block_elements(&h, y)[k as usize];
                acc += inst.key_prob(k) / fam_size * m.mul(phi_t.mat()).trace().re;
            }
        }
        Ok(acc)
    }
}

/// Shift applied to the reveal payload by the dilated extractor: outcome
/// `α` is a key, XORed into key-range payloads, while the reject outcome
/// swaps the cleared payload with the spare level. An involution either way.
pub fn reveal_shift(lambda: u32, z_outcome: usize, payload: usize) -> usize {
    let n = 1usize << lambda;
    if z_outcome < n {
        if payload < n {
            payload ^ z_outcome
        } else {
            payload
        }
    } else if payload == 0 {
        n
    } else if payload == n {
        0
    } else {
        payload
    }
}

/// The shift as an explicit permutation matrix on (outcome ⊗ payload).
pub fn reveal_shift_matrix(lambda: u32, tol: &Tolerances) -> Result<ComplexMatrix> {
    let n = (1usize << lambda) + 1;
    let dim = n * n;
    tol.check_entries("payload shift matrix", (dim as u128) * (dim as u128))?;
    Ok(ComplexMatrix::from_fn(dim, dim, |row, col| {
        let (z, r3) = (col / n, col % n);
        let target = reveal_shift(lambda, z, r3) + z * n;
        if row == target {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Two-route overlap of the commitments under the dilated extractor.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OverlapReport {
    /// Direct POVM-diagonal sum.
    pub povm_sum: f64,
    /// Blockwise route through the dilation and the payload shift.
    pub naimark: f64,
    /// Same quantity through dense full-register vectors, when it fits.
    pub dense: Option<f64>,
    pub dense_used: bool,
    pub agreement: f64,
    pub agree_ok: bool,
    /// Worst per-block deviation of the dilation from unitarity.
    pub unitary_error: f64,
}

/// Computes `⟨ψ₁|⟨0| V†·SHIFT·V |ψ₀⟩|0⟩` with `V` the dilation of the
/// extracting POVM, and checks it against the POVM-diagonal sum. Falls back
/// from the dense full-register route to the blockwise one above the cap.
pub fn uhlmann_unitary_overlap(
    pair: &CommitmentPair,
    epovm: &ExtractorPovm,
    inst: &IvOwsg,
    tol: &Tolerances,
) -> Result<OverlapReport> {
    let povm_sum = epovm.summary_overlap(inst, tol)?;
    let (naimark, unitary_error) = blockwise_dilated_overlap(pair, epovm, tol)?;
    let dense = match dense_dilated_overlap(pair, epovm, tol) {
        Ok(v) => Some(v),
        Err(Error::DimensionCap { .. }) => None,
        Err(e) => return Err(e),
    };
    let agreement = (naimark - povm_sum).abs();
    Ok(OverlapReport {
        povm_sum,
        naimark,
        dense,
        dense_used: dense.is_some(),
        agreement,
        agree_ok: agreement <= tol.two_path,
        unitary_error,
    })
}

/// Per-(key, hash) evaluation: dilate the `(h, h(k))` block POVM, apply the
/// dilation to both commitment blocks, route the ancilla through the payload
/// shift and contract. Exact for any family size.
fn blockwise_dilated_overlap(
    pair: &CommitmentPair,
    epovm: &ExtractorPovm,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let fam = epovm.family();
    let n_out = epovm.n_outcomes();
    let d_state = epovm.state_dim();
    let lambda = epovm.lambda();
    let q_env = pair.d_env.pow(pair.params.t);
    let mut total = Complex64::new(0.0, 0.0);
    let mut worst_unitary = 0.0f64;

    for (label0, v0) in pair.psi0.blocks() {
        let k = label0[0] as Key;
        let h_idx = label0[1] as u64;
        let y = label0[3] as u32;
        let mut label1 = label0.clone();
        label1[4] = k as usize;
        let v1 = pair
            .psi1
            .blocks()
            .get(&label1)
            .ok_or_else(|| Error::Validity("commitment pair blocks out of sync".into()))?;
        let h = fam.member_at(h_idx)?;
        let block = epovm.block_povm(&h, y, tol)?;
        let v = naimark_dilate(&block, tol)?;
        worst_unitary = worst_unitary.max(v.unitary_error());

        // Contract the environment: each env slice is a state-register
        // vector the dilation acts on.
        for e in 0..q_env {
            let slice0 = &v0[e * d_state..(e + 1) * d_state];
            let slice1 = &v1[e * d_state..(e + 1) * d_state];
            // Embed (state ⊗ ancilla-0), apply V: index (i·n_out + α).
            let lift = |slice: &[Complex64]| -> Vec<Complex64> {
                let mut input = vec![Complex64::new(0.0, 0.0); d_state * n_out];
                for (i, &amp) in slice.iter().enumerate() {
                    input[i * n_out] = amp;
                }
                v.apply(&input)
            };
            let y0 = lift(slice0);
            let y1 = lift(slice1);
            // ⟨y1, payload=k | SHIFT | y0, payload=0⟩: the shift moves the
            // cleared payload to `reveal_shift(α, 0)`, so outcome α
            // contributes exactly when that lands on k.
            for alpha in 0..n_out {
                if reveal_shift(lambda, alpha, 0) != k as usize {
                    continue;
                }
                for i in 0..d_state {
                    let idx = i * n_out + alpha;
                    total += y1[idx].conj() * y0[idx];
                }
            }
        }
    }
    Ok((total.re, worst_unitary))
}

/// Literal dense route: full commitment vectors with an explicit ancilla,
/// one global dilation matrix and the explicit shift permutation.
fn dense_dilated_overlap(
    pair: &CommitmentPair,
    epovm: &ExtractorPovm,
    tol: &Tolerances,
) -> Result<f64> {
    let full = epovm.to_full_povm(tol)?;
    let v = naimark_dilate(&full, tol)?;
    let n_out = epovm.n_outcomes();
    let d_r1r2 = full.dim();
    let fam_size = epovm.family().size() as usize;
    let range = epovm.family().range_size() as usize;
    let d_state = epovm.state_dim();
    let payload_dim = pair.rev_key_dim();
    let lambda = epovm.lambda();
    let q_env = pair.d_env.pow(pair.params.t);

    // Dense embedding per (com_key, com_hash, env-slice) sector; the kept
    // registers are classical labels or contracted slices, so the overlap
    // splits into per-sector inner products over (r1r2, payload, ancilla).
    let sector_dim = (d_r1r2 * payload_dim * n_out) as u128;
    tol.check_entries("dense dilated overlap sector", sector_dim * sector_dim)?;
    let sector_dim = sector_dim as usize;

    let mut total = Complex64::new(0.0, 0.0);
    for (label0, v0) in pair.psi0.blocks() {
        let k = label0[0];
        let h_idx = label0[1];
        let y = label0[3];
        let mut label1 = label0.clone();
        label1[4] = k;
        let v1 = pair
            .psi1
            .blocks()
            .get(&label1)
            .ok_or_else(|| Error::Validity("commitment pair blocks out of sync".into()))?;

        for e in 0..q_env {
            let build = |slice: &[Complex64], payload: usize| -> Vec<Complex64> {
                let mut x = vec![Complex64::new(0.0, 0.0); sector_dim];
                let r1_offset = (h_idx * range + y) * d_state;
                for (i, &amp) in slice.iter().enumerate() {
                    // (r1r2, payload, ancilla=0), ancilla fastest.
                    let idx = ((r1_offset + i) * payload_dim + payload) * n_out;
                    x[idx] = amp;
                }
                x
            };
            let apply_v = |x: &[Complex64]| -> Vec<Complex64> {
                // V acts on (r1r2, ancilla); payload is a spectator index.
                let mut out = vec![Complex64::new(0.0, 0.0); sector_dim];
                for payload in 0..payload_dim {
                    let mut slice = vec![Complex64::new(0.0, 0.0); d_r1r2 * n_out];
                    for i in 0..d_r1r2 {
                        for a in 0..n_out {
                            slice[i * n_out + a] = x[(i * payload_dim + payload) * n_out + a];
                        }
                    }
                    let mapped = v.apply(&slice);
                    for i in 0..d_r1r2 {
                        for a in 0..n_out {
                            out[(i * payload_dim + payload) * n_out + a] = mapped[i * n_out + a];
                        }
                    }
                }
                out
            };
            let shift = |x: &[Complex64]| -> Vec<Complex64> {
                let mut out = vec![Complex64::new(0.0, 0.0); sector_dim];
                for i in 0..d_r1r2 {
                    for payload in 0..payload_dim {
                        for a in 0..n_out {
                            let tgt = reveal_shift(lambda, a, payload);
                            out[(i * payload_dim + tgt) * n_out + a] +=
                                x[(i * payload_dim + payload) * n_out + a];
                        }
                    }
                }
                out
            };
            let y0 = shift(&apply_v(&build(&v0[e * d_state..(e + 1) * d_state], 0)));
            let y1 = apply_v(&build(&v1[e * d_state..(e + 1) * d_state], k));
            total += crate::linalg::inner(&y1, &y0);
        }
    }
    Ok(total.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commit::{build_pair, CommitmentParams};
    use crate::owsg::{ToyInstance, ToyKind};
    use crate::svsi::SvsiOwsg;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn bb84(lambda: u32) -> IvOwsg {
        ToyInstance::new(ToyKind::Bb84Pure, lambda)
            .unwrap()
            .build(&tols())
            .unwrap()
    }

    #[test]
    fn exact_estimates_reproduce_acceptance_table() {
        let inst = bb84(2);
        let cfg = ShadowConfig::exact(2);
        let est = shadow_estimate(&inst, 0, &cfg, 0);
        assert_eq!(est.per_key.len(), 4);
        assert!((est.per_key[0] - 1.0).abs() < 1e-12);
        assert!((est.per_key[1] - 0.5).abs() < 1e-12);
        assert!((est.per_key[2] - 0.5).abs() < 1e-12);
        assert!((est.per_key[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_instance_estimates_are_all_one() {
        let tol = tols();
        let inst = ToyInstance::new(ToyKind::Constant, 2)
            .unwrap()
            .build(&tol)
            .unwrap();
        let cfg = ShadowConfig::exact(2);
        let est = shadow_estimate(&inst, 1, &cfg, 0);
        assert!(est.per_key.iter().all(|&b| b == 1.0));
        let list = build_list(&est, &cfg, &tol);
        assert_eq!(list.0.len(), 4);
    }

    #[test]
    fn hoeffding_count_matches_formula() {
        let cfg = ShadowConfig::sampled(2);
        // ln(2·4/(1/4)) / (2·(1/8)²) = 32·ln 32.
        let want = (32f64 * 32f64.ln()).ceil() as u64;
        assert_eq!(cfg.t_samples, Some(want));
        assert_eq!(hoeffding_samples(2, 0.125, 0.25), want);
    }

    #[test]
    fn sampled_estimates_are_seed_deterministic_and_accurate() {
        let inst = bb84(2);
        let cfg = ShadowConfig::sampled(2);
        let a = shadow_estimate(&inst, 0, &cfg, 99);
        let b = shadow_estimate(&inst, 0, &cfg, 99);
        assert_eq!(a.per_key, b.per_key);
        // Modest Monte-Carlo check; the full failure-rate budget is covered
        // by the acceptance suite.
        let mut failures = 0u32;
        let runs = 200u64;
        for seed in 0..runs {
            let est = shadow_estimate(&inst, 0, &cfg, seed);
            let bad = est
                .per_key
                .iter()
                .enumerate()
                .any(|(kp, &bval)| (bval - inst.accept_prob(kp as Key, 0)).abs() > cfg.epsilon);
            if bad {
                failures += 1;
            }
        }
        assert!(
            (failures as f64 / runs as f64) <= cfg.omega + 0.05,
            "failure rate {failures}/{runs}"
        );
    }

    #[test]
    fn list_sandwich_under_exact_backend() {
        let tol = tols();
        let inst = bb84(2);
        let cfg = ShadowConfig::exact(2);
        for k in 0..4 {
            let est = shadow_estimate(&inst, k, &cfg, 0);
            let list = build_list(&est, &cfg, &tol);
            assert_eq!(list.0, BTreeSet::from([k]));
            let high: BTreeSet<Key> = (0..4)
                .filter(|&kp| inst.accept_prob(kp, k) >= 0.875)
                .collect();
            let good = inst.good_set(k, 2.0, &tol).unwrap();
            assert!(high.is_subset(&list.0));
            assert!(list.0.is_subset(&good));
        }
    }

    #[test]
    fn extraction_rules() {
        let tol = tols();
        let fam = HashFamily::new(2, 2).unwrap();
        let h = fam.member(1, 0).unwrap();
        let singleton = ExtractionList(BTreeSet::from([3]));
        assert_eq!(extract(&h, h.eval(3), &singleton), Some(3));
        assert_eq!(extract(&h, h.eval(3) ^ 1, &singleton), None);
        // Ambiguity returns nothing: pick a constant function so both listed
        // keys share the digest.
        let hc = fam.member(0, 0).unwrap();
        let two = ExtractionList(BTreeSet::from([1, 2]));
        assert_eq!(extract(&hc, 0, &two), None);
        drop(tol);
    }

    #[test]
    fn exact_success_is_one_on_conjugate_coding() {
        let tol = tols();
        let inst = bb84(2);
        let fam = HashFamily::new(2, 2).unwrap();
        let cfg = ShadowConfig::exact(2);
        let rep = success_prob_exact(&inst, &fam, &cfg, &tol).unwrap();
        assert!((rep.success - 1.0).abs() < 1e-12);
        assert!((rep.prob_key_listed_in_good - 1.0).abs() < 1e-12);
        assert!(rep.per_key.iter().all(|p| p.sandwich_ok));
    }

    #[test]
    fn exact_success_on_constant_instance_meets_pairwise_bound() {
        let tol = tols();
        let inst = ToyInstance::new(ToyKind::Constant, 2)
            .unwrap()
            .build(&tol)
            .unwrap();
        let fam = HashFamily::new(2, 4).unwrap();
        let cfg = ShadowConfig::exact(2);
        let rep = success_prob_exact(&inst, &fam, &cfg, &tol).unwrap();
        let bound = 1.0 - (4f64 - 1.0) / 16.0;
        assert!(
            rep.success >= bound - 1e-12,
            "success {} below {bound}",
            rep.success
        );
        for p in &rep.per_key {
            assert_eq!(p.list_size, 4);
            assert!((p.pairwise_bound - bound).abs() < 1e-12);
        }
    }

    #[test]
    fn success_meets_half_whenever_good_sets_cover_half_range() {
        let tol = tols();
        let cfg = ShadowConfig::exact(2);
        for (inst, fam) in [
            (bb84(2), HashFamily::new(2, 1).unwrap()),
            (bb84(2), HashFamily::new(2, 3).unwrap()),
            (
                ToyInstance::new(ToyKind::Constant, 2)
                    .unwrap()
                    .build(&tol)
                    .unwrap(),
                HashFamily::new(2, 3).unwrap(),
            ),
        ] {
            let rep = success_prob_exact(&inst, &fam, &cfg, &tol).unwrap();
            let all_covered = rep
                .per_key
                .iter()
                .all(|p| 2 * p.good_size <= fam.range_size() as usize);
            if all_covered {
                assert!(rep.success >= 0.5 - 1e-12, "success {}", rep.success);
            }
        }
    }

    #[test]
    fn block_povms_are_complete() {
        let tol = tols();
        let inst = bb84(2);
        let fam = HashFamily::new(2, 2).unwrap();
        let epovm = build_extractor_povm(&inst, &fam, 1, &tol).unwrap();
        for h in fam.enumerate().take(5) {
            for y in 0..4 {
                let povm = epovm.block_povm(&h, y, &tol).unwrap();
                assert_eq!(povm.n_outcomes(), 5);
            }
        }
    }

    #[test]
    fn orthogonal_instance_extracts_projectively() {
        let tol = tols();
        let inst = SvsiOwsg::orthogonal(2, &tol).unwrap().to_ivowsg(&tol).unwrap();
        let fam = HashFamily::new(2, 3).unwrap();
        let epovm = build_extractor_povm(&inst, &fam, 1, &tol).unwrap();
        let overlap = epovm.summary_overlap(&inst, &tol).unwrap();
        assert!((overlap - 1.0).abs() < 1e-10);
        let params = CommitmentParams::new(2, 1.0, 1, 2.0, None).unwrap();
        let pair = build_pair(&inst, &params, &tol).unwrap();
        let rep = uhlmann_unitary_overlap(&pair, &epovm, &inst, &tol).unwrap();
        assert!(rep.agree_ok, "agreement {}", rep.agreement);
        assert!((rep.naimark - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_routes_agree_at_smallest_size() {
        let tol = tols();
        let inst = bb84(1);
        let params = CommitmentParams::new(1, 1.0, 1, 2.0, Some(1)).unwrap();
        let fam = params.family();
        let pair = build_pair(&inst, &params, &tol).unwrap();
        let epovm = build_extractor_povm(&inst, &fam, 1, &tol).unwrap();
        let rep = uhlmann_unitary_overlap(&pair, &epovm, &inst, &tol).unwrap();
        assert!(rep.dense_used);
        let dense = rep.dense.unwrap();
        assert!(
            (rep.naimark - rep.povm_sum).abs() < 1e-9,
            "blockwise {} vs povm {}",
            rep.naimark,
            rep.povm_sum
        );
        assert!(
            (dense - rep.povm_sum).abs() < 1e-9,
            "dense {dense} vs povm {}",
            rep.povm_sum
        );
        assert!(rep.unitary_error < 1e-10);
    }

    #[test]
    fn copies_never_hurt_the_summary_overlap() {
        let tol = tols();
        let inst = bb84(2);
        let fam = HashFamily::new(2, 2).unwrap();
        let one = build_extractor_povm(&inst, &fam, 1, &tol)
            .unwrap()
            .summary_overlap(&inst, &tol)
            .unwrap();
        let two = build_extractor_povm(&inst, &fam, 2, &tol)
            .unwrap()
            .summary_overlap(&inst, &tol)
            .unwrap();
        assert!(two >= one - 1e-12, "t=2 gave {two}, t=1 gave {one}");
    }

    #[test]
    fn payload_shift_is_an_involutive_permutation() {
        let tol = tols();
        for lambda in [1u32, 2] {
            let m = reveal_shift_matrix(lambda, &tol).unwrap();
            // Permutation: exactly one unit entry per row and column.
            for i in 0..m.rows() {
                let row: f64 = (0..m.cols()).map(|j| m.get(i, j).norm()).sum();
                let col: f64 = (0..m.rows()).map(|j| m.get(j, i).norm()).sum();
                assert!((row - 1.0).abs() < 1e-15 && (col - 1.0).abs() < 1e-15);
            }
            // Involution.
            let sq = m.mul(&m);
            assert!(
                sq.sub(&ComplexMatrix::identity(m.rows())).max_abs_entry() < 1e-15
            );
        }
    }

    #[test]
    fn reject_branch_never_lands_on_a_key() {
        for lambda in [1u32, 2, 3] {
            let n = 1usize << lambda;
            assert_eq!(reveal_shift(lambda, n, 0), n);
            for alpha in 0..n {
                assert_eq!(reveal_shift(lambda, alpha, 0), alpha);
            }
        }
    }
}
