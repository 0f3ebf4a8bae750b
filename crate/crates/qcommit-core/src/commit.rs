//! The two commitment states and their information-theoretic hiding metrics.
//!
//! Both states superpose every (key, hash-function) pair. The committed bit
//! only shows up in the reveal payload register: the zero commitment keeps it
//! cleared while the one commitment writes the key there. Register layout,
//! first register most significant:
//!
//! `com_key, com_hash | rev_hash, rev_digest | com_env | rev_state | rev_key`
//!
//! The commitment side is `{com_key, com_hash, com_env}`; everything else is
//! handed over on reveal. `rev_key` carries one spare level above the key
//! range so that the extractor's reject branch can shift into it without
//! colliding with the all-zero key.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::hashfam::HashFamily;
use crate::labeled::{LabeledLayout, LabeledState, RegKind};
use crate::owsg::{IvOwsg, Key};
use crate::{density, Error, Result, Tolerances};

pub const COM_KEY: &str = "com_key";
pub const COM_HASH: &str = "com_hash";
pub const REV_HASH: &str = "rev_hash";
pub const REV_DIGEST: &str = "rev_digest";
pub const COM_ENV: &str = "com_env";
pub const REV_STATE: &str = "rev_state";
pub const REV_KEY: &str = "rev_key";

/// The registers the receiver keeps.
pub const COMMITMENT_REGISTERS: [&str; 3] = [COM_KEY, COM_HASH, COM_ENV];
/// The registers handed over at reveal time.
pub const REVEAL_REGISTERS: [&str; 4] = [REV_HASH, REV_DIGEST, REV_STATE, REV_KEY];

/// Scheme parameters: the security-rate constant, copy count, good-set
/// threshold and hash range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommitmentParams {
    pub lambda: u32,
    /// The rate constant; the scheme targets `δ ≥ (0.5 + d_const)·λ`.
    pub d_const: f64,
    /// Copies of the generated state carried by each commitment.
    pub t: u32,
    /// Good-set threshold parameter.
    pub p: f64,
    /// Hash output bits; the range `|Y| = 2^m` should cover `2·2^r`.
    pub m: u32,
    /// `r = (0.5 + d_const/2)·λ`.
    pub r: f64,
}

impl CommitmentParams {
    /// Derives `r` from the rate constant and, unless overridden, picks the
    /// smallest hash range with `|Y| = 2^m ≥ 2·2^r`.
    pub fn new(lambda: u32, d_const: f64, t: u32, p: f64, m_override: Option<u32>) -> Result<Self> {
        if d_const <= 0.0 {
            return Err(Error::Validity(format!("rate constant must be positive, got {d_const}")));
        }
        if p <= 1.0 {
            return Err(Error::Validity(format!("good-set parameter needs p > 1, got {p}")));
        }
        let r = (0.5 + d_const / 2.0) * lambda as f64;
        let m = m_override.unwrap_or(r.ceil() as u32 + 1);
        // Delegates the lambda/m range checks to the family constructor.
        HashFamily::new(lambda, m)?;
        Ok(Self { lambda, d_const, t, p, m, r })
    }

    pub fn family(&self) -> HashFamily {
        HashFamily::new(self.lambda, self.m).expect("validated at construction")
    }

    pub fn floor_two_r(&self) -> f64 {
        2f64.powf(self.r).floor()
    }

    /// Whether the chosen range satisfies `|Y| ≥ 2·2^r`.
    pub fn range_covers_two_r(&self) -> bool {
        2f64.powi(self.m as i32) >= 2.0 * 2f64.powf(self.r)
    }
}

/// The two commitment states over a shared layout.
#[derive(Clone, Debug)]
pub struct CommitmentPair {
    pub params: CommitmentParams,
    pub psi0: LabeledState,
    pub psi1: LabeledState,
    pub d_out: usize,
    pub d_env: usize,
}

impl CommitmentPair {
    pub fn block_count(&self) -> usize {
        self.psi0.block_count()
    }

    pub fn n_keys(&self) -> usize {
        1usize << self.params.lambda
    }

    pub fn family_size(&self) -> u64 {
        self.params.family().size()
    }

    /// Dimension of the reveal payload register including the spare level.
    pub fn rev_key_dim(&self) -> usize {
        (1usize << self.params.lambda) + 1
    }
}

/// Builds the pair: amplitude `√(Pr[k]/|H|)` on every (k, h) block, the
/// digest register holding `h(k)`, and the payload register cleared (bit 0)
/// or carrying the key (bit 1).
pub fn build_pair(inst: &IvOwsg, params: &CommitmentParams, tol: &Tolerances) -> Result<CommitmentPair> {
    if inst.lambda() != params.lambda {
        return Err(Error::Validity(format!(
            "instance lambda {} does not match params lambda {}",
            inst.lambda(),
            params.lambda
        )));
    }
    let fam = params.family();
    let n_keys = inst.n_keys();
    let fam_size = fam.size() as usize;
    let range = fam.range_size() as usize;
    let t = params.t as usize;
    let d_out = inst.d_out();
    let d_env = inst.d_env();
    let q_env: usize = d_env.pow(params.t);
    let q_out: usize = d_out.pow(params.t);
    let qdim = q_env as u128 * q_out as u128;

    let positive_keys: Vec<Key> = (0..n_keys as Key)
        .filter(|&k| inst.key_prob(k) > 0.0)
        .collect();
    let total_amplitudes = (positive_keys.len() as u128) * (fam_size as u128) * qdim;
    tol.check_entries("commitment pair amplitudes", total_amplitudes)?;

    let layout = || -> Result<LabeledLayout> {
        LabeledLayout::new(vec![
            (COM_KEY, n_keys, RegKind::Classical),
            (COM_HASH, fam_size, RegKind::Classical),
            (REV_HASH, fam_size, RegKind::Classical),
            (REV_DIGEST, range, RegKind::Classical),
            (COM_ENV, q_env, RegKind::Quantum),
            (REV_STATE, q_out, RegKind::Quantum),
            (REV_KEY, n_keys + 1, RegKind::Classical),
        ])
    };

    // |Φ_k^{⊗t}⟩ reshaped to environment-major order (com_env, rev_state).
    let copies_vector = |k: Key| -> Vec<Complex64> {
        let x = inst.purification_amplitudes(k);
        let mut v = vec![Complex64::new(0.0, 0.0); q_env * q_out];
        for (slot, amp) in v.iter_mut().enumerate() {
            let env_part = slot / q_out;
            let out_part = slot % q_out;
            let mut a = Complex64::new(1.0, 0.0);
            for i in 0..t {
                let shift_env = d_env.pow((t - 1 - i) as u32);
                let shift_out = d_out.pow((t - 1 - i) as u32);
                let e_i = (env_part / shift_env) % d_env;
                let a_i = (out_part / shift_out) % d_out;
                a *= x[a_i * d_env + e_i];
            }
            *amp = a;
        }
        v
    };

    let mut blocks0: BTreeMap<Vec<usize>, Vec<Complex64>> = BTreeMap::new();
    let mut blocks1: BTreeMap<Vec<usize>, Vec<Complex64>> = BTreeMap::new();
    for &k in &positive_keys {
        let weight = (inst.key_prob(k) / fam_size as f64).sqrt();
        let base = copies_vector(k);
        let scaled: Vec<Complex64> = base.iter().map(|a| a * Complex64::new(weight, 0.0)).collect();
        for (h_idx, h) in fam.enumerate().enumerate() {
            let y = h.eval(k) as usize;
            blocks0.insert(
                vec![k as usize, h_idx, h_idx, y, 0],
                scaled.clone(),
            );
            blocks1.insert(
                vec![k as usize, h_idx, h_idx, y, k as usize],
                scaled.clone(),
            );
        }
    }

    let psi0 = LabeledState::new(layout()?, blocks0, tol)?;
    let psi1 = LabeledState::new(layout()?, blocks1, tol)?;
    Ok(CommitmentPair {
        params: *params,
        psi0,
        psi1,
        d_out,
        d_env,
    })
}

/// Trace distance and fidelity of the two commitment-side reductions,
/// together with the Fuchs–van de Graaf margins they must satisfy.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HidingMetrics {
    pub td_c: f64,
    pub fid_c: f64,
    /// `1 − √F ≤ TD` margin (nonnegative when the bound holds).
    pub fvdg_lower_margin: f64,
    /// `TD ≤ √(1−F)` margin.
    pub fvdg_upper_margin: f64,
    pub fvdg_ok: bool,
    pub c_dim: usize,
}

pub fn hiding_metrics(pair: &CommitmentPair, tol: &Tolerances) -> Result<HidingMetrics> {
    let rho0 = pair.psi0.reduce(&COMMITMENT_REGISTERS, tol)?;
    let rho1 = pair.psi1.reduce(&COMMITMENT_REGISTERS, tol)?;
    let fid_c = density::fidelity(&rho0, &rho1, tol)?;
    let td_c = density::trace_distance(&rho0, &rho1)?;
    let lower = 1.0 - fid_c.sqrt();
    let upper = (1.0 - fid_c).max(0.0).sqrt();
    let fvdg_lower_margin = td_c - lower;
    let fvdg_upper_margin = upper - td_c;
    Ok(HidingMetrics {
        td_c,
        fid_c,
        fvdg_lower_margin,
        fvdg_upper_margin,
        fvdg_ok: fvdg_lower_margin >= -tol.fvdg && fvdg_upper_margin >= -tol.fvdg,
        c_dim: rho0.dim(),
    })
}

/// Consequences of an extraction overlap `s` achieved by acting on the
/// reveal side: the fidelity of the commitment reductions is at least `s²`
/// and their trace distance at most `√(1−s²)`; `s ≥ ½` recovers the
/// `√(3/4)` ceiling.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HidingVerdict {
    pub extractor_overlap: f64,
    pub fid_floor: f64,
    pub fid_ok: bool,
    pub td_ceiling: f64,
    pub td_ok: bool,
    pub half_threshold_met: bool,
    pub paper_ceiling: f64,
    pub paper_ceiling_ok: bool,
}

pub fn hiding_threshold_check(metrics: &HidingMetrics, s: f64, tol: &Tolerances) -> HidingVerdict {
    let s = s.clamp(0.0, 1.0);
    let fid_floor = s * s;
    let td_ceiling = (1.0 - s * s).max(0.0).sqrt();
    let paper_ceiling = 0.75f64.sqrt();
    HidingVerdict {
        extractor_overlap: s,
        fid_floor,
        fid_ok: metrics.fid_c >= fid_floor - tol.two_path,
        td_ceiling,
        td_ok: metrics.td_c <= td_ceiling + tol.two_path,
        half_threshold_met: s >= 0.5,
        paper_ceiling,
        paper_ceiling_ok: metrics.td_c <= paper_ceiling + tol.two_path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::owsg::{ToyInstance, ToyKind};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn bb84_pair(lambda: u32, t: u32, m: u32) -> CommitmentPair {
        let tol = tols();
        let inst = ToyInstance::new(ToyKind::Bb84Pure, lambda)
            .unwrap()
            .build(&tol)
            .unwrap();
        let params = CommitmentParams::new(lambda, 1.0, t, 2.0, Some(m)).unwrap();
        build_pair(&inst, &params, &tol).unwrap()
    }

    #[test]
    fn default_range_is_smallest_cover() {
        let p = CommitmentParams::new(2, 1.0, 1, 2.0, None).unwrap();
        assert_eq!(p.m, 3);
        assert!((p.r - 2.0).abs() < 1e-15);
        assert!(p.range_covers_two_r());
        assert_eq!(p.floor_two_r(), 4.0);
    }

    #[test]
    fn degenerate_copyless_pair_is_classical() {
        let tol = tols();
        let inst = ToyInstance::new(ToyKind::Bb84Pure, 1)
            .unwrap()
            .build(&tol)
            .unwrap();
        let params = CommitmentParams::new(1, 1.0, 0, 2.0, Some(1)).unwrap();
        let pair = build_pair(&inst, &params, &tol).unwrap();
        // t = 0: every block amplitude vector is the trivial scalar.
        assert!(pair.psi0.blocks().values().all(|v| v.len() == 1));
        // The two states differ only in the reveal payload label.
        for (l0, l1) in pair.psi0.blocks().keys().zip(pair.psi1.blocks().keys()) {
            assert_eq!(&l0[..4], &l1[..4]);
            assert_eq!(l0[4], 0);
            assert_eq!(l1[4], l1[0]);
        }
    }

    #[test]
    fn block_count_and_norm_bb84() {
        let pair = bb84_pair(2, 1, 2);
        // 4 keys × |H| = 2^{2·2} = 16 members.
        assert_eq!(pair.block_count(), 64);
        assert_eq!(pair.family_size(), 16);
        assert!((pair.psi0.norm() - 1.0).abs() < 1e-12);
        assert!((pair.psi1.norm() - 1.0).abs() < 1e-12);
        // Each block carries the 4-dimensional generated state.
        assert!(pair.psi0.blocks().values().all(|v| v.len() == 4));
    }

    #[test]
    fn constant_instance_keeps_cross_key_coherence_only_without_payload() {
        let tol = tols();
        let inst = ToyInstance::new(ToyKind::Constant, 1)
            .unwrap()
            .build(&tol)
            .unwrap();
        let params = CommitmentParams::new(1, 1.0, 1, 2.0, Some(1)).unwrap();
        let pair = build_pair(&inst, &params, &tol).unwrap();
        let rho0 = pair.psi0.reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
        let rho1 = pair.psi1.reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
        // Identical generated states: the zero commitment keeps coherence
        // between keys hashing alike; the one commitment reveals the key in
        // the payload and loses all of it.
        let fam = params.family();
        let c2 = 1usize; // trivial environment
        let mut found_cross = false;
        for (h_idx, h) in fam.enumerate().enumerate() {
            let i = (0 * fam.size() as usize + h_idx) * c2;
            let j = (1 * fam.size() as usize + h_idx) * c2;
            let z0 = rho0.mat().get(i, j).norm();
            let z1 = rho1.mat().get(i, j).norm();
            assert!(z1 < 1e-14, "payload-carrying state must be key-diagonal");
            if h.eval(0) == h.eval(1) {
                assert!(z0 > 1e-3, "matching digests keep coherence");
                found_cross = true;
            } else {
                assert!(z0 < 1e-14, "differing digests decohere");
            }
        }
        assert!(found_cross);
    }

    #[test]
    fn blockwise_reduction_matches_dense_oracle_at_smallest_size() {
        let tol = tols();
        let pair = bb84_pair(1, 1, 1);
        for state in [&pair.psi0, &pair.psi1] {
            let fast = state.reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
            let slow = state.dense_reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
            assert!(fast.mat().sub(slow.mat()).max_abs_entry() < 1e-12);
        }
    }

    #[test]
    fn payload_reduction_structure_bb84() {
        // The one commitment's commitment-side reduction is block diagonal
        // over keys; the zero commitment couples keys with equal digests.
        let tol = tols();
        let pair = bb84_pair(2, 1, 1);
        let rho0 = pair.psi0.reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
        let rho1 = pair.psi1.reduce(&COMMITMENT_REGISTERS, &tol).unwrap();
        let fam = pair.params.family();
        let fs = fam.size() as usize;
        let members: Vec<_> = fam.enumerate().collect();
        for k in 0..4usize {
            for kp in 0..4usize {
                for h in 0..fs {
                    for hp in 0..fs {
                        let i = k * fs + h;
                        let j = kp * fs + hp;
                        let v0 = rho0.mat().get(i, j).norm();
                        let v1 = rho1.mat().get(i, j).norm();
                        if k != kp && v1 > 1e-14 {
                            panic!("rho1 couples keys {k} and {kp}");
                        }
                        if h != hp && (v0 > 1e-14 || v1 > 1e-14) {
                            panic!("hash register must stay diagonal");
                        }
                        if k != kp
                            && h == hp
                            && members[h].eval(k as u32) != members[h].eval(kp as u32)
                            && v0 > 1e-14
                        {
                            panic!("rho0 couples keys {k},{kp} with differing digests");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn identical_payload_fixture_has_zero_distance() {
        let tol = tols();
        let pair = bb84_pair(2, 1, 1);
        let fixture = CommitmentPair {
            params: pair.params,
            psi0: pair.psi0.clone(),
            psi1: pair.psi0.clone(),
            d_out: pair.d_out,
            d_env: pair.d_env,
        };
        let metrics = hiding_metrics(&fixture, &tol).unwrap();
        assert!(metrics.td_c < 1e-10);
        assert!((metrics.fid_c - 1.0).abs() < 1e-10);
        assert!(metrics.fvdg_ok);
    }

    #[test]
    fn perfect_extraction_forces_identical_reductions() {
        let tol = tols();
        let pair = bb84_pair(2, 1, 1);
        let fixture = CommitmentPair {
            params: pair.params,
            psi0: pair.psi0.clone(),
            psi1: pair.psi0.clone(),
            d_out: pair.d_out,
            d_env: pair.d_env,
        };
        let metrics = hiding_metrics(&fixture, &tol).unwrap();
        let verdict = hiding_threshold_check(&metrics, 1.0, &tol);
        assert!(verdict.fid_ok && verdict.td_ok);
        assert!(verdict.td_ceiling < 1e-12);
    }

    #[test]
    fn fvdg_holds_on_real_pairs() {
        let tol = tols();
        for (lambda, t, m) in [(1, 1, 1), (2, 1, 1), (2, 1, 2), (1, 2, 2)] {
            let pair = bb84_pair(lambda, t, m);
            let metrics = hiding_metrics(&pair, &tol).unwrap();
            assert!(metrics.fvdg_ok, "({lambda},{t},{m}): {metrics:?}");
        }
    }
}
