//! Superpositions stored as classical label blocks with small dense quantum
//! amplitude vectors.
//!
//! A [`LabeledState`] keeps one amplitude block per classical label tuple.
//! Reduced density matrices are assembled blockwise: cross terms between two
//! blocks survive only where the traced-out classical labels coincide, which
//! is what makes the commitment states tractable far beyond the dense cap.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::linalg::ComplexMatrix;
use crate::registers::RegisterLayout;
use crate::{DensityMatrix, Error, Result, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegKind {
    Classical,
    Quantum,
}

#[derive(Clone, Debug)]
pub struct LabeledRegister {
    pub name: String,
    pub dim: usize,
    pub kind: RegKind,
}

/// A register layout partitioned into classical and quantum registers.
#[derive(Clone, Debug)]
pub struct LabeledLayout {
    regs: Vec<LabeledRegister>,
}

impl LabeledLayout {
    pub fn new<S: Into<String>>(regs: Vec<(S, usize, RegKind)>) -> Result<Self> {
        let regs: Vec<LabeledRegister> = regs
            .into_iter()
            .map(|(n, d, k)| LabeledRegister {
                name: n.into(),
                dim: d,
                kind: k,
            })
            .collect();
        // Reuse RegisterLayout validation for names and dims.
        RegisterLayout::new(regs.iter().map(|r| (r.name.clone(), r.dim)).collect())?;
        Ok(Self { regs })
    }

    pub fn regs(&self) -> &[LabeledRegister] {
        &self.regs
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::Layout(format!("unknown register {name}")))
    }

    pub fn classical_positions(&self) -> Vec<usize> {
        (0..self.regs.len())
            .filter(|&i| self.regs[i].kind == RegKind::Classical)
            .collect()
    }

    pub fn quantum_positions(&self) -> Vec<usize> {
        (0..self.regs.len())
            .filter(|&i| self.regs[i].kind == RegKind::Quantum)
            .collect()
    }

    /// Product of the quantum register dimensions: the block vector length.
    pub fn quantum_dim(&self) -> usize {
        self.regs
            .iter()
            .filter(|r| r.kind == RegKind::Quantum)
            .map(|r| r.dim)
            .product()
    }

    pub fn total_dim(&self) -> u128 {
        self.regs.iter().map(|r| r.dim as u128).product()
    }

    pub fn to_register_layout(&self) -> RegisterLayout {
        RegisterLayout::new(self.regs.iter().map(|r| (r.name.clone(), r.dim)).collect())
            .expect("validated at construction")
    }
}

/// Normalized superposition stored per classical label tuple.
#[derive(Clone, Debug)]
pub struct LabeledState {
    layout: LabeledLayout,
    /// Label tuples are ordered by the classical registers' layout positions.
    blocks: BTreeMap<Vec<usize>, Vec<Complex64>>,
}

impl LabeledState {
    pub fn new(
        layout: LabeledLayout,
        blocks: BTreeMap<Vec<usize>, Vec<Complex64>>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let class_pos = layout.classical_positions();
        let qdim = layout.quantum_dim();
        let mut norm_sq = 0.0;
        for (label, vec) in &blocks {
            if label.len() != class_pos.len() {
                return Err(Error::Layout(format!(
                    "label tuple length {} does not match {} classical registers",
                    label.len(),
                    class_pos.len()
                )));
            }
            for (c, &pos) in label.iter().zip(&class_pos) {
                if *c >= layout.regs[pos].dim {
                    return Err(Error::Layout(format!(
                        "label {c} out of range for register {}",
                        layout.regs[pos].name
                    )));
                }
            }
            if vec.len() != qdim {
                return Err(Error::DimensionMismatch(format!(
                    "block vector length {} does not match quantum dimension {qdim}",
                    vec.len()
                )));
            }
            if vec.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Validity("block vector has non-finite entries".into()));
            }
            norm_sq += vec.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let norm = norm_sq.sqrt();
        if (norm - 1.0).abs() > tol.norm {
            return Err(Error::Validity(format!("labeled state has norm {norm}")));
        }
        Ok(Self { layout, blocks })
    }

    pub fn layout(&self) -> &LabeledLayout {
        &self.layout
    }

    pub fn blocks(&self) -> &BTreeMap<Vec<usize>, Vec<Complex64>> {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .values()
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// ⟨self|other⟩ over matching label tuples.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (label, v) in &self.blocks {
            if let Some(w) = other.blocks.get(label) {
                acc += crate::linalg::inner(v, w);
            }
        }
        acc
    }

    /// Reduced density matrix on `keep`, assembled blockwise. Agrees with the
    /// dense path wherever the dense path fits the cap.
    pub fn reduce(&self, keep: &[&str], tol: &Tolerances) -> Result<DensityMatrix> {
        for name in keep {
            self.layout.position(name)?;
        }
        let keep_pos: Vec<usize> = (0..self.layout.regs.len())
            .filter(|&i| keep.contains(&self.layout.regs[i].name.as_str()))
            .collect();
        let out_dims: Vec<usize> = keep_pos.iter().map(|&p| self.layout.regs[p].dim).collect();
        let out_dim: usize = out_dims.iter().product();
        tol.check_entries("reduced density matrix", (out_dim as u128) * (out_dim as u128))?;
        let mut out_strides = vec![1usize; keep_pos.len()];
        for i in (0..keep_pos.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_dims[i + 1];
        }

        let class_pos = self.layout.classical_positions();
        let quant_pos = self.layout.quantum_positions();

        // Per classical register (indexed as in the label tuple): kept → its
        // output stride, traced → None.
        let class_out_stride: Vec<Option<usize>> = class_pos
            .iter()
            .map(|p| keep_pos.iter().position(|kp| kp == p).map(|i| out_strides[i]))
            .collect();

        // Quantum register strides inside a block vector.
        let qdims: Vec<usize> = quant_pos.iter().map(|&p| self.layout.regs[p].dim).collect();
        let mut qstrides = vec![1usize; quant_pos.len()];
        for i in (0..quant_pos.len().saturating_sub(1)).rev() {
            qstrides[i] = qstrides[i + 1] * qdims[i + 1];
        }
        let kept_q: Vec<usize> = (0..quant_pos.len())
            .filter(|&i| keep_pos.contains(&quant_pos[i]))
            .collect();
        let traced_q: Vec<usize> = (0..quant_pos.len())
            .filter(|&i| !keep_pos.contains(&quant_pos[i]))
            .collect();

        // Enumerate (vector offset, output offset) for the kept quantum
        // multi-index and vector offsets for the traced one.
        let enum_offsets = |subset: &[usize], with_out: bool| -> Vec<(usize, usize)> {
            let sdims: Vec<usize> = subset.iter().map(|&i| qdims[i]).collect();
            let count: usize = sdims.iter().product::<usize>().max(1);
            let mut idx = vec![0usize; subset.len()];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let voff: usize = subset.iter().zip(&idx).map(|(&i, &c)| c * qstrides[i]).sum();
                let ooff: usize = if with_out {
                    subset
                        .iter()
                        .zip(&idx)
                        .map(|(&i, &c)| {
                            let kp = keep_pos
                                .iter()
                                .position(|&p| p == quant_pos[i])
                                .expect("kept quantum register");
                            c * out_strides[kp]
                        })
                        .sum()
                } else {
                    0
                };
                out.push((voff, ooff));
                for d in (0..idx.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < sdims[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            out
        };
        let kept_q_offsets = enum_offsets(&kept_q, true);
        let traced_q_offsets = enum_offsets(&traced_q, false);

        // Group blocks by their traced classical labels; only those pairs
        // produce surviving cross terms.
        let mut groups: BTreeMap<Vec<usize>, Vec<(&Vec<usize>, &Vec<Complex64>)>> = BTreeMap::new();
        for (label, vec) in &self.blocks {
            let traced_label: Vec<usize> = label
                .iter()
                .zip(&class_out_stride)
                .filter(|(_, s)| s.is_none())
                .map(|(c, _)| *c)
                .collect();
            groups.entry(traced_label).or_default().push((label, vec));
        }

        let base_offset = |label: &[usize]| -> usize {
            label
                .iter()
                .zip(&class_out_stride)
                .filter_map(|(c, s)| s.map(|stride| c * stride))
                .sum()
        };

        let mut out = vec![Complex64::new(0.0, 0.0); out_dim * out_dim];
        for members in groups.values() {
            for (label_a, va) in members {
                let row_base = base_offset(label_a);
                for (label_b, vb) in members {
                    let col_base = base_offset(label_b);
                    for (voff_i, ooff_i) in &kept_q_offsets {
                        for (voff_j, ooff_j) in &kept_q_offsets {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for (voff_s, _) in &traced_q_offsets {
                                acc += va[voff_i + voff_s] * vb[voff_j + voff_s].conj();
                            }
                            out[(row_base + ooff_i) * out_dim + (col_base + ooff_j)] += acc;
                        }
                    }
                }
            }
        }
        DensityMatrix::new(ComplexMatrix::from_rows(out_dim, out_dim, &out)?, tol)
    }

    /// Dense state vector over all registers in layout order. Test oracle and
    /// fall-back path; errors when the total dimension exceeds the cap.
    pub fn to_dense(&self, tol: &Tolerances) -> Result<Vec<Complex64>> {
        let total = self.layout.total_dim();
        tol.check_entries("dense state vector", total)?;
        let total = total as usize;
        let full = self.layout.to_register_layout();
        let strides = full.strides();
        let class_pos = self.layout.classical_positions();
        let quant_pos = self.layout.quantum_positions();
        let qdims: Vec<usize> = quant_pos.iter().map(|&p| self.layout.regs[p].dim).collect();

        let mut dense = vec![Complex64::new(0.0, 0.0); total];
        for (label, vec) in &self.blocks {
            let base: usize = label
                .iter()
                .zip(&class_pos)
                .map(|(c, &p)| c * strides[p])
                .sum();
            let mut idx = vec![0usize; quant_pos.len()];
            for amp in vec {
                let off: usize = quant_pos
                    .iter()
                    .zip(&idx)
                    .map(|(&p, &c)| c * strides[p])
                    .sum();
                dense[base + off] += amp;
                for d in (0..idx.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < qdims[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        }
        Ok(dense)
    }

    /// Reduction computed through the dense vector, without forming the full
    /// density matrix. Independent oracle for [`LabeledState::reduce`].
    pub fn dense_reduce(&self, keep: &[&str], tol: &Tolerances) -> Result<DensityMatrix> {
        let dense = self.to_dense(tol)?;
        let full = self.layout.to_register_layout();
        let dims = full.dims();
        let strides = full.strides();
        let keep_pos: Vec<usize> = (0..dims.len())
            .filter(|&i| keep.contains(&self.layout.regs[i].name.as_str()))
            .collect();
        for name in keep {
            self.layout.position(name)?;
        }
        let traced_pos: Vec<usize> = (0..dims.len()).filter(|p| !keep_pos.contains(p)).collect();
        let keep_dim: usize = keep_pos.iter().map(|&p| dims[p]).product();
        let traced_dim: usize = traced_pos.iter().map(|&p| dims[p]).product::<usize>().max(1);
        tol.check_entries("dense reduction", (keep_dim as u128) * (keep_dim as u128))?;

        let offsets = |positions: &[usize], count: usize| -> Vec<usize> {
            let pdims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
            let mut idx = vec![0usize; positions.len()];
            let mut out = Vec::with_capacity(count);
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
        let traced_offsets = offsets(&traced_pos, traced_dim);

        let out = ComplexMatrix::from_fn(keep_dim, keep_dim, |i, j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for s in &traced_offsets {
                acc += dense[keep_offsets[i] + s] * dense[keep_offsets[j] + s].conj();
            }
            acc
        });
        DensityMatrix::new(out, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::partial_trace;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_block_reduce_matches_partial_trace() {
        let tol = Tolerances::default();
        let layout = LabeledLayout::new(vec![
            ("tag", 3, RegKind::Classical),
            ("a", 2, RegKind::Quantum),
            ("b", 2, RegKind::Quantum),
        ])
        .unwrap();
        // entangled-ish block on (a, b)
        let v = vec![c(0.5, 0.), c(0.5, 0.), c(0., 0.5), c(-0.5, 0.)];
        let mut blocks = BTreeMap::new();
        blocks.insert(vec![2usize], v.clone());
        let state = LabeledState::new(layout, blocks, &tol).unwrap();

        let red = state.reduce(&["a"], &tol).unwrap();

        let pure = DensityMatrix::from_pure(&v, &tol).unwrap();
        let rl = RegisterLayout::new(vec![("a", 2), ("b", 2)]).unwrap();
        let want = partial_trace(&pure, &rl, &["a"], &tol).unwrap();
        assert!(red.mat().sub(want.mat()).max_abs_entry() < 1e-12);
    }

    #[test]
    fn cross_terms_survive_only_on_matching_traced_labels() {
        let tol = Tolerances::default();
        let layout = LabeledLayout::new(vec![
            ("x", 2, RegKind::Classical),
            ("y", 2, RegKind::Classical),
        ])
        .unwrap();
        let amp = 1.0 / 2f64.sqrt();
        // (|00⟩ + |11⟩)/√2 over two classical registers.
        let mut blocks = BTreeMap::new();
        blocks.insert(vec![0, 0], vec![c(amp, 0.)]);
        blocks.insert(vec![1, 1], vec![c(amp, 0.)]);
        let state = LabeledState::new(layout, blocks, &tol).unwrap();
        // Tracing y kills the off-diagonal (labels differ on y).
        let red = state.reduce(&["x"], &tol).unwrap();
        assert!(red.mat().get(0, 1).norm() < 1e-15);
        assert!((red.mat().get(0, 0) - c(0.5, 0.)).norm() < 1e-15);
        // Keeping both recovers the projector with coherence.
        let full = state.reduce(&["x", "y"], &tol).unwrap();
        assert!((full.mat().get(0, 3) - c(0.5, 0.)).norm() < 1e-15);
    }

    #[test]
    fn blockwise_agrees_with_dense_path() {
        let tol = Tolerances::default();
        let layout = LabeledLayout::new(vec![
            ("k", 2, RegKind::Classical),
            ("q", 2, RegKind::Quantum),
            ("r", 3, RegKind::Classical),
            ("s", 2, RegKind::Quantum),
        ])
        .unwrap();
        let mut blocks = BTreeMap::new();
        let a = 0.5f64;
        blocks.insert(vec![0, 0], vec![c(a, 0.), c(0., a), c(a, 0.), c(0., 0.)]);
        blocks.insert(vec![1, 0], vec![c(0., 0.), c(a, 0.), c(0., -a), c(a, 0.)]);
        let state = LabeledState::new(layout, blocks, &tol).unwrap();
        for keep in [vec!["k"], vec!["k", "q"], vec!["q", "s"], vec!["k", "r", "s"]] {
            let fast = state.reduce(&keep, &tol).unwrap();
            let slow = state.dense_reduce(&keep, &tol).unwrap();
            assert!(
                fast.mat().sub(slow.mat()).max_abs_entry() < 1e-12,
                "keep = {keep:?}"
            );
        }
    }

    #[test]
    fn reduce_respects_entry_cap() {
        let mut tol = Tolerances::default();
        let layout = LabeledLayout::new(vec![("k", 8, RegKind::Classical)]).unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert(vec![0], vec![c(1., 0.)]);
        let state = LabeledState::new(layout, blocks, &tol).unwrap();
        tol.entry_cap = 16;
        assert!(matches!(
            state.reduce(&["k"], &tol),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn norm_validation() {
        let tol = Tolerances::default();
        let layout = LabeledLayout::new(vec![("k", 2, RegKind::Classical)]).unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert(vec![0], vec![c(0.5, 0.)]);
        assert!(matches!(
            LabeledState::new(layout, blocks, &tol),
            Err(Error::Validity(_))
        ));
    }
}
