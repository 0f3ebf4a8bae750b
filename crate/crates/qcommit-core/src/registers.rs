//! Named register layouts over a tensor-product space.
//!
//! The first register in a layout is the most significant index, matching the
//! lexicographic block order of [`crate::linalg::ComplexMatrix::kron`].

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegisterLayout {
    regs: Vec<(String, usize)>,
}

impl RegisterLayout {
    pub fn new<S: Into<String>>(regs: Vec<(S, usize)>) -> Result<Self> {
        let regs: Vec<(String, usize)> = regs.into_iter().map(|(n, d)| (n.into(), d)).collect();
        for (name, dim) in &regs {
            if *dim < 1 {
                return Err(Error::Layout(format!("register {name} has dimension 0")));
            }
        }
        for i in 0..regs.len() {
            for j in i + 1..regs.len() {
                if regs[i].0 == regs[j].0 {
                    return Err(Error::Layout(format!("duplicate register name {}", regs[i].0)));
                }
            }
        }
        Ok(Self { regs })
    }

    pub fn len(&self) -> usize {
        self.regs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regs.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.regs.iter().map(|(n, _)| n.as_str())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.regs.iter().map(|(_, d)| *d).collect()
    }

    pub fn dim_of(&self, name: &str) -> Result<usize> {
        self.position(name).map(|i| self.regs[i].1)
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Layout(format!("unknown register {name}")))
    }

    /// Total dimension as u128 so oversized layouts can be cap-checked before
    /// any allocation.
    pub fn total_dim(&self) -> u128 {
        self.regs.iter().map(|(_, d)| *d as u128).product()
    }

    /// Row-major strides; the last register varies fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.regs.len()];
        for i in (0..self.regs.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.regs[i + 1].1;
        }
        strides
    }

    /// Flattens a per-register multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.regs.len());
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    /// Positions of `keep` within the layout, in layout order. Errors on
    /// unknown names.
    pub fn keep_positions(&self, keep: &[&str]) -> Result<Vec<usize>> {
        for name in keep {
            self.position(name)?;
        }
        Ok((0..self.regs.len())
            .filter(|&i| keep.contains(&self.regs[i].0.as_str()))
            .collect())
    }

    /// The layout restricted to the registers at `positions` (layout order).
    pub fn sublayout(&self, positions: &[usize]) -> Result<Self> {
        let regs = positions
            .iter()
            .map(|&i| self.regs[i].clone())
            .collect::<Vec<_>>();
        Self::new(regs)
    }
}
