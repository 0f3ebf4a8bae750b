//! Central numeric tolerances and the dense-dimension cap.
//!
//! Every comparison threshold used by the crate lives in one record so that
//! experiment reports can state exactly which tolerances were in force.

use serde::{Deserialize, Serialize};

/// Numeric tolerances shared by all modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Elementwise Hermiticity deviation, `M = M†`.
    pub hermitian: f64,
    /// Trace-one deviation for density matrices.
    pub trace: f64,
    /// Most-negative eigenvalue admitted as "positive semidefinite".
    pub psd: f64,
    /// Norm-one deviation for state vectors and labeled states.
    pub norm: f64,
    /// POVM completeness and element-PSD deviation.
    pub povm: f64,
    /// `V†V = I` deviation for unitaries and dilations.
    pub unitary: f64,
    /// Agreement between the dilated-unitary overlap and the POVM-sum overlap.
    pub two_path: f64,
    /// Slack for the Fuchs–van de Graaf inequalities.
    pub fvdg: f64,
    /// Slack for identities and threshold ties that hold exactly in rationals.
    pub exact: f64,
    /// Eigenvalues below this are treated as zero on pseudo-inverse supports.
    pub support_cutoff: f64,
    /// Maximum number of dense matrix entries any operation may allocate.
    pub entry_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-12,
            trace: 1e-10,
            psd: 1e-10,
            norm: 1e-10,
            povm: 1e-10,
            unitary: 1e-10,
            two_path: 1e-9,
            fvdg: 1e-9,
            exact: 1e-12,
            support_cutoff: 1e-12,
            entry_cap: 1 << 20,
        }
    }
}

impl Tolerances {
    /// Checks that `entries` dense entries fit under the cap.
    pub fn check_entries(&self, what: &str, entries: u128) -> crate::Result<()> {
        if entries > self.entry_cap as u128 {
            return Err(crate::Error::DimensionCap {
                what: what.to_string(),
                entries,
                cap: self.entry_cap,
            });
        }
        Ok(())
    }
}
