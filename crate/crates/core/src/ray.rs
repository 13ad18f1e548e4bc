//! Rank-one product tensors `v_1 v_1† ⊗ ... ⊗ v_m v_m†`.

use serde::{Deserialize, Serialize};

use crate::tensor::{kron_vec, Dims, HermitianMatrix, C64};

/// Extreme ray of the PSD tensor cone, stored by its unit mode vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRay {
    pub modes: Vec<Vec<C64>>,
    pub weight: f64,
}

impl ExtremeRay {
    /// Normalizes every mode; the product of squared norms goes into the
    /// weight. Returns `None` if any mode vanishes.
    pub fn from_modes(modes: Vec<Vec<C64>>) -> Option<Self> {
        let mut weight = 1.0;
        let mut out = Vec::with_capacity(modes.len());
        for v in modes {
            let n2: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            if n2 <= 1e-300 || !n2.is_finite() {
                return None;
            }
            weight *= n2;
            let s = 1.0 / n2.sqrt();
            out.push(v.into_iter().map(|a| a * s).collect());
        }
        Some(ExtremeRay { modes: out, weight })
    }

    /// Computational basis product state `|i_1 ... i_m⟩`.
    pub fn basis(dims: &Dims, multi: &[usize]) -> Self {
        let modes = multi
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut v = vec![C64::new(0.0, 0.0); dims.get(k)];
                v[i] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        ExtremeRay { modes, weight: 1.0 }
    }

    /// `⊗_k v_k`.
    pub fn vector(&self) -> Vec<C64> {
        let mut w = vec![C64::new(1.0, 0.0)];
        for v in &self.modes {
            w = kron_vec(&w, v);
        }
        w
    }

    /// Unit-weight matrix `p = w w†`.
    pub fn matrix(&self) -> HermitianMatrix {
        HermitianMatrix::outer(&self.vector())
    }

    /// `<chi, p>` for the unit-weight ray.
    pub fn value(&self, chi: &HermitianMatrix) -> f64 {
        chi.quad_form(&self.vector())
    }

    pub fn max_mode_norm_error(&self) -> f64 {
        self.modes
            .iter()
            .map(|v| (v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
