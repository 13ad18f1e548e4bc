//! Benchmark states and white-noise interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{eigenvalues, Dims, HermitianMatrix, SubsystemIndexMap, C64};

/// Threshold instance: target state `phi` on subsystems `dims`.
///
/// The white-noise threshold is the smallest `z >= 0` such that
/// `rho(z) = (Id/d̄ - phi) z + phi` is separable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdInstance {
    pub name: String,
    pub phi: HermitianMatrix,
    pub dims: Dims,
}

impl ThresholdInstance {
    pub fn new(name: impl Into<String>, phi: HermitianMatrix, dims: Dims) -> Result<Self> {
        if phi.dim() != dims.total() {
            return Err(Error::DimensionMismatch {
                expected: dims.total(),
                got: phi.dim(),
            });
        }
        let tr = phi.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return invalid(format!("state must have unit trace, got {tr}"));
        }
        let lmin = eigenvalues(&phi)[0];
        if lmin < -1e-10 {
            return invalid(format!("state must be PSD, min eigenvalue {lmin:.3e}"));
        }
        Ok(ThresholdInstance {
            name: name.into(),
            phi,
            dims,
        })
    }

    pub fn m(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.total()
    }

    /// `B = Id/d̄ - phi`, the direction of the noise segment.
    pub fn noise_direction(&self) -> HermitianMatrix {
        let n = self.total_dim();
        HermitianMatrix::identity(n)
            .scale(1.0 / n as f64)
            .sub(&self.phi)
    }

    pub fn maximally_mixed(&self) -> HermitianMatrix {
        let n = self.total_dim();
        HermitianMatrix::identity(n).scale(1.0 / n as f64)
    }
}

/// `rho(z) = (Id/d̄ - phi) z + phi`.
pub fn noise_interpolate(inst: &ThresholdInstance, z: f64) -> HermitianMatrix {
    inst.phi.axpy(z, &inst.noise_direction())
}

fn pure_qubit_state(name: String, m: usize, amplitudes: Vec<C64>) -> ThresholdInstance {
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<C64> = amplitudes.iter().map(|a| a / norm).collect();
    ThresholdInstance {
        name,
        phi: HermitianMatrix::outer(&v),
        dims: Dims::qubits(m),
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2`.
pub fn ghz_state(m: usize) -> Result<ThresholdInstance> {
    if m < 2 {
        return invalid("GHZ state needs m >= 2");
    }
    let n = 1usize << m;
    let mut amp = vec![C64::new(0.0, 0.0); n];
    amp[0] = C64::new(1.0, 0.0);
    amp[n - 1] = C64::new(1.0, 0.0);
    Ok(pure_qubit_state(format!("GHZ_{m}"), m, amp))
}

/// Equal superposition of all `m`-bit strings with exactly `k` ones.
pub fn dicke_state(m: usize, k: usize) -> Result<ThresholdInstance> {
    if m < 2 || k == 0 || k >= m {
        return invalid(format!("Dicke state needs 1 <= k <= m-1, got m={m}, k={k}"));
    }
    let map = SubsystemIndexMap::new(&vec![2; m]);
    let amp = (0..map.total())
        .map(|f| {
            let ones: usize = map.multi(f).iter().sum();
            C64::new(if ones == k { 1.0 } else { 0.0 }, 0.0)
        })
        .collect();
    Ok(pure_qubit_state(format!("Dicke_{m}_{k}"), m, amp))
}

/// Linear-chain cluster state: `|+⟩^{⊗m}` followed by controlled-Z on every
/// neighboring pair `(k, k+1)`.
pub fn cluster_state(m: usize) -> Result<ThresholdInstance> {
    if m < 2 {
        return invalid("cluster state needs m >= 2");
    }
    let map = SubsystemIndexMap::new(&vec![2; m]);
    let amp = (0..map.total())
        .map(|f| {
            let bits = map.multi(f);
            let edges = bits.windows(2).filter(|w| w[0] == 1 && w[1] == 1).count();
            C64::new(if edges % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        })
        .collect();
    Ok(pure_qubit_state(format!("cluster_{m}"), m, amp))
}

/// `1 - 1/(1 + 2^{m-1})`.
pub fn ghz_threshold_exact(m: usize) -> f64 {
    1.0 - 1.0 / (1.0 + 2f64.powi(m as i32 - 1))
}

/// Built-in state by name: `ghz`, `dicke` (needs `k`), `cluster`.
pub fn named_state(name: &str, m: usize, k: Option<usize>) -> Result<ThresholdInstance> {
    match name {
        "ghz" => ghz_state(m),
        "dicke" => dicke_state(m, k.unwrap_or(1)),
        "cluster" => cluster_state(m),
        other => invalid(format!("unknown state '{other}'")),
    }
}

/// Custom state from a JSON matrix file on qubit subsystems.
pub fn state_from_file(path: &std::path::Path, dims: Option<Dims>) -> Result<ThresholdInstance> {
    let phi = HermitianMatrix::read_json(path)?;
    let dims = match dims {
        Some(d) => d,
        None => {
            let n = phi.dim();
            if !n.is_power_of_two() || n < 4 {
                return invalid(format!("cannot infer qubit dims for dimension {n}"));
            }
            Dims::qubits(n.trailing_zeros() as usize)
        }
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "custom".into());
    ThresholdInstance::new(name, phi, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{partial_trace, partial_transpose};
    use std::collections::BTreeSet;

    fn assert_pure_state(inst: &ThresholdInstance) {
        assert!((inst.phi.trace() - 1.0).abs() < 1e-12);
        let ev = eigenvalues(&inst.phi);
        assert!(ev[0] > -1e-12);
        assert_eq!(ev.iter().filter(|&&l| l > 1e-9).count(), 1);
    }

    fn reduced_spectra(inst: &ThresholdInstance) -> Vec<Vec<f64>> {
        (0..inst.m())
            .map(|k| {
                let others: BTreeSet<usize> = (0..inst.m()).filter(|&j| j != k).collect();
                eigenvalues(&partial_trace(&inst.phi, &inst.dims, &others).unwrap())
            })
            .collect()
    }

    #[test]
    fn ghz_entries() {
        let g = ghz_state(2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let corner = (i == 0 || i == 3) && (j == 0 || j == 3);
                let expected = if corner { 0.5 } else { 0.0 };
                assert!((g.phi.get(i, j).re - expected).abs() < 1e-15);
            }
        }
        let g3 = ghz_state(3).unwrap();
        assert!((g3.phi.get(0, 7).re - 0.5).abs() < 1e-15);
        assert!((g3.phi.get(7, 7).re - 0.5).abs() < 1e-15);
        for m in 2..=5 {
            assert_pure_state(&ghz_state(m).unwrap());
        }
        assert!(ghz_state(1).is_err());
    }

    #[test]
    fn ghz_marginals_are_maximally_mixed() {
        for m in 2..=4 {
            let g = ghz_state(m).unwrap();
            for spec in reduced_spectra(&g) {
                assert!(spec.iter().all(|&l| (l - 0.5).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn dicke_entries() {
        let d = dicke_state(2, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let inside = [1, 2].contains(&i) && [1, 2].contains(&j);
                let expected = if inside { 0.5 } else { 0.0 };
                assert!((d.phi.get(i, j).re - expected).abs() < 1e-15);
            }
        }
        let d3 = dicke_state(3, 1).unwrap();
        for i in 0..8 {
            let expected = if [1, 2, 4].contains(&i) { 1.0 / 3.0 } else { 0.0 };
            assert!((d3.phi.get(i, i).re - expected).abs() < 1e-15);
        }
        for (m, k) in [(3, 2), (4, 2), (5, 1)] {
            assert_pure_state(&dicke_state(m, k).unwrap());
        }
        assert!(dicke_state(3, 0).is_err());
        assert!(dicke_state(3, 3).is_err());
    }

    #[test]
    fn cluster_local_equivalences() {
        for m in 2..=4 {
            assert_pure_state(&cluster_state(m).unwrap());
        }
        let c2 = cluster_state(2).unwrap();
        let g2 = ghz_state(2).unwrap();
        // Both are maximally entangled two-qubit states.
        let pt = |s: &ThresholdInstance| {
            eigenvalues(&partial_transpose(&s.phi, &s.dims, &[1].into_iter().collect()).unwrap())
        };
        let (a, b) = (pt(&c2), pt(&g2));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let c3 = reduced_spectra(&cluster_state(3).unwrap());
        let g3 = reduced_spectra(&ghz_state(3).unwrap());
        for (x, y) in c3.iter().zip(&g3) {
            for (a, b) in x.iter().zip(y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation() {
        let g = ghz_state(2).unwrap();
        assert_eq!(noise_interpolate(&g, 0.0), g.phi);
        assert!(noise_interpolate(&g, 1.0)
            .sub(&HermitianMatrix::identity(4).scale(0.25))
            .frobenius_norm()
            < 1e-15);
        for z in [-0.5, 0.3, 1.7] {
            assert!((noise_interpolate(&g, z).trace() - 1.0).abs() < 1e-12);
        }
        let boundary = noise_interpolate(&g, 2.0 / 3.0);
        let pt = partial_transpose(&boundary, &g.dims, &[1].into_iter().collect()).unwrap();
        assert!(pt.min_eigenvalue().abs() < 1e-9);
    }

    #[test]
    fn exact_thresholds() {
        assert!((ghz_threshold_exact(2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((ghz_threshold_exact(3) - 0.8).abs() < 1e-15);
        assert!((ghz_threshold_exact(4) - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn instance_validation() {
        let bad = HermitianMatrix::identity(4);
        assert!(ThresholdInstance::new("x", bad, Dims::qubits(2)).is_err());
        let neg = HermitianMatrix::diag(&[1.5, -0.5, 0.0, 0.0]);
        assert!(ThresholdInstance::new("x", neg, Dims::qubits(2)).is_err());
        assert!(named_state("werner", 2, None).is_err());
    }
}
