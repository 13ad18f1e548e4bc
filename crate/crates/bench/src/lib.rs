//! Fixtures shared by the benchmarks.

use sdto::lift::psi;
use sdto::{Dims, FactorPoint, HermitianMatrix};

/// Indefinite objective `Ψ(x) − Ψ(y)` built from two random factor points.
pub fn random_objective(dims: &Dims, seed: u64) -> HermitianMatrix {
    let a = psi(&FactorPoint::random(dims, 3, seed));
    let b = psi(&FactorPoint::random(dims, 3, seed.wrapping_add(1_000)));
    a.sub(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_is_indefinite() {
        let chi = random_objective(&Dims::qubits(2), 1);
        let ev = sdto::tensor::eigenvalues(&chi);
        assert!(ev[0] < 0.0 && ev[ev.len() - 1] > 0.0);
    }
}
