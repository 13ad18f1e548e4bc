#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sdto::{HermitianMatrix, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    HermitianMatrix::from_fn(n, |_, _| {
        C64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    })
}

/// `min <χ, a a† ⊗ b b†>` over two qubits: the first qubit runs over a
/// 1° grid of Bloch angles, the second is minimized exactly through the
/// closed-form smallest eigenvalue of a 2×2 Hermitian matrix.
pub fn two_qubit_grid_oracle(chi: &HermitianMatrix) -> f64 {
    assert_eq!(chi.dim(), 4);
    let mut best = f64::INFINITY;
    for t in 0..=180 {
        let theta = (t as f64).to_radians();
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let phis = if t == 0 || t == 180 { 1 } else { 360 };
        for p in 0..phis {
            let phi = (p as f64).to_radians();
            let a = [C64::new(c, 0.0), C64::from_polar(s, phi)];
            let mut mb = [[C64::new(0.0, 0.0); 2]; 2];
            for (b, row) in mb.iter_mut().enumerate() {
                for (bp, cell) in row.iter_mut().enumerate() {
                    for x in 0..2 {
                        for y in 0..2 {
                            *cell += a[x].conj() * chi.get(2 * x + b, 2 * y + bp) * a[y];
                        }
                    }
                }
            }
            let (p0, q0, r) = (mb[0][0].re, mb[1][1].re, mb[0][1]);
            let lam = 0.5 * (p0 + q0) - ((0.5 * (p0 - q0)).powi(2) + r.norm_sqr()).sqrt();
            best = best.min(lam);
        }
    }
    best
}
