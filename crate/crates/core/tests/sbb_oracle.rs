mod common;

use common::{random_hermitian, rng, two_qubit_grid_oracle};
use sdto::{sbb_solve, BssProblem, Dims, HermitianMatrix, SbbConfig};

#[test]
fn grid_oracle_on_basis_objective() {
    let chi = HermitianMatrix::diag(&[4.0, 1.0, 2.0, 3.0]);
    assert!((two_qubit_grid_oracle(&chi) - 1.0).abs() < 1e-12);
}

#[test]
fn sbb_matches_grid_oracle() {
    let mut r = rng(11);
    for _ in 0..5 {
        let chi = random_hermitian(4, &mut r);
        let oracle = two_qubit_grid_oracle(&chi);
        let prob = BssProblem::new(chi, Dims::qubits(2)).unwrap();
        let res = sbb_solve(&prob, &SbbConfig::default()).unwrap();
        assert!((res.upper - oracle).abs() < 1e-3, "{} vs {oracle}", res.upper);
        assert!(res.lower <= oracle + 1e-3 && oracle <= res.upper + 1e-3);
        assert!(res.upper <= oracle + 1e-9);
    }
}
