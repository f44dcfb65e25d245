mod common;

use common::gradcheck::{model_error, op_errors};

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..20 {
        for (op, err) in op_errors(seed) {
            assert!(err <= 1e-4, "{op} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn classifier_loss_matches_finite_differences() {
    for seed in 0..20 {
        let err = model_error(seed);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
    }
}
