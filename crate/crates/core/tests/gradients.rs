//! Finite-difference checks of every trainable operation.

mod common;

#[test]
fn every_operation_matches_finite_differences() {
    for (name, report) in common::gradient_suite() {
        assert!(report.max_rel_err < 1e-4, "{name}: {report:?}");
        assert!(report.checked > 0, "{name}: nothing checked");
    }
}
