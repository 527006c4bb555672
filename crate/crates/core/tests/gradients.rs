mod common;

use common::grad_suite::all_ops;

const CASES: usize = 100;

#[test]
fn every_op_matches_finite_differences() {
    let mut failed = Vec::new();
    for op in all_ops() {
        let r = op.run(CASES);
        println!(
            "{:<26} elem {:.2e} total {:.2e} (bound {:.0e}) {}",
            op.name,
            r.worst_elem,
            r.worst_total,
            op.bound(),
            if r.passed { "ok" } else { "FAILED" }
        );
        if !r.passed {
            failed.push(op.name);
        }
    }
    assert!(failed.is_empty(), "gradient mismatch in {failed:?}");
}
