use meshgrow::nn::gradcheck::{run_gradcheck, END_TO_END_TOLERANCE, LAYER_TOLERANCE};

#[test]
fn analytic_gradients_match_finite_differences() {
    let report = run_gradcheck(11).unwrap();
    for e in report.layers.iter().chain(&report.end_to_end) {
        println!("{:<32} n={:<5} err={:.3e} tol={:.0e}", e.name, e.checked, e.max_rel_error, e.tolerance);
    }
    assert!(report.max_layer_error() < LAYER_TOLERANCE);
    assert!(report.max_end_to_end_error() < END_TO_END_TOLERANCE);
    assert!(report.passed(), "skipped fraction {}", report.skipped_fraction());
}
