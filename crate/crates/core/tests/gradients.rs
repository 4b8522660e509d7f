//! Finite-difference checks of every differentiable op and of the toy model.

mod common;

use damformer::gradcheck::check_model;

#[test]
fn every_op_matches_finite_differences() {
    let reports = common::op_gradient_reports();
    assert!(reports.len() >= 40);
    let failures: Vec<String> = reports
        .iter()
        .filter_map(|(name, r)| common::verdict(r).map(|why| format!("{name}: {why}\n{}", r.summary())))
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn toy_model_matches_finite_differences() {
    let run = common::load_preset("gradcheck");
    assert_eq!(run.data.synth.size, 32);
    assert_eq!(run.model.encoder.channels, [8, 16, 24, 32]);
    let r = check_model(&run, 3).unwrap();
    assert_eq!(common::verdict(&r), None, "{}", r.summary());
}
