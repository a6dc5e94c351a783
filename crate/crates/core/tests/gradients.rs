//! Analytic gradients against central finite differences (h = 1e-5).

mod support;

use support::gradcheck::{self, Worst, TOL};

fn assert_within(w: Worst) {
    assert!(w.err <= TOL, "relative error {:e} at {}", w.err, w.at);
}

#[test]
fn conv() {
    assert_within(gradcheck::conv_suite());
}

#[test]
fn deconv() {
    assert_within(gradcheck::deconv_suite());
}

#[test]
fn fc() {
    assert_within(gradcheck::fc_suite());
}

#[test]
fn sigmoid() {
    assert_within(gradcheck::sigmoid_suite());
}

#[test]
fn sigmoid_cross_entropy() {
    assert_within(gradcheck::sce_loss_suite());
}

#[test]
fn euclidean() {
    assert_within(gradcheck::euclidean_loss_suite());
}

#[test]
fn combined_objective() {
    assert_within(gradcheck::combined_loss_suite());
}

#[test]
fn whole_network() {
    assert_within(gradcheck::network_objective_suite());
}
