mod support;

use support::parity::{self, Worst, REL};

fn check(worst: Worst) {
    for (what, err) in &worst.0 {
        assert!(*err <= REL, "{what}: relative error {err:e} exceeds {REL:e}");
    }
}

#[test]
fn segmentation_losses_match_oracle() {
    check(parity::segmentation(101));
}

#[test]
fn contrastive_losses_match_oracle() {
    check(parity::contrastive(202));
}

#[test]
fn retinex_objective_matches_oracle() {
    check(parity::retinex(303));
}
