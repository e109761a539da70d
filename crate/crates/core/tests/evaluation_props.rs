mod common;

use proptest::prelude::*;

use cvp_core::evaluation::{
    ablation_masks, predictive_nll, regression_residual, EvalOptions, ResidualKind,
};
use cvp_core::trajectory::Action;
use cvp_core::voting::FeatureMask;

fn opts(horizon: usize) -> EvalOptions {
    EvalOptions {
        horizon,
        ..Default::default()
    }
}

#[test]
fn future_events_do_not_leak() {
    let sim = common::simulate(21, 40, 40, 1.0, 1.5, -1.0);
    let horizon = 30;
    let cut = 15;
    // rewrite everything after index `cut`: flip votes and retarget them
    let mut perturbed = sim.dataset.clone();
    for item in &mut perturbed.items {
        for ev in item.events.iter_mut().filter(|e| e.t > cut) {
            if let Action::Vote { response, polarity } = &mut ev.action {
                *polarity = polarity.flipped();
                *response = 0;
            }
            if let Some(order) = &mut ev.display_order {
                order.reverse();
            }
        }
    }
    perturbed.validate().unwrap();
    let masks = [FeatureMask::full(), FeatureMask::none()];
    let a = predictive_nll(&sim.dataset, &masks, &opts(horizon)).unwrap();
    let b = predictive_nll(&perturbed, &masks, &opts(horizon)).unwrap();
    let mut compared = 0;
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.t, y.t);
        if x.t <= cut {
            assert_eq!(x, y, "step {}", x.t);
            compared += 1;
        }
    }
    assert_eq!(compared, cut - 1);
    // later steps do see the change
    assert_ne!(a.steps.last(), b.steps.last());
}

#[test]
fn eval_ignores_item_listing_order() {
    let sim = common::simulate(22, 30, 30, 1.0, 1.5, -1.0);
    let mut relisted = sim.dataset.clone();
    relisted.items.reverse();
    let masks = ablation_masks();
    let a = predictive_nll(&sim.dataset, &masks, &opts(20)).unwrap();
    let b = predictive_nll(&relisted, &masks, &opts(20)).unwrap();
    for (x, y) in a.summary().iter().zip(b.summary()) {
        assert_eq!(x.model, y.model);
        assert_eq!(x.n, y.n);
        assert!(
            (x.nll - y.nll).abs() <= 1e-9,
            "{}: {} vs {}",
            x.model,
            x.nll,
            y.nll
        );
    }
}

#[test]
fn training_fits_are_nested() {
    for seed in 0..5u64 {
        let sim = common::simulate(30 + seed, 25, 30, 1.0, 1.5, -1.0);
        let report = predictive_nll(&sim.dataset, &ablation_masks(), &opts(10)).unwrap();
        for (a, ta) in report.voting_models.iter().zip(&report.training) {
            for (b, tb) in report.voting_models.iter().zip(&report.training) {
                if a.is_subset_of(b) {
                    assert!(
                        tb.objective >= ta.objective - 1e-8 * ta.objective.abs(),
                        "{b} below {a}"
                    );
                }
            }
        }
    }
}

/// Smallest mean squared residual over a fine grid of lines.
fn grid_min(points: &[(f64, f64)], center: f64, half: f64) -> f64 {
    let steps = 400;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let slope = center - half + 2.0 * half * i as f64 / steps as f64;
        // for a fixed slope the best intercept is the mean offset
        let n = points.len() as f64;
        let intercept = points.iter().map(|p| p.1 - slope * p.0).sum::<f64>() / n;
        let mse = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum::<f64>()
            / n;
        best = best.min(mse);
    }
    best
}

proptest! {
    #[test]
    fn least_squares_is_optimal(
        ys in prop::collection::vec(-5.0f64..5.0, 3..40),
        slope in -3.0f64..3.0,
    ) {
        let points: Vec<(f64, f64)> = ys.iter().enumerate().map(|(k, &y)| (k as f64, y + slope * k as f64)).collect();
        let fit = regression_residual(&points, ResidualKind::MeanSquared).unwrap();
        let oracle = grid_min(&points, fit.slope, 2.0);
        prop_assert!(fit.residual <= oracle + 1e-9);
        // the grid contains the fitted slope, so it cannot do much worse
        prop_assert!(oracle - fit.residual <= 1e-6 * (1.0 + fit.residual));
    }
}
