mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvp_core::voting::{
    fit_voting, objective_and_gradient, voting_loglik, Feature, FeatureMask, FitOptions,
    LoglikTerms, Theta, VotingDesign, VotingParams,
};
use cvp_core::{Dataset, UrnConfig};

fn all_free() -> FitOptions {
    FitOptions {
        min_votes_for_nu: 0,
        exclude_first_vote: false,
        ..Default::default()
    }
}

/// Penalized objective evaluated from replayed states, independent of the
/// design matrices used by the fitter.
fn objective_oracle(ds: &Dataset, design: &VotingDesign, theta: &Theta, opts: &FitOptions) -> f64 {
    let params = theta.to_params(design, opts.sigma2);
    let ll = voting_loglik(ds, &params, &UrnConfig::default(), LoglikTerms::default()).unwrap();
    let penalty =
        theta.lambda.powi(2) + theta.mu.powi(2) + theta.nu.iter().map(|v| v * v).sum::<f64>();
    ll - opts.ridge * penalty
}

fn random_theta(design: &VotingDesign, rng: &mut ChaCha8Rng) -> Theta {
    let mut theta = Theta::zeros(design);
    theta.lambda = rng.random_range(-2.0..2.0);
    theta.mu = rng.random_range(-2.0..2.0);
    theta
        .nu
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    theta
        .q
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.5..1.5));
    theta
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    let opts = all_free();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let ds = common::random_dataset(seed, 3, 25, false);
        let design = VotingDesign::build(&ds, &UrnConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_theta(&design, &mut rng);
        let (value, grad) = objective_and_gradient(&design, &theta, FeatureMask::full(), &opts);
        let oracle = objective_oracle(&ds, &design, &theta, &opts);
        assert!(
            (value - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "seed {seed}: {value} vs {oracle}"
        );

        let mut check = |analytic: f64, bump: &dyn Fn(&mut Theta, f64)| {
            let mut plus = theta.clone();
            bump(&mut plus, h);
            let mut minus = theta.clone();
            bump(&mut minus, -h);
            let fd = (objective_oracle(&ds, &design, &plus, &opts)
                - objective_oracle(&ds, &design, &minus, &opts))
                / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "seed {seed}: analytic {analytic}, fd {fd}");
        };
        check(grad.lambda, &|t, d| t.lambda += d);
        check(grad.mu, &|t, d| t.mu += d);
        for i in 0..theta.nu.len() {
            check(grad.nu[i], &|t, d| t.nu[i] += d);
        }
        for k in 0..theta.q.len() {
            check(grad.q[k], &|t, d| t.q[k] += d);
        }
    }
    assert!(worst <= 1e-5);
}

#[test]
fn objective_is_concave_along_lines() {
    let opts = all_free();
    for seed in 0..20u64 {
        let ds = common::random_dataset(500 + seed, 4, 30, false);
        let design = VotingDesign::build(&ds, &UrnConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_theta(&design, &mut rng);
        let dir = random_theta(&design, &mut rng);
        let at = |s: f64| {
            let mut t = start.clone();
            t.lambda += s * dir.lambda;
            t.mu += s * dir.mu;
            t.nu.iter_mut().zip(&dir.nu).for_each(|(a, b)| *a += s * b);
            t.q.iter_mut().zip(&dir.q).for_each(|(a, b)| *a += s * b);
            objective_and_gradient(&design, &t, FeatureMask::full(), &opts).0
        };
        let vals: Vec<f64> = (0..41).map(|k| at(-2.0 + 0.1 * k as f64)).collect();
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 1..40 {
            let d2 = vals[k + 1] - 2.0 * vals[k] + vals[k - 1];
            assert!(d2 <= 1e-9 * scale, "seed {seed}, step {k}: {d2}");
        }
        // no rise after a fall
        let peak = vals
            .iter()
            .enumerate()
            .fold(0, |b, (k, v)| if *v > vals[b] { k } else { b });
        assert!(vals[..=peak]
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * scale));
        assert!(vals[peak..].windows(2).all(|w| w[1] <= w[0] + 1e-9 * scale));
    }
}

fn masks() -> Vec<FeatureMask> {
    let groups = [Feature::Quality, Feature::Lambda, Feature::Mu, Feature::Nu];
    (0..16u8)
        .map(|bits| {
            let out: Vec<Feature> = (0..4)
                .filter(|b| bits >> b & 1 == 1)
                .map(|b| groups[b])
                .collect();
            FeatureMask::full().knock_out(&out)
        })
        .collect()
}

#[test]
fn nested_masks_are_dominated() {
    let opts = FitOptions::default();
    for seed in 0..20u64 {
        let sim = common::simulate(seed, 40, 40, 1.0, 1.5, -1.0);
        let ds = &sim.dataset;
        let init = VotingParams::zeros(ds, opts.sigma2);
        let fits: Vec<(FeatureMask, f64)> = masks()
            .into_iter()
            .map(|m| {
                let f = fit_voting(ds, &UrnConfig::default(), &init, m, &opts).unwrap();
                assert!(f.converged, "seed {seed} {m}");
                (m, f.objective)
            })
            .collect();
        for (a, la) in &fits {
            for (b, lb) in &fits {
                if a.is_subset_of(b) {
                    assert!(
                        lb >= &(la - 1e-8 * la.abs()),
                        "seed {seed}: {b} {lb} < {a} {la}"
                    );
                }
            }
        }
        let full = fits
            .iter()
            .find(|(m, _)| *m == FeatureMask::full())
            .unwrap()
            .1;
        let none = fits
            .iter()
            .find(|(m, _)| *m == FeatureMask::none())
            .unwrap()
            .1;
        assert!(full > none + 1.0, "seed {seed}: {full} vs {none}");
    }
}

#[test]
fn polarity_flip_negates_quality() {
    let opts = FitOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let mask = FeatureMask::full().knock_out(&[Feature::Nu]);
    for seed in 0..10u64 {
        let sim = common::simulate(seed, 20, 40, 1.0, 1.0, -0.5);
        let ds = &sim.dataset;
        let flipped = common::flip_polarities(ds);
        let init = VotingParams::zeros(ds, opts.sigma2);
        let a = fit_voting(ds, &UrnConfig::default(), &init, mask, &opts).unwrap();
        let b = fit_voting(&flipped, &UrnConfig::default(), &init, mask, &opts).unwrap();
        assert!((a.params.lambda + b.params.mu).abs() < 1e-6);
        assert!((a.params.mu + b.params.lambda).abs() < 1e-6);
        for (qa, qb) in a.theta.q.iter().zip(&b.theta.q) {
            assert!((qa + qb).abs() < 1e-6, "seed {seed}: {qa} vs {qb}");
        }
        assert!((a.objective - b.objective).abs() < 1e-8 * a.objective.abs());
    }
}

#[test]
fn fit_recovers_simulated_parameters() {
    let sim = common::simulate(3, 150, 60, 1.0, 1.5, -1.0);
    let fit = fit_voting(
        &sim.dataset,
        &UrnConfig::default(),
        &VotingParams::zeros(&sim.dataset, 1.0),
        FeatureMask::full(),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(fit.converged);
    assert!(
        (fit.params.lambda - 1.5).abs() < 0.5,
        "lambda {}",
        fit.params.lambda
    );
    assert!((fit.params.mu + 1.0).abs() < 0.5, "mu {}", fit.params.mu);
    // fitted qualities of well-observed responses track the truth
    let (mut num, mut dq, mut dt) = (0.0, 0.0, 0.0);
    for item in &sim.dataset.items {
        let truth = &sim.truth.voting.quality[&item.item_id];
        let mut votes = vec![0usize; truth.len()];
        for ev in &item.events {
            if let cvp_core::trajectory::Action::Vote { response, .. } = ev.action {
                votes[response] += 1;
            }
        }
        let item = &item.item_id;
        for (j, &q) in truth.iter().enumerate().filter(|(j, _)| votes[*j] >= 10) {
            let est = fit.params.quality_of(item, j).unwrap();
            num += est * q;
            dq += est * est;
            dt += q * q;
        }
    }
    let corr = num / (dq * dt).sqrt();
    assert!(corr > 0.5, "corr {corr}");
}

#[test]
fn fit_is_bitwise_reproducible() {
    let sim = common::simulate(8, 30, 40, 1.0, 1.0, -1.0);
    let run = || {
        fit_voting(
            &sim.dataset,
            &UrnConfig::default(),
            &VotingParams::zeros(&sim.dataset, 1.0),
            FeatureMask::full(),
            &FitOptions::default(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.params, b.params);
}
