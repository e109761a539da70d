#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvp_core::selection::{selection_distribution, SelectionParams};
use cvp_core::simulator::{simulate_community, SimConfig, Simulation};
use cvp_core::trajectory::{replay, Action, ActionRecord, GapMarker, ItemTrajectory, Polarity};
use cvp_core::{Dataset, UrnConfig};

/// Arbitrary trajectories: uniform choices, random display permutations,
/// random polarities and lengths. Sequence numbers interleave items.
pub fn random_dataset(seed: u64, m: usize, t_max: usize, with_gaps: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(m);
    for i in 0..m {
        let len = rng.random_range(1..=t_max);
        let mut events = Vec::with_capacity(len);
        let mut gaps = Vec::new();
        let mut j = 0usize;
        for t in 1..=len {
            let write = j == 0 || rng.random_bool(0.3);
            let mut order: Vec<usize> = (0..j).collect();
            order.shuffle(&mut rng);
            let seq = (t * m + i) as u64;
            let (action, display_order) = if write {
                j += 1;
                let shown = (!order.is_empty() && rng.random_bool(0.5)).then_some(order);
                (
                    Action::Write {
                        length: rng.random_range(20..2000),
                    },
                    shown,
                )
            } else {
                let polarity = if rng.random_bool(0.6) {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                (
                    Action::Vote {
                        response: rng.random_range(0..j),
                        polarity,
                    },
                    Some(order),
                )
            };
            if with_gaps && t > 1 && rng.random_bool(0.05) {
                gaps.push(GapMarker {
                    before_t: t,
                    votes_missing: rng.random_range(1..6),
                    seq: seq * 2 - 1,
                });
            }
            events.push(ActionRecord {
                t,
                action,
                display_order,
                seq: seq * 2,
            });
        }
        items.push(ItemTrajectory {
            item_id: format!("it{i:03}"),
            events,
            gaps,
        });
    }
    Dataset::new("rand", items)
}

pub fn simulate(seed: u64, m: usize, t_max: usize, tau: f64, lambda: f64, mu: f64) -> Simulation {
    let cfg = SimConfig {
        selection: SelectionParams::new(tau, 0.5),
        lambda,
        mu,
        m,
        t_max,
        seed,
        ..Default::default()
    };
    simulate_community(&cfg).expect("valid config")
}

/// Selection log-likelihood summed event by event over full distributions.
pub fn selection_loglik_oracle(ds: &Dataset, params: &SelectionParams) -> f64 {
    let urn = UrnConfig::default();
    let mut total = 0.0;
    for item in &ds.items {
        for (ev, mut st) in item.events.iter().zip(replay(item, &urn)) {
            if st.n_responses() == 0 {
                continue;
            }
            if ev.display_order.is_none() {
                // writes may omit the order; any permutation gives the same mass
                let order: Vec<usize> = (0..st.n_responses()).collect();
                st.set_display_order(Some(&order));
            }
            let dist = selection_distribution(&st, params).unwrap();
            let k = match ev.action {
                Action::Write { .. } => dist.len() - 1,
                Action::Vote { response, .. } => response,
            };
            total += dist[k].ln();
        }
    }
    total
}

/// Every vote of `ds` with its polarity flipped.
pub fn flip_polarities(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for item in &mut out.items {
        for ev in &mut item.events {
            if let Action::Vote { polarity, .. } = &mut ev.action {
                *polarity = polarity.flipped();
            }
        }
    }
    out
}
