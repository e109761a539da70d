//! Synthetic trajectories drawn from the full generative process.
//!
//! Each item draws from its own ChaCha8 stream: the generator is seeded with
//! `seed_from_u64(seed)` and the stream is set to the item's index, so items
//! can be generated in any order or in parallel with identical results.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::selection::{selection_distribution, SelectionParams};
use crate::trajectory::{
    Action, ActionRecord, Dataset, ItemState, ItemTrajectory, Polarity, UrnConfig,
};
use crate::voting::{logistic, score, VotingParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMechanism {
    /// Descending `n+ - n-`.
    #[default]
    ByScore,
    /// Descending `n+ / (n+ + n-)`, then descending total votes. Unvoted
    /// responses count as fraction 0.
    ByPositiveFraction,
    /// Write order.
    ByArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Earlier responses first.
    #[default]
    ByArrival,
    /// Most recently voted first, never-voted last, then arrival.
    ByLastVote,
}

/// Normal distribution of the per-item length bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuDistribution {
    pub mean: f64,
    pub sd: f64,
}

/// Log-normal response lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthModel {
    pub median: f64,
    pub log_sd: f64,
}

impl Default for LengthModel {
    fn default() -> Self {
        Self {
            median: 300.0,
            log_sd: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub community_id: String,
    pub selection: SelectionParams,
    pub lambda: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub nu: NuDistribution,
    pub urn: UrnConfig,
    pub rank_mechanism: RankMechanism,
    pub tie_break: TieBreak,
    pub length_model: LengthModel,
    /// Events per item.
    pub t_max: usize,
    /// Number of items.
    pub m: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            community_id: "sim".into(),
            selection: SelectionParams::new(1.0, 0.5),
            lambda: 0.0,
            mu: 0.0,
            sigma2: 1.0,
            nu: NuDistribution { mean: 0.0, sd: 0.0 },
            urn: UrnConfig::default(),
            rank_mechanism: RankMechanism::default(),
            tie_break: TieBreak::default(),
            length_model: LengthModel::default(),
            t_max: 50,
            m: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.t_max < 1 {
            return bad("t_max must be at least 1".into());
        }
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        let sel = &self.selection;
        if !(sel.alpha.is_finite() && sel.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", sel.alpha));
        }
        if !sel.tau.is_finite() {
            return bad(format!("tau must be finite, got {}", sel.tau));
        }
        if !(self.lambda.is_finite() && self.mu.is_finite()) {
            return bad("lambda and mu must be finite".into());
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.nu.mean.is_finite() && self.nu.sd.is_finite() && self.nu.sd >= 0.0) {
            return bad("nu distribution needs a finite mean and non-negative sd".into());
        }
        let len = &self.length_model;
        if !(len.median.is_finite()
            && len.median > 0.0
            && len.log_sd.is_finite()
            && len.log_sd >= 0.0)
        {
            return bad("length model needs a positive median and non-negative log-sd".into());
        }
        self.urn
            .check()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    /// Generator for the item at `index`.
    pub fn item_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Display order (response indices, top first) for `state`.
pub fn rank_responses(
    state: &ItemState,
    mechanism: RankMechanism,
    tie_break: TieBreak,
) -> Vec<usize> {
    let rs = &state.responses;
    let mut order: Vec<usize> = (0..rs.len()).collect();
    let primary = |a: usize, b: usize| -> Ordering {
        let (x, y) = (&rs[a], &rs[b]);
        match mechanism {
            RankMechanism::ByScore => y.score().cmp(&x.score()),
            RankMechanism::ByPositiveFraction => {
                // x+/xn vs y+/yn by cross-multiplication; unvoted counts as 0
                let (xp, xn) = (x.pos_votes as u64, x.total_votes() as u64);
                let (yp, yn) = (y.pos_votes as u64, y.total_votes() as u64);
                let lhs = yp * xn.max(1);
                let rhs = xp * yn.max(1);
                lhs.cmp(&rhs).then(yn.cmp(&xn))
            }
            RankMechanism::ByArrival => Ordering::Equal,
        }
    };
    let tie = |a: usize, b: usize| -> Ordering {
        match tie_break {
            TieBreak::ByArrival => Ordering::Equal,
            TieBreak::ByLastVote => match (rs[a].last_vote_t, rs[b].last_vote_t) {
                (Some(x), Some(y)) => y.cmp(&x),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            },
        }
    };
    order.sort_by(|&a, &b| primary(a, b).then_with(|| tie(a, b)).then(a.cmp(&b)));
    order
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Draws the next selection: `Some(j)` to vote on response `j`, `None` to
/// write. `state` must carry display ranks when it has responses.
pub fn sample_selection<R: Rng + ?Sized>(
    state: &ItemState,
    params: &SelectionParams,
    rng: &mut R,
) -> Option<usize> {
    let probs = selection_distribution(state, params).expect("display ranks set before sampling");
    let k = sample_index(&probs, rng);
    (k < state.n_responses()).then_some(k)
}

/// One generated item with its latent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedItem {
    pub trajectory: ItemTrajectory,
    pub nu: f64,
    pub quality: Vec<f64>,
}

/// Generates one item. Sequence numbers are the event indices.
pub fn simulate_item<R: Rng + ?Sized>(
    cfg: &SimConfig,
    item_id: &str,
    rng: &mut R,
) -> SimulatedItem {
    let quality_dist = Normal::new(0.0, cfg.sigma2.sqrt()).expect("validated sigma2");
    let nu_dist = Normal::new(cfg.nu.mean, cfg.nu.sd).expect("validated nu distribution");
    let length_dist = LogNormal::new(cfg.length_model.median.ln(), cfg.length_model.log_sd)
        .expect("validated length model");

    let nu = nu_dist.sample(rng);
    let mut quality = Vec::new();
    let mut events = Vec::with_capacity(cfg.t_max);
    let mut state = ItemState::empty();
    for t in 1..=cfg.t_max {
        let display_order = if state.n_responses() > 0 {
            let order = rank_responses(&state, cfg.rank_mechanism, cfg.tie_break);
            state.set_display_order(Some(&order));
            Some(order)
        } else {
            None
        };
        let action = match display_order
            .as_ref()
            .and_then(|_| sample_selection(&state, &cfg.selection, rng))
        {
            Some(j) => {
                let r = &state.responses[j];
                let g = score(
                    cfg.lambda,
                    cfg.mu,
                    nu,
                    r.ratio_pos,
                    r.ratio_neg,
                    r.rel_length,
                );
                let positive = rng.random::<f64>() < logistic(quality[j] + g);
                Action::Vote {
                    response: j,
                    polarity: if positive {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    },
                }
            }
            None => {
                quality.push(quality_dist.sample(rng));
                let length = length_dist.sample(rng).round().max(1.0) as u32;
                Action::Write { length }
            }
        };
        state.apply(&action, &cfg.urn);
        events.push(ActionRecord {
            t,
            action,
            display_order,
            seq: t as u64,
        });
    }
    SimulatedItem {
        trajectory: ItemTrajectory {
            item_id: item_id.to_string(),
            events,
            gaps: vec![],
        },
        nu,
        quality,
    }
}

/// Latent parameters of a simulated community.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub selection: SelectionParams,
    pub voting: VotingParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn item_id(index: usize) -> String {
    format!("item{index:04}")
}

/// Generates `cfg.m` independent items. Items run concurrently: sequence
/// numbers follow the within-item event index, then the item index.
pub fn simulate_community(cfg: &SimConfig) -> Result<Simulation, SimError> {
    cfg.validate()?;
    let items: Vec<SimulatedItem> = (0..cfg.m)
        .into_par_iter()
        .map(|i| simulate_item(cfg, &item_id(i), &mut cfg.item_rng(i)))
        .collect();

    let mut trajectories = Vec::with_capacity(items.len());
    let mut nu = BTreeMap::new();
    let mut quality = BTreeMap::new();
    for item in items {
        nu.insert(item.trajectory.item_id.clone(), item.nu);
        quality.insert(item.trajectory.item_id.clone(), item.quality);
        trajectories.push(item.trajectory);
    }
    let mut seq = 0u64;
    for k in 0..cfg.t_max {
        for traj in &mut trajectories {
            traj.events[k].seq = seq;
            seq += 1;
        }
    }
    Ok(Simulation {
        dataset: Dataset::new(&cfg.community_id, trajectories),
        truth: GroundTruth {
            selection: cfg.selection,
            voting: VotingParams {
                lambda: cfg.lambda,
                mu: cfg.mu,
                nu,
                quality,
                sigma2: cfg.sigma2,
            },
        },
    })
}
