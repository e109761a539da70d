//! Community-level behavioural coefficients.
//!
//! Trendiness is the fitted rank-decay exponent `tau`. Conformity is
//!
//! ```text
//! kappa = exp( (1/n) * sum_votes h * logit p(v = 1 | theta^t) )
//! ```
//!
//! where `h = +1` when the voted response had `n+ >= n-` before the vote and
//! `-1` otherwise, and `theta^t` is fitted only on events strictly before the
//! vote. Refitting before every vote is exact but slow; `refit_stride` reuses
//! one fit for a window of consecutive votes, each fit warm-started from the
//! previous one. A stale fit never sees future events, only fewer past ones.

use std::collections::BTreeSet;
use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::selection::{fit_tau, RankBase, Saturation, SelectionError, TauFit};
use crate::trajectory::{Dataset, UrnConfig};
use crate::voting::{
    fit_design, FeatureMask, FitOptions, Theta, VoteObs, VotingDesign, VotingError, VotingParams,
};

pub const DEFAULT_REFIT_STRIDE: usize = 25;
pub const DEFAULT_COLD_REFIT_EVERY: usize = 500;

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("no votes enter the conformity product")]
    NoVotes,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Order in which votes are visited, and what counts as "before".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timeline {
    /// Community-wide event sequence numbers (file order).
    #[default]
    FileOrder,
    /// Within-item event index; a vote at index `t` sees every item's
    /// events before index `t`. Independent of how items are laid out.
    Aligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityOptions {
    pub fit: FitOptions,
    pub mask: FeatureMask,
    pub refit_stride: usize,
    /// A refit starts from zeros instead of the previous fit once this many
    /// votes have passed since the last cold start.
    pub cold_refit_every: usize,
    pub timeline: Timeline,
    /// Flip the majority indicator `h`.
    pub invert_majority: bool,
    /// Leave the community's first vote out of the product.
    pub exclude_first_community_vote: bool,
}

impl Default for ConformityOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            mask: FeatureMask::full(),
            refit_stride: DEFAULT_REFIT_STRIDE,
            cold_refit_every: DEFAULT_COLD_REFIT_EVERY,
            timeline: Timeline::default(),
            invert_majority: false,
            exclude_first_community_vote: false,
        }
    }
}

impl ConformityOptions {
    pub fn check(&self) -> Result<(), CoeffError> {
        if self.refit_stride == 0 {
            return Err(CoeffError::InvalidOption(
                "refit stride must be at least 1".into(),
            ));
        }
        if self.cold_refit_every == 0 {
            return Err(CoeffError::InvalidOption(
                "cold refit interval must be at least 1".into(),
            ));
        }
        self.fit.check()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conformity {
    pub kappa: f64,
    pub log_kappa: f64,
    /// Votes entering the product.
    pub n_votes: usize,
    pub n_refits: usize,
}

/// Trendiness: the maximum-likelihood `tau` of the dataset.
pub fn trendiness(ds: &Dataset, alpha: f64, base: RankBase) -> Result<TauFit, SelectionError> {
    fit_tau(ds, alpha, base)
}

fn timeline_order(design: &VotingDesign, timeline: Timeline) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..design.votes.len()).collect();
    match timeline {
        Timeline::FileOrder => idx.sort_by_key(|&k| design.votes[k].seq),
        Timeline::Aligned => idx.sort_by(|&a, &b| {
            let (va, vb) = (&design.votes[a], &design.votes[b]);
            va.t.cmp(&vb.t)
                .then_with(|| {
                    design.items[va.item as usize]
                        .item_id
                        .cmp(&design.items[vb.item as usize].item_id)
                })
                .then(va.seq.cmp(&vb.seq))
        }),
    }
    idx
}

fn majority_sign(v: &VoteObs, invert: bool) -> f64 {
    if v.majority_positive != invert {
        1.0
    } else {
        -1.0
    }
}

/// Conformity with per-window refits.
pub fn conformity(
    ds: &Dataset,
    urn: &UrnConfig,
    opts: &ConformityOptions,
) -> Result<Conformity, CoeffError> {
    opts.check()?;
    let design = VotingDesign::build(ds, urn);
    let order = timeline_order(&design, opts.timeline);
    let skip = usize::from(opts.exclude_first_community_vote);
    if order.len() <= skip {
        return Err(CoeffError::NoVotes);
    }

    let mut theta = Theta::zeros(&design);
    let mut sum = 0.0;
    let mut n_refits = 0;
    let mut since_cold = opts.cold_refit_every;
    for (k, &vi) in order.iter().enumerate() {
        let vote = design.votes[vi];
        if k % opts.refit_stride == 0 {
            let train = match opts.timeline {
                Timeline::FileOrder => design.filter(|_, seq| seq < vote.seq),
                Timeline::Aligned => design.filter(|t, _| t < vote.t),
            };
            let init = if since_cold >= opts.cold_refit_every {
                since_cold = 0;
                Theta::zeros(&design)
            } else {
                theta
            };
            theta = fit_design(&train, &init, opts.mask, &opts.fit)?.theta;
            n_refits += 1;
        }
        since_cold += 1;
        if k >= skip {
            sum += majority_sign(&vote, opts.invert_majority) * theta.logit(&vote);
        }
    }
    let n = order.len() - skip;
    let log_kappa = sum / n as f64;
    info!("conformity over {n} votes with {n_refits} refits: log kappa {log_kappa:.6}");
    Ok(Conformity {
        kappa: log_kappa.exp(),
        log_kappa,
        n_votes: n,
        n_refits,
    })
}

/// Conformity under one fixed parameter set, without refitting.
pub fn conformity_with_params(
    ds: &Dataset,
    urn: &UrnConfig,
    params: &VotingParams,
    invert_majority: bool,
) -> Result<Conformity, CoeffError> {
    let design = VotingDesign::build(ds, urn);
    if design.votes.is_empty() {
        return Err(CoeffError::NoVotes);
    }
    let theta = Theta::from_params(&design, params);
    let sum: f64 = timeline_order(&design, Timeline::FileOrder)
        .into_iter()
        .map(|k| {
            let v = &design.votes[k];
            majority_sign(v, invert_majority) * theta.logit(v)
        })
        .sum();
    let log_kappa = sum / design.votes.len() as f64;
    Ok(Conformity {
        kappa: log_kappa.exp(),
        log_kappa,
        n_votes: design.votes.len(),
        n_refits: 0,
    })
}

/// One row of the coefficient embedding table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffRow {
    pub community_id: String,
    /// Empty for the whole community.
    pub group_tag: String,
    pub trendiness: f64,
    pub conformity: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffReport {
    pub community_id: String,
    pub trendiness: f64,
    pub tau_saturated: Option<Saturation>,
    pub conformity: f64,
    pub n_votes_used: usize,
    pub refit_stride: usize,
    /// One row per group tag, in tag order.
    pub groups: Vec<CoeffRow>,
}

impl CoeffReport {
    pub fn rows(&self) -> Vec<CoeffRow> {
        let mut rows = vec![CoeffRow {
            community_id: self.community_id.clone(),
            group_tag: String::new(),
            trendiness: self.trendiness,
            conformity: self.conformity,
            n: self.n_votes_used,
        }];
        rows.extend(self.groups.iter().cloned());
        rows
    }

    /// Writes `community_id,group_tag,trendiness,conformity,n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CoeffError> {
        write_rows(&self.rows(), out)
    }
}

pub fn write_rows<W: Write>(rows: &[CoeffRow], out: W) -> Result<(), CoeffError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn coefficients_of(
    ds: &Dataset,
    urn: &UrnConfig,
    alpha: f64,
    base: RankBase,
    opts: &ConformityOptions,
) -> Result<(TauFit, Conformity), CoeffError> {
    let tau = trendiness(ds, alpha, base)?;
    let kappa = conformity(ds, urn, opts)?;
    Ok((tau, kappa))
}

/// Both coefficients for the community and for each tagged group of items.
/// Groups whose coefficients cannot be computed are skipped with a warning.
pub fn coefficient_report(
    ds: &Dataset,
    urn: &UrnConfig,
    alpha: f64,
    base: RankBase,
    opts: &ConformityOptions,
) -> Result<CoeffReport, CoeffError> {
    let (tau, kappa) = coefficients_of(ds, urn, alpha, base, opts)?;
    let tags: BTreeSet<&str> = ds
        .items
        .iter()
        .filter_map(|it| ds.item_group(&it.item_id))
        .collect();
    let groups: Vec<Option<CoeffRow>> = tags
        .into_par_iter()
        .map(|tag| {
            let sub = ds.subset(|it| ds.item_group(&it.item_id) == Some(tag));
            match coefficients_of(&sub, urn, alpha, base, opts) {
                Ok((t, k)) => Some(CoeffRow {
                    community_id: ds.community_id.clone(),
                    group_tag: tag.to_string(),
                    trendiness: t.tau,
                    conformity: k.kappa,
                    n: k.n_votes,
                }),
                Err(e) => {
                    warn!("skipping group {tag:?}: {e}");
                    None
                }
            }
        })
        .collect();
    Ok(CoeffReport {
        community_id: ds.community_id.clone(),
        trendiness: tau.tau,
        tau_saturated: tau.saturated,
        conformity: kappa.kappa,
        n_votes_used: kappa.n_votes,
        refit_stride: opts.refit_stride,
        groups: groups.into_iter().flatten().collect(),
    })
}
