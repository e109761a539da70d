//! Voting phase: the polarity of a vote on a selected response.
//!
//! `p(v = 1) = logistic(q_ij + g)` with the polarity score
//! `g = lambda * r + mu * s + nu_i * u`, where `r`, `s` are the urn ratios of
//! the response and `u` its relative length, all taken from the state just
//! before the vote. Response qualities carry a `N(0, sigma2)` prior.

mod design;
mod fit;
mod toy;

pub use self::design::{ItemLayout, Theta, VoteObs, VotingDesign, WriteObs};
pub use self::fit::{
    fit_design, fit_voting, objective_and_gradient, DesignFit, FitOptions, FitResult,
};
pub use self::toy::{fit_toy_response, ToyFit};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trajectory::{replay, Action, Dataset, ItemState, UrnConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VotingError {
    #[error("no length bias for item {0:?}")]
    UnknownItem(String),
    #[error("no quality for response {response} of item {item:?}")]
    UnknownResponse { item: String, response: usize },
    #[error("need at least two votes, got {0}")]
    TooShort(usize),
    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// Which parameter groups are free; knocked-out groups are pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    pub quality: bool,
    pub lambda: bool,
    pub mu: bool,
    pub nu: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self::full()
    }
}

impl FeatureMask {
    pub const fn full() -> Self {
        Self {
            quality: true,
            lambda: true,
            mu: true,
            nu: true,
        }
    }

    pub const fn none() -> Self {
        Self {
            quality: false,
            lambda: false,
            mu: false,
            nu: false,
        }
    }

    /// Removes the named groups from the mask.
    pub fn knock_out(mut self, groups: &[Feature]) -> Self {
        for g in groups {
            match g {
                Feature::Quality => self.quality = false,
                Feature::Lambda => self.lambda = false,
                Feature::Mu => self.mu = false,
                Feature::Nu => self.nu = false,
            }
        }
        self
    }

    /// `true` when every group free in `self` is also free in `other`.
    pub fn is_subset_of(&self, other: &FeatureMask) -> bool {
        (!self.quality || other.quality)
            && (!self.lambda || other.lambda)
            && (!self.mu || other.mu)
            && (!self.nu || other.nu)
    }

    /// Short label such as `q+lambda+mu` or `none`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.quality {
            parts.push("q");
        }
        if self.lambda {
            parts.push("lambda");
        }
        if self.mu {
            parts.push("mu");
        }
        if self.nu {
            parts.push("nu");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Quality,
    Lambda,
    Mu,
    Nu,
}

impl FromStr for Feature {
    type Err = VotingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "q" | "quality" => Ok(Feature::Quality),
            "lambda" => Ok(Feature::Lambda),
            "mu" => Ok(Feature::Mu),
            "nu" => Ok(Feature::Nu),
            other => Err(VotingError::InvalidOption(format!(
                "unknown feature {other:?}"
            ))),
        }
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses a knockout list such as `q,lambda` into the remaining mask.
pub fn parse_knockout(list: &str) -> Result<FeatureMask, VotingError> {
    let groups = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Feature::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMask::full().knock_out(&groups))
}

/// Voting-phase parameters of a community.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingParams {
    pub lambda: f64,
    pub mu: f64,
    /// Per-item length bias.
    pub nu: BTreeMap<String, f64>,
    /// Per-item response qualities, indexed by response.
    pub quality: BTreeMap<String, Vec<f64>>,
    pub sigma2: f64,
}

impl VotingParams {
    /// All-zero parameters covering every response of `ds`.
    pub fn zeros(ds: &Dataset, sigma2: f64) -> Self {
        Self {
            lambda: 0.0,
            mu: 0.0,
            nu: ds
                .items
                .iter()
                .map(|it| (it.item_id.clone(), 0.0))
                .collect(),
            quality: ds
                .items
                .iter()
                .map(|it| (it.item_id.clone(), vec![0.0; it.final_responses()]))
                .collect(),
            sigma2,
        }
    }

    pub fn nu_of(&self, item_id: &str) -> Result<f64, VotingError> {
        self.nu
            .get(item_id)
            .copied()
            .ok_or_else(|| VotingError::UnknownItem(item_id.to_string()))
    }

    pub fn quality_of(&self, item_id: &str, response: usize) -> Result<f64, VotingError> {
        self.quality
            .get(item_id)
            .and_then(|q| q.get(response))
            .copied()
            .ok_or_else(|| VotingError::UnknownResponse {
                item: item_id.to_string(),
                response,
            })
    }
}

/// `lambda * r_j + mu * s_j + nu_i * u_j` for response `j` in `state`.
pub fn polarity_score(
    state: &ItemState,
    j: usize,
    params: &VotingParams,
    item_id: &str,
) -> Result<f64, VotingError> {
    let nu = params.nu_of(item_id)?;
    let r = state
        .responses
        .get(j)
        .ok_or_else(|| VotingError::UnknownResponse {
            item: item_id.to_string(),
            response: j,
        })?;
    Ok(score(
        params.lambda,
        params.mu,
        nu,
        r.ratio_pos,
        r.ratio_neg,
        r.rel_length,
    ))
}

#[inline]
pub(crate) fn score(lambda: f64, mu: f64, nu: f64, r: f64, s: f64, u: f64) -> f64 {
    lambda * r + mu * s + nu * u
}

/// `logistic(q + g)`, evaluated without overflow for any finite input.
pub fn vote_probability(q: f64, g: f64) -> f64 {
    logistic(q + g)
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(z)`.
#[inline]
pub fn log_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Log-probability of a vote of the given polarity at log-odds `z`.
#[inline]
pub fn vote_log_prob(z: f64, positive: bool) -> f64 {
    if positive {
        log_logistic(z)
    } else {
        log_logistic(-z)
    }
}

/// `ln N(q; 0, sigma2)`
pub fn log_normal_prior(q: f64, sigma2: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma2).ln() - 0.5 * q * q / sigma2
}

/// Which terms [`voting_loglik`] sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoglikTerms {
    /// Include the Gaussian quality prior at each write.
    pub quality_prior: bool,
    /// Skip each response's first vote.
    pub exclude_first_vote: bool,
}

impl Default for LoglikTerms {
    fn default() -> Self {
        Self {
            quality_prior: true,
            exclude_first_vote: false,
        }
    }
}

/// Voting-phase log-likelihood, evaluated directly on replayed states.
pub fn voting_loglik(
    ds: &Dataset,
    params: &VotingParams,
    urn: &UrnConfig,
    terms: LoglikTerms,
) -> Result<f64, VotingError> {
    let mut total = 0.0;
    for item in &ds.items {
        let states = replay(item, urn);
        for (ev, state) in item.events.iter().zip(&states) {
            match ev.action {
                Action::Write { .. } => {
                    if terms.quality_prior {
                        let j = state.n_responses();
                        let q = params.quality_of(&item.item_id, j)?;
                        total += log_normal_prior(q, params.sigma2);
                    }
                }
                Action::Vote { response, polarity } => {
                    if terms.exclude_first_vote && state.responses[response].total_votes() == 0 {
                        continue;
                    }
                    let q = params.quality_of(&item.item_id, response)?;
                    let g = polarity_score(state, response, params, &item.item_id)?;
                    total += vote_log_prob(q + g, polarity.is_positive());
                }
            }
        }
    }
    Ok(total)
}
