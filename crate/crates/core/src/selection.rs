//! Selection phase: which response the next user acts on.
//!
//! A user either votes on an existing response `j`, with weight
//! `f(j) = (1 / (1 + k_j))^tau` where `k_j` is the response's internal rank
//! (see [`RankBase`]), or writes a new response with weight `alpha`.
//!
//! Because display ranks are a permutation of `1..=J`, the normalizer
//! `alpha + sum_j f(j)` depends only on `J`. The dataset log-likelihood
//! therefore reduces to counts per `J` plus the summed log-decay of the
//! chosen ranks, which is what [`SelectionSummary`] stores.

use std::collections::BTreeMap;

use log::warn;
use thiserror::Error;

use crate::trajectory::{replay, Action, Dataset, ItemState, UrnConfig};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const TAU_BRACKET: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("item {item:?} t={t}: event has no display order")]
    MissingDisplayOrder { item: String, t: usize },
    #[error("no selection event with enough responses to inform tau")]
    Unidentifiable,
    #[error("alpha must be a positive finite number, got {0}")]
    InvalidAlpha(f64),
}

/// How a 1-based display rank maps to the internal rank `k` in `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankBase {
    /// `k = rank - 1`; the top response has `f = 1`.
    #[default]
    Zero,
    /// `k = rank`; the top response has `f = 2^-tau`.
    One,
}

impl RankBase {
    /// `ln(1 / (1 + k))` for a 1-based display rank.
    #[inline]
    pub fn log_decay(self, display_rank: usize) -> f64 {
        match self {
            RankBase::Zero => -(display_rank as f64).ln(),
            RankBase::One => -((display_rank + 1) as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub tau: f64,
    pub alpha: f64,
    pub rank_base: RankBase,
}

impl SelectionParams {
    pub fn new(tau: f64, alpha: f64) -> Self {
        Self {
            tau,
            alpha,
            rank_base: RankBase::Zero,
        }
    }

    fn check(&self) -> Result<(), SelectionError> {
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<(), SelectionError> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(SelectionError::InvalidAlpha(alpha))
    }
}

/// Popularity of the response at a 1-based display rank, top = 1.
pub fn popularity(display_rank: usize, tau: f64) -> f64 {
    popularity_with_base(display_rank, tau, RankBase::Zero)
}

pub fn popularity_with_base(display_rank: usize, tau: f64, base: RankBase) -> f64 {
    debug_assert!(display_rank >= 1);
    (tau * base.log_decay(display_rank)).exp()
}

/// Probabilities over the `J` existing responses (in response order)
/// followed by writing a new one.
pub fn selection_distribution(
    state: &ItemState,
    params: &SelectionParams,
) -> Result<Vec<f64>, SelectionError> {
    params.check()?;
    let mut weights = Vec::with_capacity(state.n_responses() + 1);
    for r in &state.responses {
        let rank = r.display_rank.ok_or(SelectionError::MissingDisplayOrder {
            item: String::new(),
            t: state.t,
        })?;
        weights.push(popularity_with_base(rank, params.tau, params.rank_base));
    }
    weights.push(params.alpha);
    Ok(normalize(weights))
}

/// How the CRP baseline weighs existing responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrpWeights {
    /// `1 + votes`: the writer counts as a pseudo-vote.
    #[default]
    PseudoCount,
    /// `votes` exactly; unvoted responses cannot be selected.
    Literal,
}

impl CrpWeights {
    #[inline]
    fn weight(self, votes: u32) -> f64 {
        match self {
            CrpWeights::PseudoCount => 1.0 + votes as f64,
            CrpWeights::Literal => votes as f64,
        }
    }
}

/// CRP baseline distribution, laid out like [`selection_distribution`].
pub fn crp_selection_distribution(
    state: &ItemState,
    alpha: f64,
    weights: CrpWeights,
) -> Result<Vec<f64>, SelectionError> {
    check_alpha(alpha)?;
    let mut w: Vec<f64> = state
        .responses
        .iter()
        .map(|r| weights.weight(r.total_votes()))
        .collect();
    w.push(alpha);
    Ok(normalize(w))
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Write,
    Select { display_rank: u32 },
}

/// One non-forced selection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionObs {
    pub item: u32,
    pub t: u32,
    pub seq: u64,
    /// Responses available, `J >= 1`.
    pub n_responses: u32,
    pub choice: Choice,
    /// Votes on the chosen response before the event (0 for writes).
    pub chosen_votes: u32,
    /// Votes on all responses before the event.
    pub total_votes: u32,
}

impl SelectionObs {
    /// `ln p` of the observed choice under the rank-decay model.
    pub fn cvp_log_prob(&self, params: &SelectionParams) -> f64 {
        let norm: f64 = params.alpha
            + (1..=self.n_responses as usize)
                .map(|k| popularity_with_base(k, params.tau, params.rank_base))
                .sum::<f64>();
        let num = match self.choice {
            Choice::Write => params.alpha.ln(),
            Choice::Select { display_rank } => {
                params.tau * params.rank_base.log_decay(display_rank as usize)
            }
        };
        num - norm.ln()
    }

    /// `ln p` of the observed choice under the CRP baseline.
    pub fn crp_log_prob(&self, alpha: f64, weights: CrpWeights) -> f64 {
        let mass = match weights {
            CrpWeights::PseudoCount => self.n_responses as f64 + self.total_votes as f64,
            CrpWeights::Literal => self.total_votes as f64,
        };
        let num = match self.choice {
            Choice::Write => alpha,
            Choice::Select { .. } => weights.weight(self.chosen_votes),
        };
        num.ln() - (alpha + mass).ln()
    }
}

/// Selection events of a dataset, skipping each item's forced first write.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionDesign {
    pub obs: Vec<SelectionObs>,
}

impl SelectionDesign {
    pub fn build(ds: &Dataset) -> Result<Self, SelectionError> {
        let urn = UrnConfig::default();
        let mut obs = Vec::new();
        for (i, item) in ds.items.iter().enumerate() {
            for (ev, st) in item.events.iter().zip(replay(item, &urn)) {
                let j = st.n_responses();
                if j == 0 {
                    continue;
                }
                let total_votes = st.responses.iter().map(|r| r.total_votes()).sum();
                let (choice, chosen_votes) = match ev.action {
                    Action::Write { .. } => (Choice::Write, 0),
                    Action::Vote { response, .. } => {
                        let rank = st.responses[response].display_rank.ok_or_else(|| {
                            SelectionError::MissingDisplayOrder {
                                item: item.item_id.clone(),
                                t: ev.t,
                            }
                        })?;
                        (
                            Choice::Select {
                                display_rank: rank as u32,
                            },
                            st.responses[response].total_votes(),
                        )
                    }
                };
                obs.push(SelectionObs {
                    item: i as u32,
                    t: ev.t as u32,
                    seq: ev.seq,
                    n_responses: j as u32,
                    choice,
                    chosen_votes,
                    total_votes,
                });
            }
        }
        Ok(Self { obs })
    }

    pub fn filter<F: Fn(u32, u64) -> bool>(&self, keep: F) -> Self {
        Self {
            obs: self
                .obs
                .iter()
                .filter(|o| keep(o.t, o.seq))
                .copied()
                .collect(),
        }
    }

    pub fn summary(&self, base: RankBase) -> SelectionSummary {
        let mut s = SelectionSummary {
            base,
            ..Default::default()
        };
        for o in &self.obs {
            *s.by_responses.entry(o.n_responses).or_default() += 1;
            match o.choice {
                Choice::Write => s.n_write += 1,
                Choice::Select { display_rank } => {
                    s.chosen_log_decay += base.log_decay(display_rank as usize)
                }
            }
        }
        s
    }

    /// Total CRP log-likelihood.
    pub fn crp_loglik(&self, alpha: f64, weights: CrpWeights) -> f64 {
        self.obs
            .iter()
            .map(|o| o.crp_log_prob(alpha, weights))
            .sum()
    }
}

/// Sufficient statistics of the rank-decay selection likelihood.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionSummary {
    pub base: RankBase,
    pub n_write: u64,
    /// Sum of `ln(1 / (1 + k))` over chosen responses.
    pub chosen_log_decay: f64,
    /// Event counts keyed by the number of available responses.
    pub by_responses: BTreeMap<u32, u64>,
}

impl SelectionSummary {
    /// Whether any event's normalizer depends on `tau`.
    pub fn is_identifiable(&self) -> bool {
        let min_j = match self.base {
            RankBase::Zero => 2,
            RankBase::One => 1,
        };
        self.by_responses.keys().any(|&j| j >= min_j)
    }

    /// Log-likelihood and its first two derivatives in `tau`.
    pub fn derivatives(&self, tau: f64, alpha: f64) -> (f64, f64, f64) {
        let mut value = self.n_write as f64 * alpha.ln() + tau * self.chosen_log_decay;
        let mut grad = self.chosen_log_decay;
        let mut hess = 0.0;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut k = 0usize;
        for (&j, &count) in &self.by_responses {
            while k < j as usize {
                k += 1;
                let a = self.base.log_decay(k);
                let f = (tau * a).exp();
                s0 += f;
                s1 += f * a;
                s2 += f * a * a;
            }
            let norm = alpha + s0;
            let mean = s1 / norm;
            let c = count as f64;
            value -= c * norm.ln();
            grad -= c * mean;
            hess -= c * (s2 / norm - mean * mean);
        }
        (value, grad, hess)
    }

    pub fn loglik(&self, tau: f64, alpha: f64) -> f64 {
        self.derivatives(tau, alpha).0
    }
}

/// Selection log-likelihood over every non-forced event of `ds`.
pub fn selection_loglik(ds: &Dataset, params: &SelectionParams) -> Result<f64, SelectionError> {
    params.check()?;
    let summary = SelectionDesign::build(ds)?.summary(params.rank_base);
    Ok(summary.loglik(params.tau, params.alpha))
}

/// Derivative of [`selection_loglik`] with respect to `tau`.
pub fn selection_grad_tau(ds: &Dataset, params: &SelectionParams) -> Result<f64, SelectionError> {
    params.check()?;
    let summary = SelectionDesign::build(ds)?.summary(params.rank_base);
    Ok(summary.derivatives(params.tau, params.alpha).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauFit {
    pub tau: f64,
    pub loglik: f64,
    pub gradient: f64,
    pub iterations: usize,
    /// Set when the maximizer lies on the search bracket.
    pub saturated: Option<Saturation>,
}

/// Maximizes the selection log-likelihood over `tau`.
pub fn fit_tau(ds: &Dataset, alpha: f64, base: RankBase) -> Result<TauFit, SelectionError> {
    check_alpha(alpha)?;
    let summary = SelectionDesign::build(ds)?.summary(base);
    fit_tau_summary(&summary, alpha, 0.0)
}

/// Root of the decreasing derivative by Newton steps safeguarded with
/// bisection on the bracket [`TAU_BRACKET`].
pub fn fit_tau_summary(
    summary: &SelectionSummary,
    alpha: f64,
    start: f64,
) -> Result<TauFit, SelectionError> {
    check_alpha(alpha)?;
    if !summary.is_identifiable() {
        return Err(SelectionError::Unidentifiable);
    }
    let (mut lo, mut hi) = TAU_BRACKET;
    let (l_hi, g_hi, _) = summary.derivatives(hi, alpha);
    if g_hi >= 0.0 {
        warn!("tau saturated at upper bracket {hi}");
        return Ok(TauFit {
            tau: hi,
            loglik: l_hi,
            gradient: g_hi,
            iterations: 0,
            saturated: Some(Saturation::Upper),
        });
    }
    let (l_lo, g_lo, _) = summary.derivatives(lo, alpha);
    if g_lo <= 0.0 {
        warn!("tau saturated at lower bracket {lo}");
        return Ok(TauFit {
            tau: lo,
            loglik: l_lo,
            gradient: g_lo,
            iterations: 0,
            saturated: Some(Saturation::Lower),
        });
    }

    let mut tau = start.clamp(lo, hi);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (value, grad, hess) = summary.derivatives(tau, alpha);
        if grad == 0.0 || iterations > 200 {
            return Ok(fit_at(tau, value, grad, iterations));
        }
        if grad > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = tau - grad / hess;
        let next = if hess < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - tau).abs();
        tau = next;
        if step <= 1e-12 * (1.0 + tau.abs()) || hi - lo <= 1e-12 {
            let (value, grad, _) = summary.derivatives(tau, alpha);
            return Ok(fit_at(tau, value, grad, iterations));
        }
    }
}

fn fit_at(tau: f64, loglik: f64, gradient: f64, iterations: usize) -> TauFit {
    TauFit {
        tau,
        loglik,
        gradient,
        iterations,
        saturated: None,
    }
}
