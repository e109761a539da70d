//! Flattened voting observations.
//!
//! Building the design replays every item once; fits then work on compact
//! per-vote feature rows instead of full item states. Responses are indexed
//! globally in dataset order so a [`Theta`] fitted on one truncation of the
//! data can warm-start a fit on another.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::trajectory::{replay, Action, Dataset, UrnConfig};

use super::{score, VotingParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ItemLayout {
    pub item_id: String,
    /// Index of the item's first response in the global response order.
    pub q_offset: usize,
    pub n_responses: usize,
}

/// One vote with the features of the state it was cast in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteObs {
    pub item: u32,
    /// Global response index.
    pub response: u32,
    pub positive: bool,
    pub ratio_pos: f64,
    pub ratio_neg: f64,
    pub rel_length: f64,
    pub t: u32,
    pub seq: u64,
    /// First vote the response ever received.
    pub first_vote: bool,
    /// `n+ >= n-` on the response before the vote.
    pub majority_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteObs {
    pub item: u32,
    pub response: u32,
    pub t: u32,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VotingDesign {
    pub items: Vec<ItemLayout>,
    /// Grouped by item, in time order within each item.
    pub votes: Vec<VoteObs>,
    pub writes: Vec<WriteObs>,
    vote_ranges: Vec<Range<usize>>,
    written: Vec<bool>,
}

impl VotingDesign {
    pub fn build(ds: &Dataset, urn: &UrnConfig) -> Self {
        let mut items = Vec::with_capacity(ds.items.len());
        let mut votes = Vec::new();
        let mut writes = Vec::new();
        let mut vote_ranges = Vec::with_capacity(ds.items.len());
        let mut offset = 0usize;
        for (i, item) in ds.items.iter().enumerate() {
            let n_responses = item.final_responses();
            items.push(ItemLayout {
                item_id: item.item_id.clone(),
                q_offset: offset,
                n_responses,
            });
            let start = votes.len();
            for (ev, st) in item.events.iter().zip(replay(item, urn)) {
                match ev.action {
                    Action::Write { .. } => writes.push(WriteObs {
                        item: i as u32,
                        response: (offset + st.n_responses()) as u32,
                        t: ev.t as u32,
                        seq: ev.seq,
                    }),
                    Action::Vote { response, polarity } => {
                        let r = &st.responses[response];
                        votes.push(VoteObs {
                            item: i as u32,
                            response: (offset + response) as u32,
                            positive: polarity.is_positive(),
                            ratio_pos: r.ratio_pos,
                            ratio_neg: r.ratio_neg,
                            rel_length: r.rel_length,
                            t: ev.t as u32,
                            seq: ev.seq,
                            first_vote: r.total_votes() == 0,
                            majority_positive: r.pos_votes >= r.neg_votes,
                        });
                    }
                }
            }
            vote_ranges.push(start..votes.len());
            offset += n_responses;
        }
        let written = vec![true; offset];
        Self {
            items,
            votes,
            writes,
            vote_ranges,
            written,
        }
    }

    pub fn n_responses(&self) -> usize {
        self.written.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_votes(&self, item: usize) -> &[VoteObs] {
        &self.votes[self.vote_ranges[item].clone()]
    }

    /// Whether the response's write event is part of this design.
    pub fn is_written(&self, response: usize) -> bool {
        self.written[response]
    }

    /// Keeps the events for which `keep(t, seq)` holds. The layout is
    /// unchanged; responses whose write is dropped become unwritten.
    pub fn filter<F: Fn(u32, u64) -> bool>(&self, keep: F) -> Self {
        let mut votes = Vec::new();
        let mut vote_ranges = Vec::with_capacity(self.items.len());
        for range in &self.vote_ranges {
            let start = votes.len();
            votes.extend(
                self.votes[range.clone()]
                    .iter()
                    .filter(|v| keep(v.t, v.seq))
                    .copied(),
            );
            vote_ranges.push(start..votes.len());
        }
        let writes: Vec<WriteObs> = self
            .writes
            .iter()
            .filter(|w| keep(w.t, w.seq))
            .copied()
            .collect();
        let mut written = vec![false; self.written.len()];
        for w in &writes {
            written[w.response as usize] = true;
        }
        Self {
            items: self.items.clone(),
            votes,
            writes,
            vote_ranges,
            written,
        }
    }

    /// Drops each response's first vote.
    pub fn without_first_votes(&self) -> Self {
        let mut out = self.clone();
        let mut votes = Vec::with_capacity(self.votes.len());
        for (k, range) in self.vote_ranges.iter().enumerate() {
            let start = votes.len();
            votes.extend(
                self.votes[range.clone()]
                    .iter()
                    .filter(|v| !v.first_vote)
                    .copied(),
            );
            out.vote_ranges[k] = start..votes.len();
        }
        out.votes = votes;
        out
    }
}

/// Dense parameter vector laid out by a [`VotingDesign`].
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub lambda: f64,
    pub mu: f64,
    /// One per item.
    pub nu: Vec<f64>,
    /// One per response, global order.
    pub q: Vec<f64>,
}

impl Theta {
    pub fn zeros(design: &VotingDesign) -> Self {
        Self {
            lambda: 0.0,
            mu: 0.0,
            nu: vec![0.0; design.n_items()],
            q: vec![0.0; design.n_responses()],
        }
    }

    /// Copies matching entries of `params`; anything missing stays zero.
    pub fn from_params(design: &VotingDesign, params: &VotingParams) -> Self {
        let mut theta = Self::zeros(design);
        theta.lambda = params.lambda;
        theta.mu = params.mu;
        for (i, layout) in design.items.iter().enumerate() {
            if let Some(&nu) = params.nu.get(&layout.item_id) {
                theta.nu[i] = nu;
            }
            if let Some(q) = params.quality.get(&layout.item_id) {
                for (j, &v) in q.iter().take(layout.n_responses).enumerate() {
                    theta.q[layout.q_offset + j] = v;
                }
            }
        }
        theta
    }

    pub fn to_params(&self, design: &VotingDesign, sigma2: f64) -> VotingParams {
        let mut nu = BTreeMap::new();
        let mut quality = BTreeMap::new();
        for (i, layout) in design.items.iter().enumerate() {
            nu.insert(layout.item_id.clone(), self.nu[i]);
            quality.insert(
                layout.item_id.clone(),
                self.q[layout.q_offset..layout.q_offset + layout.n_responses].to_vec(),
            );
        }
        VotingParams {
            lambda: self.lambda,
            mu: self.mu,
            nu,
            quality,
            sigma2,
        }
    }

    /// Log-odds of a positive vote for `obs`.
    #[inline]
    pub fn logit(&self, obs: &VoteObs) -> f64 {
        self.q[obs.response as usize]
            + score(
                self.lambda,
                self.mu,
                self.nu[obs.item as usize],
                obs.ratio_pos,
                obs.ratio_neg,
                obs.rel_length,
            )
    }
}
