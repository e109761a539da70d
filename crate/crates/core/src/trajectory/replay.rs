//! Deterministic replay of a trajectory into per-step feature states.

use super::{Action, ItemTrajectory, UrnConfig};

/// Replayed counters and features of one response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseState {
    pub pos_votes: u32,
    pub neg_votes: u32,
    /// `x0 + w * pos_votes`
    pub urn_x: f64,
    /// `y0 + w * neg_votes`
    pub urn_y: f64,
    pub ratio_pos: f64,
    /// `urn_y / (urn_x + urn_y)`; sums with `ratio_pos` to exactly 1 whenever
    /// `urn_x + urn_y` is exact, as with integer or dyadic urn settings.
    pub ratio_neg: f64,
    pub length: u32,
    /// Length relative to the item's current mean length.
    pub rel_length: f64,
    /// 1-based position in the display order seen by the next user, when
    /// the next event carries one.
    pub display_rank: Option<usize>,
    /// Event index of the most recent vote on this response.
    pub last_vote_t: Option<usize>,
}

impl ResponseState {
    fn new(length: u32, urn: &UrnConfig) -> Self {
        let mut s = Self {
            pos_votes: 0,
            neg_votes: 0,
            urn_x: 0.0,
            urn_y: 0.0,
            ratio_pos: 0.0,
            ratio_neg: 0.0,
            length,
            rel_length: 1.0,
            display_rank: None,
            last_vote_t: None,
        };
        s.refresh_urn(urn);
        s
    }

    fn refresh_urn(&mut self, urn: &UrnConfig) {
        self.urn_x = urn.x0 + urn.w * self.pos_votes as f64;
        self.urn_y = urn.y0 + urn.w * self.neg_votes as f64;
        let total = self.urn_x + self.urn_y;
        self.ratio_pos = self.urn_x / total;
        self.ratio_neg = self.urn_y / total;
    }

    pub fn total_votes(&self) -> u32 {
        self.pos_votes + self.neg_votes
    }

    /// `n+ - n-`
    pub fn score(&self) -> i64 {
        self.pos_votes as i64 - self.neg_votes as i64
    }
}

/// State of an item immediately before event `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemState {
    pub t: usize,
    pub responses: Vec<ResponseState>,
    pub mean_length: f64,
}

impl Default for ItemState {
    fn default() -> Self {
        Self::empty()
    }
}

impl ItemState {
    /// State before the first event of an item.
    pub fn empty() -> Self {
        Self {
            t: 1,
            responses: Vec::new(),
            mean_length: 0.0,
        }
    }

    /// Current response count, `J`.
    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }

    /// Installs the display order (best first) seen by the next user.
    pub fn set_display_order(&mut self, order: Option<&[usize]>) {
        for r in &mut self.responses {
            r.display_rank = None;
        }
        if let Some(order) = order {
            for (pos, &j) in order.iter().enumerate() {
                self.responses[j].display_rank = Some(pos + 1);
            }
        }
    }

    /// Display order implied by the installed ranks, if complete.
    pub fn display_order(&self) -> Option<Vec<usize>> {
        let mut order = vec![usize::MAX; self.responses.len()];
        for (j, r) in self.responses.iter().enumerate() {
            order[r.display_rank? - 1] = j;
        }
        Some(order)
    }

    /// Applies event `self.t` and advances to the state before `t + 1`.
    pub fn apply(&mut self, action: &Action, urn: &UrnConfig) {
        match *action {
            Action::Write { length } => {
                self.responses.push(ResponseState::new(length, urn));
                let total: f64 = self.responses.iter().map(|r| r.length as f64).sum();
                self.mean_length = total / self.responses.len() as f64;
                for r in &mut self.responses {
                    r.rel_length = r.length as f64 / self.mean_length;
                }
            }
            Action::Vote { response, polarity } => {
                let r = &mut self.responses[response];
                if polarity.is_positive() {
                    r.pos_votes += 1;
                } else {
                    r.neg_votes += 1;
                }
                r.last_vote_t = Some(self.t);
                r.refresh_urn(urn);
            }
        }
        for r in &mut self.responses {
            r.display_rank = None;
        }
        self.t += 1;
    }
}

/// Replays a trajectory; element `k` is the state before event `k + 1`,
/// with the display ranks that event carries.
pub fn replay(traj: &ItemTrajectory, urn: &UrnConfig) -> Vec<ItemState> {
    let mut states = Vec::with_capacity(traj.events.len());
    let mut state = ItemState::empty();
    for ev in &traj.events {
        state.set_display_order(ev.display_order.as_deref());
        states.push(state.clone());
        state.apply(&ev.action, urn);
    }
    states
}
