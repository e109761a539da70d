//! Event-log data model.
//!
//! An item (a product or a question) accumulates responses (reviews or
//! answers) and helpfulness votes on those responses. The log records every
//! write and every vote together with the display order the acting user saw,
//! so the whole trajectory of an item is observed.

mod event_log;
mod filter;
mod replay;

pub use self::event_log::{
    ingest_event_log, ingest_metadata, write_event_log, write_metadata, IngestError,
};
pub use self::filter::{
    preprocess_filter, FilterReport, DEFAULT_MIN_RESPONSES, DEFAULT_STITCH_GAP,
};
pub use self::replay::{replay, ItemState, ResponseState};

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

/// Polarity of a helpfulness vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }
}

/// What a user did at one step of an item's trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// A new response of `length` characters.
    Write { length: u32 },
    /// A vote on an existing response (0-based index in write order).
    Vote { response: usize, polarity: Polarity },
}

/// One observed event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRecord {
    /// 1-based index within the item.
    pub t: usize,
    pub action: Action,
    /// Response indices best-first, as displayed immediately before this
    /// event. Always present for votes; optional for writes.
    pub display_order: Option<Vec<usize>>,
    /// Position in the community-wide event sequence (file order).
    pub seq: u64,
}

impl ActionRecord {
    pub fn is_write(&self) -> bool {
        matches!(self.action, Action::Write { .. })
    }
}

/// Marker for unobserved votes between two fragments of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapMarker {
    /// The gap sits immediately before event `before_t`.
    pub before_t: usize,
    pub votes_missing: u32,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemTrajectory {
    pub item_id: String,
    pub events: Vec<ActionRecord>,
    pub gaps: Vec<GapMarker>,
}

impl ItemTrajectory {
    /// Total number of events, `T`.
    pub fn total_events(&self) -> usize {
        self.events.len()
    }

    /// Number of responses after the last event.
    pub fn final_responses(&self) -> usize {
        self.events.iter().filter(|e| e.is_write()).count()
    }

    pub fn n_votes(&self) -> usize {
        self.total_events() - self.final_responses()
    }

    /// Checks the structural invariants of a trajectory.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let err = |t: usize, kind: TrajectoryErrorKind| TrajectoryError {
            item_id: self.item_id.clone(),
            t,
            kind,
        };
        if self.events.is_empty() {
            return Err(err(0, TrajectoryErrorKind::Empty));
        }
        let mut responses = 0usize;
        for (k, ev) in self.events.iter().enumerate() {
            if ev.t != k + 1 {
                return Err(err(
                    ev.t,
                    TrajectoryErrorKind::NonContiguousTime { expected: k + 1 },
                ));
            }
            if let Some(order) = &ev.display_order {
                if !is_permutation(order, responses) {
                    return Err(err(
                        ev.t,
                        TrajectoryErrorKind::BadDisplayOrder { responses },
                    ));
                }
            }
            match ev.action {
                Action::Write { length } => {
                    if length == 0 {
                        return Err(err(ev.t, TrajectoryErrorKind::ZeroLength));
                    }
                    responses += 1;
                }
                Action::Vote { response, .. } => {
                    if response >= responses {
                        return Err(err(
                            ev.t,
                            TrajectoryErrorKind::DanglingVote {
                                response,
                                responses,
                            },
                        ));
                    }
                    if ev.display_order.is_none() {
                        return Err(err(ev.t, TrajectoryErrorKind::MissingDisplayOrder));
                    }
                }
            }
        }
        for gap in &self.gaps {
            if gap.before_t < 2 || gap.before_t > self.events.len() {
                return Err(err(gap.before_t, TrajectoryErrorKind::GapOutOfRange));
            }
        }
        Ok(())
    }
}

pub(crate) fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &j in order {
        if j >= n || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// Per-response side information used by the quality analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMeta {
    pub comment_count: u32,
    /// Average comment sentiment in [-5, 5], absent when no comment was scored.
    pub avg_sentiment: Option<f64>,
    pub group_tag: Option<String>,
}

/// A community: a set of items with their full trajectories.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub community_id: String,
    pub items: Vec<ItemTrajectory>,
    /// Keyed by (item_id, response index).
    pub metadata: BTreeMap<(String, usize), ResponseMeta>,
}

impl Dataset {
    pub fn new(community_id: impl Into<String>, items: Vec<ItemTrajectory>) -> Self {
        Self {
            community_id: community_id.into(),
            items,
            metadata: BTreeMap::new(),
        }
    }

    /// Number of items, `m`.
    pub fn m(&self) -> usize {
        self.items.len()
    }

    /// Total number of votes, `n`.
    pub fn n_votes(&self) -> usize {
        self.items.iter().map(ItemTrajectory::n_votes).sum()
    }

    pub fn item(&self, item_id: &str) -> Option<&ItemTrajectory> {
        self.items.iter().find(|it| it.item_id == item_id)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let mut ids = HashSet::new();
        for item in &self.items {
            if !ids.insert(item.item_id.as_str()) {
                return Err(TrajectoryError {
                    item_id: item.item_id.clone(),
                    t: 0,
                    kind: TrajectoryErrorKind::DuplicateItem,
                });
            }
            item.validate()?;
        }
        Ok(())
    }

    /// Attaches per-response metadata; rows must reference existing responses.
    pub fn attach_metadata(
        &mut self,
        rows: Vec<(String, usize, ResponseMeta)>,
    ) -> Result<(), TrajectoryError> {
        for (item_id, response, meta) in rows {
            let exists = self
                .item(&item_id)
                .map(|it| response < it.final_responses())
                .unwrap_or(false);
            if !exists {
                return Err(TrajectoryError {
                    item_id,
                    t: 0,
                    kind: TrajectoryErrorKind::UnknownResponse { response },
                });
            }
            self.metadata.insert((item_id, response), meta);
        }
        Ok(())
    }

    /// Group tag of an item: the tag of its lowest-indexed tagged response.
    pub fn item_group(&self, item_id: &str) -> Option<&str> {
        self.metadata
            .range((item_id.to_string(), 0)..)
            .take_while(|((id, _), _)| id == item_id)
            .find_map(|(_, meta)| meta.group_tag.as_deref())
    }

    /// Restricts the dataset to the given items, keeping metadata for them.
    pub fn subset<F: Fn(&ItemTrajectory) -> bool>(&self, keep: F) -> Dataset {
        let items: Vec<ItemTrajectory> = self.items.iter().filter(|it| keep(it)).cloned().collect();
        let ids: HashSet<&str> = items.iter().map(|it| it.item_id.as_str()).collect();
        let metadata = self
            .metadata
            .iter()
            .filter(|((id, _), _)| ids.contains(id.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Dataset {
            community_id: self.community_id.clone(),
            items,
            metadata,
        }
    }
}

/// Pólya-urn pseudo-votes and reinforcement increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrnConfig {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
}

impl Default for UrnConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            y0: 1.0,
            w: 1.0,
        }
    }
}

impl UrnConfig {
    pub fn new(x0: f64, y0: f64, w: f64) -> Result<Self, InvalidUrn> {
        let urn = Self { x0, y0, w };
        urn.check()?;
        Ok(urn)
    }

    pub fn check(&self) -> Result<(), InvalidUrn> {
        for (name, v) in [("x0", self.x0), ("y0", self.y0), ("w", self.w)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(InvalidUrn { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("urn parameter {name} must be a positive finite number, got {value}")]
pub struct InvalidUrn {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrajectoryErrorKind {
    Empty,
    DuplicateItem,
    NonContiguousTime { expected: usize },
    ZeroLength,
    DanglingVote { response: usize, responses: usize },
    BadDisplayOrder { responses: usize },
    MissingDisplayOrder,
    GapOutOfRange,
    UnknownResponse { response: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("item {item_id:?} at t={t}: {kind}")]
pub struct TrajectoryError {
    pub item_id: String,
    pub t: usize,
    pub kind: TrajectoryErrorKind,
}

impl std::fmt::Display for TrajectoryErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Empty => write!(f, "item has no events"),
            Self::DuplicateItem => write!(f, "duplicate item id"),
            Self::NonContiguousTime { expected } => {
                write!(f, "non-contiguous time index (expected t={expected})")
            }
            Self::ZeroLength => write!(f, "write with zero length"),
            Self::DanglingVote {
                response,
                responses,
            } => write!(
                f,
                "vote on response {response} but only {responses} responses exist"
            ),
            Self::BadDisplayOrder { responses } => write!(
                f,
                "display order is not a permutation of the {responses} existing responses"
            ),
            Self::MissingDisplayOrder => write!(f, "vote without a display order"),
            Self::GapOutOfRange => write!(f, "gap marker outside the trajectory"),
            Self::UnknownResponse { response } => {
                write!(f, "metadata for unknown response {response}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(t: usize, length: u32, order: Option<Vec<usize>>) -> ActionRecord {
        ActionRecord {
            t,
            action: Action::Write { length },
            display_order: order,
            seq: t as u64,
        }
    }

    fn vote(t: usize, response: usize, polarity: Polarity, order: Vec<usize>) -> ActionRecord {
        ActionRecord {
            t,
            action: Action::Vote { response, polarity },
            display_order: Some(order),
            seq: t as u64,
        }
    }

    #[test]
    fn counts() {
        let item = ItemTrajectory {
            item_id: "a".into(),
            events: vec![
                write(1, 10, None),
                vote(2, 0, Polarity::Positive, vec![0]),
                write(3, 20, Some(vec![0])),
                vote(4, 1, Polarity::Negative, vec![1, 0]),
            ],
            gaps: vec![],
        };
        item.validate().unwrap();
        assert_eq!(item.total_events(), 4);
        assert_eq!(item.final_responses(), 2);
        assert_eq!(item.n_votes(), 2);
    }

    #[test]
    fn rejects_bad_order() {
        let item = ItemTrajectory {
            item_id: "a".into(),
            events: vec![
                write(1, 10, None),
                write(2, 5, Some(vec![0])),
                vote(3, 0, Polarity::Positive, vec![0, 0]),
            ],
            gaps: vec![],
        };
        let e = item.validate().unwrap_err();
        assert_eq!(e.t, 3);
        assert_eq!(
            e.kind,
            TrajectoryErrorKind::BadDisplayOrder { responses: 2 }
        );
    }

    #[test]
    fn urn_rejects_non_positive() {
        assert!(UrnConfig::new(1.0, 0.0, 1.0).is_err());
        assert!(UrnConfig::new(1.0, 1.0, f64::NAN).is_err());
        assert!(UrnConfig::new(0.5, 2.0, 3.0).is_ok());
    }

    #[test]
    fn duplicate_items_rejected() {
        let item = ItemTrajectory {
            item_id: "a".into(),
            events: vec![write(1, 10, None)],
            gaps: vec![],
        };
        let ds = Dataset::new("c", vec![item.clone(), item]);
        assert_eq!(
            ds.validate().unwrap_err().kind,
            TrajectoryErrorKind::DuplicateItem
        );
    }
}
