use super::Dataset;

/// What [`preprocess_filter`] did to each item.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    /// Items with fewer than `min_responses` responses.
    pub dropped_few_responses: Vec<String>,
    /// Items with a gap wider than `stitch_gap` votes.
    pub dropped_fragmented: Vec<String>,
    /// Items whose gaps were all narrow enough to stitch.
    pub stitched: Vec<String>,
}

pub const DEFAULT_MIN_RESPONSES: usize = 5;
pub const DEFAULT_STITCH_GAP: u32 = 3;

/// Drops small and irreparably fragmented items; stitches the rest.
///
/// Stitching removes the gap markers, which carries the last observed state
/// of the earlier fragment forward into the later one.
pub fn preprocess_filter(
    ds: &Dataset,
    min_responses: usize,
    stitch_gap: u32,
) -> (Dataset, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::new();
    for item in &ds.items {
        if item.final_responses() < min_responses {
            report.dropped_few_responses.push(item.item_id.clone());
            continue;
        }
        if item.gaps.iter().any(|g| g.votes_missing > stitch_gap) {
            report.dropped_fragmented.push(item.item_id.clone());
            continue;
        }
        let mut item = item.clone();
        if !item.gaps.is_empty() {
            item.gaps.clear();
            report.stitched.push(item.item_id.clone());
        }
        kept.push(item);
    }
    let kept_ids: std::collections::HashSet<String> =
        kept.iter().map(|i| i.item_id.clone()).collect();
    let out = Dataset {
        community_id: ds.community_id.clone(),
        items: kept,
        metadata: ds
            .metadata
            .iter()
            .filter(|((id, _), _)| kept_ids.contains(id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Action, ActionRecord, GapMarker, ItemTrajectory, Polarity};

    fn item(id: &str, responses: usize, gap: Option<u32>) -> ItemTrajectory {
        let mut events: Vec<ActionRecord> = (0..responses)
            .map(|j| ActionRecord {
                t: j + 1,
                action: Action::Write { length: 10 },
                display_order: Some((0..j).collect()),
                seq: 0,
            })
            .collect();
        for k in 0..2 {
            let t = events.len() + 1;
            events.push(ActionRecord {
                t,
                action: Action::Vote {
                    response: k % responses,
                    polarity: Polarity::Positive,
                },
                display_order: Some((0..responses).collect()),
                seq: 0,
            });
        }
        let gaps = gap
            .map(|votes_missing| {
                vec![GapMarker {
                    before_t: events.len(),
                    votes_missing,
                    seq: 0,
                }]
            })
            .unwrap_or_default();
        ItemTrajectory {
            item_id: id.into(),
            events,
            gaps,
        }
    }

    #[test]
    fn drops_small_items() {
        let ds = Dataset::new("c", vec![item("small", 4, None), item("big", 5, None)]);
        let (out, report) = preprocess_filter(&ds, 5, 3);
        assert_eq!(out.m(), 1);
        assert_eq!(out.items[0].item_id, "big");
        assert_eq!(report.dropped_few_responses, vec!["small".to_string()]);
    }

    #[test]
    fn threshold_one_is_identity() {
        let ds = Dataset::new("c", vec![item("a", 1, None), item("b", 3, None)]);
        let (out, report) = preprocess_filter(&ds, 1, 3);
        assert_eq!(out, ds);
        assert_eq!(report, FilterReport::default());
    }

    #[test]
    fn stitches_narrow_gaps_and_drops_wide_ones() {
        let ds = Dataset::new(
            "c",
            vec![item("narrow", 5, Some(2)), item("wide", 5, Some(4))],
        );
        let (out, report) = preprocess_filter(&ds, 5, 3);
        assert_eq!(out.m(), 1);
        assert!(out.items[0].gaps.is_empty());
        assert_eq!(out.items[0].events, ds.items[0].events);
        assert_eq!(report.stitched, vec!["narrow".to_string()]);
        assert_eq!(report.dropped_fragmented, vec!["wide".to_string()]);
    }
}
