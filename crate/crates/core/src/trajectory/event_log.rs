//! Line-delimited event-log and metadata sidecar formats.
//!
//! Each log line is a flat JSON object:
//!
//! ```text
//! {"item":"q1","t":1,"action":"write","length":120}
//! {"item":"q1","t":2,"action":"vote","response":0,"polarity":1,"order":[0]}
//! {"item":"q1","t":3,"action":"gap","votes_missing":2}
//! ```
//!
//! A `gap` record marks votes that were not observed between the previous
//! event and event `t`; it does not consume a time index. The canonical form
//! written by [`write_event_log`] uses the key order shown above and emits
//! records in community sequence order.

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Action, ActionRecord, Dataset, GapMarker, ItemTrajectory, Polarity, ResponseMeta,
    TrajectoryError,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record (item {item:?}, t={t:?}): {reason}")]
    MalformedRecord {
        line: usize,
        item: Option<String>,
        t: Option<usize>,
        reason: String,
    },
    #[error("line {line}: item {item:?} t={t}: non-contiguous time index")]
    NonContiguousTime { line: usize, item: String, t: usize },
    #[error(
        "line {line}: item {item:?} t={t}: vote on response {response} but only {responses} exist"
    )]
    DanglingVote {
        line: usize,
        item: String,
        t: usize,
        response: usize,
        responses: usize,
    },
    #[error("line {line}: item {item:?} t={t}: display order is not a permutation of the {responses} existing responses")]
    BadDisplayOrder {
        line: usize,
        item: String,
        t: usize,
        responses: usize,
    },
    #[error(transparent)]
    Invalid(#[from] TrajectoryError),
    #[error("metadata row {row}: {reason}")]
    MalformedMetadata { row: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl IngestError {
    /// 1-based source line of the offending record, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::MalformedRecord { line, .. }
            | Self::NonContiguousTime { line, .. }
            | Self::DanglingVote { line, .. }
            | Self::BadDisplayOrder { line, .. } => Some(*line),
            Self::MalformedMetadata { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    item: String,
    t: u64,
    action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polarity: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    votes_missing: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<Vec<u64>>,
}

enum Parsed {
    Event(ActionRecord),
    Gap(GapMarker),
}

struct Located<T> {
    line: usize,
    value: T,
}

fn parse_line(line_no: usize, text: &str, seq: u64) -> Result<(String, Parsed), IngestError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| IngestError::MalformedRecord {
        line: line_no,
        item: None,
        t: None,
        reason: e.to_string(),
    })?;
    let t = raw.t as usize;
    let bad = |reason: &str| IngestError::MalformedRecord {
        line: line_no,
        item: Some(raw.item.clone()),
        t: Some(t),
        reason: reason.to_string(),
    };
    if raw.t == 0 {
        return Err(bad("t must be >= 1"));
    }
    let order = raw
        .order
        .as_ref()
        .map(|o| o.iter().map(|&j| j as usize).collect::<Vec<_>>());
    let parsed = match raw.action.as_str() {
        "write" => {
            if raw.response.is_some() || raw.polarity.is_some() || raw.votes_missing.is_some() {
                return Err(bad("write records carry only length and order"));
            }
            let length = raw.length.ok_or_else(|| bad("write without length"))?;
            if length == 0 || length > u32::MAX as u64 {
                return Err(bad("length must be a positive 32-bit integer"));
            }
            Parsed::Event(ActionRecord {
                t,
                action: Action::Write {
                    length: length as u32,
                },
                display_order: order,
                seq,
            })
        }
        "vote" => {
            if raw.length.is_some() || raw.votes_missing.is_some() {
                return Err(bad("vote records carry only response, polarity and order"));
            }
            let response = raw.response.ok_or_else(|| bad("vote without response"))? as usize;
            let polarity = match raw.polarity {
                Some(1) => Polarity::Positive,
                Some(0) => Polarity::Negative,
                Some(_) => return Err(bad("polarity must be 0 or 1")),
                None => return Err(bad("vote without polarity")),
            };
            let order = order.ok_or_else(|| bad("vote without order"))?;
            Parsed::Event(ActionRecord {
                t,
                action: Action::Vote { response, polarity },
                display_order: Some(order),
                seq,
            })
        }
        "gap" => {
            if raw.length.is_some()
                || raw.response.is_some()
                || raw.polarity.is_some()
                || raw.order.is_some()
            {
                return Err(bad("gap records carry only votes_missing"));
            }
            let missing = raw
                .votes_missing
                .ok_or_else(|| bad("gap without votes_missing"))?;
            if missing > u32::MAX as u64 {
                return Err(bad("votes_missing out of range"));
            }
            Parsed::Gap(GapMarker {
                before_t: t,
                votes_missing: missing as u32,
                seq,
            })
        }
        other => return Err(bad(&format!("unknown action {other:?}"))),
    };
    Ok((raw.item, parsed))
}

/// Reads and validates an event log.
///
/// Items appear in order of first occurrence; within an item, events are
/// sorted by `t`. The sequence number of each record is its position among
/// the non-blank lines of the stream.
pub fn ingest_event_log<R: Read>(community_id: &str, reader: R) -> Result<Dataset, IngestError> {
    let reader = io::BufReader::new(reader);
    let mut order: Vec<String> = Vec::new();
    let mut events: HashMap<String, Vec<Located<ActionRecord>>> = HashMap::new();
    let mut gaps: HashMap<String, Vec<Located<GapMarker>>> = HashMap::new();
    let mut seq = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (item, parsed) = parse_line(line_no, text, seq)?;
        seq += 1;
        if !events.contains_key(&item) {
            order.push(item.clone());
            events.insert(item.clone(), Vec::new());
        }
        match parsed {
            Parsed::Event(value) => events.get_mut(&item).unwrap().push(Located {
                line: line_no,
                value,
            }),
            Parsed::Gap(value) => gaps.entry(item).or_default().push(Located {
                line: line_no,
                value,
            }),
        }
    }

    let mut items = Vec::with_capacity(order.len());
    for item_id in order {
        let mut evs = events.remove(&item_id).unwrap_or_default();
        evs.sort_by_key(|e| e.value.t);
        let item_gaps = gaps.remove(&item_id).unwrap_or_default();
        items.push(build_item(item_id, evs, item_gaps)?);
    }
    let ds = Dataset::new(community_id, items);
    ds.validate()?;
    Ok(ds)
}

fn build_item(
    item_id: String,
    events: Vec<Located<ActionRecord>>,
    gaps: Vec<Located<GapMarker>>,
) -> Result<ItemTrajectory, IngestError> {
    let mut responses = 0usize;
    for (k, ev) in events.iter().enumerate() {
        let rec = &ev.value;
        if rec.t != k + 1 {
            return Err(IngestError::NonContiguousTime {
                line: ev.line,
                item: item_id,
                t: rec.t,
            });
        }
        if let Some(order) = &rec.display_order {
            if !super::is_permutation(order, responses) {
                return Err(IngestError::BadDisplayOrder {
                    line: ev.line,
                    item: item_id,
                    t: rec.t,
                    responses,
                });
            }
        }
        match rec.action {
            Action::Write { .. } => responses += 1,
            Action::Vote { response, .. } => {
                if response >= responses {
                    return Err(IngestError::DanglingVote {
                        line: ev.line,
                        item: item_id,
                        t: rec.t,
                        response,
                        responses,
                    });
                }
            }
        }
    }
    for gap in &gaps {
        if gap.value.before_t < 2 || gap.value.before_t > events.len() {
            return Err(IngestError::MalformedRecord {
                line: gap.line,
                item: Some(item_id),
                t: Some(gap.value.before_t),
                reason: "gap must sit between two events of the item".into(),
            });
        }
    }
    let mut gaps: Vec<GapMarker> = gaps.into_iter().map(|g| g.value).collect();
    gaps.sort_by_key(|g| (g.before_t, g.seq));
    Ok(ItemTrajectory {
        item_id,
        events: events.into_iter().map(|e| e.value).collect(),
        gaps,
    })
}

fn raw_event(item_id: &str, rec: &ActionRecord) -> RawRecord {
    let order = rec
        .display_order
        .as_ref()
        .map(|o| o.iter().map(|&j| j as u64).collect());
    match rec.action {
        Action::Write { length } => RawRecord {
            item: item_id.to_string(),
            t: rec.t as u64,
            action: "write".into(),
            length: Some(length as u64),
            response: None,
            polarity: None,
            votes_missing: None,
            order,
        },
        Action::Vote { response, polarity } => RawRecord {
            item: item_id.to_string(),
            t: rec.t as u64,
            action: "vote".into(),
            length: None,
            response: Some(response as u64),
            polarity: Some(polarity.as_u8() as u64),
            votes_missing: None,
            order,
        },
    }
}

/// Writes the canonical form of a dataset's event log.
pub fn write_event_log<W: Write>(ds: &Dataset, mut out: W) -> io::Result<()> {
    let mut records: Vec<(u64, RawRecord)> = Vec::new();
    for item in &ds.items {
        for rec in &item.events {
            records.push((rec.seq, raw_event(&item.item_id, rec)));
        }
        for gap in &item.gaps {
            records.push((
                gap.seq,
                RawRecord {
                    item: item.item_id.clone(),
                    t: gap.before_t as u64,
                    action: "gap".into(),
                    length: None,
                    response: None,
                    polarity: None,
                    votes_missing: Some(gap.votes_missing as u64),
                    order: None,
                },
            ));
        }
    }
    records.sort_by_key(|(seq, _)| *seq);
    for (_, raw) in records {
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRow {
    item: String,
    response: usize,
    comment_count: u32,
    avg_sentiment: Option<f64>,
    group_tag: Option<String>,
}

/// Reads a metadata sidecar CSV with header
/// `item,response,comment_count,avg_sentiment,group_tag`.
pub fn ingest_metadata<R: Read>(
    reader: R,
) -> Result<Vec<(String, usize, ResponseMeta)>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (idx, rec) in rdr.deserialize::<MetaRow>().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| IngestError::MalformedMetadata {
            row,
            reason: e.to_string(),
        })?;
        if let Some(s) = rec.avg_sentiment {
            if !(-5.0..=5.0).contains(&s) {
                return Err(IngestError::MalformedMetadata {
                    row,
                    reason: format!("avg_sentiment {s} outside [-5, 5]"),
                });
            }
        }
        rows.push((
            rec.item,
            rec.response,
            ResponseMeta {
                comment_count: rec.comment_count,
                avg_sentiment: rec.avg_sentiment,
                group_tag: rec.group_tag.filter(|g| !g.is_empty()),
            },
        ));
    }
    Ok(rows)
}

pub fn write_metadata<W: Write>(ds: &Dataset, out: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(out);
    for ((item, response), meta) in &ds.metadata {
        wtr.serialize(MetaRow {
            item: item.clone(),
            response: *response,
            comment_count: meta.comment_count,
            avg_sentiment: meta.avg_sentiment,
            group_tag: meta.group_tag.clone(),
        })
        .map_err(|e| IngestError::Io(io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = concat!(
        r#"{"item":"a","t":1,"action":"write","length":100}"#,
        "\n",
        r#"{"item":"a","t":2,"action":"vote","response":0,"polarity":1,"order":[0]}"#,
        "\n"
    );

    #[test]
    fn minimal_log() {
        let ds = ingest_event_log("c", MINIMAL.as_bytes()).unwrap();
        assert_eq!(ds.m(), 1);
        assert_eq!(ds.items[0].total_events(), 2);
        assert_eq!(ds.items[0].final_responses(), 1);
        assert_eq!(ds.n_votes(), 1);
    }

    #[test]
    fn time_gap_detected() {
        let log = MINIMAL.replace(r#""t":2"#, r#""t":3"#);
        match ingest_event_log("c", log.as_bytes()) {
            Err(IngestError::NonContiguousTime { item, t, line }) => {
                assert_eq!((item.as_str(), t, line), ("a", 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_time_detected() {
        let log = MINIMAL.replace(r#""t":2"#, r#""t":1"#);
        assert!(matches!(
            ingest_event_log("c", log.as_bytes()),
            Err(IngestError::NonContiguousTime { .. })
        ));
    }

    #[test]
    fn dangling_vote_detected() {
        let log = MINIMAL.replace(r#""response":0"#, r#""response":5"#);
        match ingest_event_log("c", log.as_bytes()) {
            Err(IngestError::DanglingVote {
                response,
                responses,
                t,
                ..
            }) => {
                assert_eq!((response, responses, t), (5, 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_order_detected() {
        let log = MINIMAL.replace(r#""order":[0]"#, r#""order":[0,1]"#);
        assert!(matches!(
            ingest_event_log("c", log.as_bytes()),
            Err(IngestError::BadDisplayOrder { responses: 1, .. })
        ));
    }

    #[test]
    fn malformed_fields() {
        for bad in [
            r#"{"item":"a","t":1,"action":"write"}"#,
            r#"{"item":"a","t":1,"action":"write","length":0}"#,
            r#"{"item":"a","t":1,"action":"jump"}"#,
            r#"{"item":"a","t":"x","action":"write","length":3}"#,
            r#"{"item":"a","t":1,"action":"write","length":3,"colour":2}"#,
            "not json",
        ] {
            let err = ingest_event_log("c", bad.as_bytes()).unwrap_err();
            assert!(
                matches!(err, IngestError::MalformedRecord { line: 1, .. }),
                "{bad}: {err}"
            );
        }
        let log = MINIMAL.replace(r#""polarity":1"#, r#""polarity":2"#);
        assert!(matches!(
            ingest_event_log("c", log.as_bytes()).unwrap_err(),
            IngestError::MalformedRecord { line: 2, .. }
        ));
    }

    #[test]
    fn canonical_round_trip_with_interleaving_and_gaps() {
        let log = concat!(
            r#"{"item":"b","t":1,"action":"write","length":7}"#,
            "\n",
            r#"{"item":"a","t":1,"action":"write","length":100}"#,
            "\n",
            r#"{"item":"a","t":2,"action":"vote","response":0,"polarity":0,"order":[0]}"#,
            "\n",
            r#"{"item":"a","t":3,"action":"gap","votes_missing":2}"#,
            "\n",
            r#"{"item":"b","t":2,"action":"write","length":9,"order":[0]}"#,
            "\n",
            r#"{"item":"a","t":3,"action":"vote","response":0,"polarity":1,"order":[0]}"#,
            "\n",
        );
        let ds = ingest_event_log("c", log.as_bytes()).unwrap();
        assert_eq!(ds.items[0].item_id, "b");
        assert_eq!(ds.items[1].gaps.len(), 1);
        let mut out = Vec::new();
        write_event_log(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), log);
    }

    #[test]
    fn metadata_round_trip() {
        let mut ds = ingest_event_log("c", MINIMAL.as_bytes()).unwrap();
        let csv = "item,response,comment_count,avg_sentiment,group_tag\na,0,3,1.5,rust\n";
        let rows = ingest_metadata(csv.as_bytes()).unwrap();
        ds.attach_metadata(rows).unwrap();
        assert_eq!(ds.item_group("a"), Some("rust"));
        let mut out = Vec::new();
        write_metadata(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);

        let missing = "item,response,comment_count,avg_sentiment,group_tag\na,0,0,,\n";
        let rows = ingest_metadata(missing.as_bytes()).unwrap();
        assert_eq!(rows[0].2.avg_sentiment, None);
        assert_eq!(rows[0].2.group_tag, None);

        let dangling = "item,response,comment_count,avg_sentiment,group_tag\na,4,0,,\n";
        let rows = ingest_metadata(dangling.as_bytes()).unwrap();
        assert!(ds.attach_metadata(rows).is_err());

        let out_of_range = "item,response,comment_count,avg_sentiment,group_tag\na,0,0,7.5,\n";
        assert!(matches!(
            ingest_metadata(out_of_range.as_bytes()),
            Err(IngestError::MalformedMetadata { row: 2, .. })
        ));
    }
}
