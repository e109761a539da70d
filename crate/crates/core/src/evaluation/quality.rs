//! How well two rankings of the final snapshot track comment sentiment.
//!
//! Responses are ordered once by display rank and once by fitted quality.
//! Each ordering is cut into bins of consecutive responses, and the binned
//! (mean score, mean sentiment) curve is summarized by the residual of a
//! least-squares line and by its bumpiness, the mean absolute change
//! between consecutive segment slopes.

use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::trajectory::{Dataset, ItemTrajectory};
use crate::voting::VotingParams;

use super::EvalError;

pub const DEFAULT_BIN_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualKind {
    #[default]
    MeanSquared,
    MeanAbsolute,
}

/// `(v - mean) / sd` with the population standard deviation.
pub fn rank_zscore(values: &[f64]) -> Result<Vec<f64>, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinnedPoint {
    pub score: f64,
    pub sentiment: f64,
    pub count: usize,
}

/// Averages contiguous runs of `bin_size` `(score, sentiment)` rows, sorted
/// by score; the last bin takes the remainder.
pub fn bin_average(rows: &[(f64, f64)], bin_size: usize) -> Vec<BinnedPoint> {
    assert!(bin_size >= 1, "bin size must be positive");
    rows.chunks(bin_size)
        .map(|chunk| {
            let n = chunk.len() as f64;
            BinnedPoint {
                score: chunk.iter().map(|r| r.0).sum::<f64>() / n,
                sentiment: chunk.iter().map(|r| r.1).sum::<f64>() / n,
                count: chunk.len(),
            }
        })
        .collect()
}

/// The configured bin size, shrunk to `ceil(n / 20)` when fewer than three
/// full bins would fit.
pub fn effective_bin_size(n: usize, bin_size: usize) -> usize {
    if n < 3 * bin_size {
        n.div_ceil(20).max(1)
    } else {
        bin_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Ordinary least squares of `y` on `x` and the mean squared (or absolute)
/// deviation from the line.
pub fn regression_residual(
    points: &[(f64, f64)],
    kind: ResidualKind,
) -> Result<LineFit, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(EvalError::DegenerateX);
    }
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dev = points.iter().map(|p| p.1 - (intercept + slope * p.0));
    let residual = match kind {
        ResidualKind::MeanSquared => dev.map(|d| d * d).sum::<f64>() / n,
        ResidualKind::MeanAbsolute => dev.map(f64::abs).sum::<f64>() / n,
    };
    Ok(LineFit {
        slope,
        intercept,
        residual,
    })
}

/// Mean absolute difference of consecutive segment slopes.
pub fn bumpiness(points: &[(f64, f64)]) -> Result<f64, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let slopes = points
        .windows(2)
        .map(|w| {
            let dx = w[1].0 - w[0].0;
            if dx == 0.0 {
                Err(EvalError::DuplicateX(w[0].0))
            } else {
                Ok((w[1].1 - w[0].1) / dx)
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let total: f64 = slopes.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (slopes.len() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRow {
    pub item: String,
    pub response: usize,
    pub display_rank: usize,
    pub display_rank_z: f64,
    pub quality: f64,
    pub quality_z: f64,
    pub comment_count: u32,
    pub avg_sentiment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingCurve {
    pub ranking: String,
    pub points: Vec<BinnedPoint>,
    pub fit: LineFit,
    pub bumpiness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
    pub bin_size: usize,
    pub display: RankingCurve,
    pub quality: RankingCurve,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    ranking: &'a str,
    score: f64,
    sentiment: f64,
    count: usize,
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    ranking: &'a str,
    slope: f64,
    intercept: f64,
    residual: f64,
    bumpiness: f64,
    points: usize,
}

impl QualityReport {
    /// Writes one row per response with metadata.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `ranking,score,sentiment,count` for both binned curves.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for curve in [&self.display, &self.quality] {
            for p in &curve.points {
                w.serialize(CurveRow {
                    ranking: &curve.ranking,
                    score: p.score,
                    sentiment: p.sentiment,
                    count: p.count,
                })?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `ranking,slope,intercept,residual,bumpiness,points`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for curve in [&self.display, &self.quality] {
            w.serialize(CurveSummary {
                ranking: &curve.ranking,
                slope: curve.fit.slope,
                intercept: curve.fit.intercept,
                residual: curve.fit.residual,
                bumpiness: curve.bumpiness,
                points: curve.points.len(),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QualityOptions {
    pub bin_size: usize,
    pub residual: ResidualKind,
}

impl Default for QualityOptions {
    fn default() -> Self {
        Self {
            bin_size: DEFAULT_BIN_SIZE,
            residual: ResidualKind::MeanSquared,
        }
    }
}

/// Final display ranks (1-based, per response). The last recorded display
/// order fixes the responses it lists; responses written after it follow
/// in arrival order.
fn final_ranks(item: &ItemTrajectory) -> Vec<usize> {
    let n = item.final_responses();
    let order: Vec<usize> = item
        .events
        .iter()
        .rev()
        .find_map(|e| e.display_order.clone())
        .unwrap_or_default();
    let mut ranks = vec![0; n];
    for (pos, j) in order.iter().copied().chain(order.len()..n).enumerate() {
        ranks[j] = pos + 1;
    }
    ranks
}

/// Averages the y of consecutive points with identical x.
fn coalesce(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for (x, y) in points {
        match out.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => out.push((x, y, 1)),
        }
    }
    out.into_iter().map(|(x, y, n)| (x, y / n as f64)).collect()
}

fn ranking_curve(
    name: &str,
    mut scored: Vec<(f64, f64, usize)>,
    bin_size: usize,
    kind: ResidualKind,
) -> Result<RankingCurve, EvalError> {
    // ties keep row order so the curve is deterministic
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let rows: Vec<(f64, f64)> = scored.iter().map(|&(s, y, _)| (s, y)).collect();
    let points = bin_average(&rows, bin_size);
    let xy = coalesce(points.iter().map(|p| (p.score, p.sentiment)).collect());
    Ok(RankingCurve {
        ranking: name.to_string(),
        fit: regression_residual(&xy, kind)?,
        bumpiness: bumpiness(&xy)?,
        points,
    })
}

/// Display-rank and fitted-quality curves against comment sentiment.
pub fn quality_analysis(
    ds: &Dataset,
    params: &VotingParams,
    opts: &QualityOptions,
) -> Result<QualityReport, EvalError> {
    if opts.bin_size == 0 {
        return Err(EvalError::InvalidOption("bin size must be positive".into()));
    }
    let mut rows = Vec::new();
    for item in &ds.items {
        let ranks = final_ranks(item);
        let z = if ranks.len() >= 2 {
            rank_zscore(&ranks.iter().map(|&r| r as f64).collect::<Vec<_>>())?
        } else {
            vec![0.0; ranks.len()]
        };
        for (j, (&rank, &zj)) in ranks.iter().zip(&z).enumerate() {
            let Some(meta) = ds.metadata.get(&(item.item_id.clone(), j)) else {
                continue;
            };
            rows.push(QualityRow {
                item: item.item_id.clone(),
                response: j,
                display_rank: rank,
                display_rank_z: zj,
                quality: params.quality_of(&item.item_id, j)?,
                quality_z: 0.0,
                comment_count: meta.comment_count,
                avg_sentiment: meta.avg_sentiment,
            });
        }
    }
    if rows.iter().all(|r| r.avg_sentiment.is_none()) {
        return Err(EvalError::MissingMetadata);
    }
    let qz = rank_zscore(&rows.iter().map(|r| r.quality).collect::<Vec<_>>())?;
    for (row, z) in rows.iter_mut().zip(qz) {
        row.quality_z = z;
    }

    let with_sentiment: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.avg_sentiment.map(|s| (k, s)))
        .collect();
    let skipped = rows.len() - with_sentiment.len();
    if skipped > 0 {
        warn!("{skipped} responses without sentiment left out of the curves");
    }
    let bin_size = effective_bin_size(with_sentiment.len(), opts.bin_size);
    // higher scores mean better positions: rank 1 is the top
    let display = with_sentiment
        .iter()
        .map(|&(k, s)| (-rows[k].display_rank_z, s, k))
        .collect();
    let quality = with_sentiment
        .iter()
        .map(|&(k, s)| (rows[k].quality_z, s, k))
        .collect();
    Ok(QualityReport {
        display: ranking_curve("display", display, bin_size, opts.residual)?,
        quality: ranking_curve("quality", quality, bin_size, opts.residual)?,
        bin_size,
        rows,
    })
}
