//! Predictive next-action evaluation and final-snapshot quality analysis.

mod predictive;
mod quality;

pub use self::predictive::{
    ablation_grid, ablation_masks, predictive_nll, EvalOptions, EvalReport, ModelScore, Phase,
    StepScores, TrainingScore, DEFAULT_HORIZON,
};
pub use self::quality::{
    bin_average, bumpiness, effective_bin_size, quality_analysis, rank_zscore, regression_residual,
    BinnedPoint, LineFit, QualityOptions, QualityReport, QualityRow, RankingCurve, ResidualKind,
    DEFAULT_BIN_SIZE,
};

use thiserror::Error;

use crate::selection::SelectionError;
use crate::voting::VotingError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("values have zero variance")]
    ZeroVariance,
    #[error("all x values are equal")]
    DegenerateX,
    #[error("consecutive points share x = {0}")]
    DuplicateX(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no response carries sentiment metadata")]
    MissingMetadata,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}
