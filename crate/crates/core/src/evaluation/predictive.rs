//! Next-action prediction with items aligned at their first event.
//!
//! For each cutoff `t = 1..horizon-1`, every model is fitted on the events
//! with within-item index `<= t`, warm-started from its fit at `t - 1`, and
//! scores each item's event at index `t + 1`. Selection and voting are
//! scored separately. Averages weight every predicted event equally.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::selection::{
    fit_tau_summary, CrpWeights, RankBase, SelectionDesign, SelectionError, SelectionParams,
};
use crate::trajectory::{Dataset, UrnConfig};
use crate::voting::{
    fit_design, vote_log_prob, Feature, FeatureMask, FitOptions, Theta, VotingDesign,
};

use super::EvalError;

pub const DEFAULT_HORIZON: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub horizon: usize,
    pub alpha: f64,
    pub rank_base: RankBase,
    pub crp_weights: CrpWeights,
    pub urn: UrnConfig,
    pub fit: FitOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            alpha: 0.5,
            rank_base: RankBase::Zero,
            crp_weights: CrpWeights::PseudoCount,
            urn: UrnConfig::default(),
            fit: FitOptions::default(),
        }
    }
}

impl EvalOptions {
    pub fn check(&self) -> Result<(), EvalError> {
        if self.horizon < 2 {
            return Err(EvalError::InvalidOption(
                "horizon must be at least 2".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(SelectionError::InvalidAlpha(self.alpha).into());
        }
        self.urn
            .check()
            .map_err(|e| EvalError::InvalidOption(e.to_string()))?;
        self.fit.check()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Selection,
    Voting,
}

/// Summed negative log-likelihoods of the events at one predicted index.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScores {
    /// Within-item index of the predicted events.
    pub t: usize,
    pub n_selection: usize,
    pub n_votes: usize,
    pub cvp: f64,
    pub crp: f64,
    /// One entry per voting model, in report order.
    pub voting: Vec<f64>,
}

/// Average next-action NLL of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub phase: Phase,
    pub model: String,
    pub nll: f64,
    pub n: usize,
}

/// Fit of a voting model on the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingScore {
    pub model: String,
    pub objective: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub horizon: usize,
    pub voting_models: Vec<FeatureMask>,
    pub steps: Vec<StepScores>,
    pub training: Vec<TrainingScore>,
}

#[derive(Serialize)]
struct StepRow<'a> {
    t: usize,
    phase: Phase,
    model: &'a str,
    n: usize,
    nll: f64,
}

impl EvalReport {
    fn mean(total: f64, n: usize) -> f64 {
        if n == 0 {
            f64::NAN
        } else {
            total / n as f64
        }
    }

    pub fn n_selection(&self) -> usize {
        self.steps.iter().map(|s| s.n_selection).sum()
    }

    pub fn n_votes(&self) -> usize {
        self.steps.iter().map(|s| s.n_votes).sum()
    }

    pub fn selection_nll_cvp(&self) -> f64 {
        Self::mean(self.steps.iter().map(|s| s.cvp).sum(), self.n_selection())
    }

    pub fn selection_nll_crp(&self) -> f64 {
        Self::mean(self.steps.iter().map(|s| s.crp).sum(), self.n_selection())
    }

    /// Average voting NLL of the model at position `k`.
    pub fn voting_nll(&self, k: usize) -> f64 {
        Self::mean(self.steps.iter().map(|s| s.voting[k]).sum(), self.n_votes())
    }

    /// Averages: CVP and CRP selection rows, then one row per voting model.
    pub fn summary(&self) -> Vec<ModelScore> {
        let mut rows = vec![
            ModelScore {
                phase: Phase::Selection,
                model: "CVP".into(),
                nll: self.selection_nll_cvp(),
                n: self.n_selection(),
            },
            ModelScore {
                phase: Phase::Selection,
                model: "CRP".into(),
                nll: self.selection_nll_crp(),
                n: self.n_selection(),
            },
        ];
        for (k, mask) in self.voting_models.iter().enumerate() {
            rows.push(ModelScore {
                phase: Phase::Voting,
                model: mask.label(),
                nll: self.voting_nll(k),
                n: self.n_votes(),
            });
        }
        rows
    }

    /// Writes `phase,model,nll,n`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.summary() {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `t,phase,model,n,nll` with the mean NLL at each predicted
    /// index. Steps without events of a phase are omitted.
    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let labels: Vec<String> = self.voting_models.iter().map(|m| m.label()).collect();
        let mut w = csv::Writer::from_writer(out);
        for s in &self.steps {
            if s.n_selection > 0 {
                for (model, total) in [("CVP", s.cvp), ("CRP", s.crp)] {
                    w.serialize(StepRow {
                        t: s.t,
                        phase: Phase::Selection,
                        model,
                        n: s.n_selection,
                        nll: total / s.n_selection as f64,
                    })?;
                }
            }
            if s.n_votes > 0 {
                for (label, total) in labels.iter().zip(&s.voting) {
                    w.serialize(StepRow {
                        t: s.t,
                        phase: Phase::Voting,
                        model: label,
                        n: s.n_votes,
                        nll: total / s.n_votes as f64,
                    })?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `model,objective,loglik` for the whole-data fits.
    pub fn write_training_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.training {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Summed selection NLLs (CVP, CRP) and counts per cutoff.
fn selection_chain(
    design: &SelectionDesign,
    opts: &EvalOptions,
) -> Result<Vec<(usize, f64, f64)>, EvalError> {
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(opts.horizon - 1);
    for cutoff in 1..opts.horizon {
        let cutoff = cutoff as u32;
        let summary = design.filter(|t, _| t <= cutoff).summary(opts.rank_base);
        match fit_tau_summary(&summary, opts.alpha, tau) {
            Ok(fit) => tau = fit.tau,
            // every tau explains the data equally well; keep the last one
            Err(SelectionError::Unidentifiable) => {}
            Err(e) => return Err(e.into()),
        }
        let params = SelectionParams {
            tau,
            alpha: opts.alpha,
            rank_base: opts.rank_base,
        };
        let (mut n, mut cvp, mut crp) = (0, 0.0, 0.0);
        for o in design.obs.iter().filter(|o| o.t == cutoff + 1) {
            n += 1;
            cvp -= o.cvp_log_prob(&params);
            crp -= o.crp_log_prob(opts.alpha, opts.crp_weights);
        }
        out.push((n, cvp, crp));
    }
    Ok(out)
}

/// Summed voting NLLs and counts per cutoff for one mask.
fn voting_chain(
    design: &VotingDesign,
    mask: FeatureMask,
    opts: &EvalOptions,
) -> Result<Vec<(usize, f64)>, EvalError> {
    let mut theta = Theta::zeros(design);
    let mut out = Vec::with_capacity(opts.horizon - 1);
    for cutoff in 1..opts.horizon {
        let cutoff = cutoff as u32;
        let next: Vec<_> = design.votes.iter().filter(|v| v.t == cutoff + 1).collect();
        if !next.is_empty() {
            let train = design.filter(|t, _| t <= cutoff);
            theta = fit_design(&train, &theta, mask, &opts.fit)?.theta;
        }
        let nll: f64 = next
            .iter()
            .map(|v| -vote_log_prob(theta.logit(v), v.positive))
            .sum();
        out.push((next.len(), nll));
    }
    Ok(out)
}

fn training_score(
    design: &VotingDesign,
    mask: FeatureMask,
    opts: &EvalOptions,
) -> Result<TrainingScore, EvalError> {
    let fit = fit_design(design, &Theta::zeros(design), mask, &opts.fit)?;
    Ok(TrainingScore {
        model: mask.label(),
        objective: fit.objective,
        loglik: fit.loglik,
    })
}

/// Predictive NLL of the CVP and CRP selection models and of each voting
/// model in `masks`, with whole-data training fits for the latter.
pub fn predictive_nll(
    ds: &Dataset,
    masks: &[FeatureMask],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    opts.check()?;
    let sel_design = SelectionDesign::build(ds)?;
    let vote_design = VotingDesign::build(ds, &opts.urn);

    let (selection, voting) = rayon::join(
        || selection_chain(&sel_design, opts),
        || {
            masks
                .par_iter()
                .map(|&mask| {
                    Ok((
                        voting_chain(&vote_design, mask, opts)?,
                        training_score(&vote_design, mask, opts)?,
                    ))
                })
                .collect::<Result<Vec<_>, EvalError>>()
        },
    );
    let selection = selection?;
    let voting = voting?;

    let steps = (0..opts.horizon - 1)
        .map(|k| {
            let (n_selection, cvp, crp) = selection[k];
            StepScores {
                t: k + 2,
                n_selection,
                n_votes: voting.first().map_or(0, |(chain, _)| chain[k].0),
                cvp,
                crp,
                voting: voting.iter().map(|(chain, _)| chain[k].1).collect(),
            }
        })
        .collect();
    Ok(EvalReport {
        horizon: opts.horizon,
        voting_models: masks.to_vec(),
        steps,
        training: voting.into_iter().map(|(_, t)| t).collect(),
    })
}

/// Every on/off combination of the groups `q`, `lambda + mu` and `nu`,
/// from the null model up to the full model.
pub fn ablation_masks() -> Vec<FeatureMask> {
    let groups: [&[Feature]; 3] = [
        &[Feature::Quality],
        &[Feature::Lambda, Feature::Mu],
        &[Feature::Nu],
    ];
    (0..8u8)
        .map(|bits| {
            let off: Vec<Feature> = (0..3)
                .filter(|&g| bits & (1 << g) == 0)
                .flat_map(|g| groups[g].iter().copied())
                .collect();
            FeatureMask::full().knock_out(&off)
        })
        .collect()
}

pub fn ablation_grid(ds: &Dataset, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    predictive_nll(ds, &ablation_masks(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Action, ActionRecord, ItemTrajectory, Polarity};

    fn coin_item(id: &str, n_votes: usize) -> ItemTrajectory {
        let mut events = vec![ActionRecord {
            t: 1,
            action: Action::Write { length: 10 },
            display_order: None,
            seq: 0,
        }];
        for k in 0..n_votes {
            events.push(ActionRecord {
                t: k + 2,
                action: Action::Vote {
                    response: 0,
                    polarity: if k % 2 == 0 {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    },
                },
                display_order: Some(vec![0]),
                seq: k as u64 + 1,
            });
        }
        ItemTrajectory {
            item_id: id.into(),
            events,
            gaps: vec![],
        }
    }

    #[test]
    fn coin_flip_voting_model() {
        let ds = Dataset::new("c", vec![coin_item("a", 9), coin_item("b", 6)]);
        let opts = EvalOptions {
            horizon: 10,
            ..Default::default()
        };
        let report = predictive_nll(&ds, &[FeatureMask::none()], &opts).unwrap();
        assert_eq!(report.n_votes(), 15);
        assert!((report.voting_nll(0) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(report.steps.len(), 9);
        assert_eq!(report.steps[0].t, 2);
    }

    #[test]
    fn ablation_grid_shape() {
        let masks = ablation_masks();
        assert_eq!(masks.len(), 8);
        assert_eq!(masks[0], FeatureMask::none());
        assert_eq!(masks[7], FeatureMask::full());
        let ds = Dataset::new("c", vec![coin_item("a", 5)]);
        let report = ablation_grid(
            &ds,
            &EvalOptions {
                horizon: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.summary().len(), 10);
        assert_eq!(report.training.len(), 8);
    }

    #[test]
    fn csv_headers() {
        let ds = Dataset::new("c", vec![coin_item("a", 3)]);
        let report = predictive_nll(
            &ds,
            &[FeatureMask::none()],
            &EvalOptions {
                horizon: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("phase,model,nll,n\nselection,CVP,"),
            "{text}"
        );
        let mut buf = Vec::new();
        report.write_steps_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,phase,model,n,nll\n2,selection,CVP,1,"));
    }

    #[test]
    fn rejects_short_horizon() {
        let ds = Dataset::new("c", vec![coin_item("a", 3)]);
        let opts = EvalOptions {
            horizon: 1,
            ..Default::default()
        };
        assert!(matches!(
            predictive_nll(&ds, &[], &opts),
            Err(EvalError::InvalidOption(_))
        ));
    }
}
