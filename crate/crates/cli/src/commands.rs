use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};

use cvp_core::coefficients::{self, CoeffError, CoeffRow, ConformityOptions};
use cvp_core::evaluation::{self, EvalError, EvalOptions, QualityOptions};
use cvp_core::params_io::{read_params, write_params, ParamsFile};
use cvp_core::selection::{fit_tau, SelectionError, SelectionParams};
use cvp_core::simulator::{simulate_community, NuDistribution, SimConfig};
use cvp_core::trajectory::{ingest_event_log, ingest_metadata, preprocess_filter, write_event_log};
use cvp_core::voting::{
    fit_voting, parse_knockout, FeatureMask, FitOptions, VotingError, VotingParams,
};
use cvp_core::Dataset;

use crate::config::Settings;
use crate::output::OutputDir;

/// A failed run and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, configuration or I/O: exit code 1.
    Input(anyhow::Error),
    /// The data could not be fitted or scored: exit code 2.
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Numerical(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.into())
    }
}

fn numerical(numeric: bool, e: impl Into<anyhow::Error>) -> Failure {
    if numeric {
        Failure::Numerical(e.into())
    } else {
        Failure::Input(e.into())
    }
}

fn is_numeric_voting(e: &VotingError) -> bool {
    matches!(e, VotingError::NonFinite { .. })
}

fn is_numeric_selection(e: &SelectionError) -> bool {
    matches!(e, SelectionError::Unidentifiable)
}

impl From<VotingError> for Failure {
    fn from(e: VotingError) -> Self {
        numerical(is_numeric_voting(&e), e)
    }
}

impl From<SelectionError> for Failure {
    fn from(e: SelectionError) -> Self {
        numerical(is_numeric_selection(&e), e)
    }
}

impl From<CoeffError> for Failure {
    fn from(e: CoeffError) -> Self {
        let numeric = match &e {
            CoeffError::Selection(s) => is_numeric_selection(s),
            CoeffError::Voting(v) => is_numeric_voting(v),
            CoeffError::NoVotes => true,
            CoeffError::InvalidOption(_) | CoeffError::Csv(_) => false,
        };
        numerical(numeric, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let numeric = match &e {
            EvalError::Selection(s) => is_numeric_selection(s),
            EvalError::Voting(v) => is_numeric_voting(v),
            EvalError::ZeroVariance
            | EvalError::DegenerateX
            | EvalError::DuplicateX(_)
            | EvalError::TooFewPoints { .. } => true,
            EvalError::MissingMetadata | EvalError::InvalidOption(_) | EvalError::Csv(_) => false,
        };
        numerical(numeric, e)
    }
}

pub type Outcome = Result<(), Failure>;

fn open_input(path: &Path) -> anyhow::Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn community_of(path: &Path, settings: &Settings) -> String {
    if path.as_os_str() == "-" {
        return settings.community.clone();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| settings.community.clone())
}

/// Reads, validates and optionally filters an event log.
pub fn load_dataset(
    input: &Path,
    metadata: Option<&Path>,
    settings: &Settings,
) -> Result<Dataset, Failure> {
    let community = community_of(input, settings);
    let mut ds = ingest_event_log(&community, open_input(input)?)
        .map_err(|e| anyhow!(e).context(format!("reading {}", input.display())))?;
    if let Some(path) = metadata {
        let rows = ingest_metadata(open_input(path)?)
            .map_err(|e| anyhow!(e).context(format!("reading {}", path.display())))?;
        ds.attach_metadata(rows)
            .map_err(|e| anyhow!(e).context(format!("attaching {}", path.display())))?;
    }
    if settings.filter {
        let (filtered, report) =
            preprocess_filter(&ds, settings.min_responses, settings.stitch_gap);
        info!(
            "filter kept {} of {} items ({} sparse, {} fragmented dropped; {} stitched)",
            filtered.m(),
            ds.m(),
            report.dropped_few_responses.len(),
            report.dropped_fragmented.len(),
            report.stitched.len()
        );
        ds = filtered;
    }
    Ok(ds)
}

fn fit_options(s: &Settings) -> FitOptions {
    FitOptions {
        sigma2: s.sigma2,
        ridge: s.ridge,
        max_iters: s.max_iters,
        exclude_first_vote: s.exclude_first_vote,
        ..Default::default()
    }
}

fn echo_config(out: &OutputDir, settings: &Settings) -> anyhow::Result<()> {
    let text = settings.to_toml();
    out.write("config.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(())
}

pub fn validate(input: &Path, metadata: Option<&Path>, settings: &Settings) -> Outcome {
    let ds = load_dataset(input, metadata, settings)?;
    let responses: usize = ds.items.iter().map(|i| i.final_responses()).sum();
    let gaps: usize = ds.items.iter().map(|i| i.gaps.len()).sum();
    let (_, report) = preprocess_filter(&ds, settings.min_responses, settings.stitch_gap);
    let mut out = io::stdout().lock();
    writeln!(out, "community\t{}", ds.community_id)?;
    writeln!(out, "items\t{}", ds.m())?;
    writeln!(out, "responses\t{responses}")?;
    writeln!(out, "votes\t{}", ds.n_votes())?;
    writeln!(out, "gaps\t{gaps}")?;
    writeln!(out, "metadata_rows\t{}", ds.metadata.len())?;
    writeln!(out, "sparse_items\t{}", report.dropped_few_responses.len())?;
    writeln!(out, "fragmented_items\t{}", report.dropped_fragmented.len())?;
    writeln!(out, "stitchable_items\t{}", report.stitched.len())?;
    Ok(())
}

pub fn simulate(output_dir: Option<&Path>, settings: &Settings) -> Outcome {
    let cfg = SimConfig {
        community_id: settings.community.clone(),
        selection: SelectionParams {
            tau: settings.tau,
            alpha: settings.alpha,
            rank_base: settings.rank_base.into(),
        },
        lambda: settings.lambda,
        mu: settings.mu,
        sigma2: settings.sigma2,
        nu: NuDistribution {
            mean: settings.nu_mean,
            sd: settings.nu_sd,
        },
        urn: settings.urn_config()?,
        rank_mechanism: settings.rank_mechanism.into(),
        tie_break: settings.tie_break.into(),
        t_max: settings.events,
        m: settings.items,
        seed: settings.seed,
        ..Default::default()
    };
    let sim = simulate_community(&cfg).map_err(anyhow::Error::from)?;
    info!(
        "simulated {} items, {} votes",
        sim.dataset.m(),
        sim.dataset.n_votes()
    );
    let Some(dir) = output_dir else {
        let mut out = io::BufWriter::new(io::stdout().lock());
        write_event_log(&sim.dataset, &mut out)?;
        out.flush()?;
        return Ok(());
    };
    let out = OutputDir::create(dir)?;
    // the file stem doubles as the community id when the log is read back
    let log_name = format!("{}.jsonl", cfg.community_id);
    out.write(&log_name, |w| Ok(write_event_log(&sim.dataset, w)?))?;
    let truth = ParamsFile {
        community_id: cfg.community_id.clone(),
        tau: Some(cfg.selection.tau),
        alpha: Some(cfg.selection.alpha),
        voting: sim.truth.voting,
    };
    out.write("truth.params", |w| Ok(write_params(&truth, w)?))?;
    echo_config(&out, settings)?;
    Ok(())
}

pub fn fit(input: &Path, output_dir: Option<&Path>, settings: &Settings) -> Outcome {
    let ds = load_dataset(input, None, settings)?;
    let urn = settings.urn_config()?;
    let tau = match fit_tau(&ds, settings.alpha, settings.rank_base.into()) {
        Ok(fit) => Some(fit),
        Err(SelectionError::Unidentifiable) => {
            warn!("tau is not identifiable from this data; leaving it out");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mask = parse_knockout(&settings.knockout)?;
    let init = VotingParams::zeros(&ds, settings.sigma2);
    let fit = fit_voting(&ds, &urn, &init, mask, &fit_options(settings))?;
    info!(
        "voting fit: objective {:.6}, loglik {:.6}, {} iterations, converged {}",
        fit.objective, fit.final_loglik, fit.iterations, fit.converged
    );
    let params = ParamsFile {
        community_id: ds.community_id.clone(),
        tau: tau.map(|t| t.tau),
        alpha: Some(settings.alpha),
        voting: fit.params.clone(),
    };
    let Some(dir) = output_dir else {
        write_params(&params, io::stdout().lock())?;
        return Ok(());
    };
    let out = OutputDir::create(dir)?;
    out.write("params.txt", |w| Ok(write_params(&params, w)?))?;
    out.write("fit_summary.csv", |w| {
        writeln!(w, "key,value")?;
        writeln!(w, "community,{}", ds.community_id)?;
        writeln!(w, "mask,{}", mask.label())?;
        writeln!(w, "n_votes,{}", ds.n_votes())?;
        match &tau {
            Some(t) => {
                writeln!(w, "tau,{:?}", t.tau)?;
                writeln!(w, "tau_loglik,{:?}", t.loglik)?;
                let saturated = t
                    .saturated
                    .map(|s| format!("{s:?}").to_lowercase())
                    .unwrap_or_default();
                writeln!(w, "tau_saturated,{saturated}")?;
            }
            None => writeln!(w, "tau,")?,
        }
        writeln!(w, "objective,{:?}", fit.objective)?;
        writeln!(w, "loglik,{:?}", fit.final_loglik)?;
        writeln!(w, "grad_norm,{:e}", fit.grad_norm)?;
        writeln!(w, "iterations,{}", fit.iterations)?;
        writeln!(w, "converged,{}", fit.converged)?;
        Ok(())
    })?;
    echo_config(&out, settings)?;
    Ok(())
}

fn conformity_options(settings: &Settings) -> Result<ConformityOptions, Failure> {
    Ok(ConformityOptions {
        fit: fit_options(settings),
        mask: parse_knockout(&settings.knockout)?,
        refit_stride: settings.refit_stride,
        timeline: settings.timeline.into(),
        invert_majority: settings.invert_majority,
        exclude_first_community_vote: settings.exclude_first_community_vote,
        ..Default::default()
    })
}

pub fn coeffs(
    inputs: &[PathBuf],
    metadata: Option<&Path>,
    output_dir: Option<&Path>,
    emit_embedding: bool,
    settings: &Settings,
) -> Outcome {
    if metadata.is_some() && inputs.len() != 1 {
        return Err(anyhow!("--metadata applies to a single --input").into());
    }
    let urn = settings.urn_config()?;
    let opts = conformity_options(settings)?;
    let mut rows: Vec<CoeffRow> = Vec::new();
    let mut embedding: Vec<CoeffRow> = Vec::new();
    for input in inputs {
        let ds = load_dataset(input, metadata, settings)?;
        let report = coefficients::coefficient_report(
            &ds,
            &urn,
            settings.alpha,
            settings.rank_base.into(),
            &opts,
        )?;
        info!(
            "{}: trendiness {:.6}, conformity {:.6} over {} votes",
            report.community_id, report.trendiness, report.conformity, report.n_votes_used
        );
        let all = report.rows();
        embedding.push(all[0].clone());
        rows.extend(all);
    }
    let Some(dir) = output_dir else {
        coefficients::write_rows(&rows, io::stdout().lock())?;
        return Ok(());
    };
    let out = OutputDir::create(dir)?;
    out.write("coefficients.csv", |w| {
        Ok(coefficients::write_rows(&rows, w)?)
    })?;
    if emit_embedding {
        out.write("embedding.csv", |w| {
            Ok(coefficients::write_rows(&embedding, w)?)
        })?;
    }
    echo_config(&out, settings)?;
    Ok(())
}

pub fn eval(input: &Path, output_dir: &Path, settings: &Settings) -> Outcome {
    let ds = load_dataset(input, None, settings)?;
    let opts = EvalOptions {
        horizon: settings.horizon,
        alpha: settings.alpha,
        rank_base: settings.rank_base.into(),
        urn: settings.urn_config()?,
        fit: fit_options(settings),
        ..Default::default()
    };
    let masks = if settings.knockout.trim().is_empty() {
        evaluation::ablation_masks()
    } else {
        vec![FeatureMask::full(), parse_knockout(&settings.knockout)?]
    };
    let report = evaluation::predictive_nll(&ds, &masks, &opts)?;
    for row in report.summary() {
        info!(
            "{:?} {}: nll {:.6} over {}",
            row.phase, row.model, row.nll, row.n
        );
    }
    let out = OutputDir::create(output_dir)?;
    out.write("eval_summary.csv", |w| Ok(report.write_summary_csv(w)?))?;
    out.write("eval_steps.csv", |w| Ok(report.write_steps_csv(w)?))?;
    out.write("eval_training.csv", |w| Ok(report.write_training_csv(w)?))?;
    echo_config(&out, settings)?;
    Ok(())
}

pub fn quality(
    input: &Path,
    metadata: &Path,
    params: Option<&Path>,
    output_dir: &Path,
    settings: &Settings,
) -> Outcome {
    let ds = load_dataset(input, Some(metadata), settings)?;
    let voting = match params {
        Some(path) => {
            let reader = io::BufReader::new(open_input(path)?);
            read_params(reader)
                .map_err(|e| anyhow!(e).context(format!("reading {}", path.display())))?
                .voting
        }
        None => {
            let init = VotingParams::zeros(&ds, settings.sigma2);
            let urn = settings.urn_config()?;
            fit_voting(
                &ds,
                &urn,
                &init,
                FeatureMask::full(),
                &fit_options(settings),
            )?
            .params
        }
    };
    let opts = QualityOptions {
        bin_size: settings.bin_size,
        residual: settings.residual.into(),
    };
    let report = evaluation::quality_analysis(&ds, &voting, &opts)?;
    for curve in [&report.display, &report.quality] {
        info!(
            "{} ranking: residual {:.6}, bumpiness {:.6}, {} points",
            curve.ranking,
            curve.fit.residual,
            curve.bumpiness,
            curve.points.len()
        );
    }
    let out = OutputDir::create(output_dir)?;
    out.write("quality_rows.csv", |w| Ok(report.write_rows_csv(w)?))?;
    out.write("quality_curves.csv", |w| Ok(report.write_curves_csv(w)?))?;
    out.write("quality_summary.csv", |w| Ok(report.write_summary_csv(w)?))?;
    echo_config(&out, settings)?;
    Ok(())
}
