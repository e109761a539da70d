//! Run settings: defaults, overridden by a TOML file, overridden by flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use cvp_core::coefficients::Timeline;
use cvp_core::evaluation::ResidualKind;
use cvp_core::selection::RankBase;
use cvp_core::simulator::{RankMechanism, TieBreak};
use cvp_core::UrnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RankBaseArg {
    Zero,
    One,
}

impl From<RankBaseArg> for RankBase {
    fn from(v: RankBaseArg) -> Self {
        match v {
            RankBaseArg::Zero => RankBase::Zero,
            RankBaseArg::One => RankBase::One,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismArg {
    Score,
    PositiveFraction,
    Arrival,
}

impl From<MechanismArg> for RankMechanism {
    fn from(v: MechanismArg) -> Self {
        match v {
            MechanismArg::Score => RankMechanism::ByScore,
            MechanismArg::PositiveFraction => RankMechanism::ByPositiveFraction,
            MechanismArg::Arrival => RankMechanism::ByArrival,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreakArg {
    Arrival,
    LastVote,
}

impl From<TieBreakArg> for TieBreak {
    fn from(v: TieBreakArg) -> Self {
        match v {
            TieBreakArg::Arrival => TieBreak::ByArrival,
            TieBreakArg::LastVote => TieBreak::ByLastVote,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TimelineArg {
    File,
    Aligned,
}

impl From<TimelineArg> for Timeline {
    fn from(v: TimelineArg) -> Self {
        match v {
            TimelineArg::File => Timeline::FileOrder,
            TimelineArg::Aligned => Timeline::Aligned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualArg {
    Squared,
    Absolute,
}

impl From<ResidualArg> for ResidualKind {
    fn from(v: ResidualArg) -> Self {
        match v {
            ResidualArg::Squared => ResidualKind::MeanSquared,
            ResidualArg::Absolute => ResidualKind::MeanAbsolute,
        }
    }
}

/// Fully resolved settings, echoed as `config.toml` into output directories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub alpha: f64,
    pub sigma2: f64,
    pub ridge: f64,
    pub urn: [f64; 3],
    pub knockout: String,
    pub horizon: usize,
    pub refit_stride: usize,
    pub bin_size: usize,
    pub seed: u64,
    /// 0 uses every core.
    pub threads: usize,
    pub exclude_first_vote: bool,
    pub rank_base: RankBaseArg,
    pub max_iters: usize,
    pub timeline: TimelineArg,
    pub invert_majority: bool,
    pub exclude_first_community_vote: bool,
    pub residual: ResidualArg,
    pub filter: bool,
    pub min_responses: usize,
    pub stitch_gap: u32,
    pub rank_mechanism: MechanismArg,
    pub tie_break: TieBreakArg,
    pub tau: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu_mean: f64,
    pub nu_sd: f64,
    pub items: usize,
    pub events: usize,
    pub community: String,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma2: 1.0,
            ridge: 0.5,
            urn: [1.0, 1.0, 1.0],
            knockout: String::new(),
            horizon: 50,
            refit_stride: 25,
            bin_size: 1000,
            seed: 0,
            threads: 0,
            exclude_first_vote: true,
            rank_base: RankBaseArg::Zero,
            max_iters: 100,
            timeline: TimelineArg::File,
            invert_majority: false,
            exclude_first_community_vote: false,
            residual: ResidualArg::Squared,
            filter: false,
            min_responses: 5,
            stitch_gap: 3,
            rank_mechanism: MechanismArg::Score,
            tie_break: TieBreakArg::Arrival,
            tau: 1.0,
            lambda: 0.0,
            mu: 0.0,
            nu_mean: 0.0,
            nu_sd: 0.0,
            items: 100,
            events: 50,
            community: "sim".into(),
        }
    }
}

/// Command-line overrides. Every field is optional so unset flags fall
/// through to the config file and then to the defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// New-response propensity.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Prior variance of response quality.
    #[arg(long, global = true)]
    pub sigma2: Option<f64>,
    /// Ridge weight on lambda, mu and nu.
    #[arg(long, global = true)]
    pub ridge: Option<f64>,
    /// Urn pseudo-votes and increment as x0,y0,w.
    #[arg(long, global = true, value_parser = parse_urn)]
    pub urn: Option<[f64; 3]>,
    /// Comma-separated parameter groups to pin to zero (q, lambda, mu, nu).
    #[arg(long, global = true)]
    pub knockout: Option<String>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub refit_stride: Option<usize>,
    #[arg(long, global = true)]
    pub bin_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Leave each response's first vote out of the voting fit.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub exclude_first_vote: Option<bool>,
    #[arg(long, global = true, value_enum)]
    pub rank_base: Option<RankBaseArg>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Vote order used by the conformity chain.
    #[arg(long, global = true, value_enum)]
    pub timeline: Option<TimelineArg>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub invert_majority: Option<bool>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub exclude_first_community_vote: Option<bool>,
    #[arg(long, global = true, value_enum)]
    pub residual: Option<ResidualArg>,
    /// Drop sparse or fragmented items and stitch small gaps before use.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub filter: Option<bool>,
    #[arg(long, global = true)]
    pub min_responses: Option<usize>,
    #[arg(long, global = true)]
    pub stitch_gap: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub rank_mechanism: Option<MechanismArg>,
    #[arg(long, global = true, value_enum)]
    pub tie_break: Option<TieBreakArg>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu_mean: Option<f64>,
    #[arg(long, global = true)]
    pub nu_sd: Option<f64>,
    /// Simulated items.
    #[arg(long, global = true)]
    pub items: Option<usize>,
    /// Events per simulated item.
    #[arg(long, global = true)]
    pub events: Option<usize>,
    /// Community id for simulated data.
    #[arg(long, global = true)]
    pub community: Option<String>,
}

fn parse_urn(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x0,y0,w, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

macro_rules! layer {
    ($base:expr, $over:expr, $($field:ident),*) => {
        $( if let Some(v) = $over.$field.clone() { $base.$field = v; } )*
    };
}

impl Settings {
    fn apply(&mut self, o: &Overrides) {
        layer!(
            self,
            o,
            alpha,
            sigma2,
            ridge,
            urn,
            knockout,
            horizon,
            refit_stride,
            bin_size,
            seed,
            threads,
            exclude_first_vote,
            rank_base,
            max_iters,
            timeline,
            invert_majority,
            exclude_first_community_vote,
            residual,
            filter,
            min_responses,
            stitch_gap,
            rank_mechanism,
            tie_break,
            tau,
            lambda,
            mu,
            nu_mean,
            nu_sd,
            items,
            events,
            community
        );
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(config: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let file: Overrides = toml::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            s.apply(&file);
        }
        s.apply(flags);
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("sigma2", self.sigma2),
            ("ridge", self.ridge),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be a positive finite number, got {v}");
            }
        }
        self.urn_config()?;
        cvp_core::voting::parse_knockout(&self.knockout)?;
        let at_least_one = [
            ("refit-stride", self.refit_stride),
            ("bin-size", self.bin_size),
            ("max-iters", self.max_iters),
            ("items", self.items),
            ("events", self.events),
        ];
        for (name, v) in at_least_one {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.horizon < 2 {
            bail!("horizon must be at least 2, got {}", self.horizon);
        }
        for (name, v) in [
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("nu-mean", self.nu_mean),
        ] {
            if !v.is_finite() {
                bail!("{name} must be finite");
            }
        }
        if self.community.is_empty()
            || !self
                .community
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            bail!(
                "community must be a non-empty file-name-safe id, got {:?}",
                self.community
            );
        }
        if !(self.nu_sd.is_finite() && self.nu_sd >= 0.0) {
            bail!("nu-sd must be non-negative, got {}", self.nu_sd);
        }
        Ok(())
    }

    pub fn urn_config(&self) -> Result<UrnConfig> {
        let [x0, y0, w] = self.urn;
        Ok(UrnConfig::new(x0, y0, w)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "alpha = 0.8\nhorizon = 20\nurn = [2.0, 2.0, 1.0]\n").unwrap();
        let flags = Overrides {
            alpha: Some(0.3),
            ..Default::default()
        };
        let s = Settings::resolve(Some(&path), &flags).unwrap();
        assert_eq!(s.alpha, 0.3);
        assert_eq!(s.horizon, 20);
        assert_eq!(s.urn, [2.0, 2.0, 1.0]);
        assert_eq!(s.sigma2, 1.0);
    }

    #[test]
    fn echo_round_trips() {
        let s = Settings::default();
        let back: Settings = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = Overrides {
            alpha: Some(0.0),
            ..Default::default()
        };
        assert!(Settings::resolve(None, &bad).is_err());
        assert!(parse_urn("1,1").is_err());
        assert_eq!(parse_urn("1, 2,0.5").unwrap(), [1.0, 2.0, 0.5]);
        let unknown = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(unknown.path(), "alpah = 1\n").unwrap();
        assert!(Settings::resolve(Some(unknown.path()), &Overrides::default()).is_err());
    }
}
