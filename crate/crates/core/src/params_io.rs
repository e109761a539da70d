//! Tab-separated parameter files.
//!
//! ```text
//! community   <id>
//! tau         <f64>            (optional)
//! alpha       <f64>            (optional)
//! lambda      <f64>
//! mu          <f64>
//! sigma2      <f64>
//! nu          <item> <f64>     one row per item
//! q           <item> <j> <f64> one row per response
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the values bit for bit. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::voting::VotingParams;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub community_id: String,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub voting: VotingParams,
}

pub fn write_params<W: Write>(p: &ParamsFile, mut out: W) -> io::Result<()> {
    writeln!(out, "community\t{}", p.community_id)?;
    if let Some(tau) = p.tau {
        writeln!(out, "tau\t{tau:?}")?;
    }
    if let Some(alpha) = p.alpha {
        writeln!(out, "alpha\t{alpha:?}")?;
    }
    let v = &p.voting;
    writeln!(out, "lambda\t{:?}", v.lambda)?;
    writeln!(out, "mu\t{:?}", v.mu)?;
    writeln!(out, "sigma2\t{:?}", v.sigma2)?;
    for (item, nu) in &v.nu {
        writeln!(out, "nu\t{item}\t{nu:?}")?;
    }
    for (item, qs) in &v.quality {
        for (j, q) in qs.iter().enumerate() {
            writeln!(out, "q\t{item}\t{j}\t{q:?}")?;
        }
    }
    out.flush()
}

pub fn read_params<R: BufRead>(reader: R) -> Result<ParamsFile, ParamsError> {
    let mut community_id = None;
    let (mut tau, mut alpha) = (None, None);
    let (mut lambda, mut mu, mut sigma2) = (None, None, None);
    let mut nu = BTreeMap::new();
    let mut quality: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let bad = |reason: String| ParamsError::Malformed {
            line: lineno,
            reason,
        };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| -> Result<f64, ParamsError> {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("not a finite number: {s:?}")))
        };
        let arity = |n: usize| -> Result<(), ParamsError> {
            if fields.len() == n {
                Ok(())
            } else {
                Err(bad(format!(
                    "{:?} takes {} fields, got {}",
                    fields[0],
                    n - 1,
                    fields.len() - 1
                )))
            }
        };
        match fields[0] {
            "community" => {
                arity(2)?;
                community_id = Some(fields[1].to_string());
            }
            key @ ("tau" | "alpha" | "lambda" | "mu" | "sigma2") => {
                arity(2)?;
                let slot = match key {
                    "tau" => &mut tau,
                    "alpha" => &mut alpha,
                    "lambda" => &mut lambda,
                    "mu" => &mut mu,
                    _ => &mut sigma2,
                };
                if slot.replace(num(fields[1])?).is_some() {
                    return Err(bad(format!("duplicate key {key:?}")));
                }
            }
            "nu" => {
                arity(3)?;
                if nu.insert(fields[1].to_string(), num(fields[2])?).is_some() {
                    return Err(bad(format!("duplicate nu for item {:?}", fields[1])));
                }
            }
            "q" => {
                arity(4)?;
                let j: usize = fields[2]
                    .parse()
                    .map_err(|_| bad(format!("bad response index {:?}", fields[2])))?;
                let qs = quality.entry(fields[1].to_string()).or_default();
                if j != qs.len() {
                    return Err(bad(format!(
                        "expected response {} of item {:?}, got {j}",
                        qs.len(),
                        fields[1]
                    )));
                }
                qs.push(num(fields[3])?);
            }
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let missing = |key: &str| ParamsError::Malformed {
        line: 0,
        reason: format!("missing {key:?}"),
    };
    Ok(ParamsFile {
        community_id: community_id.ok_or_else(|| missing("community"))?,
        tau,
        alpha,
        voting: VotingParams {
            lambda: lambda.ok_or_else(|| missing("lambda"))?,
            mu: mu.ok_or_else(|| missing("mu"))?,
            nu,
            quality,
            sigma2: sigma2.ok_or_else(|| missing("sigma2"))?,
        },
    })
}
