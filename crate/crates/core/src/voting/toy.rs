//! Single-response quality regression.
//!
//! For one response with votes `v_1..v_T`, maximizes
//!
//! ```text
//! sum_{t=2..T} ln p(v_t | q + lambda * r_{t-1} + mu * s_{t-1}) - ridge * (q^2 + lambda^2 + mu^2)
//! ```
//!
//! where `r_{t-1}`, `s_{t-1}` are the urn ratios after the first `t-1` votes.
//! The first vote only moves the urn.

use nalgebra::{Matrix3, Vector3};

use crate::trajectory::{Polarity, UrnConfig};

use super::{logistic, vote_log_prob, VotingError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyFit {
    pub q: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Maximized penalized objective.
    pub objective: f64,
    pub iterations: usize,
}

/// Urn ratios `(r, s)` seen by each vote.
pub(crate) fn urn_features(votes: &[Polarity], urn: &UrnConfig) -> Vec<(f64, f64)> {
    let (mut pos, mut neg) = (0u32, 0u32);
    votes
        .iter()
        .map(|v| {
            let x = urn.x0 + urn.w * pos as f64;
            let y = urn.y0 + urn.w * neg as f64;
            let (r, s) = (x / (x + y), y / (x + y));
            if v.is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
            (r, s)
        })
        .collect()
}

fn objective(theta: &Vector3<f64>, rows: &[(f64, f64, bool)], ridge: f64) -> f64 {
    let ll: f64 = rows
        .iter()
        .map(|&(r, s, y)| vote_log_prob(theta[0] + theta[1] * r + theta[2] * s, y))
        .sum();
    ll - ridge * theta.norm_squared()
}

pub fn fit_toy_response(
    votes: &[Polarity],
    urn: &UrnConfig,
    ridge: f64,
) -> Result<ToyFit, VotingError> {
    if votes.len() < 2 {
        return Err(VotingError::TooShort(votes.len()));
    }
    if !(ridge.is_finite() && ridge > 0.0) {
        return Err(VotingError::InvalidOption(format!(
            "ridge must be positive, got {ridge}"
        )));
    }
    let rows: Vec<(f64, f64, bool)> = urn_features(votes, urn)
        .into_iter()
        .zip(votes)
        .skip(1)
        .map(|((r, s), v)| (r, s, v.is_positive()))
        .collect();

    let mut theta = Vector3::zeros();
    let mut value = objective(&theta, &rows, ridge);
    let mut iterations = 0;
    for _ in 0..100 {
        let mut grad = -2.0 * ridge * theta;
        let mut hess = Matrix3::identity() * (2.0 * ridge);
        for &(r, s, y) in &rows {
            let x = Vector3::new(1.0, r, s);
            let p = logistic(theta.dot(&x));
            grad += x * ((if y { 1.0 } else { 0.0 }) - p);
            hess += x * x.transpose() * (p * (1.0 - p));
        }
        if grad.norm() <= 1e-12 {
            break;
        }
        let dir = hess
            .cholesky()
            .ok_or(VotingError::NonFinite {
                iteration: iterations,
            })?
            .solve(&grad);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand = theta + dir * step;
            let v = objective(&cand, &rows, ridge);
            if v >= value {
                theta = cand;
                value = v;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
    }
    if !value.is_finite() {
        return Err(VotingError::NonFinite {
            iteration: iterations,
        });
    }
    Ok(ToyFit {
        q: theta[0],
        lambda: theta[1],
        mu: theta[2],
        objective: value,
        iterations,
    })
}
