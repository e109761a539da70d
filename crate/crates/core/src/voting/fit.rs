//! Regularized maximum-likelihood fit of the voting parameters.
//!
//! The objective is
//!
//! ```text
//! sum_votes ln p(v | q, g) + sum_writes ln N(q; 0, sigma2) - ridge * (lambda^2 + mu^2 + sum_i nu_i^2)
//! ```
//!
//! and is strictly concave. It is maximized by damped Newton steps with a
//! backtracking line search. The negated Hessian has an arrowhead block per
//! item (the item's qualities plus its `nu`) bordered by the two global
//! parameters, so each Newton system is solved exactly through a 2x2 Schur
//! complement in time linear in the number of votes.

use log::warn;
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::trajectory::{Dataset, UrnConfig};

use super::design::{Theta, VotingDesign};
use super::{log_normal_prior, logistic, vote_log_prob, FeatureMask, VotingError, VotingParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Prior variance of response quality.
    pub sigma2: f64,
    /// Penalty weight on `lambda`, `mu` and each `nu_i`.
    pub ridge: f64,
    pub max_iters: usize,
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub tol: f64,
    /// Leave each response's first vote out of the objective. Its urn
    /// features are the prior alone, so it only informs `q` and drags the
    /// urn coefficients toward zero.
    pub exclude_first_vote: bool,
    /// Items with fewer votes keep `nu_i = 0`.
    pub min_votes_for_nu: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            ridge: 0.5,
            max_iters: 100,
            tol: 1e-6,
            exclude_first_vote: true,
            min_votes_for_nu: 3,
        }
    }
}

impl FitOptions {
    pub fn check(&self) -> Result<(), VotingError> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(VotingError::InvalidOption(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.ridge.is_finite() && self.ridge > 0.0) {
            return Err(VotingError::InvalidOption(format!(
                "ridge must be positive, got {}",
                self.ridge
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(VotingError::InvalidOption(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Result of [`fit_design`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignFit {
    pub theta: Theta,
    /// Maximized penalized objective. Comparable across feature masks
    /// because pinned qualities still pay their prior term.
    pub objective: f64,
    /// Vote log-likelihood plus the quality prior, the latter only when
    /// qualities are free.
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: VotingParams,
    pub theta: Theta,
    pub final_loglik: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Active {
    q: Vec<bool>,
    nu: Vec<bool>,
    lambda: bool,
    mu: bool,
}

impl Active {
    fn new(design: &VotingDesign, mask: FeatureMask, opts: &FitOptions) -> Self {
        let q = (0..design.n_responses())
            .map(|j| mask.quality && design.is_written(j))
            .collect();
        let nu = (0..design.n_items())
            .map(|i| mask.nu && design.item_votes(i).len() >= opts.min_votes_for_nu)
            .collect();
        Self {
            q,
            nu,
            lambda: mask.lambda,
            mu: mask.mu,
        }
    }

    fn pin(&self, theta: &mut Theta) {
        if !self.lambda {
            theta.lambda = 0.0;
        }
        if !self.mu {
            theta.mu = 0.0;
        }
        for (v, &a) in theta.nu.iter_mut().zip(&self.nu) {
            if !a {
                *v = 0.0;
            }
        }
        for (v, &a) in theta.q.iter_mut().zip(&self.q) {
            if !a {
                *v = 0.0;
            }
        }
    }
}

/// Per-item sufficient statistics and the solution of its arrowhead block.
struct ItemPass {
    value: f64,
    grad_q: Vec<f64>,
    grad_nu: f64,
    /// Global gradient and Hessian contributions (lambda, mu).
    grad_g: [f64; 2],
    hess_g: [[f64; 2]; 2],
    // A^-1 b
    ab_q: Vec<f64>,
    ab_nu: f64,
    // A^-1 C for the lambda and mu columns
    ac_q: [Vec<f64>; 2],
    ac_nu: [f64; 2],
    // C^T A^-1 C and C^T A^-1 b
    schur: [[f64; 2]; 2],
    schur_b: [f64; 2],
}

fn item_pass(
    design: &VotingDesign,
    i: usize,
    theta: &Theta,
    active: &Active,
    opts: &FitOptions,
) -> ItemPass {
    let layout = &design.items[i];
    let off = layout.q_offset;
    let n = layout.n_responses;
    let mut gq = vec![0.0; n];
    let mut dq = vec![0.0; n];
    let mut c_qn = vec![0.0; n];
    let mut c_ql = vec![0.0; n];
    let mut c_qm = vec![0.0; n];
    let (mut gn, mut dn, mut c_nl, mut c_nm) = (0.0, 0.0, 0.0, 0.0);
    let mut grad_g = [0.0; 2];
    let mut hess_g = [[0.0; 2]; 2];
    let mut value = 0.0;

    for v in design.item_votes(i) {
        let j = v.response as usize - off;
        let z = theta.logit(v);
        let p = logistic(z);
        let y = if v.positive { 1.0 } else { 0.0 };
        let resid = y - p;
        let w = p * (1.0 - p);
        let (r, s, u) = (v.ratio_pos, v.ratio_neg, v.rel_length);
        value += vote_log_prob(z, v.positive);
        gq[j] += resid;
        dq[j] += w;
        c_qn[j] += w * u;
        c_ql[j] += w * r;
        c_qm[j] += w * s;
        gn += resid * u;
        dn += w * u * u;
        c_nl += w * u * r;
        c_nm += w * u * s;
        grad_g[0] += resid * r;
        grad_g[1] += resid * s;
        hess_g[0][0] += w * r * r;
        hess_g[0][1] += w * r * s;
        hess_g[1][1] += w * s * s;
    }
    hess_g[1][0] = hess_g[0][1];

    for j in 0..n {
        let q = theta.q[off + j];
        if design.is_written(off + j) {
            value += log_normal_prior(q, opts.sigma2);
        }
        if active.q[off + j] {
            gq[j] -= q / opts.sigma2;
            dq[j] += 1.0 / opts.sigma2;
        } else {
            gq[j] = 0.0;
            dq[j] = 1.0;
            c_qn[j] = 0.0;
            c_ql[j] = 0.0;
            c_qm[j] = 0.0;
        }
    }
    let nu = theta.nu[i];
    value -= opts.ridge * nu * nu;
    if active.nu[i] {
        gn -= 2.0 * opts.ridge * nu;
        dn += 2.0 * opts.ridge;
    } else {
        gn = 0.0;
        dn = 1.0;
        c_nl = 0.0;
        c_nm = 0.0;
        c_qn.iter_mut().for_each(|c| *c = 0.0);
    }
    if !active.lambda {
        c_ql.iter_mut().for_each(|c| *c = 0.0);
        c_nl = 0.0;
    }
    if !active.mu {
        c_qm.iter_mut().for_each(|c| *c = 0.0);
        c_nm = 0.0;
    }

    // Arrowhead solve: [diag(dq) c_qn; c_qn^T dn] x = rhs.
    let denom = dn - (0..n).map(|j| c_qn[j] * c_qn[j] / dq[j]).sum::<f64>();
    let solve = |rq: &[f64], rn: f64| -> (Vec<f64>, f64) {
        let xn = (rn - (0..n).map(|j| c_qn[j] * rq[j] / dq[j]).sum::<f64>()) / denom;
        let xq = (0..n).map(|j| (rq[j] - c_qn[j] * xn) / dq[j]).collect();
        (xq, xn)
    };
    let (ab_q, ab_nu) = solve(&gq, gn);
    let (al_q, al_nu) = solve(&c_ql, c_nl);
    let (am_q, am_nu) = solve(&c_qm, c_nm);
    let cols_q = [&c_ql, &c_qm];
    let cols_n = [c_nl, c_nm];
    let ac_q = [al_q, am_q];
    let ac_nu = [al_nu, am_nu];
    let mut schur = [[0.0; 2]; 2];
    let mut schur_b = [0.0; 2];
    for a in 0..2 {
        schur_b[a] = dot(cols_q[a], &ab_q) + cols_n[a] * ab_nu;
        for b in 0..2 {
            schur[a][b] = dot(cols_q[a], &ac_q[b]) + cols_n[a] * ac_nu[b];
        }
    }
    ItemPass {
        value,
        grad_q: gq,
        grad_nu: gn,
        grad_g,
        hess_g,
        ab_q,
        ab_nu,
        ac_q,
        ac_nu,
        schur,
        schur_b,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn global_penalty(theta: &Theta, opts: &FitOptions) -> f64 {
    opts.ridge * (theta.lambda * theta.lambda + theta.mu * theta.mu)
}

fn objective_value(design: &VotingDesign, theta: &Theta, opts: &FitOptions) -> f64 {
    let per_item: Vec<f64> = (0..design.n_items())
        .into_par_iter()
        .map(|i| {
            let layout = &design.items[i];
            let mut v: f64 = design
                .item_votes(i)
                .iter()
                .map(|o| vote_log_prob(theta.logit(o), o.positive))
                .sum();
            for j in layout.q_offset..layout.q_offset + layout.n_responses {
                if design.is_written(j) {
                    v += log_normal_prior(theta.q[j], opts.sigma2);
                }
            }
            v - opts.ridge * theta.nu[i] * theta.nu[i]
        })
        .collect();
    per_item.iter().sum::<f64>() - global_penalty(theta, opts)
}

fn loglik_value(design: &VotingDesign, theta: &Theta, mask: FeatureMask, opts: &FitOptions) -> f64 {
    let votes: f64 = design
        .votes
        .iter()
        .map(|o| vote_log_prob(theta.logit(o), o.positive))
        .sum();
    if !mask.quality {
        return votes;
    }
    let prior: f64 = (0..design.n_responses())
        .filter(|&j| design.is_written(j))
        .map(|j| log_normal_prior(theta.q[j], opts.sigma2))
        .sum();
    votes + prior
}

struct Pass {
    value: f64,
    grad: Theta,
    grad_norm: f64,
    items: Vec<ItemPass>,
    grad_g: [f64; 2],
    hess_g: [[f64; 2]; 2],
}

fn full_pass(design: &VotingDesign, theta: &Theta, active: &Active, opts: &FitOptions) -> Pass {
    let items: Vec<ItemPass> = (0..design.n_items())
        .into_par_iter()
        .map(|i| item_pass(design, i, theta, active, opts))
        .collect();
    let mut value = -global_penalty(theta, opts);
    let mut grad_g = [0.0; 2];
    let mut hess_g = [[0.0; 2]; 2];
    let mut grad = Theta::zeros(design);
    let mut sq = 0.0;
    for (i, ip) in items.iter().enumerate() {
        value += ip.value;
        for a in 0..2 {
            grad_g[a] += ip.grad_g[a];
            for (h, g) in hess_g[a].iter_mut().zip(&ip.hess_g[a]) {
                *h += g;
            }
        }
        let off = design.items[i].q_offset;
        grad.q[off..off + ip.grad_q.len()].copy_from_slice(&ip.grad_q);
        grad.nu[i] = ip.grad_nu;
        sq += ip.grad_q.iter().map(|g| g * g).sum::<f64>() + ip.grad_nu * ip.grad_nu;
    }
    let globals = [(active.lambda, theta.lambda), (active.mu, theta.mu)];
    for (a, &(on, v)) in globals.iter().enumerate() {
        if on {
            grad_g[a] -= 2.0 * opts.ridge * v;
            hess_g[a][a] += 2.0 * opts.ridge;
        } else {
            grad_g[a] = 0.0;
            hess_g[a] = [0.0; 2];
            hess_g[0][a] = 0.0;
            hess_g[1][a] = 0.0;
            hess_g[a][a] = 1.0;
        }
    }
    grad.lambda = grad_g[0];
    grad.mu = grad_g[1];
    sq += grad_g[0] * grad_g[0] + grad_g[1] * grad_g[1];
    Pass {
        value,
        grad,
        grad_norm: sq.sqrt(),
        items,
        grad_g,
        hess_g,
    }
}

fn newton_direction(design: &VotingDesign, pass: &Pass) -> Option<Theta> {
    let mut m = Matrix2::new(
        pass.hess_g[0][0],
        pass.hess_g[0][1],
        pass.hess_g[1][0],
        pass.hess_g[1][1],
    );
    let mut rhs = Vector2::new(pass.grad_g[0], pass.grad_g[1]);
    for ip in &pass.items {
        m -= Matrix2::new(
            ip.schur[0][0],
            ip.schur[0][1],
            ip.schur[1][0],
            ip.schur[1][1],
        );
        rhs -= Vector2::new(ip.schur_b[0], ip.schur_b[1]);
    }
    let dg = m.cholesky()?.solve(&rhs);
    let mut dir = Theta::zeros(design);
    dir.lambda = dg[0];
    dir.mu = dg[1];
    for (i, ip) in pass.items.iter().enumerate() {
        let off = design.items[i].q_offset;
        for j in 0..ip.ab_q.len() {
            dir.q[off + j] = ip.ab_q[j] - ip.ac_q[0][j] * dg[0] - ip.ac_q[1][j] * dg[1];
        }
        dir.nu[i] = ip.ab_nu - ip.ac_nu[0] * dg[0] - ip.ac_nu[1] * dg[1];
    }
    Some(dir)
}

fn axpy(theta: &Theta, step: f64, dir: &Theta) -> Theta {
    Theta {
        lambda: theta.lambda + step * dir.lambda,
        mu: theta.mu + step * dir.mu,
        nu: theta
            .nu
            .iter()
            .zip(&dir.nu)
            .map(|(a, b)| a + step * b)
            .collect(),
        q: theta
            .q
            .iter()
            .zip(&dir.q)
            .map(|(a, b)| a + step * b)
            .collect(),
    }
}

fn inner(a: &Theta, b: &Theta) -> f64 {
    a.lambda * b.lambda + a.mu * b.mu + dot(&a.nu, &b.nu) + dot(&a.q, &b.q)
}

/// Penalized objective and its gradient at `theta`. Gradient entries of
/// pinned parameters are zero. The design is used as given, so
/// `exclude_first_vote` is not applied here.
pub fn objective_and_gradient(
    design: &VotingDesign,
    theta: &Theta,
    mask: FeatureMask,
    opts: &FitOptions,
) -> (f64, Theta) {
    let active = Active::new(design, mask, opts);
    let pass = full_pass(design, theta, &active, opts);
    (pass.value, pass.grad)
}

/// Maximizes the objective on `design`, starting from `init`.
pub fn fit_design(
    design: &VotingDesign,
    init: &Theta,
    mask: FeatureMask,
    opts: &FitOptions,
) -> Result<DesignFit, VotingError> {
    opts.check()?;
    let owned;
    let design = if opts.exclude_first_vote {
        owned = design.without_first_votes();
        &owned
    } else {
        design
    };
    let active = Active::new(design, mask, opts);
    let mut theta = init.clone();
    active.pin(&mut theta);

    let mut iterations = 0;
    let mut pass = full_pass(design, &theta, &active, opts);
    let mut converged = false;
    loop {
        if !pass.value.is_finite() || !pass.grad_norm.is_finite() {
            return Err(VotingError::NonFinite {
                iteration: iterations,
            });
        }
        if pass.grad_norm <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let Some(dir) = newton_direction(design, &pass) else {
            return Err(VotingError::NonFinite {
                iteration: iterations,
            });
        };
        let slope = inner(&pass.grad, &dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand = axpy(&theta, step, &dir);
            let v = objective_value(design, &cand, opts);
            if v.is_finite() && v >= pass.value + 1e-4 * step * slope {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some(cand) => {
                theta = cand;
                pass = full_pass(design, &theta, &active, opts);
            }
            // No ascent possible at machine precision.
            None => break,
        }
    }
    if !converged {
        warn!(
            "voting fit stopped after {iterations} iterations with gradient norm {:.3e}",
            pass.grad_norm
        );
    }
    Ok(DesignFit {
        loglik: loglik_value(design, &theta, mask, opts),
        theta,
        objective: pass.value,
        grad_norm: pass.grad_norm,
        iterations,
        converged,
    })
}

/// Fits the voting parameters of a whole dataset.
pub fn fit_voting(
    ds: &Dataset,
    urn: &UrnConfig,
    init: &VotingParams,
    mask: FeatureMask,
    opts: &FitOptions,
) -> Result<FitResult, VotingError> {
    let design = VotingDesign::build(ds, urn);
    let start = Theta::from_params(&design, init);
    let fit = fit_design(&design, &start, mask, opts)?;
    Ok(FitResult {
        params: fit.theta.to_params(&design, opts.sigma2),
        theta: fit.theta,
        final_loglik: fit.loglik,
        objective: fit.objective,
        grad_norm: fit.grad_norm,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Action, ActionRecord, ItemTrajectory, Polarity};
    use crate::voting::{fit_toy_response, voting_loglik, Feature, LoglikTerms};

    fn rec(t: usize, action: Action, n_before: usize) -> ActionRecord {
        ActionRecord {
            t,
            action,
            display_order: (n_before > 0).then(|| (0..n_before).collect()),
            seq: t as u64,
        }
    }

    /// One item per entry; each item writes `lens.len()` responses and then
    /// casts `(response, positive)` votes.
    fn dataset(items: &[(Vec<u32>, Vec<(usize, bool)>)]) -> Dataset {
        let trajs = items
            .iter()
            .enumerate()
            .map(|(i, (lens, votes))| {
                let mut events = Vec::new();
                for (k, &length) in lens.iter().enumerate() {
                    events.push(rec(events.len() + 1, Action::Write { length }, k));
                }
                for &(response, pos) in votes {
                    let polarity = if pos {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    };
                    events.push(rec(
                        events.len() + 1,
                        Action::Vote { response, polarity },
                        lens.len(),
                    ));
                }
                ItemTrajectory {
                    item_id: format!("item{i}"),
                    events,
                    gaps: vec![],
                }
            })
            .collect();
        Dataset::new("test", trajs)
    }

    fn mixed() -> Dataset {
        dataset(&[
            (
                vec![100, 300, 50],
                vec![
                    (0, true),
                    (1, true),
                    (0, false),
                    (2, true),
                    (1, true),
                    (0, true),
                    (2, false),
                ],
            ),
            (
                vec![200, 200],
                vec![(1, false), (1, false), (0, true), (1, true), (0, true)],
            ),
            (vec![10], vec![(0, true), (0, false)]),
        ])
    }

    #[test]
    fn null_model_is_coin_flip() {
        let ds = mixed();
        let init = VotingParams::zeros(&ds, 1.0);
        let opts = FitOptions {
            exclude_first_vote: false,
            ..Default::default()
        };
        let fit = fit_voting(
            &ds,
            &UrnConfig::default(),
            &init,
            FeatureMask::none(),
            &opts,
        )
        .unwrap();
        let n = ds.n_votes() as f64;
        assert!((fit.final_loglik - n * 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn separable_data_stays_finite() {
        let ds = dataset(&[(vec![10], vec![(0, true); 8])]);
        let init = VotingParams::zeros(&ds, 1.0);
        let fit = fit_voting(
            &ds,
            &UrnConfig::default(),
            &init,
            FeatureMask::full(),
            &FitOptions::default(),
        )
        .unwrap();
        let q = fit.params.quality_of("item0", 0).unwrap();
        assert!(q.is_finite() && q > 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = mixed();
        let design = VotingDesign::build(&ds, &UrnConfig::default());
        let opts = FitOptions {
            min_votes_for_nu: 0,
            ..Default::default()
        };
        let mut theta = Theta::zeros(&design);
        theta.lambda = 0.3;
        theta.mu = -0.2;
        theta.nu = vec![0.1, -0.4, 0.2];
        theta.q = vec![0.5, -0.1, 0.2, 0.0, 0.7, -0.3];
        let (_, grad) = objective_and_gradient(&design, &theta, FeatureMask::full(), &opts);
        let f = |t: &Theta| objective_value(&design, t, &opts);
        let h = 1e-6;
        let fd = |perturb: &dyn Fn(&mut Theta, f64)| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            perturb(&mut up, h);
            perturb(&mut dn, -h);
            (f(&up) - f(&dn)) / (2.0 * h)
        };
        assert!((fd(&|t, d| t.lambda += d) - grad.lambda).abs() < 1e-7);
        assert!((fd(&|t, d| t.mu += d) - grad.mu).abs() < 1e-7);
        for i in 0..3 {
            assert!((fd(&|t, d| t.nu[i] += d) - grad.nu[i]).abs() < 1e-7);
        }
        for j in 0..6 {
            assert!((fd(&|t, d| t.q[j] += d) - grad.q[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn converges_to_stationary_point() {
        let ds = mixed();
        let init = VotingParams::zeros(&ds, 1.0);
        let opts = FitOptions {
            exclude_first_vote: false,
            ..Default::default()
        };
        let fit = fit_voting(
            &ds,
            &UrnConfig::default(),
            &init,
            FeatureMask::full(),
            &opts,
        )
        .unwrap();
        assert!(fit.converged && fit.grad_norm <= 1e-6);
        // the two-vote item keeps nu pinned
        assert_eq!(fit.params.nu_of("item2").unwrap(), 0.0);
        let direct = voting_loglik(
            &ds,
            &fit.params,
            &UrnConfig::default(),
            LoglikTerms::default(),
        )
        .unwrap();
        assert!((direct - fit.final_loglik).abs() < 1e-9);
    }

    #[test]
    fn matches_single_response_regression() {
        let votes = [true, true, false, true, false, false, true, true];
        let ds = dataset(&[(vec![10], votes.iter().map(|&v| (0, v)).collect())]);
        let opts = FitOptions {
            exclude_first_vote: true,
            tol: 1e-10,
            ..Default::default()
        };
        let mask = FeatureMask::full().knock_out(&[Feature::Nu]);
        let init = VotingParams::zeros(&ds, 1.0);
        let fit = fit_voting(&ds, &UrnConfig::default(), &init, mask, &opts).unwrap();
        let pol: Vec<Polarity> = votes
            .iter()
            .map(|&v| {
                if v {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                }
            })
            .collect();
        let toy = fit_toy_response(&pol, &UrnConfig::default(), 0.5).unwrap();
        assert!((fit.params.quality_of("item0", 0).unwrap() - toy.q).abs() < 1e-8);
        assert!((fit.params.lambda - toy.lambda).abs() < 1e-8);
        assert!((fit.params.mu - toy.mu).abs() < 1e-8);
    }

    #[test]
    fn nested_masks_never_beat_full() {
        let ds = mixed();
        let init = VotingParams::zeros(&ds, 1.0);
        let opts = FitOptions::default();
        let full = fit_voting(
            &ds,
            &UrnConfig::default(),
            &init,
            FeatureMask::full(),
            &opts,
        )
        .unwrap();
        for ko in [
            vec![Feature::Quality],
            vec![Feature::Lambda, Feature::Mu],
            vec![Feature::Nu],
        ] {
            let sub = fit_voting(
                &ds,
                &UrnConfig::default(),
                &init,
                FeatureMask::full().knock_out(&ko),
                &opts,
            )
            .unwrap();
            assert!(sub.objective <= full.objective + 1e-9);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let ds = mixed();
        let init = VotingParams::zeros(&ds, 1.0);
        let opts = FitOptions {
            sigma2: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fit_voting(
                &ds,
                &UrnConfig::default(),
                &init,
                FeatureMask::full(),
                &opts
            ),
            Err(VotingError::InvalidOption(_))
        ));
    }
}
