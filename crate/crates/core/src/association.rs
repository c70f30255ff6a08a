//! Marginal measurement-to-Bernoulli association.
//!
//! Two solvers over the same [`AssociationProblem`]: exact enumeration of
//! all one-to-one partial association maps (the oracle; factorial cost,
//! guarded), and loopy belief propagation on the bipartite association
//! graph (the production path).

use crate::error::{Result, SlatError};
use crate::gaussian::OnlineLogSumExp;
use crate::rfs::AssociationProblem;
use nalgebra::DMatrix;

/// Largest n and m accepted by [`exact_marginals`].
pub const EXACT_ENUMERATION_GUARD: usize = 10;

/// Floor applied (relative to the largest finite weight) to -inf miss and
/// new weights before forming likelihood ratios; keeps the message
/// iteration finite while perturbing marginals by less than 1e-150.
const LOG_FLOOR_OFFSET: f64 = 400.0;
/// Cap on log likelihood ratios so sums of ratios stay inside f64 range.
const LOG_RATIO_CAP: f64 = 350.0;

/// Marginal association probabilities.
///
/// Per Bernoulli i: p_miss[i] + Σ_k p_assoc[(i, k)] = 1.
/// Per measurement k: p_new[k] + Σ_i p_assoc[(i, k)] = 1.
#[derive(Debug, Clone)]
pub struct MarginalAssociation {
    pub p_miss: Vec<f64>,
    pub p_assoc: DMatrix<f64>,
    /// Probability that measurement k is clutter or a new feature rather
    /// than associated with an existing Bernoulli.
    pub p_new: Vec<f64>,
}

impl MarginalAssociation {
    pub fn n_bernoulli(&self) -> usize {
        self.p_miss.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.p_new.len()
    }
}

/// Settings for the belief-propagation solver.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BpConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// Result of a belief-propagation solve. Non-convergence is reported, not
/// raised: the last iterate is still returned.
#[derive(Debug, Clone)]
pub struct BpOutcome {
    pub marginals: MarginalAssociation,
    pub converged: bool,
    pub iterations: usize,
}

/// Exact marginals by enumerating every one-to-one partial map from
/// measurements to Bernoullis. Unassigned measurements are new/clutter and
/// unassigned Bernoullis are missed; a hypothesis weight is the exponential
/// of the sum of its selected log entries.
pub fn exact_marginals(prob: &AssociationProblem) -> Result<MarginalAssociation> {
    let n = prob.n_bernoulli();
    let m = prob.n_measurements();
    if n > EXACT_ENUMERATION_GUARD || m > EXACT_ENUMERATION_GUARD {
        return Err(SlatError::ExactGuard {
            n,
            m,
            guard: EXACT_ENUMERATION_GUARD,
        });
    }

    let mut total = OnlineLogSumExp::new();
    let mut pair = vec![OnlineLogSumExp::new(); n * m];
    let mut miss = vec![OnlineLogSumExp::new(); n];
    let mut new = vec![OnlineLogSumExp::new(); m];

    // assignment[k] = Some(i) when measurement k is paired with Bernoulli i.
    let mut assignment: Vec<Option<usize>> = vec![None; m];
    let mut used: u32 = 0;
    enumerate(
        prob,
        0,
        0.0,
        &mut used,
        &mut assignment,
        &mut total,
        &mut pair,
        &mut miss,
        &mut new,
    );

    let log_total = total.value();
    if log_total == f64::NEG_INFINITY {
        return Err(SlatError::contract(
            "association problem admits no feasible hypothesis",
        ));
    }

    let p_miss: Vec<f64> = miss.iter().map(|l| (l.value() - log_total).exp()).collect();
    let p_new: Vec<f64> = new.iter().map(|l| (l.value() - log_total).exp()).collect();
    let p_assoc = DMatrix::from_fn(n, m, |i, k| (pair[i * m + k].value() - log_total).exp());
    Ok(MarginalAssociation {
        p_miss,
        p_assoc,
        p_new,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    prob: &AssociationProblem,
    k: usize,
    log_weight: f64,
    used: &mut u32,
    assignment: &mut Vec<Option<usize>>,
    total: &mut OnlineLogSumExp,
    pair: &mut [OnlineLogSumExp],
    miss: &mut [OnlineLogSumExp],
    new: &mut [OnlineLogSumExp],
) {
    let n = prob.n_bernoulli();
    let m = prob.n_measurements();
    if k == m {
        let mut leaf = log_weight;
        for i in 0..n {
            if *used & (1 << i) == 0 {
                leaf += prob.log_miss[i];
            }
        }
        if leaf == f64::NEG_INFINITY {
            return;
        }
        total.push(leaf);
        for (kk, a) in assignment.iter().enumerate() {
            match a {
                Some(i) => pair[i * m + kk].push(leaf),
                None => new[kk].push(leaf),
            }
        }
        for (i, acc) in miss.iter_mut().enumerate() {
            if *used & (1 << i) == 0 {
                acc.push(leaf);
            }
        }
        return;
    }

    // Measurement k stays unassociated (clutter or new feature).
    if prob.log_new[k] > f64::NEG_INFINITY {
        assignment[k] = None;
        enumerate(
            prob,
            k + 1,
            log_weight + prob.log_new[k],
            used,
            assignment,
            total,
            pair,
            miss,
            new,
        );
    }
    // Measurement k pairs with an unused Bernoulli.
    for i in 0..n {
        if *used & (1 << i) != 0 {
            continue;
        }
        let w = prob.log_detect[(i, k)];
        if w == f64::NEG_INFINITY {
            continue;
        }
        *used |= 1 << i;
        assignment[k] = Some(i);
        enumerate(
            prob,
            k + 1,
            log_weight + w,
            used,
            assignment,
            total,
            pair,
            miss,
            new,
        );
        *used &= !(1 << i);
        assignment[k] = None;
    }
}

/// Loopy belief propagation on the bipartite association factor graph.
///
/// Synchronous schedule: all measurement-to-Bernoulli messages are updated
/// from the previous Bernoulli-to-measurement messages, then vice versa.
/// Iteration stops when the largest message change and the marginal
/// consistency residual fall below `tol` (the residual at a tenth of it),
/// or after `max_iters` sweeps.
pub fn bp_marginals(prob: &AssociationProblem, cfg: &BpConfig) -> BpOutcome {
    let n = prob.n_bernoulli();
    let m = prob.n_measurements();
    if m == 0 || n == 0 {
        return BpOutcome {
            marginals: MarginalAssociation {
                p_miss: vec![1.0; n],
                p_assoc: DMatrix::zeros(n, m),
                p_new: vec![1.0; m],
            },
            converged: true,
            iterations: 0,
        };
    }

    // Likelihood ratios ψ_ik = w_ik / (w_i0 c_k), shift-invariant in the
    // hypothesis weights. Zero miss/new weights are floored relative to the
    // largest finite weight so that ratios stay finite.
    let max_finite = prob
        .log_miss
        .iter()
        .chain(prob.log_new.iter())
        .chain(prob.log_detect.iter())
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let floor = max_finite - LOG_FLOOR_OFFSET;
    let miss_f: Vec<f64> = prob.log_miss.iter().map(|&v| v.max(floor)).collect();
    let new_f: Vec<f64> = prob.log_new.iter().map(|&v| v.max(floor)).collect();
    let psi = DMatrix::from_fn(n, m, |i, k| {
        let d = prob.log_detect[(i, k)];
        if d == f64::NEG_INFINITY {
            0.0
        } else {
            (d - miss_f[i] - new_f[k]).min(LOG_RATIO_CAP).exp()
        }
    });

    // alpha[(i, k)]: Bernoulli i to measurement k; beta[(k, i)] transposed
    // storage for the reverse direction.
    let mut alpha = DMatrix::from_element(n, m, 1.0);
    let mut beta = DMatrix::from_element(n, m, 1.0);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let mut max_delta: f64 = 0.0;

        // Measurement-to-Bernoulli sweep.
        for k in 0..m {
            let mut col_sum = 0.0;
            for i in 0..n {
                col_sum += psi[(i, k)] * alpha[(i, k)];
            }
            for i in 0..n {
                let other = col_sum - psi[(i, k)] * alpha[(i, k)];
                let next = 1.0 / (1.0 + other);
                max_delta = max_delta.max((next - beta[(i, k)]).abs());
                beta[(i, k)] = next;
            }
        }
        // Bernoulli-to-measurement sweep.
        for i in 0..n {
            let mut row_sum = 0.0;
            for k in 0..m {
                row_sum += psi[(i, k)] * beta[(i, k)];
            }
            for k in 0..m {
                let other = row_sum - psi[(i, k)] * beta[(i, k)];
                let next = 1.0 / (1.0 + other);
                max_delta = max_delta.max((next - alpha[(i, k)]).abs());
                alpha[(i, k)] = next;
            }
        }

        if max_delta < cfg.tol && consistency_residual(&psi, &alpha, &beta) < 0.1 * cfg.tol {
            converged = true;
            break;
        }
    }

    let mut p_miss = vec![0.0; n];
    let mut p_assoc = DMatrix::zeros(n, m);
    for i in 0..n {
        let mut denom = 1.0;
        for k in 0..m {
            denom += psi[(i, k)] * beta[(i, k)];
        }
        p_miss[i] = 1.0 / denom;
        for k in 0..m {
            p_assoc[(i, k)] = psi[(i, k)] * beta[(i, k)] / denom;
        }
    }
    let mut p_new = vec![0.0; m];
    for k in 0..m {
        let mut denom = 1.0;
        for i in 0..n {
            denom += psi[(i, k)] * alpha[(i, k)];
        }
        p_new[k] = 1.0 / denom;
    }

    BpOutcome {
        marginals: MarginalAssociation {
            p_miss,
            p_assoc,
            p_new,
        },
        converged,
        iterations,
    }
}

/// Largest deviation of the measurement-side normalization from one when
/// the pair beliefs are taken from the Bernoulli side.
fn consistency_residual(psi: &DMatrix<f64>, alpha: &DMatrix<f64>, beta: &DMatrix<f64>) -> f64 {
    let (n, m) = psi.shape();
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let mut new_denom = 1.0;
        for i in 0..n {
            new_denom += psi[(i, k)] * alpha[(i, k)];
        }
        let mut col = 1.0 / new_denom;
        for i in 0..n {
            let mut row_denom = 1.0;
            for kk in 0..m {
                row_denom += psi[(i, kk)] * beta[(i, kk)];
            }
            col += psi[(i, k)] * beta[(i, k)] / row_denom;
        }
        worst = worst.max((col - 1.0).abs());
    }
    worst
}
