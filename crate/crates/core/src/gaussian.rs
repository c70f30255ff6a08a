//! Dense small-matrix Gaussian algebra.
//!
//! Provides the Gaussian density / mixture types used throughout the filter,
//! Kalman-form prediction and conditioning (Joseph-form covariance update),
//! log-domain weight handling, mixture moment matching, and mixture
//! reduction by pruning and merging.
//!
//! All weights are kept in log domain; products of per-hypothesis weights
//! underflow linear f64 for measurement sets of a few tens of elements.

use crate::error::{Result, SlatError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative symmetry tolerance for covariance matrices.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;
/// Eigenvalue floor, relative to trace, below which a covariance is rejected.
pub const PSD_REL_TOL: f64 = 1e-9;
/// Condition-number guard for innovation covariances.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Log-sum-exp over a slice, tolerant of `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator for large hypothesis enumerations.
#[derive(Debug, Clone, Copy)]
pub struct OnlineLogSumExp {
    max: f64,
    sum: f64,
}

impl Default for OnlineLogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl OnlineLogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, log_value: f64) {
        if log_value == f64::NEG_INFINITY {
            return;
        }
        if log_value <= self.max {
            self.sum += (log_value - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_value).exp() + 1.0;
            self.max = log_value;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max.is_finite() {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Symmetrize a matrix by averaging with its transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Mean/covariance pair; the atom for vehicle states, Bernoulli pdfs and
/// Poisson mixture components.
///
/// The covariance is symmetric (within relative tolerance) and positive
/// semidefinite; values are immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianDensity {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    #[serde(skip)]
    mean_v: DVector<f64>,
    #[serde(skip)]
    cov_m: DMatrix<f64>,
}

impl<'de> Deserialize<'de> for GaussianDensity {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            mean: Vec<f64>,
            cov: Vec<Vec<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let n = raw.mean.len();
        if raw.cov.len() != n || raw.cov.iter().any(|row| row.len() != n) {
            return Err(serde::de::Error::custom("covariance shape mismatch"));
        }
        let mean = DVector::from_vec(raw.mean);
        let cov = DMatrix::from_fn(n, n, |i, j| raw.cov[i][j]);
        GaussianDensity::new(mean, cov).map_err(serde::de::Error::custom)
    }
}

impl GaussianDensity {
    /// Build a density, validating symmetry and positive semidefiniteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(SlatError::contract(format!(
                "mean dimension {} does not match covariance {}x{}",
                n,
                cov.nrows(),
                cov.ncols()
            )));
        }
        validate_covariance(&cov)?;
        let cov = symmetrize(&cov);
        Ok(Self::from_parts(mean, cov))
    }

    /// Internal constructor for covariances produced by operations that
    /// preserve PSD by construction. Symmetrizes; validates in debug builds.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let cov = symmetrize(&cov);
        debug_assert!(
            validate_covariance(&cov).is_ok(),
            "covariance lost PSD: {cov}"
        );
        Self {
            mean: mean.iter().cloned().collect(),
            cov: (0..cov.nrows())
                .map(|i| cov.row(i).iter().cloned().collect())
                .collect(),
            mean_v: mean,
            cov_m: cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean_v.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean_v
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov_m
    }

    /// log N(x; mean, cov). Errors when the covariance cannot be factorized.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        log_gaussian(x, &self.mean_v, &self.cov_m)
    }
}

fn validate_covariance(cov: &DMatrix<f64>) -> Result<()> {
    let trace = cov.trace();
    let scale = trace.abs().max(1.0);
    for i in 0..cov.nrows() {
        for j in (i + 1)..cov.ncols() {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_REL_TOL * scale {
                return Err(SlatError::contract(format!(
                    "covariance not symmetric at ({i},{j}): {} vs {}",
                    cov[(i, j)],
                    cov[(j, i)]
                )));
            }
        }
    }
    let sym = symmetrize(cov);
    let eigs = sym.symmetric_eigenvalues();
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_REL_TOL * scale {
        return Err(SlatError::contract(format!(
            "covariance not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// log N(x; mean, cov) via Cholesky; falls back to an eigenvalue check to
/// report degeneracy rather than returning NaN.
pub fn log_gaussian(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let n = x.len();
    if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
        return Err(SlatError::contract(format!(
            "log_gaussian dimension mismatch: x={}, mean={}, cov={}x{}",
            n,
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| SlatError::degenerate("log_gaussian", "covariance not factorizable"))?;
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let maha = diff.dot(&solved);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + log_det + maha))
}

/// Squared Mahalanobis distance (x - mean)' cov^{-1} (x - mean).
pub fn mahalanobis_sq(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| SlatError::degenerate("mahalanobis", "covariance not factorizable"))?;
    let diff = x - mean;
    Ok(diff.dot(&chol.solve(&diff)))
}

/// One weighted component of a Gaussian mixture. The weight is logarithmic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedGaussian {
    pub log_weight: f64,
    pub density: GaussianDensity,
}

/// A list of log-weighted Gaussian components.
///
/// Used both as a probability density (weights normalized so that
/// `logsumexp = 0`) and as an intensity (nonnegative weights with no
/// normalization constraint).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<WeightedGaussian>,
}

impl GaussianMixture {
    pub fn new(components: Vec<WeightedGaussian>) -> Result<Self> {
        if let Some(first) = components.first() {
            let dim = first.density.dim();
            if components.iter().any(|c| c.density.dim() != dim) {
                return Err(SlatError::contract(
                    "mixture components have inconsistent dimensions",
                ));
            }
        }
        if components.iter().any(|c| c.log_weight.is_nan()) {
            return Err(SlatError::contract("mixture component weight is NaN"));
        }
        Ok(Self { components })
    }

    pub fn empty() -> Self {
        Self { components: vec![] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// logsumexp of the component log weights.
    pub fn total_log_weight(&self) -> f64 {
        let ws: Vec<f64> = self.components.iter().map(|c| c.log_weight).collect();
        log_sum_exp(&ws)
    }

    /// Sum of linear weights; the integral of the mixture over the space.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.log_weight.exp()).sum()
    }

    /// Return a copy with weights normalized so that logsumexp = 0.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_log_weight();
        if !total.is_finite() {
            return Err(SlatError::contract(
                "cannot normalize a mixture with zero total weight",
            ));
        }
        Ok(Self {
            components: self
                .components
                .iter()
                .map(|c| WeightedGaussian {
                    log_weight: c.log_weight - total,
                    density: c.density.clone(),
                })
                .collect(),
        })
    }
}

/// Chapman-Kolmogorov prediction through a linear-Gaussian transition:
/// mean' = A mean, cov' = A cov A' + W.
pub fn kf_predict(
    prior: &GaussianDensity,
    trans_matrix: &DMatrix<f64>,
    process_noise_cov: &DMatrix<f64>,
) -> Result<GaussianDensity> {
    let n = prior.dim();
    if trans_matrix.nrows() != n || trans_matrix.ncols() != n {
        return Err(SlatError::contract(format!(
            "transition matrix {}x{} does not match state dimension {}",
            trans_matrix.nrows(),
            trans_matrix.ncols(),
            n
        )));
    }
    if process_noise_cov.nrows() != n || process_noise_cov.ncols() != n {
        return Err(SlatError::contract(format!(
            "process noise {}x{} does not match state dimension {}",
            process_noise_cov.nrows(),
            process_noise_cov.ncols(),
            n
        )));
    }
    let mean = trans_matrix * prior.mean();
    let cov = trans_matrix * prior.cov() * trans_matrix.transpose() + process_noise_cov;
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Kalman conditioning on a linear-Gaussian measurement.
///
/// Returns the posterior (Joseph-form covariance) and the measurement
/// log-likelihood log N(z; H mean, H cov H' + R). Fails when the innovation
/// covariance is singular or ill-conditioned.
pub fn kf_update(
    prior: &GaussianDensity,
    meas: &DVector<f64>,
    obs_matrix: &DMatrix<f64>,
    meas_noise_cov: &DMatrix<f64>,
) -> Result<(GaussianDensity, f64)> {
    let n = prior.dim();
    let m = meas.len();
    if obs_matrix.nrows() != m || obs_matrix.ncols() != n {
        return Err(SlatError::contract(format!(
            "observation matrix {}x{} does not match state {} / measurement {}",
            obs_matrix.nrows(),
            obs_matrix.ncols(),
            n,
            m
        )));
    }
    if meas_noise_cov.nrows() != m || meas_noise_cov.ncols() != m {
        return Err(SlatError::contract(format!(
            "measurement noise {}x{} does not match measurement dimension {}",
            meas_noise_cov.nrows(),
            meas_noise_cov.ncols(),
            m
        )));
    }
    let s = symmetrize(&(obs_matrix * prior.cov() * obs_matrix.transpose() + meas_noise_cov));
    check_condition(&s, "kf_update innovation covariance")?;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| SlatError::degenerate("kf_update", "innovation covariance not PD"))?;

    let predicted = obs_matrix * prior.mean();
    let innovation = meas - &predicted;
    // K = P H' S^{-1}, computed as (S^{-1} H P)'.
    let hp = obs_matrix * prior.cov();
    let gain = chol.solve(&hp).transpose();
    let mean = prior.mean() + &gain * &innovation;
    let eye = DMatrix::identity(n, n);
    let i_kh = &eye - &gain * obs_matrix;
    let cov = &i_kh * prior.cov() * i_kh.transpose() + &gain * meas_noise_cov * gain.transpose();

    let solved = chol.solve(&innovation);
    let maha = innovation.dot(&solved);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_lik = -0.5 * (m as f64 * (2.0 * PI).ln() + log_det + maha);

    Ok((GaussianDensity::from_parts(mean, cov), log_lik))
}

fn check_condition(s: &DMatrix<f64>, context: &str) -> Result<()> {
    let eigs = s.symmetric_eigenvalues();
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || max / min >= MAX_CONDITION_NUMBER {
        return Err(SlatError::degenerate(
            context,
            format!("condition number {:e} exceeds {MAX_CONDITION_NUMBER:e}", max / min.max(f64::MIN_POSITIVE)),
        ));
    }
    Ok(())
}

/// Collapse a normalized mixture to the single Gaussian with matching first
/// and second moments.
pub fn moment_match(mix: &GaussianMixture) -> Result<GaussianDensity> {
    if mix.is_empty() {
        return Err(SlatError::contract("moment_match on empty mixture"));
    }
    let total = mix.total_log_weight();
    if total.abs() > 1e-6 {
        return Err(SlatError::contract(format!(
            "moment_match requires a normalized mixture (logsumexp = {total:e})"
        )));
    }
    if mix.len() == 1 {
        return Ok(mix.components[0].density.clone());
    }
    let dim = mix.components[0].density.dim();
    let mut mean = DVector::zeros(dim);
    for c in &mix.components {
        mean += c.log_weight.exp() * c.density.mean();
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for c in &mix.components {
        let w = c.log_weight.exp();
        let d = c.density.mean() - &mean;
        cov += w * (c.density.cov() + &d * d.transpose());
    }
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Reduce a (generally unnormalized, intensity-valued) mixture.
///
/// Components below `prune_log_threshold` are dropped; the survivors are
/// merged greedily, heaviest first, absorbing every remaining component
/// within `merge_mahalanobis_threshold` (squared distance, measured in the
/// seed's covariance). If more than `max_components` remain, the lightest
/// ones are collapsed into a single moment-matched component so that total
/// weight is preserved except for the pruned mass.
pub fn gm_prune_merge(
    mix: &GaussianMixture,
    prune_log_threshold: f64,
    merge_mahalanobis_threshold: f64,
    max_components: usize,
) -> GaussianMixture {
    let mut alive: Vec<WeightedGaussian> = mix
        .components
        .iter()
        .filter(|c| c.log_weight >= prune_log_threshold && c.log_weight.is_finite())
        .cloned()
        .collect();
    if alive.is_empty() {
        return GaussianMixture::empty();
    }

    alive.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
    let mut merged: Vec<WeightedGaussian> = Vec::new();
    let mut used = vec![false; alive.len()];
    for seed_idx in 0..alive.len() {
        if used[seed_idx] {
            continue;
        }
        used[seed_idx] = true;
        let seed = &alive[seed_idx];
        let mut group = vec![seed.clone()];
        for (j, cand) in alive.iter().enumerate().skip(seed_idx + 1) {
            if used[j] {
                continue;
            }
            let d2 = mahalanobis_sq(cand.density.mean(), seed.density.mean(), seed.density.cov())
                .unwrap_or(f64::INFINITY);
            if d2 <= merge_mahalanobis_threshold {
                used[j] = true;
                group.push(cand.clone());
            }
        }
        merged.push(merge_group(&group));
    }

    if merged.len() > max_components && max_components > 0 {
        merged.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
        let tail: Vec<WeightedGaussian> = merged.split_off(max_components - 1);
        merged.push(merge_group(&tail));
    }

    GaussianMixture { components: merged }
}

/// Moment-match a group of weighted components into one, preserving the
/// group's total weight.
fn merge_group(group: &[WeightedGaussian]) -> WeightedGaussian {
    if group.len() == 1 {
        return group[0].clone();
    }
    let total = log_sum_exp(&group.iter().map(|c| c.log_weight).collect::<Vec<_>>());
    let normalized = GaussianMixture {
        components: group
            .iter()
            .map(|c| WeightedGaussian {
                log_weight: c.log_weight - total,
                density: c.density.clone(),
            })
            .collect(),
    };
    let density = moment_match(&normalized).expect("merge group is normalized and non-empty");
    WeightedGaussian {
        log_weight: total,
        density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    /// Constant-velocity transition for the [px, py, vx, vy] ordering.
    fn cv_a(dt: f64) -> DMatrix<f64> {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        a
    }

    fn cv_w(dt: f64, r: f64) -> DMatrix<f64> {
        let blocks = [
            (dt.powi(3) / 3.0, dt.powi(2) / 2.0),
            (dt.powi(2) / 2.0, dt),
        ];
        let mut w = DMatrix::zeros(4, 4);
        for axis in 0..2 {
            w[(axis, axis)] = r * blocks[0].0;
            w[(axis, axis + 2)] = r * blocks[0].1;
            w[(axis + 2, axis)] = r * blocks[1].0;
            w[(axis + 2, axis + 2)] = r * blocks[1].1;
        }
        w
    }

    fn h_gnss() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    /// Independent textbook KF update: direct inverse, no Joseph form.
    /// Used as the oracle for `kf_update`.
    fn oracle_kf_update(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        z: &DVector<f64>,
        h: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, f64) {
        let s = h * cov * h.transpose() + r;
        let s_inv = s.clone().try_inverse().unwrap();
        let k = cov * h.transpose() * &s_inv;
        let nu = z - h * mean;
        let mean_post = mean + &k * &nu;
        let cov_post = (DMatrix::identity(mean.len(), mean.len()) - &k * h) * cov;
        let log_lik = -0.5
            * (z.len() as f64 * (2.0 * PI).ln() + s.determinant().ln() + nu.dot(&(&s_inv * &nu)));
        (mean_post, cov_post, log_lik)
    }

    /// Joint-covariance conditioning oracle: stack (x, z), condition on z by
    /// the Schur complement.
    fn oracle_joint_condition(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        z: &DVector<f64>,
        h: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let pxz = cov * h.transpose();
        let szz = h * cov * h.transpose() + r;
        let szz_inv = szz.try_inverse().unwrap();
        let mean_post = mean + &pxz * &szz_inv * (z - h * mean);
        let cov_post = cov - &pxz * &szz_inv * pxz.transpose();
        (mean_post, cov_post)
    }

    fn random_density(rng: &mut ChaCha12Rng, dim: usize) -> GaussianDensity {
        let mean = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal) * 5.0);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        GaussianDensity::new(mean, cov).unwrap()
    }

    #[test]
    fn predict_linear_propagation() {
        let prior =
            GaussianDensity::new(dvec(&[0.0, 200.0, 0.0, -2.0]), DMatrix::identity(4, 4)).unwrap();
        let out = kf_predict(&prior, &cv_a(0.5), &DMatrix::zeros(4, 4)).unwrap();
        assert_abs_diff_eq!(out.mean()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.mean()[1], 199.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.mean()[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.mean()[3], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_identity_is_noop() {
        let prior =
            GaussianDensity::new(dvec(&[1.0, 2.0, 3.0, 4.0]), DMatrix::identity(4, 4) * 2.0)
                .unwrap();
        let out = kf_predict(&prior, &DMatrix::identity(4, 4), &DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(out.mean(), prior.mean());
        assert_eq!(out.cov(), prior.cov());
    }

    #[test]
    fn predict_cv_covariance_matches_matrix_oracle() {
        // Independent recomputation of A I A' + W, element by element.
        let prior =
            GaussianDensity::new(dvec(&[0.0, 200.0, 0.0, -2.0]), DMatrix::identity(4, 4)).unwrap();
        let (a, w) = (cv_a(0.5), cv_w(0.5, 0.05));
        let out = kf_predict(&prior, &a, &w).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    // I₄ in the middle collapses the product to A A'.
                    acc += a[(i, k)] * a[(j, k)];
                }
                expected[(i, j)] = acc + w[(i, j)];
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(out.cov()[(i, j)], expected[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn predict_dimension_mismatch_is_contract_error() {
        let prior = GaussianDensity::new(dvec(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let err = kf_predict(&prior, &cv_a(0.5), &DMatrix::zeros(4, 4)).unwrap_err();
        assert!(matches!(err, SlatError::Contract(_)));
    }

    #[test]
    fn update_matches_textbook_oracle() {
        let prior =
            GaussianDensity::new(dvec(&[0.0, 200.0, 0.0, -2.0]), DMatrix::identity(4, 4)).unwrap();
        let z = dvec(&[0.0, 199.0]);
        let r = DMatrix::identity(2, 2) * 5.76e-4;
        let (post, log_lik) = kf_update(&prior, &z, &h_gnss(), &r).unwrap();
        let (mean_o, cov_o, ll_o) =
            oracle_kf_update(prior.mean(), prior.cov(), &z, &h_gnss(), &r);
        for i in 0..4 {
            assert_abs_diff_eq!(post.mean()[i], mean_o[i], epsilon = 1e-6);
            for j in 0..4 {
                assert_abs_diff_eq!(post.cov()[(i, j)], cov_o[(i, j)], epsilon = 1e-6);
            }
        }
        assert_abs_diff_eq!(log_lik, ll_o, epsilon = 1e-9);
    }

    #[test]
    fn update_uninformative_measurement_keeps_prior() {
        let prior =
            GaussianDensity::new(dvec(&[1.0, -1.0, 0.5, 0.0]), DMatrix::identity(4, 4)).unwrap();
        let z = dvec(&[100.0, -100.0]);
        let r = DMatrix::identity(2, 2) * 1e12;
        let (post, _) = kf_update(&prior, &z, &h_gnss(), &r).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(post.mean()[i], prior.mean()[i], epsilon = 1e-3);
            assert_abs_diff_eq!(post.cov()[(i, i)], prior.cov()[(i, i)], epsilon = 1e-3);
        }
    }

    #[test]
    fn update_zero_innovation_keeps_mean_shrinks_cov() {
        let prior =
            GaussianDensity::new(dvec(&[3.0, 4.0, 1.0, 2.0]), DMatrix::identity(4, 4) * 2.0)
                .unwrap();
        let z = h_gnss() * prior.mean();
        let r = DMatrix::identity(2, 2) * 0.5;
        let (post, _) = kf_update(&prior, &z, &h_gnss(), &r).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(post.mean()[i], prior.mean()[i], epsilon = 1e-12);
        }
        assert!(post.cov().trace() < prior.cov().trace());
    }

    #[test]
    fn update_singular_innovation_is_degenerate_error() {
        let prior = GaussianDensity::new(dvec(&[0.0, 0.0]), DMatrix::zeros(2, 2)).unwrap();
        let err = kf_update(
            &prior,
            &dvec(&[0.0, 0.0]),
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, SlatError::Degenerate { .. }));
    }

    #[test]
    fn update_agrees_with_joint_conditioning_oracle() {
        // Conditioning via kf_update commutes with conditioning the joint
        // Gaussian over (x, z); identity-dynamics prediction afterwards
        // changes nothing.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let prior = random_density(&mut rng, 4);
            let h = DMatrix::from_fn(2, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = &b * b.transpose() + DMatrix::identity(2, 2) * 0.3;
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);

            let (post, _) = kf_update(&prior, &z, &h, &r).unwrap();
            let predicted =
                kf_predict(&post, &DMatrix::identity(4, 4), &DMatrix::zeros(4, 4)).unwrap();
            let (mean_o, cov_o) = oracle_joint_condition(prior.mean(), prior.cov(), &z, &h, &r);
            for i in 0..4 {
                assert_abs_diff_eq!(predicted.mean()[i], mean_o[i], epsilon = 1e-8);
                for j in 0..4 {
                    assert_abs_diff_eq!(predicted.cov()[(i, j)], cov_o[(i, j)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn moment_match_single_component_unchanged() {
        let d = GaussianDensity::new(dvec(&[1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let mix = GaussianMixture::new(vec![WeightedGaussian {
            log_weight: 0.0,
            density: d.clone(),
        }])
        .unwrap();
        let out = moment_match(&mix).unwrap();
        assert_eq!(out.mean(), d.mean());
        assert_eq!(out.cov(), d.cov());
    }

    #[test]
    fn moment_match_symmetric_pair() {
        let half = (0.5f64).ln();
        let mix = GaussianMixture::new(vec![
            WeightedGaussian {
                log_weight: half,
                density: GaussianDensity::new(dvec(&[-1.0]), DMatrix::identity(1, 1)).unwrap(),
            },
            WeightedGaussian {
                log_weight: half,
                density: GaussianDensity::new(dvec(&[1.0]), DMatrix::identity(1, 1)).unwrap(),
            },
        ])
        .unwrap();
        let out = moment_match(&mix).unwrap();
        assert_abs_diff_eq!(out.mean()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cov()[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn moment_match_matches_sampling_oracle() {
        // 3-component 4-D mixture vs sample moments of 10^6 draws.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let comps: Vec<WeightedGaussian> = raw
            .iter()
            .map(|w| WeightedGaussian {
                log_weight: (w / total).ln(),
                density: random_density(&mut rng, 4),
            })
            .collect();
        let mix = GaussianMixture::new(comps).unwrap();
        let matched = moment_match(&mix).unwrap();

        let n_draws = 1_000_000usize;
        let mut sum = DVector::zeros(4);
        let mut sq = DMatrix::zeros(4, 4);
        let weights: Vec<f64> = mix.components.iter().map(|c| c.log_weight.exp()).collect();
        let chols: Vec<_> = mix
            .components
            .iter()
            .map(|c| c.density.cov().clone().cholesky().unwrap())
            .collect();
        for _ in 0..n_draws {
            let u: f64 = rng.random();
            let mut pick = 0;
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u <= acc {
                    pick = i;
                    break;
                }
                pick = i;
            }
            let std = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = mix.components[pick].density.mean() + chols[pick].l() * std;
            sum += &x;
            sq += &x * x.transpose();
        }
        let sample_mean = &sum / n_draws as f64;
        let sample_cov = &sq / n_draws as f64 - &sample_mean * sample_mean.transpose();

        // 3σ Monte-Carlo bounds: std of the mean estimate is sqrt(var/n).
        for i in 0..4 {
            let se = (matched.cov()[(i, i)] / n_draws as f64).sqrt();
            assert!(
                (sample_mean[i] - matched.mean()[i]).abs() < 3.0 * se,
                "mean component {i} off: {} vs {}",
                sample_mean[i],
                matched.mean()[i]
            );
        }
        // Covariance entries: MC error of a second moment is of order
        // sqrt((P_ii P_jj + P_ij^2)/n); use 4σ headroom for the estimate.
        for i in 0..4 {
            for j in 0..4 {
                let var_est = matched.cov()[(i, i)] * matched.cov()[(j, j)]
                    + matched.cov()[(i, j)].powi(2);
                let se = (var_est / n_draws as f64).sqrt();
                assert!(
                    (sample_cov[(i, j)] - matched.cov()[(i, j)]).abs() < 4.0 * se,
                    "cov ({i},{j}) off: {} vs {}",
                    sample_cov[(i, j)],
                    matched.cov()[(i, j)]
                );
            }
        }
    }

    #[test]
    fn moment_match_empty_is_contract_error() {
        let err = moment_match(&GaussianMixture::empty()).unwrap_err();
        assert!(matches!(err, SlatError::Contract(_)));
    }

    #[test]
    fn prune_merge_below_threshold_everywhere_gives_empty() {
        let mix = GaussianMixture::new(vec![WeightedGaussian {
            log_weight: -20.0,
            density: GaussianDensity::new(dvec(&[0.0]), DMatrix::identity(1, 1)).unwrap(),
        }])
        .unwrap();
        let out = gm_prune_merge(&mix, -10.0, 4.0, 100);
        assert!(out.is_empty());
    }

    #[test]
    fn prune_merge_identical_components_combine() {
        let d = GaussianDensity::new(dvec(&[1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let w = (0.3f64).ln();
        let mix = GaussianMixture::new(vec![
            WeightedGaussian {
                log_weight: w,
                density: d.clone(),
            },
            WeightedGaussian {
                log_weight: w,
                density: d.clone(),
            },
        ])
        .unwrap();
        let out = gm_prune_merge(&mix, -100.0, 4.0, 100);
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.components[0].log_weight.exp(), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.components[0].density.mean()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prune_merge_preserves_total_weight_up_to_pruned_mass() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let comps: Vec<WeightedGaussian> = (0..50)
            .map(|_| WeightedGaussian {
                log_weight: rng.random_range(-12.0..0.0),
                density: random_density(&mut rng, 2),
            })
            .collect();
        let mix = GaussianMixture::new(comps).unwrap();
        let threshold = -8.0f64;
        let kept_mass: f64 = mix
            .components
            .iter()
            .filter(|c| c.log_weight >= threshold)
            .map(|c| c.log_weight.exp())
            .sum();
        let out = gm_prune_merge(&mix, threshold, 4.0, 20);
        assert!(out.len() <= 20);
        assert_abs_diff_eq!(out.total_weight(), kept_mass, epsilon = 1e-9);
    }

    #[test]
    fn moment_match_preserves_mean_and_grows_trace() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.random_range(1..5usize);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let comps: Vec<WeightedGaussian> = raw
                .iter()
                .map(|w| WeightedGaussian {
                    log_weight: (w / total).ln(),
                    density: random_density(&mut rng, 3),
                })
                .collect();
            let mix = GaussianMixture::new(comps).unwrap();
            let matched = moment_match(&mix).unwrap();

            let mut mean = DVector::zeros(3);
            let mut avg_trace = 0.0;
            for c in &mix.components {
                mean += c.log_weight.exp() * c.density.mean();
                avg_trace += c.log_weight.exp() * c.density.cov().trace();
            }
            for i in 0..3 {
                assert_abs_diff_eq!(matched.mean()[i], mean[i], epsilon = 1e-12);
            }
            assert!(matched.cov().trace() >= avg_trace - 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_handles_negative_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = log_sum_exp(&[0.0, f64::NEG_INFINITY]);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn online_lse_matches_batch() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..100).map(|_| rng.random_range(-500.0..10.0)).collect();
        let mut online = OnlineLogSumExp::new();
        for v in &values {
            online.push(*v);
        }
        assert_abs_diff_eq!(online.value(), log_sum_exp(&values), epsilon = 1e-9);
    }

    #[test]
    fn covariance_validation_rejects_asymmetry_and_indefiniteness() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(GaussianDensity::new(dvec(&[0.0, 0.0]), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianDensity::new(dvec(&[0.0, 0.0]), indef).is_err());
    }
}
