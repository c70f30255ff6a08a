//! Linear-Gaussian system models: constant-velocity dynamics, GNSS and
//! vehicle-to-feature (V2F) measurements, clutter, detection, survival and
//! birth.
//!
//! State ordering is fixed as [px, py, vx, vy] so the Kronecker-product
//! forms of the transition and noise matrices expand unambiguously.

use crate::error::{Result, SlatError};
use crate::gaussian::{log_gaussian, GaussianDensity};
use crate::rfs::PoissonIntensity;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Position-selecting observation matrix H_G = [1 0] ⊗ I₂.
pub fn gnss_obs_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
}

/// Vehicle part of the V2F model, H₁ = H_G.
pub fn v2f_vehicle_matrix() -> DMatrix<f64> {
    gnss_obs_matrix()
}

/// Feature part of the V2F model, H₂ = -H_G.
pub fn v2f_feature_matrix() -> DMatrix<f64> {
    -gnss_obs_matrix()
}

/// Wide prior covariance diag(100², 100², 1, 1) covering the feature state
/// ranges of interest; used by the initial unknown intensity, the birth
/// intensity and the genie baseline's feature birth prior.
pub fn feature_coverage_cov() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(&[1e4, 1e4, 1.0, 1.0]))
}

/// Constant-velocity motion model with white-noise acceleration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvModel {
    /// Sampling time in seconds.
    pub dt: f64,
    /// Acceleration noise intensity r in the process noise W.
    pub accel_psd: f64,
}

impl CvModel {
    pub fn new(dt: f64, accel_psd: f64) -> Result<Self> {
        if dt <= 0.0 {
            return Err(SlatError::contract(format!("dt {dt} must be positive")));
        }
        if accel_psd < 0.0 {
            return Err(SlatError::contract(format!(
                "acceleration noise {accel_psd} must be nonnegative"
            )));
        }
        Ok(Self { dt, accel_psd })
    }

    /// A = [[1, dt], [0, 1]] ⊗ I₂ and W = r [[dt³/3, dt²/2], [dt²/2, dt]] ⊗ I₂
    /// under the [px, py, vx, vy] ordering.
    pub fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;

        let r = self.accel_psd;
        let (w_pp, w_pv, w_vv) = (r * dt.powi(3) / 3.0, r * dt.powi(2) / 2.0, r * dt);
        let mut w = DMatrix::zeros(4, 4);
        for axis in 0..2 {
            w[(axis, axis)] = w_pp;
            w[(axis, axis + 2)] = w_pv;
            w[(axis + 2, axis)] = w_pv;
            w[(axis + 2, axis + 2)] = w_vv;
        }
        (a, w)
    }
}

/// GNSS-like measurement of the vehicle position: z = H_G s + r,
/// r ~ N(0, σ² I₂).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GnssModel {
    pub sigma2: f64,
}

impl GnssModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if sigma2 <= 0.0 {
            return Err(SlatError::contract(format!(
                "GNSS variance {sigma2} must be positive"
            )));
        }
        Ok(Self { sigma2 })
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.sigma2
    }
}

/// Vehicle-to-feature measurement model z = H₁ s + H₂ x + q with
/// q ~ N(0, σ² I₂), plus detection and clutter parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct V2fModel {
    pub sigma2: f64,
    /// State-independent probability of detection.
    pub detection_prob: f64,
    /// Expected number of false alarms per scan.
    pub clutter_rate: f64,
    /// Clutter is uniform on the square [-r_max, r_max]².
    pub clutter_half_extent: f64,
}

impl V2fModel {
    pub fn new(
        sigma2: f64,
        detection_prob: f64,
        clutter_rate: f64,
        clutter_half_extent: f64,
    ) -> Result<Self> {
        if sigma2 <= 0.0 {
            return Err(SlatError::contract(format!(
                "V2F variance {sigma2} must be positive"
            )));
        }
        if !(0.0 < detection_prob && detection_prob <= 1.0) {
            return Err(SlatError::contract(format!(
                "detection probability {detection_prob} must lie in (0, 1]"
            )));
        }
        if clutter_rate < 0.0 {
            return Err(SlatError::contract(format!(
                "clutter rate {clutter_rate} must be nonnegative"
            )));
        }
        if clutter_half_extent <= 0.0 {
            return Err(SlatError::contract(format!(
                "clutter region half extent {clutter_half_extent} must be positive"
            )));
        }
        Ok(Self {
            sigma2,
            detection_prob,
            clutter_rate,
            clutter_half_extent,
        })
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.sigma2
    }

    /// log λ_c(z): log(λ_c / (2 r_max)²) inside the square, -inf outside.
    pub fn clutter_log_intensity(&self, z: &DVector<f64>) -> f64 {
        let r = self.clutter_half_extent;
        if self.clutter_rate <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if z[0].abs() > r || z[1].abs() > r {
            return f64::NEG_INFINITY;
        }
        self.clutter_rate.ln() - (2.0 * r).powi(2).ln()
    }
}

/// Feature birth intensity, initial undetected intensity and survival
/// probability.
#[derive(Debug, Clone)]
pub struct BirthSurvivalModel {
    pub birth: PoissonIntensity,
    pub initial_unknown: PoissonIntensity,
    pub survival_prob: f64,
}

impl BirthSurvivalModel {
    pub fn new(
        birth: PoissonIntensity,
        initial_unknown: PoissonIntensity,
        survival_prob: f64,
    ) -> Result<Self> {
        if !(0.0 < survival_prob && survival_prob <= 1.0) {
            return Err(SlatError::contract(format!(
                "survival probability {survival_prob} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            birth,
            initial_unknown,
            survival_prob,
        })
    }
}

/// Detection likelihood with both the vehicle and the feature state
/// marginalized out:
///
/// log p_D N(z; H₁ μ_s + H₂ μ_x, H₁ P_s H₁' + H₂ P_x H₂' + Q).
pub fn v2f_effective_log_likelihood(
    z: &DVector<f64>,
    vehicle: &GaussianDensity,
    feature: &GaussianDensity,
    model: &V2fModel,
) -> Result<f64> {
    let h1 = v2f_vehicle_matrix();
    let h2 = v2f_feature_matrix();
    if z.len() != 2 || vehicle.dim() != 4 || feature.dim() != 4 {
        return Err(SlatError::contract(
            "v2f_effective_log_likelihood expects a 2-D measurement and 4-D states",
        ));
    }
    let mean = &h1 * vehicle.mean() + &h2 * feature.mean();
    let cov = &h1 * vehicle.cov() * h1.transpose()
        + &h2 * feature.cov() * h2.transpose()
        + model.noise_cov();
    let log_n = log_gaussian(z, &mean, &cov).map_err(|_| {
        SlatError::degenerate(
            "v2f_effective_log_likelihood",
            "singular innovation covariance",
        )
    })?;
    Ok(model.detection_prob.ln() + log_n)
}
