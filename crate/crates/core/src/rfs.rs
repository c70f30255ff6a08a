//! Random-finite-set belief containers.
//!
//! A [`PmbState`] carries one Poisson intensity of undetected features, a
//! list of Bernoulli components for potentially detected features, and a
//! Gaussian belief per vehicle. Exactly one global hypothesis is
//! represented (PMB, not PMBM): there is no hypothesis-weight list.
//!
//! States are immutable snapshots; each filter step consumes one snapshot
//! and produces a new one.

use crate::error::{Result, SlatError};
use crate::gaussian::{GaussianDensity, GaussianMixture, WeightedGaussian};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One potentially detected feature: probability of existence `r` and the
/// existence-conditioned pdf over [px, py, vx, vy].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernoulliComponent {
    /// Stable diagnostic label; carries no statistical meaning.
    pub id: u64,
    pub r: f64,
    pub pdf: GaussianDensity,
}

impl BernoulliComponent {
    pub fn new(id: u64, r: f64, pdf: GaussianDensity) -> Result<Self> {
        if !(0.0..=1.0 + 1e-12).contains(&r) && !(-1e-12..0.0).contains(&r) {
            return Err(SlatError::contract(format!(
                "existence probability {r} outside [0, 1]"
            )));
        }
        Ok(Self {
            id,
            r: clamp_probability(r),
            pdf,
        })
    }
}

/// Clamp a probability to [0, 1]; arithmetic may overshoot by ~1e-12.
pub fn clamp_probability(p: f64) -> f64 {
    debug_assert!(
        (-1e-9..=1.0 + 1e-9).contains(&p),
        "probability {p} far outside [0, 1]"
    );
    p.clamp(0.0, 1.0)
}

/// Gaussian-mixture intensity of undetected features. Weights are
/// nonnegative and need not sum to one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PoissonIntensity {
    pub gm: GaussianMixture,
}

impl PoissonIntensity {
    pub fn new(gm: GaussianMixture) -> Result<Self> {
        let total = gm.total_weight();
        if !total.is_finite() || total < 0.0 {
            return Err(SlatError::contract(format!(
                "intensity total weight {total} must be finite and nonnegative"
            )));
        }
        Ok(Self { gm })
    }

    pub fn empty() -> Self {
        Self {
            gm: GaussianMixture::empty(),
        }
    }

    /// ⟨D, 1⟩: the expected number of undetected features.
    pub fn total_weight(&self) -> f64 {
        self.gm.total_weight()
    }
}

/// Gaussian belief over one vehicle state [px, py, vx, vy].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleBelief {
    pub vehicle_id: u32,
    pub state: GaussianDensity,
}

/// The filter's full belief at one time step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmbState {
    pub time_step: u32,
    pub undetected: PoissonIntensity,
    pub detected: Vec<BernoulliComponent>,
    pub vehicles: BTreeMap<u32, VehicleBelief>,
    /// Per-run counter backing Bernoulli id assignment. Not part of the
    /// serialized record; restored from the detected list on deserialize.
    #[serde(skip, default)]
    pub next_id: u64,
}

impl PmbState {
    pub fn new(
        time_step: u32,
        undetected: PoissonIntensity,
        detected: Vec<BernoulliComponent>,
        vehicles: BTreeMap<u32, VehicleBelief>,
    ) -> Result<Self> {
        let mut ids: Vec<u64> = detected.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != detected.len() {
            return Err(SlatError::contract("duplicate Bernoulli ids"));
        }
        let next_id = detected.iter().map(|b| b.id + 1).max().unwrap_or(0);
        Ok(Self {
            time_step,
            undetected,
            detected,
            vehicles,
            next_id,
        })
    }

    pub fn vehicle(&self, vehicle_id: u32) -> Result<&VehicleBelief> {
        self.vehicles
            .get(&vehicle_id)
            .ok_or(SlatError::UnknownVehicle(vehicle_id))
    }

    /// Serialize to the self-describing text record used for debugging and
    /// golden tests.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("PmbState serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut state: PmbState = serde_json::from_str(text)
            .map_err(|e| SlatError::contract(format!("invalid PmbState record: {e}")))?;
        state.next_id = state.detected.iter().map(|b| b.id + 1).max().unwrap_or(0);
        Ok(state)
    }

    /// Debug-build sanity check over every component.
    pub fn debug_validate(&self) {
        if cfg!(debug_assertions) {
            for b in &self.detected {
                debug_assert!((0.0..=1.0).contains(&b.r), "Bernoulli {} r={}", b.id, b.r);
            }
            let total = self.undetected.total_weight();
            debug_assert!(total.is_finite() && total >= 0.0, "intensity weight {total}");
        }
    }
}

/// Timestamped sensor scan from one vehicle: an optional GNSS fix plus the
/// set of V2F measurement vectors.
///
/// `v2f: None` means the scan carries no V2F data at all; `Some(vec![])`
/// means the V2F sensor reported an empty measurement set, which is an
/// informative (all features missed) observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub time_step: u32,
    pub vehicle_id: u32,
    pub gnss: Option<[f64; 2]>,
    pub v2f: Option<Vec<[f64; 2]>>,
}

impl ScanRecord {
    pub fn gnss_vector(&self) -> Option<DVector<f64>> {
        self.gnss.map(|z| DVector::from_row_slice(&z))
    }

    pub fn v2f_vectors(&self) -> Option<Vec<DVector<f64>>> {
        self.v2f
            .as_ref()
            .map(|zs| zs.iter().map(|z| DVector::from_row_slice(z)).collect())
    }
}

/// Log-domain single-scan association weights.
///
/// Row i describes prior Bernoulli i: one miss weight log ρ_i(∅) plus m
/// detection weights log ρ_i({z_k}). Column entries of `log_new` carry the
/// combined clutter plus new-feature mass log ρ(z_k).
#[derive(Debug, Clone)]
pub struct AssociationProblem {
    pub log_miss: Vec<f64>,
    /// n x m matrix of log detection weights; -inf marks a gated pair.
    pub log_detect: DMatrix<f64>,
    pub log_new: Vec<f64>,
}

impl AssociationProblem {
    pub fn new(log_miss: Vec<f64>, log_detect: DMatrix<f64>, log_new: Vec<f64>) -> Result<Self> {
        let (n, m) = (log_miss.len(), log_new.len());
        if log_detect.nrows() != n || log_detect.ncols() != m {
            return Err(SlatError::contract(format!(
                "log_detect is {}x{}, expected {}x{}",
                log_detect.nrows(),
                log_detect.ncols(),
                n,
                m
            )));
        }
        let finite_or_neg_inf =
            |v: f64| v.is_finite() || v == f64::NEG_INFINITY;
        if !log_miss.iter().all(|&v| finite_or_neg_inf(v))
            || !log_new.iter().all(|&v| finite_or_neg_inf(v))
            || !log_detect.iter().all(|&v| finite_or_neg_inf(v))
        {
            return Err(SlatError::contract(
                "association weights must be finite or -inf",
            ));
        }
        Ok(Self {
            log_miss,
            log_detect,
            log_new,
        })
    }

    pub fn n_bernoulli(&self) -> usize {
        self.log_miss.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.log_new.len()
    }
}

/// Means of all Bernoullis whose probability of existence strictly exceeds
/// the threshold.
pub fn estimate_features(state: &PmbState, r_threshold: f64) -> Result<Vec<DVector<f64>>> {
    if !(0.0 < r_threshold && r_threshold < 1.0) {
        return Err(SlatError::contract(format!(
            "existence threshold {r_threshold} must lie strictly inside (0, 1)"
        )));
    }
    Ok(state
        .detected
        .iter()
        .filter(|b| b.r > r_threshold)
        .map(|b| b.pdf.mean().clone())
        .collect())
}

/// Remove Bernoullis with existence below `r_prune`. With `recycle` on, the
/// removed existence mass re-enters the undetected intensity as weighted
/// components.
pub fn recycle_or_prune(state: &PmbState, r_prune: f64, recycle: bool) -> Result<PmbState> {
    if !(0.0..1.0).contains(&r_prune) {
        return Err(SlatError::contract(format!(
            "prune threshold {r_prune} must lie in [0, 1)"
        )));
    }
    let mut kept = Vec::with_capacity(state.detected.len());
    let mut recycled = state.undetected.gm.components.clone();
    for b in &state.detected {
        if b.r < r_prune {
            if recycle && b.r > 0.0 {
                recycled.push(WeightedGaussian {
                    log_weight: b.r.ln(),
                    density: b.pdf.clone(),
                });
            }
        } else {
            kept.push(b.clone());
        }
    }
    let mut out = state.clone();
    out.detected = kept;
    out.undetected = PoissonIntensity::new(GaussianMixture::new(recycled)?)?;
    out.debug_validate();
    Ok(out)
}

/// Origin label of one V2F measurement, recorded by the simulator for the
/// genie baseline and OSPA scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementOrigin {
    Feature(u32),
    Clutter,
}
