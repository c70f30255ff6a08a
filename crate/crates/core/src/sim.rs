//! Synthetic scenario generation and the Monte-Carlo harness.
//!
//! Trajectories: vehicles run the CV model forward from fixed initial
//! states. Feature states are drawn at a common anchor step and propagated
//! forward and backward in time with the same noise statistics, entering
//! the scene on a staggered birth schedule and staying alive afterwards.
//!
//! All randomness flows from one seed; detection, clutter and noise
//! streams are split per (vehicle, step) so that filter variants and
//! parameter sweeps consume paired random numbers.

use crate::baselines::{local_kf, GenieCentralKf, LabeledScan};
use crate::error::{Result, SlatError};
use crate::filter::{step_sequential, FilterConfig, ModelSet};
use crate::gaussian::{GaussianDensity, GaussianMixture, WeightedGaussian};
use crate::metrics::{ospa, OspaParams, OspaRow, VehicleErrorRow};
use crate::models::{
    feature_coverage_cov, BirthSurvivalModel, CvModel, GnssModel, V2fModel,
};
use crate::rfs::{
    estimate_features, MeasurementOrigin, PmbState, PoissonIntensity, ScanRecord, VehicleBelief,
};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Existence threshold used when extracting feature estimates for OSPA.
pub const ESTIMATE_R_THRESHOLD: f64 = 0.5;

/// One simulated vehicle: fixed initial state and its GNSS receiver grade.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: u32,
    pub initial_state: [f64; 4],
    pub gnss_sigma2: f64,
}

/// Full description of the synthetic world and filter priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    /// Number of time points 0..duration_steps-1; scans arrive from step 1.
    pub duration_steps: u32,
    pub dt: f64,
    pub vehicles: Vec<VehicleSpec>,
    pub feature_count: u32,
    /// Feature k (1-based) becomes alive at step (k-1) * birth_interval.
    pub birth_interval: u32,
    /// All features share the N(0, feature_init_var I₄) marginal here.
    pub anchor_step: u32,
    pub feature_init_var: f64,
    pub accel_psd: f64,
    pub v2f_sigma2: f64,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    pub clutter_half_extent: f64,
    pub survival_prob: f64,
    pub birth_weight: f64,
    pub initial_unknown_weight: f64,
    /// Diagonal of the filters' initial vehicle covariance.
    pub initial_vehicle_pos_var: f64,
    pub initial_vehicle_vel_var: f64,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            duration_steps: 351,
            dt: 0.5,
            vehicles: vec![
                VehicleSpec {
                    id: 1,
                    initial_state: [0.0, 200.0, 0.0, -2.0],
                    gnss_sigma2: 5.76e-4,
                },
                VehicleSpec {
                    id: 2,
                    initial_state: [0.0, -200.0, 0.0, 2.0],
                    gnss_sigma2: 12.96,
                },
            ],
            feature_count: 5,
            birth_interval: 20,
            anchor_step: 175,
            feature_init_var: 0.25,
            accel_psd: 0.05,
            v2f_sigma2: 0.42,
            detection_prob: 0.9,
            clutter_rate: 10.0,
            clutter_half_extent: 500.0,
            survival_prob: 0.7,
            birth_weight: 0.05,
            initial_unknown_weight: 10.0,
            initial_vehicle_pos_var: 1.0,
            initial_vehicle_vel_var: 1.0,
            ospa_cutoff: 20.0,
            ospa_order: 2.0,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    /// Single-vehicle variant of the default scenario.
    pub fn single_vehicle() -> Self {
        let mut spec = Self::default();
        spec.vehicles.truncate(1);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_steps == 0 {
            return Err(SlatError::contract("duration_steps must be positive"));
        }
        if self.dt <= 0.0 {
            return Err(SlatError::contract("dt must be positive"));
        }
        if self.vehicles.is_empty() {
            return Err(SlatError::contract("at least one vehicle is required"));
        }
        let mut ids: Vec<u32> = self.vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.vehicles.len() {
            return Err(SlatError::contract("duplicate vehicle ids"));
        }
        for v in &self.vehicles {
            if v.gnss_sigma2 <= 0.0 {
                return Err(SlatError::contract(format!(
                    "vehicle {}: gnss_sigma2 must be positive",
                    v.id
                )));
            }
        }
        for (name, value) in [
            ("feature_init_var", self.feature_init_var),
            ("v2f_sigma2", self.v2f_sigma2),
            ("clutter_half_extent", self.clutter_half_extent),
        ] {
            if value <= 0.0 {
                return Err(SlatError::contract(format!("{name} must be positive")));
            }
        }
        if self.accel_psd < 0.0 || self.clutter_rate < 0.0 {
            return Err(SlatError::contract(
                "accel_psd and clutter_rate must be nonnegative",
            ));
        }
        if !(0.0 < self.detection_prob && self.detection_prob <= 1.0) {
            return Err(SlatError::contract(format!(
                "detection_prob {} must lie in (0, 1]",
                self.detection_prob
            )));
        }
        if !(0.0 < self.survival_prob && self.survival_prob <= 1.0) {
            return Err(SlatError::contract(format!(
                "survival_prob {} must lie in (0, 1]",
                self.survival_prob
            )));
        }
        if self.anchor_step >= self.duration_steps {
            return Err(SlatError::contract("anchor_step must lie within the run"));
        }
        for k in 0..self.feature_count {
            if k * self.birth_interval >= self.duration_steps {
                return Err(SlatError::contract(format!(
                    "feature {} is born after the run ends",
                    k + 1
                )));
            }
        }
        OspaParams::new(self.ospa_cutoff, self.ospa_order)?;
        Ok(())
    }

    pub fn ospa_params(&self) -> OspaParams {
        OspaParams::new(self.ospa_cutoff, self.ospa_order).expect("validated")
    }

    pub fn cv_model(&self) -> Result<CvModel> {
        CvModel::new(self.dt, self.accel_psd)
    }

    pub fn v2f_model(&self) -> Result<V2fModel> {
        V2fModel::new(
            self.v2f_sigma2,
            self.detection_prob,
            self.clutter_rate,
            self.clutter_half_extent,
        )
    }

    /// All models the filter needs, as configured by this scenario.
    pub fn model_set(&self) -> Result<ModelSet> {
        let mut gnss = BTreeMap::new();
        for v in &self.vehicles {
            gnss.insert(v.id, GnssModel::new(v.gnss_sigma2)?);
        }
        let coverage = GaussianDensity::new(DVector::zeros(4), feature_coverage_cov())?;
        let birth = PoissonIntensity::new(GaussianMixture::new(vec![WeightedGaussian {
            log_weight: self.birth_weight.ln(),
            density: coverage.clone(),
        }])?)?;
        let initial_unknown =
            PoissonIntensity::new(GaussianMixture::new(vec![WeightedGaussian {
                log_weight: self.initial_unknown_weight.ln(),
                density: coverage,
            }])?)?;
        Ok(ModelSet {
            cv: self.cv_model()?,
            gnss,
            v2f: self.v2f_model()?,
            birth_survival: BirthSurvivalModel::new(birth, initial_unknown, self.survival_prob)?,
        })
    }

    /// The filters' belief at step 0: the initial unknown intensity, no
    /// Bernoullis, and per-vehicle Gaussians centered on the true initial
    /// states.
    pub fn initial_state(&self) -> Result<PmbState> {
        let models = self.model_set()?;
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[
            self.initial_vehicle_pos_var,
            self.initial_vehicle_pos_var,
            self.initial_vehicle_vel_var,
            self.initial_vehicle_vel_var,
        ]));
        let mut vehicles = BTreeMap::new();
        for v in &self.vehicles {
            vehicles.insert(
                v.id,
                VehicleBelief {
                    vehicle_id: v.id,
                    state: GaussianDensity::new(
                        DVector::from_row_slice(&v.initial_state),
                        cov.clone(),
                    )?,
                },
            );
        }
        PmbState::new(
            0,
            models.birth_survival.initial_unknown.clone(),
            vec![],
            vehicles,
        )
    }

    pub fn initial_vehicle_beliefs(&self) -> Result<BTreeMap<u32, GaussianDensity>> {
        Ok(self
            .initial_state()?
            .vehicles
            .into_iter()
            .map(|(id, b)| (id, b.state))
            .collect())
    }
}

/// One feature's life: alive from `birth_step` to the end of the run;
/// `states[i]` is its state at step `birth_step + i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub id: u32,
    pub birth_step: u32,
    pub states: Vec<[f64; 4]>,
}

impl FeatureTrack {
    pub fn state_at(&self, t: u32) -> Option<&[f64; 4]> {
        if t < self.birth_step {
            return None;
        }
        self.states.get((t - self.birth_step) as usize)
    }
}

/// True world history plus the per-scan measurement origin labels filled
/// in by [`generate_scans`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub duration_steps: u32,
    /// Vehicle id to per-step states, t = 0..duration_steps-1.
    pub vehicles: BTreeMap<u32, Vec<[f64; 4]>>,
    pub features: Vec<FeatureTrack>,
    /// Aligned one-to-one with the scan list produced by `generate_scans`.
    pub scan_origins: Vec<Vec<MeasurementOrigin>>,
}

impl GroundTruth {
    pub fn alive_feature_positions(&self, t: u32) -> Vec<DVector<f64>> {
        self.features
            .iter()
            .filter_map(|f| f.state_at(t))
            .map(|s| DVector::from_row_slice(&s[..2]))
            .collect()
    }

    pub fn vehicle_position(&self, id: u32, t: u32) -> Option<DVector<f64>> {
        self.vehicles
            .get(&id)
            .and_then(|states| states.get(t as usize))
            .map(|s| DVector::from_row_slice(&s[..2]))
    }

    pub fn feature_births(&self) -> Vec<(u32, u32)> {
        self.features.iter().map(|f| (f.id, f.birth_step)).collect()
    }
}

/// Split an independent, deterministic substream off the base seed.
fn substream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut x = seed;
    for &t in tags {
        // splitmix64 step keyed by the tag.
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(t);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    ChaCha12Rng::seed_from_u64(x)
}

fn standard_normal_vec(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draw from N(0, W); W may be exactly zero.
fn sample_noise(rng: &mut ChaCha12Rng, w_chol: Option<&DMatrix<f64>>, n: usize) -> DVector<f64> {
    let z = standard_normal_vec(rng, n);
    match w_chol {
        Some(l) => l * z,
        None => DVector::zeros(n),
    }
}

/// Generate vehicle and feature trajectories for one run.
pub fn generate_trajectories(spec: &ScenarioSpec, seed: u64) -> Result<GroundTruth> {
    let cv = spec.cv_model()?;
    let (a, w) = cv.matrices();
    let w_chol = if w.norm() > 0.0 {
        Some(
            w.clone()
                .cholesky()
                .ok_or_else(|| SlatError::degenerate("generate_trajectories", "W not PD"))?
                .l(),
        )
    } else {
        None
    };
    // Time-reversed transition: x_{t} = A^{-1}(x_{t+1} - w) with the same
    // noise statistics, so that x_{t+1} = A x_t + w holds exactly.
    let a_inv = {
        let mut ai = DMatrix::identity(4, 4);
        ai[(0, 2)] = -spec.dt;
        ai[(1, 3)] = -spec.dt;
        ai
    };

    let steps = spec.duration_steps as usize;
    let mut vehicles = BTreeMap::new();
    for v in &spec.vehicles {
        let mut rng = substream(seed, &[1, v.id as u64]);
        let mut states = Vec::with_capacity(steps);
        let mut x = DVector::from_row_slice(&v.initial_state);
        states.push([x[0], x[1], x[2], x[3]]);
        for _ in 1..steps {
            x = &a * &x + sample_noise(&mut rng, w_chol.as_ref(), 4);
            states.push([x[0], x[1], x[2], x[3]]);
        }
        vehicles.insert(v.id, states);
    }

    let mut features = Vec::with_capacity(spec.feature_count as usize);
    for k in 0..spec.feature_count {
        let mut rng = substream(seed, &[2, k as u64]);
        let anchor = spec.anchor_step as usize;
        let mut all = vec![[0.0f64; 4]; steps];
        let x_anchor = standard_normal_vec(&mut rng, 4) * spec.feature_init_var.sqrt();
        all[anchor] = [x_anchor[0], x_anchor[1], x_anchor[2], x_anchor[3]];
        let mut x = x_anchor.clone();
        for state in all.iter_mut().take(steps).skip(anchor + 1) {
            x = &a * &x + sample_noise(&mut rng, w_chol.as_ref(), 4);
            *state = [x[0], x[1], x[2], x[3]];
        }
        let mut x = x_anchor;
        for t in (0..anchor).rev() {
            let noise = sample_noise(&mut rng, w_chol.as_ref(), 4);
            x = &a_inv * (&x - &noise);
            all[t] = [x[0], x[1], x[2], x[3]];
        }
        let birth_step = k * spec.birth_interval;
        features.push(FeatureTrack {
            id: k,
            birth_step,
            states: all.split_off(birth_step as usize),
        });
    }

    Ok(GroundTruth {
        duration_steps: spec.duration_steps,
        vehicles,
        features,
        scan_origins: Vec::new(),
    })
}

/// Generate GNSS and V2F scans over the whole run, filling the origin
/// labels into the truth. Scans cover steps 1..duration_steps-1 sorted by
/// (step, vehicle id); measurement order is shuffled within each scan.
pub fn generate_scans(truth: &mut GroundTruth, spec: &ScenarioSpec, seed: u64) -> Vec<ScanRecord> {
    let mut scans = Vec::new();
    truth.scan_origins.clear();
    let gnss_sigma: BTreeMap<u32, f64> = spec
        .vehicles
        .iter()
        .map(|v| (v.id, v.gnss_sigma2.sqrt()))
        .collect();
    let v2f_sigma = spec.v2f_sigma2.sqrt();

    for t in 1..spec.duration_steps {
        for v in &spec.vehicles {
            let mut rng = substream(seed, &[3, v.id as u64, t as u64]);
            let s_true = DVector::from_row_slice(&truth.vehicles[&v.id][t as usize]);

            // GNSS fix: standard normals scaled by the receiver grade so
            // that parameter sweeps reuse the same draws.
            let gnss_noise = standard_normal_vec(&mut rng, 2) * gnss_sigma[&v.id];
            let gnss = [s_true[0] + gnss_noise[0], s_true[1] + gnss_noise[1]];

            let mut v2f: Vec<[f64; 2]> = Vec::new();
            let mut origins: Vec<MeasurementOrigin> = Vec::new();
            for f in &truth.features {
                let Some(x_true) = f.state_at(t) else {
                    continue;
                };
                let u: f64 = rng.random();
                let noise = standard_normal_vec(&mut rng, 2) * v2f_sigma;
                if u < spec.detection_prob {
                    v2f.push([
                        s_true[0] - x_true[0] + noise[0],
                        s_true[1] - x_true[1] + noise[1],
                    ]);
                    origins.push(MeasurementOrigin::Feature(f.id));
                }
            }
            let n_clutter = if spec.clutter_rate > 0.0 {
                Poisson::new(spec.clutter_rate).expect("positive rate").sample(&mut rng) as usize
            } else {
                0
            };
            for _ in 0..n_clutter {
                let r = spec.clutter_half_extent;
                v2f.push([rng.random_range(-r..=r), rng.random_range(-r..=r)]);
                origins.push(MeasurementOrigin::Clutter);
            }

            // Sets are unordered; shuffle measurements and labels together.
            let mut order: Vec<usize> = (0..v2f.len()).collect();
            order.shuffle(&mut rng);
            let v2f: Vec<[f64; 2]> = order.iter().map(|&i| v2f[i]).collect();
            let origins: Vec<MeasurementOrigin> = order.iter().map(|&i| origins[i]).collect();

            scans.push(ScanRecord {
                time_step: t,
                vehicle_id: v.id,
                gnss: Some(gnss),
                v2f: Some(v2f),
            });
            truth.scan_origins.push(origins);
        }
    }
    scans
}

/// A filter configuration with the label used in the metric tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedFilterConfig {
    pub label: String,
    #[serde(default)]
    pub config: FilterConfig,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BaselineFlags {
    pub local_kf: bool,
    pub genie_kf: bool,
}

/// Metrics produced by one (configuration, seed) pair.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub label: String,
    pub run_id: u64,
    pub ospa: Vec<OspaRow>,
    pub vehicle_errors: Vec<VehicleErrorRow>,
}

/// A generated world: truth, scans and labels, ready to be replayed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimWorld {
    pub spec: ScenarioSpec,
    pub run_id: u64,
    pub truth: GroundTruth,
    pub scans: Vec<ScanRecord>,
}

pub fn generate_world(spec: &ScenarioSpec, run_id: u64) -> Result<SimWorld> {
    let mut truth = generate_trajectories(spec, run_id)?;
    let scans = generate_scans(&mut truth, spec, run_id);
    Ok(SimWorld {
        spec: spec.clone(),
        run_id,
        truth,
        scans,
    })
}

/// Scans of one world grouped per time step, in arrival order.
pub fn scans_by_step(world: &SimWorld) -> Vec<(u32, Vec<&ScanRecord>)> {
    let mut by_step: BTreeMap<u32, Vec<&ScanRecord>> = BTreeMap::new();
    for scan in &world.scans {
        by_step.entry(scan.time_step).or_default().push(scan);
    }
    by_step.into_iter().collect()
}

/// Run one filter configuration over one world. Returns per-step OSPA and
/// vehicle position errors, plus optionally the per-step states.
pub fn run_filter(
    world: &SimWorld,
    cfg: &FilterConfig,
    label: &str,
    mut snapshots: Option<&mut Vec<PmbState>>,
) -> Result<RunMetrics> {
    cfg.validate()?;
    let models = world.spec.model_set()?;
    let params = world.spec.ospa_params();
    let mut state = world.spec.initial_state()?;
    let mut ospa_rows = Vec::new();
    let mut vehicle_rows = Vec::new();
    for (t, scans) in scans_by_step(world) {
        let owned: Vec<ScanRecord> = scans.iter().map(|s| (*s).clone()).collect();
        state = step_sequential(&state, &owned, &models, cfg)?;
        let estimates = estimate_features(&state, ESTIMATE_R_THRESHOLD)?;
        let estimate_positions: Vec<DVector<f64>> =
            estimates.iter().map(|m| m.rows(0, 2).into_owned()).collect();
        let truth_positions = world.truth.alive_feature_positions(t);
        ospa_rows.push(OspaRow {
            run_id: world.run_id,
            t,
            ospa_m: ospa(&estimate_positions, &truth_positions, &params),
        });
        for (id, belief) in &state.vehicles {
            if let Some(true_pos) = world.truth.vehicle_position(*id, t) {
                let err = (belief.state.mean().rows(0, 2) - true_pos).norm();
                vehicle_rows.push(VehicleErrorRow {
                    run_id: world.run_id,
                    t,
                    vehicle_id: *id,
                    pos_error_m: err,
                });
            }
        }
        if let Some(snaps) = snapshots.as_deref_mut() {
            snaps.push(state.clone());
        }
    }
    Ok(RunMetrics {
        label: label.to_string(),
        run_id: world.run_id,
        ospa: ospa_rows,
        vehicle_errors: vehicle_rows,
    })
}

/// Run the local KF baseline over one world.
pub fn run_local_kf(world: &SimWorld) -> Result<RunMetrics> {
    let cv = world.spec.cv_model()?;
    let initial = world.spec.initial_vehicle_beliefs()?;
    let mut vehicle_rows = Vec::new();
    for v in &world.spec.vehicles {
        let scans: Vec<ScanRecord> = world
            .scans
            .iter()
            .filter(|s| s.vehicle_id == v.id)
            .cloned()
            .collect();
        let gnss = GnssModel::new(v.gnss_sigma2)?;
        let beliefs = local_kf(&initial[&v.id], &scans, &cv, &gnss)?;
        for (scan, belief) in scans.iter().zip(&beliefs) {
            if let Some(true_pos) = world.truth.vehicle_position(v.id, scan.time_step) {
                vehicle_rows.push(VehicleErrorRow {
                    run_id: world.run_id,
                    t: scan.time_step,
                    vehicle_id: v.id,
                    pos_error_m: (belief.mean().rows(0, 2) - true_pos).norm(),
                });
            }
        }
    }
    vehicle_rows.sort_by_key(|r| (r.t, r.vehicle_id));
    Ok(RunMetrics {
        label: "local_kf".to_string(),
        run_id: world.run_id,
        ospa: vec![],
        vehicle_errors: vehicle_rows,
    })
}

/// Run the genie central KF baseline over one world.
pub fn run_genie_kf(world: &SimWorld) -> Result<RunMetrics> {
    let spec = &world.spec;
    let mut gnss = BTreeMap::new();
    for v in &spec.vehicles {
        gnss.insert(v.id, GnssModel::new(v.gnss_sigma2)?);
    }
    let genie = GenieCentralKf {
        cv: spec.cv_model()?,
        gnss,
        v2f: spec.v2f_model()?,
        birth_prior: GaussianDensity::new(DVector::zeros(4), feature_coverage_cov())?,
    };
    // Group scans with their labels per step.
    let mut steps: BTreeMap<u32, Vec<LabeledScan>> = BTreeMap::new();
    for (scan, origins) in world.scans.iter().zip(&world.truth.scan_origins) {
        steps.entry(scan.time_step).or_default().push(LabeledScan {
            scan,
            origins,
        });
    }
    let steps: Vec<(u32, Vec<LabeledScan>)> = steps.into_iter().collect();
    let trajectory = genie.run(
        &spec.initial_vehicle_beliefs()?,
        &world.truth.feature_births(),
        &steps,
        0,
    )?;
    let mut vehicle_rows = Vec::new();
    for (t, vehicles) in trajectory {
        for (id, belief) in vehicles {
            if let Some(true_pos) = world.truth.vehicle_position(id, t) {
                vehicle_rows.push(VehicleErrorRow {
                    run_id: world.run_id,
                    t,
                    vehicle_id: id,
                    pos_error_m: (belief.mean().rows(0, 2) - true_pos).norm(),
                });
            }
        }
    }
    Ok(RunMetrics {
        label: "genie_kf".to_string(),
        run_id: world.run_id,
        ospa: vec![],
        vehicle_errors: vehicle_rows,
    })
}

/// Monte-Carlo batch: for every seed, generate one world and run every
/// configured filter variant plus the enabled baselines on identical scan
/// streams. Deterministic given (spec, seeds); runs execute in parallel.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    variants: &[NamedFilterConfig],
    baselines: &BaselineFlags,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<RunMetrics>> {
    if seeds.is_empty() {
        return Err(SlatError::contract("at least one seed is required"));
    }
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SlatError::contract(format!("worker pool: {e}")))?;
    let results: Result<Vec<Vec<RunMetrics>>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let world = generate_world(spec, seed)?;
                let mut per_seed = Vec::new();
                for variant in variants {
                    per_seed.push(run_filter(&world, &variant.config, &variant.label, None)?);
                }
                if baselines.local_kf {
                    per_seed.push(run_local_kf(&world)?);
                }
                if baselines.genie_kf {
                    per_seed.push(run_genie_kf(&world)?);
                }
                Ok(per_seed)
            })
            .collect()
    });
    Ok(results?.into_iter().flatten().collect())
}

/// Time-and-run average of the OSPA rows of one labelled configuration.
pub fn average_ospa(metrics: &[RunMetrics], label: &str) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for m in metrics.iter().filter(|m| m.label == label) {
        for row in &m.ospa {
            sum += row.ospa_m;
            count += 1;
        }
    }
    sum / count.max(1) as f64
}

/// All position errors of one (label, vehicle) pair pooled over runs.
pub fn pooled_vehicle_errors(metrics: &[RunMetrics], label: &str, vehicle_id: u32) -> Vec<f64> {
    metrics
        .iter()
        .filter(|m| m.label == label)
        .flat_map(|m| {
            m.vehicle_errors
                .iter()
                .filter(|r| r.vehicle_id == vehicle_id)
                .map(|r| r.pos_error_m)
        })
        .collect()
}
