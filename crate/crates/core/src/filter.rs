//! The tracking recursion: prediction, GNSS update, V2F feature update with
//! marginal association and PMB reduction, the vehicle state update from
//! certain features, and the sequential multisensor step.
//!
//! The vehicle state uncertainty enters the feature update through the
//! sensor-marginalized measurement model: with vehicle belief N(μ_s, P_s),
//! a feature measurement behaves as z = H₂ x + H₁ μ_s + noise with noise
//! covariance Q + H₁ P_s H₁'. The TOMBP comparison variants replace this
//! with the raw GNSS fix (and optionally widen Q by the GNSS variance).

use crate::association::{bp_marginals, exact_marginals, BpConfig, MarginalAssociation};
use crate::error::{Result, SlatError};
use crate::gaussian::{
    kf_predict, kf_update, log_sum_exp, moment_match, symmetrize, GaussianDensity,
    GaussianMixture, WeightedGaussian, MAX_CONDITION_NUMBER,
};
use crate::models::{
    gnss_obs_matrix, v2f_feature_matrix, v2f_vehicle_matrix, BirthSurvivalModel, CvModel,
    GnssModel, V2fModel,
};
use crate::rfs::{
    clamp_probability, recycle_or_prune, AssociationProblem, BernoulliComponent, PmbState,
    PoissonIntensity, ScanRecord, VehicleBelief,
};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Which treatment of the vehicle state enters the V2F computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Full uncertain-sensor path: marginalize the vehicle belief.
    Proposed,
    /// Treat the GNSS fix as the exact vehicle state.
    Tombp1,
    /// As Tombp1, but widen the V2F noise by the GNSS variance.
    Tombp2,
}

/// Bernoulli and intensity pruning settings applied at the end of a step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub r_prune: f64,
    pub recycle: bool,
    pub gm_prune_log_threshold: f64,
    pub gm_merge_threshold: f64,
    pub gm_max_components: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            r_prune: 1e-3,
            recycle: false,
            gm_prune_log_threshold: (1e-5f64).ln(),
            gm_merge_threshold: 4.0,
            gm_max_components: 50,
        }
    }
}

/// Engine settings. The three variants share one code path; only the
/// effective sensor density differs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub variant: Variant,
    /// Feed V2F information back into the vehicle state.
    pub sensor_update_enabled: bool,
    /// Existence threshold above which a previously detected feature is
    /// treated as certain in the vehicle update.
    pub r_certain: f64,
    /// Squared Mahalanobis gate applied to measurement-Bernoulli pairs.
    pub gating_threshold: f64,
    pub bp: BpConfig,
    /// Solve association exactly when both n and m are at or below this
    /// bound; zero means always use belief propagation.
    pub exact_association_max: usize,
    pub prune: PruneConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Proposed,
            sensor_update_enabled: false,
            r_certain: 0.8,
            // chi-squared, 2 dof, 0.999 mass.
            gating_threshold: 13.8,
            bp: BpConfig::default(),
            exact_association_max: 0,
            prune: PruneConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r_certain && self.r_certain < 1.0) {
            return Err(SlatError::contract(format!(
                "r_certain {} must lie in (0, 1)",
                self.r_certain
            )));
        }
        if self.gating_threshold <= 0.0 {
            return Err(SlatError::contract("gating threshold must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune.r_prune) {
            return Err(SlatError::contract("r_prune must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// All models used by one filter step.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub cv: CvModel,
    pub gnss: BTreeMap<u32, GnssModel>,
    pub v2f: V2fModel,
    pub birth_survival: BirthSurvivalModel,
}

/// Per-scan sensor information needed by the TOMBP comparison variants.
#[derive(Debug, Clone, Default)]
pub struct SensorContext {
    pub gnss_fix: Option<DVector<f64>>,
    pub gnss_sigma2: Option<f64>,
}

/// The variant-effective sensor density, reduced to the measurement space:
/// offset H₁ μ and noise Q + H₁ P H₁'.
#[derive(Debug, Clone)]
pub struct EffectiveSensor {
    pub offset: DVector<f64>,
    pub noise: DMatrix<f64>,
}

pub fn effective_sensor(
    vehicle: &GaussianDensity,
    ctx: &SensorContext,
    model: &V2fModel,
    variant: Variant,
) -> EffectiveSensor {
    let h1 = v2f_vehicle_matrix();
    let believed = &h1 * vehicle.mean();
    match variant {
        Variant::Proposed => EffectiveSensor {
            offset: believed,
            noise: model.noise_cov() + &h1 * vehicle.cov() * h1.transpose(),
        },
        Variant::Tombp1 => EffectiveSensor {
            offset: ctx.gnss_fix.clone().unwrap_or(believed),
            noise: model.noise_cov(),
        },
        Variant::Tombp2 => EffectiveSensor {
            offset: ctx.gnss_fix.clone().unwrap_or(believed),
            noise: model.noise_cov()
                + DMatrix::identity(2, 2) * ctx.gnss_sigma2.unwrap_or(0.0),
        },
    }
}

/// Cached position-measurement conditioning of one 4-D Gaussian: the
/// innovation covariance, gain and Joseph-form covariance are shared by
/// every measurement, only the innovation changes.
struct PositionUpdate {
    predicted: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    log_norm: f64,
}

impl PositionUpdate {
    fn new(
        prior: &GaussianDensity,
        obs: &DMatrix<f64>,
        offset: &DVector<f64>,
        noise: &DMatrix<f64>,
        context: &str,
    ) -> Result<Self> {
        let s = symmetrize(&(obs * prior.cov() * obs.transpose() + noise));
        let eigs = s.symmetric_eigenvalues();
        let max = eigs.max();
        let min = eigs.min();
        if min <= 0.0 || max / min >= MAX_CONDITION_NUMBER {
            return Err(SlatError::degenerate(
                context,
                format!("innovation covariance condition {:e}", max / min.max(f64::MIN_POSITIVE)),
            ));
        }
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| SlatError::degenerate(context, "innovation covariance not PD"))?;
        let hp = obs * prior.cov();
        let gain = chol.solve(&hp).transpose();
        let n = prior.dim();
        let i_kh = DMatrix::identity(n, n) - &gain * obs;
        let posterior_cov =
            &i_kh * prior.cov() * i_kh.transpose() + &gain * noise * gain.transpose();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (2.0 * (2.0 * PI).ln() + log_det);
        Ok(Self {
            predicted: obs * prior.mean() + offset,
            chol,
            gain,
            posterior_cov,
            log_norm,
        })
    }

    fn mahalanobis_sq(&self, z: &DVector<f64>) -> f64 {
        let nu = z - &self.predicted;
        nu.dot(&self.chol.solve(&nu))
    }

    fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(z)
    }

    fn posterior(&self, prior_mean: &DVector<f64>, z: &DVector<f64>) -> GaussianDensity {
        let nu = z - &self.predicted;
        GaussianDensity::from_parts(prior_mean + &self.gain * nu, self.posterior_cov.clone())
    }
}

/// One prediction step: vehicles and Bernoulli pdfs through the CV model,
/// the undetected intensity thinned by survival and extended by the birth
/// intensity, Bernoulli existences scaled by the survival probability.
pub fn predict(state: &PmbState, cv: &CvModel, bs: &BirthSurvivalModel) -> Result<PmbState> {
    let (a, w) = cv.matrices();
    let mut vehicles = BTreeMap::new();
    for (id, vb) in &state.vehicles {
        vehicles.insert(
            *id,
            VehicleBelief {
                vehicle_id: *id,
                state: kf_predict(&vb.state, &a, &w)?,
            },
        );
    }

    let log_ps = bs.survival_prob.ln();
    let mut comps = Vec::with_capacity(state.undetected.gm.len() + bs.birth.gm.len());
    for c in &state.undetected.gm.components {
        comps.push(WeightedGaussian {
            log_weight: c.log_weight + log_ps,
            density: kf_predict(&c.density, &a, &w)?,
        });
    }
    comps.extend(bs.birth.gm.components.iter().cloned());

    let mut detected = Vec::with_capacity(state.detected.len());
    for b in &state.detected {
        detected.push(BernoulliComponent {
            id: b.id,
            r: clamp_probability(b.r * bs.survival_prob),
            pdf: kf_predict(&b.pdf, &a, &w)?,
        });
    }

    let out = PmbState {
        time_step: state.time_step + 1,
        undetected: PoissonIntensity::new(GaussianMixture::new(comps)?)?,
        detected,
        vehicles,
        next_id: state.next_id,
    };
    out.debug_validate();
    Ok(out)
}

/// Condition one vehicle belief on a GNSS fix. The feature components are
/// untouched.
pub fn update_gnss(
    state: &PmbState,
    vehicle_id: u32,
    z_gnss: &DVector<f64>,
    model: &GnssModel,
) -> Result<PmbState> {
    let belief = state.vehicle(vehicle_id)?;
    let (posterior, _) = kf_update(&belief.state, z_gnss, &gnss_obs_matrix(), &model.noise_cov())?;
    let mut out = state.clone();
    out.vehicles.insert(
        vehicle_id,
        VehicleBelief {
            vehicle_id,
            state: posterior,
        },
    );
    Ok(out)
}

/// Everything produced by one V2F feature update: the new state, the
/// marginal association, the weights it was computed from, and the
/// predicted Bernoullis the problem rows refer to (needed by the vehicle
/// update).
#[derive(Debug, Clone)]
pub struct V2fFeatureUpdate {
    pub state: PmbState,
    pub marginals: MarginalAssociation,
    pub problem: AssociationProblem,
    pub pre_update: Vec<BernoulliComponent>,
}

/// Update the feature belief with one cluttered V2F scan.
///
/// The undetected intensity is thinned by (1 - p_D); each measurement
/// spawns a new-feature Bernoulli candidate from the predicted intensity;
/// existing Bernoullis receive miss and detection hypotheses; marginal
/// association weights collapse the hypothesis lists back to one Bernoulli
/// each (PMB reduction). Vehicle beliefs are not modified here.
pub fn update_v2f_features(
    state: &PmbState,
    vehicle_id: u32,
    measurements: &[DVector<f64>],
    ctx: &SensorContext,
    model: &V2fModel,
    cfg: &FilterConfig,
) -> Result<V2fFeatureUpdate> {
    let vehicle = state.vehicle(vehicle_id)?;
    let eff = effective_sensor(&vehicle.state, ctx, model, cfg.variant);
    let h2 = v2f_feature_matrix();
    let p_d = model.detection_prob;
    let log_pd = p_d.ln();
    let m = measurements.len();
    let n = state.detected.len();

    // (a) Thinned undetected intensity.
    let thinned = if p_d >= 1.0 {
        GaussianMixture::empty()
    } else {
        GaussianMixture {
            components: state
                .undetected
                .gm
                .components
                .iter()
                .map(|c| WeightedGaussian {
                    log_weight: c.log_weight + (1.0 - p_d).ln(),
                    density: c.density.clone(),
                })
                .collect(),
        }
    };

    // (b) New-feature candidates, one per measurement, built from the
    // predicted (un-thinned) intensity.
    struct PppComponent {
        log_weight: f64,
        prior_mean: DVector<f64>,
        update: PositionUpdate,
    }
    let ppp_components: Vec<PppComponent> = state
        .undetected
        .gm
        .components
        .iter()
        .map(|c| {
            PositionUpdate::new(&c.density, &h2, &eff.offset, &eff.noise, "new-feature update")
                .map(|update| PppComponent {
                    log_weight: c.log_weight,
                    prior_mean: c.density.mean().clone(),
                    update,
                })
        })
        .collect::<Result<_>>()?;

    struct NewCandidate {
        log_rho: f64,
        r_given_new: f64,
        pdf: Option<GaussianDensity>,
    }
    let mut candidates = Vec::with_capacity(m);
    for z in measurements {
        let per_comp: Vec<f64> = ppp_components
            .iter()
            .map(|c| c.log_weight + c.update.log_likelihood(z))
            .collect();
        let log_mixture = log_sum_exp(&per_comp);
        let log_e = log_pd + log_mixture;
        let log_clutter = model.clutter_log_intensity(z);
        let log_rho = log_sum_exp(&[log_clutter, log_e]);
        if log_e == f64::NEG_INFINITY {
            candidates.push(NewCandidate {
                log_rho,
                r_given_new: 0.0,
                pdf: None,
            });
            continue;
        }
        let comps: Vec<WeightedGaussian> = ppp_components
            .iter()
            .zip(&per_comp)
            .filter(|(_, lw)| **lw > f64::NEG_INFINITY)
            .map(|(c, lw)| WeightedGaussian {
                log_weight: lw - log_mixture,
                density: c.update.posterior(&c.prior_mean, z),
            })
            .collect();
        let pdf = moment_match(&GaussianMixture { components: comps })?;
        candidates.push(NewCandidate {
            log_rho,
            r_given_new: clamp_probability((log_e - log_rho).exp()),
            pdf: Some(pdf),
        });
    }

    // (c) Hypotheses for the existing Bernoullis.
    let mut log_miss = Vec::with_capacity(n);
    let mut r_missed = Vec::with_capacity(n);
    let mut log_detect = DMatrix::from_element(n, m, f64::NEG_INFINITY);
    let mut detect_pdfs: Vec<Vec<Option<GaussianDensity>>> = vec![vec![None; m]; n];
    for (i, b) in state.detected.iter().enumerate() {
        let miss_weight = 1.0 - p_d * b.r;
        log_miss.push(if miss_weight > 0.0 {
            miss_weight.ln()
        } else {
            f64::NEG_INFINITY
        });
        r_missed.push(if miss_weight > 0.0 {
            clamp_probability(b.r * (1.0 - p_d) / miss_weight)
        } else {
            0.0
        });
        if m == 0 || b.r <= 0.0 {
            continue;
        }
        let update = PositionUpdate::new(
            &b.pdf,
            &h2,
            &eff.offset,
            &eff.noise,
            &format!("Bernoulli {}", b.id),
        )?;
        for (k, z) in measurements.iter().enumerate() {
            // (e) Gate before association.
            if update.mahalanobis_sq(z) > cfg.gating_threshold {
                continue;
            }
            log_detect[(i, k)] = log_pd + b.r.ln() + update.log_likelihood(z);
            detect_pdfs[i][k] = Some(update.posterior(b.pdf.mean(), z));
        }
    }

    let log_new: Vec<f64> = candidates.iter().map(|c| c.log_rho).collect();
    let problem = build_feasible_problem(log_miss, log_detect, log_new)?;

    // (d) Marginal association and PMB reduction.
    let marginals = solve_association(&problem, cfg)?;

    let mut detected = Vec::with_capacity(n + m);
    let mut next_id = state.next_id;
    for (i, b) in state.detected.iter().enumerate() {
        let mut r_post = marginals.p_miss[i] * r_missed[i];
        let mut comps = Vec::with_capacity(m + 1);
        if marginals.p_miss[i] * r_missed[i] > 0.0 {
            comps.push(WeightedGaussian {
                log_weight: (marginals.p_miss[i] * r_missed[i]).ln(),
                density: b.pdf.clone(),
            });
        }
        for k in 0..m {
            let w = marginals.p_assoc[(i, k)];
            if w > 0.0 {
                if let Some(pdf) = &detect_pdfs[i][k] {
                    r_post += w;
                    comps.push(WeightedGaussian {
                        log_weight: w.ln(),
                        density: pdf.clone(),
                    });
                }
            }
        }
        let pdf = if comps.is_empty() {
            b.pdf.clone()
        } else {
            let total = log_sum_exp(&comps.iter().map(|c| c.log_weight).collect::<Vec<_>>());
            for c in &mut comps {
                c.log_weight -= total;
            }
            moment_match(&GaussianMixture { components: comps })?
        };
        detected.push(BernoulliComponent {
            id: b.id,
            r: clamp_probability(r_post),
            pdf,
        });
    }
    for (k, cand) in candidates.iter().enumerate() {
        if let Some(pdf) = &cand.pdf {
            let r = clamp_probability(marginals.p_new[k] * cand.r_given_new);
            if r > 0.0 {
                detected.push(BernoulliComponent {
                    id: next_id,
                    r,
                    pdf: pdf.clone(),
                });
                next_id += 1;
            }
        }
    }

    let new_state = PmbState {
        time_step: state.time_step,
        undetected: PoissonIntensity::new(thinned)?,
        detected,
        vehicles: state.vehicles.clone(),
        next_id,
    };
    new_state.debug_validate();
    Ok(V2fFeatureUpdate {
        state: new_state,
        marginals,
        problem,
        pre_update: state.detected.clone(),
    })
}

/// Floor the miss / new weight of rows and columns that would otherwise
/// admit no feasible hypothesis (all entries -inf). Only degenerate
/// parameter corners (p_D = 1 with an out-of-gate measurement, zero
/// clutter) can produce these; the floor keeps the marginals well defined
/// while perturbing feasible instances by nothing at all.
fn build_feasible_problem(
    mut log_miss: Vec<f64>,
    log_detect: DMatrix<f64>,
    mut log_new: Vec<f64>,
) -> Result<AssociationProblem> {
    let max_finite = log_miss
        .iter()
        .chain(log_new.iter())
        .chain(log_detect.iter())
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let floor = if max_finite.is_finite() {
        max_finite - 400.0
    } else {
        0.0
    };
    for (i, lm) in log_miss.iter_mut().enumerate() {
        if *lm == f64::NEG_INFINITY
            && (0..log_detect.ncols()).all(|k| log_detect[(i, k)] == f64::NEG_INFINITY)
        {
            *lm = floor;
        }
    }
    for (k, ln_new) in log_new.iter_mut().enumerate() {
        if *ln_new == f64::NEG_INFINITY
            && (0..log_detect.nrows()).all(|i| log_detect[(i, k)] == f64::NEG_INFINITY)
        {
            *ln_new = floor;
        }
    }
    AssociationProblem::new(log_miss, log_detect, log_new)
}

fn solve_association(
    problem: &AssociationProblem,
    cfg: &FilterConfig,
) -> Result<MarginalAssociation> {
    let n = problem.n_bernoulli();
    let m = problem.n_measurements();
    if n.max(m) <= cfg.exact_association_max {
        exact_marginals(problem)
    } else {
        Ok(bp_marginals(problem, &cfg.bp).marginals)
    }
}

/// Condition the vehicle belief on the certain features' association
/// mixtures, one feature at a time.
///
/// Each previously detected Bernoulli with existence above `r_certain`
/// contributes a mixture: the prior with the miss weight plus, per
/// associated measurement, the vehicle likelihood
/// N(z; H₁ s + H₂ μ_x, Q + H₂ P_x H₂') with the marginal weight. The
/// mixture is moment matched and the result conditions the next feature.
/// Newly created Bernoullis take no part. Feature components are untouched.
pub fn update_v2f_vehicle(
    state: &PmbState,
    vehicle_id: u32,
    measurements: &[DVector<f64>],
    marginals: &MarginalAssociation,
    pre_update: &[BernoulliComponent],
    model: &V2fModel,
    cfg: &FilterConfig,
) -> Result<PmbState> {
    if !cfg.sensor_update_enabled {
        return Ok(state.clone());
    }
    if marginals.n_bernoulli() != pre_update.len()
        || marginals.n_measurements() != measurements.len()
    {
        return Err(SlatError::contract(format!(
            "marginals are {}x{} but {} Bernoullis and {} measurements were given",
            marginals.n_bernoulli(),
            marginals.n_measurements(),
            pre_update.len(),
            measurements.len()
        )));
    }
    let h1 = v2f_vehicle_matrix();
    let h2 = v2f_feature_matrix();
    let mut vehicle = state.vehicle(vehicle_id)?.state.clone();

    for (i, feature) in pre_update.iter().enumerate() {
        if feature.r <= cfg.r_certain {
            continue;
        }
        let assoc_mass: f64 = marginals.p_assoc.row(i).sum();
        if assoc_mass <= 0.0 {
            continue;
        }
        let noise = model.noise_cov() + &h2 * feature.pdf.cov() * h2.transpose();
        let feature_offset = &h2 * feature.pdf.mean();
        let mut comps = Vec::with_capacity(measurements.len() + 1);
        if marginals.p_miss[i] > 0.0 {
            comps.push(WeightedGaussian {
                log_weight: marginals.p_miss[i].ln(),
                density: vehicle.clone(),
            });
        }
        for (k, z) in measurements.iter().enumerate() {
            let w = marginals.p_assoc[(i, k)];
            if w <= 0.0 {
                continue;
            }
            let pseudo = z - &feature_offset;
            let (posterior, _) = kf_update(&vehicle, &pseudo, &h1, &noise)?;
            comps.push(WeightedGaussian {
                log_weight: w.ln(),
                density: posterior,
            });
        }
        let total = log_sum_exp(&comps.iter().map(|c| c.log_weight).collect::<Vec<_>>());
        for c in &mut comps {
            c.log_weight -= total;
        }
        vehicle = moment_match(&GaussianMixture { components: comps })?;
    }

    let mut out = state.clone();
    out.vehicles.insert(
        vehicle_id,
        VehicleBelief {
            vehicle_id,
            state: vehicle,
        },
    );
    Ok(out)
}

/// One full time step: a single prediction, then per scan (in arrival
/// order) the GNSS update, the V2F feature update and, when enabled, the
/// vehicle update. Later scans see the feature posterior produced by
/// earlier scans. Bernoulli and intensity pruning close the step.
pub fn step_sequential(
    state: &PmbState,
    scans: &[ScanRecord],
    models: &ModelSet,
    cfg: &FilterConfig,
) -> Result<PmbState> {
    if let Some(first) = scans.first() {
        if scans.iter().any(|s| s.time_step != first.time_step) {
            return Err(SlatError::contract(
                "step_sequential requires scans from a single time step",
            ));
        }
    }
    let mut current = predict(state, &models.cv, &models.birth_survival)?;
    for scan in scans {
        if !current.vehicles.contains_key(&scan.vehicle_id) {
            return Err(SlatError::UnknownVehicle(scan.vehicle_id));
        }
        let gnss_model = models.gnss.get(&scan.vehicle_id);
        if let Some(z) = scan.gnss_vector() {
            let gm = gnss_model.ok_or_else(|| {
                SlatError::contract(format!(
                    "scan from vehicle {} carries GNSS but no GNSS model is configured",
                    scan.vehicle_id
                ))
            })?;
            current = update_gnss(&current, scan.vehicle_id, &z, gm)?;
        }
        if let Some(zs) = scan.v2f_vectors() {
            let ctx = SensorContext {
                gnss_fix: scan.gnss_vector(),
                gnss_sigma2: gnss_model.map(|g| g.sigma2),
            };
            let update =
                update_v2f_features(&current, scan.vehicle_id, &zs, &ctx, &models.v2f, cfg)?;
            current = if cfg.sensor_update_enabled {
                update_v2f_vehicle(
                    &update.state,
                    scan.vehicle_id,
                    &zs,
                    &update.marginals,
                    &update.pre_update,
                    &models.v2f,
                    cfg,
                )?
            } else {
                update.state
            };
        }
    }

    let pruned = recycle_or_prune(&current, cfg.prune.r_prune, cfg.prune.recycle)?;
    let reduced = crate::gaussian::gm_prune_merge(
        &pruned.undetected.gm,
        cfg.prune.gm_prune_log_threshold,
        cfg.prune.gm_merge_threshold,
        cfg.prune.gm_max_components,
    );
    let mut out = pruned;
    out.undetected = PoissonIntensity::new(reduced)?;
    out.debug_validate();
    Ok(out)
}
