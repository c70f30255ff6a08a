//! Kalman-filter baselines: the GNSS-only local filter and the genie
//! central filter that is handed the true association, the true feature
//! count and clutter labels.

use crate::error::{Result, SlatError};
use crate::gaussian::{kf_predict, kf_update, GaussianDensity};
use crate::models::{gnss_obs_matrix, v2f_feature_matrix, v2f_vehicle_matrix, CvModel, GnssModel, V2fModel};
use crate::rfs::{MeasurementOrigin, ScanRecord};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// GNSS-only filtering of a single vehicle: CV prediction plus a Kalman
/// update per fix. V2F measurements are never touched. Returns one belief
/// per scan, aligned with the input order.
pub fn local_kf(
    initial: &GaussianDensity,
    scans: &[ScanRecord],
    cv: &CvModel,
    gnss: &GnssModel,
) -> Result<Vec<GaussianDensity>> {
    let (a, w) = cv.matrices();
    let h = gnss_obs_matrix();
    let r = gnss.noise_cov();
    let mut belief = initial.clone();
    let mut out = Vec::with_capacity(scans.len());
    for scan in scans {
        belief = kf_predict(&belief, &a, &w)?;
        if let Some(z) = scan.gnss_vector() {
            let (posterior, _) = kf_update(&belief, &z, &h, &r)?;
            belief = posterior;
        }
        out.push(belief.clone());
    }
    Ok(out)
}

/// Joint Gaussian over the stacked vehicle and feature states, plus the
/// bookkeeping that maps ids onto 4-wide blocks of the stack.
#[derive(Debug, Clone)]
pub struct GenieState {
    pub joint: GaussianDensity,
    vehicle_slots: BTreeMap<u32, usize>,
    feature_slots: BTreeMap<u32, usize>,
}

impl GenieState {
    pub fn new(initial_vehicles: &BTreeMap<u32, GaussianDensity>) -> Result<Self> {
        let mut vehicle_slots = BTreeMap::new();
        let mut mean = Vec::new();
        let mut blocks = Vec::new();
        for (slot, (id, belief)) in initial_vehicles.iter().enumerate() {
            if belief.dim() != 4 {
                return Err(SlatError::contract("genie expects 4-D vehicle states"));
            }
            vehicle_slots.insert(*id, slot);
            mean.extend(belief.mean().iter());
            blocks.push(belief.cov().clone());
        }
        let dim = mean.len();
        let mut cov = DMatrix::zeros(dim, dim);
        for (slot, block) in blocks.iter().enumerate() {
            cov.view_mut((slot * 4, slot * 4), (4, 4)).copy_from(block);
        }
        Ok(Self {
            joint: GaussianDensity::new(DVector::from_vec(mean), cov)?,
            vehicle_slots,
            feature_slots: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.joint.dim()
    }

    fn block_offset_vehicle(&self, id: u32) -> Result<usize> {
        self.vehicle_slots
            .get(&id)
            .map(|s| s * 4)
            .ok_or(SlatError::UnknownVehicle(id))
    }

    fn block_offset_feature(&self, id: u32) -> Result<usize> {
        self.feature_slots
            .get(&id)
            .map(|s| s * 4)
            .ok_or_else(|| {
                SlatError::contract(format!("association references unknown feature {id}"))
            })
    }

    /// Marginal belief of one vehicle.
    pub fn vehicle_marginal(&self, id: u32) -> Result<GaussianDensity> {
        let off = self.block_offset_vehicle(id)?;
        self.marginal_block(off)
    }

    /// Marginal belief of one feature, if it has been born.
    pub fn feature_marginal(&self, id: u32) -> Result<GaussianDensity> {
        let off = self.block_offset_feature(id)?;
        self.marginal_block(off)
    }

    fn marginal_block(&self, offset: usize) -> Result<GaussianDensity> {
        let mean = self.joint.mean().rows(offset, 4).into_owned();
        let cov = self.joint.cov().view((offset, offset), (4, 4)).into_owned();
        GaussianDensity::new(mean, cov)
    }

    /// Cross-covariance block between a vehicle and a feature.
    pub fn vehicle_feature_cross_cov(&self, vehicle: u32, feature: u32) -> Result<DMatrix<f64>> {
        let vo = self.block_offset_vehicle(vehicle)?;
        let fo = self.block_offset_feature(feature)?;
        Ok(self.joint.cov().view((vo, fo), (4, 4)).into_owned())
    }

    /// Predict every block through the CV model.
    pub fn predict(&mut self, cv: &CvModel) -> Result<()> {
        let (a, w) = cv.matrices();
        let dim = self.dim();
        let blocks = dim / 4;
        let mut a_full = DMatrix::zeros(dim, dim);
        let mut w_full = DMatrix::zeros(dim, dim);
        for b in 0..blocks {
            a_full.view_mut((b * 4, b * 4), (4, 4)).copy_from(&a);
            w_full.view_mut((b * 4, b * 4), (4, 4)).copy_from(&w);
        }
        self.joint = kf_predict(&self.joint, &a_full, &w_full)?;
        Ok(())
    }

    /// Append a newborn feature block with the birth prior, uncorrelated
    /// with the existing stack.
    pub fn add_feature(&mut self, id: u32, birth_prior: &GaussianDensity) -> Result<()> {
        if self.feature_slots.contains_key(&id) {
            return Err(SlatError::contract(format!("feature {id} already present")));
        }
        let old = self.dim();
        let mut mean = DVector::zeros(old + 4);
        mean.rows_mut(0, old).copy_from(self.joint.mean());
        mean.rows_mut(old, 4).copy_from(birth_prior.mean());
        let mut cov = DMatrix::zeros(old + 4, old + 4);
        cov.view_mut((0, 0), (old, old)).copy_from(self.joint.cov());
        cov.view_mut((old, old), (4, 4)).copy_from(birth_prior.cov());
        self.feature_slots.insert(id, old / 4);
        self.joint = GaussianDensity::new(mean, cov)?;
        Ok(())
    }

    /// GNSS update of one vehicle block.
    pub fn update_gnss(&mut self, vehicle: u32, z: &DVector<f64>, gnss: &GnssModel) -> Result<()> {
        let off = self.block_offset_vehicle(vehicle)?;
        let h_g = gnss_obs_matrix();
        let mut h = DMatrix::zeros(2, self.dim());
        h.view_mut((0, off), (2, 4)).copy_from(&h_g);
        let (posterior, _) = kf_update(&self.joint, z, &h, &gnss.noise_cov())?;
        self.joint = posterior;
        Ok(())
    }

    /// V2F update coupling one vehicle block and one feature block.
    pub fn update_v2f(
        &mut self,
        vehicle: u32,
        feature: u32,
        z: &DVector<f64>,
        v2f: &V2fModel,
    ) -> Result<()> {
        let vo = self.block_offset_vehicle(vehicle)?;
        let fo = self.block_offset_feature(feature)?;
        let mut h = DMatrix::zeros(2, self.dim());
        h.view_mut((0, vo), (2, 4)).copy_from(&v2f_vehicle_matrix());
        h.view_mut((0, fo), (2, 4)).copy_from(&v2f_feature_matrix());
        let (posterior, _) = kf_update(&self.joint, z, &h, &v2f.noise_cov())?;
        self.joint = posterior;
        Ok(())
    }
}

/// One time step of scans with the simulator's origin labels attached.
#[derive(Debug, Clone)]
pub struct LabeledScan<'a> {
    pub scan: &'a ScanRecord,
    pub origins: &'a [MeasurementOrigin],
}

/// The genie central KF: one joint filter over all vehicles and all true
/// features. Measurement-to-feature association is known, clutter rows are
/// dropped, and features enter the stack at their true birth step with the
/// birth prior.
///
/// `feature_births` lists (feature id, birth step). Scans must be grouped
/// by time step in increasing order; steps are processed from
/// `first_step..=last_step` with one prediction each.
pub struct GenieCentralKf {
    pub cv: CvModel,
    pub gnss: BTreeMap<u32, GnssModel>,
    pub v2f: V2fModel,
    pub birth_prior: GaussianDensity,
}

impl GenieCentralKf {
    /// Run over the scan stream. Returns the per-step vehicle marginals.
    pub fn run(
        &self,
        initial_vehicles: &BTreeMap<u32, GaussianDensity>,
        feature_births: &[(u32, u32)],
        steps: &[(u32, Vec<LabeledScan>)],
        initial_step: u32,
    ) -> Result<Vec<(u32, BTreeMap<u32, GaussianDensity>)>> {
        let mut state = GenieState::new(initial_vehicles)?;
        for (id, birth) in feature_births {
            if *birth <= initial_step {
                state.add_feature(*id, &self.birth_prior)?;
            }
        }
        let mut out = Vec::with_capacity(steps.len());
        let mut current_step = initial_step;
        for (t, scans) in steps {
            while current_step < *t {
                current_step += 1;
                state.predict(&self.cv)?;
                for (id, birth) in feature_births {
                    if *birth == current_step {
                        state.add_feature(*id, &self.birth_prior)?;
                    }
                }
            }
            for labeled in scans {
                debug_assert_eq!(labeled.scan.time_step, *t);
                if let Some(z) = labeled.scan.gnss_vector() {
                    let gnss = self.gnss.get(&labeled.scan.vehicle_id).ok_or_else(|| {
                        SlatError::contract(format!(
                            "no GNSS model for vehicle {}",
                            labeled.scan.vehicle_id
                        ))
                    })?;
                    state.update_gnss(labeled.scan.vehicle_id, &z, gnss)?;
                }
                let zs = labeled.scan.v2f_vectors().unwrap_or_default();
                debug_assert_eq!(zs.len(), labeled.origins.len());
                for (z, origin) in zs.iter().zip(labeled.origins) {
                    match origin {
                        MeasurementOrigin::Feature(fid) => {
                            state.update_v2f(labeled.scan.vehicle_id, *fid, z, &self.v2f)?;
                        }
                        MeasurementOrigin::Clutter => {}
                    }
                }
            }
            let mut vehicles = BTreeMap::new();
            for id in state.vehicle_slots.keys() {
                vehicles.insert(*id, state.vehicle_marginal(*id)?);
            }
            out.push((*t, vehicles));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::feature_coverage_cov;
    use approx::assert_abs_diff_eq;

    fn cv() -> CvModel {
        CvModel::new(0.5, 0.05).unwrap()
    }

    fn initial_vehicle() -> GaussianDensity {
        GaussianDensity::new(
            DVector::from_row_slice(&[0.0, 200.0, 0.0, -2.0]),
            DMatrix::identity(4, 4),
        )
        .unwrap()
    }

    fn scan(t: u32, vehicle: u32, gnss: Option<[f64; 2]>, v2f: Vec<[f64; 2]>) -> ScanRecord {
        ScanRecord {
            time_step: t,
            vehicle_id: vehicle,
            gnss,
            v2f: Some(v2f),
        }
    }

    #[test]
    fn local_kf_pure_prediction_without_gnss() {
        let scans = vec![scan(1, 1, None, vec![])];
        let out = local_kf(&initial_vehicle(), &scans, &cv(), &GnssModel::new(1.0).unwrap())
            .unwrap();
        let (a, w) = cv().matrices();
        let expected = kf_predict(&initial_vehicle(), &a, &w).unwrap();
        assert_eq!(out[0].mean(), expected.mean());
        assert_eq!(out[0].cov(), expected.cov());
    }

    #[test]
    fn local_kf_tiny_noise_pins_position_to_measurement() {
        let scans = vec![scan(1, 1, Some([5.0, 7.0]), vec![])];
        let out = local_kf(
            &initial_vehicle(),
            &scans,
            &cv(),
            &GnssModel::new(1e-12).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0].mean()[0], 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[0].mean()[1], 7.0, epsilon = 1e-6);
    }

    #[test]
    fn local_kf_steady_state_matches_riccati_oracle() {
        // Empirical steady-state posterior variance against an independent
        // per-axis Riccati fixed point iteration on the [p, v] subsystem.
        let gnss = GnssModel::new(12.96).unwrap();
        let scans: Vec<ScanRecord> = (1..=351)
            .map(|t| scan(t, 1, Some([0.0, 0.0]), vec![]))
            .collect();
        let out = local_kf(&initial_vehicle(), &scans, &cv(), &gnss).unwrap();

        // Oracle: 2-state Riccati fixed point, axis-wise.
        let dt: f64 = 0.5;
        let r_psd = 0.05;
        let a2 = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let w2 = DMatrix::from_row_slice(
            2,
            2,
            &[
                r_psd * dt.powi(3) / 3.0,
                r_psd * dt.powi(2) / 2.0,
                r_psd * dt.powi(2) / 2.0,
                r_psd * dt,
            ],
        );
        let h2 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r2 = DMatrix::from_element(1, 1, 12.96);
        let mut p = DMatrix::identity(2, 2);
        for _ in 0..20_000 {
            let pred = &a2 * &p * a2.transpose() + &w2;
            let s = (&h2 * &pred * h2.transpose() + &r2)[(0, 0)];
            let k = &pred * h2.transpose() / s;
            p = (DMatrix::identity(2, 2) - &k * &h2) * pred;
        }
        let steady_pos_var = p[(0, 0)];

        let tail = &out[100..];
        let avg_var: f64 =
            tail.iter().map(|g| g.cov()[(0, 0)]).sum::<f64>() / tail.len() as f64;
        assert!(
            ((avg_var - steady_pos_var) / steady_pos_var).abs() < 0.10,
            "filter variance {avg_var} vs Riccati {steady_pos_var}"
        );
    }

    #[test]
    fn genie_matches_hand_built_joint_kf() {
        // Single vehicle, single feature, no clutter: compare against a
        // literal 8-dimensional filter written out with textbook formulas.
        let cv = cv();
        let gnss = GnssModel::new(1.0).unwrap();
        let v2f = V2fModel::new(0.5, 0.9, 10.0, 500.0).unwrap();
        let birth_prior =
            GaussianDensity::new(DVector::zeros(4), feature_coverage_cov()).unwrap();
        let mut initial = BTreeMap::new();
        initial.insert(1u32, initial_vehicle());

        let scans: Vec<ScanRecord> = (1..=5)
            .map(|t| {
                scan(
                    t,
                    1,
                    Some([0.1 * t as f64, 200.0 - t as f64]),
                    vec![[1.0 + 0.2 * t as f64, 195.0]],
                )
            })
            .collect();
        let origins = vec![MeasurementOrigin::Feature(0)];
        let steps: Vec<(u32, Vec<LabeledScan>)> = scans
            .iter()
            .map(|s| {
                (
                    s.time_step,
                    vec![LabeledScan {
                        scan: s,
                        origins: &origins,
                    }],
                )
            })
            .collect();

        let genie = GenieCentralKf {
            cv,
            gnss: BTreeMap::from([(1u32, gnss)]),
            v2f,
            birth_prior: birth_prior.clone(),
        };
        let trajectory = genie.run(&initial, &[(0, 0)], &steps, 0).unwrap();

        // Hand-built oracle.
        let (a4, w4) = cv.matrices();
        let mut a8 = DMatrix::zeros(8, 8);
        a8.view_mut((0, 0), (4, 4)).copy_from(&a4);
        a8.view_mut((4, 4), (4, 4)).copy_from(&a4);
        let mut w8 = DMatrix::zeros(8, 8);
        w8.view_mut((0, 0), (4, 4)).copy_from(&w4);
        w8.view_mut((4, 4), (4, 4)).copy_from(&w4);
        let mut mean = DVector::zeros(8);
        mean.rows_mut(0, 4).copy_from(initial_vehicle().mean());
        let mut cov = DMatrix::zeros(8, 8);
        cov.view_mut((0, 0), (4, 4))
            .copy_from(initial_vehicle().cov());
        cov.view_mut((4, 4), (4, 4)).copy_from(birth_prior.cov());

        let mut h_gnss8 = DMatrix::zeros(2, 8);
        h_gnss8[(0, 0)] = 1.0;
        h_gnss8[(1, 1)] = 1.0;
        let mut h_v2f8 = DMatrix::zeros(2, 8);
        h_v2f8[(0, 0)] = 1.0;
        h_v2f8[(1, 1)] = 1.0;
        h_v2f8[(0, 4)] = -1.0;
        h_v2f8[(1, 5)] = -1.0;

        for s in &scans {
            mean = &a8 * mean;
            cov = &a8 * &cov * a8.transpose() + &w8;
            for (h, z, rv) in [
                (&h_gnss8, DVector::from_row_slice(&s.gnss.unwrap()), 1.0),
                (&h_v2f8, DVector::from_row_slice(&s.v2f.as_ref().unwrap()[0]), 0.5),
            ] {
                let sx = h * &cov * h.transpose() + DMatrix::identity(2, 2) * rv;
                let k = &cov * h.transpose() * sx.try_inverse().unwrap();
                mean = &mean + &k * (z - h * &mean);
                cov = (DMatrix::identity(8, 8) - &k * h) * &cov;
            }
        }

        let (_, last) = trajectory.last().unwrap();
        let vehicle = &last[&1];
        for i in 0..4 {
            assert_abs_diff_eq!(vehicle.mean()[i], mean[i], epsilon = 1e-8);
            for j in 0..4 {
                assert_abs_diff_eq!(vehicle.cov()[(i, j)], cov[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn genie_without_v2f_equals_local_kf() {
        let cv = cv();
        let gnss = GnssModel::new(2.0).unwrap();
        let scans: Vec<ScanRecord> = (1..=10)
            .map(|t| scan(t, 1, Some([0.1 * t as f64, 200.0 - t as f64]), vec![]))
            .collect();
        let local = local_kf(&initial_vehicle(), &scans, &cv, &gnss).unwrap();

        let genie = GenieCentralKf {
            cv,
            gnss: BTreeMap::from([(1u32, gnss)]),
            v2f: V2fModel::new(0.5, 0.9, 10.0, 500.0).unwrap(),
            birth_prior: GaussianDensity::new(DVector::zeros(4), feature_coverage_cov())
                .unwrap(),
        };
        let steps: Vec<(u32, Vec<LabeledScan>)> = scans
            .iter()
            .map(|s| {
                (
                    s.time_step,
                    vec![LabeledScan {
                        scan: s,
                        origins: &[],
                    }],
                )
            })
            .collect();
        let mut initial = BTreeMap::new();
        initial.insert(1u32, initial_vehicle());
        let trajectory = genie
            .run(&initial, &[(0, 0)], &steps, 0)
            .unwrap();
        for (idx, (_, vehicles)) in trajectory.iter().enumerate() {
            let g = &vehicles[&1];
            for i in 0..4 {
                assert_abs_diff_eq!(g.mean()[i], local[idx].mean()[i], epsilon = 1e-12);
                for j in 0..4 {
                    assert_abs_diff_eq!(
                        g.cov()[(i, j)],
                        local[idx].cov()[(i, j)],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn genie_v2f_update_creates_cross_covariance_and_reduces_trace() {
        let cv = cv();
        let genie = GenieCentralKf {
            cv,
            gnss: BTreeMap::from([(1u32, GnssModel::new(1.0).unwrap())]),
            v2f: V2fModel::new(0.5, 0.9, 10.0, 500.0).unwrap(),
            birth_prior: GaussianDensity::new(DVector::zeros(4), feature_coverage_cov())
                .unwrap(),
        };
        let mut initial = BTreeMap::new();
        initial.insert(1u32, initial_vehicle());
        let mut state = GenieState::new(&initial).unwrap();
        state.add_feature(0, &genie.birth_prior).unwrap();
        assert_abs_diff_eq!(
            state.vehicle_feature_cross_cov(1, 0).unwrap().norm(),
            0.0,
            epsilon = 1e-15
        );
        let before = state.joint.cov().trace();
        state
            .update_v2f(1, 0, &DVector::from_row_slice(&[1.0, 195.0]), &genie.v2f)
            .unwrap();
        assert!(state.vehicle_feature_cross_cov(1, 0).unwrap().norm() > 0.0);
        assert!(state.joint.cov().trace() < before);
    }

    #[test]
    fn genie_unknown_feature_reference_is_contract_violation() {
        let mut initial = BTreeMap::new();
        initial.insert(1u32, initial_vehicle());
        let mut state = GenieState::new(&initial).unwrap();
        let err = state
            .update_v2f(
                1,
                99,
                &DVector::from_row_slice(&[0.0, 0.0]),
                &V2fModel::new(0.5, 0.9, 10.0, 500.0).unwrap(),
            )
            .unwrap_err();
        assert!(matches!(err, SlatError::Contract(_)));
    }
}
