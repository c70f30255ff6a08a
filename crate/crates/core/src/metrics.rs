//! Tracking metrics: OSPA between position sets and empirical error CDFs.

use crate::error::{Result, SlatError};
use nalgebra::DVector;
use ordered_float::OrderedFloat;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

/// OSPA cut-off `c` (meters) and order `p`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OspaParams {
    pub cutoff: f64,
    pub order: f64,
}

impl OspaParams {
    pub fn new(cutoff: f64, order: f64) -> Result<Self> {
        if cutoff <= 0.0 {
            return Err(SlatError::contract(format!(
                "OSPA cutoff {cutoff} must be positive"
            )));
        }
        if order < 1.0 {
            return Err(SlatError::contract(format!(
                "OSPA order {order} must be at least one"
            )));
        }
        Ok(Self { cutoff, order })
    }
}

/// Optimal sub-pattern assignment distance between two finite sets of
/// 2-D positions.
///
/// The min(|X|, |Y|) best pairs (distances capped at the cutoff) are found
/// by an exact optimal-assignment solve; every unmatched element pays the
/// cutoff; the result is the p-norm average over max(|X|, |Y|) terms.
pub fn ospa(x: &[DVector<f64>], y: &[DVector<f64>], params: &OspaParams) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let n_max = large.len();
    if n_max == 0 {
        return 0.0;
    }
    let c = params.cutoff;
    let p = params.order;
    let cardinality_penalty = (n_max - small.len()) as f64 * c.powf(p);
    if small.is_empty() {
        return (cardinality_penalty / n_max as f64).powf(1.0 / p);
    }

    let costs = Matrix::from_fn(small.len(), large.len(), |(i, j)| {
        let d = (&small[i] - &large[j]).norm().min(c);
        OrderedFloat(d.powf(p))
    });
    let (assignment_cost, _) = kuhn_munkres_min(&costs);
    ((assignment_cost.0 + cardinality_penalty) / n_max as f64).powf(1.0 / p)
}

/// Sorted empirical CDF of scalar errors, queryable at any quantile.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(SlatError::contract("empirical CDF of an empty sample"));
        }
        if errors.iter().any(|e| e.is_nan()) {
            return Err(SlatError::contract("empirical CDF sample contains NaN"));
        }
        errors.sort_by(f64::total_cmp);
        Ok(Self { sorted: errors })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Order-statistic quantile: the ceil(q n)-th smallest sample.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let n = self.sorted.len();
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[rank - 1]
    }

    /// Fraction of samples at or below the threshold.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let count = self.sorted.partition_point(|&e| e <= threshold);
        count as f64 / self.sorted.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// A per-step feature OSPA record, as emitted into the metrics tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OspaRow {
    pub run_id: u64,
    pub t: u32,
    pub ospa_m: f64,
}

/// A per-step vehicle position-error record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleErrorRow {
    pub run_id: u64,
    pub t: u32,
    pub vehicle_id: u32,
    pub pos_error_m: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn v(x: f64, y: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x, y])
    }

    fn params() -> OspaParams {
        OspaParams::new(20.0, 2.0).unwrap()
    }

    #[test]
    fn ospa_identical_sets_zero() {
        let x = vec![v(1.0, 2.0), v(-3.0, 4.0)];
        assert_abs_diff_eq!(ospa(&x, &x, &params()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ospa_pure_cardinality_penalty() {
        let x = vec![v(0.0, 0.0)];
        assert_abs_diff_eq!(ospa(&x, &[], &params()), 20.0, epsilon = 1e-12);
        for n in 1..6 {
            let xs: Vec<_> = (0..n).map(|i| v(i as f64 * 100.0, 0.0)).collect();
            assert_abs_diff_eq!(ospa(&xs, &[], &params()), 20.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(ospa(&[], &[], &params()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ospa_single_pair_below_cutoff() {
        let x = vec![v(0.0, 0.0)];
        let y = vec![v(3.0, 4.0)];
        assert_abs_diff_eq!(ospa(&x, &y, &params()), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn ospa_axioms_on_random_sets() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let p = params();
        for _ in 0..500 {
            let nx = rng.random_range(0..6usize);
            let ny = rng.random_range(0..6usize);
            let xs: Vec<_> = (0..nx)
                .map(|_| v(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect();
            let ys: Vec<_> = (0..ny)
                .map(|_| v(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect();
            let d_xy = ospa(&xs, &ys, &p);
            let d_yx = ospa(&ys, &xs, &p);
            assert_abs_diff_eq!(d_xy, d_yx, epsilon = 1e-12);
            assert!(d_xy >= 0.0 && d_xy <= p.cutoff + 1e-12);
            // Zero iff equal as multisets of positions.
            let mut xs_sorted: Vec<_> = xs.iter().map(|q| (q[0], q[1])).collect();
            let mut ys_sorted: Vec<_> = ys.iter().map(|q| (q[0], q[1])).collect();
            xs_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ys_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if xs_sorted == ys_sorted {
                assert!(d_xy < 1e-12);
            } else if d_xy < 1e-12 {
                panic!("zero OSPA for unequal multisets");
            }
        }
    }

    #[test]
    fn ospa_uses_optimal_assignment() {
        // Greedy nearest-first would mismatch this crossing pair.
        let x = vec![v(0.0, 0.0), v(10.0, 0.0)];
        let y = vec![v(4.0, 0.0), v(-1.0, 0.0)];
        // Optimal pairing: 0<->-1 (1 m), 10<->4 (6 m).
        let expected = ((1.0f64.powi(2) + 6.0f64.powi(2)) / 2.0).sqrt();
        assert_abs_diff_eq!(ospa(&x, &y, &params()), expected, epsilon = 1e-12);
    }

    #[test]
    fn cdf_constant_sample_jumps_once() {
        let cdf = EmpiricalCdf::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(cdf.quantile(0.01), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf.quantile(1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf.fraction_below(0.999), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf.fraction_below(1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cdf_quantile_is_order_statistic() {
        let cdf = EmpiricalCdf::new(vec![5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_abs_diff_eq!(cdf.quantile(0.8), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf.quantile(0.2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cdf_empty_is_contract_error() {
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }
}
