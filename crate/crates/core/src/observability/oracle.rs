use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{check_theorem1, compute_single_line_ufcs, ClusterPartition, Monitoring};
use crate::error::{Error, Result};
use crate::estimation::{MeasurementModel, MeasurementVector, WlsSolver};
use crate::grid::{BranchId, GridModel};

/// Relative tolerance under which two per-branch WMRs count as equal.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

/// Result of the residual-equality oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    /// Groups of eligible branches with equal WMR on every trial, ordered by
    /// lowest branch id.
    pub groups: Vec<Vec<BranchId>>,
    /// Branches whose hypothesis grid is unobservable, with the reason.
    pub unobservable: Vec<(BranchId, String)>,
    /// Largest relative WMR spread found inside a group.
    pub max_spread: f64,
    pub trials: usize,
}

impl OracleReport {
    /// Whether the oracle groups equal the eligible branch sets of `partition`.
    pub fn agrees_with(&self, partition: &ClusterPartition, grid: &GridModel) -> bool {
        self.unobservable.is_empty() && self.groups == partition.eligible_sets(grid)
    }
}

/// Relative difference; magnitudes below `floor` count as zero residuals.
fn relative_gap(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Groups eligible branches by the WMR of their midpoint virtual-node
/// hypothesis on the FEG over `trials` standard-normal measurement vectors
/// (unit covariance).
pub fn empirical_cluster_oracle(
    grid: &GridModel,
    monitoring: &Monitoring,
    trials: usize,
    seed: u64,
) -> Result<OracleReport> {
    let check = check_theorem1(grid, monitoring);
    if !check.holds {
        return Err(Error::ObservabilityViolated {
            nodes: check.violations,
        });
    }
    let (feg, _) = grid.add_fake_nodes(monitoring, &compute_single_line_ufcs(grid, monitoring))?;
    let rows = 12 * monitoring.len();
    // roundoff level of a WMR against E‖z‖² = rows
    let floor = 1e-10 * rows as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<MeasurementVector> = (0..trials)
        .map(|_| {
            MeasurementVector(DVector::from_fn(rows, |_, _| {
                StandardNormal.sample(&mut rng)
            }))
        })
        .collect();

    let eligible: Vec<BranchId> = grid
        .branches()
        .iter()
        .filter(|b| b.fault_hypothesis_eligible)
        .map(|b| b.id)
        .collect();

    let evaluated: Vec<(BranchId, std::result::Result<Vec<f64>, String>)> = eligible
        .par_iter()
        .map(|&branch| {
            let wmrs = (|| -> Result<Vec<f64>> {
                let hyp = feg.extend_with_virtual_node(branch, 0.5)?;
                let model = MeasurementModel::with_variances(
                    &hyp,
                    monitoring,
                    DVector::from_element(rows, 1.0),
                )?;
                let solver = WlsSolver::new(model)?;
                samples
                    .iter()
                    .map(|z| solver.estimate(z).map(|e| e.wmr))
                    .collect()
            })();
            (branch, wmrs.map_err(|e| e.to_string()))
        })
        .collect();

    let mut groups: Vec<(Vec<BranchId>, Vec<f64>)> = Vec::new();
    let mut unobservable = Vec::new();
    let mut max_spread: f64 = 0.0;
    for (branch, result) in evaluated {
        let w = match result {
            Ok(w) => w,
            Err(reason) => {
                unobservable.push((branch, reason));
                continue;
            }
        };
        let found = groups.iter_mut().find(|(_, reference)| {
            reference
                .iter()
                .zip(&w)
                .all(|(a, b)| relative_gap(*a, *b, floor) <= ORACLE_TOLERANCE)
        });
        match found {
            Some((members, reference)) => {
                for (a, b) in reference.iter().zip(&w) {
                    max_spread = max_spread.max(relative_gap(*a, *b, floor));
                }
                members.push(branch);
            }
            None => groups.push((vec![branch], w)),
        }
    }

    Ok(OracleReport {
        groups: groups.into_iter().map(|(g, _)| g).collect(),
        unobservable,
        max_spread,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observability::compute_clusters;

    #[test]
    fn single_monitored_line() {
        let g = GridModel::from_edges(2, &[(1, 2)], &[1, 2]).unwrap();
        let r = empirical_cluster_oracle(&g, &g.monitoring(), 20, 1).unwrap();
        assert_eq!(r.groups, vec![vec![BranchId(1)]]);
    }

    #[test]
    fn chain_with_middle_unmonitored_is_one_group() {
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 3]).unwrap();
        let m = g.monitoring();
        let r = empirical_cluster_oracle(&g, &m, 20, 7).unwrap();
        assert_eq!(r.groups, vec![vec![BranchId(1), BranchId(2)]]);
        assert!(r.max_spread <= ORACLE_TOLERANCE);
        assert!(r.agrees_with(&compute_clusters(&g, &m).unwrap(), &g));
    }

    #[test]
    fn star_center_separates() {
        let g = GridModel::from_edges(4, &[(1, 2), (1, 3), (1, 4)], &[2, 3, 4]).unwrap();
        let m = g.monitoring();
        let r = empirical_cluster_oracle(&g, &m, 20, 7).unwrap();
        assert_eq!(r.groups.len(), 3);
        assert!(r.agrees_with(&compute_clusters(&g, &m).unwrap(), &g));
    }

    #[test]
    fn all_monitored_star_merges() {
        let g = GridModel::from_edges(4, &[(1, 2), (1, 3), (1, 4)], &[1, 2, 3, 4]).unwrap();
        let m = g.monitoring();
        let r = empirical_cluster_oracle(&g, &m, 20, 3).unwrap();
        assert_eq!(r.groups, vec![vec![BranchId(1), BranchId(2), BranchId(3)]]);
        assert!(r.agrees_with(&compute_clusters(&g, &m).unwrap(), &g));
    }

    #[test]
    fn seed_does_not_change_partition() {
        let g = GridModel::from_edges(5, &[(1, 2), (2, 3), (3, 4), (3, 5)], &[1, 2, 4, 5]).unwrap();
        let m = g.monitoring();
        let a = empirical_cluster_oracle(&g, &m, 20, 1).unwrap();
        let b = empirical_cluster_oracle(&g, &m, 20, 99).unwrap();
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn theorem1_violation_rejected() {
        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (3, 4)], &[1, 4]).unwrap();
        assert!(matches!(
            empirical_cluster_oracle(&g, &g.monitoring(), 5, 1),
            Err(Error::ObservabilityViolated { .. })
        ));
    }
}
