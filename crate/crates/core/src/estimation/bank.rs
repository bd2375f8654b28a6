use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    injection_functionals, EstimateResult, MeasurementModel, MeasurementVariances,
    MeasurementVector, Nominal, WlsSolver,
};
use crate::error::{Error, Result};
use crate::grid::{BranchId, GridModel, NodeId, Triplet};
use crate::noise::NoiseParams;
use crate::observability::{ClusterPartition, Monitoring};

/// One fault hypothesis: the FEG with a midpoint virtual node on `branch`.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    /// Cluster id in the partition.
    pub cluster: usize,
    pub branch: BranchId,
    pub grid: GridModel,
    pub virtual_node: NodeId,
    solver: WlsSolver,
    /// Rows giving `[Re I_abc, Im I_abc]` at the virtual node.
    injection: DMatrix<f64>,
    injection_sigma: [f64; 3],
    sum_sigma: f64,
}

impl Hypothesis {
    pub fn solver(&self) -> &WlsSolver {
        &self.solver
    }

    /// Virtual-node injection computed from an estimate of this hypothesis.
    pub fn injection(&self, estimate: &EstimateResult) -> InjectionEstimate {
        let v = &self.injection * &estimate.x_hat.0;
        let currents = Triplet::from_fn(|p, _| num_complex::Complex64::new(v[p], v[3 + p]));
        InjectionEstimate {
            currents,
            sigma: self.injection_sigma,
            sum_sigma: self.sum_sigma,
        }
    }
}

/// Estimated three-phase current injected at a virtual node, with the
/// propagated standard deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectionEstimate {
    pub currents: Triplet,
    /// Per-phase `sqrt(var Re + var Im)`.
    pub sigma: [f64; 3],
    /// Same for the sum of the three phase currents.
    pub sum_sigma: f64,
}

/// The 0-th estimate and one estimate per hypothesis cluster at one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BankEvaluation {
    pub base: EstimateResult,
    /// Ordered as `EstimatorBank::hypotheses`.
    pub hypotheses: Vec<EstimateResult>,
}

impl BankEvaluation {
    pub fn w0(&self) -> f64 {
        self.base.wmr
    }

    pub fn wmrs(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|e| e.wmr).collect()
    }
}

/// Prefactored bank of WLS estimators sharing one measurement layout.
#[derive(Clone, Debug)]
pub struct EstimatorBank {
    base: WlsSolver,
    hypotheses: Vec<Hypothesis>,
    feg: GridModel,
    monitoring: Monitoring,
    variances: DVector<f64>,
}

impl EstimatorBank {
    /// Builds the bank on `base_grid`. The covariance is linearized at
    /// `operating_point` when given.
    pub fn new(
        base_grid: &GridModel,
        monitoring: &Monitoring,
        partition: &ClusterPartition,
        noise: &NoiseParams,
        operating_point: Option<&MeasurementVector>,
    ) -> Result<Self> {
        let reps: Vec<(usize, BranchId)> = partition
            .hypothesis_clusters()
            .map(|c| (c.id, c.representative))
            .collect();
        Self::with_representatives(
            base_grid,
            monitoring,
            partition,
            noise,
            operating_point,
            &reps,
        )
    }

    /// Same as `new` with explicit `(cluster id, branch)` hypotheses.
    pub fn with_representatives(
        base_grid: &GridModel,
        monitoring: &Monitoring,
        partition: &ClusterPartition,
        noise: &NoiseParams,
        operating_point: Option<&MeasurementVector>,
        hypotheses: &[(usize, BranchId)],
    ) -> Result<Self> {
        let nominal = Nominal::for_grid(base_grid);
        let variances =
            MeasurementVariances::new(monitoring.len(), noise, operating_point, nominal)?.variances;
        let base = WlsSolver::new(MeasurementModel::with_variances(
            base_grid,
            monitoring,
            variances.clone(),
        )?)?;
        let (feg, _) = base_grid.add_fake_nodes(monitoring, &partition.single_line_ufcs)?;
        let hypotheses = hypotheses
            .par_iter()
            .map(|&(cluster, branch)| {
                build_hypothesis(&feg, monitoring, &variances, cluster, branch)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base,
            hypotheses,
            feg,
            monitoring: monitoring.clone(),
            variances,
        })
    }

    pub fn base(&self) -> &WlsSolver {
        &self.base
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn feg(&self) -> &GridModel {
        &self.feg
    }

    pub fn monitoring(&self) -> &Monitoring {
        &self.monitoring
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    /// Position of the hypothesis of cluster `cluster` in the bank.
    pub fn position_of_cluster(&self, cluster: usize) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.cluster == cluster)
    }

    /// Builds an extra hypothesis on any eligible branch of the FEG, outside
    /// the bank.
    pub fn hypothesis_on(&self, branch: BranchId) -> Result<Hypothesis> {
        build_hypothesis(&self.feg, &self.monitoring, &self.variances, 0, branch)
    }

    pub fn evaluate(&self, z: &MeasurementVector) -> Result<BankEvaluation> {
        let base = self.base.estimate(z)?;
        let hypotheses = self
            .hypotheses
            .iter()
            .map(|h| h.solver.estimate(z))
            .collect::<Result<Vec<_>>>()?;
        Ok(BankEvaluation { base, hypotheses })
    }
}

fn build_hypothesis(
    feg: &GridModel,
    monitoring: &Monitoring,
    variances: &DVector<f64>,
    cluster: usize,
    branch: BranchId,
) -> Result<Hypothesis> {
    // a branch carrying a fake node keeps its id on the from-side half
    let grid = feg.extend_with_virtual_node(branch, 0.5)?;
    let virtual_node = grid
        .virtual_node()
        .ok_or_else(|| Error::InvalidGrid("hypothesis grid without virtual node".into()))?;
    let model = MeasurementModel::with_variances(&grid, monitoring, variances.clone())?;
    let solver = WlsSolver::with_hypothesis(model, Some(branch))?;
    let injection = injection_functionals(&grid, virtual_node)?;
    let var = solver.functional_variance(&injection);
    let injection_sigma = [0, 1, 2].map(|p| (var[p] + var[3 + p]).sqrt());
    let sums = DMatrix::from_fn(2, injection.ncols(), |r, c| {
        (0..3).map(|p| injection[(3 * r + p, c)]).sum()
    });
    let sum_var = solver.functional_variance(&sums);
    Ok(Hypothesis {
        cluster,
        branch,
        grid,
        virtual_node,
        solver,
        injection,
        injection_sigma,
        sum_sigma: (sum_var[0] + sum_var[1]).sqrt(),
    })
}
