//! Linear PMU measurement model and WLS state estimation.
//!
//! Layout conventions:
//!
//! - state `x` (length `6n`): real parts of the phase triplets of nodes
//!   `1..=n`, then the imaginary parts in the same order;
//! - measurements `z` (length `12d`): `z_V` then `z_I`, each made of the
//!   real triplets of the monitored nodes in ascending id order followed by
//!   their imaginary triplets.

mod bank;
mod wls;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, GridModel, NodeId, NodeKind, Triplet};
use crate::noise::{isotropic_variance, rectangular_variance, NoiseParams};
use crate::observability::Monitoring;

pub use bank::{BankEvaluation, EstimatorBank, Hypothesis, InjectionEstimate};
pub use wls::{compute_wmr, wls_estimate, EstimateResult, WlsSolver, CONDITION_LIMIT};

/// Nodal voltage state, see the module docs for the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn from_voltages(voltages: &[Triplet]) -> Self {
        let n = voltages.len();
        let mut x = DVector::zeros(6 * n);
        for (i, v) in voltages.iter().enumerate() {
            for p in 0..3 {
                x[3 * i + p] = v[p].re;
                x[3 * n + 3 * i + p] = v[p].im;
            }
        }
        Self(x)
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / 6
    }

    pub fn voltage(&self, node: NodeId) -> Triplet {
        let n = self.node_count();
        let i = node.index();
        Triplet::from_fn(|p, _| Complex64::new(self.0[3 * i + p], self.0[3 * n + 3 * i + p]))
    }

    pub fn voltages(&self) -> Vec<Triplet> {
        (0..self.node_count())
            .map(|i| self.voltage(NodeId::from_index(i)))
            .collect()
    }
}

/// Stacked PMU measurements, see the module docs for the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector(pub DVector<f64>);

impl MeasurementVector {
    /// Assembles `z` from per-monitored-node voltage and current triplets,
    /// given in ascending node order.
    pub fn from_phasors(voltages: &[Triplet], currents: &[Triplet]) -> Self {
        let d = voltages.len();
        assert_eq!(d, currents.len(), "one current triplet per monitored node");
        let mut z = DVector::zeros(12 * d);
        for (block, set) in [voltages, currents].into_iter().enumerate() {
            let base = 6 * d * block;
            for (j, t) in set.iter().enumerate() {
                for p in 0..3 {
                    z[base + 3 * j + p] = t[p].re;
                    z[base + 3 * d + 3 * j + p] = t[p].im;
                }
            }
        }
        Self(z)
    }

    pub fn monitored_count(&self) -> usize {
        self.0.len() / 12
    }

    /// Voltage triplet of the `j`-th monitored node.
    pub fn voltage(&self, j: usize) -> Triplet {
        self.triplet(0, j)
    }

    /// Current triplet of the `j`-th monitored node.
    pub fn current(&self, j: usize) -> Triplet {
        self.triplet(1, j)
    }

    fn triplet(&self, block: usize, j: usize) -> Triplet {
        let d = self.monitored_count();
        let base = 6 * d * block;
        Triplet::from_fn(|p, _| {
            Complex64::new(self.0[base + 3 * j + p], self.0[base + 3 * d + 3 * j + p])
        })
    }

    pub fn has_missing(&self) -> bool {
        self.0.iter().any(|v| !v.is_finite())
    }
}

/// Magnitudes substituted when no operating point is available or when a
/// measured magnitude is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nominal {
    /// Phase-to-ground voltage magnitude, volt.
    pub voltage: f64,
    /// Current magnitude, ampere.
    pub current: f64,
}

impl Nominal {
    /// Voltage from the largest source EMF; current defaults to 1 A.
    pub fn for_grid(grid: &GridModel) -> Self {
        let voltage = grid
            .sources()
            .iter()
            .flat_map(|s| s.emf.iter().map(|e| e.norm()))
            .fold(0.0, f64::max);
        Self {
            voltage: if voltage > 0.0 { voltage } else { 1.0 },
            current: 1.0,
        }
    }
}

/// Diagonal of the measurement covariance `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVariances {
    pub variances: DVector<f64>,
    /// Channels whose operating-point magnitude was zero and fell back to the
    /// nominal magnitude.
    pub fallback_channels: usize,
}

impl MeasurementVariances {
    /// Propagates the polar noise model to rectangular variances at the
    /// operating point (or at nominal magnitudes when `None`).
    pub fn new(
        monitored_count: usize,
        noise: &NoiseParams,
        operating_point: Option<&MeasurementVector>,
        nominal: Nominal,
    ) -> Result<Self> {
        if !noise.is_valid() {
            return Err(Error::InvalidNoise(format!("{noise:?}")));
        }
        let d = monitored_count;
        if let Some(op) = operating_point {
            if op.monitored_count() != d {
                return Err(Error::InvalidNoise(format!(
                    "operating point has {} monitored nodes, expected {d}",
                    op.monitored_count()
                )));
            }
        }
        let mut var = DVector::zeros(12 * d);
        let mut fallback = 0;
        for block in 0..2 {
            let (sm, sp, nominal_mag) = if block == 0 {
                (noise.v_mag, noise.v_phase, nominal.voltage)
            } else {
                (noise.i_mag, noise.i_phase, nominal.current)
            };
            let base = 6 * d * block;
            for j in 0..d {
                for p in 0..3 {
                    let (vr, vi) = match operating_point {
                        Some(op) => {
                            let ph = if block == 0 {
                                op.voltage(j)[p]
                            } else {
                                op.current(j)[p]
                            };
                            if ph.norm() > 1e-9 * nominal_mag {
                                rectangular_variance(ph.norm(), ph.arg(), sm, sp)
                            } else {
                                fallback += 1;
                                let v = isotropic_variance(nominal_mag, sm, sp);
                                (v, v)
                            }
                        }
                        None => {
                            let v = isotropic_variance(nominal_mag, sm, sp);
                            (v, v)
                        }
                    };
                    var[base + 3 * j + p] = vr;
                    var[base + 3 * d + 3 * j + p] = vi;
                }
            }
        }
        if let Some(bad) = var.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidNoise(format!(
                "measurement variance {bad} is not strictly positive"
            )));
        }
        Ok(Self {
            variances: var,
            fallback_channels: fallback,
        })
    }
}

/// `z = H x + v` with `cov(v) = R = diag(variances)`.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    h: DMatrix<f64>,
    variances: DVector<f64>,
    monitored: Vec<NodeId>,
    node_count: usize,
    label: String,
}

impl MeasurementModel {
    pub fn new(
        grid: &GridModel,
        monitoring: &Monitoring,
        noise: &NoiseParams,
        operating_point: Option<&MeasurementVector>,
    ) -> Result<Self> {
        let nominal = Nominal::for_grid(grid);
        let var = MeasurementVariances::new(monitoring.len(), noise, operating_point, nominal)?;
        Self::with_variances(grid, monitoring, var.variances)
    }

    pub fn with_variances(
        grid: &GridModel,
        monitoring: &Monitoring,
        variances: DVector<f64>,
    ) -> Result<Self> {
        let h = Self::measurement_matrix(grid, monitoring)?;
        if variances.len() != h.nrows() {
            return Err(Error::InvalidNoise(format!(
                "{} variances for {} measurements",
                variances.len(),
                h.nrows()
            )));
        }
        Ok(Self {
            h,
            variances,
            monitored: monitoring.iter().collect(),
            node_count: grid.node_count(),
            label: grid_label(grid),
        })
    }

    /// `H = [H_V; H_I]` for the monitored set.
    pub fn measurement_matrix(grid: &GridModel, monitoring: &Monitoring) -> Result<DMatrix<f64>> {
        if monitoring.is_empty() {
            return Err(Error::InvalidGrid("monitored set is empty".into()));
        }
        for id in monitoring.iter() {
            if grid.node(id)?.kind != NodeKind::Real {
                return Err(Error::InvalidGrid(format!("node {id} is not a real node")));
            }
        }
        let n = grid.node_count();
        let d = monitoring.len();
        let y = AdmittanceMatrix::network(grid)?;
        let y = y.matrix();
        let mut h = DMatrix::zeros(12 * d, 6 * n);
        for (j, node) in monitoring.iter().enumerate() {
            let i = node.index();
            for p in 0..3 {
                // voltage rows: unit selectors
                h[(3 * j + p, 3 * i + p)] = 1.0;
                h[(3 * d + 3 * j + p, 3 * n + 3 * i + p)] = 1.0;
                // current rows: monitored rows of [[Re Y, -Im Y], [Im Y, Re Y]]
                let row_re = 6 * d + 3 * j + p;
                let row_im = 6 * d + 3 * d + 3 * j + p;
                for k in 0..3 * n {
                    let yk = y[(3 * i + p, k)];
                    if yk.re == 0.0 && yk.im == 0.0 {
                        continue;
                    }
                    h[(row_re, k)] = yk.re;
                    h[(row_re, 3 * n + k)] = -yk.im;
                    h[(row_im, k)] = yk.im;
                    h[(row_im, 3 * n + k)] = yk.re;
                }
            }
        }
        Ok(h)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn monitored(&self) -> &[NodeId] {
        &self.monitored
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Human-readable name of the grid the model was built on.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn measurement_count(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_len(&self) -> usize {
        self.h.ncols()
    }

    /// Copy with every variance multiplied by `factor`.
    pub fn with_scaled_covariance(&self, factor: f64) -> Self {
        Self {
            variances: &self.variances * factor,
            ..self.clone()
        }
    }
}

fn grid_label(grid: &GridModel) -> String {
    match grid.virtual_node() {
        Some(v) => {
            let on = grid
                .branches()
                .iter()
                .find(|b| b.touches(v))
                .map(|b| b.origin.to_string())
                .unwrap_or_default();
            format!(
                "grid ({} nodes) with virtual node on {on}",
                grid.node_count()
            )
        }
        None => format!("grid ({} nodes)", grid.node_count()),
    }
}

/// Six real functionals giving `[Re I_a, Re I_b, Re I_c, Im I_a, Im I_b,
/// Im I_c]` of the network injection at `node` from a state vector.
pub fn injection_functionals(grid: &GridModel, node: NodeId) -> Result<DMatrix<f64>> {
    let n = grid.node_count();
    let y = AdmittanceMatrix::network(grid)?;
    let y = y.matrix();
    let i = node.index();
    let mut m = DMatrix::zeros(6, 6 * n);
    for p in 0..3 {
        for k in 0..3 * n {
            let yk = y[(3 * i + p, k)];
            m[(p, k)] = yk.re;
            m[(p, 3 * n + k)] = -yk.im;
            m[(3 + p, k)] = yk.im;
            m[(3 + p, 3 * n + k)] = yk.re;
        }
    }
    Ok(m)
}
