use nalgebra::{DMatrix, DVector};

use super::{MeasurementModel, MeasurementVector, StateVector};
use crate::error::{Error, Result};
use crate::grid::BranchId;

/// Estimates whose whitened gain matrix has a larger condition number are
/// flagged with `condition_ok = false`.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Singular values below this fraction of the largest one mean the model is
/// rank deficient.
const RANK_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateResult {
    pub x_hat: StateVector,
    pub wmr: f64,
    pub hypothesis: Option<BranchId>,
    pub condition_ok: bool,
}

/// Prefactored WLS estimator for one measurement model.
///
/// The whitened matrix `diag(1/σ)·H` is QR-factored once; each estimate is a
/// single matrix-vector product plus the explicit residual.
#[derive(Clone, Debug)]
pub struct WlsSolver {
    model: MeasurementModel,
    inv_sigma: DVector<f64>,
    /// `R⁻¹Qᵀ`, maps whitened measurements to the estimate.
    gain: DMatrix<f64>,
    /// `R⁻¹` of the thin QR factor, used for covariance propagation.
    r_inv: DMatrix<f64>,
    condition: f64,
    hypothesis: Option<BranchId>,
}

impl WlsSolver {
    pub fn new(model: MeasurementModel) -> Result<Self> {
        Self::with_hypothesis(model, None)
    }

    pub fn with_hypothesis(model: MeasurementModel, hypothesis: Option<BranchId>) -> Result<Self> {
        let (d, n) = model.h().shape();
        if d < n {
            return Err(Error::Unobservable {
                grid: model.label().to_string(),
            });
        }
        let inv_sigma = model.variances().map(|v| 1.0 / v.sqrt());
        let mut hw = model.h().clone();
        for (r, s) in inv_sigma.iter().enumerate() {
            hw.row_mut(r).scale_mut(*s);
        }
        let qr = hw.qr();
        let r = qr.r();
        let sv = r.singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(max > 0.0) || min <= RANK_FLOOR * max {
            return Err(Error::Unobservable {
                grid: model.label().to_string(),
            });
        }
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Unobservable {
                grid: model.label().to_string(),
            })?;
        let gain = &r_inv * qr.q().transpose();
        Ok(Self {
            model,
            inv_sigma,
            gain,
            r_inv,
            condition: max / min,
            hypothesis,
        })
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Condition number of the whitened measurement matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn hypothesis(&self) -> Option<BranchId> {
        self.hypothesis
    }

    pub fn estimate(&self, z: &MeasurementVector) -> Result<EstimateResult> {
        if z.0.len() != self.model.measurement_count() {
            return Err(Error::Stream(format!(
                "measurement vector has {} entries, model expects {}",
                z.0.len(),
                self.model.measurement_count()
            )));
        }
        let zw = z.0.component_mul(&self.inv_sigma);
        let x = &self.gain * zw;
        let x_hat = StateVector(x);
        let wmr = compute_wmr(&self.model, z, &x_hat);
        Ok(EstimateResult {
            x_hat,
            wmr,
            hypothesis: self.hypothesis,
            condition_ok: self.condition <= CONDITION_LIMIT,
        })
    }

    /// Variances of the linear functionals `rows · x̂`, one per row.
    pub fn functional_variance(&self, rows: &DMatrix<f64>) -> DVector<f64> {
        // cov(x̂) = R⁻¹R⁻ᵀ, so var(c·x̂) = ‖R⁻ᵀcᵀ‖²
        let t = rows * &self.r_inv;
        DVector::from_iterator(t.nrows(), t.row_iter().map(|r| r.norm_squared()))
    }
}

/// One-shot WLS estimate.
pub fn wls_estimate(model: &MeasurementModel, z: &MeasurementVector) -> Result<EstimateResult> {
    WlsSolver::new(model.clone())?.estimate(z)
}

/// Weighted measurement residual `(z − Hx̂)ᵀR⁻¹(z − Hx̂)`.
pub fn compute_wmr(model: &MeasurementModel, z: &MeasurementVector, x_hat: &StateVector) -> f64 {
    let residual = &z.0 - model.h() * &x_hat.0;
    residual
        .iter()
        .zip(model.variances().iter())
        .map(|(e, v)| e * e / v)
        .sum()
}
