//! PMU noise model: Gaussian noise on magnitude (relative) and phase.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Voltage magnitude σ as a fraction of the magnitude.
    pub v_mag: f64,
    /// Current magnitude σ as a fraction of the magnitude.
    pub i_mag: f64,
    /// Voltage phase σ, radians.
    pub v_phase: f64,
    /// Current phase σ, radians.
    pub i_phase: f64,
    /// Reporting period, seconds.
    pub sample_period: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            v_mag: 1.6e-5,
            i_mag: 4e-3,
            v_phase: 5.1e-5,
            i_phase: 5.8e-3,
            sample_period: 0.02,
        }
    }
}

impl NoiseParams {
    pub fn noise_free() -> Self {
        Self {
            v_mag: 0.0,
            i_mag: 0.0,
            v_phase: 0.0,
            i_phase: 0.0,
            ..Self::default()
        }
    }

    /// All four σ multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            v_mag: self.v_mag * factor,
            i_mag: self.i_mag * factor,
            v_phase: self.v_phase * factor,
            i_phase: self.i_phase * factor,
            sample_period: self.sample_period,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.v_mag, self.i_mag, self.v_phase, self.i_phase]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
            && self.sample_period > 0.0
    }

    pub fn is_noise_free(&self) -> bool {
        [self.v_mag, self.i_mag, self.v_phase, self.i_phase]
            .iter()
            .all(|s| *s == 0.0)
    }
}

/// First-order variances `(var_re, var_im)` of a phasor with magnitude `mag`
/// and angle `angle` under relative magnitude noise `sigma_mag` and phase
/// noise `sigma_phase`. Cross-covariance is dropped.
pub fn rectangular_variance(mag: f64, angle: f64, sigma_mag: f64, sigma_phase: f64) -> (f64, f64) {
    let sm = sigma_mag * mag;
    let sp = sigma_phase * mag;
    let (s, c) = angle.sin_cos();
    (
        (sm * c).powi(2) + (sp * s).powi(2),
        (sm * s).powi(2) + (sp * c).powi(2),
    )
}

/// Angle-averaged variance used when only a magnitude is known.
pub fn isotropic_variance(mag: f64, sigma_mag: f64, sigma_phase: f64) -> f64 {
    0.5 * mag * mag * (sigma_mag * sigma_mag + sigma_phase * sigma_phase)
}

/// Draws a noisy copy of `phasor`: magnitude scaled by `1 + σ_m·n₁`, angle
/// shifted by `σ_p·n₂`.
pub fn perturb<R: Rng + ?Sized>(
    phasor: Complex64,
    sigma_mag: f64,
    sigma_phase: f64,
    rng: &mut R,
) -> Complex64 {
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    if sigma_mag == 0.0 && sigma_phase == 0.0 {
        return phasor;
    }
    let (mag, angle) = phasor.to_polar();
    Complex64::from_polar(mag * (1.0 + sigma_mag * n1), angle + sigma_phase * n2)
}
