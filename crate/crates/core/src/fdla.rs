//! Fault detection, localization and characterization over a measurement
//! stream.
//!
//! The first `calibration_window` samples fix the detection threshold on the
//! first differences of `w⁰`. Afterwards a fault is declared when
//! `|w⁰(t) − w⁰(t−1)|` exceeds the threshold; the faulted cluster is the
//! hypothesis minimizing `w^l(t) − μ^l`, where `μ^l` is the running mean of
//! `w^l` over the preceding `mean_window` samples (frozen at detection), and
//! the faulted phases are read from the estimated virtual-node injection.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{BankEvaluation, EstimatorBank, InjectionEstimate, MeasurementVector};
use crate::grid::{BranchId, GridModel, Triplet};
use crate::noise::NoiseParams;
use crate::observability::{ClusterPartition, Monitoring};
use crate::stream::MeasurementStream;

/// Floor of the calibrated threshold, for constant `w⁰` histories.
pub const THRESHOLD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdlaConfig {
    pub threshold_factor: f64,
    pub calibration_window: usize,
    pub mean_window: usize,
    /// A phase is faulted above this fraction of the largest phase injection.
    pub relative_phase_threshold: f64,
    /// ... and above this many injection standard deviations.
    pub sigma_multiplier: f64,
    /// Noise model behind the estimator covariance.
    pub estimator_noise: NoiseParams,
}

impl Default for FdlaConfig {
    fn default() -> Self {
        Self {
            threshold_factor: 1.2,
            calibration_window: 50,
            mean_window: 25,
            relative_phase_threshold: 0.1,
            sigma_multiplier: 3.0,
            estimator_noise: NoiseParams::default(),
        }
    }
}

impl FdlaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.calibration_window < 2 || self.mean_window < 2 {
            return Err(Error::Fdla("windows must hold at least 2 samples".into()));
        }
        if !(self.threshold_factor > 1.0) {
            return Err(Error::Fdla("threshold factor must exceed 1".into()));
        }
        if !self.estimator_noise.is_valid() || self.estimator_noise.is_noise_free() {
            return Err(Error::Fdla("estimator noise must be positive".into()));
        }
        Ok(())
    }

    /// Estimator noise to use for streams generated with `stream_noise`: the
    /// stream's own model, or the default one scaled by 1e-3 for exact
    /// streams (the covariance must stay positive).
    pub fn matched_to(mut self, stream_noise: &NoiseParams) -> Self {
        self.estimator_noise = if stream_noise.is_noise_free() {
            NoiseParams {
                sample_period: stream_noise.sample_period,
                ..NoiseParams::default().scaled(1e-3)
            }
        } else {
            *stream_noise
        };
        self
    }
}

/// `threshold_factor · max |w⁰(t) − w⁰(t−1)|`, floored at `THRESHOLD_FLOOR`.
pub fn calibrate_threshold(w0_history: &[f64], threshold_factor: f64) -> f64 {
    let max_step = w0_history
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    (threshold_factor * max_step).max(THRESHOLD_FLOOR)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FaultCharacterization {
    /// Faulted phases A, B, C.
    pub phases: [bool; 3],
    pub grounded: bool,
    /// No phase passed the threshold.
    pub indeterminate: bool,
}

impl FaultCharacterization {
    pub fn label(&self) -> String {
        if self.indeterminate {
            return "indeterminate".into();
        }
        let mut s: String = ["A", "B", "C"]
            .iter()
            .zip(self.phases)
            .filter(|(_, on)| *on)
            .map(|(p, _)| *p)
            .collect();
        if self.grounded {
            s.push_str("-G");
        }
        s
    }
}

/// Phase `p` is faulted when `|I_p| > max(rel · max_q |I_q|, k · σ_p)`; the
/// ground flag uses the same rule on the sum of the three currents.
pub fn characterize_fault(
    injection: &InjectionEstimate,
    relative: f64,
    sigma_multiplier: f64,
) -> FaultCharacterization {
    let mags = injection.currents.map(|c| c.norm());
    let largest = mags.max();
    let mut phases = [false; 3];
    for p in 0..3 {
        phases[p] = mags[p] > (relative * largest).max(sigma_multiplier * injection.sigma[p]);
    }
    let indeterminate = !phases.iter().any(|p| *p);
    let sum = injection.currents.sum().norm();
    let grounded =
        !indeterminate && sum > (relative * largest).max(sigma_multiplier * injection.sum_sigma);
    FaultCharacterization {
        phases,
        grounded,
        indeterminate,
    }
}

/// Output of a detector run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdlaReport {
    pub detected: bool,
    /// Sample index (into the stream) of the detection.
    pub detection_index: Option<usize>,
    pub detection_time: Option<f64>,
    /// Cluster id of the selected hypothesis.
    pub cluster: Option<usize>,
    /// Branch carrying the selected hypothesis' virtual node.
    pub hypothesis_branch: Option<BranchId>,
    pub fault_type: Option<FaultCharacterization>,
    pub threshold: f64,
    /// Cluster ids of the hypothesis columns, bank order.
    pub clusters: Vec<usize>,
    pub times: Vec<f64>,
    pub w0: Vec<f64>,
    /// `w^l` per sample, bank order.
    pub wl: Vec<Vec<f64>>,
    /// `μ^l` in force at each sample, before it is updated.
    pub means: Vec<Vec<f64>>,
    /// Virtual-node injection of every hypothesis per sample.
    #[serde(skip)]
    pub injections: Vec<Vec<Triplet>>,
    /// Samples skipped because of missing channels.
    pub skipped: Vec<usize>,
}

impl FdlaReport {
    /// Bank position minimizing `w^l − μ^l` at sample `k`.
    pub fn argmin_at(&self, k: usize) -> Option<usize> {
        let (w, mu) = (self.wl.get(k)?, self.means.get(k)?);
        argmin_variation(w, mu)
    }

    /// Cluster id minimizing `w^l − μ^l` at sample `k`.
    pub fn cluster_at(&self, k: usize) -> Option<usize> {
        self.argmin_at(k).map(|i| self.clusters[i])
    }

    /// Injection trace of the selected hypothesis, or of the hypothesis
    /// minimizing the WMR variation at the last sample when nothing was
    /// detected.
    pub fn injection_trace(&self) -> Vec<Triplet> {
        let pos = self
            .cluster
            .and_then(|c| self.clusters.iter().position(|x| *x == c))
            .or_else(|| self.argmin_at(self.times.len().checked_sub(1)?));
        match pos {
            Some(i) => self.injections.iter().map(|row| row[i]).collect(),
            None => Vec::new(),
        }
    }
}

fn argmin_variation(w: &[f64], mu: &[f64]) -> Option<usize> {
    w.iter()
        .zip(mu)
        .map(|(a, b)| a - b)
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Calibrating,
    Monitoring,
    Detected,
}

/// Sequential detector over a prefactored estimator bank.
pub struct Detector<'a> {
    bank: &'a EstimatorBank,
    config: FdlaConfig,
    phase: Phase,
    calibration_w0: Vec<f64>,
    recent: Vec<VecDeque<f64>>,
    mean: Vec<f64>,
    last_w0: Option<f64>,
    report: FdlaReport,
}

impl<'a> Detector<'a> {
    pub fn new(bank: &'a EstimatorBank, config: FdlaConfig) -> Result<Self> {
        config.validate()?;
        let h = bank.hypotheses().len();
        if h == 0 {
            return Err(Error::Fdla("estimator bank has no fault hypothesis".into()));
        }
        let clusters = bank.hypotheses().iter().map(|x| x.cluster).collect();
        Ok(Self {
            bank,
            phase: Phase::Calibrating,
            calibration_w0: Vec::with_capacity(config.calibration_window),
            recent: vec![VecDeque::with_capacity(config.mean_window); h],
            mean: vec![f64::NAN; h],
            last_w0: None,
            report: FdlaReport {
                detected: false,
                detection_index: None,
                detection_time: None,
                cluster: None,
                hypothesis_branch: None,
                fault_type: None,
                threshold: f64::NAN,
                clusters,
                times: Vec::new(),
                w0: Vec::new(),
                wl: Vec::new(),
                means: Vec::new(),
                injections: Vec::new(),
                skipped: Vec::new(),
            },
            config,
        })
    }

    /// Processes one sample; returns true when it triggered the detection.
    pub fn push(&mut self, t: f64, z: &MeasurementVector) -> Result<bool> {
        let k = self.report.times.len();
        let h = self.recent.len();
        self.report.times.push(t);
        self.report.means.push(self.mean.clone());
        if z.has_missing() {
            self.report.skipped.push(k);
            self.report.w0.push(f64::NAN);
            self.report.wl.push(vec![f64::NAN; h]);
            let nan = Triplet::from_element(num_complex::Complex64::new(f64::NAN, f64::NAN));
            self.report.injections.push(vec![nan; h]);
            return Ok(false);
        }
        let eval = self.bank.evaluate(z)?;
        let wl = eval.wmrs();
        let injections: Vec<InjectionEstimate> = self
            .bank
            .hypotheses()
            .iter()
            .zip(&eval.hypotheses)
            .map(|(hyp, est)| hyp.injection(est))
            .collect();
        self.report.w0.push(eval.w0());
        self.report.wl.push(wl.clone());
        self.report
            .injections
            .push(injections.iter().map(|i| i.currents).collect());

        let mut fired = false;
        match self.phase {
            Phase::Calibrating => {
                self.calibration_w0.push(eval.w0());
                self.update_means(&wl);
                if self.calibration_w0.len() == self.config.calibration_window {
                    self.report.threshold =
                        calibrate_threshold(&self.calibration_w0, self.config.threshold_factor);
                    self.phase = Phase::Monitoring;
                }
            }
            Phase::Monitoring => {
                let prev = self
                    .last_w0
                    .expect("calibration provides a previous sample");
                if (eval.w0() - prev).abs() > self.report.threshold {
                    self.detect(k, t, &eval, &injections)?;
                    fired = true;
                } else {
                    self.update_means(&wl);
                }
            }
            Phase::Detected => {}
        }
        self.last_w0 = Some(eval.w0());
        Ok(fired)
    }

    fn update_means(&mut self, wl: &[f64]) {
        for (l, w) in wl.iter().enumerate() {
            let q = &mut self.recent[l];
            if q.len() == self.config.mean_window {
                q.pop_front();
            }
            q.push_back(*w);
            self.mean[l] = q.iter().sum::<f64>() / q.len() as f64;
        }
    }

    fn detect(
        &mut self,
        k: usize,
        t: f64,
        eval: &BankEvaluation,
        injections: &[InjectionEstimate],
    ) -> Result<()> {
        let alpha = argmin_variation(&eval.wmrs(), &self.mean)
            .ok_or_else(|| Error::Fdla("no finite WMR variation at detection".into()))?;
        let hyp = &self.bank.hypotheses()[alpha];
        self.phase = Phase::Detected;
        self.report.detected = true;
        self.report.detection_index = Some(k);
        self.report.detection_time = Some(t);
        self.report.cluster = Some(hyp.cluster);
        self.report.hypothesis_branch = Some(hyp.branch);
        self.report.fault_type = Some(characterize_fault(
            &injections[alpha],
            self.config.relative_phase_threshold,
            self.config.sigma_multiplier,
        ));
        Ok(())
    }

    pub fn is_calibrated(&self) -> bool {
        self.phase != Phase::Calibrating
    }

    pub fn finish(self) -> Result<FdlaReport> {
        if self.phase == Phase::Calibrating {
            return Err(Error::Fdla(format!(
                "stream ended after {} valid samples, calibration needs {}",
                self.calibration_w0.len(),
                self.config.calibration_window
            )));
        }
        Ok(self.report)
    }
}

/// Builds the estimator bank with the covariance linearized at the first
/// complete sample of the stream.
pub fn prepare_bank(
    grid: &GridModel,
    monitoring: &Monitoring,
    partition: &ClusterPartition,
    stream: &MeasurementStream,
    config: &FdlaConfig,
) -> Result<EstimatorBank> {
    if stream.monitored != monitoring.iter().collect::<Vec<_>>() {
        return Err(Error::MonitoringMismatch(format!(
            "stream monitors nodes {:?}, grid monitors {:?}",
            stream.monitored.iter().map(|n| n.0).collect::<Vec<_>>(),
            monitoring.iter().map(|n| n.0).collect::<Vec<_>>()
        )));
    }
    let op = stream
        .samples
        .iter()
        .find(|z| !z.has_missing())
        .ok_or_else(|| Error::Stream("stream has no complete sample".into()))?;
    EstimatorBank::new(
        grid,
        monitoring,
        partition,
        &config.estimator_noise,
        Some(op),
    )
}

/// Runs the detector over a whole stream.
pub fn run_fdla(
    bank: &EstimatorBank,
    stream: &MeasurementStream,
    config: &FdlaConfig,
) -> Result<FdlaReport> {
    let mut det = Detector::new(bank, config.clone())?;
    for (t, z) in stream.times.iter().zip(&stream.samples) {
        det.push(*t, z)?;
    }
    det.finish()
}
