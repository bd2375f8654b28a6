use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimation::MeasurementVector;
use crate::grid::{NodeId, Triplet};
use crate::noise::{perturb, NoiseParams};
use crate::stream::MeasurementStream;

/// Sample instants `k·T` for integer `k` with `start ≤ k·T < end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timeline {
    pub start: f64,
    pub end: f64,
    pub period: f64,
}

impl Timeline {
    /// `calibration` pre-fault samples ending just before `fault_time`, then
    /// the post-fault interval.
    pub fn with_calibration(
        calibration: usize,
        fault_time: f64,
        duration: f64,
        period: f64,
    ) -> Self {
        Self {
            start: fault_time - calibration as f64 * period,
            end: fault_time + duration,
            period,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let k0 = (self.start / self.period).round() as i64;
        let k1 = (self.end / self.period).round() as i64;
        (k0..k1).map(|k| k as f64 * self.period).collect()
    }
}

/// Noisy copies of the true measurements at `times`; samples at or after
/// the fault time use the post-fault truth. Deterministic for a given seed.
pub fn synthesize_measurements(
    pre: &MeasurementVector,
    post: Option<(&MeasurementVector, f64)>,
    times: &[f64],
    noise: &NoiseParams,
    seed: u64,
) -> Vec<MeasurementVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = pre.monitored_count();
    times
        .iter()
        .map(|t| {
            let truth = match post {
                Some((z, fault_time)) if *t >= fault_time - 1e-9 => z,
                _ => pre,
            };
            let mut v = Vec::with_capacity(d);
            let mut i = Vec::with_capacity(d);
            for j in 0..d {
                let (tv, ti) = (truth.voltage(j), truth.current(j));
                let mut nv = Triplet::zeros();
                let mut ni = Triplet::zeros();
                for p in 0..3 {
                    nv[p] = perturb(tv[p], noise.v_mag, noise.v_phase, &mut rng);
                    ni[p] = perturb(ti[p], noise.i_mag, noise.i_phase, &mut rng);
                }
                v.push(nv);
                i.push(ni);
            }
            MeasurementVector::from_phasors(&v, &i)
        })
        .collect()
}

pub fn synthesize_stream(
    monitored: Vec<NodeId>,
    pre: &MeasurementVector,
    post: Option<(&MeasurementVector, f64)>,
    timeline: &Timeline,
    noise: &NoiseParams,
    seed: u64,
) -> MeasurementStream {
    let times = timeline.times();
    let samples = synthesize_measurements(pre, post, &times, noise, seed);
    MeasurementStream {
        monitored,
        times,
        samples,
    }
}
