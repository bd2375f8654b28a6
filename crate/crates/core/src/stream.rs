//! PMU measurement streams and their CSV form.
//!
//! One row per timestamp, node and phase:
//!
//! ```text
//! timestamp,node,phase,v_re,v_im,i_re,i_im
//! 0.000,2,A,11520.3,-12.7,35.1,-8.2
//! ```
//!
//! Rows missing from a timestamp become NaN channels, which the detector
//! skips.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::MeasurementVector;
use crate::grid::{NodeId, Triplet};
use crate::observability::Monitoring;

const PHASES: [&str; 3] = ["A", "B", "C"];

/// Time series of stacked measurements for a fixed monitored set.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStream {
    pub monitored: Vec<NodeId>,
    pub times: Vec<f64>,
    pub samples: Vec<MeasurementVector>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    timestamp: f64,
    node: usize,
    phase: String,
    v_re: f64,
    v_im: f64,
    i_re: f64,
    i_im: f64,
}

impl MeasurementStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn monitoring(&self) -> Monitoring {
        Monitoring::from_ids(self.monitored.iter().copied())
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| *s >= t - 1e-9)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (t, z) in self.times.iter().zip(&self.samples) {
            for (j, node) in self.monitored.iter().enumerate() {
                let (v, i) = (z.voltage(j), z.current(j));
                for p in 0..3 {
                    w.serialize(Row {
                        timestamp: *t,
                        node: node.0,
                        phase: PHASES[p].to_string(),
                        v_re: v[p].re,
                        v_im: v[p].im,
                        i_re: i[p].re,
                        i_im: i[p].im,
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Stream(e.to_string()))
    }

    /// Parses a stream. The monitored set is the union of node ids seen;
    /// timestamps keep their order of first appearance.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut order: Vec<f64> = Vec::new();
        let mut by_time: BTreeMap<u64, BTreeMap<(usize, usize), (Complex64, Complex64)>> =
            BTreeMap::new();
        let mut nodes = std::collections::BTreeSet::new();
        for (k, row) in r.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Stream(format!("row {}: {e}", k + 2)))?;
            let phase = PHASES
                .iter()
                .position(|p| p.eq_ignore_ascii_case(row.phase.trim()))
                .ok_or_else(|| {
                    Error::Stream(format!("row {}: unknown phase `{}`", k + 2, row.phase))
                })?;
            if row.node == 0 {
                return Err(Error::Stream(format!("row {}: node ids start at 1", k + 2)));
            }
            if !row.timestamp.is_finite() {
                return Err(Error::Stream(format!(
                    "row {}: timestamp is not finite",
                    k + 2
                )));
            }
            let key = row.timestamp.to_bits();
            let entry = by_time.entry(key).or_insert_with(|| {
                order.push(row.timestamp);
                BTreeMap::new()
            });
            let value = (
                Complex64::new(row.v_re, row.v_im),
                Complex64::new(row.i_re, row.i_im),
            );
            if entry.insert((row.node, phase), value).is_some() {
                return Err(Error::Stream(format!(
                    "row {}: duplicate node {} phase {} at t = {}",
                    k + 2,
                    row.node,
                    PHASES[phase],
                    row.timestamp
                )));
            }
            nodes.insert(row.node);
        }
        if order.is_empty() {
            return Err(Error::Stream("stream is empty".into()));
        }
        let monitored: Vec<NodeId> = nodes.into_iter().map(NodeId).collect();
        let nan = Complex64::new(f64::NAN, f64::NAN);
        let samples = order
            .iter()
            .map(|t| {
                let rows = &by_time[&t.to_bits()];
                let mut v = Vec::with_capacity(monitored.len());
                let mut i = Vec::with_capacity(monitored.len());
                for node in &monitored {
                    let get = |p: usize| rows.get(&(node.0, p)).copied().unwrap_or((nan, nan));
                    v.push(Triplet::from_fn(|p, _| get(p).0));
                    i.push(Triplet::from_fn(|p, _| get(p).1));
                }
                MeasurementVector::from_phasors(&v, &i)
            })
            .collect();
        Ok(Self {
            monitored,
            times: order,
            samples,
        })
    }
}

/// Column header and rows of a WMR trace: `t, w0, w<cluster>...`.
pub fn write_wmr_trace<W: Write>(
    writer: W,
    times: &[f64],
    w0: &[f64],
    clusters: &[usize],
    wl: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "w0".to_string()];
    header.extend(clusters.iter().map(|c| format!("w{c}")));
    w.write_record(&header)?;
    for (k, t) in times.iter().enumerate() {
        let mut rec = vec![t.to_string(), w0[k].to_string()];
        rec.extend(wl[k].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Injection magnitudes per phase: `t, |I_A|, |I_B|, |I_C|`.
pub fn write_injection_trace<W: Write>(
    writer: W,
    times: &[f64],
    currents: &[Triplet],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "|I_A|", "|I_B|", "|I_C|"])?;
    for (t, i) in times.iter().zip(currents) {
        w.write_record([
            t.to_string(),
            i[0].norm().to_string(),
            i[1].norm().to_string(),
            i[2].norm().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::balanced_triplet;

    fn sample_stream() -> MeasurementStream {
        let z = |s: f64| {
            MeasurementVector::from_phasors(
                &[
                    balanced_triplet(100.0 * s, 0.1),
                    balanced_triplet(99.0, 0.2),
                ],
                &[balanced_triplet(5.0, -0.3), balanced_triplet(4.0 * s, 0.4)],
            )
        };
        MeasurementStream {
            monitored: vec![NodeId(2), NodeId(5)],
            times: vec![-0.02, 0.0, 0.02],
            samples: vec![z(1.0), z(1.5), z(2.0)],
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = sample_stream();
        let text = s.to_csv_string().unwrap();
        assert!(text.starts_with("timestamp,node,phase,v_re,v_im,i_re,i_im\n"));
        let back = MeasurementStream::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.index_at(0.0), Some(1));
    }

    #[test]
    fn missing_rows_become_nan() {
        let s = sample_stream();
        let text = s.to_csv_string().unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(3);
        let back = MeasurementStream::read_csv(lines.join("\n").as_bytes()).unwrap();
        assert!(back.samples[0].has_missing());
        assert!(!back.samples[1].has_missing());
    }

    #[test]
    fn bad_phase_is_reported() {
        let text = "timestamp,node,phase,v_re,v_im,i_re,i_im\n0,1,D,1,0,1,0\n";
        let err = MeasurementStream::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn trace_headers() {
        let mut buf = Vec::new();
        write_wmr_trace(&mut buf, &[0.0], &[1.0], &[1, 2], &[vec![2.0, 3.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,w0,w1,w2\n0,1,2,3\n");
        let mut buf = Vec::new();
        write_injection_trace(&mut buf, &[0.5], &[balanced_triplet(2.0, 0.0)]).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,|I_A|,|I_B|,|I_C|\n0.5,2,"));
    }
}
