//! Dataset assembly from traces, train/test splitting and calibration points.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calibrate::{fit_exponential, CalibrationFit};
use crate::chem::IonSpecies;
use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::scalar::Scalar;
use crate::sim::Trace;

/// Stacks trace samples whose every true concentration is at least `floor`.
pub fn build_dataset<S: Scalar>(traces: &[Trace<S>], floor: S, stable_only: bool) -> Result<Dataset<S>> {
    if traces.is_empty() {
        return Err(Error::domain("build_dataset needs at least one trace"));
    }
    let width = traces
        .iter()
        .flat_map(|t| t.samples.first())
        .map(|s| s.voltages.len())
        .next()
        .unwrap_or(0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for s in traces.iter().flat_map(|t| &t.samples) {
        if s.voltages.len() != width || s.true_concentrations.len() != width {
            return Err(Error::domain("traces disagree on the number of channels"));
        }
        if (stable_only && !s.stable) || s.true_concentrations.iter().any(|c| *c < floor) {
            continue;
        }
        x.extend_from_slice(&s.voltages);
        y.extend_from_slice(&s.true_concentrations);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::domain(format!(
            "no samples have every concentration >= {floor}{}",
            if stable_only { " in a stable region" } else { "" }
        )));
    }
    Dataset::from_parts(
        Array2::from_shape_vec((rows, width), x).expect("row widths checked"),
        Array2::from_shape_vec((rows, width), y).expect("row widths checked"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

impl SplitSpec {
    /// round_half_even(n * test_fraction)
    pub fn test_count(&self, n: usize) -> Result<usize> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::domain(format!(
                "test_fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            )));
        }
        let k = (n as f64 * self.test_fraction).round_ties_even() as usize;
        if k == 0 || k >= n {
            return Err(Error::domain(format!(
                "{n} rows are too few for a {} test split",
                self.test_fraction
            )));
        }
        Ok(k)
    }

    /// Row indices of the (train, test) parts, each in ascending order.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let k = self.test_count(n)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let mut test = order[..k].to_vec();
        let mut train = order[k..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Ok((train, test))
    }
}

/// Seeded random partition into (train, test).
pub fn split<S: Scalar>(data: &Dataset<S>, spec: &SplitSpec) -> Result<(Dataset<S>, Dataset<S>)> {
    let (train, test) = spec.indices(data.len())?;
    Ok((data.select(&train)?, data.select(&test)?))
}

/// One (mean voltage, concentration) point per settled concentration level of
/// channel `channel`, across all traces. Levels below `floor` are ignored.
pub fn calibration_points<S: Scalar>(traces: &[Trace<S>], channel: usize, floor: S) -> Result<Vec<(S, S)>> {
    let mut points = Vec::new();
    for trace in traces {
        let mut level: Option<(S, S, usize)> = None;
        let mut flush = |level: &mut Option<(S, S, usize)>| {
            if let Some((c, sum, n)) = level.take() {
                points.push((sum / S::lit(n as f64), c));
            }
        };
        for s in &trace.samples {
            let (Some(v), Some(c)) = (s.voltages.get(channel), s.true_concentrations.get(channel)) else {
                return Err(Error::domain(format!("trace has no channel {channel}")));
            };
            if !s.stable || *c < floor || !(*c > S::zero()) {
                flush(&mut level);
                continue;
            }
            match &mut level {
                Some((lc, sum, n)) if *lc == *c => {
                    *sum += *v;
                    *n += 1;
                }
                _ => {
                    flush(&mut level);
                    level = Some((*c, *v, 1));
                }
            }
        }
        flush(&mut level);
    }
    Ok(points)
}

/// Fits the exponential calibration of `ion` from its channel in `traces`.
pub fn calibrate_from_traces<S: Scalar>(
    traces: &[Trace<S>],
    ion: &IonSpecies,
    channel: usize,
    floor: S,
) -> Result<CalibrationFit<S>> {
    let points = calibration_points(traces, channel, floor)?;
    fit_exponential(ion.clone(), &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TraceSample;
    use proptest::prelude::*;

    fn rows(n: usize) -> Dataset<f64> {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y = Array2::from_shape_fn((n, 2), |(i, _)| 1.0 + i as f64);
        Dataset::from_parts(x, y).unwrap()
    }

    fn trace(conc: &[f64], stable: &[bool]) -> Trace<f64> {
        let samples = conc
            .iter()
            .zip(stable)
            .enumerate()
            .map(|(i, (c, s))| TraceSample {
                time: i as f64,
                voltages: vec![0.01 * i as f64, 0.0],
                true_concentrations: vec![*c, *c],
                stable: *s,
            })
            .collect();
        Trace::new(samples, "").unwrap()
    }

    #[test]
    fn ten_rows_split_two_eight() {
        let (train, test) = split(&rows(10), &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn half_even_rounding() {
        let s = SplitSpec {
            test_fraction: 0.5,
            seed: 1,
        };
        assert_eq!(s.test_count(5).unwrap(), 2);
        assert_eq!(s.test_count(7).unwrap(), 4);
        assert_eq!(SplitSpec::default().test_count(12).unwrap(), 2);
        assert!(SplitSpec::default().test_count(2).is_err());
    }

    #[test]
    fn same_seed_same_partition() {
        let a = SplitSpec::default().indices(100).unwrap();
        let b = SplitSpec::default().indices(100).unwrap();
        assert_eq!(a, b);
        let c = SplitSpec { seed: 7, ..SplitSpec::default() }.indices(100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn water_only_trace_has_no_rows() {
        let t = trace(&[0.0, 0.0, 0.0], &[true, true, true]);
        assert!(matches!(build_dataset(&[t], 1e-9, false), Err(Error::Domain(_))));
    }

    #[test]
    fn floor_and_stability_filters() {
        let t = trace(&[0.0, 1.0, 1.0, 2.0, 2.0], &[true, false, true, false, true]);
        assert_eq!(build_dataset(std::slice::from_ref(&t), 1e-9, false).unwrap().len(), 4);
        assert_eq!(build_dataset(&[t], 1e-9, true).unwrap().len(), 2);
    }

    #[test]
    fn calibration_points_average_levels() {
        let t = trace(&[0.0, 1.0, 1.0, 1.0, 2.0, 2.0], &[true, false, true, true, false, true]);
        let p = calibration_points(&[t], 0, 1e-9).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].0 - 0.025).abs() < 1e-15 && p[0].1 == 1.0);
        assert!((p[1].0 - 0.05).abs() < 1e-15 && p[1].1 == 2.0);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 5usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let spec = SplitSpec { test_fraction: frac, seed };
            prop_assume!(spec.test_count(n).is_ok());
            let (train, test) = spec.indices(n).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
