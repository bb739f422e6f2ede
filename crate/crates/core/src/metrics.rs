//! Regression metrics and evaluation reports.
//!
//! Errors are `target - prediction`. Variances are population variances, so
//! `variance + mean^2 == mse` holds exactly up to rounding.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Subset};
use crate::error::{Error, Result};
use crate::mlp::{self, MlpTopology};

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "target has {} values, prediction has {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Shape("metrics need at least one value".into()));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

/// Sample Pearson correlation.
pub fn pearson(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    if y.len() < 2 {
        return Err(Error::Shape("correlation needs at least two values".into()));
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mh = y_hat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean and population variance of `y - y_hat`.
pub fn error_stats(y: &[f64], y_hat: &[f64]) -> Result<(f64, f64)> {
    check_pair(y, y_hat)?;
    let n = y.len() as f64;
    let errors: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    let mean = errors.iter().sum::<f64>() / n;
    let variance = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok((mean, variance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

pub const DEFAULT_BINS: usize = 20;

/// Equal-width histogram over `[min, max]`. Bins are `[low, high)` except the
/// last, which is closed. A zero-width range puts everything in the first bin.
pub fn histogram(values: &[f64], num_bins: usize) -> Result<Vec<Bin>> {
    if values.is_empty() {
        return Err(Error::Shape("histogram of no values".into()));
    }
    if num_bins == 0 {
        return Err(Error::Shape("histogram needs at least one bin".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / num_bins as f64;
    let mut bins: Vec<Bin> = (0..num_bins)
        .map(|i| Bin {
            low: min + width * i as f64,
            high: if i + 1 == num_bins {
                max
            } else {
                min + width * (i + 1) as f64
            },
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = if width > 0.0 {
            (((v - min) / width).floor() as usize).min(num_bins - 1)
        } else {
            0
        };
        bins[idx].count += 1;
    }
    Ok(bins)
}

pub fn write_histogram_csv<W: Write>(bins: &[Bin], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([
            format!("{:.16e}", b.low),
            format!("{:.16e}", b.high),
            b.count.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    /// Targets and predictions as trained, in `[-1, 1]`.
    Normalized,
    /// De-normalized magnitudes.
    Richter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub unit: Unit,
    pub subset: Subset,
    pub n_samples: usize,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when targets or predictions are constant.
    pub correlation: Option<f64>,
    pub error_mean: f64,
    pub error_variance: f64,
    pub histogram: Vec<Bin>,
}

impl EvalReport {
    pub fn from_predictions(
        targets: &[f64],
        predictions: &[f64],
        unit: Unit,
        subset: Subset,
        num_bins: usize,
    ) -> Result<Self> {
        let mse = mse(targets, predictions)?;
        let (error_mean, error_variance) = error_stats(targets, predictions)?;
        let correlation = match pearson(targets, predictions) {
            Ok(r) => Some(r),
            Err(Error::DegenerateCorrelation) => None,
            Err(Error::Shape(_)) if targets.len() == 1 => None,
            Err(e) => return Err(e),
        };
        let errors: Vec<f64> = targets
            .iter()
            .zip(predictions)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            unit,
            subset,
            n_samples: targets.len(),
            mse,
            rmse: mse.sqrt(),
            correlation,
            error_mean,
            error_variance,
            histogram: histogram(&errors, num_bins)?,
        })
    }
}

/// Targets and predictions of `params` on one subset, in the requested unit.
///
/// `probe` sees every dataset row index the evaluation reads.
pub fn predictions_with_probe(
    params: &[f64],
    topology: &MlpTopology,
    dataset: &Dataset,
    subset: Subset,
    unit: Unit,
    probe: &mut dyn FnMut(usize),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let indices = dataset.indices(subset);
    indices.iter().for_each(|&i| probe(i));
    let x = dataset.features().select_rows(indices);
    let mut predictions = mlp::batch_forward(params, topology, &x)?;
    let mut targets: Vec<f64> = indices.iter().map(|&i| dataset.targets()[i]).collect();
    if unit == Unit::Richter {
        let norm = dataset.normalization().target();
        predictions.iter_mut().for_each(|v| *v = norm.inverse(*v));
        targets.iter_mut().for_each(|v| *v = norm.inverse(*v));
    }
    Ok((targets, predictions))
}

pub fn evaluate(
    params: &[f64],
    topology: &MlpTopology,
    dataset: &Dataset,
    subset: Subset,
    unit: Unit,
) -> Result<EvalReport> {
    evaluate_with_probe(
        params,
        topology,
        dataset,
        subset,
        unit,
        DEFAULT_BINS,
        &mut |_| {},
    )
}

pub fn evaluate_with_probe(
    params: &[f64],
    topology: &MlpTopology,
    dataset: &Dataset,
    subset: Subset,
    unit: Unit,
    num_bins: usize,
    probe: &mut dyn FnMut(usize),
) -> Result<EvalReport> {
    let (targets, predictions) =
        predictions_with_probe(params, topology, dataset, subset, unit, probe)?;
    EvalReport::from_predictions(&targets, &predictions, unit, subset, num_bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let y = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson(&y, &neg).unwrap() + 1.0).abs() < 1e-15);
        let aff: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&y, &aff).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&y, &[1.0; 4]),
            Err(Error::DegenerateCorrelation)
        ));
        assert!(pearson(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn error_stats_cases() {
        assert_eq!(error_stats(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), (0.0, 0.0));
        assert_eq!(error_stats(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn histogram_cases() {
        let h = histogram(&[0.5], 7).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1);
        assert_eq!(h.iter().filter(|b| b.count > 0).count(), 1);

        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!((h[0].low, h[1].high), (0.0, 3.0));

        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn report_serializes() {
        let r = EvalReport::from_predictions(
            &[0.1, 0.2, 0.3],
            &[0.1, 0.25, 0.2],
            Unit::Richter,
            Subset::Test,
            4,
        )
        .unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"unit\":\"richter\""));
        assert!(json.contains("\"subset\":\"test\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn constant_predictions_have_no_correlation() {
        let r =
            EvalReport::from_predictions(&[0.0; 3], &[0.0; 3], Unit::Normalized, Subset::Train, 20)
                .unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.correlation, None);
    }
}
