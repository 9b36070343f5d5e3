//! Knee detection on loss curves.
//!
//! A decreasing curve is smoothed, both axes are min-max normalized and the
//! curve is flipped so that it rises. The knee is the first local maximum of
//! `flipped − x` that is confirmed by a later drop of the difference curve.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KneeParams {
    /// Centered moving-average width, odd.
    pub smoothing_window: usize,
    pub sensitivity: f64,
    /// Earliest index that may be reported as a knee.
    pub min_epochs: usize,
}

impl Default for KneeParams {
    fn default() -> Self {
        KneeParams {
            smoothing_window: 5,
            sensitivity: 1.0,
            min_epochs: 10,
        }
    }
}

impl KneeParams {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(Error::Invalid(format!(
                "smoothing window must be odd and at least 1, got {}",
                self.smoothing_window
            )));
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return Err(Error::Invalid(format!(
                "sensitivity must be positive, got {}",
                self.sensitivity
            )));
        }
        Ok(())
    }
}

/// Intermediate curves of one detection pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KneeScan {
    pub knee: Option<usize>,
    pub smoothed: Vec<f64>,
    /// Normalized difference curve; empty when the series is too short.
    pub difference: Vec<f64>,
}

/// Centered moving average. Near the ends the window shrinks symmetrically,
/// which keeps straight lines straight.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let n = series.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let k = half.min(i).min(n - 1 - i);
            let span = &series[i - k..=i + k];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Runs the detector and keeps the intermediate curves.
pub fn scan_knee(series: &[f64], params: &KneeParams) -> Result<KneeScan> {
    params.validate()?;
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("loss series contains {bad}")));
    }
    let n = series.len();
    if n < 3 || n < params.smoothing_window || n < params.min_epochs {
        return Ok(KneeScan {
            smoothed: series.to_vec(),
            ..KneeScan::default()
        });
    }
    let smoothed = smooth(series, params.smoothing_window);
    let lo = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok(KneeScan {
            knee: None,
            difference: vec![0.0; n],
            smoothed,
        });
    }
    let step = 1.0 / (n - 1) as f64;
    let difference: Vec<f64> = smoothed
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let flipped = 1.0 - (y - lo) / (hi - lo);
            flipped - i as f64 * step
        })
        .collect();

    let d = &difference;
    let candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| d[i] >= d[i - 1] && d[i] >= d[i + 1] && i >= params.min_epochs)
        .collect();
    // mean spacing of the normalized x axis is exactly `step`
    let drop = params.sensitivity * step;
    let knee = candidates
        .into_iter()
        .find(|&i| d[i + 1..].iter().any(|&v| v < d[i] - drop));
    Ok(KneeScan {
        knee,
        smoothed,
        difference,
    })
}

/// Index of the knee of a decreasing series, or `None`.
pub fn detect_knee(series: &[f64], params: &KneeParams) -> Result<Option<usize>> {
    Ok(scan_knee(series, params)?.knee)
}

/// Why a stage ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopTrigger {
    Knee,
    Cap,
    Converge,
}

impl fmt::Display for StopTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopTrigger::Knee => "knee",
            StopTrigger::Cap => "cap",
            StopTrigger::Converge => "converge",
        })
    }
}

/// Summary of the stop decision for one stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KneeReport {
    /// 1-based stage number.
    pub stage: usize,
    /// Epochs observed in the stage.
    pub epochs: usize,
    /// Index of the knee within the stage, counted from 0.
    pub knee_epoch: Option<usize>,
    pub triggered_by: Option<StopTrigger>,
    pub smoothed: Vec<f64>,
    pub difference_curve: Vec<f64>,
}

impl KneeReport {
    /// Writes the `key,value` summary sidecar.
    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "key,value").ok();
        writeln!(out, "stage,{}", self.stage).ok();
        writeln!(out, "epochs,{}", self.epochs).ok();
        let knee = self.knee_epoch.map(|k| k.to_string()).unwrap_or_else(|| "none".into());
        writeln!(out, "knee_index,{knee}").ok();
        let trig = self
            .triggered_by
            .map(|t| t.to_string())
            .unwrap_or_else(|| "running".into());
        writeln!(out, "triggered_by,{trig}").ok();
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Writes `index,smoothed,difference` rows for plotting.
    pub fn write_curve(&self, path: &Path) -> Result<()> {
        write_difference_csv(path, &self.smoothed, &self.difference_curve)
    }
}

pub(crate) fn write_difference_csv(path: &Path, smoothed: &[f64], difference: &[f64]) -> Result<()> {
    let mut out = String::from("index,smoothed,difference\n");
    for (i, s) in smoothed.iter().enumerate() {
        let d = difference.get(i).map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!("{i},{s},{d}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> KneeParams {
        KneeParams {
            smoothing_window: 1,
            sensitivity: 1.0,
            min_epochs: 0,
        }
    }

    #[test]
    fn defaults() {
        let p = KneeParams::default();
        assert_eq!((p.smoothing_window, p.sensitivity, p.min_epochs), (5, 1.0, 10));
    }

    #[test]
    fn linear_has_no_knee() {
        let y: Vec<f64> = (0..40).map(|i| 3.0 - 0.05 * i as f64).collect();
        assert_eq!(detect_knee(&y, &raw()).unwrap(), None);
        assert_eq!(detect_knee(&y, &KneeParams::default()).unwrap(), None);
    }

    #[test]
    fn flat_has_no_knee() {
        assert_eq!(detect_knee(&[0.5; 20], &raw()).unwrap(), None);
    }

    #[test]
    fn short_series_is_not_an_error() {
        let p = KneeParams {
            smoothing_window: 7,
            ..raw()
        };
        assert_eq!(detect_knee(&[3.0, 2.0, 1.0, 0.9, 0.85], &p).unwrap(), None);
    }

    #[test]
    fn corner_of_piecewise_curve() {
        let y: Vec<f64> = (0..30)
            .map(|i| if i < 8 { 1.0 - 0.1 * i as f64 } else { 0.2 - 0.001 * (i - 8) as f64 })
            .collect();
        assert_eq!(detect_knee(&y, &raw()).unwrap(), Some(8));
    }

    #[test]
    fn candidates_before_min_epochs_are_ignored() {
        let y: Vec<f64> = (0..30).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let early = detect_knee(&y, &raw()).unwrap().unwrap();
        let p = KneeParams {
            min_epochs: early + 3,
            ..raw()
        };
        if let Some(k) = detect_knee(&y, &p).unwrap() {
            assert!(k >= early + 3);
        }
    }

    #[test]
    fn smoothing_keeps_lines() {
        let y: Vec<f64> = (0..9).map(|i| 2.0 * i as f64).collect();
        let s = smooth(&y, 5);
        for (a, b) in s.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_params() {
        let p = KneeParams {
            smoothing_window: 4,
            ..raw()
        };
        assert!(matches!(detect_knee(&[1.0; 10], &p), Err(Error::Invalid(_))));
        assert!(matches!(
            detect_knee(&[1.0, f64::NAN, 0.5], &raw()),
            Err(Error::Numeric(_))
        ));
    }
}
