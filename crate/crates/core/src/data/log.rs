use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_COLUMNS: [&str; 9] = [
    "epoch",
    "stage",
    "train_loss",
    "val_loss",
    "ssim",
    "msssim",
    "psnr",
    "rmse",
    "accuracy",
];

/// One epoch of training. `epoch` counts from 1 across the whole run;
/// `stage` is 0 for single-pool runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub stage: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub ssim: f64,
    pub msssim: f64,
    pub psnr: f64,
    pub rmse: f64,
    pub accuracy: f64,
}

impl LogRow {
    fn get(&self, column: &str) -> Option<f64> {
        Some(match column {
            "epoch" => self.epoch as f64,
            "stage" => self.stage as f64,
            "train_loss" => self.train_loss,
            "val_loss" => self.val_loss,
            "ssim" => self.ssim,
            "msssim" => self.msssim,
            "psnr" => self.psnr,
            "rmse" => self.rmse,
            "accuracy" => self.accuracy,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn stage(&self, stage: usize) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    /// Values of one column, optionally restricted to one stage.
    pub fn column(&self, name: &str, stage: Option<usize>) -> Result<Vec<f64>> {
        if !LOG_COLUMNS.contains(&name) {
            return Err(Error::Invalid(format!(
                "no column {name:?}; available columns: {}",
                LOG_COLUMNS.join(", ")
            )));
        }
        Ok(self
            .rows
            .iter()
            .filter(|r| stage.map_or(true, |s| r.stage == s))
            .filter_map(|r| r.get(name))
            .collect())
    }

    /// Floats use the shortest representation that parses back to the same
    /// value, so a re-read log reproduces every decision made on it.
    pub fn to_csv(&self) -> String {
        let mut out = LOG_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch, r.stage, r.train_loss, r.val_loss, r.ssim, r.msssim, r.psnr, r.rmse, r.accuracy
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<TrainingLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<TrainingLog> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::Data(format!("csv: {e}")))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols != LOG_COLUMNS {
            return Err(Error::Data(format!(
                "training log header must be {}, got {}",
                LOG_COLUMNS.join(","),
                cols.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("csv: {e}")))?;
            let bad = |k: usize| Error::Data(format!("log row {}: bad value {:?}", line + 2, &rec[k]));
            let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(k));
            let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(k));
            rows.push(LogRow {
                epoch: int(0)?,
                stage: int(1)?,
                train_loss: num(2)?,
                val_loss: num(3)?,
                ssim: num(4)?,
                msssim: num(5)?,
                psnr: num(6)?,
                rmse: num(7)?,
                accuracy: num(8)?,
            });
        }
        Ok(TrainingLog { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, v: f64) -> LogRow {
        LogRow {
            epoch,
            stage: 1,
            train_loss: v,
            val_loss: v / 3.0,
            ssim: 0.1 + v,
            msssim: 0.7,
            psnr: 31.25,
            rmse: 0.01,
            accuracy: 0.999,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = TrainingLog {
            rows: vec![row(1, 0.123456789123), row(2, 1.0 / 7.0)],
        };
        let back = TrainingLog::parse_csv(&log.to_csv()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn unknown_column_lists_available() {
        let err = TrainingLog::default().column("loss", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("val_loss") && msg.contains("accuracy"), "{msg}");
    }
}
