use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const EPOCHS_HEADER: &str = "epoch,inertia,histogram,loss_start,loss_end,label_change,loss_increased";

/// Summary of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub inertia: f64,
    /// Subjects per pseudo-label; sums to N.
    pub histogram: Vec<usize>,
    /// Classification objective over the whole dataset before the first
    /// SGD step, weighted the way batches are drawn.
    pub loss_start: f64,
    /// Same loss, same pseudo-labels, after the last SGD step.
    pub loss_end: f64,
    pub label_change: f64,
    /// Set when `loss_end` exceeded `loss_start` by more than 1e-6.
    pub loss_increased: bool,
}

impl EpochLog {
    /// Histogram buckets are `;`-separated inside one CSV field.
    pub fn csv_row(&self) -> String {
        let histogram: Vec<String> = self.histogram.iter().map(usize::to_string).collect();
        format!(
            "{},{:.6},{},{:.6},{:.6},{:.4},{}",
            self.epoch,
            self.inertia,
            histogram.join(";"),
            self.loss_start,
            self.loss_end,
            self.label_change,
            u8::from(self.loss_increased)
        )
    }
}

pub fn epochs_csv(logs: &[EpochLog]) -> String {
    let mut out = String::new();
    writeln!(out, "{EPOCHS_HEADER}").expect("write to string");
    for log in logs {
        writeln!(out, "{}", log.csv_row()).expect("write to string");
    }
    out
}

pub fn write_epochs_csv(logs: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, epochs_csv(logs)).map_err(|e| Error::io(path, e))
}
