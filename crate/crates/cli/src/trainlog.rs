//! Training log CSV: one row per optimizer step.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use costroute_core::train::TrainLogEntry;

pub const LOG_HEADER: &str = "step,total,prediction,compression,cost,mean_mask_rate";

pub fn write_log_csv(path: &Path, entries: &[TrainLogEntry]) -> Result<(), std::io::Error> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{LOG_HEADER}")?;
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.step,
            e.loss.total,
            e.loss.prediction,
            e.loss.compression,
            e.loss.cost,
            e.mean_mask_rate
        )?;
    }
    out.flush()
}
