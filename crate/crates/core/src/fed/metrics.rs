//! Round-level metrics CSV output.
//!
//! Schema: `round,client_id,strategy,split,loss,accuracy,payload_bytes,flops`.
//! Rows are flushed after every append so an interrupted run leaves no
//! partial row behind.

use super::MetricsRow;
use crate::error::Result;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str = "round,client_id,strategy,split,loss,accuracy,payload_bytes,flops";

pub struct MetricsWriter {
    w: BufWriter<File>,
    path: PathBuf,
}

impl MetricsWriter {
    /// Creates (truncates) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{METRICS_HEADER}")?;
        w.flush()?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends rows and flushes them to disk.
    pub fn write_rows(&mut self, rows: &[MetricsRow]) -> Result<()> {
        for r in rows {
            writeln!(
                self.w,
                "{},{},{},{},{:.6},{:.6},{},{}",
                r.round,
                r.client_id,
                r.strategy.name(),
                r.split.name(),
                r.loss,
                r.accuracy,
                r.payload_bytes,
                r.flops
            )?;
        }
        self.w.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Formats rows as CSV text (header included) without touching disk;
/// the writer and this function must agree byte for byte.
pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{}\n",
            r.round,
            r.client_id,
            r.strategy.name(),
            r.split.name(),
            r.loss,
            r.accuracy,
            r.payload_bytes,
            r.flops
        ));
    }
    out
}
