use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_HEADER: &str =
    "epoch,eval_return,q_target_mean,weight_mean,critic_loss,actor_loss,mmd_mean,target_var_mean";

/// One row per epoch; epochs count from 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub eval_return: f64,
    pub q_target_mean: f64,
    pub weight_mean: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mmd_mean: f64,
    pub target_var_mean: f64,
}

impl MetricsRow {
    pub fn is_finite(&self) -> bool {
        [
            self.eval_return,
            self.q_target_mean,
            self.weight_mean,
            self.critic_loss,
            self.actor_loss,
            self.mmd_mean,
            self.target_var_mean,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Streams rows to a CSV file, flushing after each one so a failed run
/// keeps everything up to the last finished epoch.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: csv::WriterBuilder::new().has_headers(true).from_writer(w),
        }
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error().into())
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = MetricsWriter::new(Vec::new());
    for r in rows {
        w.write(r)?;
    }
    if rows.is_empty() {
        return Ok(format!("{METRICS_HEADER}\n"));
    }
    Ok(String::from_utf8(w.into_inner()?).expect("csv output is utf-8"))
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_to_csv(rows)?)?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(crate::error::Error::format(0, format!("unexpected metrics header {}", header.join(","))));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let row = MetricsRow {
            epoch: 0,
            eval_return: -12.5,
            q_target_mean: 3.25,
            weight_mean: 1.0,
            critic_loss: 0.1,
            actor_loss: -2.0,
            mmd_mean: 0.01,
            target_var_mean: 0.002,
        };
        let text = metrics_to_csv(std::slice::from_ref(&row)).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(metrics_to_csv(&[]).unwrap().trim_end(), METRICS_HEADER);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[row.clone()]).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![row]);
    }
}
