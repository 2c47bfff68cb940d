use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const METRICS_VERSION: u32 = 1;

/// One evaluation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    pub steps: u64,
    pub mean_reward_per_step: f64,
    pub success_rate: Option<f64>,
    pub mean_support_size: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Append-only metrics CSV whose first line is a `# format_version=N`
/// comment.
pub struct MetricsWriter {
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    /// Opens `path` for appending; a new file gets the version line and a
    /// header.
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| HarnessError::io(path, e))?;
        if fresh {
            writeln!(file, "# format_version={METRICS_VERSION}").map_err(|e| HarnessError::io(path, e))?;
        }
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), HarnessError> {
        self.writer.serialize(row)?;
        self.writer.flush().map_err(|e| HarnessError::Csv(e.to_string()))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    reader.deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(episode: u64) -> MetricsRow {
        MetricsRow {
            episode,
            steps: episode * 50,
            mean_reward_per_step: -0.5,
            success_rate: Some(0.25),
            mean_support_size: None,
            policy_loss: 0.1,
            value_loss: 2.0,
            entropy: 1.6,
            clip_fraction: 0.05,
        }
    }

    #[test]
    fn appends_without_repeating_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        MetricsWriter::open(&path).unwrap().write(&row(320)).unwrap();
        MetricsWriter::open(&path).unwrap().write(&row(640)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# format_version=1\nepisode,steps,"));
        assert_eq!(text.matches("episode").count(), 1);
        assert_eq!(read_metrics(&path).unwrap(), vec![row(320), row(640)]);
    }
}
