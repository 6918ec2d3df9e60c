//! Run-directory files. Column orders are fixed:
//!
//! - `episodes.csv`: `episode,reward,steps,success,final_d_pt`
//! - `evals.csv`: `episode,trials,success_rate,mean_reward,mean_steps`

use super::{EpisodeRecord, EvalResult, HarnessError, RunSummary};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
}

impl EvalRow {
    pub fn new(episode: usize, r: &EvalResult) -> Self {
        Self {
            episode,
            trials: r.trials,
            success_rate: r.success_rate,
            mean_reward: r.mean_reward,
            mean_steps: r.mean_steps,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), HarnessError> {
    write_rows(path, records)
}

pub(crate) fn write_evals_csv(path: &Path, rows: &[EvalRow]) -> Result<(), HarnessError> {
    write_rows(path, rows)
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let records = r
        .deserialize()
        .collect::<Result<Vec<EpisodeRecord>, _>>()
        .map_err(|e| csv_err(path, e))?;
    for (i, rec) in records.iter().enumerate() {
        if rec.episode != i + 1 {
            return Err(HarnessError::Format {
                path: path.to_path_buf(),
                message: format!("row {} has episode {}, expected {}", i + 1, rec.episode, i + 1),
            });
        }
    }
    Ok(records)
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(path, json + "\n").map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_summary(path: &Path) -> Result<RunSummary, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episodes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let recs = vec![
            EpisodeRecord { episode: 1, reward: -3.25, steps: 50, success: false, final_d_pt: 0.4 },
            EpisodeRecord { episode: 2, reward: 0.1 + 0.2, steps: 7, success: true, final_d_pt: 0.009 },
        ];
        write_episodes_csv(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,reward,steps,success,final_d_pt\n"));
        assert_eq!(read_episodes_csv(&path).unwrap(), recs);
    }

    #[test]
    fn gap_in_episodes_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        fs::write(&path, "episode,reward,steps,success,final_d_pt\n1,0,1,false,1\n3,0,1,false,1\n").unwrap();
        assert!(read_episodes_csv(&path).is_err());
    }
}
