use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::replay::ReplayStats;

/// Episodes in the sliding training win-rate window.
pub const WIN_WINDOW: usize = 100;

/// Win rate and game count for one opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub win_rate: f64,
    pub games: u32,
}

/// One line of the metrics stream. `wall_seconds` is only filled in
/// concurrent mode so deterministic runs stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MetricsEvent {
    Train {
        step: u64,
        episodes: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_seconds: Option<f64>,
        loss: f64,
        grad_norm: f64,
        mean_abs_td: f64,
        snapshot_version: u64,
        stale_episodes: u64,
        train_win_rate: BTreeMap<String, WinRate>,
        replay: ReplayStats,
    },
    Eval {
        step: u64,
        episodes: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_seconds: Option<f64>,
        win_rate: BTreeMap<String, WinRate>,
        mean_win_rate: f64,
    },
    Checkpoint {
        step: u64,
        episodes: u64,
        path: String,
    },
    End {
        step: u64,
        episodes: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_seconds: Option<f64>,
        reason: String,
    },
}

/// Append-only JSONL writer; every record is flushed as one line.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn emit(&mut self, event: &MetricsEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_string(event).expect("metrics serialize");
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.out.flush()
    }
}

/// Sliding window of recent outcomes per opponent.
#[derive(Debug, Clone, Default)]
pub struct WinWindows {
    windows: BTreeMap<String, VecDeque<bool>>,
}

impl WinWindows {
    pub fn record(&mut self, opponent: &str, win: bool) {
        let w = self.windows.entry(opponent.to_string()).or_default();
        if w.len() == WIN_WINDOW {
            w.pop_front();
        }
        w.push_back(win);
    }

    pub fn rates(&self) -> BTreeMap<String, WinRate> {
        self.windows
            .iter()
            .map(|(k, w)| {
                let wins = w.iter().filter(|x| **x).count();
                (
                    k.clone(),
                    WinRate {
                        win_rate: wins as f64 / w.len().max(1) as f64,
                        games: w.len() as u32,
                    },
                )
            })
            .collect()
    }
}
