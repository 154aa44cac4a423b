use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{LearnerConfig, RewardMode};
use crate::replay::{IS_EXPONENT, MIN_PRIORITY, PRIORITY_EXPONENT, SEGMENT_CAPACITY};
use crate::sim::ScriptedPolicy;

/// Environment variable naming the directory that relative output paths
/// resolve against.
pub const OUTPUT_ROOT_VAR: &str = "FOGDUEL_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Round-robin episodes then a fixed number of train steps, one thread.
    Deterministic,
    /// Actor threads and a learner thread joined by channels.
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoLstm,
    SignRewardOnly,
    HighExploration,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NoLstm, Variant::SignRewardOnly, Variant::HighExploration];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoLstm => "no_lstm",
            Variant::SignRewardOnly => "sign_reward_only",
            Variant::HighExploration => "high_exploration",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_lstm: bool,
    pub sign_reward_only: bool,
    pub high_exploration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorSettings {
    pub eps_base: f64,
    pub eps_alpha: f64,
}

impl Default for ActorSettings {
    fn default() -> Self {
        ActorSettings {
            eps_base: 0.4,
            eps_alpha: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySettings {
    pub segment_capacity: usize,
    pub priority_exponent: f64,
    pub is_exponent: f64,
    pub min_priority: f64,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        ReplaySettings {
            segment_capacity: SEGMENT_CAPACITY,
            priority_exponent: PRIORITY_EXPONENT,
            is_exponent: IS_EXPONENT,
            min_priority: MIN_PRIORITY,
        }
    }
}

/// Run length limits; the run stops at whichever is hit first. A missing
/// limit is unbounded, but at least one must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub train_steps: Option<u64>,
    pub episodes: Option<u64>,
    pub wall_seconds: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            train_steps: Some(20_000),
            episodes: None,
            wall_seconds: Some(1200.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Train steps between evaluation sweeps; 0 disables periodic sweeps.
    pub interval_steps: u64,
    /// Greedy games per opponent in each periodic sweep.
    pub games: u32,
    /// Greedy games per opponent in the final sweep.
    pub final_games: u32,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            interval_steps: 500,
            games: 50,
            final_games: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub actors: usize,
    pub opponents: Vec<ScriptedPolicy>,
    pub seed: u64,
    pub mode: RunMode,
    pub budget: Budget,
    pub learner: LearnerConfig,
    pub actor: ActorSettings,
    pub replay: ReplaySettings,
    pub ablations: Ablations,
    pub eval: EvalSettings,
    /// Train steps after each round of episodes in deterministic mode.
    pub train_steps_per_round: usize,
    /// Stored sequences required before the first train step.
    pub learn_start: usize,
    /// Episodes queued at the learner before actors pause.
    pub queue_high_water: usize,
    pub checkpoint_interval: u64,
    /// Train steps between `train` metrics records.
    pub metrics_interval: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            actors: 8,
            opponents: ScriptedPolicy::ALL.to_vec(),
            seed: 1,
            mode: RunMode::Deterministic,
            budget: Budget::default(),
            learner: LearnerConfig::default(),
            actor: ActorSettings::default(),
            replay: ReplaySettings::default(),
            ablations: Ablations::default(),
            eval: EvalSettings::default(),
            train_steps_per_round: 4,
            learn_start: 256,
            queue_high_water: 1024,
            checkpoint_interval: 5000,
            metrics_interval: 100,
            output_dir: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = self.learner.violations();
        if self.actors < 1 {
            v.push("actors must be at least 1".into());
        }
        if self.opponents.is_empty() {
            v.push("opponents must list at least one scripted policy".into());
        }
        let mut seen = self.opponents.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.opponents.len() {
            v.push("opponents must not repeat".into());
        }
        if !(self.actor.eps_base > 0.0 && self.actor.eps_base < 1.0) {
            v.push(format!("actor.eps_base must be in (0, 1), got {}", self.actor.eps_base));
        }
        if !(self.actor.eps_alpha >= 0.0) {
            v.push(format!("actor.eps_alpha must be non-negative, got {}", self.actor.eps_alpha));
        }
        if self.replay.segment_capacity < 1 {
            v.push("replay.segment_capacity must be at least 1".into());
        }
        if !(self.replay.priority_exponent >= 0.0) {
            v.push("replay.priority_exponent must be non-negative".into());
        }
        if !(self.replay.is_exponent >= 0.0 && self.replay.is_exponent <= 1.0) {
            v.push("replay.is_exponent must be in [0, 1]".into());
        }
        if !(self.replay.min_priority > 0.0) {
            v.push("replay.min_priority must be positive".into());
        }
        if self.budget.train_steps.is_none() && self.budget.episodes.is_none() && self.budget.wall_seconds.is_none() {
            v.push("budget must set at least one of train_steps, episodes, wall_seconds".into());
        }
        if let Some(w) = self.budget.wall_seconds {
            if !(w >= 0.0 && w.is_finite()) {
                v.push(format!("budget.wall_seconds must be a non-negative number, got {w}"));
            }
        }
        if self.train_steps_per_round < 1 {
            v.push("train_steps_per_round must be at least 1".into());
        }
        if self.learn_start < self.learner.batch_size {
            v.push(format!(
                "learn_start ({}) must be at least learner.batch_size ({})",
                self.learn_start, self.learner.batch_size
            ));
        }
        if self.queue_high_water < 1 {
            v.push("queue_high_water must be at least 1".into());
        }
        if self.checkpoint_interval < 1 {
            v.push("checkpoint_interval must be at least 1".into());
        }
        if self.metrics_interval < 1 {
            v.push("metrics_interval must be at least 1".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            v.push("output_dir must not be empty".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Copy with the ablation for `variant` switched on.
    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut c = self.clone();
        match variant {
            Variant::NoLstm => c.ablations.no_lstm = true,
            Variant::SignRewardOnly => c.ablations.sign_reward_only = true,
            Variant::HighExploration => c.ablations.high_exploration = true,
        }
        c
    }

    /// Whether the network keeps its recurrent state between steps.
    pub fn recurrent(&self) -> bool {
        !self.ablations.no_lstm
    }

    /// Learner settings after applying ablations.
    pub fn effective_learner(&self) -> LearnerConfig {
        let mut l = self.learner.clone();
        if self.ablations.sign_reward_only {
            l.reward_mode = RewardMode::Sign;
        }
        l
    }

    /// `(eps_base, eps_alpha)` after applying ablations.
    pub fn effective_exploration(&self) -> (f64, f64) {
        if self.ablations.high_exploration {
            (0.7, 11.0)
        } else {
            (self.actor.eps_base, self.actor.eps_alpha)
        }
    }

    /// Opponent of actor `i`: round-robin over the opponent list.
    pub fn opponent_of(&self, i: usize) -> ScriptedPolicy {
        self.opponents[i % self.opponents.len()]
    }

    /// Output directory with relative paths resolved under the output root.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }

    /// The config without its output location, which does not affect
    /// results. Checkpoints embed this form.
    pub fn identity(&self) -> RunConfig {
        RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form of
    /// [`RunConfig::identity`].
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(&self.identity()).expect("config serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

pub fn resolve_output(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(p),
        None => p.to_path_buf(),
    }
}
