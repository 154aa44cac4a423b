use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::{Checkpoint, CheckpointError, CheckpointHeader};
use super::config::{ConfigError, RunConfig, RunMode, Variant};
use super::metrics::{MetricsEvent, MetricsWriter, WinRate, WinWindows};
use crate::actor::{run_episode, ActorConfig, ActorError, EpisodeRecord, SnapshotChannel};
use crate::features::{layout_markdown, FEATURE_LAYOUT_VERSION};
use crate::learner::{Learner, LearnerConfig, LearnerError, TrainStats};
use crate::net::QNetParams;
use crate::replay::SegmentedReplay;
use crate::sim::{mix64, Rules, ScriptedPolicy, RULES_VERSION};

/// Seed base for greedy evaluation games, shared by every run so paired
/// comparisons see the same games.
pub const EVAL_SEED_BASE: u64 = 0xE7A1_0000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("learner: {0}")]
    Learner(#[from] LearnerError),
    #[error("actor: {0}")]
    Actor(#[from] ActorError),
    #[error("worker crashed: {0}")]
    Crash(String),
}

/// One evaluation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub episodes: u64,
    pub win_rate: BTreeMap<String, WinRate>,
    pub mean_win_rate: f64,
}

impl EvalPoint {
    pub fn rate(&self, opponent: ScriptedPolicy) -> Option<f64> {
        self.win_rate.get(opponent.name()).map(|w| w.win_rate)
    }
}

/// What a finished run leaves behind, also written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub train_steps: u64,
    pub episodes: u64,
    pub stop_reason: String,
    pub curve: Vec<EvalPoint>,
    pub final_eval: Option<EvalPoint>,
}

impl RunReport {
    /// Training episodes consumed when `opponent` first reached `threshold`
    /// in a periodic or final sweep.
    pub fn episodes_to_reach(&self, opponent: ScriptedPolicy, threshold: f64) -> Option<u64> {
        self.curve
            .iter()
            .chain(&self.final_eval)
            .find(|p| p.rate(opponent).is_some_and(|r| r >= threshold))
            .map(|p| p.episodes)
    }

    pub fn final_rate(&self, opponent: ScriptedPolicy) -> Option<f64> {
        self.final_eval.as_ref().and_then(|p| p.rate(opponent))
    }

    pub fn final_mean(&self) -> Option<f64> {
        self.final_eval.as_ref().map(|p| p.mean_win_rate)
    }
}

/// Greedy win rates of `params` against each opponent over `games` fixed
/// seeds per opponent.
pub fn evaluate_params(
    rules: &Rules,
    params: &QNetParams,
    opponents: &[ScriptedPolicy],
    games: u32,
) -> Result<BTreeMap<String, WinRate>, ActorError> {
    let reward = LearnerConfig::default();
    let mut table = BTreeMap::new();
    for &opponent in opponents {
        let cfg = ActorConfig {
            index: 0,
            count: 1,
            eps_base: 0.4,
            eps_alpha: 0.0,
            opponent,
            evaluation: true,
        };
        let mut wins = 0;
        for g in 0..games {
            let rec = run_episode(rules, params, &cfg, &reward, mix64(EVAL_SEED_BASE + g as u64), 0)?;
            wins += rec.win() as u32;
        }
        table.insert(
            opponent.name().to_string(),
            WinRate {
                win_rate: if games == 0 { 0.0 } else { wins as f64 / games as f64 },
                games,
            },
        );
    }
    Ok(table)
}

fn mean_rate(table: &BTreeMap<String, WinRate>) -> f64 {
    if table.is_empty() {
        return 0.0;
    }
    table.values().map(|w| w.win_rate).sum::<f64>() / table.len() as f64
}

/// Seed of the `k`-th training episode of actor `i`.
pub fn episode_seed(run_seed: u64, actor: usize, k: u64) -> u64 {
    mix64(mix64(run_seed ^ (actor as u64).wrapping_mul(0x9E37_79B9)) ^ k)
}

struct Trainer {
    cfg: RunConfig,
    rules: Rules,
    dir: PathBuf,
    learner: Learner,
    replay: SegmentedReplay,
    metrics: MetricsWriter,
    windows: WinWindows,
    episodes: u64,
    stale_episodes: u64,
    version: u64,
    curve: Vec<EvalPoint>,
    start: Instant,
    deterministic: bool,
    last_stats: Option<TrainStats>,
}

impl Trainer {
    fn new(cfg: RunConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        let dir = cfg.resolved_output_dir();
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        std::fs::write(dir.join("config.json"), cfg.to_json())?;
        std::fs::write(dir.join("features.md"), layout_markdown())?;
        let metrics = MetricsWriter::create(&dir.join("metrics.jsonl"))?;
        let params = QNetParams::init(mix64(cfg.seed ^ 0x5EED), cfg.recurrent());
        let learner = Learner::new(cfg.effective_learner(), params, mix64(cfg.seed ^ 0x1EA2));
        let mut replay = SegmentedReplay::new(&cfg.opponents, cfg.replay.segment_capacity);
        replay.alpha = cfg.replay.priority_exponent;
        replay.beta = cfg.replay.is_exponent;
        replay.min_priority = cfg.replay.min_priority;
        Ok(Trainer {
            rules: Rules::default(),
            dir,
            learner,
            replay,
            metrics,
            windows: WinWindows::default(),
            episodes: 0,
            stale_episodes: 0,
            version: 1,
            curve: Vec::new(),
            start: Instant::now(),
            deterministic: cfg.mode == RunMode::Deterministic,
            last_stats: None,
            cfg,
        })
    }

    fn wall(&self) -> Option<f64> {
        (!self.deterministic).then(|| self.start.elapsed().as_secs_f64())
    }

    fn actor_config(&self, i: usize) -> ActorConfig {
        let (eps_base, eps_alpha) = self.cfg.effective_exploration();
        ActorConfig {
            index: i,
            count: self.cfg.actors,
            eps_base,
            eps_alpha,
            opponent: self.cfg.opponent_of(i),
            evaluation: false,
        }
    }

    fn stop_reason(&self) -> Option<&'static str> {
        let b = &self.cfg.budget;
        if b.train_steps.is_some_and(|n| self.learner.train_steps >= n) {
            return Some("train_step_budget");
        }
        if b.episodes.is_some_and(|n| self.episodes >= n) {
            return Some("episode_budget");
        }
        if b.wall_seconds.is_some_and(|s| self.start.elapsed().as_secs_f64() >= s) {
            return Some("wall_clock_budget");
        }
        None
    }

    fn ingest(&mut self, rec: EpisodeRecord) -> Result<(), RunError> {
        if rec.rules_version != RULES_VERSION {
            return Err(ActorError::RulesMismatch {
                expected: RULES_VERSION.into(),
                found: rec.rules_version,
            }
            .into());
        }
        if rec.snapshot_version + 1 < self.version {
            self.stale_episodes += 1;
        }
        self.windows.record(rec.opponent.name(), rec.win());
        let k = self
            .replay
            .segment_of(rec.opponent)
            .ok_or_else(|| RunError::Crash(format!("episode against unconfigured opponent {}", rec.opponent)))?;
        self.replay
            .append_at_max(k, rec.sequences)
            .map_err(|e| RunError::Crash(e.to_string()))?;
        self.episodes += 1;
        Ok(())
    }

    fn ready_to_learn(&self) -> bool {
        self.replay.len() >= self.cfg.learn_start
    }

    fn train_once(&mut self) -> Result<(), RunError> {
        let stats = self.learner.train_step(&mut self.replay)?;
        self.version += 1;
        let step = stats.step;
        self.last_stats = Some(stats);
        if step % self.cfg.metrics_interval == 0 {
            self.emit_train()?;
        }
        if self.cfg.eval.interval_steps > 0 && step % self.cfg.eval.interval_steps == 0 {
            let p = self.evaluate(self.cfg.eval.games)?;
            self.curve.push(p);
        }
        if step % self.cfg.checkpoint_interval == 0 {
            self.checkpoint(&format!("step-{step:09}.ckpt"))?;
        }
        Ok(())
    }

    fn emit_train(&mut self) -> Result<(), RunError> {
        let Some(s) = self.last_stats.clone() else { return Ok(()) };
        let event = MetricsEvent::Train {
            step: s.step,
            episodes: self.episodes,
            wall_seconds: self.wall(),
            loss: s.loss,
            grad_norm: s.grad_norm,
            mean_abs_td: s.mean_abs_td,
            snapshot_version: self.version,
            stale_episodes: self.stale_episodes,
            train_win_rate: self.windows.rates(),
            replay: self.replay.stats(),
        };
        self.metrics.emit(&event)?;
        Ok(())
    }

    fn evaluate(&mut self, games: u32) -> Result<EvalPoint, RunError> {
        let table = evaluate_params(&self.rules, &self.learner.online, &self.cfg.opponents, games)?;
        let point = EvalPoint {
            step: self.learner.train_steps,
            episodes: self.episodes,
            mean_win_rate: mean_rate(&table),
            win_rate: table,
        };
        self.metrics.emit(&MetricsEvent::Eval {
            step: point.step,
            episodes: point.episodes,
            wall_seconds: self.wall(),
            win_rate: point.win_rate.clone(),
            mean_win_rate: point.mean_win_rate,
        })?;
        Ok(point)
    }

    fn checkpoint(&mut self, name: &str) -> Result<PathBuf, RunError> {
        let path = self.dir.join("checkpoints").join(name);
        let ckpt = Checkpoint {
            header: CheckpointHeader {
                rules_version: RULES_VERSION.into(),
                feature_layout_version: FEATURE_LAYOUT_VERSION.into(),
                config_hash: format!("{:016x}", self.cfg.hash()),
                config: serde_json::to_value(self.cfg.identity()).expect("config serializes"),
                train_steps: self.learner.train_steps,
                target_syncs: self.learner.syncs,
                episodes: self.episodes,
                snapshot_version: self.version,
            },
            online: self.learner.online.clone(),
            target: self.learner.target.clone(),
            opt: self.learner.opt.clone(),
        };
        ckpt.save(&path)?;
        self.metrics.emit(&MetricsEvent::Checkpoint {
            step: self.learner.train_steps,
            episodes: self.episodes,
            path: format!("checkpoints/{name}"),
        })?;
        Ok(path)
    }

    /// Final sweep, checkpoint and report. A run that did no work leaves
    /// only the config echo and an empty metrics stream.
    fn finish(mut self, reason: &str) -> Result<RunReport, RunError> {
        let mut final_eval = None;
        if self.episodes > 0 {
            if self.cfg.eval.final_games > 0 {
                final_eval = Some(self.evaluate(self.cfg.eval.final_games)?);
            }
            self.checkpoint("final.ckpt")?;
            self.metrics.emit(&MetricsEvent::End {
                step: self.learner.train_steps,
                episodes: self.episodes,
                wall_seconds: self.wall(),
                reason: reason.to_string(),
            })?;
        }
        let report = RunReport {
            output_dir: self.dir.clone(),
            train_steps: self.learner.train_steps,
            episodes: self.episodes,
            stop_reason: reason.to_string(),
            curve: self.curve,
            final_eval,
        };
        std::fs::write(
            self.dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        Ok(report)
    }
}

/// Train according to `cfg.mode`.
pub fn train(cfg: &RunConfig) -> Result<RunReport, RunError> {
    match cfg.mode {
        RunMode::Deterministic => train_deterministic(cfg),
        RunMode::Concurrent => train_concurrent(cfg),
    }
}

/// One thread: every actor plays one episode in index order, then the
/// learner takes `train_steps_per_round` steps; repeat until a budget runs
/// out. Actors always play the latest parameters.
pub fn train_deterministic(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let mut cfg = cfg.clone();
    cfg.mode = RunMode::Deterministic;
    let mut t = Trainer::new(cfg)?;
    let actors: Vec<ActorConfig> = (0..t.cfg.actors).map(|i| t.actor_config(i)).collect();
    let reward = t.cfg.effective_learner();
    let mut round = 0u64;
    let reason = 'run: loop {
        for a in &actors {
            if let Some(r) = t.stop_reason() {
                break 'run r;
            }
            let seed = episode_seed(t.cfg.seed, a.index, round);
            let rec = run_episode(&t.rules, &t.learner.online, a, &reward, seed, t.version)?;
            t.ingest(rec)?;
        }
        round += 1;
        if t.ready_to_learn() {
            for _ in 0..t.cfg.train_steps_per_round {
                if let Some(r) = t.stop_reason() {
                    break 'run r;
                }
                t.train_once()?;
            }
        }
    };
    t.finish(reason)
}

enum ActorMsg {
    Episode(Vec<u8>),
    Failed(String),
}

/// Actor threads feed encoded episodes through a channel; the calling
/// thread is the learner. Actors pause while `queue_high_water` episodes
/// are waiting.
pub fn train_concurrent(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let mut cfg = cfg.clone();
    cfg.mode = RunMode::Concurrent;
    let mut t = Trainer::new(cfg)?;
    let snapshots = Arc::new(SnapshotChannel::new());
    snapshots.publish(t.learner.online.clone());
    let queued = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<ActorMsg>();
    let reward = t.cfg.effective_learner();

    let mut handles = Vec::new();
    for i in 0..t.cfg.actors {
        let a = t.actor_config(i);
        let (snapshots, queued, stop, tx) = (snapshots.clone(), queued.clone(), stop.clone(), tx.clone());
        let (rules, reward, run_seed, hwm) = (t.rules.clone(), reward.clone(), t.cfg.seed, t.cfg.queue_high_water);
        handles.push(std::thread::spawn(move || {
            let mut k = 0u64;
            while !stop.load(Ordering::Relaxed) {
                if queued.load(Ordering::Acquire) >= hwm {
                    std::thread::sleep(Duration::from_millis(1));
                    continue;
                }
                let snap = snapshots.pull_params();
                let msg = match run_episode(&rules, &snap.params, &a, &reward, episode_seed(run_seed, i, k), snap.version) {
                    Ok(rec) => ActorMsg::Episode(rec.to_bytes()),
                    Err(e) => ActorMsg::Failed(e.to_string()),
                };
                k += 1;
                queued.fetch_add(1, Ordering::AcqRel);
                if tx.send(msg).is_err() {
                    break;
                }
            }
        }));
    }
    drop(tx);

    let result = (|| -> Result<&'static str, RunError> {
        loop {
            if let Some(r) = t.stop_reason() {
                return Ok(r);
            }
            let first = if t.ready_to_learn() {
                rx.try_recv().ok()
            } else {
                rx.recv_timeout(Duration::from_millis(20)).ok()
            };
            for msg in first.into_iter().chain(std::iter::from_fn(|| rx.try_recv().ok())) {
                queued.fetch_sub(1, Ordering::AcqRel);
                match msg {
                    ActorMsg::Episode(bytes) => {
                        if t.cfg.budget.episodes.is_some_and(|n| t.episodes >= n) {
                            continue;
                        }
                        let (rec, _) = EpisodeRecord::from_bytes(&bytes)?;
                        t.ingest(rec)?;
                    }
                    ActorMsg::Failed(e) => return Err(RunError::Crash(e)),
                }
            }
            if t.ready_to_learn() && t.stop_reason().is_none() {
                t.train_once()?;
                snapshots.publish(t.learner.online.clone());
            }
        }
    })();

    stop.store(true, Ordering::Relaxed);
    drop(rx);
    let mut crashed = None;
    for h in handles {
        if h.join().is_err() {
            crashed = Some(RunError::Crash("actor thread panicked".into()));
        }
    }
    let reason = result?;
    if let Some(e) = crashed {
        return Err(e);
    }
    t.finish(reason)
}

/// Greedy evaluation of a saved checkpoint.
pub fn evaluate_checkpoint(
    path: &Path,
    opponents: &[ScriptedPolicy],
    games: u32,
) -> Result<BTreeMap<String, WinRate>, RunError> {
    let ckpt = Checkpoint::load(path)?;
    Ok(evaluate_params(&Rules::default(), &ckpt.online, opponents, games)?)
}

/// Paired baseline and variant runs with shared seeds and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variant: String,
    pub baseline: RunReport,
    pub ablated: RunReport,
}

pub fn ablate(cfg: &RunConfig, variant: Variant) -> Result<AblationReport, RunError> {
    cfg.validate()?;
    let root = cfg.output_dir.join(format!("ablate-{}", variant.name()));
    let mut base = cfg.clone();
    base.output_dir = root.join("baseline");
    let mut var = cfg.with_variant(variant);
    var.output_dir = root.join("variant");
    let report = AblationReport {
        variant: variant.name().to_string(),
        baseline: train(&base)?,
        ablated: train(&var)?,
    };
    let dir = super::config::resolve_output(&root);
    std::fs::write(
        dir.join("ablation.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}
