//! Terminal reward shaping, n-step double-Q targets and the optimizer loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{argmax, Gradients, QNetParams, QValues, A};
use crate::replay::{ReplayError, SegmentedReplay, SlotRef, StoredSequence};
use crate::sim::ActionSet;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("non-finite gradient or loss at train step {0}")]
    NonFinite(u64),
}

/// Which terminal reward the actors attach to episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Time-decayed normalized score difference.
    Shaped,
    /// Only the sign of the score difference.
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Per-step bootstrap discount.
    pub lambda: f64,
    /// Multi-step horizon.
    pub n_step: usize,
    /// Per-tick decay of the terminal reward.
    pub reward_decay: f64,
    pub reward_mode: RewardMode,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Train steps between target network syncs.
    pub target_period: u64,
    pub clip_norm: f64,
}

/// Desk-scale defaults: a faster target sync and a larger step size than
/// [`LearnerConfig::reference`], so short single-core runs learn.
impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            learning_rate: 1e-3,
            target_period: 250,
            ..Self::reference()
        }
    }
}

impl LearnerConfig {
    /// Values intended for long runs with hundreds of actors.
    pub fn reference() -> Self {
        LearnerConfig {
            lambda: 0.997,
            n_step: 3,
            reward_decay: 0.999,
            reward_mode: RewardMode::Shaped,
            batch_size: 32,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            target_period: 2000,
            clip_norm: 40.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            v.push(format!("learner.lambda must be in (0, 1), got {}", self.lambda));
        }
        if !(self.reward_decay > 0.0 && self.reward_decay <= 1.0) {
            v.push(format!("learner.reward_decay must be in (0, 1], got {}", self.reward_decay));
        }
        if self.n_step < 1 {
            v.push("learner.n_step must be at least 1".into());
        }
        if self.batch_size < 1 {
            v.push("learner.batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learner.learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.target_period < 1 {
            v.push("learner.target_period must be at least 1".into());
        }
        if !(self.clip_norm > 0.0) {
            v.push(format!("learner.clip_norm must be positive, got {}", self.clip_norm));
        }
        v
    }

    pub fn terminal_reward(&self, score_our: f64, score_enemy: f64, ticks: u32) -> f64 {
        match self.reward_mode {
            RewardMode::Shaped => shaped_terminal_reward(score_our, score_enemy, ticks, self.reward_decay),
            RewardMode::Sign => sign_terminal_reward(score_our, score_enemy),
        }
    }
}

/// `decay^ticks * (ours - theirs) / max(ours, theirs)`; zero when both
/// scores are zero.
pub fn shaped_terminal_reward(score_our: f64, score_enemy: f64, ticks: u32, decay: f64) -> f64 {
    assert!(
        score_our >= 0.0 && score_enemy >= 0.0,
        "scores must be non-negative: {score_our}, {score_enemy}"
    );
    let denom = score_our.max(score_enemy);
    if denom == 0.0 {
        return 0.0;
    }
    decay.powi(ticks as i32) * (score_our - score_enemy) / denom
}

/// Plain win/loss signal: +1, -1, or 0 on equal scores.
pub fn sign_terminal_reward(score_our: f64, score_enemy: f64) -> f64 {
    assert!(score_our >= 0.0 && score_enemy >= 0.0);
    if score_our > score_enemy {
        1.0
    } else if score_our < score_enemy {
        -1.0
    } else {
        0.0
    }
}

/// Index of the best legal action under `q`; ties go to the lowest index.
pub fn legal_argmax(q: &[f64], legal: ActionSet) -> usize {
    if legal.is_empty() {
        return argmax(q);
    }
    let mut best: Option<usize> = None;
    for a in legal.iter() {
        let i = a.index();
        if i < q.len() && best.is_none_or(|b| q[i] > q[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or_else(|| argmax(q))
}

/// n-step double-Q targets for one stored sequence.
///
/// `online_q` and `target_q` hold one row per valid step, any action count.
/// Step `t` gets:
/// * `lambda^(T-t) * r` if the sequence ends the episode at step `T =
///   len-1` and `T - t <= n`;
/// * `lambda^n * target_q[t+n][argmax_legal online_q[t+n]]` if `t + n`
///   is inside the sequence;
/// * `None` otherwise (no bootstrap across the sequence end).
pub fn n_step_targets<Q: AsRef<[f64]>>(
    online_q: &[Q],
    target_q: &[Q],
    legal: &[ActionSet],
    terminal_reward: Option<f64>,
    lambda: f64,
    n: usize,
) -> Vec<Option<f64>> {
    let len = online_q.len();
    assert_eq!(target_q.len(), len);
    assert_eq!(legal.len(), len);
    let last = len.saturating_sub(1);
    (0..len)
        .map(|t| {
            if let Some(r) = terminal_reward {
                if last - t <= n {
                    return Some(lambda.powi((last - t) as i32) * r);
                }
            }
            if t + n <= last {
                let a = legal_argmax(online_q[t + n].as_ref(), legal[t + n]);
                Some(lambda.powi(n as i32) * target_q[t + n].as_ref()[a])
            } else {
                None
            }
        })
        .collect()
}

/// Targets for a stored sequence using the two networks, each run from the
/// sequence's stored boundary state. Also returns the online Q rows.
pub fn sequence_targets(
    seq: &StoredSequence,
    online: &QNetParams,
    target: &QNetParams,
    lambda: f64,
    n: usize,
) -> (Vec<QValues>, Vec<Option<f64>>) {
    let feats = &seq.features[..seq.valid_len];
    let (q_online, _) = online.forward(feats, &seq.boundary);
    let (q_target, _) = target.forward(feats, &seq.boundary);
    let g = n_step_targets(&q_online, &q_target, &seq.legal[..seq.valid_len], seq.terminal_reward, lambda, n);
    (q_online, g)
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn apply(&mut self, params: &mut QNetParams, grads: &Gradients, cfg: &LearnerConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .data
            .iter_mut()
            .zip(&grads.data)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainStats {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub unmasked_steps: usize,
    pub mean_abs_td: f64,
    pub synced: bool,
}

/// Loss, gradients and per-sequence priorities for one batch, without
/// touching the parameters.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub loss: f64,
    pub grads: Gradients,
    pub priorities: Vec<f64>,
    pub unmasked_steps: usize,
    pub mean_abs_td: f64,
}

/// Evaluate the loss `mean over unmasked steps of w * (G - q)^2 / 2` on a
/// batch of `(sequence, importance weight)` pairs. Sequences are reduced in
/// the given order.
pub fn batch_loss(
    batch: &[(&StoredSequence, f64)],
    online: &QNetParams,
    target: &QNetParams,
    cfg: &LearnerConfig,
) -> BatchResult {
    struct Item {
        trace: crate::net::Trace,
        g: Vec<Option<f64>>,
    }
    let items: Vec<Item> = batch
        .iter()
        .map(|(seq, _)| {
            let feats = &seq.features[..seq.valid_len];
            let trace = online.forward_traced(feats, &seq.boundary);
            let (q_target, _) = target.forward(feats, &seq.boundary);
            let g = n_step_targets(
                &trace.q,
                &q_target,
                &seq.legal[..seq.valid_len],
                seq.terminal_reward,
                cfg.lambda,
                cfg.n_step,
            );
            Item { trace, g }
        })
        .collect();

    let unmasked: usize = items.iter().map(|it| it.g.iter().flatten().count()).sum();
    let scale = if unmasked == 0 { 0.0 } else { 1.0 / unmasked as f64 };
    let mut loss = 0.0;
    let mut abs_td = 0.0;
    let mut grads = Gradients::zeros();
    let mut priorities = Vec::with_capacity(batch.len());
    for ((seq, w), it) in batch.iter().zip(&items) {
        let mut dq: Vec<QValues> = vec![[0.0; A]; it.g.len()];
        let mut worst: f64 = 0.0;
        for (t, g) in it.g.iter().enumerate() {
            let Some(g) = g else { continue };
            let a = seq.actions[t].index();
            let delta = g - it.trace.q[t][a];
            loss += w * 0.5 * delta * delta * scale;
            dq[t][a] = -w * delta * scale;
            worst = worst.max(delta.abs());
            abs_td += delta.abs() * scale;
        }
        priorities.push(worst);
        it.trace.backward_into(online, &dq, &mut grads, crate::net::GradientFault::None);
    }
    BatchResult {
        loss,
        grads,
        priorities,
        unmasked_steps: unmasked,
        mean_abs_td: abs_td,
    }
}

/// Owns the online network, target network and optimizer.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub online: QNetParams,
    pub target: QNetParams,
    pub opt: OptimizerState,
    pub train_steps: u64,
    pub syncs: u64,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(config: LearnerConfig, params: QNetParams, seed: u64) -> Self {
        Learner {
            config,
            target: params.clone(),
            opt: OptimizerState::new(params.data.len()),
            online: params,
            train_steps: 0,
            syncs: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Restore from checkpointed parts. The sampling stream is reseeded.
    pub fn from_parts(
        config: LearnerConfig,
        online: QNetParams,
        target: QNetParams,
        opt: OptimizerState,
        train_steps: u64,
        syncs: u64,
        seed: u64,
    ) -> Self {
        Learner {
            config,
            online,
            target,
            opt,
            train_steps,
            syncs,
            rng: ChaCha8Rng::seed_from_u64(seed ^ train_steps),
        }
    }

    /// Copy the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.syncs += 1;
    }

    /// One prioritized minibatch update. Syncs the target network every
    /// `target_period` steps.
    pub fn train_step(&mut self, replay: &mut SegmentedReplay) -> Result<TrainStats, LearnerError> {
        let (result, slots) = {
            let sampled = replay.sample(self.config.batch_size, &mut self.rng)?;
            let batch: Vec<(&StoredSequence, f64)> = sampled.iter().map(|s| (s.sequence, s.weight)).collect();
            let slots: Vec<SlotRef> = sampled.iter().map(|s| s.slot).collect();
            (batch_loss(&batch, &self.online, &self.target, &self.config), slots)
        };
        let step = self.train_steps + 1;
        let mut grads = result.grads;
        let grad_norm = grads.clip_global_norm(self.config.clip_norm);
        if !(result.loss.is_finite() && grads.is_finite()) {
            return Err(LearnerError::NonFinite(step));
        }
        self.opt.apply(&mut self.online, &grads, &self.config);
        let updates: Vec<(SlotRef, f64)> = slots.into_iter().zip(result.priorities).collect();
        replay.update_priorities(&updates);
        self.train_steps = step;
        let synced = step % self.config.target_period == 0;
        if synced {
            self.sync_target();
        }
        Ok(TrainStats {
            step,
            loss: result.loss,
            grad_norm,
            unmasked_steps: result.unmasked_steps,
            mean_abs_td: result.mean_abs_td,
            synced,
        })
    }
}
