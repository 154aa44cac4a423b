//! Actors: ε-greedy play with the recurrent network, sequence building and
//! the parameter snapshot channel.

use std::sync::{Arc, Condvar, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{encode, update_history, FeatureVector, HistoryFeatures, D};
use crate::learner::{legal_argmax, LearnerConfig};
use crate::net::{HiddenState, QNetParams, StepCache, M};
use crate::replay::{StoredSequence, SEQ_LEN, SEQ_STRIDE};
use crate::sim::{legal_actions, mix64, ActionSet, Duel, MacroAction, Rules, ScriptedPolicy, SimError, Winner, RULES_VERSION};

#[derive(Debug, Error, PartialEq)]
pub enum ActorError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("malformed episode record: {0}")]
    Decode(String),
    #[error("episode record is for rules {found:?}, expected {expected:?}")]
    RulesMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorConfig {
    pub index: usize,
    pub count: usize,
    pub eps_base: f64,
    pub eps_alpha: f64,
    pub opponent: ScriptedPolicy,
    /// Forces ε = 0.
    pub evaluation: bool,
}

impl ActorConfig {
    pub fn epsilon(&self) -> f64 {
        if self.evaluation {
            0.0
        } else {
            epsilon_for(self.index, self.count, self.eps_base, self.eps_alpha)
        }
    }
}

/// `ε^(1 + α·i/(N-1))`; a lone actor uses `ε` itself.
pub fn epsilon_for(i: usize, n: usize, eps_base: f64, alpha: f64) -> f64 {
    assert!(i < n.max(1), "actor index {i} out of range for {n} actors");
    if n <= 1 {
        return eps_base;
    }
    eps_base.powf(1.0 + (i as f64 / (n - 1) as f64) * alpha)
}

/// Advance `hidden` by one step and pick an action: uniform over `legal`
/// with probability `eps`, otherwise the best legal action.
pub fn act<R: Rng>(
    params: &QNetParams,
    x: &FeatureVector,
    hidden: &mut HiddenState,
    scratch: &mut StepCache,
    eps: f64,
    legal: ActionSet,
    rng: &mut R,
) -> MacroAction {
    assert!(!legal.is_empty(), "legal action set is empty");
    let q = params.step(x, hidden, scratch);
    choose(&q, eps, legal, rng)
}

/// The ε-greedy choice on precomputed Q-values. The exploration draw is
/// consumed only when `eps > 0`, so greedy play leaves `rng` untouched.
pub fn choose<R: Rng>(q: &[f64], eps: f64, legal: ActionSet, rng: &mut R) -> MacroAction {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        let k = rng.gen_range(0..legal.len());
        return legal.iter().nth(k).expect("index below len");
    }
    MacroAction::from_index(legal_argmax(q, legal)).expect("argmax in range")
}

/// One finished game as shipped to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub rules_version: String,
    pub actor_index: u32,
    pub opponent: ScriptedPolicy,
    pub seed: u64,
    pub snapshot_version: u64,
    pub ticks: u32,
    pub winner: Option<Winner>,
    pub score_agent: f64,
    pub score_opponent: f64,
    pub terminal_reward: f64,
    pub illegal_actions: u32,
    pub sequences: Vec<StoredSequence>,
}

impl EpisodeRecord {
    pub fn win(&self) -> bool {
        self.winner == Some(Winner::Agent)
    }
}

/// Start indices and valid lengths of the stored windows for an episode of
/// `ticks` decisions.
pub fn tiling(ticks: usize) -> Vec<(usize, usize)> {
    (0..ticks)
        .step_by(SEQ_STRIDE)
        .map(|start| (start, SEQ_LEN.min(ticks - start)))
        .collect()
}

/// Play one full episode and cut it into stored sequences. The episode
/// seed drives the environment, the opponent script and exploration.
pub fn run_episode(
    rules: &Rules,
    params: &QNetParams,
    cfg: &ActorConfig,
    reward: &LearnerConfig,
    seed: u64,
    snapshot_version: u64,
) -> Result<EpisodeRecord, ActorError> {
    let mut duel = Duel::with_rules(rules.clone(), seed, cfg.opponent);
    let mut obs = duel.reset(seed, cfg.opponent);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0xAC70_0000_0000_0000));
    let eps = cfg.epsilon();

    let mut history = HistoryFeatures::default();
    let mut hidden = HiddenState::default();
    let mut scratch = StepCache::default();
    let mut features = Vec::new();
    let mut actions = Vec::new();
    let mut legal_sets = Vec::new();
    let mut boundaries = Vec::new();
    let mut illegal = 0u32;
    let last = loop {
        if features.len() % SEQ_STRIDE == 0 {
            boundaries.push(hidden.clone());
        }
        history = update_history(&history, &obs);
        let x = encode(&obs, &history);
        let legal = legal_actions(&obs);
        let a = act(params, &x, &mut hidden, &mut scratch, eps, legal, &mut rng);
        let res = duel.step(a)?;
        illegal += res.illegal as u32;
        features.push(x);
        actions.push(a);
        legal_sets.push(legal);
        obs = res.obs;
        if res.terminal {
            break res;
        }
    };

    let ticks = features.len();
    let r = reward.terminal_reward(last.score_agent, last.score_opponent, ticks as u32);
    let sequences = tiling(ticks)
        .into_iter()
        .zip(boundaries)
        .map(|((start, len), boundary)| {
            let mut f = features[start..start + len].to_vec();
            f.resize(SEQ_LEN, [0.0; D]);
            let mut a = actions[start..start + len].to_vec();
            a.resize(SEQ_LEN, MacroAction::Wait);
            let mut l = legal_sets[start..start + len].to_vec();
            l.resize(SEQ_LEN, ActionSet::empty());
            StoredSequence {
                opponent: cfg.opponent,
                features: f,
                actions: a,
                legal: l,
                valid_len: len,
                boundary,
                terminal_reward: (start + len == ticks).then_some(r),
                episode_id: seed,
                start_tick: start as u32,
            }
        })
        .collect();

    Ok(EpisodeRecord {
        rules_version: RULES_VERSION.to_string(),
        actor_index: cfg.index as u32,
        opponent: cfg.opponent,
        seed,
        snapshot_version,
        ticks: ticks as u32,
        winner: last.winner,
        score_agent: last.score_agent,
        score_opponent: last.score_opponent,
        terminal_reward: r,
        illegal_actions: illegal,
        sequences,
    })
}

/// Versioned parameter snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub params: Arc<QNetParams>,
}

/// Single-writer, many-reader parameter publication.
#[derive(Debug, Default)]
pub struct SnapshotChannel {
    latest: Mutex<Option<Snapshot>>,
    published: Condvar,
}

impl SnapshotChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Publish a new snapshot and return its version (1 for the first).
    pub fn publish(&self, params: QNetParams) -> u64 {
        let mut guard = self.latest.lock().expect("snapshot lock poisoned");
        let version = guard.as_ref().map_or(1, |s| s.version + 1);
        *guard = Some(Snapshot {
            version,
            params: Arc::new(params),
        });
        self.published.notify_all();
        version
    }

    /// Latest snapshot; blocks until the first publication.
    pub fn pull_params(&self) -> Snapshot {
        let mut guard = self.latest.lock().expect("snapshot lock poisoned");
        loop {
            if let Some(s) = guard.as_ref() {
                return s.clone();
            }
            guard = self.published.wait(guard).expect("snapshot lock poisoned");
        }
    }

    pub fn try_pull(&self) -> Option<Snapshot> {
        self.latest.lock().expect("snapshot lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        self.try_pull().map_or(0, |s| s.version)
    }
}

/// Wire format of an [`EpisodeRecord`], all integers little-endian:
///
/// ```text
/// "FDEP" | u16 format version | u32 body length | body
/// body:
///   u8 n, n bytes rules version
///   u32 actor index | u8 opponent | u64 seed | u64 snapshot version
///   u32 ticks | u8 winner (0 none, 1 agent, 2 opponent)
///   f64 agent score | f64 opponent score | f64 terminal reward
///   u32 illegal actions | u32 sequence count
///   per sequence:
///     u32 start tick | u8 valid length | u8 has terminal | f64 terminal reward
///     f64[64] h | f64[64] c
///     per valid step: f64[24] features | u8 action | u16 legal mask
/// ```
pub const RECORD_MAGIC: &[u8; 4] = b"FDEP";
pub const RECORD_FORMAT: u16 = 1;

fn opponent_code(p: ScriptedPolicy) -> u8 {
    ScriptedPolicy::ALL.iter().position(|&o| o == p).expect("listed") as u8
}

impl EpisodeRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        let rules = self.rules_version.as_bytes();
        b.push(rules.len() as u8);
        b.extend_from_slice(rules);
        b.extend_from_slice(&self.actor_index.to_le_bytes());
        b.push(opponent_code(self.opponent));
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.snapshot_version.to_le_bytes());
        b.extend_from_slice(&self.ticks.to_le_bytes());
        b.push(match self.winner {
            None => 0,
            Some(Winner::Agent) => 1,
            Some(Winner::Opponent) => 2,
        });
        for v in [self.score_agent, self.score_opponent, self.terminal_reward] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.illegal_actions.to_le_bytes());
        b.extend_from_slice(&(self.sequences.len() as u32).to_le_bytes());
        for s in &self.sequences {
            b.extend_from_slice(&s.start_tick.to_le_bytes());
            b.push(s.valid_len as u8);
            b.push(s.terminal_reward.is_some() as u8);
            b.extend_from_slice(&s.terminal_reward.unwrap_or(0.0).to_le_bytes());
            for v in s.boundary.h.iter().chain(&s.boundary.c) {
                b.extend_from_slice(&v.to_le_bytes());
            }
            for t in 0..s.valid_len {
                for v in &s.features[t] {
                    b.extend_from_slice(&v.to_le_bytes());
                }
                b.push(s.actions[t].index() as u8);
                b.extend_from_slice(&s.legal[t].bits().to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(b.len() + 10);
        out.extend_from_slice(RECORD_MAGIC);
        out.extend_from_slice(&RECORD_FORMAT.to_le_bytes());
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        out.extend_from_slice(&b);
        out
    }

    /// Decode one record; returns it with the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), ActorError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != RECORD_MAGIC {
            return Err(ActorError::Decode("bad magic".into()));
        }
        let format = r.u16()?;
        if format != RECORD_FORMAT {
            return Err(ActorError::Decode(format!("unsupported format {format}")));
        }
        let body_len = r.u32()? as usize;
        let end = r.pos + body_len;
        if end > bytes.len() {
            return Err(ActorError::Decode(format!("truncated: need {end} bytes, have {}", bytes.len())));
        }
        let n = r.u8()? as usize;
        let rules_version = String::from_utf8(r.take(n)?.to_vec()).map_err(|e| ActorError::Decode(e.to_string()))?;
        if rules_version != RULES_VERSION {
            return Err(ActorError::RulesMismatch {
                expected: RULES_VERSION.into(),
                found: rules_version,
            });
        }
        let actor_index = r.u32()?;
        let opponent = r.opponent()?;
        let seed = r.u64()?;
        let snapshot_version = r.u64()?;
        let ticks = r.u32()?;
        let winner = match r.u8()? {
            0 => None,
            1 => Some(Winner::Agent),
            2 => Some(Winner::Opponent),
            w => return Err(ActorError::Decode(format!("bad winner code {w}"))),
        };
        let score_agent = r.f64()?;
        let score_opponent = r.f64()?;
        let terminal_reward = r.f64()?;
        let illegal_actions = r.u32()?;
        let count = r.u32()? as usize;
        let mut sequences = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let start_tick = r.u32()?;
            let valid_len = r.u8()? as usize;
            if valid_len == 0 || valid_len > SEQ_LEN {
                return Err(ActorError::Decode(format!("bad valid length {valid_len}")));
            }
            let has_terminal = r.u8()? != 0;
            let reward = r.f64()?;
            let mut boundary = HiddenState::default();
            for i in 0..2 * M {
                let v = r.f64()?;
                if i < M {
                    boundary.h[i] = v;
                } else {
                    boundary.c[i - M] = v;
                }
            }
            let mut features = vec![[0.0; D]; SEQ_LEN];
            let mut actions = vec![MacroAction::Wait; SEQ_LEN];
            let mut legal = vec![ActionSet::empty(); SEQ_LEN];
            for t in 0..valid_len {
                for v in features[t].iter_mut() {
                    *v = r.f64()?;
                }
                let code = r.u8()?;
                actions[t] = MacroAction::from_index(code as usize)
                    .ok_or_else(|| ActorError::Decode(format!("bad action code {code}")))?;
                legal[t] = ActionSet::from_bits(r.u16()?);
            }
            sequences.push(StoredSequence {
                opponent,
                features,
                actions,
                legal,
                valid_len,
                boundary,
                terminal_reward: has_terminal.then_some(reward),
                episode_id: seed,
                start_tick,
            });
        }
        if r.pos != end {
            return Err(ActorError::Decode(format!("body length {body_len} but read {}", r.pos - 10)));
        }
        Ok((
            EpisodeRecord {
                rules_version,
                actor_index,
                opponent,
                seed,
                snapshot_version,
                ticks,
                winner,
                score_agent,
                score_opponent,
                terminal_reward,
                illegal_actions,
                sequences,
            },
            end,
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ActorError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| ActorError::Decode(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ActorError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ActorError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ActorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ActorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ActorError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn opponent(&mut self) -> Result<ScriptedPolicy, ActorError> {
        let code = self.u8()?;
        ScriptedPolicy::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| ActorError::Decode(format!("bad opponent code {code}")))
    }
}
