//! Per-opponent segmented prioritized replay.
//!
//! Each opponent owns one FIFO segment with its own sum tree. Sampling is
//! proportional to `priority^alpha` across all segments at once.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::features::FeatureVector;
use crate::net::HiddenState;
use crate::sim::{ActionSet, MacroAction, ScriptedPolicy};

/// Stored sequence length.
pub const SEQ_LEN: usize = 16;
/// Distance between consecutive sequence starts.
pub const SEQ_STRIDE: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("unknown opponent segment {0}")]
    UnknownSegment(usize),
    #[error("replay holds {have} sequences, batch needs {need}")]
    Insufficient { have: usize, need: usize },
    #[error("priority must be positive and finite, got {0}")]
    BadPriority(String),
}

/// Binary sum tree over a power-of-two number of leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity.is_power_of_two(), "sum tree capacity must be a power of two");
        SumTree {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    /// Set a leaf and recompute every ancestor from its children, so
    /// rounding error never accumulates across updates.
    pub fn set(&mut self, leaf: usize, value: f64) {
        assert!(leaf < self.capacity);
        let mut i = self.capacity + leaf;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for `0 <= mass < total`.
    /// Zero-weight leaves are never returned while the total is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            let right = self.nodes[2 * i + 1];
            if mass < left || right <= 0.0 {
                i *= 2;
            } else {
                mass -= left;
                i = 2 * i + 1;
            }
        }
        i - self.capacity
    }

    /// Largest deviation of any internal node from the sum of its children.
    pub fn audit(&self) -> f64 {
        (1..self.capacity)
            .map(|i| (self.nodes[i] - (self.nodes[2 * i] + self.nodes[2 * i + 1])).abs())
            .fold(0.0, f64::max)
    }
}

/// Fixed-length slice of an episode, the unit of replay.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSequence {
    pub opponent: ScriptedPolicy,
    /// Always `SEQ_LEN` long; entries past `valid_len` are zero.
    pub features: Vec<FeatureVector>,
    pub actions: Vec<MacroAction>,
    /// Legal action set at each step, used to restrict bootstrap argmax.
    pub legal: Vec<ActionSet>,
    pub valid_len: usize,
    /// Actor LSTM state before the first step of this sequence.
    pub boundary: HiddenState,
    /// Shaped terminal reward, present iff the episode ends inside this
    /// sequence (at step `valid_len - 1`).
    pub terminal_reward: Option<f64>,
    pub episode_id: u64,
    pub start_tick: u32,
}

impl StoredSequence {
    pub fn is_terminal(&self) -> bool {
        self.terminal_reward.is_some()
    }
}

/// Reference to one stored slot, handed out by [`SegmentedReplay::sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRef {
    pub segment: usize,
    pub index: usize,
    /// Insertion serial of the item when sampled; a mismatch later means
    /// the slot was overwritten.
    pub serial: u64,
}

#[derive(Debug, Clone)]
pub struct Segment {
    capacity: usize,
    slots: Vec<Option<(u64, StoredSequence)>>,
    tree: SumTree,
    next: usize,
    len: usize,
    inserted: u64,
    evicted: u64,
}

impl Segment {
    fn new(capacity: usize) -> Self {
        let tree_cap = capacity.next_power_of_two();
        Segment {
            capacity,
            slots: vec![None; capacity],
            tree: SumTree::new(tree_cap),
            next: 0,
            len: 0,
            inserted: 0,
            evicted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Stored items from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &StoredSequence> {
        let start = if self.len < self.capacity { 0 } else { self.next };
        (0..self.len).filter_map(move |k| {
            self.slots[(start + k) % self.capacity]
                .as_ref()
                .map(|(_, s)| s)
        })
    }

    fn push(&mut self, seq: StoredSequence, weight: f64) -> bool {
        let evict = self.len == self.capacity;
        if evict {
            self.evicted += 1;
        } else {
            self.len += 1;
        }
        self.slots[self.next] = Some((self.inserted, seq));
        self.tree.set(self.next, weight);
        self.inserted += 1;
        self.next = (self.next + 1) % self.capacity;
        evict
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SegmentStats {
    pub opponent: String,
    pub size: usize,
    pub total_priority: f64,
    pub max_priority: f64,
    pub evicted: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReplayStats {
    pub segments: Vec<SegmentStats>,
    pub total_size: usize,
    pub stale_updates: u64,
}

/// One sampled item.
#[derive(Debug, Clone)]
pub struct SampledItem<'a> {
    pub slot: SlotRef,
    pub sequence: &'a StoredSequence,
    pub probability: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SegmentedReplay {
    opponents: Vec<ScriptedPolicy>,
    segments: Vec<Segment>,
    pub alpha: f64,
    pub beta: f64,
    pub min_priority: f64,
    stale_updates: u64,
}

pub const PRIORITY_EXPONENT: f64 = 0.6;
pub const IS_EXPONENT: f64 = 0.4;
pub const MIN_PRIORITY: f64 = 1e-3;
pub const SEGMENT_CAPACITY: usize = 4096;

impl SegmentedReplay {
    pub fn new(opponents: &[ScriptedPolicy], capacity: usize) -> Self {
        assert!(capacity > 0);
        SegmentedReplay {
            opponents: opponents.to_vec(),
            segments: opponents.iter().map(|_| Segment::new(capacity)).collect(),
            alpha: PRIORITY_EXPONENT,
            beta: IS_EXPONENT,
            min_priority: MIN_PRIORITY,
            stale_updates: 0,
        }
    }

    pub fn opponents(&self) -> &[ScriptedPolicy] {
        &self.opponents
    }

    pub fn segment_of(&self, opponent: ScriptedPolicy) -> Option<usize> {
        self.opponents.iter().position(|o| *o == opponent)
    }

    pub fn segment(&self, k: usize) -> &Segment {
        &self.segments[k]
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> f64 {
        self.segments.iter().map(|s| s.tree.total()).sum()
    }

    /// Largest raw priority currently stored in segment `k`, or 1.0 if empty.
    pub fn max_priority(&self, k: usize) -> f64 {
        let seg = &self.segments[k];
        if seg.len == 0 {
            return 1.0;
        }
        let max_w = (0..seg.capacity)
            .filter(|i| seg.slots[*i].is_some())
            .map(|i| seg.tree.get(i))
            .fold(0.0, f64::max);
        max_w.powf(1.0 / self.alpha)
    }

    /// Insert into segment `k` in FIFO order. Returns how many old items
    /// were evicted.
    pub fn append(&mut self, k: usize, items: Vec<(StoredSequence, f64)>) -> Result<usize, ReplayError> {
        if k >= self.segments.len() {
            return Err(ReplayError::UnknownSegment(k));
        }
        if let Some((_, p)) = items.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(ReplayError::BadPriority(p.to_string()));
        }
        let alpha = self.alpha;
        let seg = &mut self.segments[k];
        Ok(items
            .into_iter()
            .filter(|(s, p)| seg.push(s.clone(), p.powf(alpha)))
            .count())
    }

    /// Insert new data at the segment's current max priority.
    pub fn append_at_max(&mut self, k: usize, items: Vec<StoredSequence>) -> Result<usize, ReplayError> {
        if k >= self.segments.len() {
            return Err(ReplayError::UnknownSegment(k));
        }
        let p = self.max_priority(k);
        self.append(k, items.into_iter().map(|s| (s, p)).collect())
    }

    fn min_weight(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|seg| (0..seg.capacity).filter(|i| seg.slots[*i].is_some()).map(|i| seg.tree.get(i)))
            .fold(f64::INFINITY, f64::min)
    }

    fn locate(&self, totals: &[f64], mut mass: f64) -> (usize, usize) {
        let mut last_nonempty = 0;
        for (k, t) in totals.iter().enumerate() {
            if *t <= 0.0 {
                continue;
            }
            last_nonempty = k;
            if mass < *t {
                return (k, self.segments[k].tree.find(mass));
            }
            mass -= t;
        }
        // Rounding pushed `mass` past the end: take the last item.
        let seg = &self.segments[last_nonempty];
        (last_nonempty, seg.tree.find(seg.tree.total() * (1.0 - 1e-12)))
    }

    /// Stratified proportional sample of `batch` items across all segments.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<SampledItem<'_>>, ReplayError> {
        let have = self.len();
        if have < batch || batch == 0 {
            return Err(ReplayError::Insufficient { have, need: batch.max(1) });
        }
        let totals: Vec<f64> = self.segments.iter().map(|s| s.tree.total()).collect();
        let total: f64 = totals.iter().sum();
        let n = have as f64;
        let max_weight = (n * self.min_weight() / total).powf(-self.beta);
        let stratum = total / batch as f64;
        let mut out = Vec::with_capacity(batch);
        for j in 0..batch {
            let u: f64 = rng.gen();
            let mass = ((j as f64 + u) * stratum).min(total * (1.0 - 1e-15));
            let (k, i) = self.locate(&totals, mass);
            let seg = &self.segments[k];
            let (serial, sequence) = seg.slots[i].as_ref().expect("positive weight implies occupied slot");
            let probability = seg.tree.get(i) / total;
            let weight = ((n * probability).powf(-self.beta) / max_weight).min(1.0);
            out.push(SampledItem {
                slot: SlotRef {
                    segment: k,
                    index: i,
                    serial: *serial,
                },
                sequence,
                probability,
                weight,
            });
        }
        Ok(out)
    }

    /// Set priorities to `|td| + min_priority`. Refs whose slot has been
    /// overwritten since sampling are skipped and counted.
    pub fn update_priorities(&mut self, updates: &[(SlotRef, f64)]) {
        for (slot, td) in updates {
            let Some(seg) = self.segments.get_mut(slot.segment) else {
                self.stale_updates += 1;
                continue;
            };
            match seg.slots.get(slot.index) {
                Some(Some((serial, _))) if *serial == slot.serial => {
                    let p = td.abs() + self.min_priority;
                    seg.tree.set(slot.index, p.powf(self.alpha));
                }
                _ => self.stale_updates += 1,
            }
        }
    }

    pub fn stats(&self) -> ReplayStats {
        let segments: Vec<SegmentStats> = self
            .segments
            .iter()
            .enumerate()
            .map(|(k, seg)| SegmentStats {
                opponent: self.opponents[k].name().to_string(),
                size: seg.len,
                total_priority: seg.tree.total(),
                max_priority: if seg.len == 0 { 0.0 } else { self.max_priority(k) },
                evicted: seg.evicted,
            })
            .collect();
        ReplayStats {
            total_size: segments.iter().map(|s| s.size).sum(),
            segments,
            stale_updates: self.stale_updates,
        }
    }

    /// Worst sum-tree inconsistency over all segments.
    pub fn audit(&self) -> f64 {
        self.segments.iter().map(|s| s.tree.audit()).fold(0.0, f64::max)
    }
}
