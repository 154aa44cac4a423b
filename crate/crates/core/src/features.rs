//! Observation + history -> fixed-length network input.

use serde::{Deserialize, Serialize};

use crate::sim::{ObservationFrame, PlayerState, Rules, T_MAX};

/// Feature vector length.
pub const D: usize = 24;

/// Layout version stored in checkpoints alongside the rules version.
pub const FEATURE_LAYOUT_VERSION: &str = "features-v1";

pub type FeatureVector = [f64; D];

const CAP_MINERALS: f64 = 500.0;
const CAP_WORKERS: f64 = 32.0;
const CAP_UNITS: f64 = 40.0;
const CAP_BASES: f64 = 4.0;
const CAP_DEFENSES: f64 = 10.0;
const CAP_TECH: f64 = 2.0;
const CAP_INCOME: f64 = 32.0;
const STALENESS_HORIZON: f64 = 50.0;

/// Enemy aspects whose sighting is remembered for the rest of the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aspect {
    UnitA = 0,
    UnitB = 1,
    UnitC = 2,
    Defenses = 3,
    Expanded = 4,
    Teched = 5,
}

/// Accumulated enemy information that survives the fog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct HistoryFeatures {
    pub last_seen: PlayerState,
    pub last_seen_tick: Option<u32>,
    pub ever_seen: [bool; 6],
}

impl HistoryFeatures {
    pub fn seen(&self, aspect: Aspect) -> bool {
        self.ever_seen[aspect as usize]
    }
}

pub fn update_history(h: &HistoryFeatures, obs: &ObservationFrame) -> HistoryFeatures {
    if !obs.enemy_visible {
        return *h;
    }
    debug_assert!(h.last_seen_tick.is_none_or(|t| t <= obs.tick));
    let e = &obs.enemy;
    let evidence = [
        e.army[0] > 0,
        e.army[1] > 0,
        e.army[2] > 0,
        e.defenses > 0,
        e.bases > 1,
        e.tech > 0,
    ];
    let mut ever_seen = h.ever_seen;
    for (flag, now) in ever_seen.iter_mut().zip(evidence) {
        *flag |= now;
    }
    HistoryFeatures {
        last_seen: *e,
        last_seen_tick: Some(obs.tick),
        ever_seen,
    }
}

fn norm(v: f64, cap: f64) -> f64 {
    (v / cap).clamp(0.0, 1.0)
}

fn player_block(p: &PlayerState, out: &mut [f64]) {
    let income = p.income(&Rules::default()) as f64;
    out[0] = norm(p.minerals as f64, CAP_MINERALS);
    out[1] = norm(p.workers as f64, CAP_WORKERS);
    out[2] = norm(p.army[0] as f64, CAP_UNITS);
    out[3] = norm(p.army[1] as f64, CAP_UNITS);
    out[4] = norm(p.army[2] as f64, CAP_UNITS);
    out[5] = norm(p.bases as f64, CAP_BASES);
    out[6] = norm(p.defenses as f64, CAP_DEFENSES);
    out[7] = norm(p.tech as f64, CAP_TECH);
    out[8] = norm(income, CAP_INCOME);
}

/// Build the network input. Layout:
///
/// | index | meaning |
/// |-------|---------|
/// | 0..9  | own minerals, workers, A, B, C, bases, defenses, tech, income |
/// | 9     | tick / T_MAX |
/// | 10    | enemy currently visible |
/// | 11..20| last-seen enemy block, same order as own block |
/// | 20    | staleness of last sighting, saturating at 50 ticks |
/// | 21    | ever seen enemy A units |
/// | 22    | ever seen enemy tech (B or C units, or tech > 0) |
/// | 23    | ever seen enemy static build-up (defenses or a second base) |
pub fn encode(obs: &ObservationFrame, h: &HistoryFeatures) -> FeatureVector {
    let mut f = [0.0; D];
    player_block(&obs.own, &mut f[0..9]);
    f[9] = norm(obs.tick as f64, T_MAX as f64);
    f[10] = if obs.enemy_visible { 1.0 } else { 0.0 };
    player_block(&h.last_seen, &mut f[11..20]);
    f[20] = match h.last_seen_tick {
        Some(t) => norm(obs.tick.saturating_sub(t) as f64, STALENESS_HORIZON),
        None => 1.0,
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    f[21] = flag(h.seen(Aspect::UnitA));
    f[22] = flag(h.seen(Aspect::UnitB) || h.seen(Aspect::UnitC) || h.seen(Aspect::Teched));
    f[23] = flag(h.seen(Aspect::Defenses) || h.seen(Aspect::Expanded));
    f
}

/// Markdown table documenting the layout, written next to run outputs.
pub fn layout_markdown() -> String {
    let names = [
        "own minerals / 500",
        "own workers / 32",
        "own A units / 40",
        "own B units / 40",
        "own C units / 40",
        "own bases / 4",
        "own defenses / 10",
        "own tech / 2",
        "own income / 32",
        "tick / 200",
        "enemy visible now (0/1)",
        "last-seen enemy minerals / 500",
        "last-seen enemy workers / 32",
        "last-seen enemy A units / 40",
        "last-seen enemy B units / 40",
        "last-seen enemy C units / 40",
        "last-seen enemy bases / 4",
        "last-seen enemy defenses / 10",
        "last-seen enemy tech / 2",
        "last-seen enemy income / 32",
        "min(1, ticks since last sighting / 50), 1 if never seen",
        "ever seen enemy A units (0/1)",
        "ever seen enemy B/C units or tech (0/1)",
        "ever seen enemy defenses or second base (0/1)",
    ];
    let mut s = format!(
        "# Feature layout ({FEATURE_LAYOUT_VERSION})\n\nAll entries are clipped to [0, 1].\n\n| index | meaning |\n|---|---|\n"
    );
    for (i, n) in names.iter().enumerate() {
        s.push_str(&format!("| {i} | {n} |\n"));
    }
    s
}
