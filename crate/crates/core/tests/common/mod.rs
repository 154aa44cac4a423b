//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use fogduel::features::D;
use fogduel::net::HiddenState;
use fogduel::replay::{StoredSequence, SEQ_LEN};
use fogduel::sim::{ActionSet, MacroAction, ScriptedPolicy};

/// 99th percentile of the chi-square distribution with 63 degrees of freedom.
pub const CHI2_63_P99: f64 = 92.01002361413214;

/// Terminal reward evaluated directly: repeated multiplication for the
/// decay and an explicit branch for the larger score.
pub fn reward_oracle(ours: f64, theirs: f64, ticks: u32, decay: f64) -> f64 {
    if ours == 0.0 && theirs == 0.0 {
        return 0.0;
    }
    let mut d = 1.0;
    for _ in 0..ticks {
        d *= decay;
    }
    let larger = if ours > theirs { ours } else { theirs };
    d * (ours - theirs) / larger
}

/// Unrolled n-step return over an explicit reward stream. Only the final
/// step of a terminal sequence pays; bootstraps use the online argmax over
/// the legal actions, valued by the target table.
pub fn target_oracle(
    online: &[Vec<f64>],
    target: &[Vec<f64>],
    legal: &[Vec<usize>],
    terminal: Option<f64>,
    lambda: f64,
    n: usize,
) -> Vec<Option<f64>> {
    let len = online.len();
    let mut rewards = vec![0.0; len];
    if let Some(r) = terminal {
        rewards[len - 1] = r;
    }
    (0..len)
        .map(|t| {
            let mut g = 0.0;
            let mut disc = 1.0;
            for k in 0..=n {
                let s = t + k;
                if s >= len {
                    return None;
                }
                if terminal.is_some() && s == len - 1 {
                    return Some(g + disc * rewards[s]);
                }
                if k == n {
                    let mut best = legal[s][0];
                    for &a in &legal[s] {
                        if online[s][a] > online[s][best] {
                            best = a;
                        }
                    }
                    return Some(g + disc * target[s][best]);
                }
                g += disc * rewards[s];
                disc *= lambda;
            }
            unreachable!()
        })
        .collect()
}

pub fn blank_sequence(opponent: ScriptedPolicy, id: u64) -> StoredSequence {
    StoredSequence {
        opponent,
        features: vec![[0.0; D]; SEQ_LEN],
        actions: vec![MacroAction::Wait; SEQ_LEN],
        legal: vec![ActionSet::all(); SEQ_LEN],
        valid_len: SEQ_LEN,
        boundary: HiddenState::default(),
        terminal_reward: None,
        episode_id: id,
        start_tick: 0,
    }
}
