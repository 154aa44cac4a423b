//! Fast self-verification, run by the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actor::epsilon_for;
use crate::features::D;
use crate::learner::{n_step_targets, shaped_terminal_reward, sign_terminal_reward};
use crate::net::{finite_diff_check, HiddenState, QNetParams};
use crate::replay::SumTree;
use crate::sim::{mix64, ActionSet, Duel, MacroAction, Rules, ScriptedPolicy};

/// Hash of the reference trajectories under the default rules.
pub const GOLDEN_TRACE_HASH: u64 = 0x7834_ec2e_026b_9702;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<22} {}", self.name, self.detail)
    }
}

fn fnv(h: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(h, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Hash of fixed episodes against every scripted opponent, with the agent
/// choosing pseudo-random legal actions.
pub fn golden_trace_hash(rules: &Rules) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325;
    for opponent in ScriptedPolicy::ALL {
        for seed in 0..4u64 {
            let mut duel = Duel::with_rules(rules.clone(), seed, opponent);
            let mut obs = duel.reset(seed, opponent);
            loop {
                let legal = obs.own.legal_actions();
                let pick = mix64(seed.wrapping_mul(31) ^ obs.tick as u64) % legal.len() as u64;
                let a = legal.iter().nth(pick as usize).unwrap_or(MacroAction::Wait);
                let res = duel.step(a).expect("episode still running");
                h = fnv(h, serde_json::to_string(&res).expect("step serializes").as_bytes());
                h = fnv(h, serde_json::to_string(duel.state()).expect("state serializes").as_bytes());
                obs = res.obs;
                if res.terminal {
                    break;
                }
            }
        }
    }
    h
}

fn check_golden(rules: &Rules) -> CheckResult {
    let h = golden_trace_hash(rules);
    CheckResult {
        name: "env_golden_trace",
        passed: h == GOLDEN_TRACE_HASH,
        detail: format!("trace hash {h:016x}, expected {GOLDEN_TRACE_HASH:016x}"),
    }
}

fn check_sum_tree() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tree = SumTree::new(512);
    for _ in 0..10_000 {
        tree.set(rng.gen_range(0..512), rng.gen_range(0.0..5.0));
    }
    let err = tree.audit();
    CheckResult {
        name: "sum_tree_audit",
        passed: err <= 1e-9,
        detail: format!("max node error {err:.2e} after 10000 updates"),
    }
}

fn check_finite_diff() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for i in 0..5u64 {
        let params = QNetParams::init(100 + i, i != 4);
        let seq: Vec<[f64; D]> = (0..rng.gen_range(2..6))
            .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
            .collect();
        worst = worst.max(finite_diff_check(&params, &seq, &HiddenState::default(), i));
    }
    CheckResult {
        name: "gradient_finite_diff",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.2e} over 5 instances"),
    }
}

/// Step-by-step unrolled return, independent of the closed form.
fn unrolled_target(
    online: &[Vec<f64>],
    target: &[Vec<f64>],
    terminal: Option<f64>,
    lambda: f64,
    n: usize,
    t: usize,
) -> Option<f64> {
    let len = online.len();
    let mut disc = 1.0;
    for s in t..=t + n {
        if s >= len {
            return None;
        }
        if let (Some(r), true) = (terminal, s == len - 1) {
            return Some(disc * r);
        }
        if s == t + n {
            let best = (0..online[s].len()).fold(0, |b, a| if online[s][a] > online[s][b] { a } else { b });
            return Some(disc * target[s][best]);
        }
        disc *= lambda;
    }
    None
}

fn check_targets() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut mask_errors = 0;
    for _ in 0..500 {
        let len = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=4);
        let lambda = rng.gen_range(0.5..1.0);
        let mut table = || -> Vec<Vec<f64>> {
            (0..len).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
        };
        let (online, target) = (table(), table());
        let terminal = rng.gen_bool(0.5).then(|| rng.gen_range(-1.0..1.0));
        let legal = vec![ActionSet::all(); len];
        let got = n_step_targets(&online, &target, &legal, terminal, lambda, n);
        for (t, g) in got.iter().enumerate() {
            match (g, unrolled_target(&online, &target, terminal, lambda, n, t)) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => mask_errors += 1,
            }
        }
    }
    CheckResult {
        name: "n_step_target_oracle",
        passed: worst <= 1e-12 && mask_errors == 0,
        detail: format!("max error {worst:.2e}, mask mismatches {mask_errors} over 500 instances"),
    }
}

fn check_epsilon() -> CheckResult {
    let first = epsilon_for(0, 8, 0.4, 7.0);
    let last = epsilon_for(7, 8, 0.4, 7.0);
    let monotone = (1..8).all(|i| epsilon_for(i, 8, 0.4, 7.0) < epsilon_for(i - 1, 8, 0.4, 7.0));
    CheckResult {
        name: "epsilon_schedule",
        passed: first == 0.4 && last == 0.4f64.powi(8) && monotone,
        detail: format!("eps_0 = {first}, eps_7 = {last:.6e}, strictly decreasing: {monotone}"),
    }
}

fn check_reward() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut failures = 0;
    for _ in 0..10_000 {
        let a = rng.gen_range(0.0..1000.0);
        let b = rng.gen_range(0.0..1000.0);
        let t = rng.gen_range(0..=200);
        let r = shaped_terminal_reward(a, b, t, 0.999);
        let direct = 0.999f64.powi(t as i32) * (a - b) / a.max(b);
        if (r - direct).abs() > 1e-12
            || r != -shaped_terminal_reward(b, a, t, 0.999)
            || shaped_terminal_reward(a, a, t, 0.999) != 0.0
            || sign_terminal_reward(a, b) != -sign_terminal_reward(b, a)
        {
            failures += 1;
        }
    }
    let zero = shaped_terminal_reward(0.0, 0.0, 10, 0.999) == 0.0;
    CheckResult {
        name: "reward_identities",
        passed: failures == 0 && zero,
        detail: format!("{failures} failures over 10000 triples; zero scores give 0: {zero}"),
    }
}

/// Run every check under `rules`; a mutated rule set should fail only the
/// golden trace.
pub fn run_checks(rules: &Rules) -> Vec<CheckResult> {
    vec![
        check_golden(rules),
        check_sum_tree(),
        check_finite_diff(),
        check_targets(),
        check_epsilon(),
        check_reward(),
    ]
}
