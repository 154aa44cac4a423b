//! Fill a two-segment prioritized replay, sample from it, and compare the
//! empirical frequencies with priority^0.6.

use fogduel::features::D;
use fogduel::net::HiddenState;
use fogduel::replay::{SegmentedReplay, StoredSequence, PRIORITY_EXPONENT, SEQ_LEN};
use fogduel::sim::{ActionSet, MacroAction, ScriptedPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seq(opponent: ScriptedPolicy, id: u64) -> StoredSequence {
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

fn main() -> Result<(), fogduel::replay::ReplayError> {
    let opps = [ScriptedPolicy::Rusher, ScriptedPolicy::TurtleTech];
    let mut replay = SegmentedReplay::new(&opps, 8);
    let priorities = [[0.1, 1.0, 2.0, 4.0], [0.5, 0.5, 3.0, 8.0]];
    for (k, ps) in priorities.iter().enumerate() {
        let items = ps.iter().enumerate().map(|(i, p)| (seq(opps[k], (k * 4 + i) as u64), *p)).collect();
        replay.append(k, items)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0u32; 8];
    let draws = 50_000;
    for _ in 0..draws / 4 {
        for item in replay.sample(4, &mut rng)? {
            counts[item.sequence.episode_id as usize] += 1;
        }
    }
    let total: f64 = priorities.iter().flatten().map(|p: &f64| p.powf(PRIORITY_EXPONENT)).sum();
    println!("{:>3} {:>8} {:>9} {:>9}", "id", "priority", "expected", "observed");
    for (id, p) in priorities.iter().flatten().enumerate() {
        println!(
            "{id:>3} {p:>8.2} {:>9.4} {:>9.4}",
            p.powf(PRIORITY_EXPONENT) / total,
            counts[id] as f64 / draws as f64
        );
    }
    println!("\n{}", serde_json::to_string_pretty(&replay.stats()).unwrap());
    Ok(())
}
