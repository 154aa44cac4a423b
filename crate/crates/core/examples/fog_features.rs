//! Show how scouting changes what the agent sees and how the history
//! features remember it.

use fogduel::features::{encode, update_history, HistoryFeatures};
use fogduel::sim::{Duel, MacroAction, ScriptedPolicy};

fn main() -> Result<(), fogduel::sim::SimError> {
    let mut duel = Duel::new(3, ScriptedPolicy::TurtleTech);
    let mut obs = duel.reset(3, ScriptedPolicy::TurtleTech);
    let mut history = HistoryFeatures::default();
    let plan = [
        MacroAction::ProduceWorker,
        MacroAction::Wait,
        MacroAction::Scout,
        MacroAction::Wait,
        MacroAction::Wait,
        MacroAction::Wait,
        MacroAction::Wait,
    ];
    for a in plan {
        history = update_history(&history, &obs);
        let f = encode(&obs, &history);
        println!(
            "tick {:>2} visible {:<5} enemy seen at {:<8} staleness {:.2} flags {:?} -> {}",
            obs.tick,
            obs.enemy_visible,
            format!("{:?}", history.last_seen_tick),
            f[20],
            &f[21..],
            a.name()
        );
        obs = duel.step(a)?.obs;
    }
    println!("\n{}", fogduel::features::layout_markdown());
    Ok(())
}
