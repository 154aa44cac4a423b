//! Print the n-step double-Q targets of a short hand-built episode tail.

use fogduel::learner::{n_step_targets, shaped_terminal_reward};
use fogduel::sim::ActionSet;

fn main() {
    // Online and target Q rows for a six-step sequence with three actions.
    let online = vec![
        vec![0.1, 0.4, 0.2],
        vec![0.3, 0.1, 0.0],
        vec![0.2, 0.2, 0.6],
        vec![0.5, 0.1, 0.3],
        vec![0.0, 0.9, 0.1],
        vec![0.2, 0.3, 0.1],
    ];
    let target = vec![
        vec![0.0, 0.3, 0.1],
        vec![0.2, 0.2, 0.2],
        vec![0.1, 0.5, 0.4],
        vec![0.6, 0.0, 0.2],
        vec![0.1, 0.7, 0.3],
        vec![0.3, 0.2, 0.2],
    ];
    let legal = vec![ActionSet::all(); 6];
    let r = shaped_terminal_reward(180.0, 120.0, 57, 0.999);
    println!("terminal reward after 57 ticks, score 180 vs 120: {r:.6}");
    for (name, terminal) in [("mid-episode window", None), ("window ending the episode", Some(r))] {
        println!("\n{name}:");
        for (t, g) in n_step_targets(&online, &target, &legal, terminal, 0.997, 3).iter().enumerate() {
            match g {
                Some(g) => println!("  t={t}  G={g:.6}"),
                None => println!("  t={t}  masked"),
            }
        }
    }
}
