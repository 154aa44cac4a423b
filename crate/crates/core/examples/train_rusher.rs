//! Short deterministic training run against Rusher, then a greedy
//! evaluation of the final checkpoint. Pass a train-step budget as the
//! first argument (default 3000).

use fogduel::runtime::{evaluate_checkpoint, train, RunConfig};
use fogduel::sim::ScriptedPolicy;

fn main() -> anyhow::Result<()> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let mut cfg = RunConfig::default();
    cfg.opponents = vec![ScriptedPolicy::Rusher];
    cfg.budget.train_steps = Some(steps);
    cfg.output_dir = std::env::temp_dir().join("fogduel-train-rusher");
    let report = train(&cfg)?;
    for p in &report.curve {
        println!("step {:>6} episodes {:>6} greedy win rate {:.2}", p.step, p.episodes, p.mean_win_rate);
    }
    let ckpt = report.output_dir.join("checkpoints/final.ckpt");
    let table = evaluate_checkpoint(&ckpt, &ScriptedPolicy::ALL, 100)?;
    println!("\nfinal checkpoint against every opponent:");
    for (name, w) in table {
        println!("  {name:<12} {:.2} over {} games", w.win_rate, w.games);
    }
    println!("\nrun directory: {}", report.output_dir.display());
    Ok(())
}
