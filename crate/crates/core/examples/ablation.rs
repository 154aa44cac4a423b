//! Paired baseline and ablated runs with shared seeds. Usage:
//! `ablation <no_lstm|sign_reward_only|high_exploration> [train steps]`.

use fogduel::runtime::{ablate, RunConfig, Variant};
use fogduel::sim::ScriptedPolicy;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "sign_reward_only".into());
    let variant = Variant::from_name(&name).ok_or_else(|| anyhow::anyhow!("unknown variant {name}"))?;
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let mut cfg = RunConfig::default();
    cfg.opponents = vec![ScriptedPolicy::TurtleTech];
    cfg.budget.train_steps = Some(steps);
    cfg.output_dir = std::env::temp_dir().join("fogduel-ablation");
    let report = ablate(&cfg, variant)?;
    for (label, run) in [("baseline", &report.baseline), (variant.name(), &report.ablated)] {
        let curve: Vec<String> = run.curve.iter().map(|p| format!("{:.2}", p.mean_win_rate)).collect();
        println!(
            "{label:<18} final {:.2}  curve [{}]",
            run.final_mean().unwrap_or(0.0),
            curve.join(" ")
        );
    }
    Ok(())
}
