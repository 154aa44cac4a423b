//! Threaded actors and learner for a fixed wall-clock budget, reporting
//! throughput and parameter staleness.

use fogduel::runtime::{train, RunConfig, RunMode};

fn main() -> anyhow::Result<()> {
    let seconds: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30.0);
    let mut cfg = RunConfig::default();
    cfg.mode = RunMode::Concurrent;
    cfg.actors = 4;
    cfg.budget.train_steps = None;
    cfg.budget.wall_seconds = Some(seconds);
    cfg.eval.interval_steps = 0;
    cfg.eval.final_games = 50;
    cfg.output_dir = std::env::temp_dir().join("fogduel-concurrent");
    let report = train(&cfg)?;
    println!(
        "{} train steps and {} episodes in {seconds}s ({})",
        report.train_steps, report.episodes, report.stop_reason
    );
    if let Some(eval) = &report.final_eval {
        for (name, w) in &eval.win_rate {
            println!("  {name:<12} {:.2}", w.win_rate);
        }
    }
    let metrics = std::fs::read_to_string(report.output_dir.join("metrics.jsonl"))?;
    if let Some(last) = metrics.lines().rfind(|l| l.contains("\"train\"")) {
        let v: serde_json::Value = serde_json::from_str(last)?;
        println!("stale episodes: {}, snapshot version: {}", v["stale_episodes"], v["snapshot_version"]);
    }
    Ok(())
}
