//! Run one exploring episode, show how it is cut into stored sequences, and
//! round-trip the wire encoding.

use fogduel::actor::{run_episode, ActorConfig, EpisodeRecord};
use fogduel::learner::LearnerConfig;
use fogduel::net::QNetParams;
use fogduel::sim::{Rules, ScriptedPolicy};

fn main() -> anyhow::Result<()> {
    let params = QNetParams::init(7, true);
    let cfg = ActorConfig {
        index: 0,
        count: 8,
        eps_base: 0.4,
        eps_alpha: 7.0,
        opponent: ScriptedPolicy::Economist,
        evaluation: false,
    };
    let rec = run_episode(&Rules::default(), &params, &cfg, &LearnerConfig::default(), 42, 1)?;
    println!(
        "epsilon {:.3}: {} ticks, winner {:?}, score {} vs {}, reward {:.4}, illegal {}",
        cfg.epsilon(),
        rec.ticks,
        rec.winner,
        rec.score_agent,
        rec.score_opponent,
        rec.terminal_reward,
        rec.illegal_actions
    );
    for s in &rec.sequences {
        println!(
            "  start {:>3} len {:>2} terminal {:?} |h| {:.3}",
            s.start_tick,
            s.valid_len,
            s.terminal_reward.map(|r| (r * 1e4).round() / 1e4),
            s.boundary.h.iter().map(|x| x * x).sum::<f64>().sqrt()
        );
    }
    let bytes = rec.to_bytes();
    let (back, _) = EpisodeRecord::from_bytes(&bytes)?;
    println!("encoded {} bytes, round trip exact: {}", bytes.len(), back == rec);
    Ok(())
}
