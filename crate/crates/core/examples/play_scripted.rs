//! Play each scripted opponent with a seeded random agent and print the
//! outcome table.

use fogduel::sim::{mix64, Duel, ScriptedPolicy, Winner};

fn main() -> Result<(), fogduel::sim::SimError> {
    println!("{:<12} {:>5} {:>6} {:>9} {:>10}", "opponent", "wins", "losses", "timeouts", "avg ticks");
    for opponent in ScriptedPolicy::ALL {
        let (mut wins, mut losses, mut ticks) = (0, 0, 0);
        let games = 100;
        for seed in 0..games {
            let mut duel = Duel::new(seed, opponent);
            let mut obs = duel.reset(seed, opponent);
            loop {
                let legal = obs.own.legal_actions();
                let k = mix64(seed ^ (obs.tick as u64) << 20) % legal.len() as u64;
                let res = duel.step(legal.iter().nth(k as usize).unwrap())?;
                obs = res.obs;
                if res.terminal {
                    match res.winner {
                        Some(Winner::Agent) => wins += 1,
                        Some(Winner::Opponent) => losses += 1,
                        None => {}
                    }
                    ticks += obs.tick;
                    break;
                }
            }
        }
        let timeouts = games as u32 - wins - losses;
        println!(
            "{:<12} {:>5} {:>6} {:>9} {:>10.1}",
            opponent.name(),
            wins,
            losses,
            timeouts,
            ticks as f64 / games as f64
        );
    }
    Ok(())
}
