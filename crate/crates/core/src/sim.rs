//! Deterministic two-player macro-strategy duel with fog of war.
//!
//! Player 0 is the learning agent, player 1 is a scripted opponent that sees
//! the full game state. One call to [`Duel::step`] is one macro decision tick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag of the environment rules. Stored in every episode record and
/// checkpoint so data produced under different rules is never mixed.
pub const RULES_VERSION: &str = "fogduel-v1";

/// Episode length limit in ticks.
pub const T_MAX: u32 = 200;

pub const AGENT: usize = 0;
pub const OPPONENT: usize = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("episode is already terminal at tick {0}")]
    EpisodeOver(u32),
}

/// The ten macro actions available to both players. Discriminants are the
/// stable integer encoding used by the network and the wire formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MacroAction {
    ProduceWorker = 0,
    ProduceA = 1,
    ProduceB = 2,
    ProduceC = 3,
    BuildBase = 4,
    BuildDefense = 5,
    UpgradeTech = 6,
    Scout = 7,
    Attack = 8,
    Wait = 9,
}

impl MacroAction {
    pub const COUNT: usize = 10;

    pub const ALL: [MacroAction; Self::COUNT] = [
        MacroAction::ProduceWorker,
        MacroAction::ProduceA,
        MacroAction::ProduceB,
        MacroAction::ProduceC,
        MacroAction::BuildBase,
        MacroAction::BuildDefense,
        MacroAction::UpgradeTech,
        MacroAction::Scout,
        MacroAction::Attack,
        MacroAction::Wait,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Mineral cost. Attack and Wait are free.
    pub fn cost(self) -> u32 {
        match self {
            MacroAction::ProduceWorker => 20,
            MacroAction::ProduceA => 8,
            MacroAction::ProduceB => 8,
            MacroAction::ProduceC => 12,
            MacroAction::BuildBase => 120,
            MacroAction::BuildDefense => 30,
            MacroAction::UpgradeTech => 60,
            MacroAction::Scout => 5,
            MacroAction::Attack | MacroAction::Wait => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MacroAction::ProduceWorker => "ProduceWorker",
            MacroAction::ProduceA => "ProduceA",
            MacroAction::ProduceB => "ProduceB",
            MacroAction::ProduceC => "ProduceC",
            MacroAction::BuildBase => "BuildBase",
            MacroAction::BuildDefense => "BuildDefense",
            MacroAction::UpgradeTech => "UpgradeTech",
            MacroAction::Scout => "Scout",
            MacroAction::Attack => "Attack",
            MacroAction::Wait => "Wait",
        }
    }
}

/// A set of macro actions as a bitmask over the stable encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u16);

impl ActionSet {
    pub fn empty() -> Self {
        ActionSet(0)
    }

    pub fn all() -> Self {
        ActionSet((1 << MacroAction::COUNT) - 1)
    }

    pub fn insert(&mut self, a: MacroAction) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(&self, a: MacroAction) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Rebuild from a bitmask; bits above the action count are dropped.
    pub fn from_bits(bits: u16) -> Self {
        ActionSet(bits & ((1 << MacroAction::COUNT) - 1))
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    /// Members in ascending encoding order.
    pub fn iter(self) -> impl Iterator<Item = MacroAction> {
        MacroAction::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<MacroAction> for ActionSet {
    fn from_iter<I: IntoIterator<Item = MacroAction>>(iter: I) -> Self {
        let mut s = ActionSet::empty();
        for a in iter {
            s.insert(a);
        }
        s
    }
}

/// Combat unit types. Counters are cyclic: A beats B, B beats C, C beats A.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitType {
    A = 0,
    B = 1,
    C = 2,
}

impl UnitType {
    pub const ALL: [UnitType; 3] = [UnitType::A, UnitType::B, UnitType::C];

    /// The unit type this one is strong against.
    pub fn counters(self) -> UnitType {
        match self {
            UnitType::A => UnitType::B,
            UnitType::B => UnitType::C,
            UnitType::C => UnitType::A,
        }
    }

    pub fn cost(self) -> u32 {
        match self {
            UnitType::A => 8,
            UnitType::B => 8,
            UnitType::C => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PlayerState {
    pub minerals: u32,
    pub workers: u32,
    /// Unit counts indexed by [`UnitType`].
    pub army: [u32; 3],
    pub bases: u32,
    pub defenses: u32,
    pub tech: u8,
}

impl PlayerState {
    pub fn start() -> Self {
        PlayerState {
            minerals: 50,
            workers: 4,
            army: [0; 3],
            bases: 1,
            defenses: 0,
            tech: 0,
        }
    }

    pub fn army_total(&self) -> u32 {
        self.army.iter().sum()
    }

    /// Mineral income for one tick under the given rules.
    pub fn income(&self, rules: &Rules) -> u32 {
        self.workers.min(rules.worker_cap_per_base * self.bases)
    }

    /// Whether this player may issue `action` right now.
    pub fn can(&self, action: MacroAction) -> bool {
        if self.minerals < action.cost() {
            return false;
        }
        match action {
            MacroAction::ProduceB => self.tech >= 1,
            MacroAction::ProduceC => self.tech >= 2,
            MacroAction::UpgradeTech => self.tech < 2,
            MacroAction::Attack => self.army_total() > 0,
            _ => true,
        }
    }

    pub fn legal_actions(&self) -> ActionSet {
        MacroAction::ALL.into_iter().filter(|a| self.can(*a)).collect()
    }

    /// Most numerous unit type; ties go to the lowest type index. `None` for
    /// an empty army.
    pub fn majority_type(&self) -> Option<UnitType> {
        let mut best: Option<UnitType> = None;
        for u in UnitType::ALL {
            let n = self.army[u as usize];
            if n > 0 && best.is_none_or(|b| n > self.army[b as usize]) {
                best = Some(u);
            }
        }
        best
    }
}

/// Engine-style in-game score: building, unit and resource components.
pub fn game_score(p: &PlayerState) -> f64 {
    let units: u32 = UnitType::ALL
        .iter()
        .map(|u| u.cost() * p.army[*u as usize])
        .sum();
    (50 * p.bases + 10 * p.defenses + 5 * p.workers + units + p.minerals) as f64
}

/// Tunable rule constants. [`Rules::default`] is the `fogduel-v1` ruleset;
/// other values exist only for mutation testing of the verification suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rules {
    pub worker_cap_per_base: u32,
    pub combat_divisor: u32,
    pub counter_multiplier: u32,
    pub defense_power: u32,
    pub scout_ticks: u32,
    pub t_max: u32,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            worker_cap_per_base: 8,
            combat_divisor: 6,
            counter_multiplier: 2,
            defense_power: 3,
            scout_ticks: 3,
            t_max: T_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    Agent,
    Opponent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub tick: u32,
    pub players: [PlayerState; 2],
    pub scout_timers: [u32; 2],
    pub last_combat_tick: Option<u32>,
    pub terminal: bool,
    pub winner: Option<Winner>,
}

impl GameState {
    pub fn start() -> Self {
        GameState {
            tick: 0,
            players: [PlayerState::start(); 2],
            scout_timers: [0; 2],
            last_combat_tick: None,
            terminal: false,
            winner: None,
        }
    }

    /// The fog-filtered view of player `who`.
    pub fn observe(&self, who: usize) -> ObservationFrame {
        let other = 1 - who;
        let combat_now = self.tick > 0 && self.last_combat_tick == Some(self.tick - 1);
        let enemy_visible = self.scout_timers[who] > 0 || combat_now;
        ObservationFrame {
            tick: self.tick,
            own: self.players[who],
            enemy_visible,
            enemy: if enemy_visible {
                self.players[other]
            } else {
                PlayerState::default()
            },
            last_combat_tick: self.last_combat_tick,
        }
    }
}

/// What one player can see at a decision point. `enemy` is zeroed unless
/// `enemy_visible` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub tick: u32,
    pub own: PlayerState,
    pub enemy_visible: bool,
    pub enemy: PlayerState,
    pub last_combat_tick: Option<u32>,
}

/// Actions legal for the observing player. Always contains `Wait`.
pub fn legal_actions(obs: &ObservationFrame) -> ActionSet {
    obs.own.legal_actions()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: ObservationFrame,
    pub terminal: bool,
    pub winner: Option<Winner>,
    pub score_agent: f64,
    pub score_opponent: f64,
    /// The agent's requested action was illegal and ran as `Wait`.
    pub illegal: bool,
    pub agent_action: MacroAction,
    pub opponent_action: MacroAction,
    pub combat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScriptedPolicy {
    Rusher,
    Economist,
    TurtleTech,
    RandomLegal,
}

impl ScriptedPolicy {
    pub const ALL: [ScriptedPolicy; 4] = [
        ScriptedPolicy::Rusher,
        ScriptedPolicy::Economist,
        ScriptedPolicy::TurtleTech,
        ScriptedPolicy::RandomLegal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptedPolicy::Rusher => "Rusher",
            ScriptedPolicy::Economist => "Economist",
            ScriptedPolicy::TurtleTech => "TurtleTech",
            ScriptedPolicy::RandomLegal => "RandomLegal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(name))
    }
}

impl std::fmt::Display for ScriptedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// SplitMix64 finalizer, used to derive per-seed script parameters and the
/// random opponent's choices as pure functions of their inputs.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn script_param(seed: u64, salt: u64, lo: u32, span: u32) -> u32 {
    lo + (mix64(seed ^ salt.wrapping_mul(0xA076_1D64_78BD_642F)) % span as u64) as u32
}

/// Pursue the first unmet goal: do it if affordable, otherwise save minerals.
fn pursue(me: &PlayerState, goals: &[(bool, MacroAction)]) -> Option<MacroAction> {
    goals
        .iter()
        .find(|(unmet, _)| *unmet)
        .map(|(_, a)| if me.can(*a) { *a } else { MacroAction::Wait })
}

/// Opponent decision for the current state. The opponent is player 1 and
/// sees everything. The result is always legal for player 1.
pub fn scripted_act(policy: ScriptedPolicy, state: &GameState, seed: u64) -> MacroAction {
    let me = &state.players[OPPONENT];
    let army = me.army_total();
    let action = match policy {
        ScriptedPolicy::Rusher => {
            // Waves grow over the game.
            let threshold = script_param(seed, 1, 6, 4) + state.tick / 15;
            if army >= threshold {
                MacroAction::Attack
            } else {
                pursue(
                    me,
                    &[
                        (state.tick >= 20 && me.workers < 6, MacroAction::ProduceWorker),
                        (true, MacroAction::ProduceA),
                    ],
                )
                .unwrap_or(MacroAction::Wait)
            }
        }
        ScriptedPolicy::TurtleTech => {
            let defenses = script_param(seed, 2, 2, 3);
            let push = script_param(seed, 3, 8, 5);
            let enemy = &state.players[AGENT];
            let threatened = combat_power(enemy, me, false, &Rules::default())
                > combat_power(me, enemy, true, &Rules::default());
            if army >= push {
                MacroAction::Attack
            } else if threatened {
                // Answer pressure with units; C once teched, otherwise A.
                if me.tech >= 2 {
                    MacroAction::ProduceC
                } else {
                    MacroAction::ProduceA
                }
            } else {
                pursue(
                    me,
                    &[
                        (me.defenses < 1, MacroAction::BuildDefense),
                        (me.tech < 1, MacroAction::UpgradeTech),
                        (me.workers < 6, MacroAction::ProduceWorker),
                        (me.defenses < defenses, MacroAction::BuildDefense),
                        (me.tech < 2, MacroAction::UpgradeTech),
                        (me.workers < 8, MacroAction::ProduceWorker),
                        (true, MacroAction::ProduceC),
                    ],
                )
                .unwrap_or(MacroAction::Wait)
            }
        }
        ScriptedPolicy::Economist => {
            let push = script_param(seed, 4, 14, 7);
            let bases = script_param(seed, 5, 2, 2);
            if army >= push {
                MacroAction::Attack
            } else {
                let unit = if (me.army[0] + me.army[1]) % 2 == 0 {
                    MacroAction::ProduceA
                } else {
                    MacroAction::ProduceB
                };
                pursue(
                    me,
                    &[
                        (me.defenses < 1, MacroAction::BuildDefense),
                        (me.workers < 8, MacroAction::ProduceWorker),
                        (me.bases < 2, MacroAction::BuildBase),
                        (me.defenses < 2, MacroAction::BuildDefense),
                        (me.workers < 14, MacroAction::ProduceWorker),
                        (me.bases < bases, MacroAction::BuildBase),
                        (me.tech < 1, MacroAction::UpgradeTech),
                        (me.workers < 8 * bases, MacroAction::ProduceWorker),
                        (true, unit),
                    ],
                )
                .unwrap_or(MacroAction::Wait)
            }
        }
        ScriptedPolicy::RandomLegal => {
            let legal = me.legal_actions();
            let pick = mix64(seed ^ mix64(state.tick as u64 + 0x5151)) % legal.len() as u64;
            legal.iter().nth(pick as usize).unwrap_or(MacroAction::Wait)
        }
    };
    if me.can(action) {
        action
    } else {
        MacroAction::Wait
    }
}

/// Spend for `action` and apply its effect. Caller has checked legality.
fn apply_spend(p: &mut PlayerState, action: MacroAction) {
    debug_assert!(p.can(action));
    p.minerals -= action.cost();
}

fn apply_completion(p: &mut PlayerState, action: MacroAction) {
    match action {
        MacroAction::ProduceWorker => p.workers += 1,
        MacroAction::ProduceA => p.army[UnitType::A as usize] += 1,
        MacroAction::ProduceB => p.army[UnitType::B as usize] += 1,
        MacroAction::ProduceC => p.army[UnitType::C as usize] += 1,
        MacroAction::BuildBase => p.bases += 1,
        MacroAction::BuildDefense => p.defenses += 1,
        MacroAction::UpgradeTech => p.tech += 1,
        MacroAction::Scout | MacroAction::Attack | MacroAction::Wait => {}
    }
}

/// Combat power of `side` against `enemy`. Units that counter the enemy's
/// majority type count `counter_multiplier` times.
pub fn combat_power(side: &PlayerState, enemy: &PlayerState, with_defenses: bool, rules: &Rules) -> u32 {
    let majority = enemy.majority_type();
    let mut power = 0;
    for u in UnitType::ALL {
        let mult = if Some(u.counters()) == majority {
            rules.counter_multiplier
        } else {
            1
        };
        power += side.army[u as usize] * mult;
    }
    if with_defenses {
        power += side.defenses * rules.defense_power;
    }
    power
}

/// Remove up to `kills` units in the given order, returning leftover kills.
fn remove_units(p: &mut PlayerState, mut kills: u32, order: [UnitType; 3]) -> u32 {
    for u in order {
        let n = &mut p.army[u as usize];
        let k = kills.min(*n);
        *n -= k;
        kills -= k;
    }
    kills
}

const ATTACKER_ORDER: [UnitType; 3] = [UnitType::A, UnitType::B, UnitType::C];
const DEFENDER_ORDER: [UnitType; 3] = [UnitType::B, UnitType::C, UnitType::A];

/// One simultaneous combat round where `attacker` assaults `defender`. A
/// base falls only if it had no army and no defenses when the round began.
pub fn resolve_assault(attacker: &mut PlayerState, defender: &mut PlayerState, rules: &Rules) {
    let exposed = defender.army_total() == 0 && defender.defenses == 0;
    let att_power = combat_power(attacker, defender, false, rules);
    let def_power = combat_power(defender, attacker, true, rules);
    let leftover = remove_units(defender, att_power / rules.combat_divisor, DEFENDER_ORDER);
    defender.defenses -= leftover.min(defender.defenses);
    remove_units(attacker, def_power / rules.combat_divisor, ATTACKER_ORDER);
    if exposed && attacker.army_total() > 0 {
        defender.bases = defender.bases.saturating_sub(1);
    }
}

/// Both players attacked in the same tick: armies meet in the field, no
/// defenses take part and no base is damaged.
pub fn resolve_clash(a: &mut PlayerState, b: &mut PlayerState, rules: &Rules) {
    let pa = combat_power(a, b, false, rules);
    let pb = combat_power(b, a, false, rules);
    remove_units(b, pa / rules.combat_divisor, ATTACKER_ORDER);
    remove_units(a, pb / rules.combat_divisor, ATTACKER_ORDER);
}

/// A single episode against one scripted opponent.
#[derive(Debug, Clone)]
pub struct Duel {
    rules: Rules,
    state: GameState,
    opponent: ScriptedPolicy,
    seed: u64,
}

impl Duel {
    pub fn new(seed: u64, opponent: ScriptedPolicy) -> Self {
        Self::with_rules(Rules::default(), seed, opponent)
    }

    pub fn with_rules(rules: Rules, seed: u64, opponent: ScriptedPolicy) -> Self {
        Duel {
            rules,
            state: GameState::start(),
            opponent,
            seed,
        }
    }

    /// Restart from the canonical start state and return the agent's view.
    pub fn reset(&mut self, seed: u64, opponent: ScriptedPolicy) -> ObservationFrame {
        self.seed = seed;
        self.opponent = opponent;
        self.state = GameState::start();
        self.state.observe(AGENT)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn opponent(&self) -> ScriptedPolicy {
        self.opponent
    }

    pub fn observe(&self) -> ObservationFrame {
        self.state.observe(AGENT)
    }

    pub fn step(&mut self, action: MacroAction) -> Result<StepResult, SimError> {
        if self.state.terminal {
            return Err(SimError::EpisodeOver(self.state.tick));
        }
        let rules = &self.rules;
        let s = &mut self.state;

        let illegal = !s.players[AGENT].can(action);
        let agent_action = if illegal { MacroAction::Wait } else { action };
        let opponent_action = scripted_act(self.opponent, s, self.seed);
        let actions = [agent_action, opponent_action];

        for (p, a) in s.players.iter_mut().zip(actions) {
            apply_spend(p, a);
        }
        for p in s.players.iter_mut() {
            p.minerals += p.income(rules);
        }
        for (p, a) in s.players.iter_mut().zip(actions) {
            apply_completion(p, a);
        }
        for (timer, a) in s.scout_timers.iter_mut().zip(actions) {
            *timer = timer.saturating_sub(1);
            if a == MacroAction::Scout {
                *timer = rules.scout_ticks;
            }
        }

        let attacks = actions.map(|a| a == MacroAction::Attack);
        let combat = attacks[0] || attacks[1];
        {
            let [agent, opp] = &mut s.players;
            match attacks {
                [true, true] => resolve_clash(agent, opp, rules),
                [true, false] => resolve_assault(agent, opp, rules),
                [false, true] => resolve_assault(opp, agent, rules),
                [false, false] => {}
            }
        }
        if combat {
            s.last_combat_tick = Some(s.tick);
        }

        s.tick += 1;
        if s.players[OPPONENT].bases == 0 {
            s.winner = Some(Winner::Agent);
        } else if s.players[AGENT].bases == 0 {
            s.winner = Some(Winner::Opponent);
        }
        s.terminal = s.winner.is_some() || s.tick >= rules.t_max;

        Ok(StepResult {
            obs: s.observe(AGENT),
            terminal: s.terminal,
            winner: s.winner,
            score_agent: game_score(&s.players[AGENT]),
            score_opponent: game_score(&s.players[OPPONENT]),
            illegal,
            agent_action,
            opponent_action,
            combat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn player(minerals: u32, army: [u32; 3], defenses: u32) -> PlayerState {
        PlayerState {
            minerals,
            workers: 4,
            army,
            bases: 1,
            defenses,
            tech: 0,
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = Duel::new(7, ScriptedPolicy::Rusher);
        let mut b = Duel::new(0, ScriptedPolicy::Economist);
        let oa = a.reset(7, ScriptedPolicy::Rusher);
        let ob = b.reset(7, ScriptedPolicy::Rusher);
        assert_eq!(serde_json::to_vec(&oa).unwrap(), serde_json::to_vec(&ob).unwrap());
        assert_eq!(oa.own.bases, 1);
        assert!(!oa.enemy_visible);
        assert_eq!(oa.enemy, PlayerState::default());
    }

    #[test]
    fn waiting_gains_four_minerals_per_tick() {
        let mut s = GameState::start();
        let rules = Rules::default();
        for _ in 0..5 {
            let before = s.players;
            for p in s.players.iter_mut() {
                p.minerals += p.income(&rules);
            }
            assert_eq!(s.players[0].minerals, before[0].minerals + 4);
        }
        // Through the engine: a RandomLegal opponent never touches the agent's economy.
        let mut duel = Duel::new(3, ScriptedPolicy::TurtleTech);
        let mut m = duel.observe().own.minerals;
        for _ in 0..5 {
            let r = duel.step(MacroAction::Wait).unwrap();
            assert_eq!(r.obs.own.minerals, m + 4);
            m = r.obs.own.minerals;
        }
    }

    #[test]
    fn attack_with_empty_army_is_illegal() {
        let mut duel = Duel::new(1, ScriptedPolicy::TurtleTech);
        let r = duel.step(MacroAction::Attack).unwrap();
        assert!(r.illegal);
        assert_eq!(r.agent_action, MacroAction::Wait);
        assert!(!r.combat);
    }

    #[test]
    fn combat_round_by_hand() {
        // A:4 attacks B:2 with no defenses. A counters the defender's
        // majority (B) so attacker power is 4*2 = 8 -> 1 removal. B does
        // not counter A so defender power is 2 -> 0 removals.
        let rules = Rules::default();
        let mut att = player(0, [4, 0, 0], 0);
        let mut def = player(0, [0, 2, 0], 0);
        assert_eq!(combat_power(&att, &def, false, &rules), 8);
        assert_eq!(combat_power(&def, &att, true, &rules), 2);
        resolve_assault(&mut att, &mut def, &rules);
        assert_eq!(def.army, [0, 1, 0]);
        assert_eq!(att.army, [4, 0, 0]);
        assert_eq!(def.bases, 1);
        // Second round: the last B dies but the base was still covered.
        resolve_assault(&mut att, &mut def, &rules);
        assert_eq!(def.army, [0, 0, 0]);
        assert_eq!(def.bases, 1);
        // Third round: nothing left at the start, so the base falls.
        resolve_assault(&mut att, &mut def, &rules);
        assert_eq!(def.bases, 0);
    }

    #[test]
    fn defenses_fall_after_army() {
        let rules = Rules::default();
        // 13 C vs A:1 + 2 defenses: C counters A -> power 26 -> 4 removals:
        // 1 A, then 2 defenses, 1 wasted. Defender power 1 + 6 = 7 -> 1 C.
        let mut att = player(0, [0, 0, 13], 0);
        let mut def = player(0, [1, 0, 0], 2);
        resolve_assault(&mut att, &mut def, &rules);
        assert_eq!(def.army_total(), 0);
        assert_eq!(def.defenses, 0);
        assert_eq!(att.army, [0, 0, 12]);
        assert_eq!(def.bases, 1);
    }

    #[test]
    fn clash_spares_defenses_and_bases() {
        let rules = Rules::default();
        let mut a = player(0, [12, 0, 0], 3);
        let mut b = player(0, [0, 0, 0], 0);
        b.army = [6, 0, 0];
        resolve_clash(&mut a, &mut b, &rules);
        assert_eq!(b.army, [4, 0, 0]);
        assert_eq!(a.army, [11, 0, 0]);
        assert_eq!(a.defenses, 3);
        assert_eq!((a.bases, b.bases), (1, 1));
    }

    #[test]
    fn score_weights() {
        assert_eq!(game_score(&PlayerState::default()), 0.0);
        assert_eq!(game_score(&PlayerState::start()), 120.0);
        let mut p = PlayerState::start();
        p.defenses += 1;
        assert_eq!(game_score(&p), 130.0);
        p.army = [1, 1, 1];
        assert_eq!(game_score(&p), 130.0 + 28.0);
    }

    #[test]
    fn legal_actions_follow_cost_table() {
        let start = GameState::start().observe(AGENT);
        let legal: Vec<_> = legal_actions(&start).iter().collect();
        assert_eq!(
            legal,
            vec![
                MacroAction::ProduceWorker,
                MacroAction::ProduceA,
                MacroAction::BuildDefense,
                MacroAction::Scout,
                MacroAction::Wait
            ]
        );
        let mut broke = start;
        broke.own.minerals = 0;
        assert_eq!(legal_actions(&broke).iter().collect::<Vec<_>>(), vec![MacroAction::Wait]);
        broke.own.army = [1, 0, 0];
        assert_eq!(
            legal_actions(&broke).iter().collect::<Vec<_>>(),
            vec![MacroAction::Attack, MacroAction::Wait]
        );
        broke.own.minerals = 1000;
        broke.own.tech = 2;
        let rich = legal_actions(&broke);
        assert!(!rich.contains(MacroAction::UpgradeTech));
        assert!(rich.contains(MacroAction::ProduceC));
    }

    #[test]
    fn scripted_examples() {
        let s = GameState::start();
        for seed in 0..20 {
            assert_eq!(scripted_act(ScriptedPolicy::Rusher, &s, seed), MacroAction::ProduceA);
            assert_eq!(
                scripted_act(ScriptedPolicy::RandomLegal, &s, seed),
                scripted_act(ScriptedPolicy::RandomLegal, &s, seed)
            );
        }
        let mut turtle = GameState::start();
        turtle.players[OPPONENT].minerals = 100;
        turtle.players[OPPONENT].defenses = 1;
        assert_eq!(scripted_act(ScriptedPolicy::TurtleTech, &turtle, 0), MacroAction::UpgradeTech);
        turtle.players[OPPONENT].defenses = 0;
        assert_eq!(scripted_act(ScriptedPolicy::TurtleTech, &turtle, 0), MacroAction::BuildDefense);
    }

    #[test]
    fn stepping_terminal_episode_errors() {
        let mut duel = Duel::new(5, ScriptedPolicy::Rusher);
        let mut last = None;
        while !duel.state().terminal {
            last = Some(duel.step(MacroAction::Wait).unwrap());
        }
        let before = duel.state().clone();
        assert_eq!(duel.step(MacroAction::Wait), Err(SimError::EpisodeOver(before.tick)));
        assert_eq!(duel.state(), &before);
        assert_eq!(last.unwrap().winner, Some(Winner::Opponent));
    }

    #[test]
    fn scouting_reveals_enemy_for_three_ticks() {
        let mut duel = Duel::new(2, ScriptedPolicy::Economist);
        let r = duel.step(MacroAction::Scout).unwrap();
        assert!(r.obs.enemy_visible);
        assert_eq!(r.obs.enemy, duel.state().players[OPPONENT]);
        assert!(duel.step(MacroAction::Wait).unwrap().obs.enemy_visible);
        assert!(duel.step(MacroAction::Wait).unwrap().obs.enemy_visible);
        let r = duel.step(MacroAction::Wait).unwrap();
        assert!(!r.obs.enemy_visible);
        assert_eq!(r.obs.enemy, PlayerState::default());
    }
}
