//! Distributed recurrent DQN training for a fog-of-war macro-strategy duel.

pub mod actor;
pub mod features;
pub mod learner;
pub mod net;
pub mod replay;
pub mod runtime;
pub mod sim;
