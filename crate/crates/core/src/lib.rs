//! Regret-tracking broadcast over fading wireless links.
//!
//! The modules layer bottom-up: [`channel`] models each directed link as a
//! finite-state Markov chain over SNR bins, [`regret`] holds the per-node
//! learners, [`equilibrium`] measures how close joint play is to a correlated
//! equilibrium, [`topology`] builds random unit-disk networks, [`baselines`]
//! provides the comparison schemes and [`sim`] ties them together in a
//! slot-level simulator.

pub mod baselines;
pub mod channel;
pub mod equilibrium;
pub mod regret;
pub mod sim;
pub mod topology;
