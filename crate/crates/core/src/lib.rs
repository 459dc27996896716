//! Planning and execution for agents governed by weighted, possibly
//! conflicting temporal-logic norms in stochastic environments.
//!
//! Norms are LTL formulas with positive weights. Each norm compiles to a
//! deterministic Rabin automaton, which is extended with per-step keep/suspend
//! choices; the planner minimizes discounted suspension cost over the product
//! of the environment MDP with all of these automata, and the executor
//! reinterprets the observed history online to stay on the cheapest
//! interpretation.

pub mod artifact;
pub mod automata;
pub mod crdra;
pub mod executor;
pub mod ltl;
pub mod mdp;
pub mod planner;
pub mod satisfaction;
pub mod vacuum;
