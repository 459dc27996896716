//! Conflict-resolution DRAs: a norm's automaton extended with a per-step
//! keep/susp choice, where suspension freezes the automaton state at a cost
//! equal to the norm's weight.

use thiserror::Error;

use crate::automata::{Dra, DraProjector};
use crate::ltl::{AtomTable, LtlFormula, Valuation};

#[derive(Debug, Error)]
pub enum CrdraError {
    #[error("norm weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("discount factor must lie in [0, 1), got {0}")]
    BadGamma(f64),
}

/// A weighted norm: an LTL formula with a positive importance weight.
#[derive(Debug, Clone)]
pub struct Norm {
    pub name: String,
    pub weight: f64,
    pub formula: LtlFormula,
}

impl Norm {
    pub fn new(name: &str, weight: f64, formula: LtlFormula) -> Result<Norm, CrdraError> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(CrdraError::NonPositiveWeight(weight));
        }
        Ok(Norm { name: name.to_string(), weight, formula })
    }
}

/// The per-step choice for one norm: advance its automaton or suspend it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormAction {
    Keep,
    Susp,
}

/// A conflict-resolution DRA. States, initial state, and Rabin pairs are
/// those of the underlying automaton; the alphabet is extended with a norm
/// action, and the weight function charges `weight` exactly on susp letters.
#[derive(Debug, Clone)]
pub struct Crdra {
    pub norm: Norm,
    pub dra: Dra,
}

/// Builds the CRDRA for a norm over its compiled (or imported) automaton.
pub fn build_crdra(norm: Norm, dra: Dra) -> Crdra {
    Crdra { norm, dra }
}

impl Crdra {
    /// δ^𝒞: keep follows the automaton, susp stays put.
    pub fn step(&self, q: u32, v: Valuation, a: NormAction, proj: &DraProjector) -> u32 {
        match a {
            NormAction::Keep => self.dra.step(q, v, proj),
            NormAction::Susp => q,
        }
    }

    /// W^𝒞: 0 on keep letters, the norm weight on susp letters.
    pub fn weight(&self, a: NormAction) -> f64 {
        match a {
            NormAction::Keep => 0.0,
            NormAction::Susp => self.norm.weight,
        }
    }
}

/// One transition of a CRDRA run: the source state and the extended letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrdraStep {
    pub state: u32,
    pub valuation: Valuation,
    pub action: NormAction,
}

/// An ultimately periodic transition sequence: a finite prefix followed by a
/// cycle repeated forever. An empty cycle denotes all-keep zero-weight
/// continuation (only the prefix contributes cost).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrdraTransitionSeq {
    pub prefix: Vec<CrdraStep>,
    pub cycle: Vec<CrdraStep>,
}

impl CrdraTransitionSeq {
    /// Checks that consecutive states follow δ^𝒞 (including the wrap-around
    /// of the cycle back to its own head).
    pub fn is_valid(&self, c: &Crdra, table: &AtomTable) -> bool {
        let proj = match c.dra.projector(table) {
            Ok(p) => p,
            Err(_) => return false,
        };
        let all: Vec<&CrdraStep> = self.prefix.iter().chain(&self.cycle).collect();
        for w in all.windows(2) {
            if c.step(w[0].state, w[0].valuation, w[0].action, &proj) != w[1].state {
                return false;
            }
        }
        if let (Some(last), Some(head)) = (self.cycle.last(), self.cycle.first()) {
            if c.step(last.state, last.valuation, last.action, &proj) != head.state {
                return false;
            }
        }
        true
    }
}

/// Discounted violation cost of an ultimately periodic transition sequence:
/// Σ_{t<m} γ^t w_t + γ^m (Σ_{t<p} γ^t w_t) / (1 − γ^p), exactly.
pub fn violation_cost(
    seq: &CrdraTransitionSeq,
    c: &Crdra,
    gamma: f64,
) -> Result<f64, CrdraError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CrdraError::BadGamma(gamma));
    }
    let mut cost = 0.0f64;
    let mut disc = 1.0f64;
    for step in &seq.prefix {
        cost += disc * c.weight(step.action);
        disc *= gamma;
    }
    if !seq.cycle.is_empty() {
        let mut cyc = 0.0f64;
        let mut d = 1.0f64;
        for step in &seq.cycle {
            cyc += d * c.weight(step.action);
            d *= gamma;
        }
        // d is now γ^{|cycle|}
        cost += disc * cyc / (1.0 - d);
    }
    Ok(cost)
}
