//! Deterministic Rabin automata: data model, Rabin acceptance on lassos,
//! LTL-to-DRA translation for a supported fragment, and HOA import/export.

mod hoa;
mod translate;

pub use hoa::{export_hoa, import_hoa};
pub use translate::ltl_to_dra;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{AtomTable, Lasso, Valuation};

/// One Rabin acceptance pair: a run is accepting for the pair if it visits
/// `fin` states finitely often and `inf` states infinitely often.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RabinPair {
    pub fin: Vec<u32>,
    pub inf: Vec<u32>,
}

impl RabinPair {
    pub fn fin_contains(&self, q: u32) -> bool {
        self.fin.binary_search(&q).is_ok()
    }

    pub fn inf_contains(&self, q: u32) -> bool {
        self.inf.binary_search(&q).is_ok()
    }
}

/// A complete deterministic Rabin automaton.
///
/// The alphabet is kept implicit: only the atoms the automaton actually
/// reads (`atom_names`) are stored, and the transition table is dense over
/// the 2^k local letters formed by those atoms. Atoms outside the support
/// never influence transitions, so the automaton is total over any larger
/// atom table containing the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dra {
    pub atom_names: Vec<String>,
    pub initial: u32,
    pub pairs: Vec<RabinPair>,
    /// `trans[q][letter] -> q'`, with `letter` a bitset over `atom_names`.
    trans: Vec<Vec<u32>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AutomataError {
    #[error("formula outside the supported fragment: {0}")]
    UnsupportedFragment(String),
    #[error("automaton reads atom {0:?} which is not in the atom table")]
    MissingAtom(String),
    #[error("too many atoms for explicit alphabet ({0} > {max})", max = MAX_SUPPORT_ATOMS)]
    TooManyAtoms(usize),
    #[error("HOA parse error at line {line}: {msg}")]
    HoaParse { line: usize, msg: String },
    #[error("automaton is nondeterministic: state {state} has multiple transitions for one letter")]
    NonDeterministic { state: u32 },
    #[error("unsupported acceptance condition: {0}")]
    UnsupportedAcceptance(String),
}

/// Upper bound on support atoms so the dense local alphabet stays small.
pub const MAX_SUPPORT_ATOMS: usize = 16;

impl Dra {
    pub fn new(
        atom_names: Vec<String>,
        initial: u32,
        pairs: Vec<RabinPair>,
        trans: Vec<Vec<u32>>,
    ) -> Self {
        let letters = 1usize << atom_names.len();
        assert!(!trans.is_empty());
        assert!(!pairs.is_empty(), "a DRA needs at least one Rabin pair");
        for row in &trans {
            assert_eq!(row.len(), letters, "transition rows must cover the local alphabet");
        }
        let n = trans.len() as u32;
        assert!(initial < n);
        for row in &trans {
            for &t in row {
                assert!(t < n, "dangling transition target");
            }
        }
        let mut pairs = pairs;
        for pair in &mut pairs {
            pair.fin.sort_unstable();
            pair.fin.dedup();
            pair.inf.sort_unstable();
            pair.inf.dedup();
            assert!(pair.fin.iter().all(|&q| q < n));
            assert!(pair.inf.iter().all(|&q| q < n));
        }
        Dra { atom_names, initial, pairs, trans }
    }

    pub fn num_states(&self) -> usize {
        self.trans.len()
    }

    pub fn num_letters(&self) -> usize {
        1 << self.atom_names.len()
    }

    /// Transition on a local letter (bitset over `atom_names`).
    pub fn step_local(&self, q: u32, letter: usize) -> u32 {
        self.trans[q as usize][letter]
    }

    /// Builds the projection from valuations over `table` onto local letters.
    /// Fails if the automaton reads an atom absent from `table`.
    pub fn projector(&self, table: &AtomTable) -> Result<DraProjector, AutomataError> {
        let mut bits = Vec::with_capacity(self.atom_names.len());
        for name in &self.atom_names {
            let id = table
                .lookup(name)
                .ok_or_else(|| AutomataError::MissingAtom(name.clone()))?;
            bits.push(id.0);
        }
        Ok(DraProjector { bits })
    }

    /// Transition on a valuation over `table` via a prebuilt projector.
    pub fn step(&self, q: u32, v: Valuation, proj: &DraProjector) -> u32 {
        self.step_local(q, proj.letter(v))
    }
}

/// Maps valuations over some atom table onto a DRA's local letters.
#[derive(Debug, Clone)]
pub struct DraProjector {
    bits: Vec<u32>,
}

impl DraProjector {
    pub fn letter(&self, v: Valuation) -> usize {
        let mut letter = 0usize;
        for (i, &b) in self.bits.iter().enumerate() {
            letter |= ((v.0 >> b & 1) as usize) << i;
        }
        letter
    }
}

/// The state sequence of a DRA on a finite input word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraRun {
    pub states: Vec<u32>,
}

impl DraRun {
    pub fn of(d: &Dra, word: &[Valuation], table: &AtomTable) -> Result<DraRun, AutomataError> {
        let proj = d.projector(table)?;
        let mut states = vec![d.initial];
        let mut q = d.initial;
        for &v in word {
            q = d.step(q, v, &proj);
            states.push(q);
        }
        Ok(DraRun { states })
    }
}

/// Rabin acceptance of `d` on the ultimately periodic word `w`.
///
/// The run itself is ultimately periodic: reading the cycle repeatedly from a
/// fixed state must revisit a previous cycle-entry state. Acceptance holds iff
/// some pair has no `fin` state and at least one `inf` state inside the run's
/// repeating part.
pub fn dra_accepts_lasso(d: &Dra, w: &Lasso, table: &AtomTable) -> bool {
    let proj = d.projector(table).expect("lasso atoms must cover the automaton support");
    let mut q = d.initial;
    for &v in &w.prefix {
        q = d.step(q, v, &proj);
    }
    // Iterate whole cycles until the entry state repeats.
    let mut entry_iteration: HashMap<u32, usize> = HashMap::new();
    let mut visited_per_iter: Vec<Vec<u32>> = Vec::new();
    loop {
        if let Some(&start) = entry_iteration.get(&q) {
            let mut loop_states: Vec<u32> = visited_per_iter[start..].concat();
            loop_states.sort_unstable();
            loop_states.dedup();
            return d.pairs.iter().any(|pair| {
                loop_states.iter().all(|&s| !pair.fin_contains(s))
                    && loop_states.iter().any(|&s| pair.inf_contains(s))
            });
        }
        entry_iteration.insert(q, visited_per_iter.len());
        let mut visited = Vec::with_capacity(w.cycle.len());
        for &v in &w.cycle {
            q = d.step(q, v, &proj);
            visited.push(q);
        }
        visited_per_iter.push(visited);
    }
}
