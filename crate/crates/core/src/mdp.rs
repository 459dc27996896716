//! Labeled Markov decision processes: the data model, a builder, validation,
//! paths, and a JSON interchange format for user-supplied domains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{AtomTable, Valuation};

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("duplicate action `{0}`")]
    DuplicateAction(String),
    #[error("duplicate transition row for state `{0}`, action `{1}`")]
    DuplicateTransition(String, String),
    #[error("invalid path at step {step}: {msg}")]
    InvalidPath { step: usize, msg: String },
    #[error("interchange document: {0}")]
    Interchange(String),
    #[error(transparent)]
    Ltl(#[from] crate::ltl::LtlError),
}

/// A finite labeled MDP with dense state and action ids.
///
/// Action availability is the set of actions with a transition row; every
/// distribution's successors are kept sorted by state id so iteration order
/// (and therefore planning output) is deterministic.
#[derive(Debug, Clone)]
pub struct LabeledMdp {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub atoms: AtomTable,
    pub labels: Vec<Valuation>,
    pub initial: u32,
    /// Per state: sorted list of (action id, distribution), distribution
    /// entries sorted by successor state id with probability > 0.
    rows: Vec<Vec<(u32, Vec<(u32, f64)>)>>,
}

impl LabeledMdp {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    /// Actions available at `s` (those with a transition row).
    pub fn actions_at(&self, s: u32) -> impl Iterator<Item = u32> + '_ {
        self.rows[s as usize].iter().map(|(a, _)| *a)
    }

    /// The distribution for (s, a), or None if a is unavailable at s.
    pub fn dist(&self, s: u32, a: u32) -> Option<&[(u32, f64)]> {
        let row = &self.rows[s as usize];
        row.binary_search_by_key(&a, |(b, _)| *b).ok().map(|i| row[i].1.as_slice())
    }

    pub fn label(&self, s: u32) -> Valuation {
        self.labels[s as usize]
    }

    pub fn state_id(&self, name: &str) -> Option<u32> {
        self.state_names.iter().position(|n| n == name).map(|i| i as u32)
    }

    pub fn action_id(&self, name: &str) -> Option<u32> {
        self.action_names.iter().position(|n| n == name).map(|i| i as u32)
    }
}

/// Single-owner construction of a [`LabeledMdp`].
#[derive(Debug)]
pub struct MdpBuilder {
    pub atoms: AtomTable,
    state_names: Vec<String>,
    state_index: BTreeMap<String, u32>,
    action_names: Vec<String>,
    action_index: BTreeMap<String, u32>,
    labels: Vec<Valuation>,
    rows: Vec<Vec<(u32, Vec<(u32, f64)>)>>,
    initial: Option<u32>,
}

impl MdpBuilder {
    pub fn new(atoms: AtomTable) -> Self {
        MdpBuilder {
            atoms,
            state_names: Vec::new(),
            state_index: BTreeMap::new(),
            action_names: Vec::new(),
            action_index: BTreeMap::new(),
            labels: Vec::new(),
            rows: Vec::new(),
            initial: None,
        }
    }

    pub fn add_state(&mut self, name: &str, label: Valuation) -> Result<u32, MdpError> {
        if self.state_index.contains_key(name) {
            return Err(MdpError::DuplicateState(name.to_string()));
        }
        let id = self.state_names.len() as u32;
        self.state_names.push(name.to_string());
        self.state_index.insert(name.to_string(), id);
        self.labels.push(label);
        self.rows.push(Vec::new());
        Ok(id)
    }

    pub fn add_action(&mut self, name: &str) -> Result<u32, MdpError> {
        if self.action_index.contains_key(name) {
            return Err(MdpError::DuplicateAction(name.to_string()));
        }
        let id = self.action_names.len() as u32;
        self.action_names.push(name.to_string());
        self.action_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Looks up an existing state id by name.
    pub fn state(&self, name: &str) -> Option<u32> {
        self.state_index.get(name).copied()
    }

    pub fn set_initial(&mut self, s: u32) {
        self.initial = Some(s);
    }

    /// Adds the transition row for (s, a). Zero-probability entries are
    /// dropped; duplicate successor entries are summed.
    pub fn add_transition(
        &mut self,
        s: u32,
        a: u32,
        successors: &[(u32, f64)],
    ) -> Result<(), MdpError> {
        let row = &mut self.rows[s as usize];
        if row.iter().any(|(b, _)| *b == a) {
            return Err(MdpError::DuplicateTransition(
                self.state_names[s as usize].clone(),
                self.action_names[a as usize].clone(),
            ));
        }
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for &(t, p) in successors {
            if p != 0.0 {
                *merged.entry(t).or_insert(0.0) += p;
            }
        }
        row.push((a, merged.into_iter().collect()));
        Ok(())
    }

    pub fn build(mut self) -> LabeledMdp {
        for row in &mut self.rows {
            row.sort_by_key(|(a, _)| *a);
        }
        LabeledMdp {
            state_names: self.state_names,
            action_names: self.action_names,
            atoms: self.atoms,
            labels: self.labels,
            initial: self.initial.unwrap_or(0),
            rows: self.rows,
        }
    }
}

/// A single well-formedness violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// Outgoing probabilities for (state, action) sum to `sum`, not 1.
    NonStochastic { state: u32, action: u32, sum: f64 },
    /// Probability outside [0, 1] in the row for (state, action).
    BadProbability { state: u32, action: u32, prob: f64 },
    /// No available action at `state`.
    NoActions { state: u32 },
    /// A transition targets a state id outside the state set.
    DanglingTarget { state: u32, action: u32, target: u32 },
    /// A state label mentions an atom id outside the atom table.
    UnknownAtom { state: u32 },
    /// The initial state id is out of range.
    BadInitial { initial: u32 },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::NonStochastic { state, action, sum } => {
                write!(f, "row ({state}, {action}) sums to {sum}, expected 1")
            }
            ValidationIssue::BadProbability { state, action, prob } => {
                write!(f, "row ({state}, {action}) has probability {prob} outside [0, 1]")
            }
            ValidationIssue::NoActions { state } => {
                write!(f, "state {state} has no available actions")
            }
            ValidationIssue::DanglingTarget { state, action, target } => {
                write!(f, "row ({state}, {action}) targets nonexistent state {target}")
            }
            ValidationIssue::UnknownAtom { state } => {
                write!(f, "state {state} is labeled with an atom outside the atom table")
            }
            ValidationIssue::BadInitial { initial } => {
                write!(f, "initial state {initial} is out of range")
            }
        }
    }
}

/// Stochasticity tolerance: double-precision accumulation error across up to
/// ~10^3 successors.
pub const PROB_TOL: f64 = 1e-9;

/// Checks well-formedness and returns every violation found (empty iff the
/// MDP is well-formed).
pub fn validate(m: &LabeledMdp) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let n = m.num_states() as u32;
    if m.initial >= n {
        issues.push(ValidationIssue::BadInitial { initial: m.initial });
    }
    let atom_mask = if m.atoms.len() >= 64 { u64::MAX } else { (1u64 << m.atoms.len()) - 1 };
    for s in 0..n {
        if m.rows[s as usize].is_empty() {
            issues.push(ValidationIssue::NoActions { state: s });
        }
        if m.labels[s as usize].0 & !atom_mask != 0 {
            issues.push(ValidationIssue::UnknownAtom { state: s });
        }
        for (a, dist) in &m.rows[s as usize] {
            let mut sum = 0.0;
            for &(t, p) in dist {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    issues.push(ValidationIssue::BadProbability { state: s, action: *a, prob: p });
                }
                if t >= n {
                    issues.push(ValidationIssue::DanglingTarget {
                        state: s,
                        action: *a,
                        target: t,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                issues.push(ValidationIssue::NonStochastic { state: s, action: *a, sum });
            }
        }
    }
    issues
}

/// An alternating state/action path s0, a0, s1, …, s_k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpPath {
    pub states: Vec<u32>,
    pub actions: Vec<u32>,
}

impl MdpPath {
    pub fn new(states: Vec<u32>, actions: Vec<u32>) -> Self {
        assert_eq!(states.len(), actions.len() + 1, "path must alternate s0 a0 s1 … s_k");
        MdpPath { states, actions }
    }
}

/// The word induced by a path: the sequence of state labels.
pub fn induced_word(m: &LabeledMdp, p: &MdpPath) -> Result<Vec<Valuation>, MdpError> {
    for (i, &a) in p.actions.iter().enumerate() {
        let s = p.states[i];
        let t = p.states[i + 1];
        let dist = m.dist(s, a).ok_or_else(|| MdpError::InvalidPath {
            step: i,
            msg: format!("action {a} unavailable at state {s}"),
        })?;
        let ok = dist.binary_search_by_key(&t, |(u, _)| *u).is_ok();
        if !ok {
            return Err(MdpError::InvalidPath {
                step: i,
                msg: format!("T({s}, {a}, {t}) = 0"),
            });
        }
    }
    Ok(p.states.iter().map(|&s| m.label(s)).collect())
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

/// Serde mirror of the interchange document.
#[derive(Debug, Serialize, Deserialize)]
struct MdpDoc {
    states: Vec<String>,
    atoms: Vec<String>,
    /// labels[i] lists the atoms true in states[i]
    labels: Vec<Vec<String>>,
    actions: Vec<String>,
    initial: String,
    transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransitionDoc {
    from: String,
    action: String,
    to: Vec<(String, f64)>,
}

/// Parses the JSON interchange format used for user-supplied domains.
pub fn from_json(text: &str) -> Result<LabeledMdp, MdpError> {
    let doc: MdpDoc =
        serde_json::from_str(text).map_err(|e| MdpError::Interchange(e.to_string()))?;
    if doc.labels.len() != doc.states.len() {
        return Err(MdpError::Interchange(format!(
            "{} label entries for {} states",
            doc.labels.len(),
            doc.states.len()
        )));
    }
    let mut atoms = AtomTable::new();
    for name in &doc.atoms {
        atoms.intern(name)?;
    }
    let mut b = MdpBuilder::new(atoms);
    for (name, label) in doc.states.iter().zip(&doc.labels) {
        let mut v = Valuation::EMPTY;
        for atom in label {
            let id = b
                .atoms
                .lookup(atom)
                .ok_or_else(|| MdpError::Interchange(format!("label atom `{atom}` not in atoms")))?;
            v.insert(id);
        }
        b.add_state(name, v)?;
    }
    for name in &doc.actions {
        b.add_action(name)?;
    }
    let initial =
        b.state(&doc.initial).ok_or_else(|| MdpError::UnknownState(doc.initial.clone()))?;
    b.set_initial(initial);
    for t in &doc.transitions {
        let s = b.state(&t.from).ok_or_else(|| MdpError::UnknownState(t.from.clone()))?;
        let a = b
            .action_index
            .get(&t.action)
            .copied()
            .ok_or_else(|| MdpError::UnknownAction(t.action.clone()))?;
        let mut succ = Vec::with_capacity(t.to.len());
        for (target, p) in &t.to {
            let u = b.state(target).ok_or_else(|| MdpError::UnknownState(target.clone()))?;
            succ.push((u, *p));
        }
        b.add_transition(s, a, &succ)?;
    }
    Ok(b.build())
}

/// Serializes an MDP to the JSON interchange format.
pub fn to_json(m: &LabeledMdp) -> String {
    let atoms: Vec<String> =
        (0..m.atoms.len()).map(|i| m.atoms.name(crate::ltl::AtomId(i as u32)).to_string()).collect();
    let labels: Vec<Vec<String>> = m
        .labels
        .iter()
        .map(|v| v.atom_names(&m.atoms).into_iter().map(str::to_string).collect())
        .collect();
    let mut transitions = Vec::new();
    for s in 0..m.num_states() as u32 {
        for (a, dist) in &m.rows[s as usize] {
            transitions.push(TransitionDoc {
                from: m.state_names[s as usize].clone(),
                action: m.action_names[*a as usize].clone(),
                to: dist
                    .iter()
                    .map(|&(t, p)| (m.state_names[t as usize].clone(), p))
                    .collect(),
            });
        }
    }
    let doc = MdpDoc {
        states: m.state_names.clone(),
        atoms,
        labels,
        actions: m.action_names.clone(),
        initial: m.state_names[m.initial as usize].clone(),
        transitions,
    };
    serde_json::to_string_pretty(&doc).unwrap()
}
