//! LTL-to-DRA translation by formula progression for a fragment: boolean
//! combinations of syntactic safety formulas, co-safety formulas, and
//! recurrence formulas `G psi` with co-safe `psi` (which subsumes `G F lit`).
//!
//! Progressed residuals are kept in a canonical disjunctive form over
//! temporal subformulas so the state space is finite. Safety components
//! accept by never reaching the empty residual; co-safety components accept
//! by reaching the valid residual; recurrence components use a breakpoint
//! set of outstanding obligations and accept when it empties infinitely
//! often.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::ltl::{to_nnf, AtomId, AtomTable, LtlFormula};

use super::{AutomataError, Dra, RabinPair, MAX_SUPPORT_ATOMS};

/// A conjunction of temporal subformulas (empty = true).
type Clause = BTreeSet<LtlFormula>;
/// A disjunction of clauses (empty = false); minimized by absorption.
type Canon = BTreeSet<Clause>;

fn canon_true() -> Canon {
    let mut s = BTreeSet::new();
    s.insert(Clause::new());
    s
}

fn canon_false() -> Canon {
    BTreeSet::new()
}

fn is_canon_true(s: &Canon) -> bool {
    s.contains(&Clause::new())
}

fn is_canon_false(s: &Canon) -> bool {
    s.is_empty()
}

/// Removes clauses subsumed by a smaller clause (C absorbs any superset).
fn absorb(s: Canon) -> Canon {
    if is_canon_true(&s) {
        return canon_true();
    }
    let clauses: Vec<Clause> = s.into_iter().collect();
    let mut keep: Vec<bool> = vec![true; clauses.len()];
    for i in 0..clauses.len() {
        if !keep[i] {
            continue;
        }
        for j in 0..clauses.len() {
            if i != j && keep[j] && clauses[i].is_subset(&clauses[j]) {
                keep[j] = false;
            }
        }
    }
    clauses
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

fn canon_or(a: Canon, b: Canon) -> Canon {
    absorb(a.into_iter().chain(b).collect())
}

fn canon_and(a: &Canon, b: &Canon) -> Canon {
    let mut out = Canon::new();
    for ca in a {
        for cb in b {
            out.insert(ca.union(cb).cloned().collect());
        }
    }
    absorb(out)
}

/// Canonical form of a formula as obligations to satisfy from "now".
fn canon(f: &LtlFormula) -> Canon {
    match f {
        LtlFormula::True => canon_true(),
        LtlFormula::False => canon_false(),
        LtlFormula::And(a, b) => canon_and(&canon(a), &canon(b)),
        LtlFormula::Or(a, b) => canon_or(canon(a), canon(b)),
        _ => {
            let mut clause = Clause::new();
            clause.insert(f.clone());
            let mut s = Canon::new();
            s.insert(clause);
            s
        }
    }
}

/// One-step derivative: obligations on the suffix after reading one letter.
fn progress_formula(f: &LtlFormula, holds: &impl Fn(AtomId) -> bool) -> Canon {
    match f {
        LtlFormula::True => canon_true(),
        LtlFormula::False => canon_false(),
        LtlFormula::Atom(a) => {
            if holds(*a) {
                canon_true()
            } else {
                canon_false()
            }
        }
        LtlFormula::Not(g) => match g.as_ref() {
            LtlFormula::Atom(a) => {
                if holds(*a) {
                    canon_false()
                } else {
                    canon_true()
                }
            }
            _ => unreachable!("input is in negation normal form"),
        },
        LtlFormula::And(a, b) => canon_and(&progress_formula(a, holds), &progress_formula(b, holds)),
        LtlFormula::Or(a, b) => canon_or(progress_formula(a, holds), progress_formula(b, holds)),
        LtlFormula::Next(g) => canon(g),
        LtlFormula::Finally(g) => canon_or(progress_formula(g, holds), canon(f)),
        LtlFormula::Globally(g) => canon_and(&progress_formula(g, holds), &canon(f)),
        LtlFormula::Until(a, b) => canon_or(
            progress_formula(b, holds),
            canon_and(&progress_formula(a, holds), &canon(f)),
        ),
        LtlFormula::Implies(_, _) => unreachable!("input is in negation normal form"),
    }
}

fn progress_canon(s: &Canon, holds: &impl Fn(AtomId) -> bool) -> Canon {
    let mut out = canon_false();
    for clause in s {
        let mut acc = canon_true();
        for member in clause {
            acc = canon_and(&acc, &progress_formula(member, holds));
            if is_canon_false(&acc) {
                break;
            }
        }
        out = canon_or(out, acc);
    }
    out
}

// ---------------------------------------------------------------------------
// Fragment classification
// ---------------------------------------------------------------------------

fn is_literal(f: &LtlFormula) -> bool {
    matches!(f, LtlFormula::True | LtlFormula::False | LtlFormula::Atom(_))
        || matches!(f, LtlFormula::Not(g) if matches!(g.as_ref(), LtlFormula::Atom(_)))
}

fn is_safe(f: &LtlFormula) -> bool {
    if is_literal(f) {
        return true;
    }
    match f {
        LtlFormula::And(a, b) | LtlFormula::Or(a, b) => is_safe(a) && is_safe(b),
        LtlFormula::Next(g) | LtlFormula::Globally(g) => is_safe(g),
        _ => false,
    }
}

fn is_cosafe(f: &LtlFormula) -> bool {
    if is_literal(f) {
        return true;
    }
    match f {
        LtlFormula::And(a, b) | LtlFormula::Or(a, b) | LtlFormula::Until(a, b) => {
            is_cosafe(a) && is_cosafe(b)
        }
        LtlFormula::Next(g) | LtlFormula::Finally(g) => is_cosafe(g),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CompKind {
    Safe,
    Cosafe,
    /// `G psi` with co-safe `psi`.
    Recur,
}

fn classify(f: &LtlFormula) -> Option<CompKind> {
    if is_safe(f) {
        Some(CompKind::Safe)
    } else if is_cosafe(f) {
        Some(CompKind::Cosafe)
    } else if let LtlFormula::Globally(g) = f {
        is_cosafe(g).then_some(CompKind::Recur)
    } else {
        None
    }
}

/// Distributes G over conjunction and F over disjunction, and collapses
/// stuttered G/F, to widen the syntactic fragment before classification.
fn normalize(f: &LtlFormula) -> LtlFormula {
    match f {
        LtlFormula::True | LtlFormula::False | LtlFormula::Atom(_) => f.clone(),
        LtlFormula::Not(g) => LtlFormula::not(normalize(g)),
        LtlFormula::And(a, b) => LtlFormula::and(normalize(a), normalize(b)),
        LtlFormula::Or(a, b) => LtlFormula::or(normalize(a), normalize(b)),
        LtlFormula::Implies(a, b) => LtlFormula::implies(normalize(a), normalize(b)),
        LtlFormula::Next(g) => LtlFormula::next(normalize(g)),
        LtlFormula::Until(a, b) => LtlFormula::until(normalize(a), normalize(b)),
        LtlFormula::Globally(g) => match normalize(g) {
            LtlFormula::And(a, b) => {
                normalize(&LtlFormula::and(LtlFormula::globally(*a), LtlFormula::globally(*b)))
            }
            LtlFormula::Globally(h) => LtlFormula::Globally(h),
            h => LtlFormula::globally(h),
        },
        LtlFormula::Finally(g) => match normalize(g) {
            LtlFormula::Or(a, b) => {
                normalize(&LtlFormula::or(LtlFormula::finally(*a), LtlFormula::finally(*b)))
            }
            LtlFormula::Finally(h) => LtlFormula::Finally(h),
            h => LtlFormula::finally(h),
        },
    }
}

/// DNF of the top-level boolean structure; leaves are temporal components.
fn top_dnf(f: &LtlFormula) -> Vec<BTreeSet<LtlFormula>> {
    match f {
        LtlFormula::True => vec![BTreeSet::new()],
        LtlFormula::False => vec![],
        LtlFormula::Or(a, b) => {
            let mut out = top_dnf(a);
            out.extend(top_dnf(b));
            out
        }
        LtlFormula::And(a, b) => {
            let da = top_dnf(a);
            let db = top_dnf(b);
            let mut out = Vec::new();
            for ca in &da {
                for cb in &db {
                    out.push(ca.union(cb).cloned().collect());
                }
            }
            out
        }
        other => vec![std::iter::once(other.clone()).collect()],
    }
}

// ---------------------------------------------------------------------------
// Component automata
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum CompState {
    Canon(Canon),
    /// Recurrence state: (all outstanding obligations, breakpoint frontier,
    /// frontier-just-emptied flag).
    Recur(BTreeSet<Canon>, BTreeSet<Canon>, bool),
    Dead,
}

struct Component {
    trans: Vec<Vec<u32>>, // [state][letter] -> state
    dead: Vec<bool>,      // safety violation sink (safe/recur)
    good: Vec<bool>,      // cosafe: residual valid; recur: breakpoint
}

fn build_component(
    f: &LtlFormula,
    kind: CompKind,
    letters: &[Vec<bool>],
    atom_bit: &HashMap<AtomId, usize>,
) -> Component {
    let mut index: HashMap<CompState, u32> = HashMap::new();
    let mut states: Vec<CompState> = Vec::new();
    let mut queue = VecDeque::new();
    let initial = match kind {
        CompKind::Safe | CompKind::Cosafe => CompState::Canon(canon(f)),
        CompKind::Recur => CompState::Recur(BTreeSet::new(), BTreeSet::new(), true),
    };
    index.insert(initial.clone(), 0);
    states.push(initial);
    queue.push_back(0u32);
    let mut trans: Vec<Vec<u32>> = Vec::new();

    let body = match (kind, f) {
        (CompKind::Recur, LtlFormula::Globally(g)) => Some(g.as_ref().clone()),
        _ => None,
    };

    while let Some(qi) = queue.pop_front() {
        let state = states[qi as usize].clone();
        let mut row = Vec::with_capacity(letters.len());
        for letter in letters {
            let holds = |a: AtomId| letter[*atom_bit.get(&a).expect("formula atom in support")];
            let next = match &state {
                CompState::Dead => CompState::Dead,
                CompState::Canon(c) => {
                    if is_canon_true(c) {
                        CompState::Canon(canon_true())
                    } else {
                        let c2 = progress_canon(c, &holds);
                        if is_canon_false(&c2) {
                            CompState::Dead
                        } else {
                            CompState::Canon(c2)
                        }
                    }
                }
                CompState::Recur(obls, frontier, _) => {
                    let body = body.as_ref().expect("recurrence component has a G body");
                    let mut dead = false;
                    let mut obls2: BTreeSet<Canon> = BTreeSet::new();
                    let mut frontier2: BTreeSet<Canon> = BTreeSet::new();
                    for o in obls {
                        let o2 = progress_canon(o, &holds);
                        if is_canon_false(&o2) {
                            dead = true;
                            break;
                        }
                        if !is_canon_true(&o2) {
                            if frontier.contains(o) {
                                frontier2.insert(o2.clone());
                            }
                            obls2.insert(o2);
                        }
                    }
                    let spawned = progress_formula(body, &holds);
                    if is_canon_false(&spawned) {
                        dead = true;
                    } else if !is_canon_true(&spawned) {
                        obls2.insert(spawned);
                    }
                    if dead {
                        CompState::Dead
                    } else if frontier2.is_empty() {
                        CompState::Recur(obls2.clone(), obls2, true)
                    } else {
                        CompState::Recur(obls2, frontier2, false)
                    }
                }
            };
            let target = *index.entry(next.clone()).or_insert_with(|| {
                let id = states.len() as u32;
                states.push(next.clone());
                queue.push_back(id);
                id
            });
            row.push(target);
        }
        if trans.len() <= qi as usize {
            trans.resize(qi as usize + 1, Vec::new());
        }
        trans[qi as usize] = row;
    }

    let dead = states.iter().map(|s| matches!(s, CompState::Dead)).collect();
    let good = states
        .iter()
        .map(|s| match s {
            CompState::Canon(c) => is_canon_true(c),
            CompState::Recur(_, _, bp) => *bp,
            CompState::Dead => false,
        })
        .collect();
    Component { trans, dead, good }
}

// ---------------------------------------------------------------------------
// Product assembly
// ---------------------------------------------------------------------------

/// Translates an NNF formula of the supported fragment into a complete DRA
/// whose accepted lassos are exactly the models of the formula.
pub fn ltl_to_dra(f: &LtlFormula, table: &AtomTable) -> Result<Dra, AutomataError> {
    let f = to_nnf(f)
        .map_err(|_| AutomataError::UnsupportedFragment(f.display(table).to_string()))?;
    let f = normalize(&f);

    // Support atoms, sorted by id; local letter bit i corresponds to atoms[i].
    let mask = f.atom_mask();
    let atoms: Vec<AtomId> = (0..64).filter(|b| mask >> b & 1 == 1).map(AtomId).collect();
    if atoms.len() > MAX_SUPPORT_ATOMS {
        return Err(AutomataError::TooManyAtoms(atoms.len()));
    }
    let atom_names: Vec<String> = atoms.iter().map(|&a| table.name(a).to_string()).collect();
    let atom_bit: HashMap<AtomId, usize> =
        atoms.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let num_letters = 1usize << atoms.len();
    let letters: Vec<Vec<bool>> = (0..num_letters)
        .map(|l| (0..atoms.len()).map(|i| l >> i & 1 == 1).collect())
        .collect();

    let mut disjuncts = top_dnf(&f);
    // Absorption between disjuncts keeps the pair count down.
    disjuncts = {
        let mut keep = vec![true; disjuncts.len()];
        for i in 0..disjuncts.len() {
            if !keep[i] {
                continue;
            }
            for j in 0..disjuncts.len() {
                if i != j && keep[j] && disjuncts[i].is_subset(&disjuncts[j]) {
                    keep[j] = false;
                }
            }
        }
        disjuncts.into_iter().zip(keep).filter_map(|(d, k)| k.then_some(d)).collect()
    };

    if disjuncts.is_empty() {
        // The formula is `false`: a single absorbing state with an
        // unsatisfiable pair.
        return Ok(Dra::new(
            atom_names,
            0,
            vec![RabinPair { fin: vec![0], inf: vec![0] }],
            vec![vec![0; num_letters]],
        ));
    }

    // Deduplicated components across all disjuncts.
    let mut comp_formulas: Vec<LtlFormula> = Vec::new();
    let mut comp_kinds: Vec<CompKind> = Vec::new();
    let mut comp_of: HashMap<LtlFormula, usize> = HashMap::new();
    for d in &disjuncts {
        for g in d {
            if comp_of.contains_key(g) {
                continue;
            }
            let kind = classify(g).ok_or_else(|| {
                AutomataError::UnsupportedFragment(g.display(table).to_string())
            })?;
            comp_of.insert(g.clone(), comp_formulas.len());
            comp_formulas.push(g.clone());
            comp_kinds.push(kind);
        }
    }
    let comps: Vec<Component> = comp_formulas
        .iter()
        .zip(&comp_kinds)
        .map(|(g, &k)| build_component(g, k, &letters, &atom_bit))
        .collect();

    // Per-disjunct component index lists, by kind.
    struct Disjunct {
        safe: Vec<usize>,
        cosafe: Vec<usize>,
        recur: Vec<usize>,
        counter: Option<usize>, // index into the counter vector
    }
    let mut counter_sizes: Vec<usize> = Vec::new();
    let djs: Vec<Disjunct> = disjuncts
        .iter()
        .map(|d| {
            let mut dj = Disjunct { safe: vec![], cosafe: vec![], recur: vec![], counter: None };
            for g in d {
                let ci = comp_of[g];
                match comp_kinds[ci] {
                    CompKind::Safe => dj.safe.push(ci),
                    CompKind::Cosafe => dj.cosafe.push(ci),
                    CompKind::Recur => dj.recur.push(ci),
                }
            }
            if dj.recur.len() >= 2 {
                dj.counter = Some(counter_sizes.len());
                counter_sizes.push(dj.recur.len());
            }
            dj
        })
        .collect();

    // Product exploration. A product state is the component state vector plus
    // one round-robin counter per disjunct with two or more recurrence parts;
    // a counter waits for its current component's breakpoint and flags a
    // completed round when it wraps.
    type ProdState = (Vec<u32>, Vec<(u8, bool)>);
    let initial: ProdState =
        (vec![0; comps.len()], counter_sizes.iter().map(|_| (0u8, false)).collect());
    let mut index: HashMap<ProdState, u32> = HashMap::new();
    let mut states: Vec<ProdState> = vec![initial.clone()];
    index.insert(initial, 0);
    let mut queue = VecDeque::from([0u32]);
    let mut trans: Vec<Vec<u32>> = Vec::new();
    while let Some(qi) = queue.pop_front() {
        let (comp_states, counters) = states[qi as usize].clone();
        let mut row = Vec::with_capacity(num_letters);
        for letter in 0..num_letters {
            let next_comp: Vec<u32> = comp_states
                .iter()
                .enumerate()
                .map(|(ci, &cs)| comps[ci].trans[cs as usize][letter])
                .collect();
            let mut next_counters = counters.clone();
            for (dj, d) in djs.iter().enumerate() {
                let Some(k) = djs[dj].counter else { continue };
                let (c, _) = next_counters[k];
                let watched = d.recur[c as usize];
                if comps[watched].good[next_comp[watched] as usize] {
                    let c2 = c as usize + 1;
                    next_counters[k] =
                        if c2 == d.recur.len() { (0, true) } else { (c2 as u8, false) };
                } else {
                    next_counters[k] = (c, false);
                }
            }
            let next: ProdState = (next_comp, next_counters);
            let target = *index.entry(next.clone()).or_insert_with(|| {
                let id = states.len() as u32;
                states.push(next);
                queue.push_back(id);
                id
            });
            row.push(target);
        }
        if trans.len() <= qi as usize {
            trans.resize(qi as usize + 1, Vec::new());
        }
        trans[qi as usize] = row;
    }

    let mut pairs = Vec::with_capacity(djs.len());
    for d in &djs {
        let mut fin = Vec::new();
        let mut inf = Vec::new();
        for (qi, (comp_states, counters)) in states.iter().enumerate() {
            let dead = d
                .safe
                .iter()
                .chain(&d.recur)
                .any(|&ci| comps[ci].dead[comp_states[ci] as usize]);
            if dead {
                fin.push(qi as u32);
            }
            let cosafe_ok =
                d.cosafe.iter().all(|&ci| comps[ci].good[comp_states[ci] as usize]);
            let recur_ok = match (d.recur.len(), d.counter) {
                (0, _) => true,
                (1, _) => comps[d.recur[0]].good[comp_states[d.recur[0]] as usize],
                (_, Some(k)) => counters[k].1,
                (_, None) => unreachable!(),
            };
            if cosafe_ok && recur_ok {
                inf.push(qi as u32);
            }
        }
        pairs.push(RabinPair { fin, inf });
    }

    Ok(Dra::new(atom_names, 0, pairs, trans))
}
