//! Baseline maximal-probability LTL satisfaction: single-automaton product,
//! end-component analysis, and reachability value iteration with an action
//! restriction.

use crate::automata::{AutomataError, Dra, RabinPair};
use crate::mdp::LabeledMdp;

/// Read-only MDP shape shared by [`ProductMdp`] and the conflict product.
/// Choices are positional within each state; callers keep their own mapping
/// from choice index to the semantic action.
pub trait MdpView {
    fn num_states(&self) -> usize;
    fn num_choices(&self, s: u32) -> usize;
    /// Successor distribution for the given choice, sorted by state id.
    fn successors(&self, s: u32, choice: usize) -> &[(u32, f64)];
}

/// Product of a labeled MDP with a deterministic Rabin automaton, restricted
/// to states reachable from the product initial state.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    /// back-map: product state -> environment state
    pub mdp_state: Vec<u32>,
    /// back-map: product state -> automaton state
    pub aut_state: Vec<u32>,
    pub initial: u32,
    /// rows[s] lists (environment action id, distribution over product states)
    rows: Vec<Vec<(u32, Vec<(u32, f64)>)>>,
}

impl ProductMdp {
    /// The environment action behind a positional choice.
    pub fn action_of(&self, s: u32, choice: usize) -> u32 {
        self.rows[s as usize][choice].0
    }
}

impl MdpView for ProductMdp {
    fn num_states(&self) -> usize {
        self.mdp_state.len()
    }

    fn num_choices(&self, s: u32) -> usize {
        self.rows[s as usize].len()
    }

    fn successors(&self, s: u32, choice: usize) -> &[(u32, f64)] {
        &self.rows[s as usize][choice].1
    }
}

/// Builds the product MDP; the automaton reads the label of each state on
/// entry, so the initial product state is (s0, δ(q0, 𝓛(s0))).
pub fn build_product(m: &LabeledMdp, d: &Dra) -> Result<ProductMdp, AutomataError> {
    let proj = d.projector(&m.atoms)?;
    let q0 = d.step(d.initial, m.label(m.initial), &proj);
    let mut index = std::collections::HashMap::new();
    let mut mdp_state = Vec::new();
    let mut aut_state = Vec::new();
    let mut rows = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    index.insert((m.initial, q0), 0u32);
    mdp_state.push(m.initial);
    aut_state.push(q0);
    rows.push(Vec::new());
    queue.push_back(0u32);
    while let Some(ps) = queue.pop_front() {
        let (s, q) = (mdp_state[ps as usize], aut_state[ps as usize]);
        let mut row = Vec::new();
        for a in m.actions_at(s).collect::<Vec<_>>() {
            let dist = m.dist(s, a).unwrap();
            let mut succ = Vec::with_capacity(dist.len());
            for &(t, p) in dist {
                let qt = d.step(q, m.label(t), &proj);
                let pt = *index.entry((t, qt)).or_insert_with(|| {
                    let id = mdp_state.len() as u32;
                    mdp_state.push(t);
                    aut_state.push(qt);
                    rows.push(Vec::new());
                    queue.push_back(id);
                    id
                });
                succ.push((pt, p));
            }
            succ.sort_by_key(|&(t, _)| t);
            // merge duplicates: distinct (t, qt) cannot collide, but be safe
            succ.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            row.push((a, succ));
        }
        rows[ps as usize] = row;
    }
    Ok(ProductMdp { mdp_state, aut_state, initial: 0, rows })
}

/// An end component: a closed, strongly connected sub-MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndComponent {
    /// sorted state ids
    pub states: Vec<u32>,
    /// choices[i] = sorted positional choice indices kept at states[i]
    pub choices: Vec<Vec<u32>>,
}

impl EndComponent {
    pub fn contains(&self, s: u32) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    pub fn choices_at(&self, s: u32) -> &[u32] {
        let i = self.states.binary_search(&s).expect("state not in end component");
        &self.choices[i]
    }
}

/// Maximal end components via the standard iterative SCC-pruning
/// decomposition: repeatedly restrict each state to choices whose successors
/// stay in its current component, split components into SCCs, and drop
/// states left without choices.
pub fn maximal_end_components(view: &dyn MdpView) -> Vec<EndComponent> {
    let n = view.num_states();
    // comp[s] = current candidate component id, or NONE when pruned
    const NONE: u32 = u32::MAX;
    let mut comp: Vec<u32> = vec![0; n];
    let mut allowed: Vec<Vec<u32>> = (0..n)
        .map(|s| (0..view.num_choices(s as u32) as u32).collect())
        .collect();
    loop {
        let mut changed = false;
        // 1. prune choices that leave the state's component
        for s in 0..n {
            if comp[s] == NONE {
                continue;
            }
            let before = allowed[s].len();
            allowed[s].retain(|&c| {
                view.successors(s as u32, c as usize)
                    .iter()
                    .all(|&(t, _)| comp[t as usize] == comp[s])
            });
            if allowed[s].is_empty() {
                comp[s] = NONE;
                changed = true;
            } else if allowed[s].len() != before {
                changed = true;
            }
        }
        // 2. split candidate components into SCCs of the allowed-choice graph
        let scc = scc_ids(n, &comp, &allowed, view);
        for s in 0..n {
            if comp[s] != NONE && comp[s] != scc[s] {
                changed = true;
            }
        }
        if !changed {
            break;
        }
        comp = scc;
    }
    // collect surviving components
    let mut by_comp: std::collections::BTreeMap<u32, (Vec<u32>, Vec<Vec<u32>>)> =
        std::collections::BTreeMap::new();
    for s in 0..n {
        if comp[s] != NONE {
            let entry = by_comp.entry(comp[s]).or_default();
            entry.0.push(s as u32);
            entry.1.push(allowed[s].clone());
        }
    }
    by_comp.into_values().map(|(states, choices)| EndComponent { states, choices }).collect()
}

/// Tarjan SCC (iterative) over non-pruned states using allowed choices only;
/// returns a fresh component id per SCC (NONE states keep NONE).
fn scc_ids(n: usize, comp: &[u32], allowed: &[Vec<u32>], view: &dyn MdpView) -> Vec<u32> {
    const NONE: u32 = u32::MAX;
    let mut out = vec![NONE; n];
    let mut index = vec![u32::MAX; n];
    let mut lowlink = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;

    // edge iteration state for the explicit DFS: (state, choice idx, succ idx)
    let mut frames: Vec<(u32, usize, usize)> = Vec::new();
    for root in 0..n as u32 {
        if comp[root as usize] == NONE || index[root as usize] != u32::MAX {
            continue;
        }
        frames.push((root, 0, 0));
        index[root as usize] = next_index;
        lowlink[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (s, ref mut ci, ref mut si)) = frames.last_mut() {
            let su = s as usize;
            let mut descended = false;
            'edges: while *ci < allowed[su].len() {
                let choice = allowed[su][*ci] as usize;
                let succ = view.successors(s, choice);
                while *si < succ.len() {
                    let t = succ[*si].0;
                    *si += 1;
                    let tu = t as usize;
                    if comp[tu] == NONE || comp[tu] != comp[su] {
                        continue;
                    }
                    if index[tu] == u32::MAX {
                        frames.push((t, 0, 0));
                        index[tu] = next_index;
                        lowlink[tu] = next_index;
                        next_index += 1;
                        stack.push(t);
                        on_stack[tu] = true;
                        descended = true;
                        break 'edges;
                    } else if on_stack[tu] {
                        lowlink[su] = lowlink[su].min(index[tu]);
                    }
                }
                *ci += 1;
                *si = 0;
            }
            if descended {
                continue;
            }
            frames.pop();
            if let Some(&(parent, _, _)) = frames.last() {
                let pu = parent as usize;
                lowlink[pu] = lowlink[pu].min(lowlink[su]);
            }
            if lowlink[su] == index[su] {
                loop {
                    let t = stack.pop().unwrap();
                    on_stack[t as usize] = false;
                    out[t as usize] = next_comp;
                    if t == s {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    out
}

/// Filters MECs to the accepting ones: for some Rabin pair, no state projects
/// into Fin and some state projects into Inf. `aut_of[s]` gives the automaton
/// component of product state `s`.
pub fn accepting_mecs(
    mecs: &[EndComponent],
    aut_of: &[u32],
    pairs: &[RabinPair],
) -> Vec<EndComponent> {
    mecs.iter()
        .filter(|mec| {
            pairs.iter().any(|pair| {
                let no_fin = mec.states.iter().all(|&s| !pair.fin_contains(aut_of[s as usize]));
                let some_inf = mec.states.iter().any(|&s| pair.inf_contains(aut_of[s as usize]));
                no_fin && some_inf
            })
        })
        .cloned()
        .collect()
}

/// Residual tolerance and sweep cap for reachability value iteration.
pub const VI_TOL: f64 = 1e-9;
pub const VI_SWEEP_CAP: usize = 1_000_000;

/// Maximal probability of reaching `s_good` from each state, plus the action
/// restriction A*: the choices achieving the maximum, nonempty exactly on
/// states with positive value or inside `s_good`.
pub fn max_reachability(view: &dyn MdpView, s_good: &[u32]) -> (Vec<f64>, Vec<Vec<u32>>) {
    let n = view.num_states();
    let mut good = vec![false; n];
    for &s in s_good {
        good[s as usize] = true;
    }
    let mut v = vec![0.0f64; n];
    for s in 0..n {
        if good[s] {
            v[s] = 1.0;
        }
    }
    let mut next = v.clone();
    for _ in 0..VI_SWEEP_CAP {
        let mut residual = 0.0f64;
        for s in 0..n {
            if good[s] {
                continue;
            }
            let mut best = 0.0f64;
            for c in 0..view.num_choices(s as u32) {
                let val: f64 =
                    view.successors(s as u32, c).iter().map(|&(t, p)| p * v[t as usize]).sum();
                best = best.max(val);
            }
            residual = residual.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual < VI_TOL {
            break;
        }
    }
    let mut restriction = vec![Vec::new(); n];
    for s in 0..n {
        if !good[s] && v[s] <= 0.0 {
            continue;
        }
        for c in 0..view.num_choices(s as u32) {
            let val: f64 =
                view.successors(s as u32, c).iter().map(|&(t, p)| p * v[t as usize]).sum();
            if (val - v[s]).abs() <= VI_TOL * 10.0 || good[s] && val >= v[s] - VI_TOL * 10.0 {
                restriction[s].push(c as u32);
            }
        }
        if good[s] && restriction[s].is_empty() {
            // a good state may have all choices leaving S_good; any choice is
            // consistent with having already reached the target
            restriction[s] = (0..view.num_choices(s as u32) as u32).collect();
        }
    }
    (v, restriction)
}

/// Convenience wrapper: maximal probability that `m` satisfies the property
/// of `d`, from the initial state, with the per-state values and restriction.
pub fn max_satisfaction_probability(
    m: &LabeledMdp,
    d: &Dra,
) -> Result<(f64, ProductMdp, Vec<f64>, Vec<Vec<u32>>), AutomataError> {
    let prod = build_product(m, d)?;
    let mecs = maximal_end_components(&prod);
    let amecs = accepting_mecs(&mecs, &prod.aut_state, &d.pairs);
    let s_good: Vec<u32> = amecs.iter().flat_map(|e| e.states.iter().copied()).collect();
    let (v, restriction) = max_reachability(&prod, &s_good);
    let p0 = v[prod.initial as usize];
    Ok((p0, prod, v, restriction))
}
