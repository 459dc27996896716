//! Minimal-violation planning: the conflict product MDP over all norms'
//! CRDRAs, per-AMEC violation-cost value iteration, meta-AMEC refinement,
//! and the global value iteration that amalgamates everything into a policy.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::AutomataError;
use crate::crdra::{Crdra, CrdraError, Norm};
use crate::mdp::LabeledMdp;
use crate::satisfaction::{accepting_mecs, maximal_end_components, EndComponent, MdpView};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error(transparent)]
    Crdra(#[from] CrdraError),
    #[error("conflict product exceeds size guard: {states} states > cap {cap}")]
    SizeGuardExceeded { states: usize, cap: usize },
    #[error("no norms supplied")]
    NoNorms,
    #[error("conflict product has no accepting MEC; every norm is suspendable, so this indicates a construction bug")]
    NoAmecFound,
    #[error("bad config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub gamma: f64,
    /// Bellman residual tolerance for all value iterations.
    pub tol: f64,
    /// Epsilon for the epsilon-greedy fallback inside AMECs without a
    /// meta-AMEC.
    pub epsilon: f64,
    /// Whether to run meta-AMEC refinement.
    pub meta_refinement: bool,
    pub sweep_cap: usize,
    pub max_product_states: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: 0.99,
            tol: 1e-9,
            epsilon: 0.01,
            meta_refinement: true,
            sweep_cap: 1_000_000,
            max_product_states: 5_000_000,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(PlannerError::BadConfig(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(PlannerError::BadConfig(format!(
                "epsilon {} not in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(PlannerError::BadConfig(format!("tolerance {} not positive", self.tol)));
        }
        Ok(())
    }
}

/// Sentinel ids for the dummy pre-initial state and its only action.
pub const DUMMY_ENV: u32 = u32::MAX;
pub const DUMMY_ACTION: u32 = u32::MAX;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub product_states: usize,
    pub materialized_choices: usize,
    pub successor_entries: usize,
    /// (|U|+1)·2^n, before dominated-suspension pruning
    pub nominal_action_count: usize,
    pub pruned_choices: usize,
    pub build_ms: u64,
}

/// The conflict product ℳ⊗: environment states (plus a dummy pre-initial
/// state) crossed with every CRDRA's state, with composite actions pairing an
/// environment action with a keep/susp mask over the norms.
///
/// Stored flat (CSR) for cache-friendly value iteration. Product state 0 is
/// always the dummy state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictProduct {
    pub num_norms: usize,
    /// norm weights, in norm order
    pub weights: Vec<f64>,
    /// automaton state counts per norm
    pub aut_sizes: Vec<u32>,
    /// back-map: product state -> environment state (DUMMY_ENV for state 0)
    pub env_state: Vec<u32>,
    /// back-map: aut[s · num_norms + i] = CRDRA i's state component
    pub aut: Vec<u32>,
    /// choice ranges per state: choices of s are choice_start[s]..choice_start[s+1]
    pub choice_start: Vec<u32>,
    /// environment action of each choice (DUMMY_ACTION at the dummy state)
    pub choice_env_action: Vec<u32>,
    /// susp mask of each choice: bit i set means norm i is suspended
    pub choice_mask: Vec<u32>,
    /// W⊗ of each choice: sum of suspended norms' weights
    pub choice_weight: Vec<f64>,
    /// successor ranges per choice (global choice id)
    pub succ_start: Vec<u32>,
    pub succ: Vec<(u32, f64)>,
    pub stats: BuildStats,
    #[serde(skip)]
    index: HashMap<u64, u32>,
}

impl ConflictProduct {
    fn encode(&self, env_code: u64, quts: &[u32]) -> u64 {
        let mut key = env_code;
        for (i, &q) in quts.iter().enumerate() {
            key = key * self.aut_sizes[i] as u64 + q as u64;
        }
        key
    }

    /// Looks up the product state for an environment state and automaton
    /// vector, if reachable.
    pub fn state_of(&self, env: u32, quts: &[u32]) -> Option<u32> {
        let env_code = if env == DUMMY_ENV { 0 } else { env as u64 + 1 };
        self.index.get(&self.encode(env_code, quts)).copied()
    }

    /// Rebuilds the lookup index from the back-maps (after deserialization).
    pub fn rebuild_index(&mut self) {
        self.index.clear();
        for s in 0..self.env_state.len() {
            let env = self.env_state[s];
            let env_code = if env == DUMMY_ENV { 0 } else { env as u64 + 1 };
            let quts = &self.aut[s * self.num_norms..(s + 1) * self.num_norms];
            let key = self.encode(env_code, quts);
            self.index.insert(key, s as u32);
        }
    }

    pub fn aut_of(&self, s: u32, norm: usize) -> u32 {
        self.aut[s as usize * self.num_norms + norm]
    }

    /// Global choice id for a positional choice of a state.
    pub fn choice_id(&self, s: u32, choice: usize) -> usize {
        self.choice_start[s as usize] as usize + choice
    }

    pub fn choice_weight_at(&self, s: u32, choice: usize) -> f64 {
        self.choice_weight[self.choice_id(s, choice)]
    }

    pub fn choice_action_at(&self, s: u32, choice: usize) -> (u32, u32) {
        let c = self.choice_id(s, choice);
        (self.choice_env_action[c], self.choice_mask[c])
    }

    /// Maximum possible violation cost Σᵢ wᵢ/(1−γ).
    pub fn max_cost(&self, gamma: f64) -> f64 {
        self.weights.iter().sum::<f64>() / (1.0 - gamma)
    }

    /// Positional-choice ranges grouped by environment action. Choices of one
    /// action are built contiguously, so each block is a run.
    pub fn action_blocks(&self, s: u32) -> Vec<(u32, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let nc = self.num_choices(s);
        let mut c = 0;
        while c < nc {
            let a = self.choice_env_action[self.choice_id(s, c)];
            let mut e = c + 1;
            while e < nc && self.choice_env_action[self.choice_id(s, e)] == a {
                e += 1;
            }
            out.push((a, c..e));
            c = e;
        }
        out
    }
}

/// One Bellman backup for a block of choices sharing an environment action,
/// with the susp mask resolved per successor: the history interpreter
/// re-decides past norm actions after each observation, so the mask is
/// effectively chosen knowing which environment state came up. The backup is
/// Σ_k p_k · min over masks of (w_mask + γ·v(target_mask(k))).
///
/// `value_of` returns None for inadmissible targets (e.g. outside an AMEC);
/// the result is None when some environment successor has no admissible
/// norm-action option, i.e. the action cannot be taken without leaving the
/// admissible set.
fn reactive_backup(
    product: &ConflictProduct,
    s: u32,
    block: std::ops::Range<usize>,
    gamma: f64,
    value_of: &mut dyn FnMut(u32) -> Option<f64>,
    scratch: &mut Vec<(u32, f64, f64)>, // (env successor, prob, best so far)
) -> Option<f64> {
    scratch.clear();
    for c in block {
        let w = product.choice_weight_at(s, c);
        for &(t, p) in product.successors(s, c) {
            let env = product.env_state[t as usize];
            let val = match value_of(t) {
                Some(v) => w + gamma * v,
                None => f64::INFINITY,
            };
            match scratch.iter_mut().find(|e| e.0 == env) {
                Some(e) => e.2 = e.2.min(val),
                None => scratch.push((env, p, val)),
            }
        }
    }
    let mut q = 0.0;
    for &(_, p, best) in scratch.iter() {
        if !best.is_finite() {
            return None;
        }
        q += p * best;
    }
    Some(q)
}

impl MdpView for ConflictProduct {
    fn num_states(&self) -> usize {
        self.env_state.len()
    }

    fn num_choices(&self, s: u32) -> usize {
        (self.choice_start[s as usize + 1] - self.choice_start[s as usize]) as usize
    }

    fn successors(&self, s: u32, choice: usize) -> &[(u32, f64)] {
        let c = self.choice_id(s, choice);
        &self.succ[self.succ_start[c] as usize..self.succ_start[c + 1] as usize]
    }
}

/// Builds the conflict product, materializing only states reachable from the
/// dummy state.
///
/// Dominated-suspension pruning: if, for a given environment action, norm i's
/// automaton would stay put on every successor's label, suspending i yields
/// the identical successor distribution as keeping it at strictly higher
/// weight — those masks are never optimal and are not materialized. Reachable
/// states and optimal values are unaffected.
pub fn build_conflict_product(
    m: &LabeledMdp,
    crdras: &[Crdra],
    cfg: &PlannerConfig,
) -> Result<ConflictProduct, PlannerError> {
    if crdras.is_empty() {
        return Err(PlannerError::NoNorms);
    }
    let t0 = Instant::now();
    let n = crdras.len();
    let projs: Vec<_> = crdras
        .iter()
        .map(|c| c.dra.projector(&m.atoms))
        .collect::<Result<Vec<_>, _>>()?;
    let mut p = ConflictProduct {
        num_norms: n,
        weights: crdras.iter().map(|c| c.norm.weight).collect(),
        aut_sizes: crdras.iter().map(|c| c.dra.num_states() as u32).collect(),
        env_state: Vec::new(),
        aut: Vec::new(),
        choice_start: vec![0],
        choice_env_action: Vec::new(),
        choice_mask: Vec::new(),
        choice_weight: Vec::new(),
        succ_start: vec![0],
        succ: Vec::new(),
        stats: BuildStats::default(),
        index: HashMap::new(),
    };
    let q0: Vec<u32> = crdras.iter().map(|c| c.dra.initial).collect();
    p.env_state.push(DUMMY_ENV);
    p.aut.extend_from_slice(&q0);
    let key0 = p.encode(0, &q0);
    p.index.insert(key0, 0);
    let mut frontier = 0usize;
    let mut pruned = 0usize;
    // scratch buffers
    let mut keep_targets: Vec<u32> = Vec::new(); // [succ_idx · n + i]
    let mut quts = vec![0u32; n];
    while frontier < p.env_state.len() {
        let ps = frontier as u32;
        frontier += 1;
        let env = p.env_state[ps as usize];
        let q: Vec<u32> = p.aut[ps as usize * n..(ps as usize + 1) * n].to_vec();
        let env_actions: Vec<(u32, Vec<(u32, f64)>)> = if env == DUMMY_ENV {
            vec![(DUMMY_ACTION, vec![(m.initial, 1.0)])]
        } else {
            m.actions_at(env).map(|a| (a, m.dist(env, a).unwrap().to_vec())).collect()
        };
        for (a, dist) in &env_actions {
            // per-successor keep targets, and which norms' susp is dominated
            keep_targets.clear();
            let mut dominated = 0u32;
            for i in 0..n {
                let stays = dist.iter().all(|&(t, _)| {
                    crdras[i].step(q[i], m.label(t), crate::crdra::NormAction::Keep, &projs[i])
                        == q[i]
                });
                if stays {
                    dominated |= 1 << i;
                }
            }
            for &(t, _) in dist {
                for i in 0..n {
                    keep_targets.push(crdras[i].step(
                        q[i],
                        m.label(t),
                        crate::crdra::NormAction::Keep,
                        &projs[i],
                    ));
                }
            }
            let free_bits: Vec<usize> = (0..n).filter(|i| dominated >> i & 1 == 0).collect();
            pruned += ((1usize << n) - (1usize << free_bits.len())) * 1;
            for sub in 0..1u32 << free_bits.len() {
                let mut mask = 0u32;
                for (bi, &i) in free_bits.iter().enumerate() {
                    if sub >> bi & 1 == 1 {
                        mask |= 1 << i;
                    }
                }
                let weight: f64 =
                    (0..n).filter(|i| mask >> i & 1 == 1).map(|i| p.weights[i]).sum();
                for (si, &(t, prob)) in dist.iter().enumerate() {
                    for i in 0..n {
                        quts[i] = if mask >> i & 1 == 1 {
                            q[i]
                        } else {
                            keep_targets[si * n + i]
                        };
                    }
                    let key = p.encode(t as u64 + 1, &quts);
                    let pid = match p.index.get(&key) {
                        Some(&id) => id,
                        None => {
                            let id = p.env_state.len() as u32;
                            if id as usize >= cfg.max_product_states {
                                return Err(PlannerError::SizeGuardExceeded {
                                    states: id as usize + 1,
                                    cap: cfg.max_product_states,
                                });
                            }
                            p.env_state.push(t);
                            p.aut.extend_from_slice(&quts);
                            p.index.insert(key, id);
                            id
                        }
                    };
                    p.succ.push((pid, prob));
                }
                // sort the successor block for deterministic iteration
                let start = *p.succ_start.last().unwrap() as usize;
                p.succ[start..].sort_by_key(|&(t, _)| t);
                // distinct environment successors stay distinct in the
                // product, so no merging is needed
                p.succ_start.push(p.succ.len() as u32);
                p.choice_env_action.push(*a);
                p.choice_mask.push(mask);
                p.choice_weight.push(weight);
            }
        }
        p.choice_start.push(p.choice_env_action.len() as u32);
    }
    p.stats = BuildStats {
        product_states: p.env_state.len(),
        materialized_choices: p.choice_env_action.len(),
        successor_entries: p.succ.len(),
        nominal_action_count: (m.num_actions() + 1) << n,
        pruned_choices: pruned,
        build_ms: t0.elapsed().as_millis() as u64,
    };
    Ok(p)
}

/// Accepting MECs of the conflict product: MECs accepting for every norm's
/// Rabin condition simultaneously.
pub fn conflict_accepting_mecs(product: &ConflictProduct, crdras: &[Crdra]) -> Vec<EndComponent> {
    let mut amecs = maximal_end_components(product);
    for (i, c) in crdras.iter().enumerate() {
        let aut_i: Vec<u32> =
            (0..product.num_states() as u32).map(|s| product.aut_of(s, i)).collect();
        amecs = accepting_mecs(&amecs, &aut_i, &c.dra.pairs);
    }
    amecs
}

/// Per-AMEC minimal expected violation cost and argmin restriction, by value
/// iteration over the AMEC's state-action pairs. An action is available at a
/// state when every environment successor admits some norm-action mask whose
/// target stays in the AMEC; its backup resolves the mask per successor
/// (matching the history interpreter's ex-post re-decision of norm actions).
///
/// Returns, indexed by position in `amec.states`: values, the available
/// actions A_𝓔ⱼ, and the argmin actions A*_𝓔ⱼ — both as representative
/// positional choice ids (the first choice of each action's block).
pub fn amec_violation_vi(
    product: &ConflictProduct,
    amec: &EndComponent,
    cfg: &PlannerConfig,
) -> (Vec<f64>, Vec<Vec<u32>>, Vec<Vec<u32>>, usize) {
    let k = amec.states.len();
    let blocks: Vec<Vec<(u32, std::ops::Range<usize>)>> =
        amec.states.iter().map(|&s| product.action_blocks(s)).collect();
    let mut v = vec![0.0f64; k];
    let mut next = vec![0.0f64; k];
    let mut scratch = Vec::new();
    let mut sweeps = 0usize;
    for _ in 0..cfg.sweep_cap {
        sweeps += 1;
        let mut residual = 0.0f64;
        for (x, &s) in amec.states.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (_, block) in &blocks[x] {
                let q = reactive_backup(
                    product,
                    s,
                    block.clone(),
                    cfg.gamma,
                    &mut |t| amec.states.binary_search(&t).ok().map(|y| v[y]),
                    &mut scratch,
                );
                if let Some(q) = q {
                    best = best.min(q);
                }
            }
            residual = residual.max((best - v[x]).abs());
            next[x] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual < cfg.tol {
            break;
        }
    }
    let mut avail = vec![Vec::new(); k];
    let mut star = vec![Vec::new(); k];
    for (x, &s) in amec.states.iter().enumerate() {
        let mut vals: Vec<(u32, f64)> = Vec::new();
        let mut min = f64::INFINITY;
        for (_, block) in &blocks[x] {
            let q = reactive_backup(
                product,
                s,
                block.clone(),
                cfg.gamma,
                &mut |t| amec.states.binary_search(&t).ok().map(|y| v[y]),
                &mut scratch,
            );
            if let Some(q) = q {
                let rep = block.start as u32;
                avail[x].push(rep);
                min = min.min(q);
                vals.push((rep, q));
            }
        }
        for (c, val) in vals {
            if val - min <= ARGMIN_TOL {
                star[x].push(c);
            }
        }
    }
    (v, avail, star, sweeps)
}

/// Absolute tolerance for argmin membership (ties unspecified upstream; all
/// actions this close to the minimum enter A*).
pub const ARGMIN_TOL: f64 = 1e-9;

/// The in-AMEC policy for one AMEC. Action restrictions are stored as
/// representative positional choice ids (one per environment action); the
/// susp mask of a representative is immaterial because the history
/// interpreter re-decides norm actions from the observed successor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmecPolicy {
    /// sorted product state ids
    pub states: Vec<u32>,
    /// the AMEC's full action restriction A_𝓔ⱼ
    pub full: Vec<Vec<u32>>,
    /// the argmin restriction A*_𝓔ⱼ
    pub star: Vec<Vec<u32>>,
    /// per state: Some(choices) = meta-AMEC-guided restriction (uniform
    /// randomization); None = epsilon-greedy fallback at that state
    pub meta: Vec<Option<Vec<u32>>>,
    /// Viol*_𝓔ⱼ per state
    pub values: Vec<f64>,
}

/// Local sub-MDP of an AMEC restricted to a choice subset.
struct SubView {
    /// rows[local state][local choice] = successors in local ids
    rows: Vec<Vec<Vec<(u32, f64)>>>,
}

impl MdpView for SubView {
    fn num_states(&self) -> usize {
        self.rows.len()
    }
    fn num_choices(&self, s: u32) -> usize {
        self.rows[s as usize].len()
    }
    fn successors(&self, s: u32, choice: usize) -> &[(u32, f64)] {
        &self.rows[s as usize][choice]
    }
}

/// Restricts each AMEC to its argmin choices, recomputes accepting MECs
/// inside, and derives the in-AMEC policy: meta-AMEC states follow the
/// stricter restriction, states that reach a meta-AMEC almost surely under
/// the restriction steer toward it, and everything else falls back to
/// epsilon-greedy.
pub fn meta_amec_refinement(
    product: &ConflictProduct,
    crdras: &[Crdra],
    amecs: &[EndComponent],
    values: &[Vec<f64>],
    avails: &[Vec<Vec<u32>>],
    stars: &[Vec<Vec<u32>>],
    cfg: &PlannerConfig,
) -> Vec<AmecPolicy> {
    let mut out = Vec::with_capacity(amecs.len());
    for (j, amec) in amecs.iter().enumerate() {
        let k = amec.states.len();
        let mut meta: Vec<Option<Vec<u32>>> = vec![None; k];
        if cfg.meta_refinement {
            // Successors of a restricted action: per environment successor,
            // the in-AMEC target the interpreter's per-successor mask argmin
            // picks (ties resolve to the lowest product state id).
            let chosen_row = |x: usize, rep: u32| -> Vec<(u32, f64)> {
                let s = amec.states[x];
                let a = product.choice_env_action[product.choice_id(s, rep as usize)];
                let mut picks: Vec<(u32, f64, f64, u32)> = Vec::new(); // (env, p, val, target)
                let mut c = rep as usize;
                while c < product.num_choices(s)
                    && product.choice_env_action[product.choice_id(s, c)] == a
                {
                    let w = product.choice_weight_at(s, c);
                    for &(t, p) in product.successors(s, c) {
                        let y = match amec.states.binary_search(&t) {
                            Ok(y) => y,
                            Err(_) => continue,
                        };
                        let val = w + cfg.gamma * values[j][y];
                        let env = product.env_state[t as usize];
                        match picks.iter_mut().find(|e| e.0 == env) {
                            Some(e) => {
                                if val < e.2 - ARGMIN_TOL
                                    || (val <= e.2 + ARGMIN_TOL && t < e.3)
                                {
                                    e.2 = val.min(e.2);
                                    e.3 = t;
                                }
                            }
                            None => picks.push((env, p, val, t)),
                        }
                    }
                    c += 1;
                }
                picks
                    .into_iter()
                    .map(|(_, p, _, t)| (amec.states.binary_search(&t).unwrap() as u32, p))
                    .collect()
            };
            let sub = SubView {
                rows: (0..k)
                    .map(|x| stars[j][x].iter().map(|&rep| chosen_row(x, rep)).collect())
                    .collect(),
            };
            let mut metas = maximal_end_components(&sub);
            for (i, c) in crdras.iter().enumerate() {
                let aut_i: Vec<u32> =
                    (0..k).map(|x| product.aut_of(amec.states[x], i)).collect();
                metas = accepting_mecs(&metas, &aut_i, &c.dra.pairs);
            }
            if !metas.is_empty() {
                for me in &metas {
                    for (xi, &x) in me.states.iter().enumerate() {
                        // map sub-view choice indices back to product
                        // positional choices
                        let choices: Vec<u32> =
                            me.choices[xi].iter().map(|&c| stars[j][x as usize][c as usize]).collect();
                        meta[x as usize] = Some(choices);
                    }
                }
                // steer uncovered states toward the meta states where they
                // reach them almost surely under the restriction
                let targets: Vec<u32> =
                    metas.iter().flat_map(|me| me.states.iter().copied()).collect();
                let (reach, restr) = crate::satisfaction::max_reachability(&sub, &targets);
                for x in 0..k {
                    if meta[x].is_none() && reach[x] > 1.0 - 1e-6 {
                        let choices: Vec<u32> =
                            restr[x].iter().map(|&c| stars[j][x][c as usize]).collect();
                        if !choices.is_empty() {
                            meta[x] = Some(choices);
                        }
                    }
                }
            }
        }
        out.push(AmecPolicy {
            states: amec.states.clone(),
            full: avails[j].clone(),
            star: stars[j].clone(),
            meta,
            values: values[j].clone(),
        });
    }
    out
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlanReport {
    pub build: BuildStats,
    pub num_mecs: usize,
    pub num_amecs: usize,
    pub amec_state_count: usize,
    pub no_update_count: usize,
    pub amec_sweeps: usize,
    pub global_sweeps: usize,
    pub plan_ms: u64,
}

/// The amalgamated policy: global values, argmin restriction, AMEC
/// membership with in-AMEC policies, and the noUpdate set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmalgamatedPolicy {
    pub config: PlannerConfig,
    /// Viol* per product state
    pub viol: Vec<f64>,
    /// A* per product state (positional choices); empty exactly on noUpdate
    pub restriction: Vec<Vec<u32>>,
    /// AMEC index per state, or -1
    pub amec_of: Vec<i32>,
    pub amec_policies: Vec<AmecPolicy>,
    pub no_update: Vec<bool>,
    pub report: PlanReport,
}

/// Global min-cost value iteration: AMEC states initialized to their
/// Viol*_𝓔ⱼ, everything else to the maximum cost Σᵢ wᵢ/(1−γ); states that
/// cannot reach any AMEC (noUpdate) are frozen at the maximum and excluded
/// from A*.
pub fn global_violation_vi(
    product: &ConflictProduct,
    policies: Vec<AmecPolicy>,
    cfg: &PlannerConfig,
    mut report: PlanReport,
) -> Result<AmalgamatedPolicy, PlannerError> {
    let t0 = Instant::now();
    let n = product.num_states();
    if policies.is_empty() || policies.iter().all(|p| p.states.is_empty()) {
        return Err(PlannerError::NoAmecFound);
    }
    let max_cost = product.max_cost(cfg.gamma);
    let mut v = vec![max_cost; n];
    let mut amec_of = vec![-1i32; n];
    for (j, pol) in policies.iter().enumerate() {
        for (x, &s) in pol.states.iter().enumerate() {
            v[s as usize] = v[s as usize].min(pol.values[x]);
            if amec_of[s as usize] < 0 {
                amec_of[s as usize] = j as i32;
            }
        }
    }
    // noUpdate: states with no path to any AMEC state. Backward BFS over the
    // reversed successor graph.
    let no_update = {
        let mut indeg = vec![0u32; n];
        for &(t, _) in &product.succ {
            indeg[t as usize] += 1;
        }
        let mut rev_start = vec![0u32; n + 1];
        for s in 0..n {
            rev_start[s + 1] = rev_start[s] + indeg[s];
        }
        let mut rev = vec![0u32; product.succ.len()];
        let mut fill = rev_start.clone();
        for s in 0..n as u32 {
            for c in 0..product.num_choices(s) {
                for &(t, _) in product.successors(s, c) {
                    rev[fill[t as usize] as usize] = s;
                    fill[t as usize] += 1;
                }
            }
        }
        let mut reached = vec![false; n];
        let mut stack: Vec<u32> = Vec::new();
        for s in 0..n {
            if amec_of[s] >= 0 {
                reached[s] = true;
                stack.push(s as u32);
            }
        }
        while let Some(t) = stack.pop() {
            for i in rev_start[t as usize]..rev_start[t as usize + 1] {
                let s = rev[i as usize];
                if !reached[s as usize] {
                    reached[s as usize] = true;
                    stack.push(s);
                }
            }
        }
        reached.iter().map(|&r| !r).collect::<Vec<bool>>()
    };
    report.no_update_count = no_update.iter().filter(|&&b| b).count();

    let blocks: Vec<Vec<(u32, std::ops::Range<usize>)>> =
        (0..n as u32).map(|s| product.action_blocks(s)).collect();
    let mut scratch = Vec::new();
    let mut next = v.clone();
    let mut sweeps = 0usize;
    for _ in 0..cfg.sweep_cap {
        sweeps += 1;
        let mut residual = 0.0f64;
        for s in 0..n {
            if no_update[s] {
                continue;
            }
            let su = s as u32;
            let mut best = f64::INFINITY;
            for (_, block) in &blocks[s] {
                let q = reactive_backup(
                    product,
                    su,
                    block.clone(),
                    cfg.gamma,
                    &mut |t| Some(v[t as usize]),
                    &mut scratch,
                )
                .expect("unrestricted backup is total");
                best = best.min(q);
            }
            residual = residual.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual < cfg.tol {
            break;
        }
    }
    report.global_sweeps = sweeps;

    // A* stores one representative positional choice per optimal environment
    // action; the representative's susp mask is immaterial at execution time.
    let mut restriction: Vec<Vec<u32>> = vec![Vec::new(); n];
    for s in 0..n {
        if no_update[s] {
            continue;
        }
        let su = s as u32;
        let mut vals: Vec<(u32, f64)> = Vec::new();
        let mut min = f64::INFINITY;
        for (_, block) in &blocks[s] {
            let q = reactive_backup(
                product,
                su,
                block.clone(),
                cfg.gamma,
                &mut |t| Some(v[t as usize]),
                &mut scratch,
            )
            .expect("unrestricted backup is total");
            min = min.min(q);
            vals.push((block.start as u32, q));
        }
        for (c, val) in vals {
            if val - min <= ARGMIN_TOL {
                restriction[s].push(c);
            }
        }
    }
    report.plan_ms += t0.elapsed().as_millis() as u64;
    Ok(AmalgamatedPolicy {
        config: cfg.clone(),
        viol: v,
        restriction,
        amec_of,
        amec_policies: policies,
        no_update,
        report,
    })
}

/// Full pipeline: compile each norm to a DRA (unless one is supplied), build
/// CRDRAs and the conflict product, find AMECs, run per-AMEC VI, refine, and
/// amalgamate.
pub fn plan(
    m: &LabeledMdp,
    norms: &[Norm],
    supplied: &[Option<crate::automata::Dra>],
    cfg: &PlannerConfig,
) -> Result<(ConflictProduct, AmalgamatedPolicy), PlannerError> {
    cfg.validate()?;
    if norms.is_empty() {
        return Err(PlannerError::NoNorms);
    }
    let t0 = Instant::now();
    let mut crdras = Vec::with_capacity(norms.len());
    for (i, norm) in norms.iter().enumerate() {
        let dra = match supplied.get(i).and_then(|d| d.clone()) {
            Some(d) => d,
            None => {
                let nnf = crate::ltl::to_nnf(&norm.formula).map_err(|_| {
                    PlannerError::Automata(AutomataError::UnsupportedFragment(format!(
                        "norm {}: negation of an until is outside the supported fragment",
                        norm.name
                    )))
                })?;
                crate::automata::ltl_to_dra(&nnf, &m.atoms)?
            }
        };
        crdras.push(crate::crdra::build_crdra(norm.clone(), dra));
    }
    let product = build_conflict_product(m, &crdras, cfg)?;
    let mecs = maximal_end_components(&product);
    let num_mecs = mecs.len();
    let mut amecs = mecs;
    for (i, c) in crdras.iter().enumerate() {
        let aut_i: Vec<u32> =
            (0..product.num_states() as u32).map(|s| product.aut_of(s, i)).collect();
        amecs = accepting_mecs(&amecs, &aut_i, &c.dra.pairs);
    }
    let mut values = Vec::with_capacity(amecs.len());
    let mut avails = Vec::with_capacity(amecs.len());
    let mut stars = Vec::with_capacity(amecs.len());
    let mut amec_sweeps = 0usize;
    for amec in &amecs {
        let (vals, avail, star, sweeps) = amec_violation_vi(&product, amec, cfg);
        values.push(vals);
        avails.push(avail);
        stars.push(star);
        amec_sweeps += sweeps;
    }
    let policies =
        meta_amec_refinement(&product, &crdras, &amecs, &values, &avails, &stars, cfg);
    let report = PlanReport {
        build: product.stats.clone(),
        num_mecs,
        num_amecs: amecs.len(),
        amec_state_count: amecs.iter().map(|a| a.states.len()).sum(),
        no_update_count: 0,
        amec_sweeps,
        global_sweeps: 0,
        plan_ms: t0.elapsed().as_millis() as u64,
    };
    let policy = global_violation_vi(&product, policies, cfg, report)?;
    Ok((product, policy))
}
