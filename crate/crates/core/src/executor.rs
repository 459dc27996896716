//! Online execution: tracking the set of product-state interpretations
//! consistent with the observed environment history, re-deciding past norm
//! actions by dynamic programming, and selecting actions from the
//! amalgamated policy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::LabeledMdp;
use crate::planner::{AmalgamatedPolicy, ConflictProduct};
use crate::satisfaction::MdpView;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("observed initial state {observed} does not match the planned initial state {planned}")]
    MismatchedInitial { observed: u32, planned: u32 },
    #[error("impossible observation at step {t}: state {observed} has zero probability under action {action}")]
    ImpossibleObservation { t: usize, observed: u32, action: u32 },
    #[error("empty action restriction at product state {state} (planner bug)")]
    EmptyRestriction { state: u32 },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecConfig {
    pub seed: u64,
    /// Interpretation selection discounts Viol* by γ^{t+1}. Setting this
    /// discounts by γ^t instead; non-default, kept for comparison.
    pub viol_exponent_t: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { seed: 0, viol_exponent_t: false }
    }
}

/// The interpreter state after observing s_0 … s_t: every product state
/// consistent with the history (candidates), the minimal accumulated
/// discounted suspension cost reaching each (costs), and backpointers for
/// reconstructing the chosen norm-action history.
#[derive(Debug, Clone)]
pub struct HistoryInterpreter {
    pub t: usize,
    /// R_t, sorted by product state id
    pub candidates: Vec<u32>,
    /// C_t, parallel to `candidates`
    pub costs: Vec<f64>,
    /// s⊗_t: index into `candidates` of the selected interpretation
    pub selected: usize,
    /// per time step: (candidate states, backpointers (prev index, susp mask))
    trail: Vec<(Vec<u32>, Vec<(u32, u32)>)>,
    gamma: f64,
}

impl HistoryInterpreter {
    pub fn selected_state(&self) -> u32 {
        self.candidates[self.selected]
    }

    /// Reconstructs the effective susp masks of one candidate's best
    /// interpretation, time 0..=t.
    pub fn interpretation_of(&self, candidate_index: usize) -> Vec<u32> {
        let mut masks = vec![0u32; self.t + 1];
        let mut idx = candidate_index as u32;
        for step in (0..=self.t).rev() {
            let (_, back) = &self.trail[step];
            let (prev, mask) = back[idx as usize];
            masks[step] = mask;
            idx = prev;
        }
        masks
    }
}

fn select(
    h: &mut HistoryInterpreter,
    policy: &AmalgamatedPolicy,
    cfg: &ExecConfig,
) {
    let exp = if cfg.viol_exponent_t { h.t as i32 } else { h.t as i32 + 1 };
    let disc = h.gamma.powi(exp);
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in h.candidates.iter().enumerate() {
        if policy.no_update[s as usize] {
            continue;
        }
        let score = h.costs[i] + disc * policy.viol[s as usize];
        match best {
            Some((_, b)) if score >= b => {}
            _ => best = Some((i, score)),
        }
    }
    // ties resolve to the lowest state id because candidates are sorted and
    // strict improvement is required above; if every candidate is doomed,
    // fall back to the cheapest interpretation
    h.selected = match best {
        Some((i, _)) => i,
        None => {
            let mut bi = 0;
            for i in 1..h.candidates.len() {
                if h.costs[i] < h.costs[bi] {
                    bi = i;
                }
            }
            bi
        }
    };
}

/// Starts an interpreter from the observed initial environment state: R_0 is
/// every product state reachable from the dummy state in one step whose
/// environment part is s0, with C_0 the cheapest first-step norm actions.
pub fn init_interpreter(
    product: &ConflictProduct,
    policy: &AmalgamatedPolicy,
    observed_s0: u32,
    cfg: &ExecConfig,
) -> Result<HistoryInterpreter, ExecError> {
    let mut cand: Vec<(u32, f64, u32)> = Vec::new(); // (state, cost, mask)
    let mut planned = None;
    for c in 0..product.num_choices(0) {
        let (_, mask) = product.choice_action_at(0, c);
        let w = product.choice_weight_at(0, c);
        for &(t, _) in product.successors(0, c) {
            let env = product.env_state[t as usize];
            planned = Some(env);
            if env != observed_s0 {
                continue;
            }
            match cand.iter_mut().find(|(s, _, _)| *s == t) {
                Some(entry) => {
                    if w < entry.1 {
                        entry.1 = w;
                        entry.2 = mask;
                    }
                }
                None => cand.push((t, w, mask)),
            }
        }
    }
    if cand.is_empty() {
        return Err(ExecError::MismatchedInitial {
            observed: observed_s0,
            planned: planned.unwrap_or(u32::MAX),
        });
    }
    cand.sort_by_key(|&(s, _, _)| s);
    let candidates: Vec<u32> = cand.iter().map(|&(s, _, _)| s).collect();
    let costs: Vec<f64> = cand.iter().map(|&(_, c, _)| c).collect();
    let back: Vec<(u32, u32)> = cand.iter().map(|&(_, _, m)| (0, m)).collect();
    let mut h = HistoryInterpreter {
        t: 0,
        candidates: candidates.clone(),
        costs,
        selected: 0,
        trail: vec![(candidates, back)],
        gamma: policy.config.gamma,
    };
    select(&mut h, policy, cfg);
    Ok(h)
}

/// Advances the interpreter by one observed step: relaxes every candidate
/// over the product choices matching the executed environment action and the
/// observed successor, then re-selects the current interpretation.
pub fn step_interpret(
    h: &mut HistoryInterpreter,
    product: &ConflictProduct,
    policy: &AmalgamatedPolicy,
    action: u32,
    observed: u32,
    cfg: &ExecConfig,
) -> Result<(), ExecError> {
    let t = h.t + 1;
    let step_disc = h.gamma.powi(t as i32);
    let mut cand: Vec<(u32, f64, u32, u32)> = Vec::new(); // (state, cost, prev idx, mask)
    for (i, &s) in h.candidates.iter().enumerate() {
        for c in 0..product.num_choices(s) {
            let (a, mask) = product.choice_action_at(s, c);
            if a != action {
                continue;
            }
            let cost = h.costs[i] + step_disc * product.choice_weight_at(s, c);
            for &(tgt, prob) in product.successors(s, c) {
                if prob <= 0.0 || product.env_state[tgt as usize] != observed {
                    continue;
                }
                match cand.iter_mut().find(|(u, _, _, _)| *u == tgt) {
                    Some(entry) => {
                        if cost < entry.1 {
                            entry.1 = cost;
                            entry.2 = i as u32;
                            entry.3 = mask;
                        }
                    }
                    None => cand.push((tgt, cost, i as u32, mask)),
                }
            }
        }
    }
    if cand.is_empty() {
        return Err(ExecError::ImpossibleObservation { t, observed, action });
    }
    cand.sort_by_key(|&(s, _, _, _)| s);
    h.t = t;
    h.candidates = cand.iter().map(|&(s, _, _, _)| s).collect();
    h.costs = cand.iter().map(|&(_, c, _, _)| c).collect();
    let back: Vec<(u32, u32)> = cand.iter().map(|&(_, _, p, m)| (p, m)).collect();
    h.trail.push((h.candidates.clone(), back));
    select(h, policy, cfg);
    Ok(())
}

/// Picks a product action at the selected interpretation: π^AMEC inside an
/// AMEC (meta restriction with uniform randomization, or epsilon-greedy),
/// uniform over A* outside. Returns (environment action, susp mask); the
/// mask is the representative choice's and is advisory only — the effective
/// norm actions are re-decided by the history interpreter after each
/// observation.
pub fn select_action(
    h: &HistoryInterpreter,
    product: &ConflictProduct,
    policy: &AmalgamatedPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(u32, u32), ExecError> {
    let s = h.selected_state();
    let j = policy.amec_of[s as usize];
    // Inside an AMEC whose interior optimum matches the amalgamated value —
    // i.e. staying in this AMEC is globally optimal — follow π^AMEC: where a
    // meta-AMEC covers the state, uniform over its stricter restriction;
    // otherwise epsilon-greedy between the argmin restriction A* (w.p. 1−ε)
    // and the full AMEC restriction (w.p. ε) so every AMEC state keeps a
    // nonzero visit probability and the Rabin condition stays satisfiable.
    // Where the amalgamated value is strictly below the interior optimum, the
    // optimum leaves this AMEC for a cheaper one, so the state is treated as
    // transient: uniform over the global argmin restriction, as outside
    // AMECs.
    let in_amec = j >= 0 && {
        let pol = &policy.amec_policies[j as usize];
        let x = pol.states.binary_search(&s).expect("amec membership is consistent");
        let v = policy.viol[s as usize];
        pol.values[x] <= v + 1e-6 * (1.0 + v.abs())
    };
    let choice = if in_amec {
        let pol = &policy.amec_policies[j as usize];
        let x = pol.states.binary_search(&s).expect("amec membership is consistent");
        match &pol.meta[x] {
            Some(choices) => choices[rng.gen_range(0..choices.len())],
            None => {
                if rng.gen_bool(policy.config.epsilon) {
                    pol.full[x][rng.gen_range(0..pol.full[x].len())]
                } else {
                    pol.star[x][rng.gen_range(0..pol.star[x].len())]
                }
            }
        }
    } else {
        let restr = &policy.restriction[s as usize];
        if restr.is_empty() {
            return Err(ExecError::EmptyRestriction { state: s });
        }
        restr[rng.gen_range(0..restr.len())]
    };
    Ok(product.choice_action_at(s, choice as usize))
}

/// One executed step, written after the episode from the final
/// interpretation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub env_state: u32,
    pub env_state_name: String,
    /// environment action taken at this step; None on the final record
    pub action: Option<u32>,
    pub action_name: Option<String>,
    /// effective susp mask at this step under the final interpretation
    pub effective_mask: u32,
    /// instantaneous suspension weight Σ_{i: susp} wᵢ (undiscounted)
    pub step_weight: f64,
    /// Σ_{τ≤t} γ^τ · weight_τ under the final interpretation
    pub accumulated_cost: f64,
    /// per-norm automaton states of the selected interpretation at t
    pub aut_states: Vec<u32>,
}

/// A full episode: per-step records plus the per-step revision history of
/// the selected interpretation (masks for times 0..=τ at each τ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// revisions[τ] = the susp-mask history the interpreter believed at τ
    pub revisions: Vec<Vec<u32>>,
    pub total_cost: f64,
}

impl ExecutionTrace {
    /// Delimited-text export, one row per step.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("t\tstate\taction\tsusp_mask\tstep_weight\taccumulated_cost\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:#06b}\t{}\t{}\n",
                s.t,
                s.env_state_name,
                s.action_name.as_deref().unwrap_or("-"),
                s.effective_mask,
                s.step_weight,
                s.accumulated_cost
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }
}

/// Runs one episode of `horizon` steps: samples environment transitions with
/// a seeded generator, interleaving interpretation and action selection.
pub fn run_episode(
    m: &LabeledMdp,
    product: &ConflictProduct,
    policy: &AmalgamatedPolicy,
    horizon: usize,
    cfg: &ExecConfig,
) -> Result<ExecutionTrace, ExecError> {
    if horizon == 0 {
        return Err(ExecError::ZeroHorizon);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut h = init_interpreter(product, policy, m.initial, cfg)?;
    let mut env = m.initial;
    let mut actions: Vec<u32> = Vec::new();
    let mut states: Vec<u32> = vec![env];
    let mut aut_trail: Vec<Vec<u32>> =
        vec![(0..product.num_norms).map(|i| product.aut_of(h.selected_state(), i)).collect()];
    let mut revisions: Vec<Vec<u32>> = vec![h.interpretation_of(h.selected)];
    for _ in 0..horizon {
        let (a, _) = select_action(&h, product, policy, &mut rng)?;
        let dist = m.dist(env, a).expect("policy actions are available");
        let mut roll: f64 = rng.gen();
        let mut next = dist.last().unwrap().0;
        for &(t, p) in dist {
            if roll < p {
                next = t;
                break;
            }
            roll -= p;
        }
        step_interpret(&mut h, product, policy, a, next, cfg)?;
        actions.push(a);
        states.push(next);
        env = next;
        aut_trail
            .push((0..product.num_norms).map(|i| product.aut_of(h.selected_state(), i)).collect());
        revisions.push(h.interpretation_of(h.selected));
    }
    // final interpretation governs the reported effective norm actions
    let final_masks = revisions.last().unwrap().clone();
    let gamma = policy.config.gamma;
    let mut steps = Vec::with_capacity(states.len());
    let mut acc = 0.0f64;
    for (t, &s) in states.iter().enumerate() {
        let mask = final_masks[t];
        let w: f64 = (0..product.num_norms)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| product.weights[i])
            .sum();
        acc += gamma.powi(t as i32) * w;
        let action = actions.get(t).copied();
        steps.push(StepRecord {
            t,
            env_state: s,
            env_state_name: m.state_names[s as usize].clone(),
            action,
            action_name: action.map(|a| m.action_names[a as usize].clone()),
            effective_mask: mask,
            step_weight: w,
            accumulated_cost: acc,
            aut_states: aut_trail[t].clone(),
        });
    }
    Ok(ExecutionTrace { seed: cfg.seed, steps, revisions, total_cost: acc })
}
