//! The vacuum-cleaning domain: a two-room household with a robot, a human
//! who wanders and makes messes, and optional hazardous messes. Generates
//! the labeled MDPs and norm sets for the four planning scenarios.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crdra::Norm;
use crate::ltl::{ground, AtomTable, QuantifiedFormula, TemplateFormula, Valuation};
use crate::mdp::{LabeledMdp, MdpBuilder};
use crate::planner::PlannerConfig;

#[derive(Debug, Error)]
pub enum VacuumError {
    #[error("unknown scenario {0}; valid scenarios are 1-4")]
    UnknownScenario(u32),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{1}` for config key `{0}`")]
    BadValue(String, String),
    #[error("bad config: {0}")]
    BadConfig(String),
}

/// A hazardous mess present at episode start.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpecialMess {
    pub room: u8,
    pub dirt: u8,
    /// vacuuming it damages the robot (−2 health, robotDamaged event)
    pub damaging: bool,
    /// an unwarned human entering its room is injured
    pub harmful: bool,
    /// loses 1 unit of dirtiness per step when not vacuumed
    pub evaporates: bool,
}

/// Full parameterization of the domain. Two rooms: Room 1 (index 0, west,
/// holds the dock) and Room 2 (index 1, east).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VacuumConfig {
    pub battery_capacity: u8,
    pub health_capacity: u8,
    pub human_move_prob: f64,
    pub human_mess_prob: f64,
    /// dirtiness added by one human mess
    pub mess_dirt: u8,
    /// per-room ambient dirt saturation cap
    pub dirt_cap: u8,
    pub special_mess: Option<SpecialMess>,
    pub warn_available: bool,
    pub talking_persist_prob: f64,
    pub human_initially_talking: bool,
    pub human_stationary_while_talking: bool,
    pub robot_start_room: u8,
    pub human_start_room: u8,
    pub dock_room: u8,
}

impl Default for VacuumConfig {
    fn default() -> Self {
        VacuumConfig {
            battery_capacity: 10,
            health_capacity: 10,
            human_move_prob: 0.125,
            human_mess_prob: 0.2,
            mess_dirt: 2,
            dirt_cap: 4,
            special_mess: None,
            warn_available: false,
            talking_persist_prob: 0.8,
            human_initially_talking: false,
            human_stationary_while_talking: false,
            robot_start_room: 0,
            human_start_room: 1,
            dock_room: 0,
        }
    }
}

impl VacuumConfig {
    pub fn validate(&self) -> Result<(), VacuumError> {
        for (name, p) in [
            ("human_move_prob", self.human_move_prob),
            ("human_mess_prob", self.human_mess_prob),
            ("talking_persist_prob", self.talking_persist_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(VacuumError::BadConfig(format!("{name} {p} not in [0, 1]")));
            }
        }
        if self.battery_capacity < 1 || self.health_capacity < 1 {
            return Err(VacuumError::BadConfig("capacities must be at least 1".into()));
        }
        if self.dirt_cap < self.mess_dirt {
            return Err(VacuumError::BadConfig("dirt cap below mess increment".into()));
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` override to one field.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), VacuumError> {
        let bad = || VacuumError::BadValue(key.to_string(), value.to_string());
        match key {
            "battery_capacity" => self.battery_capacity = value.parse().map_err(|_| bad())?,
            "health_capacity" => self.health_capacity = value.parse().map_err(|_| bad())?,
            "human_move_prob" => self.human_move_prob = value.parse().map_err(|_| bad())?,
            "human_mess_prob" => self.human_mess_prob = value.parse().map_err(|_| bad())?,
            "mess_dirt" => self.mess_dirt = value.parse().map_err(|_| bad())?,
            "dirt_cap" => self.dirt_cap = value.parse().map_err(|_| bad())?,
            "warn_available" => self.warn_available = value.parse().map_err(|_| bad())?,
            "talking_persist_prob" => {
                self.talking_persist_prob = value.parse().map_err(|_| bad())?
            }
            "human_initially_talking" => {
                self.human_initially_talking = value.parse().map_err(|_| bad())?
            }
            "human_stationary_while_talking" => {
                self.human_stationary_while_talking = value.parse().map_err(|_| bad())?
            }
            "robot_start_room" => self.robot_start_room = value.parse().map_err(|_| bad())?,
            "human_start_room" => self.human_start_room = value.parse().map_err(|_| bad())?,
            "dock_room" => self.dock_room = value.parse().map_err(|_| bad())?,
            _ => return Err(VacuumError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

const NUM_ROOMS: u8 = 2;

/// Battery units drawn by a single vacuum action.
pub const VACUUM_BATTERY_COST: u8 = 2;

/// One configuration of the household.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VacuumState {
    pub robot: u8,
    pub docked: bool,
    pub battery: u8,
    pub health: u8,
    pub human: u8,
    pub dirt: [u8; NUM_ROOMS as usize],
    /// remaining dirtiness of the special mess (0 = gone/absent)
    pub special: u8,
    pub warned: bool,
    pub talking: bool,
    // one-step event flags
    pub just_damaged: bool,
    pub just_injured: bool,
    pub just_talked: bool,
}

impl VacuumState {
    pub fn dead(&self) -> bool {
        self.battery == 0 || self.health == 0
    }

    fn name(&self) -> String {
        format!(
            "r{}{}b{}h{}H{}d{}{}s{}{}{}{}{}{}",
            self.robot,
            if self.docked { "D" } else { "u" },
            self.battery,
            self.health,
            self.human,
            self.dirt[0],
            self.dirt[1],
            self.special,
            if self.warned { "w" } else { "-" },
            if self.talking { "t" } else { "-" },
            if self.just_damaged { "D" } else { "-" },
            if self.just_injured { "I" } else { "-" },
            if self.just_talked { "T" } else { "-" },
        )
    }
}

/// Robot actions, in fixed id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VacuumAction {
    Vacuum,
    Dock,
    Undock,
    Wait,
    MoveEast,
    MoveWest,
    Warn,
    BeDead,
}

pub const ACTIONS: [VacuumAction; 8] = [
    VacuumAction::Vacuum,
    VacuumAction::Dock,
    VacuumAction::Undock,
    VacuumAction::Wait,
    VacuumAction::MoveEast,
    VacuumAction::MoveWest,
    VacuumAction::Warn,
    VacuumAction::BeDead,
];

pub const ACTION_NAMES: [&str; 8] =
    ["vacuum", "dock", "undock", "wait", "moveEast", "moveWest", "warn", "beDead"];

/// Actions available in a state. A dead robot (battery or health 0) can only
/// beDead.
pub fn available_actions(s: &VacuumState, cfg: &VacuumConfig) -> Vec<VacuumAction> {
    if s.dead() {
        return vec![VacuumAction::BeDead];
    }
    let mut out = Vec::new();
    let special_here =
        cfg.special_mess.map(|m| m.room == s.robot && s.special > 0).unwrap_or(false);
    // Vacuuming consumes VACUUM_BATTERY_COST units of battery, so it is only
    // physically available while the battery can cover that draw.
    if (s.dirt[s.robot as usize] > 0 || special_here) && s.battery >= VACUUM_BATTERY_COST {
        out.push(VacuumAction::Vacuum);
    }
    if !s.docked && s.robot == cfg.dock_room {
        out.push(VacuumAction::Dock);
    }
    if s.docked {
        out.push(VacuumAction::Undock);
    }
    out.push(VacuumAction::Wait);
    if !s.docked && s.robot + 1 < NUM_ROOMS {
        out.push(VacuumAction::MoveEast);
    }
    if !s.docked && s.robot > 0 {
        out.push(VacuumAction::MoveWest);
    }
    if cfg.warn_available
        && s.robot == s.human
        && !s.warned
        && cfg.special_mess.is_some()
        && s.special > 0
    {
        out.push(VacuumAction::Warn);
    }
    out
}

/// One-step transition distribution. The robot's deterministic effect is
/// applied first, then the human's stochastic dynamics (move, mess, talking)
/// and environment effects (evaporation, injury on unwarned entry).
pub fn transition(
    s: &VacuumState,
    a: VacuumAction,
    cfg: &VacuumConfig,
) -> Vec<(VacuumState, f64)> {
    let mut mid = *s;
    mid.just_damaged = false;
    mid.just_injured = false;
    mid.just_talked = false;
    let mut vacuumed_special = false;
    match a {
        VacuumAction::Vacuum => {
            mid.battery -= VACUUM_BATTERY_COST;
            let special_here =
                cfg.special_mess.map(|m| m.room == s.robot && s.special > 0).unwrap_or(false);
            if special_here {
                mid.special -= 1;
                vacuumed_special = true;
                if cfg.special_mess.unwrap().damaging {
                    mid.health = mid.health.saturating_sub(2);
                    mid.just_damaged = true;
                }
            } else {
                mid.dirt[s.robot as usize] -= 1;
            }
        }
        VacuumAction::Dock => mid.docked = true,
        VacuumAction::Undock => mid.docked = false,
        VacuumAction::Wait => {
            if mid.docked {
                mid.battery = (mid.battery + 3).min(cfg.battery_capacity);
            } else {
                mid.battery -= 1;
            }
        }
        VacuumAction::MoveEast => {
            mid.robot += 1;
            mid.battery -= 1;
        }
        VacuumAction::MoveWest => {
            mid.robot -= 1;
            mid.battery -= 1;
        }
        VacuumAction::Warn => {
            mid.warned = true;
            mid.just_talked = true;
        }
        VacuumAction::BeDead => {}
    }
    // evaporation applies when the special mess was not vacuumed this step
    if let Some(m) = cfg.special_mess {
        if m.evaporates && !vacuumed_special {
            mid.special = mid.special.saturating_sub(1);
        }
    }

    let move_prob = if s.talking && cfg.human_stationary_while_talking {
        0.0
    } else {
        cfg.human_move_prob
    };
    let talk_owned: Vec<(bool, f64)> = if s.talking {
        vec![(true, cfg.talking_persist_prob), (false, 1.0 - cfg.talking_persist_prob)]
    } else {
        vec![(false, 1.0)]
    };

    let mut out: Vec<(VacuumState, f64)> = Vec::new();
    for &(moved, pm) in &[(true, move_prob), (false, 1.0 - move_prob)] {
        if pm <= 0.0 {
            continue;
        }
        for &(mess, pq) in &[(true, cfg.human_mess_prob), (false, 1.0 - cfg.human_mess_prob)] {
            if pq <= 0.0 {
                continue;
            }
            for &(talking, pt) in &talk_owned {
                if pt <= 0.0 {
                    continue;
                }
                let mut ns = mid;
                if moved {
                    ns.human = 1 - ns.human;
                }
                if mess {
                    ns.dirt[ns.human as usize] =
                        (ns.dirt[ns.human as usize] + cfg.mess_dirt).min(cfg.dirt_cap);
                }
                ns.talking = talking;
                if moved {
                    if let Some(m) = cfg.special_mess {
                        if m.harmful && m.room == ns.human && ns.special > 0 && !ns.warned {
                            ns.just_injured = true;
                        }
                    }
                }
                let p = pm * pq * pt;
                match out.iter_mut().find(|(t, _)| *t == ns) {
                    Some(entry) => entry.1 += p,
                    None => out.push((ns, p)),
                }
            }
        }
    }
    out
}

pub const ATOM_NAMES: [&str; 6] =
    ["roomsClean", "robotDamaged", "human_h1", "injured_h1", "talking_h1", "talk_r"];

/// The valuation of a state: roomsClean (no dirt anywhere), the one-step
/// event flags, the talking status, and the always-true human existence atom.
pub fn labeling(s: &VacuumState, atoms: &AtomTable) -> Valuation {
    let mut v = Valuation::EMPTY;
    let mut set = |name: &str| {
        v.insert(atoms.lookup(name).expect("vacuum atoms interned"));
    };
    if s.dirt.iter().all(|&d| d == 0) && s.special == 0 {
        set("roomsClean");
    }
    if s.just_damaged {
        set("robotDamaged");
    }
    set("human_h1");
    if s.just_injured {
        set("injured_h1");
    }
    if s.talking {
        set("talking_h1");
    }
    if s.just_talked {
        set("talk_r");
    }
    v
}

/// Initial state for a configuration: robot undocked with full battery and
/// health, rooms clean except the special mess, human not yet warned.
pub fn initial_state(cfg: &VacuumConfig) -> VacuumState {
    VacuumState {
        robot: cfg.robot_start_room,
        docked: false,
        battery: cfg.battery_capacity,
        health: cfg.health_capacity,
        human: cfg.human_start_room,
        dirt: [0; NUM_ROOMS as usize],
        special: cfg.special_mess.map(|m| m.dirt).unwrap_or(0),
        warned: false,
        talking: cfg.human_initially_talking,
        just_damaged: false,
        just_injured: false,
        just_talked: false,
    }
}

/// Explores the reachable state space and produces a labeled MDP.
pub fn build_mdp(cfg: &VacuumConfig) -> Result<LabeledMdp, VacuumError> {
    cfg.validate()?;
    let mut atoms = AtomTable::new();
    for name in ATOM_NAMES {
        atoms.intern(name).expect("fixed atom set");
    }
    let table = atoms.clone();
    let mut b = MdpBuilder::new(atoms);
    for name in ACTION_NAMES {
        b.add_action(name).expect("fixed action set");
    }
    let s0 = initial_state(cfg);
    let mut ids: HashMap<VacuumState, u32> = HashMap::new();
    let mut order: Vec<VacuumState> = vec![s0];
    let id0 = b.add_state(&s0.name(), labeling(&s0, &table)).expect("fresh state");
    ids.insert(s0, id0);
    b.set_initial(id0);
    let mut frontier = 0usize;
    while frontier < order.len() {
        let s = order[frontier];
        frontier += 1;
        let sid = ids[&s];
        for a in available_actions(&s, cfg) {
            let dist = transition(&s, a, cfg);
            let mut succ = Vec::with_capacity(dist.len());
            for (t, p) in dist {
                let tid = match ids.get(&t) {
                    Some(&id) => id,
                    None => {
                        let id = b.add_state(&t.name(), labeling(&t, &table)).expect("fresh");
                        ids.insert(t, id);
                        order.push(t);
                        id
                    }
                };
                succ.push((tid, p));
            }
            b.add_transition(sid, a as u32, &succ).expect("one row per action");
        }
    }
    Ok(b.build())
}

fn atom0(name: &str) -> TemplateFormula {
    TemplateFormula::Atom { name: name.to_string(), args: vec![] }
}

fn atom1(name: &str, var: &str) -> TemplateFormula {
    TemplateFormula::Atom { name: name.to_string(), args: vec![var.to_string()] }
}

/// The norm set, grounded over the single human h1 against `atoms`.
pub fn norms_for(ids: &[u32], atoms: &mut AtomTable) -> Vec<Norm> {
    let domain = vec![("Human".to_string(), vec!["h1".to_string()])];
    let mut out = Vec::new();
    for &id in ids {
        let norm = match id {
            1 => {
                let f = crate::ltl::parse_ltl("G roomsClean", atoms).unwrap();
                Norm::new("N1", 1.0, f).unwrap()
            }
            2 => {
                let f = crate::ltl::parse_ltl("G !robotDamaged", atoms).unwrap();
                Norm::new("N2", 200.0, f).unwrap()
            }
            3 => {
                let qf = QuantifiedFormula {
                    vars: vec![("x".to_string(), "Human".to_string())],
                    body: TemplateFormula::Globally(Box::new(TemplateFormula::Implies(
                        Box::new(atom1("human", "x")),
                        Box::new(TemplateFormula::Not(Box::new(atom1("injured", "x")))),
                    ))),
                };
                Norm::new("N3", 40000.0, ground(&qf, &domain, atoms).unwrap()).unwrap()
            }
            4 => {
                let qf = QuantifiedFormula {
                    vars: vec![("h".to_string(), "Human".to_string())],
                    body: TemplateFormula::Globally(Box::new(TemplateFormula::Implies(
                        Box::new(atom1("human", "h")),
                        Box::new(TemplateFormula::Until(
                            Box::new(TemplateFormula::Not(Box::new(atom0("talk_r")))),
                            Box::new(TemplateFormula::Not(Box::new(atom1("talking", "h")))),
                        )),
                    ))),
                };
                Norm::new("N4", 5.0, ground(&qf, &domain, atoms).unwrap()).unwrap()
            }
            other => panic!("unknown norm id {other}"),
        };
        out.push(norm);
    }
    out
}

/// The configuration for one of the four scenarios.
pub fn scenario_config(id: u32) -> Result<(VacuumConfig, Vec<u32>), VacuumError> {
    let base = VacuumConfig::default();
    Ok(match id {
        1 => (base, vec![1]),
        2 => (
            VacuumConfig {
                special_mess: Some(SpecialMess {
                    room: 0,
                    dirt: 3,
                    damaging: true,
                    harmful: false,
                    evaporates: true,
                }),
                ..base
            },
            vec![1, 2],
        ),
        3 => (
            VacuumConfig {
                special_mess: Some(SpecialMess {
                    room: 0,
                    dirt: 1,
                    damaging: true,
                    harmful: true,
                    evaporates: false,
                }),
                ..base
            },
            vec![1, 2, 3],
        ),
        4 => (
            VacuumConfig {
                special_mess: Some(SpecialMess {
                    room: 0,
                    dirt: 1,
                    damaging: true,
                    harmful: true,
                    evaporates: false,
                }),
                warn_available: true,
                battery_capacity: 5,
                human_mess_prob: 0.0,
                human_initially_talking: true,
                human_stationary_while_talking: true,
                ..base
            },
            vec![1, 2, 3, 4],
        ),
        other => return Err(VacuumError::UnknownScenario(other)),
    })
}

/// Builds a complete scenario: the reachable labeled MDP, its norms, and the
/// planner configuration (γ = 0.99 and defaults otherwise).
pub fn build_scenario(
    id: u32,
) -> Result<(LabeledMdp, Vec<Norm>, PlannerConfig), VacuumError> {
    let (cfg, norm_ids) = scenario_config(id)?;
    build_scenario_with(&cfg, &norm_ids)
}

/// Like [`build_scenario`] but from an already-overridden configuration.
pub fn build_scenario_with(
    cfg: &VacuumConfig,
    norm_ids: &[u32],
) -> Result<(LabeledMdp, Vec<Norm>, PlannerConfig), VacuumError> {
    let mut m = build_mdp(cfg)?;
    let norms = norms_for(norm_ids, &mut m.atoms);
    Ok((m, norms, PlannerConfig::default()))
}
