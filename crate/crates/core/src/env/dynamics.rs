use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::map::{MapSpec, Pos};
use super::observation::{fill_observation, OBS_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Right,
    Left,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Right, Action::Left];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Cell offset; y grows downward.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Right => (1, 0),
            Action::Left => (-1, 0),
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Right => Action::Left,
            Action::Left => Action::Right,
            other => other,
        }
    }
}

/// Direction an agent is rewarded for walking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Right => 1,
            Direction::Left => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub id: usize,
    pub position: Pos,
    pub group: usize,
    pub direction: Direction,
    pub cumulative_reward: i64,
    /// Net horizontal displacement, unwrapped across the periodic seam.
    pub displacement: i64,
}

impl AgentState {
    pub fn new(id: usize, position: Pos, group: usize, direction: Direction) -> Self {
        AgentState {
            id,
            position,
            group,
            direction,
            cumulative_reward: 0,
            displacement: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveIntent {
    pub agent_id: usize,
    pub action: Action,
    /// Destination after horizontal wrap; `None` if it leaves the map.
    pub target: Option<Pos>,
}

impl MoveIntent {
    pub fn new(map: &MapSpec, agent: &AgentState, action: Action) -> Self {
        let (dx, dy) = action.offset();
        MoveIntent {
            agent_id: agent.id,
            action,
            target: map.resolve(agent.position.x as i64 + dx, agent.position.y as i64 + dy),
        }
    }
}

/// Result of one simultaneous update, indexed like the input agent slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub positions: Vec<Pos>,
    pub rewards: Vec<i64>,
    /// Signed horizontal step of each agent (0 for vertical or failed moves).
    pub dx: Vec<i64>,
}

/// Resolve all intents against the pre-move occupancy.
///
/// A move succeeds iff its target is on the map, walkable, vacant before the
/// step, and targeted by no other intent. Moving into a cell that another
/// agent is leaving this step fails, and so do swaps.
pub fn resolve_step(map: &MapSpec, agents: &[AgentState], intents: &[MoveIntent]) -> Result<StepOutcome> {
    let mut slot_of: HashMap<usize, usize> = HashMap::with_capacity(agents.len());
    for (k, a) in agents.iter().enumerate() {
        if slot_of.insert(a.id, k).is_some() {
            return Err(Error::ContractViolation(format!("duplicate agent id {}", a.id)));
        }
    }
    let mut intent_of: Vec<Option<&MoveIntent>> = vec![None; agents.len()];
    for intent in intents {
        let k = *slot_of.get(&intent.agent_id).ok_or_else(|| {
            Error::ContractViolation(format!("intent for unknown agent {}", intent.agent_id))
        })?;
        if intent_of[k].replace(intent).is_some() {
            return Err(Error::ContractViolation(format!(
                "agent {} has more than one intent",
                intent.agent_id
            )));
        }
    }
    if intent_of.iter().any(Option::is_none) {
        return Err(Error::ContractViolation("every agent needs exactly one intent".into()));
    }

    let cells = map.width * map.height;
    let mut occupied = vec![false; cells];
    for a in agents {
        occupied[map.index(a.position)] = true;
    }
    let mut claims = vec![0u32; cells];
    for intent in intents {
        if let Some(t) = intent.target {
            claims[map.index(t)] += 1;
        }
    }

    let mut out = StepOutcome {
        positions: Vec::with_capacity(agents.len()),
        rewards: Vec::with_capacity(agents.len()),
        dx: Vec::with_capacity(agents.len()),
    };
    for (a, intent) in agents.iter().zip(&intent_of) {
        let intent = intent.expect("checked above");
        let success = intent.target.is_some_and(|t| {
            map.is_walkable(t) && !occupied[map.index(t)] && claims[map.index(t)] == 1
        });
        if success {
            let dx = intent.action.offset().0;
            out.positions.push(intent.target.unwrap());
            out.dx.push(dx);
            out.rewards.push(dx * a.direction.sign());
        } else {
            out.positions.push(a.position);
            out.dx.push(0);
            out.rewards.push(0);
        }
    }
    Ok(out)
}

/// Mutable world: map, agents, and a cached occupancy grid.
#[derive(Debug, Clone)]
pub struct Environment {
    map: MapSpec,
    agents: Vec<AgentState>,
    initial: Vec<AgentState>,
    occupancy: Vec<bool>,
}

impl Environment {
    pub fn new(map: MapSpec, agents: Vec<AgentState>) -> Result<Self> {
        let mut occupancy = vec![false; map.width * map.height];
        for a in &agents {
            if !map.is_walkable(a.position) {
                return Err(Error::invalid(format!(
                    "agent {} placed on non-walkable cell {:?}",
                    a.id, a.position
                )));
            }
            let i = map.index(a.position);
            if occupancy[i] {
                return Err(Error::invalid(format!("two agents share cell {:?}", a.position)));
            }
            occupancy[i] = true;
        }
        Ok(Environment {
            initial: agents.clone(),
            map,
            agents,
            occupancy,
        })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Restore the initial placement and zero the rewards.
    pub fn reset(&mut self) {
        self.agents.clone_from(&self.initial);
        self.rebuild_occupancy();
    }

    fn rebuild_occupancy(&mut self) {
        self.occupancy.fill(false);
        for a in &self.agents {
            let i = self.map.index(a.position);
            self.occupancy[i] = true;
        }
    }

    pub fn observe_into(&self, agent: usize, out: &mut [f64]) {
        assert_eq!(out.len(), OBS_DIM);
        fill_observation(
            &self.map,
            self.agents[agent].position,
            |p| self.occupancy[self.map.index(p)],
            out,
        );
    }

    /// Apply one action per agent (in agent order); returns the rewards.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<i64>> {
        if actions.len() != self.agents.len() {
            return Err(Error::invalid(format!(
                "expected {} actions, got {}",
                self.agents.len(),
                actions.len()
            )));
        }
        let intents: Vec<MoveIntent> = self
            .agents
            .iter()
            .zip(actions)
            .map(|(a, &act)| MoveIntent::new(&self.map, a, act))
            .collect();
        let outcome = resolve_step(&self.map, &self.agents, &intents)?;
        for (k, a) in self.agents.iter_mut().enumerate() {
            a.position = outcome.positions[k];
            a.cumulative_reward += outcome.rewards[k];
            a.displacement += outcome.dx[k];
        }
        self.rebuild_occupancy();
        Ok(outcome.rewards)
    }
}
