//! The two shipped scenarios.
//!
//! `task1` is a periodic road that forks into a two-cell-wide direct route and
//! a four-cell-wide detour below it; all agents walk right and form one group.
//! `task2` is an open 8×20 corridor with right-walkers (group 0) starting on
//! the left and left-walkers (group 1) starting on the right.

use serde::{Deserialize, Serialize};

use super::dynamics::{AgentState, Direction, Environment};
use super::map::MapSpec;
use super::placement::{place_agents_checkerboard, Fill, GroupPlacement, PlacementRegion};
use crate::error::{Error, Result};

pub const TASK1_MAP: &str = include_str!("../../maps/task1_forked_road.txt");
pub const TASK2_MAP: &str = include_str!("../../maps/task2_corridor.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Task1,
    Task2,
}

impl TaskKind {
    pub fn default_map(self) -> MapSpec {
        match self {
            TaskKind::Task1 => MapSpec::parse("task1_forked_road", TASK1_MAP),
            TaskKind::Task2 => MapSpec::parse("task2_corridor", TASK2_MAP),
        }
        .expect("shipped map parses")
    }

    pub fn n_groups(self) -> usize {
        match self {
            TaskKind::Task1 => 1,
            TaskKind::Task2 => 2,
        }
    }

    /// Region holding the initial checkerboard on the shipped map.
    pub fn default_region(self, map: &MapSpec) -> PlacementRegion {
        match self {
            // unforked stretch: columns 17..=23 and 0..=6 across the seam, rows 0..6
            TaskKind::Task1 => PlacementRegion {
                x0: 17,
                y0: 0,
                width: 14,
                height: 6,
            },
            TaskKind::Task2 => PlacementRegion::whole(map),
        }
    }

    pub fn groups(self, n_agent: usize) -> Vec<GroupPlacement> {
        match self {
            TaskKind::Task1 => vec![GroupPlacement {
                group: 0,
                direction: Direction::Right,
                count: n_agent,
                fill: Fill::FromLeft,
            }],
            TaskKind::Task2 => vec![
                GroupPlacement {
                    group: 0,
                    direction: Direction::Right,
                    count: n_agent.div_ceil(2),
                    fill: Fill::FromLeft,
                },
                GroupPlacement {
                    group: 1,
                    direction: Direction::Left,
                    count: n_agent / 2,
                    fill: Fill::FromRight,
                },
            ],
        }
    }

    pub fn setup(self, n_agent: usize) -> Result<TaskSetup> {
        let map = self.default_map();
        let region = self.default_region(&map);
        Ok(TaskSetup {
            task: self,
            groups: self.groups(n_agent),
            map,
            region,
        })
    }
}

/// Everything needed to (re)build the initial world of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSetup {
    pub task: TaskKind,
    pub map: MapSpec,
    pub region: PlacementRegion,
    pub groups: Vec<GroupPlacement>,
}

impl TaskSetup {
    pub fn with_map(mut self, map: MapSpec) -> Self {
        self.map = map;
        self
    }

    pub fn with_region(mut self, region: PlacementRegion) -> Self {
        self.region = region;
        self
    }

    pub fn n_agent(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn n_groups(&self) -> usize {
        self.task.n_groups()
    }

    pub fn initial_agents(&self) -> Result<Vec<AgentState>> {
        if self.region.x0 >= self.map.width || self.region.y0 >= self.map.height {
            return Err(Error::invalid(format!(
                "placement region origin ({}, {}) lies outside the {}×{} map",
                self.region.x0, self.region.y0, self.map.width, self.map.height
            )));
        }
        place_agents_checkerboard(&self.map, &self.region, &self.groups)
    }

    /// Fresh environment in its initial state.
    pub fn environment(&self) -> Result<Environment> {
        Environment::new(self.map.clone(), self.initial_agents()?)
    }
}
