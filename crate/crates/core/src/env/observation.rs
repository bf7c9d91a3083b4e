//! Local 11×11×2 bitmap seen by each agent.
//!
//! Feature index of window cell `(row, col)` and channel `ch` is
//! `(row·11 + col)·2 + ch`, with the observer at `(5, 5)`. Channel 0 marks
//! agents (the observer included), channel 1 marks walls. Rows above or below
//! the map read as walls.

use super::dynamics::AgentState;
use super::map::MapSpec;

pub const OBS_WINDOW: usize = 11;
pub const OBS_DIM: usize = OBS_WINDOW * OBS_WINDOW * 2;
const HALF: i64 = (OBS_WINDOW / 2) as i64;

/// Chebyshev ring of an observation feature: 1 for the 3×3 core,
/// 2 for the rest of the 7×7 block, 3 for the outer band.
pub fn ring_of_feature(feature: usize) -> usize {
    let cell = feature / 2;
    let row = (cell / OBS_WINDOW) as i64 - HALF;
    let col = (cell % OBS_WINDOW) as i64 - HALF;
    match row.abs().max(col.abs()) {
        0 | 1 => 1,
        2 | 3 => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub bits: Vec<f64>,
}

impl Observation {
    /// `(agent, wall)` bits of the cell at offset `(dx, dy)` from the observer.
    pub fn cell(&self, dx: i64, dy: i64) -> (u8, u8) {
        let i = feature_index(dx, dy);
        (self.bits[i] as u8, self.bits[i + 1] as u8)
    }
}

fn feature_index(dx: i64, dy: i64) -> usize {
    let row = (dy + HALF) as usize;
    let col = (dx + HALF) as usize;
    (row * OBS_WINDOW + col) * 2
}

/// Fill `out` with the observation around `center`. `occupied(pos)` reports
/// whether an agent stands on a cell.
pub(crate) fn fill_observation(
    map: &MapSpec,
    center: super::map::Pos,
    occupied: impl Fn(super::map::Pos) -> bool,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), OBS_DIM);
    out.fill(0.0);
    for dy in -HALF..=HALF {
        for dx in -HALF..=HALF {
            let i = feature_index(dx, dy);
            match map.resolve(center.x as i64 + dx, center.y as i64 + dy) {
                None => out[i + 1] = 1.0,
                Some(p) if !map.is_walkable(p) => out[i + 1] = 1.0,
                Some(p) if occupied(p) => out[i] = 1.0,
                Some(_) => {}
            }
        }
    }
}

/// Observation of agent `observer_id`.
pub fn observe(map: &MapSpec, agents: &[AgentState], observer_id: usize) -> Option<Observation> {
    let me = agents.iter().find(|a| a.id == observer_id)?;
    let mut occupancy = vec![false; map.width * map.height];
    for a in agents {
        occupancy[map.index(a.position)] = true;
    }
    let mut bits = vec![0.0; OBS_DIM];
    fill_observation(map, me.position, |p| occupancy[map.index(p)], &mut bits);
    Some(Observation { bits })
}
