//! Checkerboard initial placement.
//!
//! Slots are the walkable cells of a rectangular region with `(x + y)` even,
//! enumerated column by column (top to bottom inside a column). A group that
//! fills from the left takes slots from the region's left edge onward; a
//! group that fills from the right takes them from the right edge backward.

use serde::{Deserialize, Serialize};

use super::dynamics::{AgentState, Direction};
use super::map::{MapSpec, Pos};
use crate::error::{Error, Result};

/// Rectangle of the map, wrapping horizontally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    FromLeft,
    FromRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupPlacement {
    pub group: usize,
    pub direction: Direction,
    pub count: usize,
    pub fill: Fill,
}

impl PlacementRegion {
    pub fn whole(map: &MapSpec) -> Self {
        PlacementRegion {
            x0: 0,
            y0: 0,
            width: map.width,
            height: map.height,
        }
    }

    /// Checkerboard slots in left-to-right column order.
    pub fn slots(&self, map: &MapSpec) -> Vec<Pos> {
        let mut out = Vec::new();
        for dx in 0..self.width {
            let x = (self.x0 + dx) % map.width;
            for y in self.y0..(self.y0 + self.height).min(map.height) {
                let p = Pos::new(x, y);
                if (x + y).is_multiple_of(2) && map.is_walkable(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

pub fn place_agents_checkerboard(
    map: &MapSpec,
    region: &PlacementRegion,
    groups: &[GroupPlacement],
) -> Result<Vec<AgentState>> {
    let left = region.slots(map);
    let mut right_by_column = left.clone();
    // reverse column order but keep top-to-bottom inside a column
    right_by_column.sort_by(|a, b| {
        let ca = column_rank(region, map, a.x);
        let cb = column_rank(region, map, b.x);
        cb.cmp(&ca).then(a.y.cmp(&b.y))
    });
    let requested: usize = groups.iter().map(|g| g.count).sum();
    if requested > left.len() {
        return Err(Error::Capacity {
            requested,
            available: left.len(),
        });
    }
    let mut taken = vec![false; map.width * map.height];
    let mut agents = Vec::with_capacity(requested);
    for g in groups {
        let order = match g.fill {
            Fill::FromLeft => &left,
            Fill::FromRight => &right_by_column,
        };
        let free: Vec<Pos> = order
            .iter()
            .copied()
            .filter(|p| !taken[map.index(*p)])
            .take(g.count)
            .collect();
        if free.len() < g.count {
            return Err(Error::Capacity {
                requested,
                available: left.len(),
            });
        }
        for p in free {
            taken[map.index(p)] = true;
            agents.push(AgentState::new(agents.len(), p, g.group, g.direction));
        }
    }
    Ok(agents)
}

fn column_rank(region: &PlacementRegion, map: &MapSpec, x: usize) -> usize {
    (x + map.width - region.x0 % map.width) % map.width
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TaskKind;
    use std::collections::HashSet;

    #[test]
    fn zero_agents() {
        let map = MapSpec::open("o", 4, 4);
        let a = place_agents_checkerboard(&map, &PlacementRegion::whole(&map), &[]).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn corridor_sixteen_is_separated() {
        let setup = TaskKind::Task2.setup(16).unwrap();
        let agents = setup.initial_agents().unwrap();
        let right: Vec<_> = agents.iter().filter(|a| a.direction == Direction::Right).collect();
        let left: Vec<_> = agents.iter().filter(|a| a.direction == Direction::Left).collect();
        assert_eq!((right.len(), left.len()), (8, 8));
        let rc: HashSet<usize> = right.iter().map(|a| a.position.x).collect();
        let lc: HashSet<usize> = left.iter().map(|a| a.position.x).collect();
        assert_eq!(rc, HashSet::from([0, 1]));
        assert_eq!(lc, HashSet::from([18, 19]));
        for a in &agents {
            assert_eq!((a.position.x + a.position.y) % 2, 0);
        }
    }

    #[test]
    fn capacity_error() {
        let err = TaskKind::Task2.setup(200).unwrap().initial_agents().unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 200, available: 80 }));
    }

    #[test]
    fn forked_road_holds_forty_in_unforked_part() {
        let setup = TaskKind::Task1.setup(40).unwrap();
        let agents = setup.initial_agents().unwrap();
        assert_eq!(agents.len(), 40);
        for a in &agents {
            assert!(a.position.y < 6);
            assert!(a.position.x <= 6 || a.position.x >= 17);
        }
    }

    #[test]
    fn positions_distinct_and_walkable() {
        for (task, n) in [(TaskKind::Task1, 12), (TaskKind::Task1, 40), (TaskKind::Task2, 64)] {
            let setup = task.setup(n).unwrap();
            let agents = setup.initial_agents().unwrap();
            let set: HashSet<Pos> = agents.iter().map(|a| a.position).collect();
            assert_eq!(set.len(), n);
            assert!(agents.iter().all(|a| setup.map.is_walkable(a.position)));
        }
    }
}
