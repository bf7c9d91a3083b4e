//! Periodic grid world with simultaneous moves.

pub mod dynamics;
pub mod map;
pub mod observation;
pub mod placement;
pub mod tasks;

pub use dynamics::{resolve_step, Action, AgentState, Direction, Environment, MoveIntent, StepOutcome};
pub use map::{MapSpec, Pos};
pub use observation::{observe, Observation, OBS_DIM, OBS_WINDOW};
pub use placement::{place_agents_checkerboard, Fill, GroupPlacement, PlacementRegion};
pub use tasks::{TaskKind, TaskSetup};
