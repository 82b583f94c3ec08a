//! Coalition-based UAV swarm simulator.
//!
//! UAVs cover an importance-weighted mission area while organized into
//! overlapping communication coalitions. Coalition structure, placement and
//! channel use are shaped by a coalition formation game whose potential is
//! the global objective, a relay matching game and a channel potential game,
//! driven by best-response, log-linear or tabular Q-learning dynamics.

pub mod coalition;
pub mod engine;
pub mod event;
pub mod games;
pub mod geometry;
pub mod ids;
pub mod learning;
pub mod radio;
pub mod scenario;

pub use coalition::{Coalition, ElectionEnv, PartitionError, PartitionState};
pub use engine::{evaluate_configuration, run, Engine, MetricsRecord, Trace};
pub use event::{Cause, Event, EventKind};
pub use games::{GameAction, GameContext, ObjectiveBreakdown, SwarmState};
pub use geometry::{Point, Rect};
pub use ids::{CoalitionId, UavId};
pub use learning::{Algo, LearnerConfig};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
