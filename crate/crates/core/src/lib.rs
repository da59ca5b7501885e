//! Scout-assisted planning for teams of ground robots and scouting drones on
//! graphs whose edges may be blocked.

pub mod action;
pub mod belief;
pub mod dataset;
pub mod envgen;
pub mod error;
pub mod graph;
pub mod harness;
pub mod planner;
pub mod pruning;
pub mod rng;

pub use action::{JointAction, RobotId, SingleAction, Target};
pub use belief::{BeliefState, GroundRobot, Observation};
pub use envgen::{generate, EnvKind, EnvSpec, Scenario, TeamConfig};
pub use error::{Error, Result};
pub use graph::{EdgeId, EdgeKnowledge, EdgeStatus, GraphView, NodeId, Point, Pose, WorldGraph, WorldSample};
pub use planner::{run_episode, PlannerConfig, PlannerKind, PruningStrategy};
