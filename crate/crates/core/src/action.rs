use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

/// Team-wide robot index. Ground robots come first (`0..N`), drones after
/// (`N..N+M`).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

impl RobotId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Node(NodeId),
    /// Drone filler action once nothing is left to scout.
    Idle,
}

/// One robot heading for one node. Ordering is by robot, then target, which
/// is the tie-break order used throughout the planner.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SingleAction {
    pub robot: RobotId,
    pub target: Target,
}

impl SingleAction {
    pub fn move_to(robot: RobotId, node: NodeId) -> Self {
        Self { robot, target: Target::Node(node) }
    }

    pub fn idle(robot: RobotId) -> Self {
        Self { robot, target: Target::Idle }
    }
}

impl fmt::Display for SingleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            Target::Node(n) => write!(f, "{}->{}", self.robot, n.0),
            Target::Idle => write!(f, "{}:idle", self.robot),
        }
    }
}

/// One action per active robot, ground robots first, each group in id order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction {
    pub actions: Vec<SingleAction>,
}

impl JointAction {
    pub fn new(actions: Vec<SingleAction>) -> Self {
        Self { actions }
    }

    pub fn arity(&self) -> usize {
        self.actions.len()
    }

    pub fn get(&self, robot: RobotId) -> Option<&SingleAction> {
        self.actions.iter().find(|a| a.robot == robot)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")
    }
}
