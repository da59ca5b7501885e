//! Joint-action transition model.
//!
//! A joint action runs until the first robot completes its single action.
//! Every robot is advanced by that elapsed time along its own trajectory; if
//! the finisher arrived at an unknown PBP it observes it and the belief
//! branches on the result.

use serde::{Deserialize, Serialize};

use crate::action::{JointAction, RobotId, SingleAction, Target};
use crate::belief::{BeliefState, Observation};
use crate::envgen::TeamConfig;
use crate::error::{contract, Result};
use crate::graph::{EdgeId, EdgeKnowledge, EdgeStatus, NodeId, NodeKind, Pose, WorldGraph, WorldSample};

/// Tolerance for simultaneous completion and pose snapping, in seconds / meters.
const EPS: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speeds {
    pub ugv: f64,
    pub uav: f64,
}

impl From<&TeamConfig> for Speeds {
    fn from(t: &TeamConfig) -> Self {
        Self { ugv: t.ugv_speed, uav: t.uav_speed }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    ObservedBlocked { prob: f64 },
    ObservedTraversable { prob: f64 },
    NoObservation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionOutcome {
    pub elapsed: f64,
    pub finisher: SingleAction,
    pub next_belief: BeliefState,
    pub branch: Branch,
    pub observation: Option<Observation>,
    /// Summed ground-robot travel during `elapsed`, in meters.
    pub ugv_cost_delta: f64,
}

/// Outcome-independent part of a transition.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Motion {
    pub elapsed: f64,
    pub finisher: SingleAction,
    /// Poses advanced and goal arrivals applied; no observation yet.
    pub moved: BeliefState,
    /// Edge whose PBP the finisher reached while it was still unknown.
    pub observed: Option<EdgeId>,
    pub cost: f64,
}

impl Motion {
    pub fn branch_belief(&self, status: EdgeStatus) -> BeliefState {
        let mut b = self.moved.clone();
        if let Some(e) = self.observed {
            b.set_knowledge(e, status.into());
        }
        b
    }
}

/// Ground-robot move along a single edge, as offsets from the edge's `u`.
#[derive(Copy, Clone, Debug)]
struct EdgeMove {
    edge: EdgeId,
    from: f64,
    to: f64,
}

fn ugv_move(graph: &WorldGraph, pose: &Pose, target: NodeId) -> Result<EdgeMove> {
    let bad = || contract(format!("target {} is not reachable in one move from {pose:?}", target.0));
    match *pose {
        Pose::AtNode(n) => match graph.node_kind(n) {
            NodeKind::Vertex => {
                let e = match graph.edge_of_pbp(target) {
                    Some(e) => e,
                    None => graph.edge_between(n, target).ok_or_else(bad)?,
                };
                let edge = graph.edge(e);
                let from = edge.offset_of(n).ok_or_else(bad)?;
                let to = edge.offset_of(target).ok_or_else(bad)?;
                Ok(EdgeMove { edge: e, from, to })
            }
            NodeKind::Pbp(e) => {
                let edge = graph.edge(e);
                Ok(EdgeMove { edge: e, from: edge.half(), to: edge.offset_of(target).ok_or_else(bad)? })
            }
        },
        Pose::OnEdge { edge, offset } => {
            let to = graph.edge(edge).offset_of(target).ok_or_else(bad)?;
            Ok(EdgeMove { edge, from: offset, to })
        }
    }
}

/// Pose at `offset` along `edge`, snapped onto a node when within tolerance.
fn pose_at(graph: &WorldGraph, edge: EdgeId, offset: f64) -> Pose {
    let e = graph.edge(edge);
    for (node, at) in [(e.u, 0.0), (e.pbp, e.half()), (e.v, e.length)] {
        if (offset - at).abs() <= EPS {
            return Pose::AtNode(node);
        }
    }
    Pose::OnEdge { edge, offset }
}

/// Advances every robot; no legality checks (the search only builds legal actions).
pub(crate) fn simulate_motion(graph: &WorldGraph, speeds: Speeds, belief: &BeliefState, joint: &JointAction) -> Result<Motion> {
    let n_ugv = belief.num_ugvs();
    let mut moves: Vec<Option<EdgeMove>> = Vec::with_capacity(joint.arity());
    let mut times: Vec<f64> = Vec::with_capacity(joint.arity());
    for a in &joint.actions {
        if a.robot.index() < n_ugv {
            let Target::Node(t) = a.target else {
                return Err(contract(format!("ground robot {} cannot idle", a.robot)));
            };
            let m = ugv_move(graph, &belief.ugv(a.robot.index()).pose, t)?;
            times.push((m.to - m.from).abs() / speeds.ugv);
            moves.push(Some(m));
        } else {
            let j = a.robot.index() - n_ugv;
            let t = match a.target {
                Target::Node(t) => belief.uavs()[j].distance(graph.node_position(t)) / speeds.uav,
                Target::Idle => f64::INFINITY,
            };
            times.push(t);
            moves.push(None);
        }
    }
    // first minimum in joint order == lowest robot id
    let (fi, &elapsed) = times
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| contract("empty joint action"))?;
    if !elapsed.is_finite() {
        return Err(contract("joint action never completes"));
    }
    let finisher = joint.actions[fi];
    let observed = match finisher.target {
        Target::Node(n) => graph.edge_of_pbp(n).filter(|&e| belief.edge_knowledge(e) == EdgeKnowledge::Unknown),
        Target::Idle => None,
    };
    if elapsed <= 0.0 && observed.is_none() {
        return Err(contract("zero-duration joint action observes nothing"));
    }
    let mut moved = belief.clone();
    let mut cost = 0.0;
    for ((a, m), &t) in joint.actions.iter().zip(&moves).zip(&times) {
        let arrived = t <= elapsed + EPS;
        if let Some(m) = m {
            let r = &mut moved.ugvs_mut()[a.robot.index()];
            let Target::Node(target) = a.target else { unreachable!() };
            let dist = (m.to - m.from).abs();
            if arrived {
                cost += dist;
                r.pose = Pose::AtNode(target);
            } else {
                let step = speeds.ugv * elapsed;
                cost += step;
                let off = m.from + step * (m.to - m.from).signum();
                r.pose = pose_at(graph, m.edge, off);
            }
            if let Pose::AtNode(n) = r.pose {
                if graph.is_vertex(n) {
                    r.anchor = n;
                    if n == r.goal {
                        r.done = true;
                    }
                }
            }
        } else {
            let j = a.robot.index() - n_ugv;
            if let Target::Node(t) = a.target {
                let goal = graph.node_position(t);
                let p = &mut moved.uavs_mut()[j];
                *p = if arrived { goal } else { p.step_toward(goal, speeds.uav * elapsed) };
            }
        }
    }
    Ok(Motion { elapsed, finisher, moved, observed, cost })
}

/// Checks arity, order, per-robot legality and distinct drone targets.
pub fn check_joint(graph: &WorldGraph, belief: &BeliefState, joint: &JointAction) -> Result<()> {
    let active: Vec<RobotId> = belief.active_robots();
    let robots: Vec<RobotId> = joint.actions.iter().map(|a| a.robot).collect();
    if robots != active {
        return Err(contract(format!("joint action robots {robots:?} do not match active robots {active:?}")));
    }
    let mut drone_targets = Vec::new();
    for a in &joint.actions {
        if !belief.legal_actions(graph, a.robot)?.contains(a) {
            return Err(contract(format!("action {a} is not legal")));
        }
        if !belief.is_ugv(a.robot) {
            if let Target::Node(n) = a.target {
                if drone_targets.contains(&n) {
                    return Err(contract(format!("two drones target PBP {}", n.0)));
                }
                drone_targets.push(n);
            }
        }
    }
    Ok(())
}

/// Applies `joint` to `belief` against the realization `world`.
pub fn advance(
    graph: &WorldGraph,
    speeds: Speeds,
    belief: &BeliefState,
    joint: &JointAction,
    world: &WorldSample,
) -> Result<TransitionOutcome> {
    belief.check_graph(graph)?;
    if !world.agrees_with(belief.knowledge()) {
        return Err(contract("world sample contradicts the belief"));
    }
    check_joint(graph, belief, joint)?;
    let motion = simulate_motion(graph, speeds, belief, joint)?;
    let (branch, observation, next_belief) = match motion.observed {
        Some(e) => {
            let status = world.status(e);
            let p = graph.edge(e).p_block;
            let branch = match status {
                EdgeStatus::Blocked => Branch::ObservedBlocked { prob: p },
                EdgeStatus::Traversable => Branch::ObservedTraversable { prob: 1.0 - p },
            };
            let obs = Observation { pbp: graph.pbp_of(e), status, observer: motion.finisher.robot, time: motion.elapsed };
            let next = motion.moved.apply_observation(graph, &obs)?;
            (branch, Some(obs), next)
        }
        None => (Branch::NoObservation, None, motion.moved.clone()),
    };
    Ok(TransitionOutcome {
        elapsed: motion.elapsed,
        finisher: motion.finisher,
        next_belief,
        branch,
        observation,
        ugv_cost_delta: motion.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::GroundRobot;
    use crate::graph::Point;

    const SPEEDS: Speeds = Speeds { ugv: 1.0, uav: 3.0 };

    /// Line 0 - 1 - 2 with 10 m edges.
    fn line() -> WorldGraph {
        WorldGraph::new(
            vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(20.0, 0.0)],
            &[(0, 1, 0.3), (1, 2, 0.6)],
        )
        .unwrap()
    }

    fn robot(at: u32, goal: u32) -> GroundRobot {
        GroundRobot { pose: Pose::AtNode(NodeId(at)), anchor: NodeId(at), goal: NodeId(goal), done: false }
    }

    fn clear(n: usize) -> WorldSample {
        WorldSample { edge_status: vec![EdgeStatus::Traversable; n] }
    }

    #[test]
    fn single_known_hop() {
        let g = line();
        let b = BeliefState::from_parts(&g, vec![robot(0, 2)], vec![], vec![EdgeKnowledge::Traversable; 2]).unwrap();
        let j = JointAction::new(vec![SingleAction::move_to(RobotId(0), NodeId(1))]);
        let out = advance(&g, SPEEDS, &b, &j, &clear(2)).unwrap();
        assert_eq!(out.elapsed, 10.0);
        assert_eq!(out.branch, Branch::NoObservation);
        assert_eq!(out.next_belief.ugv(0).pose, Pose::AtNode(NodeId(1)));
        assert_eq!(out.ugv_cost_delta, 10.0);
    }

    #[test]
    fn faster_robot_interrupts_slower() {
        // robot 0 at vertex 1 heads to PBP 3 (5 m); robot 1 at vertex 2 crosses to 1 (10 m)
        let g = line();
        let k = vec![EdgeKnowledge::Unknown, EdgeKnowledge::Traversable];
        let b = BeliefState::from_parts(&g, vec![robot(1, 0), robot(2, 0)], vec![], k).unwrap();
        let j = JointAction::new(vec![
            SingleAction::move_to(RobotId(0), NodeId(3)),
            SingleAction::move_to(RobotId(1), NodeId(1)),
        ]);
        let out = advance(&g, SPEEDS, &b, &j, &clear(2)).unwrap();
        assert_eq!(out.elapsed, 5.0);
        assert_eq!(out.finisher.robot, RobotId(0));
        // robot 1 is exactly at the traversable PBP of edge 1
        assert_eq!(out.next_belief.ugv(1).pose, Pose::AtNode(NodeId(4)));
        assert_eq!(out.ugv_cost_delta, 10.0);
        assert!(matches!(out.branch, Branch::ObservedTraversable { prob } if (prob - 0.7).abs() < 1e-12));
    }

    #[test]
    fn drone_reaches_shared_target_first() {
        let g = line();
        let k = vec![EdgeKnowledge::Unknown, EdgeKnowledge::Unknown];
        let b = BeliefState::from_parts(&g, vec![robot(0, 2)], vec![Point::new(1.0, 0.0)], k).unwrap();
        let j = JointAction::new(vec![
            SingleAction::move_to(RobotId(0), NodeId(3)),
            SingleAction::move_to(RobotId(1), NodeId(3)),
        ]);
        let mut w = clear(2);
        w.edge_status[0] = EdgeStatus::Blocked;
        let out = advance(&g, SPEEDS, &b, &j, &w).unwrap();
        assert_eq!(out.finisher.robot, RobotId(1));
        assert!((out.elapsed - 4.0 / 3.0).abs() < 1e-12);
        assert!(matches!(out.next_belief.ugv(0).pose, Pose::OnEdge { edge: EdgeId(0), .. }));
        assert!(matches!(out.branch, Branch::ObservedBlocked { prob } if (prob - 0.3).abs() < 1e-12));
        // blocked ahead: only retreat remains
        let acts = out.next_belief.legal_actions(&g, RobotId(0)).unwrap();
        assert_eq!(acts, vec![SingleAction::move_to(RobotId(0), NodeId(0))]);
    }

    #[test]
    fn goal_arrival_marks_done() {
        let g = line();
        let b = BeliefState::from_parts(&g, vec![robot(1, 2)], vec![], vec![EdgeKnowledge::Traversable; 2]).unwrap();
        let j = JointAction::new(vec![SingleAction::move_to(RobotId(0), NodeId(2))]);
        let out = advance(&g, SPEEDS, &b, &j, &clear(2)).unwrap();
        assert!(out.next_belief.all_done());
    }

    #[test]
    fn illegal_and_mismatched_actions_rejected() {
        let g = line();
        let b = BeliefState::from_parts(&g, vec![robot(0, 2)], vec![Point::default(), Point::default()], vec![EdgeKnowledge::Unknown; 2])
            .unwrap();
        let j = JointAction::new(vec![SingleAction::move_to(RobotId(0), NodeId(3))]);
        assert!(advance(&g, SPEEDS, &b, &j, &clear(2)).is_err());
        let j = JointAction::new(vec![
            SingleAction::move_to(RobotId(0), NodeId(3)),
            SingleAction::move_to(RobotId(1), NodeId(4)),
            SingleAction::move_to(RobotId(2), NodeId(4)),
        ]);
        assert!(advance(&g, SPEEDS, &b, &j, &clear(2)).is_err());
        let j = JointAction::new(vec![
            SingleAction::move_to(RobotId(0), NodeId(2)),
            SingleAction::move_to(RobotId(1), NodeId(4)),
            SingleAction::move_to(RobotId(2), NodeId(3)),
        ]);
        assert!(advance(&g, SPEEDS, &b, &j, &clear(2)).is_err());
    }

    #[test]
    fn standing_on_unknown_pbp_observes_instantly() {
        let g = line();
        let mut r = robot(0, 2);
        r.pose = Pose::AtNode(NodeId(3));
        let b = BeliefState::from_parts(&g, vec![r], vec![], vec![EdgeKnowledge::Unknown; 2]).unwrap();
        let j = JointAction::new(vec![SingleAction::move_to(RobotId(0), NodeId(3))]);
        let out = advance(&g, SPEEDS, &b, &j, &clear(2)).unwrap();
        assert_eq!(out.elapsed, 0.0);
        assert_eq!(out.ugv_cost_delta, 0.0);
        assert!(out.observation.is_some());
    }
}
