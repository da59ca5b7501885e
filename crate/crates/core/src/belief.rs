//! Factored team belief: robot poses plus the unknown / traversable / blocked
//! partition of PBPs.
//!
//! Edge states are independent Bernoullis and observations are perfect, so
//! the whole action-observation history collapses to one knowledge label per
//! edge. Storing exactly one label per edge makes the three PBP sets a
//! partition by construction.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::action::{RobotId, SingleAction};
use crate::envgen::TeamConfig;
use crate::error::{contract, Result};
use crate::graph::{EdgeId, EdgeKnowledge, EdgeStatus, NodeId, NodeKind, Point, Pose, WorldGraph};


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundRobot {
    pub pose: Pose,
    /// Last vertex this robot stood on; decides which side of a blocked PBP it is on.
    pub anchor: NodeId,
    pub goal: NodeId,
    pub done: bool,
}

/// A perfect, instantaneous reading of one PBP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pbp: NodeId,
    pub status: EdgeStatus,
    pub observer: RobotId,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    ugvs: Vec<GroundRobot>,
    uavs: Vec<Point>,
    knowledge: Vec<EdgeKnowledge>,
}

impl BeliefState {
    /// Prior belief: robots at their starts, every edge with `0 < p < 1` unknown.
    pub fn initial(graph: &WorldGraph, team: &TeamConfig) -> Result<Self> {
        if team.starts.len() != team.goals.len() || team.starts.len() != team.num_ugv {
            return Err(contract("team starts/goals do not match the ground robot count"));
        }
        if team.uav_starts.len() != team.num_uav {
            return Err(contract("team drone starts do not match the drone count"));
        }
        let ugvs = team
            .starts
            .iter()
            .zip(&team.goals)
            .map(|(&s, &g)| GroundRobot { pose: Pose::AtNode(s), anchor: s, goal: g, done: s == g })
            .collect();
        let knowledge = graph
            .edges()
            .iter()
            .map(|e| {
                if e.p_block <= 0.0 {
                    EdgeKnowledge::Traversable
                } else if e.p_block >= 1.0 {
                    EdgeKnowledge::Blocked
                } else {
                    EdgeKnowledge::Unknown
                }
            })
            .collect();
        Self::from_parts(graph, ugvs, team.uav_starts.clone(), knowledge)
    }

    pub fn from_parts(
        graph: &WorldGraph,
        ugvs: Vec<GroundRobot>,
        uavs: Vec<Point>,
        knowledge: Vec<EdgeKnowledge>,
    ) -> Result<Self> {
        let b = Self { ugvs, uavs, knowledge };
        b.check_graph(graph)?;
        for r in &b.ugvs {
            if !graph.is_vertex(r.goal) || !graph.is_vertex(r.anchor) {
                return Err(contract("ground robot goal and anchor must be vertices"));
            }
        }
        Ok(b)
    }

    /// Verifies this belief refers to `graph`.
    pub fn check_graph(&self, graph: &WorldGraph) -> Result<()> {
        if self.knowledge.len() != graph.num_edges() {
            return Err(contract(format!(
                "belief covers {} edges but graph has {}",
                self.knowledge.len(),
                graph.num_edges()
            )));
        }
        for r in &self.ugvs {
            graph.validate_pose(&r.pose)?;
            if !graph.contains_node(r.goal) || !graph.contains_node(r.anchor) {
                return Err(contract("ground robot refers to nodes outside the graph"));
            }
        }
        Ok(())
    }

    pub fn knowledge(&self) -> &[EdgeKnowledge] {
        &self.knowledge
    }

    pub fn edge_knowledge(&self, e: EdgeId) -> EdgeKnowledge {
        self.knowledge[e.index()]
    }

    fn pbp_set(&self, graph: &WorldGraph, want: EdgeKnowledge) -> BTreeSet<NodeId> {
        self.knowledge
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == want)
            .map(|(i, _)| graph.pbp_of(EdgeId(i as u32)))
            .collect()
    }

    pub fn unknown_set(&self, graph: &WorldGraph) -> BTreeSet<NodeId> {
        self.pbp_set(graph, EdgeKnowledge::Unknown)
    }

    pub fn traversable_set(&self, graph: &WorldGraph) -> BTreeSet<NodeId> {
        self.pbp_set(graph, EdgeKnowledge::Traversable)
    }

    pub fn blocked_set(&self, graph: &WorldGraph) -> BTreeSet<NodeId> {
        self.pbp_set(graph, EdgeKnowledge::Blocked)
    }

    /// Unknown PBPs in ascending id order.
    pub fn unknown_pbps(&self, graph: &WorldGraph) -> Vec<NodeId> {
        self.knowledge
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == EdgeKnowledge::Unknown)
            .map(|(i, _)| graph.pbp_of(EdgeId(i as u32)))
            .collect()
    }

    pub fn num_unknown(&self) -> usize {
        self.knowledge.iter().filter(|k| **k == EdgeKnowledge::Unknown).count()
    }

    pub fn num_ugvs(&self) -> usize {
        self.ugvs.len()
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn ugvs(&self) -> &[GroundRobot] {
        &self.ugvs
    }

    pub fn uavs(&self) -> &[Point] {
        &self.uavs
    }

    pub fn ugv(&self, i: usize) -> &GroundRobot {
        &self.ugvs[i]
    }

    pub(crate) fn ugvs_mut(&mut self) -> &mut [GroundRobot] {
        &mut self.ugvs
    }

    pub(crate) fn uavs_mut(&mut self) -> &mut [Point] {
        &mut self.uavs
    }

    pub fn is_ugv(&self, robot: RobotId) -> bool {
        robot.index() < self.ugvs.len()
    }

    pub fn uav_robot_id(&self, j: usize) -> RobotId {
        RobotId((self.ugvs.len() + j) as u32)
    }

    /// Ground robots that have not reached their goal.
    pub fn live_ugvs(&self) -> impl Iterator<Item = usize> + '_ {
        self.ugvs.iter().enumerate().filter(|(_, r)| !r.done).map(|(i, _)| i)
    }

    pub fn all_done(&self) -> bool {
        self.ugvs.iter().all(|r| r.done)
    }

    /// Robots that receive an action this step: live ground robots, then every drone.
    pub fn active_robots(&self) -> Vec<RobotId> {
        self.live_ugvs()
            .map(|i| RobotId(i as u32))
            .chain((0..self.uavs.len()).map(|j| self.uav_robot_id(j)))
            .collect()
    }

    pub fn robot_position(&self, graph: &WorldGraph, robot: RobotId) -> Point {
        if self.is_ugv(robot) {
            graph.pose_position(&self.ugvs[robot.index()].pose)
        } else {
            self.uavs[robot.index() - self.ugvs.len()]
        }
    }

    pub(crate) fn set_knowledge(&mut self, e: EdgeId, k: EdgeKnowledge) {
        self.knowledge[e.index()] = k;
    }

    /// Folds one observation into the shared team belief.
    pub fn apply_observation(&self, graph: &WorldGraph, obs: &Observation) -> Result<BeliefState> {
        let e = graph
            .edge_of_pbp(obs.pbp)
            .ok_or_else(|| contract(format!("node {} is not a PBP", obs.pbp.0)))?;
        if self.knowledge[e.index()] != EdgeKnowledge::Unknown {
            return Err(contract(format!("PBP {} is already known", obs.pbp.0)));
        }
        let mut next = self.clone();
        next.knowledge[e.index()] = obs.status.into();
        Ok(next)
    }

    /// Nodes a ground robot may head for next, ascending.
    pub(crate) fn ugv_targets(&self, graph: &WorldGraph, i: usize) -> Vec<NodeId> {
        let r = &self.ugvs[i];
        let k = &self.knowledge;
        let mut out = Vec::with_capacity(4);
        match r.pose {
            Pose::AtNode(n) => match graph.node_kind(n) {
                NodeKind::Vertex => {
                    for &e in graph.incident(n) {
                        let edge = graph.edge(e);
                        match k[e.index()] {
                            EdgeKnowledge::Unknown => out.push(edge.pbp),
                            EdgeKnowledge::Traversable => out.push(edge.other(n).expect("incident")),
                            EdgeKnowledge::Blocked => {}
                        }
                    }
                }
                NodeKind::Pbp(e) => {
                    let edge = graph.edge(e);
                    match k[e.index()] {
                        // standing on an unread PBP: reading it takes no travel
                        EdgeKnowledge::Unknown => out.push(n),
                        EdgeKnowledge::Traversable => {
                            out.push(edge.u);
                            out.push(edge.v);
                        }
                        EdgeKnowledge::Blocked => out.push(r.anchor),
                    }
                }
            },
            Pose::OnEdge { edge, offset } => {
                let e = graph.edge(edge);
                let blocked = k[edge.index()] == EdgeKnowledge::Blocked;
                let end = if offset <= e.half() { e.u } else { e.v };
                out.push(end);
                if !blocked {
                    out.push(e.pbp);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Single-robot action set for an active robot.
    pub fn legal_actions(&self, graph: &WorldGraph, robot: RobotId) -> Result<Vec<SingleAction>> {
        if self.is_ugv(robot) {
            if self.ugvs[robot.index()].done {
                return Err(contract(format!("ground robot {robot} already reached its goal")));
            }
            Ok(self
                .ugv_targets(graph, robot.index())
                .into_iter()
                .map(|n| SingleAction::move_to(robot, n))
                .collect())
        } else if robot.index() < self.ugvs.len() + self.uavs.len() {
            let unknown = self.unknown_pbps(graph);
            // idling is only needed once there are fewer PBPs than drones
            let idle = unknown.len() < self.uavs.len();
            let mut out: Vec<SingleAction> = unknown.into_iter().map(|n| SingleAction::move_to(robot, n)).collect();
            if idle {
                out.push(SingleAction::idle(robot));
            }
            Ok(out)
        } else {
            Err(contract(format!("unknown robot {robot}")))
        }
    }

    /// Hash of knowledge, done flags and quantized poses.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.knowledge.hash(&mut h);
        for r in &self.ugvs {
            r.done.hash(&mut h);
            r.anchor.hash(&mut h);
            match r.pose {
                Pose::AtNode(n) => (0u8, n.0, 0i64).hash(&mut h),
                Pose::OnEdge { edge, offset } => (1u8, edge.0, (offset * 1e6).round() as i64).hash(&mut h),
            }
        }
        for p in &self.uavs {
            ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64).hash(&mut h);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::TeamConfig;
    use crate::error::Error;

    /// 0 - 1 - 2 on a line, 10 m edges.
    fn line3() -> WorldGraph {
        WorldGraph::new(
            vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(20.0, 0.0)],
            &[(0, 1, 0.5), (1, 2, 0.5)],
        )
        .unwrap()
    }

    fn team(start: u32, goal: u32, uavs: usize) -> TeamConfig {
        TeamConfig {
            num_ugv: 1,
            num_uav: uavs,
            ugv_speed: 1.0,
            uav_speed: 3.0,
            starts: vec![NodeId(start)],
            goals: vec![NodeId(goal)],
            uav_starts: vec![Point::new(0.0, 0.0); uavs],
        }
    }

    fn obs(pbp: u32, status: EdgeStatus) -> Observation {
        Observation { pbp: NodeId(pbp), status, observer: RobotId(0), time: 0.0 }
    }

    #[test]
    fn observing_blocked_moves_pbp_to_blocked_set() {
        let g = line3();
        let b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        let b2 = b.apply_observation(&g, &obs(4, EdgeStatus::Blocked)).unwrap();
        assert_eq!(b2.unknown_set(&g), BTreeSet::from([NodeId(3)]));
        assert_eq!(b2.blocked_set(&g), BTreeSet::from([NodeId(4)]));
        let b3 = b2.apply_observation(&g, &obs(3, EdgeStatus::Blocked)).unwrap();
        assert!(b3.unknown_set(&g).is_empty());
    }

    #[test]
    fn observing_traversable_leaves_blocked_alone() {
        let g = line3();
        let b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        let b2 = b.apply_observation(&g, &obs(3, EdgeStatus::Traversable)).unwrap();
        assert!(b2.traversable_set(&g).contains(&NodeId(3)));
        assert!(b2.blocked_set(&g).is_empty());
    }

    #[test]
    fn repeated_observation_is_rejected() {
        let g = line3();
        let b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        let o = obs(3, EdgeStatus::Traversable);
        let b2 = b.apply_observation(&g, &o).unwrap();
        assert!(matches!(b2.apply_observation(&g, &o), Err(Error::Contract(_))));
        assert!(b.apply_observation(&g, &obs(1, EdgeStatus::Blocked)).is_err());
    }

    #[test]
    fn certain_edges_start_known() {
        let g = WorldGraph::new(
            vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(20.0, 0.0)],
            &[(0, 1, 0.0), (1, 2, 1.0)],
        )
        .unwrap();
        let b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        assert_eq!(b.traversable_set(&g), BTreeSet::from([NodeId(3)]));
        assert_eq!(b.blocked_set(&g), BTreeSet::from([NodeId(4)]));
    }

    #[test]
    fn drone_idles_when_nothing_unknown() {
        let g = line3();
        let b = BeliefState::initial(&g, &team(0, 2, 1)).unwrap();
        let b = b.apply_observation(&g, &obs(3, EdgeStatus::Traversable)).unwrap();
        let b = b.apply_observation(&g, &obs(4, EdgeStatus::Traversable)).unwrap();
        assert_eq!(b.legal_actions(&g, RobotId(1)).unwrap(), vec![SingleAction::idle(RobotId(1))]);
    }

    #[test]
    fn mid_edge_ground_robot_has_ahead_and_behind() {
        let g = line3();
        let mut b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        b.ugvs[0].pose = Pose::OnEdge { edge: EdgeId(1), offset: 2.0 };
        b.ugvs[0].anchor = NodeId(1);
        let acts = b.legal_actions(&g, RobotId(0)).unwrap();
        assert_eq!(
            acts,
            vec![SingleAction::move_to(RobotId(0), NodeId(1)), SingleAction::move_to(RobotId(0), NodeId(4))]
        );
        let b = b.apply_observation(&g, &obs(4, EdgeStatus::Blocked)).unwrap();
        assert_eq!(b.legal_actions(&g, RobotId(0)).unwrap().len(), 1);
    }

    #[test]
    fn vertex_actions_follow_knowledge() {
        let g = line3();
        let mut b = BeliefState::initial(&g, &team(1, 2, 0)).unwrap();
        let targets = |b: &BeliefState| b.ugv_targets(&g, 0);
        assert_eq!(targets(&b), vec![NodeId(3), NodeId(4)]);
        b = b.apply_observation(&g, &obs(3, EdgeStatus::Traversable)).unwrap();
        assert_eq!(targets(&b), vec![NodeId(0), NodeId(4)]);
        b = b.apply_observation(&g, &obs(4, EdgeStatus::Blocked)).unwrap();
        assert_eq!(targets(&b), vec![NodeId(0)]);
    }

    #[test]
    fn blocked_pbp_only_returns_to_anchor() {
        let g = line3();
        let mut b = BeliefState::initial(&g, &team(0, 2, 0)).unwrap();
        b = b.apply_observation(&g, &obs(4, EdgeStatus::Blocked)).unwrap();
        b.ugvs[0].pose = Pose::AtNode(NodeId(4));
        b.ugvs[0].anchor = NodeId(2);
        assert_eq!(b.ugv_targets(&g, 0), vec![NodeId(2)]);
    }

    #[test]
    fn finished_robot_has_no_actions() {
        let g = line3();
        let b = BeliefState::initial(&g, &team(2, 2, 0)).unwrap();
        assert!(b.all_done());
        assert!(b.legal_actions(&g, RobotId(0)).is_err());
    }
}
