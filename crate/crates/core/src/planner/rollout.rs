//! Optimistic rollout policy.
//!
//! Each live ground robot independently drives the shortest path of the
//! optimistic view of its own knowledge, discovers PBP statuses from the
//! sampled world as it reaches them, and replans from a blocked PBP. Drones
//! do nothing during rollouts.

use crate::belief::BeliefState;
use crate::graph::{EdgeKnowledge, EdgeStatus, NodeId, NodeKind, PathSearch, Pose, WorldGraph, WorldSample};

/// Scratch buffers reused across rollouts.
#[derive(Default)]
pub(crate) struct RolloutScratch {
    search: PathSearch,
    knowledge: Vec<EdgeKnowledge>,
}

/// Summed remaining travel of every live ground robot under the optimistic policy.
pub(crate) fn optimistic_rollout(
    graph: &WorldGraph,
    belief: &BeliefState,
    world: &WorldSample,
    penalty: f64,
    scratch: &mut RolloutScratch,
) -> f64 {
    let mut total = 0.0;
    for i in belief.live_ugvs() {
        let r = belief.ugv(i);
        total += drive(graph, belief.knowledge(), world, r.pose, r.anchor, r.goal, penalty, scratch);
    }
    total
}

fn drive(
    graph: &WorldGraph,
    knowledge: &[EdgeKnowledge],
    world: &WorldSample,
    mut pose: Pose,
    mut anchor: NodeId,
    goal: NodeId,
    penalty: f64,
    scratch: &mut RolloutScratch,
) -> f64 {
    scratch.knowledge.clear();
    scratch.knowledge.extend_from_slice(knowledge);
    let mut cost = 0.0;
    // each replan follows a newly discovered blockage, so this bounds the loop
    for _ in 0..=graph.num_edges() + 1 {
        if let Pose::AtNode(n) = pose {
            if let NodeKind::Pbp(e) = graph.node_kind(n) {
                if scratch.knowledge[e.index()] == EdgeKnowledge::Unknown {
                    scratch.knowledge[e.index()] = world.status(e).into();
                }
            }
        }
        let k = &scratch.knowledge;
        let passable = |e: crate::graph::EdgeId| k[e.index()] != EdgeKnowledge::Blocked;
        let src = graph.pose_sources(&pose, Some(anchor), passable);
        scratch.search.run(graph, src.as_slice(), passable, Some(goal));
        let Some(path) = scratch.search.path(goal) else {
            return cost + penalty;
        };
        // side of the first PBP when the robot is part-way along its edge
        let mut prev = match pose {
            Pose::OnEdge { edge, offset } => {
                let e = graph.edge(edge);
                if offset < e.half() {
                    e.u
                } else {
                    e.v
                }
            }
            _ => anchor,
        };
        let mut stopped = None;
        for &x in &path {
            match graph.node_kind(x) {
                NodeKind::Vertex => prev = x,
                NodeKind::Pbp(e) => {
                    if scratch.knowledge[e.index()] == EdgeKnowledge::Unknown {
                        let s = world.status(e);
                        scratch.knowledge[e.index()] = s.into();
                        if s == EdgeStatus::Blocked {
                            stopped = Some((x, prev));
                            break;
                        }
                    }
                }
            }
        }
        match stopped {
            Some((x, side)) => {
                cost += scratch.search.distance(x);
                pose = Pose::AtNode(x);
                anchor = side;
            }
            None => return cost + scratch.search.distance(goal),
        }
    }
    cost + penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::two_route;

    #[test]
    fn two_route_rollout_costs() {
        let s = two_route(0.5);
        let b = BeliefState::initial(&s.graph, &s.team).unwrap();
        let mut scratch = RolloutScratch::default();
        let open = WorldSample { edge_status: vec![EdgeStatus::Traversable; 3] };
        assert!((optimistic_rollout(&s.graph, &b, &open, 1e6, &mut scratch) - 10.0).abs() < 1e-9);
        let mut shut = open.clone();
        shut.edge_status[0] = EdgeStatus::Blocked;
        assert!((optimistic_rollout(&s.graph, &b, &shut, 1e6, &mut scratch) - 40.0).abs() < 1e-9);
    }
}
