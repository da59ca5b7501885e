//! Shared test helpers: an exhaustive value-change oracle and random legal actions.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use scout_core::belief::Observation;
use scout_core::envgen::{generate, EnvKind, EnvSpec};
use scout_core::graph::{EdgeId, EdgeKnowledge, NodeId, NodeKind, PathSearch, Pose, WorldGraph};
use scout_core::planner::{advance, check_joint, sample_true_world, Branch, Speeds};
use scout_core::rng::rng_for;
use scout_core::{BeliefState, JointAction, SingleAction, Target};

/// Clairvoyant shortest distance when exactly the edges in `blocked` are blocked.
pub fn clairvoyant(graph: &WorldGraph, blocked: &[bool], start: &Pose, anchor: Option<NodeId>, goal: NodeId, penalty: f64) -> f64 {
    let passable = |e: EdgeId| !blocked[e.index()];
    let src = graph.pose_sources(start, anchor, passable);
    let mut s = PathSearch::new();
    s.run(graph, src.as_slice(), passable, Some(goal));
    let d = s.distance(goal);
    if d.is_finite() {
        d
    } else {
        penalty
    }
}

/// Exact `E[cost | e blocked] - E[cost | e traversable]` by enumerating every
/// status combination of the other unknown edges.
pub fn exact_value_change(
    graph: &WorldGraph,
    knowledge: &[EdgeKnowledge],
    start: &Pose,
    anchor: Option<NodeId>,
    goal: NodeId,
    edge: usize,
    penalty: f64,
) -> f64 {
    let others: Vec<usize> =
        (0..graph.num_edges()).filter(|&j| j != edge && knowledge[j] == EdgeKnowledge::Unknown).collect();
    assert!(others.len() <= 16, "enumeration too large");
    let mut v = [0.0f64; 2];
    for mask in 0u32..(1 << others.len()) {
        let mut blocked: Vec<bool> = knowledge.iter().map(|k| *k == EdgeKnowledge::Blocked).collect();
        let mut prob = 1.0;
        for (bit, &j) in others.iter().enumerate() {
            let p = graph.edges()[j].p_block;
            if mask >> bit & 1 == 1 {
                blocked[j] = true;
                prob *= p;
            } else {
                prob *= 1.0 - p;
            }
        }
        for (slot, status) in [true, false].into_iter().enumerate() {
            blocked[edge] = status;
            v[slot] += prob * clairvoyant(graph, &blocked, start, anchor, goal, penalty);
        }
    }
    v[0] - v[1]
}

/// Uniformly random legal joint action with distinct drone targets.
pub fn random_joint(graph: &WorldGraph, belief: &BeliefState, rng: &mut impl Rng) -> JointAction {
    let mut taken: Vec<NodeId> = Vec::new();
    let mut actions = Vec::new();
    for robot in belief.active_robots() {
        let mut legal = belief.legal_actions(graph, robot).unwrap();
        if !belief.is_ugv(robot) {
            legal.retain(|a| !matches!(a.target, Target::Node(n) if taken.contains(&n)));
            if legal.is_empty() {
                legal.push(SingleAction::idle(robot));
            }
        }
        let a = *legal.choose(rng).unwrap();
        if let Target::Node(n) = a.target {
            if !belief.is_ugv(robot) {
                taken.push(n);
            }
        }
        actions.push(a);
    }
    JointAction::new(actions)
}

/// Travel a ground robot needs to finish `target` from `pose`, measured along the edge.
pub fn ugv_remaining(graph: &WorldGraph, pose: &Pose, target: NodeId) -> f64 {
    let on = |e: EdgeId, from: f64| (graph.edge(e).offset_of(target).unwrap() - from).abs();
    match *pose {
        Pose::OnEdge { edge, offset } => on(edge, offset),
        Pose::AtNode(n) => match graph.edge_of_pbp(n) {
            Some(e) => on(e, graph.edge(e).half()),
            None => {
                let e = graph.edge_of_pbp(target).or_else(|| graph.edge_between(n, target)).unwrap();
                on(e, graph.edge(e).offset_of(n).unwrap())
            }
        },
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

/// Unknown, traversable and blocked PBP sets partition the PBPs.
pub fn check_partition(graph: &WorldGraph, b: &BeliefState) -> Result<(), String> {
    let (u, t, x) = (b.unknown_set(graph), b.traversable_set(graph), b.blocked_set(graph));
    ensure!(u.len() + t.len() + x.len() == graph.num_edges(), "sets do not cover every PBP");
    ensure!(u.is_disjoint(&t) && u.is_disjoint(&x) && t.is_disjoint(&x), "sets overlap");
    for n in u.iter().chain(&t).chain(&x) {
        ensure!(matches!(graph.node_kind(*n), NodeKind::Pbp(_)), "node {} is not a PBP", n.0);
    }
    Ok(())
}

/// Random legal play on a generated instance. Checks that the step duration is
/// the earliest completion, the finisher is the first robot achieving it,
/// ground cost equals the distance covered, knowledge changes only by the
/// observation and finished robots stay put. Returns the number of steps taken.
pub fn check_random_walk(kind: EnvKind, env_seed: u64, ugv: usize, uav: usize, seed: u64, max_steps: usize) -> Result<usize, String> {
    let s = generate(&EnvSpec::new(kind, env_seed, ugv, uav)).map_err(|e| e.to_string())?;
    let g = &s.graph;
    let speeds = Speeds::from(&s.team);
    let world = sample_true_world(g, &s.team, seed).map_err(|e| e.to_string())?;
    let mut b = BeliefState::initial(g, &s.team).map_err(|e| e.to_string())?;
    let mut rng = rng_for(seed, &[1]);
    for step in 0..max_steps {
        if b.all_done() {
            return Ok(step);
        }
        check_partition(g, &b)?;
        let joint = random_joint(g, &b, &mut rng);
        check_joint(g, &b, &joint).map_err(|e| e.to_string())?;
        let times: Vec<f64> = joint
            .actions
            .iter()
            .map(|a| {
                if b.is_ugv(a.robot) {
                    let Target::Node(t) = a.target else { unreachable!() };
                    ugv_remaining(g, &b.ugv(a.robot.index()).pose, t) / speeds.ugv
                } else {
                    let j = a.robot.index() - b.num_ugvs();
                    match a.target {
                        Target::Node(t) => b.uavs()[j].distance(g.node_position(t)) / speeds.uav,
                        Target::Idle => f64::INFINITY,
                    }
                }
            })
            .collect();
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let out = advance(g, speeds, &b, &joint, &world).map_err(|e| e.to_string())?;
        ensure!((out.elapsed - min).abs() < 1e-9, "step {step}: elapsed {} but earliest completion {min}", out.elapsed);
        let first = times.iter().position(|&t| t == min).unwrap();
        ensure!(out.finisher == joint.actions[first], "step {step}: finisher is not the first minimum");
        let moved: f64 = joint
            .actions
            .iter()
            .zip(&times)
            .filter(|(a, _)| b.is_ugv(a.robot))
            .map(|(_, &t)| t.min(out.elapsed) * speeds.ugv)
            .sum();
        ensure!((out.ugv_cost_delta - moved).abs() < 1e-6, "step {step}: cost {} vs distance {moved}", out.ugv_cost_delta);
        let before = b.knowledge();
        let after = out.next_belief.knowledge();
        let changed: Vec<usize> = (0..before.len()).filter(|&j| before[j] != after[j]).collect();
        match (&out.branch, &out.observation) {
            (Branch::NoObservation, None) => ensure!(changed.is_empty(), "step {step}: knowledge changed without an observation"),
            (Branch::ObservedBlocked { .. } | Branch::ObservedTraversable { .. }, Some(Observation { pbp, status, .. })) => {
                let e = g.edge_of_pbp(*pbp).unwrap();
                ensure!(changed == vec![e.index()], "step {step}: edges {changed:?} changed, observed {}", e.index());
                ensure!(before[e.index()] == EdgeKnowledge::Unknown, "step {step}: observed a known edge");
                ensure!(*status == world.status(e), "step {step}: observation disagrees with the world");
            }
            other => return Err(format!("step {step}: inconsistent branch {other:?}")),
        }
        for i in 0..b.num_ugvs() {
            let (r0, r1) = (b.ugv(i), out.next_belief.ugv(i));
            ensure!(!r0.done || r0 == r1, "step {step}: finished robot {i} moved");
            ensure!(!r1.done || r1.pose == Pose::AtNode(r1.goal), "step {step}: robot {i} done away from its goal");
            g.validate_pose(&r1.pose).map_err(|e| e.to_string())?;
        }
        b = out.next_belief;
    }
    Ok(max_steps)
}
