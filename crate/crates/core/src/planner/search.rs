//! Joint-action Monte Carlo tree search over beliefs.
//!
//! Decision nodes hold a belief; action edges hold one joint action, the
//! cached motion it causes, and up to three successor nodes (no observation,
//! observed blocked, observed traversable). Each simulation samples one world
//! consistent with the root belief, descends by lowest UCB score, expands one
//! untried joint action, finishes with an optimistic rollout and backs up the
//! summed ground-robot travel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{optimistic_rollout, RolloutScratch};
use super::transition::{simulate_motion, Motion, Speeds};
use super::PlannerConfig;
use crate::action::{JointAction, SingleAction, Target};
use crate::belief::BeliefState;
use crate::error::{contract, Error, Result};
use crate::graph::{sample_unknown, EdgeId, EdgeStatus, GraphView, PathSearch, WorldGraph, WorldSample};
use crate::pruning::{prune_drone_actions, Ranking};
use crate::rng::{self, stream};

/// Immutable inputs shared by every simulation of one decision step.
#[derive(Copy, Clone)]
pub struct PlanContext<'a> {
    pub graph: &'a WorldGraph,
    pub speeds: Speeds,
    /// Drone ranking for this step; `None` leaves drone actions unpruned.
    pub ranking: Option<&'a Ranking>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChildStat {
    pub action: JointAction,
    pub visits: u32,
    pub mean_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub action: JointAction,
    /// Lowest child mean cost; `None` when the step had a single option and no search ran.
    pub root_value: Option<f64>,
    pub root_visits: u32,
    pub children: Vec<ChildStat>,
    pub tree_nodes: usize,
}

struct DecisionNode {
    belief: BeliefState,
    visits: u32,
    total: f64,
    terminal: bool,
    /// Candidate single actions per active robot, joint order.
    choices: Vec<Vec<SingleAction>>,
    space: u64,
    offset: u64,
    stride: u64,
    tried: u64,
    children: Vec<usize>,
}

struct ActionEdge {
    joint: JointAction,
    visits: u32,
    total: f64,
    motion: Motion,
    /// Successors for: no observation, observed blocked, observed traversable.
    next: [Option<usize>; 3],
}

impl ActionEdge {
    fn mean(&self) -> f64 {
        self.total / self.visits as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn candidate_actions(ctx: &PlanContext<'_>, belief: &BeliefState, k: usize, floor: Option<f64>) -> Result<Vec<Vec<SingleAction>>> {
    let mut out = Vec::new();
    for i in belief.live_ugvs() {
        let robot = crate::action::RobotId(i as u32);
        let acts: Vec<SingleAction> =
            belief.ugv_targets(ctx.graph, i).into_iter().map(|n| SingleAction::move_to(robot, n)).collect();
        if acts.is_empty() {
            return Err(Error::Internal(format!("ground robot {robot} has no legal action")));
        }
        out.push(acts);
    }
    let drones = prune_drone_actions(ctx.graph, belief, ctx.ranking, k, floor)?;
    for (j, targets) in drones.into_iter().enumerate() {
        let robot = belief.uav_robot_id(j);
        out.push(targets.into_iter().map(|t| SingleAction { robot, target: t }).collect());
    }
    Ok(out)
}

struct Tree<'a> {
    ctx: PlanContext<'a>,
    config: &'a PlannerConfig,
    nodes: Vec<DecisionNode>,
    edges: Vec<ActionEdge>,
    ucb_c: f64,
    penalty: f64,
    scratch: RolloutScratch,
}

impl<'a> Tree<'a> {
    fn add_node(&mut self, belief: BeliefState, rng: &mut ChaCha8Rng) -> Result<usize> {
        let terminal = belief.all_done();
        let (choices, space) = if terminal {
            (Vec::new(), 0)
        } else {
            let c = candidate_actions(&self.ctx, &belief, self.config.pruning.top_k(), self.config.score_floor)?;
            let space = c.iter().try_fold(1u64, |acc, v| acc.checked_mul(v.len() as u64));
            let space = space.ok_or_else(|| Error::Internal("joint action space overflows".into()))?;
            (c, space)
        };
        let (offset, stride) = if space > 1 {
            let offset = rng.gen_range(0..space);
            let mut stride = rng.gen_range(1..space);
            while gcd(stride, space) != 1 {
                stride = rng.gen_range(1..space);
            }
            (offset, stride)
        } else {
            (0, 1)
        };
        self.nodes.push(DecisionNode {
            belief,
            visits: 0,
            total: 0.0,
            terminal,
            choices,
            space,
            offset,
            stride,
            tried: 0,
            children: Vec::new(),
        });
        Ok(self.nodes.len() - 1)
    }

    /// Next untried joint action of `node` in its shuffled order, skipping
    /// combinations where two drones share a PBP.
    fn next_untried(&mut self, node: usize) -> Option<JointAction> {
        let n = &mut self.nodes[node];
        while n.tried < n.space {
            let mut idx = ((n.offset as u128 + n.tried as u128 * n.stride as u128) % n.space as u128) as u64;
            n.tried += 1;
            let mut actions = Vec::with_capacity(n.choices.len());
            for list in &n.choices {
                let len = list.len() as u64;
                actions.push(list[(idx % len) as usize]);
                idx /= len;
            }
            let mut seen = Vec::new();
            let distinct = actions.iter().filter(|a| !n.belief.is_ugv(a.robot)).all(|a| match a.target {
                Target::Node(t) => {
                    let fresh = !seen.contains(&t);
                    seen.push(t);
                    fresh
                }
                Target::Idle => true,
            });
            if distinct {
                return Some(JointAction::new(actions));
            }
        }
        None
    }

    fn select(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let ln = (n.visits.max(1) as f64).ln();
        let mut best = n.children[0];
        let mut best_score = f64::INFINITY;
        for &e in &n.children {
            let edge = &self.edges[e];
            let score = edge.mean() - self.ucb_c * (ln / edge.visits as f64).sqrt();
            if score < best_score {
                best_score = score;
                best = e;
            }
        }
        best
    }

    fn successor_slot(motion: &Motion, world: &WorldSample) -> (usize, Option<EdgeStatus>) {
        match motion.observed {
            None => (0, None),
            Some(e) => match world.status(e) {
                EdgeStatus::Blocked => (1, Some(EdgeStatus::Blocked)),
                EdgeStatus::Traversable => (2, Some(EdgeStatus::Traversable)),
            },
        }
    }

    fn branch_belief(motion: &Motion, status: Option<EdgeStatus>) -> BeliefState {
        match status {
            Some(s) => motion.branch_belief(s),
            None => motion.moved.clone(),
        }
    }

    fn simulate(&mut self, world: &WorldSample, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut node = 0usize;
        let mut depth = 0usize;
        let tail;
        loop {
            if self.nodes[node].terminal {
                tail = 0.0;
                break;
            }
            if depth >= self.config.max_tree_depth {
                tail = optimistic_rollout(self.ctx.graph, &self.nodes[node].belief, world, self.penalty, &mut self.scratch);
                break;
            }
            if let Some(joint) = self.next_untried(node) {
                let motion = simulate_motion(self.ctx.graph, self.ctx.speeds, &self.nodes[node].belief, &joint)?;
                let (_, status) = Self::successor_slot(&motion, world);
                let after = Self::branch_belief(&motion, status);
                self.edges.push(ActionEdge { joint, visits: 0, total: 0.0, motion, next: [None; 3] });
                let e = self.edges.len() - 1;
                self.nodes[node].children.push(e);
                path.push((node, e));
                tail = optimistic_rollout(self.ctx.graph, &after, world, self.penalty, &mut self.scratch);
                break;
            }
            if self.nodes[node].children.is_empty() {
                return Err(Error::Internal("decision node has no joint actions".into()));
            }
            let e = self.select(node);
            path.push((node, e));
            let (slot, status) = Self::successor_slot(&self.edges[e].motion, world);
            let child = match self.edges[e].next[slot] {
                Some(c) => c,
                None => {
                    let b = Self::branch_belief(&self.edges[e].motion, status);
                    let c = self.add_node(b, rng)?;
                    self.edges[e].next[slot] = Some(c);
                    c
                }
            };
            node = child;
            depth += 1;
        }
        let mut g = tail;
        if path.is_empty() {
            let n = &mut self.nodes[node];
            n.visits += 1;
            n.total += g;
        }
        for &(n, e) in path.iter().rev() {
            g += self.edges[e].motion.cost;
            let edge = &mut self.edges[e];
            edge.visits += 1;
            edge.total += g;
            let dn = &mut self.nodes[n];
            dn.visits += 1;
            dn.total += g;
        }
        Ok(())
    }
}

/// Optimistic shortest-path cost summed over live ground robots; unreachable goals count 0.
pub fn optimistic_team_cost(graph: &WorldGraph, belief: &BeliefState) -> f64 {
    let view = GraphView::Optimistic(belief.knowledge());
    let passable = |e| view.passable(e);
    let mut search = PathSearch::new();
    belief
        .live_ugvs()
        .map(|i| {
            let r = belief.ugv(i);
            let src = graph.pose_sources(&r.pose, Some(r.anchor), passable);
            search.run(graph, src.as_slice(), passable, Some(r.goal));
            let d = search.distance(r.goal);
            if d.is_finite() {
                d
            } else {
                0.0
            }
        })
        .sum()
}

/// Worlds used to estimate the return scale at the root.
const SCALE_SAMPLES: usize = 64;

/// Mean optimistic-rollout cost from `belief` over sampled worlds.
fn expected_rollout_cost(
    graph: &WorldGraph,
    belief: &BeliefState,
    config: &PlannerConfig,
    seed: u64,
    penalty: f64,
    search: &mut PathSearch,
) -> f64 {
    let mut rng = rng::rng_for(seed, &[stream::SCALE]);
    let mut scratch = RolloutScratch::default();
    let total: f64 = (0..SCALE_SAMPLES)
        .map(|_| {
            let (w, _) = sample_reachable_world(graph, belief, &mut rng, config.world_resample_limit, search);
            optimistic_rollout(graph, belief, &w, penalty, &mut scratch)
        })
        .sum();
    total / SCALE_SAMPLES as f64
}

/// True when every live ground robot can still reach its goal in `world`.
pub(crate) fn goals_reachable(graph: &WorldGraph, belief: &BeliefState, world: &WorldSample, search: &mut PathSearch) -> bool {
    belief.live_ugvs().all(|i| {
        let r = belief.ugv(i);
        let passable = |e: EdgeId| !world.is_blocked(e);
        let src = graph.pose_sources(&r.pose, Some(r.anchor), passable);
        search.run(graph, src.as_slice(), passable, Some(r.goal));
        search.distance(r.goal).is_finite()
    })
}

/// Draws a world consistent with `belief` in which every live goal is
/// reachable, by rejection. Falls back to the last draw after `limit` tries.
pub(crate) fn sample_reachable_world(
    graph: &WorldGraph,
    belief: &BeliefState,
    rng: &mut ChaCha8Rng,
    limit: usize,
    search: &mut PathSearch,
) -> (WorldSample, bool) {
    let mut w = sample_unknown(graph, belief.knowledge(), rng);
    for _ in 1..limit.max(1) {
        if goals_reachable(graph, belief, &w, search) {
            return (w, true);
        }
        w = sample_unknown(graph, belief.knowledge(), rng);
    }
    let ok = goals_reachable(graph, belief, &w, search);
    (w, ok)
}

/// Chooses the next joint action for `belief`.
pub fn plan_step(ctx: &PlanContext<'_>, belief: &BeliefState, config: &PlannerConfig, seed: u64) -> Result<PlanResult> {
    belief.check_graph(ctx.graph)?;
    if belief.all_done() {
        return Err(contract("every ground robot has already reached its goal"));
    }
    if config.rollouts_per_step == 0 {
        return Err(Error::Config("rollouts_per_step must be at least 1".into()));
    }
    if config.pruning.top_k() == 0 {
        return Err(Error::Config("top-K must be at least 1".into()));
    }
    if config.pruning.is_pruned() != ctx.ranking.is_some() && belief.num_uavs() > 0 {
        return Err(contract("pruned strategies need a ranking, unpruned ones must not get one"));
    }
    let mut tree_rng = rng::rng_for(seed, &[stream::TREE]);
    let penalty = 2.0 * ctx.graph.total_length();
    let mut search = PathSearch::new();
    let ucb_c = match config.ucb_constant {
        Some(c) => c,
        None => {
            let c = 0.5 * expected_rollout_cost(ctx.graph, belief, config, seed, penalty, &mut search);
            if c > 0.0 {
                c
            } else {
                1.0
            }
        }
    };
    let mut tree = Tree {
        ctx: *ctx,
        config,
        nodes: Vec::new(),
        edges: Vec::new(),
        ucb_c,
        penalty,
        scratch: RolloutScratch::default(),
    };
    tree.add_node(belief.clone(), &mut tree_rng)?;
    if tree.nodes[0].space == 1 {
        let only = tree.next_untried(0).ok_or_else(|| Error::Internal("no joint action".into()))?;
        return Ok(PlanResult { action: only, root_value: None, root_visits: 0, children: Vec::new(), tree_nodes: 1 });
    }
    for i in 0..config.rollouts_per_step {
        let mut rng = rng::rng_for(seed, &[stream::ROLLOUT, i as u64]);
        let (world, _) = sample_reachable_world(ctx.graph, belief, &mut rng, config.world_resample_limit, &mut search);
        tree.simulate(&world, &mut rng)?;
    }
    let root = &tree.nodes[0];
    let mut children: Vec<ChildStat> = root
        .children
        .iter()
        .map(|&e| {
            let edge = &tree.edges[e];
            ChildStat { action: edge.joint.clone(), visits: edge.visits, mean_cost: edge.mean() }
        })
        .collect();
    children.sort_by(|a, b| a.mean_cost.total_cmp(&b.mean_cost).then_with(|| a.action.cmp(&b.action)));
    let best = children.first().ok_or_else(|| Error::Internal("root has no children".into()))?;
    Ok(PlanResult {
        action: best.action.clone(),
        root_value: Some(best.mean_cost),
        root_visits: root.visits,
        tree_nodes: tree.nodes.len(),
        children,
    })
}

