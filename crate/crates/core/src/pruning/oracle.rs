//! Monte Carlo value-change oracle.
//!
//! For an unknown edge `e`, the value change is the expected clairvoyant
//! shortest-path cost with `e` forced blocked minus the same with `e` forced
//! traversable, clipped at zero. Both conditionings share the same sampled
//! realizations of the remaining unknown edges.
//!
//! Each edge's uniforms come from its own stream and are Latin-hypercube
//! stratified over the `M` samples, so the estimate for one edge does not
//! depend on which other edges are being scored.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::graph::{EdgeId, EdgeKnowledge, NodeId, NodeKind, PathSearch, Pose, WorldGraph};
use crate::rng::{self, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub samples: usize,
    /// Cost charged for an unreachable goal; `None` means twice the total edge length.
    #[serde(default)]
    pub disconnect_penalty: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { samples: 1000, disconnect_penalty: None, seed: 0 }
    }
}

impl OracleConfig {
    pub fn penalty(&self, graph: &WorldGraph) -> f64 {
        self.disconnect_penalty.unwrap_or_else(|| 2.0 * graph.total_length())
    }
}

/// One robot's value-change question about one edge.
#[derive(Copy, Clone, Debug)]
pub struct ValueChangeQuery<'a> {
    pub graph: &'a WorldGraph,
    pub knowledge: &'a [EdgeKnowledge],
    pub start: Pose,
    /// Side of a blocked PBP the robot stands on, if it stands on one.
    pub anchor: Option<NodeId>,
    pub goal: NodeId,
    pub edge: EdgeId,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueChangeEstimate {
    /// `max(0, raw_mean)`.
    pub value: f64,
    pub raw_mean: f64,
    /// Standard error of `raw_mean` under iid sampling.
    pub std_error: f64,
    pub v_block: f64,
    pub v_trav: f64,
}

/// Per-sample realizations of every unknown edge: `blocked[k][e]`.
struct Realizations {
    blocked: Vec<Vec<bool>>,
}

fn realize(graph: &WorldGraph, knowledge: &[EdgeKnowledge], cfg: &OracleConfig) -> Realizations {
    let m = cfg.samples;
    let mut blocked = vec![vec![false; graph.num_edges()]; m];
    for (j, e) in graph.edges().iter().enumerate() {
        match knowledge[j] {
            EdgeKnowledge::Blocked => blocked.iter_mut().for_each(|w| w[j] = true),
            EdgeKnowledge::Traversable => {}
            EdgeKnowledge::Unknown => {
                let mut r = rng::rng_for(cfg.seed, &[stream::ORACLE, j as u64]);
                let mut strata: Vec<usize> = (0..m).collect();
                strata.shuffle(&mut r);
                for (k, w) in blocked.iter_mut().enumerate() {
                    let u = (strata[k] as f64 + r.gen::<f64>()) / m as f64;
                    w[j] = u < e.p_block;
                }
            }
        }
    }
    Realizations { blocked }
}

fn edge_of_pose(graph: &WorldGraph, pose: &Pose) -> Option<EdgeId> {
    match *pose {
        Pose::OnEdge { edge, .. } => Some(edge),
        Pose::AtNode(n) => match graph.node_kind(n) {
            NodeKind::Pbp(e) => Some(e),
            NodeKind::Vertex => None,
        },
    }
}

fn check_query(graph: &WorldGraph, knowledge: &[EdgeKnowledge], start: &Pose, goal: NodeId, cfg: &OracleConfig) -> Result<()> {
    if knowledge.len() != graph.num_edges() {
        return Err(contract("knowledge does not cover the graph"));
    }
    graph.validate_pose(start)?;
    if !graph.is_vertex(goal) {
        return Err(contract("goal must be a vertex"));
    }
    if cfg.samples == 0 {
        return Err(contract("oracle needs at least one sample"));
    }
    Ok(())
}

/// Shortest cost from the query pose to its goal in one realized world.
fn cost_in(
    search: &mut PathSearch,
    graph: &WorldGraph,
    start: &Pose,
    anchor: Option<NodeId>,
    goal: NodeId,
    blocked: impl Fn(EdgeId) -> bool,
) -> f64 {
    let passable = |e: EdgeId| !blocked(e);
    let src = graph.pose_sources(start, anchor, passable);
    search.run(graph, src.as_slice(), passable, Some(goal));
    search.distance(goal)
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    sum_b: f64,
    sum_t: f64,
    sum_d: f64,
    sum_d2: f64,
}

impl Accumulator {
    fn push(&mut self, vb: f64, vt: f64) {
        let d = vb - vt;
        self.n += 1;
        self.sum_b += vb;
        self.sum_t += vt;
        self.sum_d += d;
        self.sum_d2 += d * d;
    }

    fn finish(&self) -> ValueChangeEstimate {
        let n = self.n as f64;
        let mean = self.sum_d / n;
        let var = if self.n > 1 { ((self.sum_d2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        ValueChangeEstimate {
            value: mean.max(0.0),
            raw_mean: mean,
            std_error: (var / n).sqrt(),
            v_block: self.sum_b / n,
            v_trav: self.sum_t / n,
        }
    }
}

/// Value change of one unknown edge for one robot.
pub fn value_change_mc(query: &ValueChangeQuery<'_>, cfg: &OracleConfig) -> Result<ValueChangeEstimate> {
    let q = query;
    check_query(q.graph, q.knowledge, &q.start, q.goal, cfg)?;
    if q.edge.index() >= q.graph.num_edges() || q.knowledge[q.edge.index()] != EdgeKnowledge::Unknown {
        return Err(contract(format!("edge {} is not unknown", q.edge.0)));
    }
    let penalty = cfg.penalty(q.graph);
    let worlds = realize(q.graph, q.knowledge, cfg);
    let mut search = PathSearch::new();
    let mut acc = Accumulator::default();
    let fin = |d: f64| if d.is_finite() { d } else { penalty };
    for w in &worlds.blocked {
        let vb = cost_in(&mut search, q.graph, &q.start, q.anchor, q.goal, |x| x == q.edge || w[x.index()]);
        let vt = cost_in(&mut search, q.graph, &q.start, q.anchor, q.goal, |x| x != q.edge && w[x.index()]);
        acc.push(fin(vb), fin(vt));
    }
    Ok(acc.finish())
}

/// Value change of every unknown edge for one robot, sharing realizations.
/// Known edges get `None`.
pub fn value_changes_all(
    graph: &WorldGraph,
    knowledge: &[EdgeKnowledge],
    start: &Pose,
    anchor: Option<NodeId>,
    goal: NodeId,
    cfg: &OracleConfig,
) -> Result<Vec<Option<ValueChangeEstimate>>> {
    check_query(graph, knowledge, start, goal, cfg)?;
    let penalty = cfg.penalty(graph);
    let fin = |d: f64| if d.is_finite() { d } else { penalty };
    let unknown: Vec<usize> = (0..graph.num_edges()).filter(|&j| knowledge[j] == EdgeKnowledge::Unknown).collect();
    let own_edge = edge_of_pose(graph, start);
    let worlds = realize(graph, knowledge, cfg);
    let mut accs: Vec<Accumulator> = unknown.iter().map(|_| Accumulator::default()).collect();
    let (mut fwd, mut bwd, mut extra) = (PathSearch::new(), PathSearch::new(), PathSearch::new());
    let mut on_path = vec![false; graph.num_edges()];
    for w in &worlds.blocked {
        let passable = |x: EdgeId| !w[x.index()];
        let src = graph.pose_sources(start, anchor, passable);
        fwd.run(graph, src.as_slice(), passable, None);
        bwd.run(graph, &[(goal, 0.0)], passable, None);
        let base = fwd.distance(goal);
        on_path.iter_mut().for_each(|b| *b = false);
        if let Some(path) = fwd.path(goal) {
            for n in path {
                if let Some(e) = graph.edge_of_pbp(n) {
                    on_path[e.index()] = true;
                }
            }
        }
        for (slot, &j) in unknown.iter().enumerate() {
            let e = EdgeId(j as u32);
            let (vb, vt) = if own_edge == Some(e) {
                (
                    cost_in(&mut extra, graph, start, anchor, goal, |x| x == e || w[x.index()]),
                    cost_in(&mut extra, graph, start, anchor, goal, |x| x != e && w[x.index()]),
                )
            } else if !w[j] {
                let vb = if on_path[j] {
                    cost_in(&mut extra, graph, start, anchor, goal, |x| x == e || w[x.index()])
                } else {
                    base
                };
                (vb, base)
            } else {
                let edge = graph.edge(e);
                let via = (fwd.distance(edge.u) + edge.length + bwd.distance(edge.v))
                    .min(fwd.distance(edge.v) + edge.length + bwd.distance(edge.u));
                (base, base.min(via))
            };
            accs[slot].push(fin(vb), fin(vt));
        }
    }
    let mut out = vec![None; graph.num_edges()];
    for (slot, &j) in unknown.iter().enumerate() {
        out[j] = Some(accs[slot].finish());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::two_route;

    fn prior(graph: &WorldGraph) -> Vec<EdgeKnowledge> {
        graph
            .edges()
            .iter()
            .map(|e| match e.p_block {
                p if p <= 0.0 => EdgeKnowledge::Traversable,
                p if p >= 1.0 => EdgeKnowledge::Blocked,
                _ => EdgeKnowledge::Unknown,
            })
            .collect()
    }

    #[test]
    fn two_route_value_change_is_twenty() {
        let s = two_route(0.5);
        let k = prior(&s.graph);
        let q = ValueChangeQuery {
            graph: &s.graph,
            knowledge: &k,
            start: Pose::AtNode(NodeId(0)),
            anchor: None,
            goal: NodeId(1),
            edge: EdgeId(0),
        };
        for m in [1, 7, 1000] {
            let est = value_change_mc(&q, &OracleConfig { samples: m, ..Default::default() }).unwrap();
            assert!((est.value - 20.0).abs() < 1e-9);
            assert!((est.v_block - 30.0).abs() < 1e-9 && (est.v_trav - 10.0).abs() < 1e-9);
            assert_eq!(est.std_error, 0.0);
        }
    }

    #[test]
    fn known_edge_is_rejected() {
        let s = two_route(0.5);
        let k = prior(&s.graph);
        let q = ValueChangeQuery {
            graph: &s.graph,
            knowledge: &k,
            start: Pose::AtNode(NodeId(0)),
            anchor: None,
            goal: NodeId(1),
            edge: EdgeId(1),
        };
        assert!(value_change_mc(&q, &OracleConfig::default()).is_err());
    }

    #[test]
    fn stratified_marginals_are_exact_in_expectation() {
        let s = two_route(0.3);
        let k = prior(&s.graph);
        let w = realize(&s.graph, &k, &OracleConfig { samples: 1000, ..Default::default() });
        let frac = w.blocked.iter().filter(|w| w[0]).count() as f64 / 1000.0;
        // one draw per stratum: the count can be off by at most one
        assert!((frac - 0.3).abs() <= 0.001 + 1e-12);
    }
}
