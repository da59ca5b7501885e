//! Drone action pruning: distance-based (DAP), information-gain (IAP) and
//! learned information-gain (LIAP) rankings, and the per-drone candidate
//! sets they induce.

pub mod oracle;
pub mod predictor;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use oracle::{value_change_mc, value_changes_all, OracleConfig, ValueChangeEstimate, ValueChangeQuery};
pub use predictor::{PredictorClient, PredictorConfig};

use crate::action::{RobotId, Target};
use crate::belief::BeliefState;
use crate::error::{contract, Result};
use crate::graph::{EdgeKnowledge, NodeId, WorldGraph};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IapComponents {
    pub travel_time: f64,
    pub variance: f64,
    pub team_value_change: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneScore {
    pub pbp: NodeId,
    pub drone: RobotId,
    /// Higher is better; `f64::INFINITY` marks a degenerate zero-distance case.
    pub score: f64,
    pub components: Option<IapComponents>,
}

fn check_unknown_pbp(graph: &WorldGraph, belief: &BeliefState, pbp: NodeId) -> Result<crate::graph::EdgeId> {
    let e = graph.edge_of_pbp(pbp).ok_or_else(|| contract(format!("node {} is not a PBP", pbp.0)))?;
    if belief.edge_knowledge(e) != EdgeKnowledge::Unknown {
        return Err(contract(format!("PBP {} is not unknown", pbp.0)));
    }
    Ok(e)
}

fn check_drone(belief: &BeliefState, drone: RobotId) -> Result<usize> {
    let j = drone.index().checked_sub(belief.num_ugvs()).filter(|&j| j < belief.num_uavs());
    j.ok_or_else(|| contract(format!("{drone} is not a drone")))
}

/// Distance score: inverse summed straight-line distance from the live
/// ground robots to the PBP.
pub fn dap_score(graph: &WorldGraph, belief: &BeliefState, drone: RobotId, pbp: NodeId) -> Result<PruneScore> {
    check_drone(belief, drone)?;
    check_unknown_pbp(graph, belief, pbp)?;
    let target = graph.node_position(pbp);
    let total: f64 = belief.live_ugvs().map(|i| graph.pose_position(&belief.ugv(i).pose).distance(target)).sum();
    let score = if total > 0.0 { 1.0 / total } else { f64::INFINITY };
    Ok(PruneScore { pbp, drone, score, components: None })
}

/// Information-gain priority given the team's summed value change for this PBP's edge.
pub fn iap_priority(
    graph: &WorldGraph,
    belief: &BeliefState,
    uav_speed: f64,
    drone: RobotId,
    pbp: NodeId,
    team_value_change: f64,
) -> Result<PruneScore> {
    let j = check_drone(belief, drone)?;
    let e = check_unknown_pbp(graph, belief, pbp)?;
    let p = graph.edge(e).p_block;
    let travel_time = belief.uavs()[j].distance(graph.node_position(pbp)) / uav_speed;
    let variance = p * (1.0 - p);
    let gain = variance * team_value_change;
    let score = if gain <= 0.0 {
        0.0
    } else if travel_time > 0.0 {
        gain / travel_time
    } else {
        f64::INFINITY
    };
    Ok(PruneScore {
        pbp,
        drone,
        score,
        components: Some(IapComponents { travel_time, variance, team_value_change }),
    })
}

/// Best-first order: higher score, then lower PBP id.
fn by_rank(a: &PruneScore, b: &PruneScore) -> Ordering {
    b.score.total_cmp(&a.score).then(a.pbp.cmp(&b.pbp))
}

/// Per-drone PBP rankings, best first, computed once per decision step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub per_drone: Vec<Vec<PruneScore>>,
}

impl Ranking {
    fn build(belief: &BeliefState, graph: &WorldGraph, mut score: impl FnMut(RobotId, NodeId) -> Result<PruneScore>) -> Result<Self> {
        let unknown = belief.unknown_pbps(graph);
        let mut per_drone = Vec::with_capacity(belief.num_uavs());
        for j in 0..belief.num_uavs() {
            let drone = belief.uav_robot_id(j);
            let mut scores = unknown.iter().map(|&b| score(drone, b)).collect::<Result<Vec<_>>>()?;
            scores.sort_by(by_rank);
            per_drone.push(scores);
        }
        Ok(Self { per_drone })
    }

    pub fn dap(graph: &WorldGraph, belief: &BeliefState) -> Result<Self> {
        Self::build(belief, graph, |d, b| dap_score(graph, belief, d, b))
    }

    /// `team_vc[e]` is the summed value change of edge `e` over live ground robots.
    pub fn iap(graph: &WorldGraph, belief: &BeliefState, uav_speed: f64, team_vc: &[f64]) -> Result<Self> {
        if team_vc.len() != graph.num_edges() {
            return Err(contract("value changes must cover every edge"));
        }
        Self::build(belief, graph, |d, b| {
            let e = graph.edge_of_pbp(b).expect("unknown PBP");
            iap_priority(graph, belief, uav_speed, d, b, team_vc[e.index()])
        })
    }
}

/// Candidate targets for every drone.
///
/// With a ranking, each drone keeps up to `k` of its best still-unknown PBPs;
/// ranks are handed out round-robin in drone-id order and a drone skips any
/// PBP another drone already holds, so the sets are disjoint. Scores at or
/// below `floor` are dropped. Without a ranking every drone gets all of
/// `ℬ_U`, plus `Idle` when there are fewer PBPs than drones. A drone left
/// with nothing gets `Idle`.
pub fn prune_drone_actions(
    graph: &WorldGraph,
    belief: &BeliefState,
    ranking: Option<&Ranking>,
    k: usize,
    floor: Option<f64>,
) -> Result<Vec<Vec<Target>>> {
    if k == 0 {
        return Err(contract("top-K needs K >= 1"));
    }
    let m = belief.num_uavs();
    let unknown = belief.unknown_pbps(graph);
    let Some(ranking) = ranking else {
        let mut all: Vec<Target> = unknown.iter().map(|&b| Target::Node(b)).collect();
        if unknown.len() < m {
            all.push(Target::Idle);
        }
        return Ok(vec![all; m]);
    };
    if ranking.per_drone.len() != m {
        return Err(contract("ranking does not match the drone count"));
    }
    let mut out: Vec<Vec<Target>> = vec![Vec::new(); m];
    let mut cursor = vec![0usize; m];
    let mut claimed: Vec<NodeId> = Vec::new();
    let usable = |s: &PruneScore| {
        graph.edge_of_pbp(s.pbp).is_some_and(|e| belief.edge_knowledge(e) == EdgeKnowledge::Unknown)
            && floor.is_none_or(|f| s.score > f)
    };
    for _rank in 0..k {
        for j in 0..m {
            let list = &ranking.per_drone[j];
            while cursor[j] < list.len() {
                let s = &list[cursor[j]];
                cursor[j] += 1;
                if usable(s) && !claimed.contains(&s.pbp) {
                    claimed.push(s.pbp);
                    out[j].push(Target::Node(s.pbp));
                    break;
                }
            }
        }
    }
    for targets in &mut out {
        if targets.is_empty() {
            targets.push(Target::Idle);
        }
    }
    Ok(out)
}

/// Source of per-edge value changes for one ground robot.
pub trait ValueChangeProvider {
    /// Value change (meters, `>= 0`) of every edge for ground robot `ugv`;
    /// known edges report 0.
    fn value_changes(&mut self, graph: &WorldGraph, belief: &BeliefState, ugv: usize) -> Result<Vec<f64>>;
}

/// Value changes from the Monte Carlo oracle.
#[derive(Clone, Debug)]
pub struct MonteCarloValueChange {
    pub oracle: OracleConfig,
}

impl ValueChangeProvider for MonteCarloValueChange {
    fn value_changes(&mut self, graph: &WorldGraph, belief: &BeliefState, ugv: usize) -> Result<Vec<f64>> {
        let r = belief.ugv(ugv);
        let est = value_changes_all(graph, belief.knowledge(), &r.pose, Some(r.anchor), r.goal, &self.oracle)?;
        Ok(est.into_iter().map(|e| e.map_or(0.0, |e| e.value)).collect())
    }
}

/// Summed value change over live ground robots, per edge.
pub fn team_value_change(
    provider: &mut dyn ValueChangeProvider,
    graph: &WorldGraph,
    belief: &BeliefState,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; graph.num_edges()];
    let live: Vec<usize> = belief.live_ugvs().collect();
    for i in live {
        let vc = provider.value_changes(graph, belief, i)?;
        if vc.len() != total.len() {
            return Err(contract("value-change provider returned the wrong edge count"));
        }
        for (t, v) in total.iter_mut().zip(vc) {
            *t += v.max(0.0);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::GroundRobot;
    use crate::graph::{Point, Pose};

    /// Vertices on a 10 m grid row with a drone at the origin.
    fn fixture(ugv_at: &[u32], drones: &[Point]) -> (WorldGraph, BeliefState) {
        let g = WorldGraph::new(
            vec![Point::new(0.0, 0.0), Point::new(20.0, 0.0), Point::new(40.0, 0.0), Point::new(60.0, 0.0)],
            &[(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5)],
        )
        .unwrap();
        let ugvs = ugv_at
            .iter()
            .map(|&n| GroundRobot { pose: Pose::AtNode(NodeId(n)), anchor: NodeId(n), goal: NodeId(3), done: false })
            .collect();
        let k = vec![EdgeKnowledge::Unknown; 3];
        let b = BeliefState::from_parts(&g, ugvs, drones.to_vec(), k).unwrap();
        (g, b)
    }

    #[test]
    fn dap_substitution() {
        // two robots, each 10 m from the first PBP: 1 / (10 + 10)
        let (g, b) = fixture(&[0, 1], &[Point::new(0.0, 0.0)]);
        let s = dap_score(&g, &b, RobotId(2), NodeId(4)).unwrap();
        assert!((s.score - 0.05).abs() < 1e-12);
        let (g, b) = fixture(&[0], &[Point::new(0.0, 0.0)]);
        let s = dap_score(&g, &b, RobotId(1), NodeId(5)).unwrap();
        assert!((s.score - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn iap_substitution() {
        let (g, b) = fixture(&[0], &[Point::new(4.0, 0.0)]);
        // drone 6 m from the PBP at x=10 at 3 m/s: t = 2 s
        let s = iap_priority(&g, &b, 3.0, RobotId(1), NodeId(4), 4.0).unwrap();
        assert!((s.score - 0.5).abs() < 1e-12);
        let c = s.components.unwrap();
        assert!((c.travel_time - 2.0).abs() < 1e-12 && (c.variance - 0.25).abs() < 1e-12);
        assert_eq!(iap_priority(&g, &b, 3.0, RobotId(1), NodeId(4), 0.0).unwrap().score, 0.0);
        let (g, b) = fixture(&[0], &[Point::new(10.0, 0.0)]);
        assert_eq!(iap_priority(&g, &b, 3.0, RobotId(1), NodeId(4), 1.0).unwrap().score, f64::INFINITY);
    }

    fn table(scores: &[&[(u32, f64)]]) -> Ranking {
        Ranking {
            per_drone: scores
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let mut v: Vec<PruneScore> = row
                        .iter()
                        .map(|&(b, s)| PruneScore { pbp: NodeId(b), drone: RobotId(1 + j as u32), score: s, components: None })
                        .collect();
                    v.sort_by(by_rank);
                    v
                })
                .collect(),
        }
    }

    #[test]
    fn shared_top_choice_goes_to_lower_drone() {
        let (g, b) = fixture(&[0], &[Point::new(0.0, 0.0), Point::new(60.0, 0.0)]);
        let r = table(&[&[(4, 3.0), (5, 2.0), (6, 1.0)], &[(4, 5.0), (6, 4.0), (5, 0.5)]]);
        let c = prune_drone_actions(&g, &b, Some(&r), 1, None).unwrap();
        assert_eq!(c, vec![vec![Target::Node(NodeId(4))], vec![Target::Node(NodeId(6))]]);
        let c = prune_drone_actions(&g, &b, Some(&r), 2, None).unwrap();
        assert_eq!(c[0], vec![Target::Node(NodeId(4)), Target::Node(NodeId(5))]);
        assert_eq!(c[1], vec![Target::Node(NodeId(6))]);
    }

    #[test]
    fn no_pruning_and_saturation() {
        let (g, b) = fixture(&[0], &[Point::new(0.0, 0.0)]);
        let all = prune_drone_actions(&g, &b, None, 1, None).unwrap();
        assert_eq!(all[0].len(), 3);
        let r = Ranking::dap(&g, &b).unwrap();
        let mut top = prune_drone_actions(&g, &b, Some(&r), 5, None).unwrap();
        top[0].sort();
        assert_eq!(top, all);
    }

    #[test]
    fn floor_drops_useless_targets() {
        let (g, b) = fixture(&[0], &[Point::new(0.0, 0.0)]);
        let r = Ranking::iap(&g, &b, 3.0, &[2.0, 0.0, 0.0]).unwrap();
        let c = prune_drone_actions(&g, &b, Some(&r), 3, Some(0.0)).unwrap();
        assert_eq!(c[0], vec![Target::Node(NodeId(4))]);
    }
}
