//! Offline training data for a learned value-change predictor.
//!
//! One [`LabeledInstance`] per (graph, start-goal pair): the graph, a one-hot
//! start/goal marker per vertex, `[length, p_block]` per edge and the Monte
//! Carlo value change of every uncertain edge under the prior belief. Files
//! are newline-delimited JSON, gzip-compressed when the path ends in `.gz`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::{generate, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::graph::{EdgeKnowledge, NodeId, Pose, WorldGraph};
use crate::pruning::{value_changes_all, OracleConfig};
use crate::rng::{self, stream};

/// Minimum hop distance between a randomly drawn start and goal.
pub const MIN_PAIR_HOPS: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotPair {
    pub start: NodeId,
    pub goal: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub graph: crate::graph::GraphFile,
    pub robot: RobotPair,
    /// Per vertex: `[1, 0]` for the start, `[0, 1]` for the goal, zeros elsewhere.
    pub node_features: Vec<[f64; 2]>,
    /// Per edge: `[length, p_block]`.
    pub edge_features: Vec<[f64; 2]>,
    /// Per edge value change in meters.
    pub labels: Vec<f64>,
    /// Per edge: true iff `0 < p_block < 1`.
    pub mask: Vec<bool>,
}

impl LabeledInstance {
    /// Labels every uncertain edge for a robot standing at `pair.start`.
    pub fn label(graph: &WorldGraph, pair: RobotPair, oracle: &OracleConfig) -> Result<Self> {
        if !graph.is_vertex(pair.start) || !graph.is_vertex(pair.goal) || pair.start == pair.goal {
            return Err(Error::Dataset("start and goal must be distinct vertices".into()));
        }
        let mask: Vec<bool> = graph.edges().iter().map(|e| !e.is_certain()).collect();
        let knowledge: Vec<EdgeKnowledge> = graph
            .edges()
            .iter()
            .zip(&mask)
            .map(|(e, &m)| match (m, e.p_block >= 1.0) {
                (true, _) => EdgeKnowledge::Unknown,
                (false, true) => EdgeKnowledge::Blocked,
                (false, false) => EdgeKnowledge::Traversable,
            })
            .collect();
        let est = value_changes_all(graph, &knowledge, &Pose::AtNode(pair.start), Some(pair.start), pair.goal, oracle)?;
        let labels = est.iter().map(|e| e.map_or(0.0, |e| e.value)).collect();
        let node_features = (0..graph.num_vertices() as u32)
            .map(|v| {
                let n = NodeId(v);
                [f64::from(u8::from(n == pair.start)), f64::from(u8::from(n == pair.goal))]
            })
            .collect();
        let edge_features = graph.edges().iter().map(|e| [e.length, e.p_block]).collect();
        let inst = Self { graph: graph.to_file(), robot: pair, node_features, edge_features, labels, mask };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Dataset(m.to_string()));
        let graph = WorldGraph::from_file(&self.graph).map_err(|e| Error::Dataset(e.to_string()))?;
        let (nv, ne) = (graph.num_vertices(), graph.num_edges());
        if self.node_features.len() != nv {
            return bad("node_features length differs from the vertex count");
        }
        if self.edge_features.len() != ne || self.labels.len() != ne || self.mask.len() != ne {
            return bad("per-edge arrays differ from the edge count");
        }
        if !graph.is_vertex(self.robot.start) || !graph.is_vertex(self.robot.goal) {
            return bad("robot start/goal is not a vertex");
        }
        let mut starts = 0;
        let mut goals = 0;
        for (v, f) in self.node_features.iter().enumerate() {
            match *f {
                [1.0, 0.0] => {
                    starts += 1;
                    if v as u32 != self.robot.start.0 {
                        return bad("start marker on the wrong vertex");
                    }
                }
                [0.0, 1.0] => {
                    goals += 1;
                    if v as u32 != self.robot.goal.0 {
                        return bad("goal marker on the wrong vertex");
                    }
                }
                [0.0, 0.0] => {}
                _ => return bad("node feature is not one-hot"),
            }
        }
        if starts != 1 || goals != 1 {
            return bad("need exactly one start and one goal marker");
        }
        for (j, e) in graph.edges().iter().enumerate() {
            if self.edge_features[j] != [e.length, e.p_block] {
                return bad("edge features disagree with the graph");
            }
            if self.mask[j] != !e.is_certain() {
                return bad("mask disagrees with p_block");
            }
            let l = self.labels[j];
            if !l.is_finite() || l < 0.0 {
                return bad("labels must be finite and nonnegative");
            }
            if !self.mask[j] && l != 0.0 {
                return bad("masked-out edge has a nonzero label");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_graphs: usize,
    /// Graph `i` uses `kinds[i % kinds.len()]`.
    pub kinds: Vec<EnvKind>,
    pub robots_per_graph: usize,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.robots_per_graph == 0 {
            return Err(Error::Config("robots_per_graph must be at least 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no environment kinds given".into()));
        }
        if self.oracle.samples == 0 {
            return Err(Error::Config("oracle needs at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub instances: usize,
    pub skipped: usize,
    /// Over masked-in edges.
    pub label_mean: f64,
    pub label_max: f64,
    /// Fraction of masked-in edges with a zero label.
    pub zero_fraction: f64,
}

impl DatasetSummary {
    pub fn of(instances: &[LabeledInstance], skipped: usize) -> Self {
        let labels: Vec<f64> = instances
            .iter()
            .flat_map(|i| i.labels.iter().zip(&i.mask).filter(|(_, &m)| m).map(|(&l, _)| l))
            .collect();
        let n = labels.len().max(1) as f64;
        Self {
            instances: instances.len(),
            skipped,
            label_mean: labels.iter().sum::<f64>() / n,
            label_max: labels.iter().copied().fold(0.0, f64::max),
            zero_fraction: labels.iter().filter(|&&l| l == 0.0).count() as f64 / n,
        }
    }
}

fn hop_distances(graph: &WorldGraph, from: NodeId) -> Vec<usize> {
    let mut hops = vec![usize::MAX; graph.num_vertices()];
    hops[from.index()] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &e in graph.incident(v) {
            let w = graph.edge(e).other(v).expect("incident edge");
            if hops[w.index()] == usize::MAX {
                hops[w.index()] = hops[v.index()] + 1;
                queue.push_back(w);
            }
        }
    }
    hops
}

/// Uniform random start-goal pair at least [`MIN_PAIR_HOPS`] apart, if any exists.
pub fn random_pair(graph: &WorldGraph, rng: &mut impl rand::Rng) -> Option<RobotPair> {
    let mut pairs = Vec::new();
    for s in 0..graph.num_vertices() as u32 {
        let hops = hop_distances(graph, NodeId(s));
        for (g, &h) in hops.iter().enumerate() {
            if h != usize::MAX && h >= MIN_PAIR_HOPS {
                pairs.push(RobotPair { start: NodeId(s), goal: NodeId(g as u32) });
            }
        }
    }
    pairs.choose(rng).copied()
}

/// Even pair indices take the generator's canonical pairs while they last;
/// everything else is a random pair.
fn plan_pairs(spec: &DatasetSpec, graph_index: usize) -> Result<(WorldGraph, Vec<RobotPair>)> {
    let kind = spec.kinds[graph_index % spec.kinds.len()];
    let env_seed = rng::derive_seed(spec.seed, &[stream::DATASET, graph_index as u64]);
    let scenario = generate(&EnvSpec::new(kind, env_seed, 3, 0))?;
    let canonical: Vec<RobotPair> = scenario
        .team
        .starts
        .iter()
        .zip(&scenario.team.goals)
        .map(|(&start, &goal)| RobotPair { start, goal })
        .collect();
    let mut rng = rng::rng_for(env_seed, &[stream::DATASET]);
    let mut pairs = Vec::with_capacity(spec.robots_per_graph);
    for r in 0..spec.robots_per_graph {
        let pick = if r % 2 == 0 { canonical.get(r / 2).copied() } else { None };
        let pair = match pick {
            Some(p) => p,
            None => random_pair(&scenario.graph, &mut rng).unwrap_or(canonical[r % canonical.len()]),
        };
        pairs.push(pair);
    }
    Ok((scenario.graph, pairs))
}

/// Generates and labels every instance, in (graph, pair) order.
pub fn generate_instances(spec: &DatasetSpec) -> Result<(Vec<LabeledInstance>, usize)> {
    spec.validate()?;
    let jobs: Vec<(usize, WorldGraph, Vec<RobotPair>)> = (0..spec.num_graphs)
        .map(|g| plan_pairs(spec, g).map(|(graph, pairs)| (g, graph, pairs)))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize, &WorldGraph, RobotPair)> = jobs
        .iter()
        .flat_map(|(g, graph, pairs)| pairs.iter().enumerate().map(move |(r, &p)| (*g, r, graph, p)))
        .collect();
    let results: Vec<Result<LabeledInstance>> = tasks
        .par_iter()
        .map(|&(g, r, graph, pair)| {
            let oracle = OracleConfig {
                seed: rng::derive_seed(spec.seed, &[stream::ORACLE, g as u64, r as u64]),
                ..spec.oracle.clone()
            };
            LabeledInstance::label(graph, pair, &oracle)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for (res, (g, r, _, _)) in results.into_iter().zip(&tasks) {
        match res {
            Ok(inst) => out.push(inst),
            Err(e) => {
                skipped += 1;
                log::warn!("skipping graph {g} pair {r}: {e}");
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} instances skipped");
    }
    Ok((out, skipped))
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Writes instances as NDJSON, validating each first.
pub fn write_instances(path: &Path, instances: &[LabeledInstance]) -> Result<()> {
    let file = File::create(path)?;
    let mut sink: Box<dyn Write> = if is_gzip(path) {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    for inst in instances {
        inst.validate()?;
        serde_json::to_writer(&mut sink, inst)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads and validates an NDJSON dataset.
pub fn read_instances(path: &Path) -> Result<Vec<LabeledInstance>> {
    let file = File::open(path)?;
    let source: Box<dyn Read> = if is_gzip(path) { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: LabeledInstance =
            serde_json::from_str(&line).map_err(|e| Error::Dataset(format!("line {}: {e}", i + 1)))?;
        inst.validate().map_err(|e| Error::Dataset(format!("line {}: {e}", i + 1)))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn build_dataset(spec: &DatasetSpec) -> Result<DatasetSummary> {
    let (instances, skipped) = generate_instances(spec)?;
    write_instances(&spec.out, &instances)?;
    Ok(DatasetSummary::of(&instances, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::two_route;

    #[test]
    fn two_route_labels() {
        let s = two_route(0.5);
        let pair = RobotPair { start: NodeId(0), goal: NodeId(1) };
        let inst = LabeledInstance::label(&s.graph, pair, &OracleConfig::default()).unwrap();
        assert!((inst.labels[0] - 20.0).abs() < 1e-9);
        assert_eq!(&inst.labels[1..], &[0.0, 0.0]);
        assert_eq!(inst.mask, vec![true, false, false]);
        assert_eq!(inst.node_features, vec![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
    }

    #[test]
    fn validation_catches_tampering() {
        let s = two_route(0.5);
        let pair = RobotPair { start: NodeId(0), goal: NodeId(1) };
        let inst = LabeledInstance::label(&s.graph, pair, &OracleConfig { samples: 10, ..Default::default() }).unwrap();
        let mut bad = inst.clone();
        bad.labels[1] = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = inst.clone();
        bad.labels[0] = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = inst.clone();
        bad.node_features[2] = [1.0, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = inst;
        bad.mask[0] = false;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn random_pairs_are_far_enough() {
        let s = generate(&EnvSpec::new(EnvKind::DenseUrban, 3, 1, 0)).unwrap();
        let mut rng = rng::rng_for(1, &[]);
        for _ in 0..50 {
            let p = random_pair(&s.graph, &mut rng).unwrap();
            assert!(hop_distances(&s.graph, p.start)[p.goal.index()] >= MIN_PAIR_HOPS);
        }
    }
}
