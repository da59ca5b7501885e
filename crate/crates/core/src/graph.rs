//! The unified world graph.
//!
//! Intersections are vertex nodes `0..n`. Every edge carries exactly one
//! possible blocking point (PBP) at its midpoint, and that PBP is itself a node
//! with id `n + edge_id`. Travel therefore happens over half-edges
//! `u - pbp - v`, each costing half the edge length. A blocked edge still lets a
//! robot walk up to its PBP, but never through it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{contract, Error, Result};
use crate::rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A planar position in meters.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at fraction `t` of the way from `self` to `other`.
    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    /// Moves at most `step` meters toward `target`.
    pub fn step_toward(self, target: Point, step: f64) -> Point {
        let d = self.distance(target);
        if d <= step || d == 0.0 {
            target
        } else {
            self.lerp(target, step / d)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub u: NodeId,
    pub v: NodeId,
    pub pbp: NodeId,
    pub length: f64,
    pub p_block: f64,
}

impl Edge {
    pub fn half(&self) -> f64 {
        0.5 * self.length
    }

    /// The opposite endpoint, if `n` is an endpoint of this edge.
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if n == self.u {
            Some(self.v)
        } else if n == self.v {
            Some(self.u)
        } else {
            None
        }
    }

    /// Offset of `n` along this edge measured from `u`.
    pub fn offset_of(&self, n: NodeId) -> Option<f64> {
        if n == self.u {
            Some(0.0)
        } else if n == self.pbp {
            Some(self.half())
        } else if n == self.v {
            Some(self.length)
        } else {
            None
        }
    }

    /// True when the probability is 0 or 1, i.e. the status is certain a priori.
    pub fn is_certain(&self) -> bool {
        self.p_block <= 0.0 || self.p_block >= 1.0
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Vertex,
    Pbp(EdgeId),
}

/// Ground-truth status of one edge.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    Blocked,
    Traversable,
}

/// What the team currently knows about one edge.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKnowledge {
    Unknown,
    Traversable,
    Blocked,
}

impl From<EdgeStatus> for EdgeKnowledge {
    fn from(s: EdgeStatus) -> Self {
        match s {
            EdgeStatus::Blocked => EdgeKnowledge::Blocked,
            EdgeStatus::Traversable => EdgeKnowledge::Traversable,
        }
    }
}

/// A ground robot's location: at a node, or part-way along an edge
/// (`offset` meters from endpoint `u`).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pose {
    AtNode(NodeId),
    OnEdge { edge: EdgeId, offset: f64 },
}

/// One full realization of every edge's status.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldSample {
    pub edge_status: Vec<EdgeStatus>,
}

impl WorldSample {
    pub fn status(&self, e: EdgeId) -> EdgeStatus {
        self.edge_status[e.index()]
    }

    pub fn is_blocked(&self, e: EdgeId) -> bool {
        self.edge_status[e.index()] == EdgeStatus::Blocked
    }

    /// True when every edge known in `knowledge` has the same status here.
    pub fn agrees_with(&self, knowledge: &[EdgeKnowledge]) -> bool {
        self.edge_status.len() == knowledge.len()
            && self.edge_status.iter().zip(knowledge).all(|(s, k)| match k {
                EdgeKnowledge::Unknown => true,
                known => EdgeKnowledge::from(*s) == *known,
            })
    }
}

/// Which edges count as passable for a shortest-path query.
#[derive(Copy, Clone, Debug)]
pub enum GraphView<'a> {
    /// Unknown edges passable.
    Optimistic(&'a [EdgeKnowledge]),
    /// Unknown edges blocked.
    Pessimistic(&'a [EdgeKnowledge]),
    Realized(&'a WorldSample),
}

impl GraphView<'_> {
    pub fn passable(&self, e: EdgeId) -> bool {
        match self {
            GraphView::Optimistic(k) => k[e.index()] != EdgeKnowledge::Blocked,
            GraphView::Pessimistic(k) => k[e.index()] == EdgeKnowledge::Traversable,
            GraphView::Realized(w) => !w.is_blocked(e),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WorldGraph {
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    incident: Vec<Vec<EdgeId>>,
}

impl WorldGraph {
    /// Builds a graph whose edge lengths are the Euclidean endpoint distances.
    pub fn new(vertices: Vec<Point>, edges: &[(u32, u32, f64)]) -> Result<Self> {
        let records = edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v, p))| {
                let (a, b) = (vertices.get(u as usize), vertices.get(v as usize));
                let length = match (a, b) {
                    (Some(a), Some(b)) => a.distance(*b),
                    _ => f64::NAN,
                };
                EdgeRecord { id: i as u32, u, v, length, p_block: p }
            })
            .collect::<Vec<_>>();
        let file = GraphFile {
            vertices: vertices
                .iter()
                .enumerate()
                .map(|(i, p)| VertexRecord { id: i as u32, x: p.x, y: p.y })
                .collect(),
            edges: records,
        };
        Self::from_file(&file)
    }

    /// Validates and loads the JSON graph representation.
    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let n = file.vertices.len();
        let mut vertices = vec![None; n];
        for rec in &file.vertices {
            let slot = vertices
                .get_mut(rec.id as usize)
                .ok_or_else(|| Error::InvalidGraph(format!("vertex id {} is not dense", rec.id)))?;
            if slot.is_some() {
                return Err(Error::InvalidGraph(format!("duplicate vertex id {}", rec.id)));
            }
            if !rec.x.is_finite() || !rec.y.is_finite() {
                return Err(Error::InvalidGraph(format!("vertex {} has a non-finite position", rec.id)));
            }
            *slot = Some(Point::new(rec.x, rec.y));
        }
        let vertices: Vec<Point> = vertices.into_iter().map(|p| p.expect("dense ids")).collect();

        let m = file.edges.len();
        let mut edges: Vec<Option<Edge>> = vec![None; m];
        let mut pairs = HashSet::new();
        for rec in &file.edges {
            let id = rec.id as usize;
            if id >= m || edges[id].is_some() {
                return Err(Error::InvalidGraph(format!("edge id {} is not dense/unique", rec.id)));
            }
            if rec.u as usize >= n || rec.v as usize >= n || rec.u == rec.v {
                return Err(Error::InvalidGraph(format!("edge {} has invalid endpoints", rec.id)));
            }
            if !(0.0..=1.0).contains(&rec.p_block) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} has p_block {} outside [0, 1]",
                    rec.id, rec.p_block
                )));
            }
            let key = (rec.u.min(rec.v), rec.u.max(rec.v));
            if !pairs.insert(key) {
                return Err(Error::InvalidGraph(format!("edge {} duplicates another edge", rec.id)));
            }
            let euclid = vertices[rec.u as usize].distance(vertices[rec.v as usize]);
            if !(rec.length > 0.0) || (rec.length - euclid).abs() > 1e-6 * euclid.max(1.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} length {} does not match endpoint distance {}",
                    rec.id, rec.length, euclid
                )));
            }
            edges[id] = Some(Edge {
                id: EdgeId(rec.id),
                u: NodeId(rec.u),
                v: NodeId(rec.v),
                pbp: NodeId((n + id) as u32),
                length: rec.length,
                p_block: rec.p_block,
            });
        }
        let edges: Vec<Edge> = edges.into_iter().map(|e| e.expect("dense ids")).collect();
        let mut incident = vec![Vec::new(); n];
        for e in &edges {
            incident[e.u.index()].push(e.id);
            incident[e.v.index()].push(e.id);
        }
        let graph = Self { vertices, edges, incident };
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        if !graph.is_connected(|_| true) {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertices: self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, p)| VertexRecord { id: i as u32, x: p.x, y: p.y })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id.0,
                    u: e.u.0,
                    v: e.v.0,
                    length: e.length,
                    p_block: e.p_block,
                })
                .collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Vertices plus PBPs.
    pub fn num_nodes(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.index()]
    }

    pub fn incident(&self, v: NodeId) -> &[EdgeId] {
        &self.incident[v.index()]
    }

    pub fn pbp_of(&self, e: EdgeId) -> NodeId {
        NodeId((self.vertices.len() + e.index()) as u32)
    }

    pub fn pbps(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.edges.len()).map(move |e| self.pbp_of(EdgeId(e as u32)))
    }

    pub fn node_kind(&self, n: NodeId) -> NodeKind {
        let i = n.index();
        if i < self.vertices.len() {
            NodeKind::Vertex
        } else {
            NodeKind::Pbp(EdgeId((i - self.vertices.len()) as u32))
        }
    }

    pub fn is_vertex(&self, n: NodeId) -> bool {
        n.index() < self.vertices.len()
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        n.index() < self.num_nodes()
    }

    /// Edge whose PBP is `n`, if `n` is a PBP.
    pub fn edge_of_pbp(&self, n: NodeId) -> Option<EdgeId> {
        match self.node_kind(n) {
            NodeKind::Pbp(e) if e.index() < self.edges.len() => Some(e),
            _ => None,
        }
    }

    /// Blocking probability of a node; vertices are never blocked.
    pub fn blocking_probability(&self, n: NodeId) -> f64 {
        self.edge_of_pbp(n).map_or(0.0, |e| self.edge(e).p_block)
    }

    pub fn node_position(&self, n: NodeId) -> Point {
        match self.node_kind(n) {
            NodeKind::Vertex => self.vertices[n.index()],
            NodeKind::Pbp(e) => {
                let edge = self.edge(e);
                self.vertices[edge.u.index()].lerp(self.vertices[edge.v.index()], 0.5)
            }
        }
    }

    pub fn pose_position(&self, pose: &Pose) -> Point {
        match *pose {
            Pose::AtNode(n) => self.node_position(n),
            Pose::OnEdge { edge, offset } => {
                let e = self.edge(edge);
                self.vertices[e.u.index()].lerp(self.vertices[e.v.index()], offset / e.length)
            }
        }
    }

    pub fn validate_pose(&self, pose: &Pose) -> Result<()> {
        match *pose {
            Pose::AtNode(n) if self.contains_node(n) => Ok(()),
            Pose::OnEdge { edge, offset }
                if edge.index() < self.edges.len()
                    && offset >= 0.0
                    && offset <= self.edge(edge).length =>
            {
                Ok(())
            }
            _ => Err(contract(format!("pose {pose:?} is not valid for this graph"))),
        }
    }

    /// Edge connecting two adjacent vertices.
    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.incident
            .get(a.index())?
            .iter()
            .copied()
            .find(|&e| self.edge(e).other(a) == Some(b))
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Connectivity over vertices using only edges for which `passable` holds.
    pub fn is_connected(&self, passable: impl Fn(EdgeId) -> bool) -> bool {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &e in &self.incident[v] {
                if !passable(e) {
                    continue;
                }
                let w = self.edge(e).other(NodeId(v as u32)).expect("incident").index();
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }

    /// Dijkstra seed nodes for a pose. `anchor` is the vertex on whose side a
    /// robot standing at an impassable PBP is stuck.
    pub fn pose_sources(
        &self,
        pose: &Pose,
        anchor: Option<NodeId>,
        passable: impl Fn(EdgeId) -> bool,
    ) -> Sources {
        match *pose {
            Pose::AtNode(n) => match (self.edge_of_pbp(n), anchor) {
                (Some(e), Some(a)) if !passable(e) && self.edge(e).other(a).is_some() => {
                    Sources::two((n, 0.0), (a, self.edge(e).half()))
                }
                _ => Sources::one((n, 0.0)),
            },
            Pose::OnEdge { edge, offset } => {
                let e = self.edge(edge);
                let half = e.half();
                if offset <= half {
                    Sources::two((e.u, offset), (e.pbp, half - offset))
                } else {
                    Sources::two((e.pbp, offset - half), (e.v, e.length - offset))
                }
            }
        }
    }
}

/// Up to two weighted Dijkstra seeds.
#[derive(Copy, Clone, Debug)]
pub struct Sources {
    items: [(NodeId, f64); 2],
    len: usize,
}

impl Sources {
    fn one(a: (NodeId, f64)) -> Self {
        Self { items: [a, a], len: 1 }
    }

    fn two(a: (NodeId, f64), b: (NodeId, f64)) -> Self {
        Self { items: [a, b], len: 2 }
    }

    pub fn as_slice(&self) -> &[(NodeId, f64)] {
        &self.items[..self.len]
    }
}

#[derive(Copy, Clone, Debug)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // min-heap on distance, then node id
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

const NO_PREV: u32 = u32::MAX;

/// Reusable Dijkstra state over the PBP-expanded graph.
#[derive(Clone, Debug, Default)]
pub struct PathSearch {
    dist: Vec<f64>,
    prev: Vec<u32>,
    heap: BinaryHeap<HeapEntry>,
}

impl PathSearch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs Dijkstra from `sources`. Stops early once `target` is settled.
    /// PBPs of impassable edges can be entered but are never expanded.
    pub fn run(
        &mut self,
        graph: &WorldGraph,
        sources: &[(NodeId, f64)],
        passable: impl Fn(EdgeId) -> bool,
        target: Option<NodeId>,
    ) {
        let n = graph.num_nodes();
        self.dist.clear();
        self.dist.resize(n, f64::INFINITY);
        self.prev.clear();
        self.prev.resize(n, NO_PREV);
        self.heap.clear();
        for &(s, d) in sources {
            if d < self.dist[s.index()] {
                self.dist[s.index()] = d;
                self.heap.push(HeapEntry { dist: d, node: s.0 });
            }
        }
        let nv = graph.num_vertices();
        while let Some(HeapEntry { dist, node }) = self.heap.pop() {
            if dist > self.dist[node as usize] {
                continue;
            }
            if target.is_some_and(|t| t.0 == node) {
                break;
            }
            let i = node as usize;
            if i < nv {
                for &e in &graph.incident[i] {
                    let edge = &graph.edges[e.index()];
                    self.relax(node, edge.pbp.0, dist + edge.half());
                }
            } else {
                let edge = &graph.edges[i - nv];
                if passable(edge.id) {
                    let h = edge.half();
                    self.relax(node, edge.u.0, dist + h);
                    self.relax(node, edge.v.0, dist + h);
                }
            }
        }
    }

    #[inline]
    fn relax(&mut self, from: u32, to: u32, d: f64) {
        if d < self.dist[to as usize] {
            self.dist[to as usize] = d;
            self.prev[to as usize] = from;
            self.heap.push(HeapEntry { dist: d, node: to });
        }
    }

    pub fn distance(&self, n: NodeId) -> f64 {
        self.dist[n.index()]
    }

    /// Node sequence from the first source node reached to `n`.
    pub fn path(&self, n: NodeId) -> Option<Vec<NodeId>> {
        if !self.dist[n.index()].is_finite() {
            return None;
        }
        let mut out = vec![n];
        let mut cur = n.0;
        while self.prev[cur as usize] != NO_PREV {
            cur = self.prev[cur as usize];
            out.push(NodeId(cur));
        }
        out.reverse();
        Some(out)
    }
}

/// Minimal-length route from `from` to `to` under `view`, or `None` when
/// unreachable.
pub fn shortest_path(
    graph: &WorldGraph,
    view: GraphView<'_>,
    from: &Pose,
    to: NodeId,
) -> Option<(f64, Vec<NodeId>)> {
    shortest_path_anchored(graph, view, from, None, to)
}

/// As [`shortest_path`], for a robot that may be standing at a blocked PBP
/// with its side given by `anchor`.
pub fn shortest_path_anchored(
    graph: &WorldGraph,
    view: GraphView<'_>,
    from: &Pose,
    anchor: Option<NodeId>,
    to: NodeId,
) -> Option<(f64, Vec<NodeId>)> {
    if graph.validate_pose(from).is_err() || !graph.contains_node(to) {
        return None;
    }
    let passable = |e| view.passable(e);
    let sources = graph.pose_sources(from, anchor, passable);
    let mut search = PathSearch::new();
    search.run(graph, sources.as_slice(), passable, Some(to));
    let d = search.distance(to);
    search.path(to).map(|p| (d, p))
}

/// Draws every unknown edge of `knowledge` as an independent Bernoulli.
pub fn sample_unknown(
    graph: &WorldGraph,
    knowledge: &[EdgeKnowledge],
    rng: &mut impl Rng,
) -> WorldSample {
    let edge_status = graph
        .edges()
        .iter()
        .zip(knowledge)
        .map(|(e, k)| match k {
            EdgeKnowledge::Blocked => EdgeStatus::Blocked,
            EdgeKnowledge::Traversable => EdgeStatus::Traversable,
            EdgeKnowledge::Unknown => {
                if rng.gen::<f64>() < e.p_block {
                    EdgeStatus::Blocked
                } else {
                    EdgeStatus::Traversable
                }
            }
        })
        .collect();
    WorldSample { edge_status }
}

/// Samples a realization consistent with `belief`, deterministic in `seed`.
pub fn sample_world(graph: &WorldGraph, belief: &BeliefState, seed: u64) -> Result<WorldSample> {
    belief.check_graph(graph)?;
    let mut rng = rng::rng_for(seed, &[rng::stream::WORLD]);
    Ok(sample_unknown(graph, belief.knowledge(), &mut rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: u32,
    pub u: u32,
    pub v: u32,
    pub length: f64,
    pub p_block: f64,
}

/// JSON form of a [`WorldGraph`]. PBP ids are implicit: `max_vertex_id + 1 + edge_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}
