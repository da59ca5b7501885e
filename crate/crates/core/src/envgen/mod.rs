//! Seeded generators for the three benchmark environments.
//!
//! Geometry and probabilities are drawn from streams that do not depend on
//! team size, so the same seed gives the same map for every team.

mod delaunay;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use delaunay::triangulate;

use crate::error::{Error, Result};
use crate::graph::{EdgeKnowledge, GraphFile, GraphView, NodeId, PathSearch, Point, Pose, WorldGraph};
use crate::rng::{self, stream};

pub const DEFAULT_UGV_SPEED: f64 = 1.0;
pub const DEFAULT_UAV_SPEED: f64 = 3.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Bridges,
    Islands,
    #[serde(rename = "dense")]
    DenseUrban,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Bridges, EnvKind::Islands, EnvKind::DenseUrban];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Bridges => "bridges",
            EnvKind::Islands => "islands",
            EnvKind::DenseUrban => "dense",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridges" => Ok(EnvKind::Bridges),
            "islands" => Ok(EnvKind::Islands),
            "dense" | "dense_urban" | "denseurban" => Ok(EnvKind::DenseUrban),
            other => Err(Error::Config(format!("unknown environment kind `{other}`"))),
        }
    }
}

/// Team composition and placement. Ground robot `i` drives from `starts[i]` to `goals[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamConfig {
    pub num_ugv: usize,
    pub num_uav: usize,
    pub ugv_speed: f64,
    pub uav_speed: f64,
    pub starts: Vec<NodeId>,
    pub goals: Vec<NodeId>,
    pub uav_starts: Vec<Point>,
}

impl TeamConfig {
    pub fn validate(&self, graph: &WorldGraph) -> Result<()> {
        if self.num_ugv == 0 {
            return Err(Error::Config("team needs at least one ground robot".into()));
        }
        if self.starts.len() != self.num_ugv || self.goals.len() != self.num_ugv {
            return Err(Error::Config("starts/goals length must equal the ground robot count".into()));
        }
        if self.uav_starts.len() != self.num_uav {
            return Err(Error::Config("uav_starts length must equal the drone count".into()));
        }
        if !(self.ugv_speed > 0.0 && self.uav_speed > 0.0) {
            return Err(Error::Config("speeds must be positive".into()));
        }
        if self.starts.iter().chain(&self.goals).any(|&n| !graph.is_vertex(n)) {
            return Err(Error::Config("starts and goals must be vertex nodes".into()));
        }
        Ok(())
    }

    /// Same placement with the drones dropped (the ground-only baseline).
    pub fn without_drones(&self) -> TeamConfig {
        TeamConfig { num_uav: 0, uav_starts: Vec::new(), ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub seed: u64,
    pub num_ugv: usize,
    pub num_uav: usize,
    #[serde(default = "default_ugv_speed")]
    pub ugv_speed: f64,
    #[serde(default = "default_uav_speed")]
    pub uav_speed: f64,
}

fn default_ugv_speed() -> f64 {
    DEFAULT_UGV_SPEED
}

fn default_uav_speed() -> f64 {
    DEFAULT_UAV_SPEED
}

impl EnvSpec {
    pub fn new(kind: EnvKind, seed: u64, num_ugv: usize, num_uav: usize) -> Self {
        Self { kind, seed, num_ugv, num_uav, ugv_speed: DEFAULT_UGV_SPEED, uav_speed: DEFAULT_UAV_SPEED }
    }
}

/// A generated map plus team placement.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub graph: WorldGraph,
    pub team: TeamConfig,
}

/// JSON file form: the graph fields plus a `team` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub graph: GraphFile,
    pub team: TeamConfig,
}

impl Scenario {
    pub fn new(graph: WorldGraph, team: TeamConfig) -> Result<Self> {
        team.validate(&graph)?;
        Ok(Self { graph, team })
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile { graph: self.graph.to_file(), team: self.team.clone() }
    }

    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        Self::new(WorldGraph::from_file(&file.graph)?, file.team.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

const MAX_RETRIES: u64 = 200;

pub fn generate(spec: &EnvSpec) -> Result<Scenario> {
    if !(1..=3).contains(&spec.num_ugv) || spec.num_uav > 2 {
        return Err(Error::Config(format!(
            "team of {} ground robots and {} drones is outside 1..=3 / 0..=2",
            spec.num_ugv, spec.num_uav
        )));
    }
    for attempt in 0..MAX_RETRIES {
        let seed = if attempt == 0 { spec.seed } else { rng::derive_seed(spec.seed, &[stream::RETRY, attempt]) };
        let mut geo = rng::rng_for(seed, &[stream::GEOMETRY]);
        let mut prob = rng::rng_for(seed, &[stream::PROBABILITIES]);
        let built = match spec.kind {
            EnvKind::Bridges => bridges(&mut geo, &mut prob, spec),
            EnvKind::Islands => islands(&mut geo, &mut prob, spec),
            EnvKind::DenseUrban => dense_urban(&mut geo, &mut prob, spec),
        };
        match built {
            Ok(s) => return Ok(s),
            Err(Error::Generation(msg)) => log::debug!("{} seed {seed} rejected: {msg}", spec.kind),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!("{} seed {}: no valid instance after {MAX_RETRIES} attempts", spec.kind, spec.seed)))
}

/// Two-route instance: a direct 10 m edge whose midpoint may be blocked with
/// probability `p`, and an always-clear 30 m detour through a third vertex.
pub fn two_route(p: f64) -> Scenario {
    let h = (15.0f64 * 15.0 - 5.0 * 5.0).sqrt();
    let graph = WorldGraph::new(
        vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(5.0, h)],
        &[(0, 1, p), (0, 2, 0.0), (2, 1, 0.0)],
    )
    .expect("valid fixture");
    let team = TeamConfig {
        num_ugv: 1,
        num_uav: 0,
        ugv_speed: DEFAULT_UGV_SPEED,
        uav_speed: DEFAULT_UAV_SPEED,
        starts: vec![NodeId(0)],
        goals: vec![NodeId(1)],
        uav_starts: Vec::new(),
    };
    Scenario { graph, team }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

/// Graph distances from `from` with every edge passable.
fn all_clear_distances(graph: &WorldGraph, from: NodeId) -> PathSearch {
    let mut s = PathSearch::new();
    s.run(graph, &[(from, 0.0)], |_| true, None);
    s
}

/// Goal for each start: the candidate farthest (all-clear graph distance)
/// from it, distinct across robots and never a start.
fn farthest_goals(graph: &WorldGraph, starts: &[NodeId], candidates: &[NodeId]) -> Result<Vec<NodeId>> {
    let mut goals: Vec<NodeId> = Vec::new();
    for &s in starts {
        let d = all_clear_distances(graph, s);
        let g = candidates
            .iter()
            .copied()
            .filter(|c| !starts.contains(c) && !goals.contains(c))
            .max_by(|a, b| d.distance(*a).total_cmp(&d.distance(*b)).then(b.cmp(a)))
            .ok_or_else(|| Error::Generation("no goal candidate left".into()))?;
        goals.push(g);
    }
    Ok(goals)
}

fn make_team(graph: &WorldGraph, spec: &EnvSpec, starts: Vec<NodeId>, goals: Vec<NodeId>) -> TeamConfig {
    let uav_starts = (0..spec.num_uav).map(|j| graph.node_position(starts[j % starts.len()])).collect();
    TeamConfig {
        num_ugv: spec.num_ugv,
        num_uav: spec.num_uav,
        ugv_speed: spec.ugv_speed,
        uav_speed: spec.uav_speed,
        starts,
        goals,
        uav_starts,
    }
}

/// Goal reachable through edges with `p < 1` for every robot.
fn check_reachable(graph: &WorldGraph, team: &TeamConfig) -> Result<()> {
    let k: Vec<EdgeKnowledge> =
        graph.edges().iter().map(|e| if e.p_block >= 1.0 { EdgeKnowledge::Blocked } else { EdgeKnowledge::Unknown }).collect();
    for (s, g) in team.starts.iter().zip(&team.goals) {
        if crate::graph::shortest_path(graph, GraphView::Optimistic(&k), &Pose::AtNode(*s), *g).is_none() {
            return Err(Error::Generation("goal unreachable".into()));
        }
    }
    Ok(())
}

/// Two 2×3 jittered grids (top and bottom) joined by three vertical bridges.
fn bridges(geo: &mut ChaCha8Rng, prob: &mut ChaCha8Rng, spec: &EnvSpec) -> Result<Scenario> {
    const COLS: usize = 3;
    // side vertex index: side * 6 + row * 3 + col; row 0 is the top row of each side
    let mut verts = Vec::with_capacity(12);
    let col_x: Vec<f64> = {
        let mut x = 0.0;
        (0..COLS)
            .map(|c| {
                if c > 0 {
                    x += uniform(geo, 29.0, 34.0);
                }
                x
            })
            .collect()
    };
    let row_gap = uniform(geo, 31.0, 33.0);
    let bottom_top = -(row_gap + uniform(geo, 55.0, 65.0));
    for side in 0..2 {
        let base_y = if side == 0 { 0.0 } else { bottom_top };
        for row in 0..2 {
            for c in 0..COLS {
                let jitter = if side == 0 && row == 1 || side == 1 && row == 0 {
                    // rows facing the water: large vertical jitter makes bridge lengths differ
                    uniform(geo, -6.0, 6.0)
                } else {
                    uniform(geo, -2.0, 2.0)
                };
                let x = col_x[c] + uniform(geo, -2.0, 2.0);
                let y = base_y - row as f64 * row_gap + jitter;
                verts.push(Point::new(x, y));
            }
        }
    }
    let idx = |side: usize, row: usize, col: usize| (side * 6 + row * COLS + col) as u32;
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for side in 0..2 {
        for row in 0..2 {
            for c in 0..COLS - 1 {
                pairs.push((idx(side, row, c), idx(side, row, c + 1)));
            }
        }
        for c in 0..COLS {
            pairs.push((idx(side, 0, c), idx(side, 1, c)));
        }
    }
    let bridge_start = pairs.len();
    for c in 0..COLS {
        pairs.push((idx(0, 1, c), idx(1, 0, c)));
    }
    for &(u, v) in &pairs[..bridge_start] {
        let d = verts[u as usize].distance(verts[v as usize]);
        if !(25.0..=40.0).contains(&d) {
            return Err(Error::Generation(format!("cluster edge length {d:.1} outside 25–40 m")));
        }
    }
    let mut p: Vec<f64> = (0..pairs.len()).map(|_| uniform(prob, 0.1, 0.7)).collect();
    let tmp: Vec<(u32, u32, f64)> = pairs.iter().map(|&(u, v)| (u, v, 0.5)).collect();
    let graph = WorldGraph::new(verts.clone(), &tmp)?;

    let starts_all: Vec<NodeId> = (0..COLS).map(|c| NodeId(idx(0, 0, c))).collect();
    let goal_cands: Vec<NodeId> = (0..COLS).map(|c| NodeId(idx(1, 1, c))).collect();
    let starts = starts_all[..spec.num_ugv].to_vec();
    let goals = farthest_goals(&graph, &starts, &goal_cands)?;

    // rank bridges by robot 0's shortest route forced through each
    let (s0, g0) = (starts_all[0], farthest_goals(&graph, &starts_all[..1], &goal_cands)?[0]);
    let ds = all_clear_distances(&graph, s0);
    let dg = all_clear_distances(&graph, g0);
    let mut through: Vec<(f64, usize)> = (0..COLS)
        .map(|b| {
            let e = bridge_start + b;
            let (u, v) = (NodeId(pairs[e].0), NodeId(pairs[e].1));
            (ds.distance(u) + verts[u.index()].distance(verts[v.index()]) + dg.distance(v), e)
        })
        .collect();
    through.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ranges = [(0.45, 0.65), (0.35, 0.45), (0.15, 0.25)];
    for (rank, &(_, e)) in through.iter().enumerate() {
        p[e] = uniform(prob, ranges[rank].0, ranges[rank].1);
    }
    let edges: Vec<(u32, u32, f64)> = pairs.iter().zip(&p).map(|(&(u, v), &p)| (u, v, p)).collect();
    let graph = WorldGraph::new(verts, &edges)?;
    let team = make_team(&graph, spec, starts, goals);
    check_reachable(&graph, &team)?;
    Scenario::new(graph, team)
}

/// Four ring-shaped islands in a 2×2 layout joined by long connectors.
fn islands(geo: &mut ChaCha8Rng, prob: &mut ChaCha8Rng, spec: &EnvSpec) -> Result<Scenario> {
    let sx = uniform(geo, 85.0, 95.0);
    let sy = uniform(geo, 85.0, 95.0);
    // island order: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
    let centers = [Point::new(0.0, 0.0), Point::new(sx, 0.0), Point::new(0.0, -sy), Point::new(sx, -sy)];
    let mut verts = Vec::new();
    let mut members: Vec<Vec<u32>> = Vec::new();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for c in centers {
        let k: usize = geo.gen_range(4..=5);
        let chord = uniform(geo, 16.0, 22.0);
        let r = chord / (2.0 * (std::f64::consts::PI / k as f64).sin());
        let phase = uniform(geo, 0.0, std::f64::consts::TAU);
        let first = verts.len() as u32;
        let mut ids = Vec::new();
        for j in 0..k {
            let a = phase + std::f64::consts::TAU * j as f64 / k as f64 + uniform(geo, -0.12, 0.12);
            let rr = r * uniform(geo, 0.92, 1.08);
            verts.push(Point::new(c.x + rr * a.cos(), c.y + rr * a.sin()));
            ids.push(first + j as u32);
        }
        for j in 0..k {
            pairs.push((ids[j], ids[(j + 1) % k]));
        }
        members.push(ids);
    }
    for &(u, v) in &pairs {
        let d = verts[u as usize].distance(verts[v as usize]);
        if !(15.0..=25.0).contains(&d) {
            return Err(Error::Generation(format!("island edge length {d:.1} outside 15–25 m")));
        }
    }
    let intra = pairs.len();
    for (a, b) in [(0usize, 1usize), (1, 3), (3, 2), (2, 0)] {
        let mut cands: Vec<(f64, u32, u32)> = Vec::new();
        for &u in &members[a] {
            for &v in &members[b] {
                let d = verts[u as usize].distance(verts[v as usize]);
                if (50.0..=80.0).contains(&d) {
                    cands.push((d, u, v));
                }
            }
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let want: usize = geo.gen_range(1..=2);
        let mut used: Vec<u32> = Vec::new();
        let mut added = 0;
        for (_, u, v) in cands {
            if added == want {
                break;
            }
            if used.contains(&u) || used.contains(&v) {
                continue;
            }
            pairs.push((u.min(v), u.max(v)));
            used.extend([u, v]);
            added += 1;
        }
        if added == 0 {
            return Err(Error::Generation("no connector within 50–80 m".into()));
        }
    }
    let edges: Vec<(u32, u32, f64)> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| {
            let p = if i < intra { uniform(prob, 0.0, 0.2) } else { uniform(prob, 0.2, 0.65) };
            (u, v, p)
        })
        .collect();
    let graph = WorldGraph::new(verts.clone(), &edges)?;
    // starts: island-0 vertices nearest the far top-left corner first
    let mut starts_all = members[0].clone();
    starts_all.sort_by(|&a, &b| {
        let key = |n: u32| verts[n as usize].x - verts[n as usize].y;
        key(a).total_cmp(&key(b)).then(a.cmp(&b))
    });
    let starts: Vec<NodeId> = starts_all[..spec.num_ugv].iter().map(|&n| NodeId(n)).collect();
    let cands: Vec<NodeId> = (0..graph.num_vertices() as u32).map(NodeId).collect();
    let goals = farthest_goals(&graph, &starts, &cands)?;
    let team = make_team(&graph, spec, starts, goals);
    check_reachable(&graph, &team)?;
    Scenario::new(graph, team)
}

pub const DENSE_VERTICES: usize = 16;
pub const DENSE_MIN_SPACING: f64 = 20.0;
pub const DENSE_MAX_EDGE: f64 = 40.0;
pub const DENSE_EDGES: (usize, usize) = (28, 30);
const DENSE_AREA: (f64, f64) = (100.0, 80.0);

/// Sixteen spaced random points, Delaunay streets, long edges dropped.
fn dense_urban(geo: &mut ChaCha8Rng, prob: &mut ChaCha8Rng, spec: &EnvSpec) -> Result<Scenario> {
    let mut pts: Vec<Point> = Vec::with_capacity(DENSE_VERTICES);
    let mut tries = 0;
    while pts.len() < DENSE_VERTICES {
        tries += 1;
        if tries > 20_000 {
            return Err(Error::Generation("could not place spaced points".into()));
        }
        let p = Point::new(uniform(geo, 0.0, DENSE_AREA.0), uniform(geo, 0.0, DENSE_AREA.1));
        if pts.iter().all(|q| q.distance(p) >= DENSE_MIN_SPACING) {
            pts.push(p);
        }
    }
    let mut edges: Vec<(usize, usize)> =
        triangulate(&pts).into_iter().filter(|&(a, b)| pts[a].distance(pts[b]) <= DENSE_MAX_EDGE).collect();
    if edges.len() < DENSE_EDGES.0 {
        return Err(Error::Generation(format!("only {} edges after length cut", edges.len())));
    }
    // trim longest edges whose removal keeps the graph connected
    edges.sort_by(|&(a, b), &(c, d)| pts[c].distance(pts[d]).total_cmp(&pts[a].distance(pts[b])).then((a, b).cmp(&(c, d))));
    let mut i = 0;
    while edges.len() > DENSE_EDGES.1 && i < edges.len() {
        let mut trial = edges.clone();
        trial.remove(i);
        if connected(DENSE_VERTICES, &trial) {
            edges = trial;
        } else {
            i += 1;
        }
    }
    if edges.len() > DENSE_EDGES.1 || !connected(DENSE_VERTICES, &edges) {
        return Err(Error::Generation("could not trim to the edge budget".into()));
    }
    edges.sort_unstable();
    let m = edges.len();
    let high = (0.4 * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(prob);
    let mut p = vec![0.0; m];
    for (rank, &e) in order.iter().enumerate() {
        p[e] = if rank < high { uniform(prob, 0.6, 0.8) } else { uniform(prob, 0.1, 0.6) };
    }
    let records: Vec<(u32, u32, f64)> = edges.iter().zip(&p).map(|(&(a, b), &p)| (a as u32, b as u32, p)).collect();
    let graph = WorldGraph::new(pts.clone(), &records)?;
    let mut by_x: Vec<u32> = (0..DENSE_VERTICES as u32).collect();
    by_x.sort_by(|&a, &b| pts[a as usize].x.total_cmp(&pts[b as usize].x).then(a.cmp(&b)));
    let starts: Vec<NodeId> = by_x[..spec.num_ugv].iter().map(|&n| NodeId(n)).collect();
    let cands: Vec<NodeId> = (0..DENSE_VERTICES as u32).map(NodeId).collect();
    let goals = farthest_goals(&graph, &starts, &cands)?;
    let team = make_team(&graph, spec, starts, goals);
    check_reachable(&graph, &team)?;
    Scenario::new(graph, team)
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            comps -= 1;
        }
    }
    comps == 1
}
