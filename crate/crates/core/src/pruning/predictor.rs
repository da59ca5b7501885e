//! Newline-delimited JSON protocol to an external value-change predictor.
//!
//! One request per line on the predictor's stdin, one response per line on
//! its stdout, matched by `id`. Observed edges are encoded in the request
//! graph as `p_block` 0 (traversable) or 1 (blocked).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::oracle::{value_changes_all, OracleConfig};
use super::ValueChangeProvider;
use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::graph::{EdgeKnowledge, GraphFile, NodeId, NodeKind, Pose, WorldGraph};

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownSets {
    pub traversable: Vec<NodeId>,
    pub blocked: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotQuery {
    pub start: Pose,
    pub goal: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorRequest {
    pub id: u64,
    pub graph: GraphFile,
    pub known: KnownSets,
    pub robot: RobotQuery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorResponse {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vc: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictorRequest {
    /// Request for ground robot `ugv` under `belief`.
    pub fn new(id: u64, graph: &WorldGraph, belief: &BeliefState, ugv: usize) -> Self {
        let mut file = graph.to_file();
        let mut known = KnownSets::default();
        for (rec, k) in file.edges.iter_mut().zip(belief.knowledge()) {
            let pbp = graph.pbp_of(crate::graph::EdgeId(rec.id));
            match k {
                EdgeKnowledge::Traversable => {
                    rec.p_block = 0.0;
                    known.traversable.push(pbp);
                }
                EdgeKnowledge::Blocked => {
                    rec.p_block = 1.0;
                    known.blocked.push(pbp);
                }
                EdgeKnowledge::Unknown => {}
            }
        }
        let r = belief.ugv(ugv);
        // standing on a blocked PBP: the walk back to the anchor is a constant
        // added to both conditionings, so starting at the anchor is equivalent
        let start = match r.pose {
            Pose::AtNode(n) if matches!(graph.node_kind(n), NodeKind::Pbp(e) if belief.edge_knowledge(e) == EdgeKnowledge::Blocked) => {
                Pose::AtNode(r.anchor)
            }
            p => p,
        };
        Self { id, graph: file, known, robot: RobotQuery { start, goal: r.goal } }
    }
}

/// Per-edge values from a response, covering every edge of `graph`.
pub fn decode_response(graph: &WorldGraph, resp: &PredictorResponse) -> Result<Vec<f64>> {
    if let Some(err) = &resp.error {
        return Err(Error::Predictor(format!("predictor reported: {err}")));
    }
    let vc = resp.vc.as_ref().ok_or_else(|| Error::Predictor("response has neither vc nor error".into()))?;
    let mut out = vec![f64::NAN; graph.num_edges()];
    for (key, &v) in vc {
        let e: usize = key.parse().map_err(|_| Error::Predictor(format!("bad edge key `{key}`")))?;
        if e >= out.len() {
            return Err(Error::Predictor(format!("edge {e} out of range")));
        }
        if !v.is_finite() {
            return Err(Error::Predictor(format!("edge {e} value {v} is not finite")));
        }
        out[e] = v.max(0.0);
    }
    if let Some(missing) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::Predictor(format!("response is missing edge {missing}")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl PredictorConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, timeout_ms: DEFAULT_TIMEOUT_MS }
    }
}

/// A spawned predictor process.
pub struct PredictorClient {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
}

impl PredictorClient {
    pub fn spawn(cfg: &PredictorConfig) -> Result<Self> {
        let (prog, args) =
            cfg.command.split_first().ok_or_else(|| Error::Config("empty predictor command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Predictor(format!("cannot start `{prog}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx, next_id: 0, timeout: Duration::from_millis(cfg.timeout_ms) })
    }

    /// Sends one request and waits for the response with the same id.
    /// Responses to earlier, timed-out requests are skipped.
    pub fn request(&mut self, req: &PredictorRequest) -> Result<PredictorResponse> {
        let line = serde_json::to_string(req)?;
        writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()).map_err(|e| Error::Predictor(format!("write failed: {e}")))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(text)) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let resp: PredictorResponse = serde_json::from_str(&text)
                        .map_err(|e| Error::Predictor(format!("unparseable response: {e}")))?;
                    if resp.id == Some(req.id) {
                        return Ok(resp);
                    }
                    log::debug!("skipping stale predictor response {:?}", resp.id);
                }
                Ok(Err(e)) => return Err(Error::Predictor(format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Predictor(format!("no response within {} ms", self.timeout.as_millis())))
                }
                Err(RecvTimeoutError::Disconnected) => return Err(Error::Predictor("predictor exited".into())),
            }
        }
    }
}

impl ValueChangeProvider for PredictorClient {
    fn value_changes(&mut self, graph: &WorldGraph, belief: &BeliefState, ugv: usize) -> Result<Vec<f64>> {
        let id = self.next_id;
        self.next_id += 1;
        let req = PredictorRequest::new(id, graph, belief, ugv);
        let resp = self.request(&req)?;
        decode_response(graph, &resp)
    }
}

impl Drop for PredictorClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Answers one request with the Monte Carlo oracle.
pub fn answer(req: &PredictorRequest, cfg: &OracleConfig) -> Result<BTreeMap<String, f64>> {
    let graph = WorldGraph::from_file(&req.graph)?;
    let mut knowledge: Vec<EdgeKnowledge> = graph
        .edges()
        .iter()
        .map(|e| match e.p_block {
            p if p <= 0.0 => EdgeKnowledge::Traversable,
            p if p >= 1.0 => EdgeKnowledge::Blocked,
            _ => EdgeKnowledge::Unknown,
        })
        .collect();
    for (list, k) in [(&req.known.traversable, EdgeKnowledge::Traversable), (&req.known.blocked, EdgeKnowledge::Blocked)] {
        for &pbp in list {
            let e = graph.edge_of_pbp(pbp).ok_or_else(|| Error::Contract(format!("node {} is not a PBP", pbp.0)))?;
            knowledge[e.index()] = k;
        }
    }
    let est = value_changes_all(&graph, &knowledge, &req.robot.start, None, req.robot.goal, cfg)?;
    Ok(est.iter().enumerate().map(|(i, e)| (i.to_string(), e.map_or(0.0, |e| e.value))).collect())
}

/// Serves the protocol on `input`/`output` until end of input, using the
/// Monte Carlo oracle. Malformed requests get an error reply; the stream
/// continues.
pub fn serve_oracle(input: impl BufRead, mut output: impl Write, cfg: &OracleConfig) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<PredictorRequest>(&line) {
            Ok(req) => match answer(&req, cfg) {
                Ok(vc) => PredictorResponse { id: Some(req.id), vc: Some(vc), error: None },
                Err(e) => PredictorResponse { id: Some(req.id), vc: None, error: Some(e.to_string()) },
            },
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line).ok().and_then(|v| v.get("id")?.as_u64());
                PredictorResponse { id, vc: None, error: Some(format!("malformed request: {e}")) }
            }
        };
        writeln!(output, "{}", serde_json::to_string(&resp)?)?;
        output.flush()?;
    }
    Ok(())
}
