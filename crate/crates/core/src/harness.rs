//! Batch experiments: paired-seed episode grids, aggregate metrics and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::{generate, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::planner::{run_episode, sample_true_world, PlannerConfig, PlannerKind};
use crate::pruning::{OracleConfig, PredictorConfig};
use crate::rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TeamSize {
    pub ugv: usize,
    pub uav: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub envs: Vec<EnvKind>,
    /// Drone counts apply to every planner except `ctp`, which always runs without drones.
    pub teams: Vec<TeamSize>,
    pub planners: Vec<PlannerKind>,
    pub instances: usize,
    pub seed: u64,
    pub rollouts: Vec<usize>,
    pub top_k: Vec<usize>,
    pub oracle: OracleConfig,
    pub predictor: Option<PredictorConfig>,
    pub max_tree_depth: usize,
    pub step_cap: usize,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let p = PlannerConfig::default();
        Self {
            envs: EnvKind::ALL.to_vec(),
            teams: vec![TeamSize { ugv: 1, uav: 1 }],
            planners: vec![PlannerKind::Ctp, PlannerKind::Sap, PlannerKind::SapDap, PlannerKind::SapIap],
            instances: 30,
            seed: 0,
            rollouts: vec![p.rollouts_per_step],
            top_k: vec![1],
            oracle: OracleConfig::default(),
            predictor: None,
            max_tree_depth: p.max_tree_depth,
            step_cap: p.step_cap,
            threads: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads TOML or JSON depending on the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("experiment has no {what}")));
        if self.envs.is_empty() {
            return empty("environments");
        }
        if self.teams.is_empty() {
            return empty("teams");
        }
        if self.planners.is_empty() {
            return empty("planners");
        }
        if self.rollouts.is_empty() {
            return empty("rollout budgets");
        }
        if self.top_k.is_empty() {
            return empty("top-K values");
        }
        if self.instances == 0 {
            return empty("instances");
        }
        for t in &self.teams {
            if !(1..=3).contains(&t.ugv) || t.uav > 2 {
                return Err(Error::Config(format!("team {}x{} outside 1..3 ground robots, 0..2 drones", t.ugv, t.uav)));
            }
        }
        if self.top_k.contains(&0) || self.rollouts.contains(&0) {
            return Err(Error::Config("top-K and rollout budgets must be positive".into()));
        }
        if self.planners.contains(&PlannerKind::SapLiap) && self.predictor.is_none() {
            return Err(Error::Config("sap_liap needs a predictor command".into()));
        }
        Ok(())
    }

    /// Seed of instance `i`; shared by every planner so results are paired.
    pub fn instance_seed(&self, i: usize) -> u64 {
        rng::derive_seed(self.seed, &[i as u64])
    }

    /// Every cell of the grid, deduplicated. Drone-free planners ignore K and drone count.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &env in &self.envs {
            for &team in &self.teams {
                for &planner in &self.planners {
                    for &rollouts in &self.rollouts {
                        for &k in &self.top_k {
                            let pruned = matches!(planner, PlannerKind::SapDap | PlannerKind::SapIap | PlannerKind::SapLiap);
                            let cell = Cell {
                                env,
                                planner,
                                ugv: team.ugv,
                                uav: if planner.uses_drones() { team.uav } else { 0 },
                                rollouts,
                                k: if pruned { k } else { 1 },
                            };
                            if !out.contains(&cell) {
                                out.push(cell);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub env: EnvKind,
    pub planner: PlannerKind,
    pub ugv: usize,
    pub uav: usize,
    pub rollouts: usize,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(flatten)]
    pub cell: Cell,
    pub instance: usize,
    pub seed: u64,
    pub distance: Option<f64>,
    pub steps: usize,
    pub mean_plan_seconds: f64,
    pub mean_ap_seconds: f64,
    pub completed: bool,
    pub fallbacks: usize,
    pub error: Option<String>,
}

impl EpisodeRecord {
    pub fn succeeded(&self) -> bool {
        self.completed && self.error.is_none() && self.distance.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env: EnvKind,
    pub planner: PlannerKind,
    pub ugv: usize,
    pub uav: usize,
    pub rollouts: usize,
    pub k: usize,
    pub episodes: usize,
    pub failures: usize,
    pub mean_distance: f64,
    pub se_distance: f64,
    pub mean_ap_seconds: f64,
    pub mean_plan_seconds: f64,
    pub mean_steps: f64,
    /// Against the matching ground-only cell over the instances both completed.
    pub reduction_pct: Option<f64>,
    pub reference_distance: Option<f64>,
    pub reference_reduction_pct: Option<f64>,
}

/// `(baseline - value) / baseline` in percent.
pub fn percent_reduction(baseline: f64, value: f64) -> f64 {
    100.0 * (baseline - value) / baseline
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs one episode; errors are captured in the record.
pub fn run_cell_instance(spec: &ExperimentSpec, cell: Cell, instance: usize) -> EpisodeRecord {
    let seed = spec.instance_seed(instance);
    let mut rec = EpisodeRecord {
        cell,
        instance,
        seed,
        distance: None,
        steps: 0,
        mean_plan_seconds: 0.0,
        mean_ap_seconds: 0.0,
        completed: false,
        fallbacks: 0,
        error: None,
    };
    let outcome = (|| -> Result<_> {
        let scenario = generate(&EnvSpec::new(cell.env, seed, cell.ugv, cell.uav))?;
        let world = sample_true_world(&scenario.graph, &scenario.team, seed)?;
        let config = PlannerConfig {
            rollouts_per_step: cell.rollouts,
            max_tree_depth: spec.max_tree_depth,
            pruning: cell.planner.pruning(cell.k, &spec.oracle, spec.predictor.as_ref())?,
            seed,
            step_cap: spec.step_cap,
            ..PlannerConfig::default()
        };
        run_episode(&scenario.graph, &scenario.team, &config, &world)
    })();
    match outcome {
        Ok(r) => {
            let n = r.num_decision_steps.max(1) as f64;
            rec.distance = Some(r.total_ugv_distance);
            rec.steps = r.num_decision_steps;
            rec.mean_plan_seconds = r.plan_seconds().sum::<f64>() / n;
            rec.mean_ap_seconds = r.pruning_seconds().sum::<f64>() / n;
            rec.completed = r.completed;
            rec.fallbacks = r.fallbacks;
        }
        Err(e) => {
            log::warn!("{cell:?} instance {instance}: {e}");
            rec.error = Some(e.to_string());
        }
    }
    rec
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let jobs: Vec<(Cell, usize)> =
        spec.cells().into_iter().flat_map(|c| (0..spec.instances).map(move |i| (c, i))).collect();
    let work = || jobs.par_iter().map(|&(c, i)| run_cell_instance(spec, c, i)).collect::<Vec<_>>();
    let episodes = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let rows = aggregate(&episodes);
    Ok(ExperimentReport { rows, episodes })
}

/// Groups episodes into rows, in first-seen cell order.
pub fn aggregate(episodes: &[EpisodeRecord]) -> Vec<MetricsRow> {
    let mut cells: Vec<Cell> = Vec::new();
    let mut by_cell: BTreeMap<Cell, Vec<&EpisodeRecord>> = BTreeMap::new();
    for e in episodes {
        if !by_cell.contains_key(&e.cell) {
            cells.push(e.cell);
        }
        by_cell.entry(e.cell).or_default().push(e);
    }
    let baseline = |c: &Cell| {
        by_cell.iter().find(|(b, _)| {
            b.planner == PlannerKind::Ctp && b.env == c.env && b.ugv == c.ugv && b.rollouts == c.rollouts
        })
    };
    cells
        .iter()
        .map(|c| {
            let eps = &by_cell[c];
            let ok: Vec<&EpisodeRecord> = eps.iter().copied().filter(|e| e.succeeded()).collect();
            let dists: Vec<f64> = ok.iter().filter_map(|e| e.distance).collect();
            let (mean, se) = mean_and_se(&dists);
            let avg = |f: fn(&EpisodeRecord) -> f64| ok.iter().map(|e| f(e)).sum::<f64>() / ok.len().max(1) as f64;
            let reduction_pct = baseline(c).and_then(|(_, base)| {
                let base_ok: BTreeMap<usize, f64> =
                    base.iter().filter(|e| e.succeeded()).map(|e| (e.instance, e.distance.unwrap())).collect();
                let pairs: Vec<(f64, f64)> =
                    ok.iter().filter_map(|e| base_ok.get(&e.instance).map(|&b| (b, e.distance.unwrap()))).collect();
                if pairs.is_empty() {
                    return None;
                }
                let b = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
                let v = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
                Some(percent_reduction(b, v))
            });
            let reference = if c.rollouts == 1000 && (c.k == 1 || c.planner == PlannerKind::Ctp) {
                reference_result(c.env, c.planner, c.ugv, c.uav)
            } else {
                None
            };
            MetricsRow {
                env: c.env,
                planner: c.planner,
                ugv: c.ugv,
                uav: c.uav,
                rollouts: c.rollouts,
                k: c.k,
                episodes: eps.len(),
                failures: eps.len() - ok.len(),
                mean_distance: mean,
                se_distance: se,
                mean_ap_seconds: avg(|e| e.mean_ap_seconds),
                mean_plan_seconds: avg(|e| e.mean_plan_seconds),
                mean_steps: avg(|e| e.steps as f64),
                reduction_pct,
                reference_distance: reference.map(|r| r.0),
                reference_reduction_pct: reference.and_then(|r| r.1),
            }
        })
        .collect()
}

/// Reference mean distances (meters) for 1000-rollout runs with one candidate
/// per drone, as `[bridges, islands, dense]`, keyed by ground robots, planner and drones.
const REFERENCE: &[(usize, PlannerKind, usize, [f64; 3])] = &[
    (1, PlannerKind::Ctp, 0, [384.4, 342.3, 288.8]),
    (1, PlannerKind::Sap, 1, [364.0, 346.9, 277.3]),
    (1, PlannerKind::SapDap, 1, [269.4, 248.6, 212.9]),
    (1, PlannerKind::SapIap, 1, [239.5, 214.7, 196.7]),
    (1, PlannerKind::SapLiap, 1, [249.2, 223.4, 191.7]),
    (1, PlannerKind::Sap, 2, [268.6, 241.4, 250.8]),
    (1, PlannerKind::SapDap, 2, [233.1, 224.3, 200.0]),
    (1, PlannerKind::SapIap, 2, [222.8, 206.3, 196.7]),
    (1, PlannerKind::SapLiap, 2, [221.5, 206.6, 189.0]),
    (2, PlannerKind::Ctp, 0, [849.6, 784.9, 641.1]),
    (2, PlannerKind::Sap, 1, [709.4, 627.6, 568.3]),
    (2, PlannerKind::SapDap, 1, [583.8, 452.4, 448.4]),
    (2, PlannerKind::SapIap, 1, [472.1, 435.1, 397.1]),
    (2, PlannerKind::SapLiap, 1, [479.5, 444.1, 386.1]),
    (2, PlannerKind::Sap, 2, [541.5, 494.0, 514.2]),
    (2, PlannerKind::SapDap, 2, [470.4, 405.3, 383.4]),
    (2, PlannerKind::SapIap, 2, [438.7, 413.9, 386.4]),
    (2, PlannerKind::SapLiap, 2, [445.2, 396.8, 363.2]),
    (3, PlannerKind::Ctp, 0, [1301.5, 1190.2, 994.8]),
    (3, PlannerKind::Sap, 1, [981.0, 923.2, 810.1]),
    (3, PlannerKind::SapDap, 1, [806.1, 706.0, 667.7]),
    (3, PlannerKind::SapIap, 1, [719.5, 633.3, 595.6]),
    (3, PlannerKind::SapLiap, 1, [729.8, 651.6, 598.1]),
    (3, PlannerKind::Sap, 2, [786.4, 793.6, 762.4]),
    (3, PlannerKind::SapDap, 2, [700.6, 642.1, 575.5]),
    (3, PlannerKind::SapIap, 2, [658.7, 614.4, 552.4]),
    (3, PlannerKind::SapLiap, 2, [652.6, 624.2, 537.1]),
];

fn env_column(env: EnvKind) -> usize {
    match env {
        EnvKind::Bridges => 0,
        EnvKind::Islands => 1,
        EnvKind::DenseUrban => 2,
    }
}

/// Reference distance and its reduction against the reference ground-only run.
/// Geometry differs from generated instances, so only relative numbers compare.
pub fn reference_result(env: EnvKind, planner: PlannerKind, ugv: usize, uav: usize) -> Option<(f64, Option<f64>)> {
    let col = env_column(env);
    let find = |p: PlannerKind, m: usize| REFERENCE.iter().find(|r| r.0 == ugv && r.1 == p && r.2 == m).map(|r| r.3[col]);
    let d = find(planner, uav)?;
    let base = find(PlannerKind::Ctp, 0)?;
    let red = (planner != PlannerKind::Ctp).then(|| percent_reduction(base, d));
    Some((d, red))
}

/// Markdown table with one line per row.
pub fn markdown_table(rows: &[MetricsRow]) -> String {
    let mut s = String::new();
    s.push_str("| env | planner | UGV | UAV | rollouts | K | distance (m) | SE | reduction | reference | ap-time (s) | plan-time (s) | steps | failures |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let reference = match (r.reference_distance, r.reference_reduction_pct) {
            (Some(d), Some(p)) => format!("{d:.1} ({p:.1}%)"),
            (Some(d), None) => format!("{d:.1}"),
            _ => "-".into(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {:.1} | {:.1} | {} | {} | {:.3} | {:.3} | {:.1} | {} |",
            r.env,
            r.planner,
            r.ugv,
            r.uav,
            r.rollouts,
            r.k,
            r.mean_distance,
            r.se_distance,
            r.reduction_pct.map_or_else(|| "-".to_string(), |p| format!("{p:.1}%")),
            reference,
            r.mean_ap_seconds,
            r.mean_plan_seconds,
            r.mean_steps,
            r.failures
        );
    }
    s
}

#[derive(Serialize)]
struct PlotCell<'a> {
    #[serde(flatten)]
    cell: &'a Cell,
    distances: Vec<Option<f64>>,
    mean: f64,
    se: f64,
}

/// Writes `results.csv`, `episodes.csv`, `table.md` and `plots.json` into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(dir.join("results.csv")).map_err(csv_err)?;
    for r in &report.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("episodes.csv")).map_err(csv_err)?;
    for e in &report.episodes {
        w.serialize(EpisodeCsv::from(e)).map_err(csv_err)?;
    }
    w.flush()?;
    fs::write(dir.join("table.md"), markdown_table(&report.rows))?;
    let plots: Vec<PlotCell> = report
        .rows
        .iter()
        .map(|r| {
            let cell = report.episodes.iter().map(|e| &e.cell).find(|c| {
                c.env == r.env && c.planner == r.planner && c.ugv == r.ugv && c.uav == r.uav && c.rollouts == r.rollouts && c.k == r.k
            });
            let cell = cell.expect("row comes from episodes");
            let distances = report.episodes.iter().filter(|e| &e.cell == cell).map(|e| e.distance).collect();
            PlotCell { cell, distances, mean: r.mean_distance, se: r.se_distance }
        })
        .collect();
    fs::write(dir.join("plots.json"), serde_json::to_string_pretty(&plots)?)?;
    Ok(())
}

/// Flat episode row; csv cannot serialize flattened structs.
#[derive(Serialize)]
struct EpisodeCsv<'a> {
    env: EnvKind,
    planner: PlannerKind,
    ugv: usize,
    uav: usize,
    rollouts: usize,
    k: usize,
    instance: usize,
    seed: u64,
    distance: Option<f64>,
    steps: usize,
    mean_plan_seconds: f64,
    mean_ap_seconds: f64,
    completed: bool,
    fallbacks: usize,
    error: Option<&'a str>,
}

impl<'a> From<&'a EpisodeRecord> for EpisodeCsv<'a> {
    fn from(e: &'a EpisodeRecord) -> Self {
        Self {
            env: e.cell.env,
            planner: e.cell.planner,
            ugv: e.cell.ugv,
            uav: e.cell.uav,
            rollouts: e.cell.rollouts,
            k: e.cell.k,
            instance: e.instance,
            seed: e.seed,
            distance: e.distance,
            steps: e.steps,
            mean_plan_seconds: e.mean_plan_seconds,
            mean_ap_seconds: e.mean_ap_seconds,
            completed: e.completed,
            fallbacks: e.fallbacks,
            error: e.error.as_deref(),
        }
    }
}
