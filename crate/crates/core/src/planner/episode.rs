//! Closed-loop episodes against a fixed true world.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::search::{goals_reachable, plan_step, PlanContext};
use super::transition::{advance, Speeds};
use super::{PlannerConfig, PruningStrategy};
use crate::action::JointAction;
use crate::belief::{BeliefState, Observation};
use crate::envgen::TeamConfig;
use crate::error::{Error, Result};
use crate::graph::{sample_unknown, PathSearch, WorldGraph, WorldSample};
use crate::pruning::{team_value_change, MonteCarloValueChange, PredictorClient, Ranking};
use crate::rng::{self, stream};

/// Attempts at drawing a true world in which every goal is reachable.
const TRUE_WORLD_TRIES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: JointAction,
    pub elapsed: f64,
    pub ugv_cost: f64,
    pub observation: Option<Observation>,
    pub root_value: Option<f64>,
    /// Whole decision step, pruning included.
    pub plan_seconds: f64,
    pub pruning_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Summed ground-robot travel, meters.
    pub total_ugv_distance: f64,
    pub num_decision_steps: usize,
    /// Every ground robot reached its goal before the step cap.
    pub completed: bool,
    /// Steps where the predictor failed and nearest-first ranking was used instead.
    pub fallbacks: usize,
    pub steps: Vec<StepRecord>,
}

impl EpisodeResult {
    pub fn plan_seconds(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.plan_seconds)
    }

    pub fn pruning_seconds(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.pruning_seconds)
    }
}

/// Draws the hidden world from the prior, conditioned on every goal being
/// reachable from its start.
pub fn sample_true_world(graph: &WorldGraph, team: &TeamConfig, seed: u64) -> Result<WorldSample> {
    let belief = BeliefState::initial(graph, team)?;
    let mut rng = rng::rng_for(seed, &[stream::WORLD]);
    let mut search = PathSearch::new();
    for _ in 0..TRUE_WORLD_TRIES {
        let w = sample_unknown(graph, belief.knowledge(), &mut rng);
        if goals_reachable(graph, &belief, &w, &mut search) {
            return Ok(w);
        }
    }
    Err(Error::Generation("no world with every goal reachable".into()))
}

enum RankSource {
    Unpruned,
    Nearest,
    Oracle(MonteCarloValueChange),
    Predictor(Option<PredictorClient>),
}

impl RankSource {
    fn new(strategy: &PruningStrategy) -> (Self, usize) {
        match strategy {
            PruningStrategy::None => (RankSource::Unpruned, 0),
            PruningStrategy::Dap { .. } => (RankSource::Nearest, 0),
            PruningStrategy::Iap { oracle, .. } => (RankSource::Oracle(MonteCarloValueChange { oracle: oracle.clone() }), 0),
            PruningStrategy::Liap { predictor, .. } => match PredictorClient::spawn(predictor) {
                Ok(c) => (RankSource::Predictor(Some(c)), 0),
                Err(e) => {
                    log::warn!("predictor unavailable, ranking by distance: {e}");
                    (RankSource::Predictor(None), 0)
                }
            },
        }
    }

    /// Ranking for this step plus whether a fallback happened.
    fn rank(&mut self, graph: &WorldGraph, belief: &BeliefState, uav_speed: f64, step_seed: u64) -> Result<(Option<Ranking>, bool)> {
        if belief.num_uavs() == 0 {
            return Ok((None, false));
        }
        match self {
            RankSource::Unpruned => Ok((None, false)),
            RankSource::Nearest => Ok((Some(Ranking::dap(graph, belief)?), false)),
            RankSource::Oracle(mc) => {
                let mut provider = MonteCarloValueChange {
                    oracle: crate::pruning::OracleConfig { seed: rng::derive_seed(step_seed, &[stream::ORACLE]), ..mc.oracle.clone() },
                };
                let vc = team_value_change(&mut provider, graph, belief)?;
                Ok((Some(Ranking::iap(graph, belief, uav_speed, &vc)?), false))
            }
            RankSource::Predictor(client) => {
                if let Some(c) = client {
                    match team_value_change(c, graph, belief) {
                        Ok(vc) => return Ok((Some(Ranking::iap(graph, belief, uav_speed, &vc)?), false)),
                        Err(e) => log::warn!("predictor failed, ranking by distance: {e}"),
                    }
                }
                Ok((Some(Ranking::dap(graph, belief)?), true))
            }
        }
    }
}

/// Plans and executes until every ground robot is at its goal or the step cap is hit.
pub fn run_episode(graph: &WorldGraph, team: &TeamConfig, config: &PlannerConfig, world: &WorldSample) -> Result<EpisodeResult> {
    team.validate(graph)?;
    if world.edge_status.len() != graph.num_edges() {
        return Err(Error::Config("world does not match the graph".into()));
    }
    let speeds = Speeds::from(team);
    let mut belief = BeliefState::initial(graph, team)?;
    let (mut source, mut fallbacks) = RankSource::new(&config.pruning);
    let mut steps = Vec::new();
    let mut total = 0.0;
    for step in 0..config.step_cap {
        if belief.all_done() {
            break;
        }
        let step_seed = rng::derive_seed(config.seed, &[stream::STEP, step as u64]);
        let t0 = Instant::now();
        let (ranking, fell_back) = source.rank(graph, &belief, speeds.uav, step_seed)?;
        fallbacks += fell_back as usize;
        let pruning_seconds = t0.elapsed().as_secs_f64();
        let ctx = PlanContext { graph, speeds, ranking: ranking.as_ref() };
        let plan = plan_step(&ctx, &belief, config, step_seed)?;
        let plan_seconds = t0.elapsed().as_secs_f64();
        let out = advance(graph, speeds, &belief, &plan.action, world)?;
        total += out.ugv_cost_delta;
        log::debug!("step {step}: {} cost {:.2} value {:?}", plan.action, out.ugv_cost_delta, plan.root_value);
        steps.push(StepRecord {
            step,
            action: plan.action,
            elapsed: out.elapsed,
            ugv_cost: out.ugv_cost_delta,
            observation: out.observation,
            root_value: plan.root_value,
            plan_seconds,
            pruning_seconds,
        });
        belief = out.next_belief;
    }
    Ok(EpisodeResult {
        total_ugv_distance: total,
        num_decision_steps: steps.len(),
        completed: belief.all_done(),
        fallbacks,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::two_route;
    use crate::graph::EdgeStatus;

    #[test]
    fn two_route_episode_totals() {
        let s = two_route(0.5);
        let cfg = PlannerConfig { rollouts_per_step: 2000, ..PlannerConfig::default() };
        let open = WorldSample { edge_status: vec![EdgeStatus::Traversable; 3] };
        let r = run_episode(&s.graph, &s.team, &cfg, &open).unwrap();
        assert!(r.completed);
        assert!((r.total_ugv_distance - 10.0).abs() < 1e-9, "{:#?}", r.steps);
        let mut shut = open.clone();
        shut.edge_status[0] = EdgeStatus::Blocked;
        let r = run_episode(&s.graph, &s.team, &cfg, &shut).unwrap();
        assert!(r.completed);
        assert!((r.total_ugv_distance - 40.0).abs() < 1e-9, "{:#?}", r.steps);
    }

    #[test]
    fn true_world_keeps_goals_reachable() {
        let s = two_route(0.9);
        for seed in 0..50 {
            let w = sample_true_world(&s.graph, &s.team, seed).unwrap();
            assert_eq!(w.edge_status[1], EdgeStatus::Traversable);
        }
    }
}

