use proptest::prelude::*;
use scout_core::envgen::{generate, two_route, EnvKind, EnvSpec};
use scout_core::graph::NodeId;
use scout_core::planner::{plan_step, run_episode, sample_true_world, PlanContext, Speeds};
use scout_core::pruning::{prune_drone_actions, OracleConfig, Ranking};
use scout_core::{BeliefState, PlannerConfig, PlannerKind, PruningStrategy, Target};

/// Exact expected cost of trying the direct edge first: 10 (1 - p) + 40 p.
fn direct_value(p: f64) -> f64 {
    10.0 + 30.0 * p
}

fn root_plan(p: f64, rollouts: usize, seed: u64) -> scout_core::planner::PlanResult {
    let s = two_route(p);
    let b = BeliefState::initial(&s.graph, &s.team).unwrap();
    let ctx = PlanContext { graph: &s.graph, speeds: Speeds::from(&s.team), ranking: None };
    let cfg = PlannerConfig { rollouts_per_step: rollouts, ..PlannerConfig::default() };
    plan_step(&ctx, &b, &cfg, seed).unwrap()
}

fn first_target(plan: &scout_core::planner::PlanResult) -> NodeId {
    match plan.action.actions[0].target {
        Target::Node(n) => n,
        Target::Idle => panic!("ground robot idles"),
    }
}

#[test]
fn micro_instance_value_converges() {
    assert_eq!(direct_value(0.5), 25.0);
    for seed in 0..3 {
        let plan = root_plan(0.5, 16_000, seed);
        let v = plan.root_value.unwrap();
        assert!((v - 25.0).abs() <= 1.0, "seed {seed}: root value {v}");
        // PBP of the direct edge
        assert_eq!(first_target(&plan), NodeId(3));
    }
}

#[test]
fn micro_instance_choice_flips_at_two_thirds() {
    // indifference where 10 + 30 p = 30
    for (p, expect) in [(0.3, NodeId(3)), (0.55, NodeId(3)), (0.8, NodeId(2)), (0.95, NodeId(2))] {
        let plan = root_plan(p, 16_000, 1);
        assert_eq!(first_target(&plan), expect, "p = {p}");
    }
}

fn strip_timing(mut r: scout_core::planner::EpisodeResult) -> scout_core::planner::EpisodeResult {
    for s in &mut r.steps {
        s.plan_seconds = 0.0;
        s.pruning_seconds = 0.0;
    }
    r
}

#[test]
fn episodes_are_deterministic_per_seed() {
    for kind in [PlannerKind::SapDap, PlannerKind::SapIap, PlannerKind::Sap] {
        let s = generate(&EnvSpec::new(EnvKind::Islands, 4, 2, 1)).unwrap();
        let w = sample_true_world(&s.graph, &s.team, 4).unwrap();
        let cfg = PlannerConfig {
            rollouts_per_step: 300,
            pruning: kind.pruning(1, &OracleConfig { samples: 100, ..Default::default() }, None).unwrap(),
            seed: 9,
            ..PlannerConfig::default()
        };
        let a = strip_timing(run_episode(&s.graph, &s.team, &cfg, &w).unwrap());
        let b = strip_timing(run_episode(&s.graph, &s.team, &cfg, &w).unwrap());
        assert_eq!(a, b, "{kind}");
        let total: f64 = a.steps.iter().map(|s| s.ugv_cost).sum();
        assert!((total - a.total_ugv_distance).abs() < 1e-9);
        assert!(a.completed);
    }
}

#[test]
fn ctp_is_sap_without_drones() {
    let s = generate(&EnvSpec::new(EnvKind::Bridges, 2, 1, 1)).unwrap();
    let team = s.team.without_drones();
    let w = sample_true_world(&s.graph, &s.team, 2).unwrap();
    let base = PlannerConfig { rollouts_per_step: 300, seed: 1, ..PlannerConfig::default() };
    let ctp = run_episode(&s.graph, &team, &base, &w).unwrap();
    let dap = PlannerConfig { pruning: PruningStrategy::Dap { k: 1 }, ..base };
    let same = run_episode(&s.graph, &team, &dap, &w).unwrap();
    assert_eq!(strip_timing(ctp), strip_timing(same));
}

#[test]
fn true_world_is_shared_across_team_sizes_with_same_ground_team() {
    let a = generate(&EnvSpec::new(EnvKind::DenseUrban, 8, 2, 0)).unwrap();
    let b = generate(&EnvSpec::new(EnvKind::DenseUrban, 8, 2, 2)).unwrap();
    assert_eq!(a.graph.to_file(), b.graph.to_file());
    assert_eq!(sample_true_world(&a.graph, &a.team, 3).unwrap(), sample_true_world(&b.graph, &b.team, 3).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pruned_sets_are_disjoint_and_bounded(seed in 0u64..200, k in 1usize..4, uav in 1usize..=2) {
        let s = generate(&EnvSpec::new(EnvKind::ALL[(seed % 3) as usize], seed, 2, uav)).unwrap();
        let b = BeliefState::initial(&s.graph, &s.team).unwrap();
        for ranking in [Ranking::dap(&s.graph, &b).unwrap(), Ranking::iap(&s.graph, &b, 3.0, &vec![1.0; s.graph.num_edges()]).unwrap()] {
            let sets = prune_drone_actions(&s.graph, &b, Some(&ranking), k, None).unwrap();
            prop_assert_eq!(sets.len(), uav);
            let mut seen = Vec::new();
            for (j, set) in sets.iter().enumerate() {
                prop_assert!(!set.is_empty() && set.len() <= k);
                for t in set {
                    if let Target::Node(n) = t {
                        prop_assert!(!seen.contains(n));
                        seen.push(*n);
                    }
                }
                // a drone's best remaining choice comes first
                if let Target::Node(n) = set[0] {
                    prop_assert!(ranking.per_drone[j].iter().any(|s| s.pbp == n));
                }
            }
            if k == 1 {
                prop_assert_eq!(sets[0][0], Target::Node(ranking.per_drone[0][0].pbp));
            }
        }
    }

    /// Scaling every ground speed leaves both rankings unchanged.
    #[test]
    fn rankings_ignore_ground_speed(seed in 0u64..100, scale in 0.2f64..5.0) {
        let mut s = generate(&EnvSpec::new(EnvKind::DenseUrban, seed, 2, 1)).unwrap();
        let b = BeliefState::initial(&s.graph, &s.team).unwrap();
        let vc: Vec<f64> = (0..s.graph.num_edges()).map(|j| (j * 7 % 5) as f64).collect();
        let order = |r: &Ranking| r.per_drone[0].iter().map(|x| x.pbp).collect::<Vec<_>>();
        let d0 = order(&Ranking::dap(&s.graph, &b).unwrap());
        let i0 = order(&Ranking::iap(&s.graph, &b, s.team.uav_speed, &vc).unwrap());
        s.team.ugv_speed *= scale;
        let b2 = BeliefState::initial(&s.graph, &s.team).unwrap();
        prop_assert_eq!(d0, order(&Ranking::dap(&s.graph, &b2).unwrap()));
        prop_assert_eq!(i0, order(&Ranking::iap(&s.graph, &b2, s.team.uav_speed, &vc).unwrap()));
    }
}

