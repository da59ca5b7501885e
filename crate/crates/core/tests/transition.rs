mod common;

use common::{check_random_walk, random_joint};
use proptest::prelude::*;
use scout_core::belief::Observation;
use scout_core::envgen::{generate, EnvKind, EnvSpec};
use scout_core::graph::{EdgeKnowledge, Pose};
use scout_core::planner::{advance, check_joint, sample_true_world, Speeds};
use scout_core::rng::rng_for;
use scout_core::{BeliefState, EdgeStatus, RobotId, Target};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Random legal play keeps every transition rule.
    #[test]
    fn random_walks_respect_transition_rules(seed in 0u64..10_000, kind in 0usize..3, ugv in 1usize..=3, uav in 0usize..=2) {
        let r = check_random_walk(EnvKind::ALL[kind], seed % 50, ugv, uav, seed, 60);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn legal_actions_never_cross_known_blockages(seed in 0u64..5000) {
        let s = generate(&EnvSpec::new(EnvKind::DenseUrban, seed % 40, 2, 1)).unwrap();
        let g = &s.graph;
        let world = sample_true_world(g, &s.team, seed).unwrap();
        let mut b = BeliefState::initial(g, &s.team).unwrap();
        let mut rng = rng_for(seed, &[2]);
        for _ in 0..40 {
            if b.all_done() {
                break;
            }
            for i in b.live_ugvs().collect::<Vec<_>>() {
                let r = b.ugv(i);
                for a in b.legal_actions(g, RobotId(i as u32)).unwrap() {
                    let Target::Node(t) = a.target else { panic!("ground robot idles") };
                    if let Pose::AtNode(n) = r.pose {
                        if g.is_vertex(n) && g.is_vertex(t) {
                            let e = g.edge_between(n, t).unwrap();
                            prop_assert_eq!(b.edge_knowledge(e), EdgeKnowledge::Traversable);
                        }
                        if let Some(e) = g.edge_of_pbp(n) {
                            if b.edge_knowledge(e) == EdgeKnowledge::Blocked {
                                prop_assert_eq!(t, r.anchor);
                            }
                        }
                    }
                }
            }
            let joint = random_joint(g, &b, &mut rng);
            b = advance(g, Speeds::from(&s.team), &b, &joint, &world).unwrap().next_belief;
        }
    }
}

#[test]
fn observing_twice_is_rejected() {
    let s = generate(&EnvSpec::new(EnvKind::Bridges, 1, 1, 1)).unwrap();
    let b = BeliefState::initial(&s.graph, &s.team).unwrap();
    let pbp = b.unknown_pbps(&s.graph)[0];
    let obs = Observation { pbp, status: EdgeStatus::Blocked, observer: RobotId(1), time: 0.0 };
    let b1 = b.apply_observation(&s.graph, &obs).unwrap();
    assert!(b1.apply_observation(&s.graph, &obs).is_err());
    assert_eq!(b1.num_unknown() + 1, b.num_unknown());
}

#[test]
fn unpruned_search_handles_more_drones_than_pbps() {
    use scout_core::graph::{EdgeKnowledge as K, NodeId, Point};
    use scout_core::planner::{plan_step, PlanContext};
    use scout_core::{GroundRobot, PlannerConfig, WorldGraph};
    let g = WorldGraph::new(
        vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(5.0, 12.0)],
        &[(0, 1, 0.5), (0, 2, 0.0), (2, 1, 0.0)],
    )
    .unwrap();
    let robot = GroundRobot { pose: Pose::AtNode(NodeId(0)), anchor: NodeId(0), goal: NodeId(1), done: false };
    let b = BeliefState::from_parts(&g, vec![robot], vec![Point::new(0.0, 5.0), Point::new(9.0, 5.0)], vec![K::Unknown, K::Traversable, K::Traversable])
        .unwrap();
    let ctx = PlanContext { graph: &g, speeds: Speeds { ugv: 1.0, uav: 3.0 }, ranking: None };
    let cfg = PlannerConfig { rollouts_per_step: 300, ..PlannerConfig::default() };
    let plan = plan_step(&ctx, &b, &cfg, 4).unwrap();
    check_joint(&g, &b, &plan.action).unwrap();
    let idles = plan.action.actions.iter().filter(|a| a.target == Target::Idle).count();
    assert!(idles >= 1, "{}", plan.action);
}
