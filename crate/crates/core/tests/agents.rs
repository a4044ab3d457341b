use std::sync::OnceLock;

use savnce::acoustics::BinauralFrame;
use savnce::agents::{Agent, AgentConfig, AgentKind};
use savnce::dataset::{generate_dataset, Dataset, DatasetConfig, SplitName};
use savnce::descriptor::Accddoa;
use savnce::env::{Condition, ObservationBundle};
use savnce::geometry::{ActionKind, Pose};
use savnce::runner::{run_batch, EvalConfig};

fn dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        generate_dataset(&DatasetConfig {
            master_seed: 11,
            scenes: [2, 1, 4],
            episodes: [0, 0, 100],
            ..Default::default()
        })
        .unwrap()
    })
}

fn open_obs() -> ObservationBundle {
    ObservationBundle {
        binaural: BinauralFrame::silent(),
        range_scan: vec![5.0; 32],
        pose: Pose::identity(),
        t: 3,
        prev_action: Some(ActionKind::MoveForward),
        moved: 0.25,
    }
}

#[test]
fn oracle_controller_examples() {
    let mut agent = Agent::new(&AgentConfig::new(AgentKind::Oracle2), 1, None).unwrap();
    let ahead = Accddoa::single(8, 2, 0.0, 0.8);
    assert_eq!(
        agent.act(&open_obs(), &ahead, [0.0; 5]).unwrap(),
        ActionKind::Stop
    );
    let mut agent = Agent::new(&AgentConfig::new(AgentKind::Oracle2), 1, None).unwrap();
    let left = Accddoa::single(8, 2, 40f64.to_radians(), 5.0);
    assert_eq!(
        agent.act(&open_obs(), &left, [0.0; 5]).unwrap(),
        ActionKind::TurnLeft
    );
    let right = Accddoa::single(8, 2, -40f64.to_radians(), 5.0);
    assert_eq!(
        agent.act(&open_obs(), &right, [0.0; 5]).unwrap(),
        ActionKind::TurnRight
    );
    let near_axis = Accddoa::single(8, 2, 5f64.to_radians(), 5.0);
    assert_eq!(
        agent.act(&open_obs(), &near_axis, [0.0; 5]).unwrap(),
        ActionKind::MoveForward
    );
}

#[test]
fn zero_mass_actions_are_never_drawn() {
    let mut cfg = AgentConfig::new(AgentKind::Random);
    cfg.random_distribution = [0.0, 0.7, 0.15, 0.15];
    let mut agent = Agent::new(&cfg, 5, None).unwrap();
    let label = Accddoa::inactive(8);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[agent.act(&open_obs(), &label, [0.0; 5]).unwrap() as usize] += 1;
    }
    assert_eq!(counts[ActionKind::Stop as usize], 0);
    assert!((counts[ActionKind::MoveForward as usize] as f64 / 1e4 - 0.7).abs() < 0.03);
    cfg.random_distribution = [0.5, 0.5, 0.5, 0.0];
    assert!(Agent::new(&cfg, 5, None).is_err());
    assert!(Agent::new(&AgentConfig::new(AgentKind::Tracker), 5, None).is_err());
}

#[test]
fn oracle2_reaches_the_goal() {
    let data = dataset();
    let cfg = EvalConfig::new(AgentConfig::new(AgentKind::Oracle2), Condition::Clean, 3);
    let traces = run_batch(data, data.split(SplitName::Test), &cfg).unwrap();
    assert_eq!(traces.len(), 100);
    let sr = traces.iter().filter(|t| t.summary.success()).count() as f64 / 100.0;
    println!("oracle2 success rate {sr:.2}");
    assert!(sr >= 0.9, "success rate {sr}");
}

#[test]
fn tracker_never_stops_before_hearing_the_goal() {
    let data = dataset();
    for condition in [Condition::Clean, Condition::Distracted] {
        let cfg = EvalConfig::new(AgentConfig::new(AgentKind::Tracker), condition, 4);
        let traces = run_batch(data, &data.split(SplitName::Test)[..12], &cfg).unwrap();
        for tr in &traces {
            let mut heard = false;
            for step in &tr.steps {
                heard |= step.estimate.as_ref().is_some_and(|e| e.active().is_some());
                if step.action == ActionKind::Stop {
                    assert!(
                        heard,
                        "{} stopped at step {} before any detection",
                        tr.summary.episode_id, step.t
                    );
                }
            }
        }
    }
}

#[test]
fn every_agent_is_deterministic() {
    let data = dataset();
    let episodes = &data.split(SplitName::Test)[..6];
    for kind in AgentKind::ALL {
        let cfg = EvalConfig::new(AgentConfig::new(kind), Condition::Distracted, 9);
        let a = run_batch(data, episodes, &cfg).unwrap();
        let b = run_batch(data, episodes, &cfg).unwrap();
        let text =
            |ts: &[savnce::env::EpisodeTrace]| ts.iter().map(|t| t.to_jsonl()).collect::<String>();
        assert_eq!(text(&a), text(&b), "{kind}");
        let other = EvalConfig::new(AgentConfig::new(kind), Condition::Distracted, 10);
        if kind == AgentKind::Random {
            assert_ne!(text(&a), text(&run_batch(data, episodes, &other).unwrap()));
        }
    }
}
