use proptest::prelude::*;

use compose_agent::expert::{generate_dataset, generate_expert_trajectory, recover_kind, DatasetConfig};
use compose_agent::lang::Vocabulary;
use compose_agent::tasks::{evaluate_goal_conditions, generate_task, TaskType};
use compose_agent::world::{generate_scene, SceneGenConfig, Simulator, StateFlag, WorldConfig};

#[test]
fn every_expert_trajectory_replays_step_by_step_to_success() {
    let ds = generate_dataset(&DatasetConfig::default()).unwrap();
    assert!(ds.records.len() >= 500, "only {} tasks", ds.records.len());
    for t in TaskType::ALL {
        assert!(ds.records.iter().any(|r| r.trajectory.task.task_type == t), "{t:?} missing");
    }
    for r in &ds.records {
        let traj = &r.trajectory;
        let mut sim = Simulator::new(ds.scene(r.scene_seed).unwrap().clone(), traj.start, WorldConfig::default());
        let mut executed = 0;
        for (i, s) in traj.steps.iter().enumerate() {
            let out = sim.execute(s.action, s.target);
            assert!(out.success, "{} step {i} {:?} failed", r.id, s.action);
            executed += !s.action.is_token() as usize;
        }
        assert_eq!(executed, traj.path_length);
        let status = evaluate_goal_conditions(&sim.scene, &traj.task);
        assert!(status.success, "{}: {}/{}", r.id, status.satisfied, status.total);
    }
}

#[test]
fn generated_vocabulary_covers_the_corpus() {
    let vocab = Vocabulary::from_templates();
    let ds = generate_dataset(&DatasetConfig { tasks_per_scene: 30, ..Default::default() }).unwrap();
    let mut words = 0;
    for r in &ds.records {
        let ins = &r.trajectory.instructions;
        for text in std::iter::once(&ins.goal).chain(&ins.steps) {
            let toks = vocab.tokenize(text);
            words += toks.len();
            assert!(toks.iter().all(|&t| t != 0), "unknown token in {text:?}");
        }
    }
    assert!(words > 10_000);
}

#[test]
fn subgoal_kind_is_recoverable_from_every_instruction() {
    let ds = generate_dataset(&DatasetConfig { num_scenes: 20, ..Default::default() }).unwrap();
    for r in &ds.records {
        for (text, sg) in r.trajectory.instructions.steps.iter().zip(&r.trajectory.task.subgoals) {
            assert_eq!(recover_kind(text), Some(sg.kind), "{text:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subgoals_alternate_between_navigation_and_interaction(scene_seed in 0u64..400, t in 0usize..7, task_seed: u64) {
        let scene = generate_scene(scene_seed, &SceneGenConfig::default()).unwrap();
        if let Ok(spec) = generate_task(&scene, TaskType::ALL[t], task_seed) {
            prop_assert!(!spec.subgoals.is_empty());
            for (i, sg) in spec.subgoals.iter().enumerate() {
                prop_assert_eq!(sg.kind.is_navigation(), i % 2 == 0, "{:?}", spec.subgoals);
            }
        }
    }

    #[test]
    fn setting_more_flags_never_lowers_the_satisfied_count(
        scene_seed in 0u64..200,
        t in 0usize..7,
        prefix in 0.0f64..1.0,
        flips in proptest::collection::vec((any::<u16>(), 0usize..7), 0..12),
    ) {
        let scene = generate_scene(scene_seed, &SceneGenConfig::default()).unwrap();
        let Ok(spec) = generate_task(&scene, TaskType::ALL[t], scene_seed) else { return Ok(()) };
        let traj = generate_expert_trajectory(&scene, &spec).unwrap();
        let mut sim = Simulator::new(scene, traj.start, WorldConfig::default());
        let cut = (traj.steps.len() as f64 * prefix) as usize;
        for s in &traj.steps[..cut] {
            sim.execute(s.action, s.target);
        }
        let mut prev = evaluate_goal_conditions(&sim.scene, &spec).satisfied;
        let flags = [StateFlag::Picked, StateFlag::Sliced, StateFlag::Heated, StateFlag::Cooled,
                     StateFlag::Cleaned, StateFlag::ToggledOn, StateFlag::Open];
        for (which, f) in flips {
            let n = sim.scene.objects.len();
            let o = &mut sim.scene.objects[which as usize % n];
            match flags[f] {
                StateFlag::Picked => o.state.picked = true,
                StateFlag::Sliced => o.state.sliced = true,
                StateFlag::Heated => o.state.heated = true,
                StateFlag::Cooled => o.state.cooled = true,
                StateFlag::Cleaned => o.state.cleaned = true,
                StateFlag::ToggledOn => o.state.toggled_on = true,
                StateFlag::Open => o.state.open = true,
            }
            let now = evaluate_goal_conditions(&sim.scene, &spec).satisfied;
            prop_assert!(now >= prev);
            prev = now;
        }
    }
}
