use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use compose_agent::expert::{generate_dataset, DatasetConfig, Split};
use compose_agent::lang::Vocabulary;
use compose_agent::policies::{
    escape_action, nav_sequence, pcc_examples, train_nav, train_pcc, DataOptions, Demonstration, TrainConfig,
};
use compose_agent::world::{NavAction, WorldConfig};

fn small_demos() -> (Vocabulary, Vec<Demonstration>) {
    let ds = generate_dataset(&DatasetConfig { num_scenes: 6, tasks_per_scene: 4, ..Default::default() }).unwrap();
    let world = WorldConfig::default();
    let demos = ds
        .split(Split::Train)
        .map(|r| Demonstration::replay(ds.scene(r.scene_seed).unwrap(), &r.trajectory, &world))
        .collect();
    (Vocabulary::from_templates(), demos)
}

#[test]
fn loop_escape_draws_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[escape_action(&mut rng).index()] += 1;
    }
    for (a, c) in NavAction::ALL.iter().zip(counts) {
        let f = c as f64 / n as f64;
        assert!((f - 0.2).abs() <= 0.02, "{a:?} drawn with frequency {f}");
    }
}

#[test]
fn navigation_policy_reproduces_the_expert_on_its_training_states() {
    let (vocab, demos) = small_demos();
    let cfg = TrainConfig { lr: 3e-3, epochs: 60, batch: 4, hidden: 64, track_valid: false, ..TrainConfig::default() };
    let (_, curve) = train_nav(&vocab, &demos, &DataOptions::full(), &cfg).unwrap();
    let acc = curve.last("train").unwrap().accuracy;
    assert!(acc >= 0.95, "teacher-forced expert agreement {acc}");
}

#[test]
fn progress_targets_rise_and_predictions_stay_in_unit_range() {
    let (vocab, demos) = small_demos();
    let cfg = TrainConfig { epochs: 1, track_valid: false, ..TrainConfig::default() };
    let (nav, _) = train_nav(&vocab, &demos, &DataOptions::full(), &cfg).unwrap();
    for d in &demos {
        let seq = nav_sequence(&vocab, d, &nav.layout, &DataOptions::full());
        let mut last_overall = 0.0;
        let mut h = nav.cell.initial_state();
        for (input, target) in &seq {
            let p = target.progress.expect("navigation steps carry progress labels");
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
            assert!(p[1] >= last_overall);
            last_overall = p[1];
            let out = nav.cell.step(&h, input);
            assert!(out.progress.iter().all(|v| (0.0..=1.0).contains(v)));
            h = out.hidden;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_classifier_logits_keeps_predictions(scale in 0.01f64..100.0, seed in 0u64..4) {
        let (vocab, demos) = small_demos();
        let ex = pcc_examples(&vocab, demos.iter().map(|d| &d.trajectory));
        let cfg = TrainConfig { lr: 1e-2, epochs: 2, seed, track_valid: false, ..TrainConfig::default() };
        let (pcc, _) = train_pcc(&vocab, &ex, &[], &cfg).unwrap();
        let mut scaled = pcc.clone();
        scaled.clf.params.iter_mut().for_each(|p| *p *= scale);
        for (x, _) in &ex {
            prop_assert_eq!(pcc.clf.predict(x), scaled.clf.predict(x));
        }
    }
}
