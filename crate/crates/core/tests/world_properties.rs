use std::collections::BTreeMap;

use proptest::prelude::*;

use compose_agent::world::{
    fingerprint, generate_scene, start_pose, Action, GridScene, InteractAction, NavAction, ObjectClass, ObjectId,
    SceneGenConfig, Simulator, ViewFeature, WorldConfig,
};

fn scene(seed: u64) -> GridScene {
    generate_scene(seed, &SceneGenConfig::default()).expect("scene generates")
}

/// Decodes a random byte stream into actions, targeting classes present in the scene.
fn actions(scene: &GridScene, codes: &[(u8, u8)]) -> Vec<Action> {
    let classes: Vec<ObjectClass> = scene.objects.iter().map(|o| o.class).collect();
    codes
        .iter()
        .map(|&(a, c)| {
            let a = a as usize % (NavAction::ALL.len() + InteractAction::ALL.len());
            if a < NavAction::ALL.len() {
                Action::Nav(NavAction::ALL[a])
            } else {
                Action::Interact(InteractAction::ALL[a - NavAction::ALL.len()], classes[c as usize % classes.len()])
            }
        })
        .collect()
}

fn run(seed: u64, codes: &[(u8, u8)]) -> (Vec<(bool, u64)>, Simulator) {
    let s = scene(seed);
    let acts = actions(&s, codes);
    let pose = start_pose(&s, seed);
    let mut sim = Simulator::new(s, pose, WorldConfig::default());
    let log = acts.iter().map(|&a| (sim.execute(a, None).success, sim.observe().fingerprint)).collect();
    (log, sim)
}

fn ids_by_class(scene: &GridScene) -> BTreeMap<ObjectId, ObjectClass> {
    scene.objects.iter().map(|o| (o.id, o.class)).collect()
}

fn visible_keys(view: &ViewFeature) -> Vec<(ObjectClass, u8, u8)> {
    let mut k: Vec<_> = view.visible.iter().map(|v| (v.class, v.distance, v.state_bits)).collect();
    k.sort();
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replaying_an_action_sequence_is_deterministic(seed in 0u64..200, codes in proptest::collection::vec(any::<(u8, u8)>(), 0..80)) {
        let (a, sa) = run(seed, &codes);
        let (b, sb) = run(seed, &codes);
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa.scene, sb.scene);
        prop_assert_eq!(sa.pose, sb.pose);
    }

    #[test]
    fn object_ids_are_conserved_except_by_slicing(seed in 0u64..200, codes in proptest::collection::vec(any::<(u8, u8)>(), 0..120)) {
        let s = scene(seed);
        let acts = actions(&s, &codes);
        let pose = start_pose(&s, seed);
        let mut sim = Simulator::new(s, pose, WorldConfig::default());
        for a in acts {
            let before = ids_by_class(&sim.scene);
            let sliced_before: Vec<ObjectId> = sim.scene.objects.iter().filter(|o| o.state.sliced).map(|o| o.id).collect();
            let out = sim.execute(a, None);
            let after = ids_by_class(&sim.scene);
            if out.success && matches!(a, Action::Interact(InteractAction::Slice, _)) {
                let target = out.target.expect("slice has a target");
                let class = before[&target];
                let removed: Vec<_> = before.keys().filter(|id| !after.contains_key(id)).collect();
                let added: Vec<_> = after.iter().filter(|(id, _)| !before.contains_key(id)).collect();
                prop_assert_eq!(removed, vec![&target]);
                prop_assert!(added.len() >= 2);
                prop_assert!(added.iter().all(|(_, c)| **c == class));
            } else {
                prop_assert_eq!(&before, &after);
            }
            for id in sliced_before {
                prop_assert!(sim.scene.object(id).is_some_and(|o| o.state.sliced), "object {} lost its sliced flag", id);
            }
        }
    }

    #[test]
    fn fingerprints_agree_exactly_when_visible_sets_do(seeds in proptest::collection::vec(0u64..60, 2..6), codes in proptest::collection::vec(any::<(u8, u8)>(), 0..40)) {
        let mut views = Vec::new();
        for &seed in &seeds {
            let s = scene(seed);
            let acts: Vec<Action> = actions(&s, &codes).into_iter().filter(|a| matches!(a, Action::Nav(_))).collect();
            let pose = start_pose(&s, seed);
            let mut sim = Simulator::new(s, pose, WorldConfig::default());
            views.push(sim.observe().views[0].clone());
            for a in acts {
                sim.execute(a, None);
                views.push(sim.observe().views[0].clone());
            }
        }
        for a in &views {
            for b in &views {
                prop_assert_eq!(fingerprint(a) == fingerprint(b), visible_keys(a) == visible_keys(b));
            }
        }
    }
}

#[test]
fn a_sliced_object_stays_sliced_through_a_long_random_episode() {
    let mut checked = 0;
    for seed in 0..300u64 {
        let s = scene(seed);
        let Some(knife) = s.objects.iter().find(|o| o.class == ObjectClass::Knife).map(|o| o.id) else { continue };
        let Some(food) = s.objects.iter().find(|o| o.caps.is_sliceable).map(|o| o.id) else { continue };
        let mut sim = Simulator::new(s, start_pose(&scene(seed), seed), WorldConfig::default());
        // Hand over the knife and stand in front of the food.
        sim.pose.inventory = Some(knife);
        if let Some(k) = sim.scene.object_mut(knife) {
            k.pos = None;
            k.contained_in = None;
            k.state.picked = true;
        }
        let food_cell = sim.scene.object(food).and_then(|o| o.pos);
        let Some(cell) = food_cell else { continue };
        let mut placed = false;
        for h in compose_agent::world::Heading::ALL {
            let (dx, dy) = h.delta();
            let stand = cell.offset(-dx, -dy);
            if sim.scene.is_passable(stand) {
                sim.pose.cell = stand;
                sim.pose.heading = h;
                placed = true;
                break;
            }
        }
        if !placed || !sim.interact_with(InteractAction::Slice, food).success {
            continue;
        }
        let pieces: Vec<ObjectId> = sim.scene.objects.iter().filter(|o| o.state.sliced).map(|o| o.id).collect();
        assert!(pieces.len() >= 2);
        let codes: Vec<(u8, u8)> = (0..400u32).map(|i| ((i * 7 % 251) as u8, (i * 13 % 241) as u8)).collect();
        for a in actions(&sim.scene.clone(), &codes) {
            sim.execute(a, None);
            for id in &pieces {
                assert!(sim.scene.object(*id).is_some_and(|o| o.state.sliced));
            }
        }
        checked += 1;
        if checked == 5 {
            break;
        }
    }
    assert!(checked > 0, "no scene allowed a slice");
}
