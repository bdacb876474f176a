//! Generates a scene, walks the agent a few steps and prints what it sees.

use compose_agent::world::{generate_scene, start_pose, NavAction, SceneGenConfig, Simulator, WorldConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let scene = generate_scene(seed, &SceneGenConfig::default()).expect("scene");
    println!("{}: {}x{} cells, {} objects", scene.scene_id, scene.width, scene.height, scene.objects.len());
    let pose = start_pose(&scene, seed);
    let mut sim = Simulator::new(scene, pose, WorldConfig::default());
    for a in [NavAction::RotateRight, NavAction::MoveAhead, NavAction::LookDown, NavAction::RotateLeft] {
        let ok = sim.navigate(a);
        let obs = sim.observe();
        let seen: Vec<String> =
            obs.ego().visible.iter().map(|v| format!("{:?}@{}{}", v.class, v.distance, if v.interactable { "*" } else { "" })).collect();
        println!("{a:?} ({}) -> {:016x} [{}]", if ok { "ok" } else { "blocked" }, obs.fingerprint, seen.join(", "));
    }
}
