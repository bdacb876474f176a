//! Builds a task in a generated scene and prints the expert trajectory and its instructions.

use compose_agent::expert::generate_expert_trajectory;
use compose_agent::tasks::{generate_task, TaskType};
use compose_agent::world::{generate_scene, SceneGenConfig};

fn main() {
    let scene = generate_scene(11, &SceneGenConfig::default()).expect("scene");
    for t in TaskType::ALL {
        let Ok(spec) = (0..20).find_map(|s| generate_task(&scene, t, s).ok()).ok_or(()) else {
            println!("{t:?}: infeasible in {}", scene.scene_id);
            continue;
        };
        let traj = generate_expert_trajectory(&scene, &spec).expect("expert");
        println!("{t:?} (L = {})", traj.path_length);
        println!("  goal: {}", traj.instructions.goal);
        for (i, (sg, text)) in spec.subgoals.iter().zip(&traj.instructions.steps).enumerate() {
            let n = traj.segment(i).count();
            println!("  {i}. {:<14} {:<40} {n} steps", sg.kind.to_string(), text);
        }
    }
}
