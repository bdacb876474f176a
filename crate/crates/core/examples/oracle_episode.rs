//! Replays an expert through the hierarchical controller and renders the trace.

use compose_agent::controller::{
    check_trace_invariants, render_trace, run_episode, EpisodeConfig, EpisodeSetup, OracleAgent, TransferMode,
};
use compose_agent::expert::{generate_dataset, DatasetConfig};

fn main() {
    let ds = generate_dataset(&DatasetConfig { num_scenes: 4, tasks_per_scene: 3, ..Default::default() }).expect("dataset");
    let r = ds.records.iter().max_by_key(|r| r.trajectory.task.subgoals.len()).expect("records");
    let setup = EpisodeSetup {
        id: &r.id,
        scene: ds.scene(r.scene_seed).expect("scene"),
        start: r.trajectory.start,
        instructions: &r.trajectory.instructions,
    };
    let cfg = EpisodeConfig { transfer_mode: TransferMode::TokenOnly, ..Default::default() };
    let trace = run_episode(&setup, &OracleAgent { trajectory: &r.trajectory }, &cfg).expect("episode");
    println!("{}", r.trajectory.instructions.goal);
    print!("{}", render_trace(&trace));
    println!("invariants: {:?}", check_trace_invariants(&trace).map(|_| "ok"));
}
