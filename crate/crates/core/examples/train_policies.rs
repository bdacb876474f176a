//! Imitation-trains the navigation policy and one interaction policy, printing loss curves.

use compose_agent::expert::{generate_dataset, DatasetConfig, Split};
use compose_agent::lang::Vocabulary;
use compose_agent::policies::{train_interaction, train_nav, DataOptions, Demonstration, TrainConfig};
use compose_agent::tasks::SubgoalKind;
use compose_agent::world::WorldConfig;

fn main() {
    let ds = generate_dataset(&DatasetConfig { num_scenes: 12, tasks_per_scene: 8, ..Default::default() }).expect("dataset");
    let world = WorldConfig::default();
    let demos: Vec<Demonstration> =
        ds.split(Split::Train).map(|r| Demonstration::replay(ds.scene(r.scene_seed).unwrap(), &r.trajectory, &world)).collect();
    let vocab = Vocabulary::from_templates();
    let cfg = TrainConfig { lr: 3e-3, epochs: 8, batch: 8, track_every_epoch: true, track_valid: false, ..TrainConfig::default() };
    let (_, nav_curve) = train_nav(&vocab, &demos, &DataOptions::full(), &cfg).expect("nav trains");
    println!("navigation policy on {} demonstrations\n{}", demos.len(), nav_curve.to_csv());
    let ip_cfg = TrainConfig { lr: 1e-2, ..cfg };
    let (_, ip_curve) =
        train_interaction(&vocab, &demos, &DataOptions::full(), Some(SubgoalKind::PickupObject), &ip_cfg).expect("ip trains");
    println!("pickup interaction policy\n{}", ip_curve.to_csv());
}
