//! Trains the full hierarchical agent and the flat baseline for one seed and compares them.

use compose_agent::controller::EpisodeConfig;
use compose_agent::eval::{aggregate, run_variant, GroupKey, ModelZoo, TrainingData, Variant, ZooConfig};
use compose_agent::expert::{generate_dataset, DatasetConfig, Split};
use compose_agent::world::WorldConfig;

fn main() {
    env_logger::init();
    let zoo_cfg = ZooConfig::default();
    let ds = generate_dataset(&DatasetConfig::default()).expect("dataset");
    let corpus = generate_dataset(&DatasetConfig { tasks_per_scene: zoo_cfg.corpus_tasks_per_scene, ..Default::default() })
        .expect("corpus");
    let data = TrainingData::new(&ds, &corpus, WorldConfig::default()).expect("demonstrations");
    let zoo = ModelZoo::train(&data, &[Variant::Full, Variant::Flat], &zoo_cfg, 0).expect("models");
    for v in [Variant::Full, Variant::Flat] {
        let results = run_variant(&zoo, v, &ds, Split::ValidUnseen, &EpisodeConfig::default(), 1).expect("episodes");
        let metrics: Vec<_> = results.into_iter().map(|r| r.metrics).collect();
        println!("{v}");
        for row in aggregate(&metrics, &[GroupKey::TaskType]).expect("rows") {
            println!("  {:<28} n={:<3} SR {:.3} PLWSR {:.3} GC {:.3}", row.label(), row.episodes, row.sr, row.plwsr, row.gc);
        }
    }
}
