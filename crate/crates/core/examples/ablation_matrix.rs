//! Runs a reduced ablation matrix (two seeds, component variants) and prints the ordering checks.

use compose_agent::eval::{run_ablation_suite, SuiteConfig, TrainingData, Variant, ZooConfig};
use compose_agent::expert::{generate_dataset, DatasetConfig};
use compose_agent::world::WorldConfig;

fn main() {
    env_logger::init();
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2u64);
    let zoo = ZooConfig::default();
    let ds = generate_dataset(&DatasetConfig::default()).expect("dataset");
    let corpus =
        generate_dataset(&DatasetConfig { tasks_per_scene: zoo.corpus_tasks_per_scene, ..Default::default() }).expect("corpus");
    let data = TrainingData::new(&ds, &corpus, WorldConfig::default()).expect("demonstrations");
    let cfg = SuiteConfig { variants: Variant::COMPONENTS.to_vec(), seeds: (0..seeds).collect(), zoo, ..SuiteConfig::default() };
    let report = run_ablation_suite(&cfg, &data, &ds).expect("suite");
    print!("{}", report.render());
}
