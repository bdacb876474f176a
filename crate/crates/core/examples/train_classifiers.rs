//! Trains the subgoal classifier and the object encoder and reports held-out accuracy.

use compose_agent::eval::acceptance::{oem_accuracy, pcc_accuracy};
use compose_agent::eval::ZooConfig;
use compose_agent::expert::{generate_dataset, DatasetConfig};

fn main() {
    let zoo = ZooConfig::default();
    let corpus = generate_dataset(&DatasetConfig { tasks_per_scene: zoo.corpus_tasks_per_scene, ..Default::default() })
        .expect("corpus");
    println!("{}", pcc_accuracy(&corpus, &zoo));
    println!("{}", oem_accuracy(&corpus, &zoo));
}
