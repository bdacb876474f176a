use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{generate_expert_trajectory, ExpertTrajectory};
use super::ExpertError;
use crate::tasks::{generate_task, TaskType};
use crate::world::{generate_scene, GridScene, SceneGenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValidSeen,
    ValidUnseen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::ValidSeen, Split::ValidUnseen];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValidSeen => "valid_seen",
            Split::ValidUnseen => "valid_unseen",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "seen" | "valid_seen" => Ok(Split::ValidSeen),
            "unseen" | "valid_unseen" => Ok(Split::ValidUnseen),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSplit {
    pub seen: Vec<u64>,
    pub unseen: Vec<u64>,
}

/// Disjoint seen/unseen scene-seed pools.
pub fn split_scene_seeds(num_scenes: usize, seed: u64, unseen_fraction: f64) -> SceneSplit {
    let base = seed.wrapping_mul(100_003);
    let mut seeds: Vec<u64> = (0..num_scenes as u64).map(|i| base + i).collect();
    seeds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED));
    let n_unseen = ((num_scenes as f64) * unseen_fraction).round() as usize;
    let unseen = seeds.split_off(num_scenes - n_unseen.min(num_scenes));
    SceneSplit { seen: seeds, unseen }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_scenes: usize,
    pub tasks_per_scene: usize,
    pub seed: u64,
    pub unseen_fraction: f64,
    pub valid_seen_fraction: f64,
    #[serde(skip)]
    pub scene: SceneGenConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_scenes: 40,
            tasks_per_scene: 14,
            seed: 7,
            unseen_fraction: 0.2,
            valid_seen_fraction: 0.15,
            scene: SceneGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub split: Split,
    pub scene_seed: u64,
    #[serde(flatten)]
    pub trajectory: ExpertTrajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub valid_seen: Vec<String>,
    pub valid_unseen: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenes: Vec<GridScene>,
    pub records: Vec<DatasetRecord>,
    pub manifest: SplitManifest,
}

impl Dataset {
    pub fn scene(&self, seed: u64) -> Option<&GridScene> {
        self.scenes.iter().find(|s| s.seed == seed)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), ExpertError> {
        let io = |e: std::io::Error| ExpertError::Io(format!("{}: {e}", path.display()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(f, "{line}").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    /// Writes `records.jsonl`, `scenes.jsonl` and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ExpertError> {
        let io = |p: &Path, e: std::io::Error| ExpertError::Io(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        self.write_jsonl(&dir.join("records.jsonl"))?;
        let scenes = dir.join("scenes.jsonl");
        let mut text = String::new();
        for s in &self.scenes {
            text.push_str(&serde_json::to_string(s).expect("scenes serialize"));
            text.push('\n');
        }
        std::fs::write(&scenes, text).map_err(|e| io(&scenes, e))?;
        let manifest = dir.join("manifest.json");
        let m = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&manifest, m + "\n").map_err(|e| io(&manifest, e))
    }

    /// Reads a directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Dataset, ExpertError> {
        let records = load_jsonl(&dir.join("records.jsonl"))?;
        let path = dir.join("scenes.jsonl");
        let text = std::fs::read_to_string(&path).map_err(|e| ExpertError::Io(format!("{}: {e}", path.display())))?;
        let scenes = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| ExpertError::Io(format!("{}:{}: {e}", path.display(), n + 1))))
            .collect::<Result<Vec<GridScene>, _>>()?;
        let mut manifest = SplitManifest::default();
        for r in &records {
            match r.split {
                Split::Train => manifest.train.push(r.id.clone()),
                Split::ValidSeen => manifest.valid_seen.push(r.id.clone()),
                Split::ValidUnseen => manifest.valid_unseen.push(r.id.clone()),
            }
        }
        Ok(Dataset { scenes, records, manifest })
    }
}

pub fn load_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, ExpertError> {
    let io = |e: std::io::Error| ExpertError::Io(format!("{}: {e}", path.display()));
    let f = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| ExpertError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Generates scenes, tasks and expert trajectories for every split.
///
/// Task types rotate so each scene contributes a balanced mix; infeasible
/// (scene, type) pairs are skipped.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, ExpertError> {
    let pools = split_scene_seeds(config.num_scenes, config.seed, config.unseen_fraction);
    let mut scenes = Vec::new();
    let mut records = Vec::new();
    let mut manifest = SplitManifest::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xDA7A);
    let mut type_cursor = 0usize;
    let mut all: Vec<(u64, bool)> = pools.seen.iter().map(|&s| (s, true)).collect();
    all.extend(pools.unseen.iter().map(|&s| (s, false)));
    all.sort();
    for (scene_seed, seen) in all {
        let scene = generate_scene(scene_seed, &config.scene).map_err(|e| ExpertError::Io(e.to_string()))?;
        for k in 0..config.tasks_per_scene {
            let task_seed = scene_seed.wrapping_mul(1_000) + k as u64;
            let mut made = None;
            for attempt in 0..TaskType::ALL.len() {
                let t = TaskType::ALL[(type_cursor + attempt) % TaskType::ALL.len()];
                if let Ok(spec) = generate_task(&scene, t, task_seed) {
                    made = Some(spec);
                    break;
                }
            }
            type_cursor += 1;
            let Some(spec) = made else {
                log::warn!("{}: no feasible task for slot {k}", scene.scene_id);
                continue;
            };
            let trajectory = generate_expert_trajectory(&scene, &spec)?;
            let split = if !seen {
                Split::ValidUnseen
            } else if rng.gen_bool(config.valid_seen_fraction) {
                Split::ValidSeen
            } else {
                Split::Train
            };
            let id = format!("{}_t{k:02}", scene.scene_id);
            match split {
                Split::Train => manifest.train.push(id.clone()),
                Split::ValidSeen => manifest.valid_seen.push(id.clone()),
                Split::ValidUnseen => manifest.valid_unseen.push(id.clone()),
            }
            records.push(DatasetRecord { id, split, scene_seed, trajectory });
        }
        scenes.push(scene);
    }
    Ok(Dataset { scenes, records, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_are_disjoint_and_sized() {
        let s = split_scene_seeds(40, 3, 0.2);
        assert_eq!(s.seen.len(), 32);
        assert_eq!(s.unseen.len(), 8);
        assert!(s.seen.iter().all(|x| !s.unseen.contains(x)));
        assert_eq!(s, split_scene_seeds(40, 3, 0.2));
    }

    #[test]
    fn small_dataset_round_trips_through_jsonl() {
        let cfg = DatasetConfig { num_scenes: 5, tasks_per_scene: 3, ..Default::default() };
        let ds = generate_dataset(&cfg).unwrap();
        assert!(!ds.records.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        ds.write_jsonl(&path).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back, ds.records);
        let total = ds.manifest.train.len() + ds.manifest.valid_seen.len() + ds.manifest.valid_unseen.len();
        assert_eq!(total, ds.records.len());
    }

    #[test]
    fn saved_directory_loads_back_identically() {
        let ds = generate_dataset(&DatasetConfig { num_scenes: 4, tasks_per_scene: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.scenes, ds.scenes);
        assert_eq!(back.manifest, ds.manifest);
    }
}
