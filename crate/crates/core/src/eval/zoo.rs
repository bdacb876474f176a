use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::controller::{AblationFlags, FlatModels, HierarchicalModels};
use crate::expert::{Dataset, ExpertTrajectory, Split};
use crate::lang::Vocabulary;
use crate::policies::{
    oem_examples, pcc_examples, train_flat, train_interaction, train_nav, train_oem, train_pcc, DataOptions,
    Demonstration, FlatPolicy, InteractionPolicy, LanguageMode, NavPolicy, ObjectEncoder, SubgoalClassifier,
    TrainConfig, ViewMask,
};
use crate::tasks::SubgoalKind;
use crate::world::WorldConfig;

/// One agent configuration of the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoOem,
    Flat,
    NoMip,
    FlatSingleHead,
    NoOemNoMip,
    LemOff,
    EgoOnly,
    NoLanguage,
    NoVision,
    GoalOnly,
    NavInstructionOnly,
}

impl Variant {
    pub const ALL: [Variant; 12] = [
        Variant::Full,
        Variant::NoOem,
        Variant::Flat,
        Variant::NoMip,
        Variant::FlatSingleHead,
        Variant::NoOemNoMip,
        Variant::LemOff,
        Variant::EgoOnly,
        Variant::NoLanguage,
        Variant::NoVision,
        Variant::GoalOnly,
        Variant::NavInstructionOnly,
    ];

    /// The component rows (a) to (f).
    pub const COMPONENTS: [Variant; 6] =
        [Variant::Full, Variant::NoOem, Variant::Flat, Variant::NoMip, Variant::FlatSingleHead, Variant::NoOemNoMip];

    pub const INPUTS: [Variant; 5] =
        [Variant::Full, Variant::EgoOnly, Variant::NoLanguage, Variant::NoVision, Variant::GoalOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoOem => "no_oem",
            Variant::Flat => "flat",
            Variant::NoMip => "no_mip",
            Variant::FlatSingleHead => "flat_single_head",
            Variant::NoOemNoMip => "no_oem_no_mip",
            Variant::LemOff => "lem_off",
            Variant::EgoOnly => "ego_only",
            Variant::NoLanguage => "no_language",
            Variant::NoVision => "no_vision",
            Variant::GoalOnly => "goal_only",
            Variant::NavInstructionOnly => "nav_instruction_only",
        }
    }

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            Variant::Full | Variant::LemOff => {}
            Variant::NoOem => f.no_oem = true,
            Variant::Flat => f.no_nih_flat = true,
            Variant::NoMip => f.no_mip_single_ip = true,
            Variant::FlatSingleHead => {
                f.no_nih_flat = true;
                f.no_mip_single_ip = true;
            }
            Variant::NoOemNoMip => {
                f.no_oem = true;
                f.no_mip_single_ip = true;
            }
            Variant::EgoOnly => f.ego_only = true,
            Variant::NoLanguage => f.no_language = true,
            Variant::NoVision => f.no_vision = true,
            Variant::GoalOnly => f.goal_only = true,
            Variant::NavInstructionOnly => f.nav_instruction_only = true,
        }
        f
    }

    pub fn lem_enabled(self) -> bool {
        self != Variant::LemOff
    }

    pub fn is_flat(self) -> bool {
        self.flags().no_nih_flat
    }

    fn requirements(self) -> Requirements {
        let f = self.flags();
        if f.no_nih_flat {
            return Requirements { nav: None, ips: None, flat_heads: Some(if f.no_mip_single_ip { 1 } else { 7 }) };
        }
        let nav = if f.no_oem {
            Inputs::NoObject
        } else {
            match self {
                Variant::EgoOnly => Inputs::EgoOnly,
                Variant::NoLanguage => Inputs::NoLanguage,
                Variant::NoVision => Inputs::NoVision,
                Variant::GoalOnly => Inputs::GoalOnly,
                Variant::NavInstructionOnly => Inputs::InstructionOnly,
                _ => Inputs::Full,
            }
        };
        let ips = if f.no_mip_single_ip {
            IpSet::Shared
        } else {
            match nav {
                Inputs::NoLanguage | Inputs::NoVision | Inputs::GoalOnly => IpSet::PerKind(nav),
                _ => IpSet::PerKind(Inputs::Full),
            }
        };
        Requirements { nav: Some(nav), ips: Some(ips), flat_heads: None }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Input regime a policy was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inputs {
    Full,
    NoObject,
    EgoOnly,
    NoLanguage,
    NoVision,
    GoalOnly,
    InstructionOnly,
}

impl Inputs {
    pub fn nav_options(self) -> DataOptions {
        let full = DataOptions::full();
        match self {
            Inputs::Full => full,
            Inputs::NoObject => DataOptions { use_object: false, ..full },
            Inputs::EgoOnly => DataOptions { views: ViewMask::EgoOnly, ..full },
            Inputs::NoLanguage => DataOptions { language: LanguageMode::Zero, use_object: false, ..full },
            Inputs::NoVision => DataOptions { views: ViewMask::None, ..full },
            Inputs::GoalOnly => DataOptions { language: LanguageMode::GoalOnly, ..full },
            Inputs::InstructionOnly => DataOptions { language: LanguageMode::InstructionOnly, use_object: false, ..full },
        }
    }

    pub fn ip_options(self) -> DataOptions {
        let mut o = self.nav_options();
        o.use_object = false;
        if o.language == LanguageMode::InstructionOnly {
            o.language = LanguageMode::Full;
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum IpSet {
    PerKind(Inputs),
    Shared,
}

struct Requirements {
    nav: Option<Inputs>,
    ips: Option<IpSet>,
    flat_heads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooConfig {
    /// Classifier training (subgoal classifier and object encoder).
    pub lang: TrainConfig,
    pub nav: TrainConfig,
    pub ip: TrainConfig,
    pub flat: TrainConfig,
    /// Tasks per scene of the instruction corpus the classifiers train on.
    pub corpus_tasks_per_scene: usize,
}

impl Default for ZooConfig {
    fn default() -> Self {
        let policy = TrainConfig { lr: 3e-3, epochs: 10, batch: 8, track_valid: false, ..TrainConfig::default() };
        ZooConfig {
            lang: TrainConfig { lr: 1e-2, epochs: 15, batch: 32, track_valid: false, ..TrainConfig::default() },
            nav: policy.clone(),
            ip: TrainConfig { lr: 1e-2, ..policy.clone() },
            flat: policy,
            corpus_tasks_per_scene: 60,
        }
    }
}

impl ZooConfig {
    pub fn with_seed(&self, seed: u64) -> ZooConfig {
        let mut c = self.clone();
        for t in [&mut c.lang, &mut c.nav, &mut c.ip, &mut c.flat] {
            t.seed = seed;
        }
        c
    }
}

/// Replayed demonstrations shared by every model trained from one dataset.
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub demos: Vec<Demonstration>,
    /// Instruction corpus for the classifiers.
    pub corpus: Vec<ExpertTrajectory>,
    pub world: WorldConfig,
}

impl TrainingData {
    pub fn new(dataset: &Dataset, corpus: &Dataset, world: WorldConfig) -> Result<Self, EvalError> {
        let demos = dataset
            .split(Split::Train)
            .map(|r| {
                let scene = dataset.scene(r.scene_seed).ok_or_else(|| EvalError::MissingScene(r.id.clone()))?;
                Ok(Demonstration::replay(scene, &r.trajectory, &world))
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let corpus = corpus.split(Split::Train).map(|r| r.trajectory.clone()).collect();
        Ok(TrainingData { vocab: Vocabulary::from_templates(), demos, corpus, world })
    }
}

/// Every model the requested variants need, for one seed.
pub struct ModelZoo {
    pub seed: u64,
    pub vocab: Vocabulary,
    pub pcc: SubgoalClassifier,
    pub oem: ObjectEncoder,
    pub navs: BTreeMap<Inputs, NavPolicy>,
    pub ips: BTreeMap<Inputs, Vec<InteractionPolicy>>,
    pub shared_ip: Option<InteractionPolicy>,
    pub flats: BTreeMap<usize, FlatPolicy>,
    pub visibility_range: u8,
}

impl ModelZoo {
    pub fn train(data: &TrainingData, variants: &[Variant], cfg: &ZooConfig, seed: u64) -> Result<Self, EvalError> {
        let cfg = cfg.with_seed(seed);
        let vocab = data.vocab.clone();
        let corpus: Vec<&ExpertTrajectory> = data.corpus.iter().collect();
        let (pcc, _) = train_pcc(&vocab, &pcc_examples(&vocab, corpus.iter().copied()), &[], &cfg.lang)?;
        let (oem, _) =
            train_oem(&vocab, &oem_examples(&vocab, corpus.iter().copied(), LanguageMode::Full), &[], &cfg.lang)?;
        let mut zoo = ModelZoo {
            seed,
            vocab,
            pcc,
            oem,
            navs: BTreeMap::new(),
            ips: BTreeMap::new(),
            shared_ip: None,
            flats: BTreeMap::new(),
            visibility_range: data.world.visibility_range,
        };
        for v in variants {
            let req = v.requirements();
            if let Some(inputs) = req.nav {
                if !zoo.navs.contains_key(&inputs) {
                    log::info!("seed {seed}: training navigation policy ({inputs:?})");
                    let (nav, _) = train_nav(&zoo.vocab, &data.demos, &inputs.nav_options(), &cfg.nav)?;
                    zoo.navs.insert(inputs, nav);
                }
            }
            match req.ips {
                Some(IpSet::PerKind(inputs)) if !zoo.ips.contains_key(&inputs) => {
                    log::info!("seed {seed}: training interaction policies ({inputs:?})");
                    let ips = SubgoalKind::INTERACTIONS
                        .iter()
                        .map(|&k| train_interaction(&zoo.vocab, &data.demos, &inputs.ip_options(), Some(k), &cfg.ip).map(|r| r.0))
                        .collect::<Result<Vec<_>, _>>()?;
                    zoo.ips.insert(inputs, ips);
                }
                Some(IpSet::Shared) if zoo.shared_ip.is_none() => {
                    log::info!("seed {seed}: training the shared interaction policy");
                    let opts = Inputs::Full.ip_options();
                    zoo.shared_ip = Some(train_interaction(&zoo.vocab, &data.demos, &opts, None, &cfg.ip)?.0);
                }
                _ => {}
            }
            if let Some(heads) = req.flat_heads {
                if !zoo.flats.contains_key(&heads) {
                    log::info!("seed {seed}: training flat policy with {heads} class head(s)");
                    let (flat, _) = train_flat(&zoo.vocab, &data.demos, &DataOptions::full(), heads, &cfg.flat)?;
                    zoo.flats.insert(heads, flat);
                }
            }
        }
        Ok(zoo)
    }

    /// The hierarchical agent for `variant`.
    pub fn hierarchical(&self, variant: Variant) -> Result<HierarchicalModels<'_>, EvalError> {
        let req = variant.requirements();
        let gap = || EvalError::MissingModel(variant.name().to_string());
        let nav = self.navs.get(&req.nav.ok_or_else(gap)?).ok_or_else(gap)?;
        let ips: Vec<&InteractionPolicy> = match req.ips.ok_or_else(gap)? {
            IpSet::PerKind(inputs) => self.ips.get(&inputs).ok_or_else(gap)?.iter().collect(),
            IpSet::Shared => vec![self.shared_ip.as_ref().ok_or_else(gap)?],
        };
        Ok(HierarchicalModels {
            vocab: &self.vocab,
            pcc: &self.pcc,
            oem: (!variant.flags().no_oem).then_some(&self.oem),
            nav,
            ips,
            visibility_range: self.visibility_range,
        })
    }

    pub fn flat(&self, variant: Variant) -> Result<FlatModels<'_>, EvalError> {
        let gap = || EvalError::MissingModel(variant.name().to_string());
        let heads = variant.requirements().flat_heads.ok_or_else(gap)?;
        Ok(FlatModels {
            vocab: &self.vocab,
            pcc: &self.pcc,
            oem: &self.oem,
            flat: self.flats.get(&heads).ok_or_else(gap)?,
            visibility_range: self.visibility_range,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn component_rows_toggle_the_expected_parts() {
        assert_eq!(Variant::Full.flags(), AblationFlags::default());
        assert!(Variant::FlatSingleHead.flags().no_nih_flat && Variant::FlatSingleHead.flags().no_mip_single_ip);
        assert!(Variant::NoOemNoMip.flags().no_oem && !Variant::NoOemNoMip.flags().no_nih_flat);
        assert!(!Variant::LemOff.lem_enabled());
        assert_eq!(Variant::NoMip.requirements().ips, Some(IpSet::Shared));
        assert_eq!(Variant::NoOem.requirements().nav, Some(Inputs::NoObject));
        assert_eq!(Variant::FlatSingleHead.requirements().flat_heads, Some(1));
    }
}
