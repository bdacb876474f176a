use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, compute_episode_metrics, MetricsRecord};
use super::zoo::{ModelZoo, TrainingData, Variant, ZooConfig};
use super::EvalError;
use crate::controller::{
    check_trace_invariants, run_episode, run_flat_episode, AblationFlags, ControllerError, EpisodeConfig, EpisodePlan,
    EpisodeSetup, EpisodeTrace, HierarchicalAgent, OracleAgent, PolicyId, StepQuery, TransferMode,
};
use crate::expert::{Dataset, DatasetRecord, Instructions, Split};
use crate::policies::{InteractionPolicyState, NavPolicyState};
use crate::tasks::SubgoalKind;
use crate::world::{NavAction, ObjectClass, Simulator, WorldConfig};

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub metrics: MetricsRecord,
    pub trace: EpisodeTrace,
}

/// Per-episode seed, independent of scheduling.
pub fn episode_seed(base: u64, episode_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in episode_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Runs `f` over the records on up to `jobs` threads; results keep record order.
pub fn run_records<F>(dataset: &Dataset, records: &[&DatasetRecord], jobs: usize, f: F) -> Result<Vec<EpisodeResult>, EvalError>
where
    F: Fn(&EpisodeSetup, &DatasetRecord) -> Result<EpisodeTrace, ControllerError> + Sync,
{
    let one = |r: &DatasetRecord| -> Result<EpisodeResult, EvalError> {
        let scene = dataset.scene(r.scene_seed).ok_or_else(|| EvalError::MissingScene(r.id.clone()))?;
        let setup = EpisodeSetup { id: &r.id, scene, start: r.trajectory.start, instructions: &r.trajectory.instructions };
        let trace = f(&setup, r)?;
        Ok(EpisodeResult { metrics: compute_episode_metrics(&trace, r)?, trace })
    };
    let jobs = jobs.max(1).min(records.len().max(1));
    if jobs == 1 {
        return records.iter().map(|r| one(r)).collect();
    }
    let chunk = records.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<EpisodeResult>, EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            records.chunks(chunk).map(|c| s.spawn(|| c.iter().map(|r| one(r)).collect::<Result<Vec<_>, _>>())).collect();
        handles.into_iter().map(|h| h.join().expect("episode worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(records.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Expert replay through the controller.
pub fn run_oracle(dataset: &Dataset, split: Split, base: &EpisodeConfig, jobs: usize) -> Result<Vec<EpisodeResult>, EvalError> {
    let records: Vec<&DatasetRecord> = dataset.split(split).collect();
    let cfg = EpisodeConfig { transfer_mode: TransferMode::TokenOnly, flags: AblationFlags::default(), lem_enabled: false, ..*base };
    run_records(dataset, &records, jobs, |setup, r| {
        let c = EpisodeConfig { seed: episode_seed(base.seed, &r.id), ..cfg };
        run_episode(setup, &OracleAgent { trajectory: &r.trajectory }, &c)
    })
}

pub fn run_variant(
    zoo: &ModelZoo,
    variant: Variant,
    dataset: &Dataset,
    split: Split,
    base: &EpisodeConfig,
    jobs: usize,
) -> Result<Vec<EpisodeResult>, EvalError> {
    let records: Vec<&DatasetRecord> = dataset.split(split).collect();
    run_variant_on(zoo, variant, dataset, &records, base, jobs)
}

pub fn run_variant_on(
    zoo: &ModelZoo,
    variant: Variant,
    dataset: &Dataset,
    records: &[&DatasetRecord],
    base: &EpisodeConfig,
    jobs: usize,
) -> Result<Vec<EpisodeResult>, EvalError> {
    let cfg = EpisodeConfig {
        flags: variant.flags(),
        lem_enabled: base.lem_enabled && variant.lem_enabled(),
        ..*base
    };
    let seeded = |r: &DatasetRecord| EpisodeConfig { seed: episode_seed(base.seed, &r.id), ..cfg };
    if variant.is_flat() {
        let agent = zoo.flat(variant)?;
        run_records(dataset, records, jobs, |s, r| run_flat_episode(s, &agent, &seeded(r)))
    } else {
        let agent = zoo.hierarchical(variant)?;
        run_records(dataset, records, jobs, |s, r| run_episode(s, &agent, &seeded(r)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub flags: AblationFlags,
    pub lem_enabled: bool,
    pub split: Split,
    pub seeds: usize,
    pub sr: Stat,
    pub plwsr: Stat,
    pub gc: Stat,
    /// Mean agent path length of successful episodes.
    pub success_length: Stat,
    pub per_seed_sr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// Loop-escape comparison on episodes where the trained navigator falls into a short cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopStudy {
    pub per_seed: Vec<LoopStudySeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStudySeed {
    pub seed: u64,
    pub episodes: usize,
    pub sr_on: f64,
    pub sr_off: f64,
    pub plwsr_on: f64,
    pub plwsr_off: f64,
}

impl LoopStudy {
    pub fn means(&self) -> (Stat, Stat, Stat, Stat) {
        let col = |f: fn(&LoopStudySeed) -> f64| Stat::of(&self.per_seed.iter().map(f).collect::<Vec<_>>());
        (col(|s| s.sr_on), col(|s| s.sr_off), col(|s| s.plwsr_on), col(|s| s.plwsr_off))
    }

    pub fn check(&self) -> DirectionalCheck {
        let (sr_on, sr_off, pl_on, pl_off) = self.means();
        let n: usize = self.per_seed.iter().map(|s| s.episodes).sum();
        DirectionalCheck {
            name: "loop trap: PLWSR(lem on) > PLWSR(lem off), SR(on) >= SR(off)".into(),
            holds: n > 0 && pl_on.mean > pl_off.mean && sr_on.mean >= sr_off.mean,
            detail: format!(
                "{n} trapped episodes over {} seeds; SR {:.3} vs {:.3}, PLWSR {:.3} vs {:.3}",
                self.per_seed.len(),
                sr_on.mean,
                sr_off.mean,
                pl_on.mean,
                pl_off.mean
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub checks: Vec<DirectionalCheck>,
    /// Variants that could not be evaluated.
    pub gaps: Vec<String>,
    pub hierarchical_episodes_checked: usize,
    pub invariant_violations: Vec<String>,
    pub loop_study: Option<LoopStudy>,
}

impl AblationReport {
    pub fn row(&self, v: Variant, split: Split) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v && r.split == split)
    }

    pub fn all_checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds) && self.invariant_violations.is_empty()
    }

    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant", "split", "seeds", "sr_mean", "sr_sd", "plwsr_mean", "plwsr_sd", "gc_mean", "gc_sd",
            "success_length_mean",
        ])
        .expect("in-memory writer");
        for r in &self.rows {
            w.write_record([
                r.variant.name().to_string(),
                r.split.name().to_string(),
                r.seeds.to_string(),
                format!("{:.4}", r.sr.mean),
                format!("{:.4}", r.sr.sd),
                format!("{:.4}", r.plwsr.mean),
                format!("{:.4}", r.plwsr.sd),
                format!("{:.4}", r.gc.mean),
                format!("{:.4}", r.gc.sd),
                format!("{:.2}", r.success_length.mean),
            ])
            .expect("in-memory writer");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<22} {:<13} {:>15} {:>15} {:>15}\n", "variant", "split", "SR", "PLWSR", "GC");
        for r in &self.rows {
            let f = |s: Stat| format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.sd);
            out.push_str(&format!(
                "{:<22} {:<13} {:>15} {:>15} {:>15}\n",
                r.variant.name(),
                r.split.name(),
                f(r.sr),
                f(r.plwsr),
                f(r.gc)
            ));
        }
        for c in &self.checks {
            out.push_str(&format!("[{}] {}: {}\n", if c.holds { "pass" } else { "FAIL" }, c.name, c.detail));
        }
        for g in &self.gaps {
            out.push_str(&format!("[gap] {g}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub splits: Vec<Split>,
    pub zoo: ZooConfig,
    pub episode: EpisodeConfig,
    pub loop_study: bool,
    pub jobs: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            variants: Variant::COMPONENTS.to_vec(),
            seeds: (0..5).collect(),
            splits: vec![Split::ValidSeen, Split::ValidUnseen],
            zoo: ZooConfig::default(),
            episode: EpisodeConfig::default(),
            loop_study: false,
            jobs: 1,
        }
    }
}

/// Wraps an agent so that two adjacent start-pose observations force a rotation loop.
///
/// At the first observation the navigator turns right, at the second it turns
/// left, so without intervention the episode alternates between them forever.
pub struct LoopTrap<'a, A: ?Sized> {
    pub inner: &'a A,
    pub trap: [u64; 2],
}

impl<'a, A: ?Sized> LoopTrap<'a, A> {
    /// Trap at the start pose of `record`, or `None` when the two views coincide.
    pub fn at_start(inner: &'a A, dataset: &Dataset, record: &DatasetRecord, world: WorldConfig) -> Option<Self> {
        let scene = dataset.scene(record.scene_seed)?;
        let mut sim = Simulator::new(scene.clone(), record.trajectory.start, world);
        let a = sim.observe().fingerprint;
        sim.navigate(NavAction::RotateRight);
        let b = sim.observe().fingerprint;
        (a != b).then_some(LoopTrap { inner, trap: [a, b] })
    }
}

impl<A: HierarchicalAgent + ?Sized> HierarchicalAgent for LoopTrap<'_, A> {
    fn plan(&self, ins: &Instructions, flags: &AblationFlags) -> EpisodePlan {
        self.inner.plan(ins, flags)
    }

    fn nav_initial_state(&self) -> NavPolicyState {
        self.inner.nav_initial_state()
    }

    fn nav_step(&self, plan: &EpisodePlan, state: &mut NavPolicyState, q: &StepQuery) -> usize {
        let proposed = self.inner.nav_step(plan, state, q);
        let forced = match q.obs.fingerprint {
            f if f == self.trap[0] => NavAction::RotateRight,
            f if f == self.trap[1] => NavAction::RotateLeft,
            _ => return proposed,
        };
        state.prev_action = Some(forced.index());
        forced.index()
    }

    fn ip_policy(&self, kind: SubgoalKind) -> Option<PolicyId> {
        self.inner.ip_policy(kind)
    }

    fn ip_initial_state(&self, kind: SubgoalKind) -> InteractionPolicyState {
        self.inner.ip_initial_state(kind)
    }

    fn ip_step(&self, kind: SubgoalKind, plan: &EpisodePlan, state: &mut InteractionPolicyState, q: &StepQuery) -> (usize, ObjectClass) {
        self.inner.ip_step(kind, plan, state, q)
    }
}

/// Full agent with and without loop escape on trapped episodes.
pub fn loop_study_seed(zoo: &ModelZoo, dataset: &Dataset, splits: &[Split], base: &EpisodeConfig, jobs: usize) -> Result<LoopStudySeed, EvalError> {
    let agent = zoo.hierarchical(Variant::Full)?;
    // Episodes whose first navigation subgoal actually needs to move.
    let records: Vec<&DatasetRecord> = splits
        .iter()
        .flat_map(|&s| dataset.split(s))
        .filter(|r| r.trajectory.segment(0).count() > 1)
        .filter(|r| LoopTrap::at_start(&agent, dataset, r, base.world).is_some())
        .collect();
    let run = |lem: bool| {
        let cfg = EpisodeConfig { flags: AblationFlags::default(), lem_enabled: lem, ..*base };
        run_records(dataset, &records, jobs, |s, r| {
            let trap = LoopTrap::at_start(&agent, dataset, r, base.world).expect("filtered above");
            run_episode(s, &trap, &EpisodeConfig { seed: episode_seed(base.seed, &r.id), ..cfg })
        })
    };
    let (on, off) = (run(true)?, run(false)?);
    let n = records.len().max(1) as f64;
    let sr = |v: &[EpisodeResult]| v.iter().filter(|r| r.metrics.success).count() as f64 / n;
    let pl = |v: &[EpisodeResult]| v.iter().map(|r| r.metrics.plwsr).sum::<f64>() / n;
    Ok(LoopStudySeed {
        seed: zoo.seed,
        episodes: records.len(),
        sr_on: sr(&on),
        sr_off: sr(&off),
        plwsr_on: pl(&on),
        plwsr_off: pl(&off),
    })
}

/// Trains one model zoo per seed, evaluates every variant, and reports mean ± sd rows.
pub fn run_ablation_suite(cfg: &SuiteConfig, data: &TrainingData, dataset: &Dataset) -> Result<AblationReport, EvalError> {
    let mut report = AblationReport::default();
    let mut per: Vec<(Variant, Split, Vec<super::metrics::AggregateRow>)> = Vec::new();
    let mut missing = std::collections::BTreeSet::new();
    let mut study = LoopStudy::default();
    let base = EpisodeConfig { world: data.world, ..cfg.episode };
    for &seed in &cfg.seeds {
        let zoo = ModelZoo::train(data, &cfg.variants, &cfg.zoo, seed)?;
        for &v in &cfg.variants {
            for &split in &cfg.splits {
                let results = match run_variant(&zoo, v, dataset, split, &base, cfg.jobs) {
                    Err(EvalError::MissingModel(m)) => {
                        missing.insert(m);
                        continue;
                    }
                    other => other?,
                };
                if !v.is_flat() {
                    for r in &results {
                        report.hierarchical_episodes_checked += 1;
                        if let Err(e) = check_trace_invariants(&r.trace) {
                            report.invariant_violations.push(format!("{v} seed {seed} {}: {e}", r.trace.episode_id));
                        }
                    }
                }
                let metrics: Vec<MetricsRecord> = results.into_iter().map(|r| r.metrics).collect();
                if metrics.is_empty() {
                    continue;
                }
                let row = aggregate(&metrics, &[])?.remove(0);
                log::info!("seed {seed} {v} {}: SR {:.3} PLWSR {:.3} GC {:.3}", split.name(), row.sr, row.plwsr, row.gc);
                match per.iter_mut().find(|(pv, ps, _)| *pv == v && *ps == split) {
                    Some((_, _, rows)) => rows.push(row),
                    None => per.push((v, split, vec![row])),
                }
            }
        }
        if cfg.loop_study {
            study.per_seed.push(loop_study_seed(&zoo, dataset, &cfg.splits, &base, cfg.jobs)?);
        }
    }
    for (v, split, rows) in per {
        let col = |f: fn(&super::metrics::AggregateRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let lens: Vec<f64> = rows.iter().filter_map(|r| r.success_length).collect();
        report.rows.push(AblationRow {
            variant: v,
            flags: v.flags(),
            lem_enabled: v.lem_enabled(),
            split,
            seeds: rows.len(),
            sr: Stat::of(&col(|r| r.sr)),
            plwsr: Stat::of(&col(|r| r.plwsr)),
            gc: Stat::of(&col(|r| r.gc)),
            success_length: Stat::of(&lens),
            per_seed_sr: col(|r| r.sr),
        });
    }
    report.gaps = missing.into_iter().map(|m| format!("no trained model for variant {m}")).collect();
    report.checks = directional_checks(&report, Split::ValidUnseen);
    if cfg.loop_study {
        report.checks.push(study.check());
        report.loop_study = Some(study);
    }
    Ok(report)
}

/// Orderings the ablation matrix is expected to reproduce on `split`.
pub fn directional_checks(report: &AblationReport, split: Split) -> Vec<DirectionalCheck> {
    let mut out = Vec::new();
    let Some(full) = report.row(Variant::Full, split) else {
        return out;
    };
    let sr = full.sr.mean;
    let mut cmp = |name: String, other: Variant, holds: &dyn Fn(f64) -> bool, rule: &str| {
        if let Some(r) = report.row(other, split) {
            out.push(DirectionalCheck {
                name,
                holds: holds(r.sr.mean),
                detail: format!("full SR {:.3}, {} SR {:.3} ({rule})", sr, other.name(), r.sr.mean),
            });
        }
    };
    for v in [Variant::NoOem, Variant::Flat, Variant::NoMip, Variant::FlatSingleHead, Variant::NoOemNoMip] {
        cmp(format!("full > {v}"), v, &|o| sr > o, "strictly lower");
    }
    cmp("ego_only < full".into(), Variant::EgoOnly, &|o| o < sr, "strictly lower");
    cmp("no_language << full".into(), Variant::NoLanguage, &|o| o <= 0.5 * sr, "at most half");
    cmp("no_vision ~ 0".into(), Variant::NoVision, &|o| o <= 0.05, "at most 0.05");
    cmp("goal_only << full".into(), Variant::GoalOnly, &|o| o <= 0.5 * sr, "at most half");
    if let Some(flat) = report.row(Variant::Flat, split) {
        let (h, f) = (full.success_length.mean, flat.success_length.mean);
        out.push(DirectionalCheck {
            name: "hierarchical successful episodes no longer than flat".into(),
            holds: full.success_length.mean > 0.0 && flat.success_length.mean > 0.0 && h <= f,
            detail: format!("mean successful length {h:.2} vs {f:.2}"),
        });
    }
    if let Some(off) = report.row(Variant::LemOff, split) {
        out.push(DirectionalCheck {
            name: "lem on: PLWSR above lem off".into(),
            holds: full.plwsr.mean > off.plwsr.mean,
            detail: format!("PLWSR {:.3} vs {:.3}, SR {:.3} vs {:.3}", full.plwsr.mean, off.plwsr.mean, sr, off.sr.mean),
        });
    }
    out
}
