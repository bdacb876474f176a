//! Acceptance criteria as runnable checks, shared by `compose-agent check`
//! and the `acceptance` integration test.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, path_weighted_success, GroupKey, MetricsRecord};
use super::suite::{run_ablation_suite, run_oracle, AblationReport, DirectionalCheck, SuiteConfig};
use super::zoo::{TrainingData, Variant, ZooConfig};
use super::EvalError;
use crate::controller::EpisodeConfig;
use crate::expert::{generate_dataset, Dataset, DatasetConfig, ExpertTrajectory, Split};
use crate::lang::Vocabulary;
use crate::policies::{
    detect_deadlock, oem_examples, pcc_examples, train_oem, train_pcc, CellDims, LanguageMode, LinearClassifier,
    RecurrentPolicyCell, SparseVec, StepInput, StepTarget,
};
use crate::tasks::TaskType;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {} ({:.1}s)", self.id, self.name, self.detail, self.seconds)
    }
}

fn timed(id: u8, name: &str, f: impl FnOnce() -> (bool, String)) -> CriterionResult {
    let t = Instant::now();
    let (passed, detail) = f();
    CriterionResult { id, name: name.to_string(), passed, detail, seconds: t.elapsed().as_secs_f64() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceConfig {
    pub dataset: DatasetConfig,
    /// Tasks per scene of the classifier corpus.
    pub corpus_tasks_per_scene: usize,
    pub suite: SuiteConfig,
    pub deadlock_sequences: usize,
    pub gradient_draws: usize,
    pub metric_trials: usize,
    pub min_checked_traces: usize,
    pub seed: u64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig {
            dataset: DatasetConfig::default(),
            corpus_tasks_per_scene: ZooConfig::default().corpus_tasks_per_scene,
            suite: SuiteConfig { variants: Variant::ALL.to_vec(), loop_study: true, ..SuiteConfig::default() },
            deadlock_sequences: 1000,
            gradient_draws: 20,
            metric_trials: 500,
            min_checked_traces: 1000,
            seed: 0,
        }
    }
}

/// Datasets every criterion draws from.
pub struct AcceptanceData {
    pub dataset: Dataset,
    pub corpus: Dataset,
}

impl AcceptanceData {
    pub fn generate(cfg: &AcceptanceConfig) -> Result<Self, EvalError> {
        let gen = |c: &DatasetConfig| generate_dataset(c).map_err(|e| EvalError::Training(e.to_string()));
        let dataset = gen(&cfg.dataset)?;
        let corpus = gen(&DatasetConfig { tasks_per_scene: cfg.corpus_tasks_per_scene, ..cfg.dataset.clone() })?;
        Ok(AcceptanceData { dataset, corpus })
    }

    pub fn training(&self, world: WorldConfig) -> Result<TrainingData, EvalError> {
        TrainingData::new(&self.dataset, &self.corpus, world)
    }
}

/// Expert replay on every generated task, single-threaded.
pub fn oracle_completeness(dataset: &Dataset) -> CriterionResult {
    timed(1, "oracle completeness", || {
        let t = Instant::now();
        let mut metrics = Vec::new();
        for split in Split::ALL {
            match run_oracle(dataset, split, &EpisodeConfig::default(), 1) {
                Ok(r) => metrics.extend(r.into_iter().map(|e| e.metrics)),
                Err(e) => return (false, e.to_string()),
            }
        }
        let secs = t.elapsed().as_secs_f64();
        let Ok(rows) = aggregate(&metrics, &[]) else {
            return (false, "no episodes".into());
        };
        let all = &rows[0];
        let types = TaskType::ALL.iter().filter(|t| metrics.iter().any(|m| m.task_type == **t)).count();
        let passed = metrics.len() >= 500 && types == 7 && all.sr == 1.0 && all.gc == 1.0 && all.plwsr == 1.0 && secs < 60.0;
        let detail = format!(
            "{} tasks, {types} task types, SR {:.3} GC {:.3} PLWSR {:.3}, {secs:.1}s",
            metrics.len(),
            all.sr,
            all.gc,
            all.plwsr
        );
        (passed, detail)
    })
}

fn held_out(corpus: &Dataset) -> Vec<&ExpertTrajectory> {
    corpus.records.iter().filter(|r| r.split != Split::Train).map(|r| &r.trajectory).collect()
}

fn train_split(corpus: &Dataset) -> Vec<&ExpertTrajectory> {
    corpus.split(Split::Train).map(|r| &r.trajectory).collect()
}

/// Held-out instruction-to-subgoal accuracy of the subgoal classifier.
pub fn pcc_accuracy(corpus: &Dataset, cfg: &ZooConfig) -> CriterionResult {
    timed(2, "subgoal classifier accuracy", || {
        let vocab = Vocabulary::from_templates();
        let train = pcc_examples(&vocab, train_split(corpus));
        let valid = pcc_examples(&vocab, held_out(corpus));
        let t = Instant::now();
        let clf = match train_pcc(&vocab, &train, &[], &cfg.lang) {
            Ok((m, _)) => m,
            Err(e) => return (false, e.to_string()),
        };
        let secs = t.elapsed().as_secs_f64();
        let acc = clf.clf.evaluate(&valid).1;
        let passed = acc >= 0.985 && secs < 120.0;
        (passed, format!("held-out accuracy {:.4} on {} instructions, trained in {secs:.1}s", acc, valid.len()))
    })
}

/// Held-out target-class accuracy of the object encoder on paired instructions.
pub fn oem_accuracy(corpus: &Dataset, cfg: &ZooConfig) -> CriterionResult {
    timed(3, "object encoder accuracy", || {
        let vocab = Vocabulary::from_templates();
        let train = oem_examples(&vocab, train_split(corpus), LanguageMode::Full);
        let valid = oem_examples(&vocab, held_out(corpus), LanguageMode::Full);
        let enc = match train_oem(&vocab, &train, &[], &cfg.lang) {
            Ok((m, _)) => m,
            Err(e) => return (false, e.to_string()),
        };
        let acc = enc.clf.evaluate(&valid).1;
        (acc >= 0.95, format!("held-out accuracy {:.4} on {} instructions", acc, valid.len()))
    })
}

/// Exhaustive search: some earlier window of `w` fingerprints, ending strictly
/// before the last one, repeats the last window exactly.
pub fn brute_force_deadlock(history: &[u64], w: usize) -> bool {
    let n = history.len();
    if w == 0 || n < w + 1 {
        return false;
    }
    let t = n - 1;
    (w - 1..t).any(|end| (0..w).all(|k| history[end - k] == history[t - k]))
}

pub fn lem_oracle_equivalence(sequences: usize, seed: u64) -> CriterionResult {
    timed(4, "loop detector matches brute force", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatches = 0;
        let mut positives = 0;
        for _ in 0..sequences {
            let len = rng.gen_range(0..=100);
            let alphabet = rng.gen_range(1..=8u64);
            let w = [2, 5, 10][rng.gen_range(0..3)];
            let seq: Vec<u64> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
            let expect = brute_force_deadlock(&seq, w);
            positives += expect as usize;
            if detect_deadlock(&seq, w) != expect {
                mismatches += 1;
            }
        }
        (mismatches == 0, format!("{mismatches} mismatches over {sequences} sequences ({positives} loops)"))
    })
}

fn relative_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
}

fn worst_fd_error(params: &mut [f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let keep = params[i];
        params[i] = keep + eps;
        let up = loss(params);
        params[i] = keep - eps;
        let down = loss(params);
        params[i] = keep;
        worst = worst.max(relative_error((up - down) / (2.0 * eps), analytic[i]));
    }
    worst
}

fn random_sparse(rng: &mut ChaCha8Rng, dim: usize, density: f64) -> SparseVec {
    let mut v = SparseVec::new();
    for j in 0..dim as u32 {
        if rng.gen_bool(density) {
            v.push((j, rng.gen_range(-1.0..1.0)));
        }
    }
    v
}

fn random_cell_draw(rng: &mut ChaCha8Rng) -> (RecurrentPolicyCell, Vec<(StepInput, StepTarget)>) {
    let dims = CellDims {
        views: rng.gen_range(1..=3),
        view_dim: rng.gen_range(2..=5),
        gate_in: rng.gen_range(1..=3),
        extra: rng.gen_range(1..=4),
        hidden: rng.gen_range(1..=4),
        actions: rng.gen_range(2..=4),
        class_heads: rng.gen_range(0..=2),
        classes: rng.gen_range(2..=4),
        progress: rng.gen_bool(0.5),
    };
    let mut cell = RecurrentPolicyCell::zeros(dims);
    cell.params.iter_mut().for_each(|p| *p = rng.gen_range(-0.5..0.5));
    let steps = rng.gen_range(1..=5);
    let seq = (0..steps)
        .map(|t| {
            let views = (0..dims.views).map(|_| random_sparse(rng, dims.view_dim, 0.6)).collect();
            let gate = vec![(rng.gen_range(0..dims.gate_in) as u32, rng.gen_range(0.5..1.5))];
            let extra = random_sparse(rng, dims.extra, 0.5);
            let head = if dims.class_heads == 0 { 0 } else { t % dims.class_heads };
            let target = StepTarget {
                action: rng.gen_bool(0.8).then(|| rng.gen_range(0..dims.actions)),
                class: (dims.class_heads > 0 && rng.gen_bool(0.6)).then(|| rng.gen_range(0..dims.classes)),
                progress: dims.progress.then(|| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]),
            };
            (StepInput { views, gate, extra, head }, target)
        })
        .collect();
    (cell, seq)
}

/// Central differences against analytic gradients on random draws of both trainable models.
pub fn gradient_check(draws: usize, seed: u64) -> CriterionResult {
    timed(6, "analytic gradients match finite differences", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_linear, mut worst_cell): (f64, f64) = (0.0, 0.0);
        for _ in 0..draws {
            let n_in = rng.gen_range(1..=6);
            let n_out = rng.gen_range(2..=5);
            let mut clf = LinearClassifier::random(n_in, n_out, 0.5, rng.gen());
            let data: Vec<(Vec<f64>, usize)> = (0..rng.gen_range(1..=4))
                .map(|_| ((0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0..n_out)))
                .collect();
            let batch: Vec<(&[f64], usize)> = data.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
            let mut grad = vec![0.0; clf.params.len()];
            clf.loss_and_grad(&batch, &mut grad);
            let shape = (n_in, n_out);
            let mut params = clf.params.clone();
            let e = worst_fd_error(&mut params, &grad, |p| {
                clf.params.copy_from_slice(p);
                let mut scratch = vec![0.0; p.len()];
                clf.loss_and_grad(&batch, &mut scratch)
            });
            debug_assert_eq!((clf.n_in, clf.n_out), shape);
            worst_linear = worst_linear.max(e);

            let (mut cell, seq) = random_cell_draw(&mut rng);
            let mut grad = vec![0.0; cell.params.len()];
            cell.sequence_loss_grad(&seq, Some(&mut grad));
            let mut params = cell.params.clone();
            let e = worst_fd_error(&mut params, &grad, |p| {
                cell.params.copy_from_slice(p);
                cell.sequence_loss_grad(&seq, None).loss
            });
            worst_cell = worst_cell.max(e);
        }
        let passed = worst_linear < 1e-4 && worst_cell < 1e-4;
        (passed, format!("{draws} draws; worst relative error linear {worst_linear:.2e}, recurrent cell {worst_cell:.2e}"))
    })
}

fn random_metrics(rng: &mut ChaCha8Rng, i: usize) -> MetricsRecord {
    let l = rng.gen_range(1..200);
    let p = rng.gen_range(0..400);
    let success = rng.gen_bool(0.4);
    let total = rng.gen_range(1..=6);
    let satisfied = if success { total } else { rng.gen_range(0..total) };
    MetricsRecord {
        episode_id: format!("e{i}"),
        split: Split::ALL[rng.gen_range(0..3)],
        task_type: TaskType::ALL[rng.gen_range(0..7)],
        success,
        expert_length: l,
        agent_length: p,
        plwsr: path_weighted_success(success, l, p),
        gc_satisfied: satisfied,
        gc_total: total,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Per-episode formula and grouped aggregation against direct recomputation.
pub fn metric_algebra(trials: usize, seed: u64) -> CriterionResult {
    timed(9, "metric algebra", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = Vec::new();
        let mut episodes = 0;
        for trial in 0..trials {
            let n = rng.gen_range(1..60);
            let recs: Vec<MetricsRecord> = (0..n).map(|i| random_metrics(&mut rng, i)).collect();
            episodes += n;
            for r in &recs {
                let s = if r.success { 1.0 } else { 0.0 };
                let expect = s * r.expert_length as f64 / r.agent_length.max(r.expert_length) as f64;
                if !close(r.plwsr, expect) || r.plwsr > s {
                    failures.push(format!("trial {trial} {}: plwsr {}", r.episode_id, r.plwsr));
                }
            }
            let rows = match aggregate(&recs, &[GroupKey::Split, GroupKey::TaskType]) {
                Ok(rows) => rows,
                Err(e) => {
                    failures.push(e.to_string());
                    continue;
                }
            };
            for row in rows.iter().filter(|r| r.episodes > 0) {
                let group: Vec<&MetricsRecord> = recs
                    .iter()
                    .filter(|m| row.split.is_none_or(|s| s == m.split) && row.task_type.is_none_or(|t| t == m.task_type))
                    .collect();
                let k = group.len() as f64;
                let sr = group.iter().filter(|m| m.success).count() as f64 / k;
                let pl = group.iter().map(|m| m.plwsr).sum::<f64>() / k;
                let sat: usize = group.iter().map(|m| m.gc_satisfied).sum();
                let tot: usize = group.iter().map(|m| m.gc_total).sum();
                let gc = sat as f64 / tot as f64;
                if group.len() != row.episodes || !close(row.sr, sr) || !close(row.plwsr, pl) || !close(row.gc, gc) {
                    failures.push(format!("trial {trial} group {}", row.label()));
                }
            }
        }
        let detail = match failures.first() {
            None => format!("{trials} random record sets, {episodes} episodes, all consistent"),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        };
        (failures.is_empty(), detail)
    })
}

fn from_checks(id: u8, name: &str, checks: &[&DirectionalCheck], seconds: f64) -> CriterionResult {
    let passed = !checks.is_empty() && checks.iter().all(|c| c.holds);
    let detail = if checks.is_empty() {
        "variants not evaluated".to_string()
    } else {
        checks
            .iter()
            .map(|c| format!("{}{}: {}", if c.holds { "" } else { "NOT " }, c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    };
    CriterionResult { id, name: name.to_string(), passed, detail, seconds }
}

fn find<'a>(report: &'a AblationReport, names: &[&str]) -> Vec<&'a DirectionalCheck> {
    report.checks.iter().filter(|c| names.contains(&c.name.as_str())).collect()
}

/// Criteria read off one ablation suite run: loop trap, hierarchy versus flat,
/// component ordering, control-flow invariants and input ablations.
pub fn suite_criteria(report: &AblationReport, min_checked: usize, seconds: f64) -> Vec<CriterionResult> {
    let loop_check = report.loop_study.as_ref().map(|s| s.check());
    let mut out = vec![from_checks(5, "loop escape on a forced rotation loop", &loop_check.iter().collect::<Vec<_>>(), seconds)];
    let mut flat = find(report, &["full > flat", "hierarchical successful episodes no longer than flat"]);
    if flat.len() < 2 {
        flat.clear();
    }
    out.push(from_checks(7, "hierarchy beats flat", &flat, seconds));
    let components = find(report, &["full > no_oem", "full > flat", "full > no_mip", "full > flat_single_head", "full > no_oem_no_mip"]);
    out.push(from_checks(8, "component ablation ordering", &components, seconds));
    let n = report.hierarchical_episodes_checked;
    let v = report.invariant_violations.len();
    out.push(CriterionResult {
        id: 10,
        name: "control-flow invariants".into(),
        passed: n >= min_checked && v == 0,
        detail: match report.invariant_violations.first() {
            None => format!("{n} hierarchical traces checked, no violations"),
            Some(f) => format!("{v} of {n} traces violate, first: {f}"),
        },
        seconds,
    });
    let inputs = find(report, &["ego_only < full", "no_language << full", "no_vision ~ 0", "goal_only << full"]);
    out.push(from_checks(11, "input ablation ordering", &if inputs.len() == 4 { inputs } else { Vec::new() }, seconds));
    out
}

pub fn run_suite(cfg: &AcceptanceConfig, data: &AcceptanceData) -> Result<(AblationReport, f64), EvalError> {
    let t = Instant::now();
    let training = data.training(cfg.suite.episode.world)?;
    let report = run_ablation_suite(&cfg.suite, &training, &data.dataset)?;
    Ok((report, t.elapsed().as_secs_f64()))
}

/// Every criterion in order.
pub fn run_all(cfg: &AcceptanceConfig) -> Result<(Vec<CriterionResult>, AblationReport), EvalError> {
    let data = AcceptanceData::generate(cfg)?;
    let mut out = vec![
        oracle_completeness(&data.dataset),
        pcc_accuracy(&data.corpus, &cfg.suite.zoo),
        oem_accuracy(&data.corpus, &cfg.suite.zoo),
        lem_oracle_equivalence(cfg.deadlock_sequences, cfg.seed),
        gradient_check(cfg.gradient_draws, cfg.seed),
        metric_algebra(cfg.metric_trials, cfg.seed),
    ];
    let (report, secs) = run_suite(cfg, &data)?;
    out.extend(suite_criteria(&report, cfg.min_checked_traces, secs));
    out.sort_by_key(|c| c.id);
    Ok((out, report))
}
