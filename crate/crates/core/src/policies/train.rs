//! Imitation datasets built by replaying expert trajectories, and the trainers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{RecurrentPolicyCell, SequenceStats, SparseVec, StepInput, StepTarget};
use super::features::{
    featurize, flat_language, ip_language, language_features, nav_language, InputLayout, LanguageMode, StepContext,
    ViewMask,
};
use super::models::{
    FlatPolicy, InteractionPolicy, NavPolicy, ObjectEncoder, SubgoalClassifier, FLAT_STOP, MANIPULATE, STOP,
};
use super::optim::{clip_norm, Adam};
use super::{LossCurve, LossRow, PolicyError, TrainConfig};
use crate::expert::ExpertTrajectory;
use crate::lang::Vocabulary;
use crate::tasks::SubgoalKind;
use crate::world::{Action, GridScene, NavAction, ObjectClass, Pitch, Simulator, WorldConfig};

pub type Sequence = Vec<(StepInput, StepTarget)>;

/// Featurized observation before one expert step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedStep {
    pub views: Vec<SparseVec>,
    pub held: Option<ObjectClass>,
    pub pitch: Pitch,
}

/// An expert trajectory with the observations it passes through.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub trajectory: ExpertTrajectory,
    pub steps: Vec<ReplayedStep>,
}

impl Demonstration {
    pub fn replay(scene: &GridScene, trajectory: &ExpertTrajectory, config: &WorldConfig) -> Self {
        let mut sim = Simulator::new(scene.clone(), trajectory.start, *config);
        let mut steps = Vec::with_capacity(trajectory.steps.len());
        for s in &trajectory.steps {
            let obs = sim.observe();
            steps.push(ReplayedStep {
                views: featurize(&obs, config.visibility_range),
                held: obs.held,
                pitch: sim.pose.pitch,
            });
            sim.execute(s.action, s.target);
        }
        Demonstration { trajectory: trajectory.clone(), steps }
    }
}

/// How demonstrations are turned into policy inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataOptions {
    pub language: LanguageMode,
    pub views: ViewMask,
    pub use_object: bool,
}

impl DataOptions {
    pub fn full() -> Self {
        DataOptions { language: LanguageMode::Full, views: ViewMask::All, use_object: true }
    }
}

fn goto_target(traj: &ExpertTrajectory, i: usize) -> Option<ObjectClass> {
    traj.task.subgoals.get(i).filter(|s| s.kind.is_navigation()).map(|s| s.target_class)
}

fn ctx<'a>(
    st: &'a ReplayedStep,
    lang: &'a SparseVec,
    opts: &DataOptions,
    prev_action: Option<usize>,
    object: Option<ObjectClass>,
    prev_class: Option<ObjectClass>,
    head: usize,
) -> StepContext<'a> {
    StepContext {
        views: &st.views,
        held: st.held,
        lang,
        prev_action,
        object,
        prev_class,
        pitch: st.pitch,
        view_mask: opts.views,
        head,
    }
}

/// One sequence per episode covering every navigation step, MANIPULATE included.
pub fn nav_sequence(vocab: &Vocabulary, demo: &Demonstration, layout: &InputLayout, opts: &DataOptions) -> Sequence {
    let traj = &demo.trajectory;
    let total = traj.steps.len().max(1) as f64;
    let mut out = Sequence::new();
    let mut prev = None;
    for (i, sg) in traj.task.subgoals.iter().enumerate() {
        if !sg.kind.is_navigation() {
            continue;
        }
        let lang = language_features(&nav_language(vocab, &traj.instructions, i, opts.language));
        let object = if opts.use_object { goto_target(traj, i) } else { None };
        let idx: Vec<usize> = (0..traj.steps.len()).filter(|&k| traj.steps[k].subgoal == i).collect();
        let seg_len = idx.len() as f64;
        for (n, &k) in idx.iter().enumerate() {
            let action = match traj.steps[k].action {
                Action::Nav(a) => a.index(),
                _ => MANIPULATE,
            };
            let input = layout.build(&ctx(&demo.steps[k], &lang, opts, prev, object, None, 0));
            let progress = [(n + 1) as f64 / seg_len, (k + 1) as f64 / total];
            out.push((input, StepTarget { action: Some(action), class: None, progress: Some(progress) }));
            prev = Some(action);
        }
    }
    out
}

/// One sequence per interaction segment whose kind matches `kind` (all kinds when `None`).
pub fn ip_sequences(
    vocab: &Vocabulary,
    demo: &Demonstration,
    layout: &InputLayout,
    opts: &DataOptions,
    kind: Option<SubgoalKind>,
) -> Vec<Sequence> {
    let traj = &demo.trajectory;
    let mut out = Vec::new();
    for (i, sg) in traj.task.subgoals.iter().enumerate() {
        if sg.kind.is_navigation() || kind.is_some_and(|k| k != sg.kind) {
            continue;
        }
        let lang = language_features(&ip_language(vocab, &traj.instructions, i, opts.language));
        let mut seq = Sequence::new();
        let (mut prev_a, mut prev_c) = (None, None);
        for k in (0..traj.steps.len()).filter(|&k| traj.steps[k].subgoal == i) {
            let (action, class) = match traj.steps[k].action {
                Action::Interact(a, c) => (a.index(), Some(c)),
                _ => (STOP, None),
            };
            let input = layout.build(&ctx(&demo.steps[k], &lang, opts, prev_a, None, prev_c, 0));
            seq.push((input, StepTarget { action: Some(action), class: class.map(|c| c.index()), progress: None }));
            prev_a = Some(action);
            if class.is_some() {
                prev_c = class;
            }
        }
        out.push(seq);
    }
    out
}

/// Whole episode in the unified action space; MANIPULATE tokens are dropped.
pub fn flat_sequence(vocab: &Vocabulary, demo: &Demonstration, policy: &FlatPolicy, opts: &DataOptions) -> Sequence {
    let traj = &demo.trajectory;
    let lang = language_features(&flat_language(vocab, &traj.instructions, opts.language));
    let mut out = Sequence::new();
    let mut prev = None;
    let mut object = None;
    for (k, step) in traj.steps.iter().enumerate() {
        let sg = &traj.task.subgoals[step.subgoal];
        if sg.kind.is_navigation() {
            object = goto_target(traj, step.subgoal);
        }
        let kind = if sg.kind.is_navigation() {
            traj.task.subgoals.get(step.subgoal + 1).map(|s| s.kind)
        } else {
            Some(sg.kind)
        };
        let (action, class) = match step.action {
            Action::Nav(a) => (a.index(), None),
            Action::Interact(a, c) => (NavAction::ALL.len() + a.index(), Some(c.index())),
            Action::Stop => (FLAT_STOP, None),
            Action::Manipulate => continue,
        };
        let obj = if opts.use_object { object } else { None };
        let input = policy.layout.build(&ctx(&demo.steps[k], &lang, opts, prev, obj, None, policy.head_for(kind)));
        out.push((input, StepTarget { action: Some(action), class, progress: None }));
        prev = Some(action);
    }
    out
}

/// Instruction encodings labelled with their subgoal kind.
pub fn pcc_examples<'a, I: IntoIterator<Item = &'a ExpertTrajectory>>(vocab: &Vocabulary, trajs: I) -> Vec<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    for t in trajs {
        for (text, sg) in t.instructions.steps.iter().zip(&t.task.subgoals) {
            out.push((vocab.encode(text).counts, sg.kind.index()));
        }
    }
    out
}

/// Navigation-subgoal language labelled with the class to locate.
pub fn oem_examples<'a, I: IntoIterator<Item = &'a ExpertTrajectory>>(
    vocab: &Vocabulary,
    trajs: I,
    mode: LanguageMode,
) -> Vec<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    for t in trajs {
        for (i, sg) in t.task.subgoals.iter().enumerate() {
            if sg.kind.is_navigation() {
                out.push((nav_language(vocab, &t.instructions, i, mode).counts, sg.target_class.index()));
            }
        }
    }
    out
}

pub fn train_pcc(
    vocab: &Vocabulary,
    train: &[(Vec<f64>, usize)],
    valid: &[(Vec<f64>, usize)],
    cfg: &TrainConfig,
) -> Result<(SubgoalClassifier, LossCurve), PolicyError> {
    let mut m = SubgoalClassifier::new(vocab.dim());
    let curve = m.clf.train(train, valid, cfg)?;
    Ok((m, curve))
}

pub fn train_oem(
    vocab: &Vocabulary,
    train: &[(Vec<f64>, usize)],
    valid: &[(Vec<f64>, usize)],
    cfg: &TrainConfig,
) -> Result<(ObjectEncoder, LossCurve), PolicyError> {
    let mut m = ObjectEncoder::new(vocab.dim());
    let curve = m.clf.train(train, valid, cfg)?;
    Ok((m, curve))
}

/// Mean per-step loss and accuracy of the head the cell is trained on.
pub fn evaluate_cell(cell: &RecurrentPolicyCell, data: &[Sequence]) -> (f64, f64) {
    let mut total = SequenceStats::default();
    for s in data {
        total.merge(&cell.sequence_loss_grad(s, None));
    }
    let steps = total.steps().max(1) as f64;
    let acc = if cell.dims.actions > 0 {
        total.action_correct as f64 / total.action_steps.max(1) as f64
    } else {
        total.class_correct as f64 / total.class_steps.max(1) as f64
    };
    (total.loss / steps, acc)
}

/// Mini-batch BPTT with Adam over whole sequences.
pub fn train_imitation(
    cell: &mut RecurrentPolicyCell,
    train: &[Sequence],
    valid: &[Sequence],
    cfg: &TrainConfig,
) -> Result<LossCurve, PolicyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cell.params.len(), cfg.lr);
    let mut curve = LossCurve::default();
    let record = |cell: &RecurrentPolicyCell, epoch: usize, curve: &mut LossCurve| {
        for (split, data) in [("train", train), ("valid", valid)] {
            if !data.is_empty() && (split == "train" || cfg.track_valid) {
                let (loss, accuracy) = evaluate_cell(cell, data);
                curve.rows.push(LossRow { epoch, split: split.into(), loss, accuracy });
            }
        }
    };
    if cfg.track_initial {
        record(cell, 0, &mut curve);
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; cell.params.len()];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut running = SequenceStats::default();
        for (b, chunk) in order.chunks(cfg.batch.max(1)).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut stats = SequenceStats::default();
            for &i in chunk {
                stats.merge(&cell.sequence_loss_grad(&train[i], Some(&mut grad)));
            }
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PolicyError::NonFinite { epoch, batch: b });
            }
            let n = stats.steps().max(1) as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            clip_norm(&mut grad, cfg.clip);
            opt.step(&mut cell.params, &grad);
            running.merge(&stats);
        }
        if cfg.track_every_epoch || epoch == cfg.epochs {
            record(cell, epoch, &mut curve);
        } else {
            let steps = running.steps().max(1) as f64;
            let acc = running.action_correct.max(running.class_correct) as f64
                / running.action_steps.max(running.class_steps).max(1) as f64;
            curve.rows.push(LossRow { epoch, split: "train_running".into(), loss: running.loss / steps, accuracy: acc });
        }
        log::debug!("epoch {epoch}: {:?}", curve.rows.last());
    }
    Ok(curve)
}

pub fn train_nav(
    vocab: &Vocabulary,
    demos: &[Demonstration],
    opts: &DataOptions,
    cfg: &TrainConfig,
) -> Result<(NavPolicy, LossCurve), PolicyError> {
    let mut nav = NavPolicy::new(vocab.dim(), cfg.hidden, opts.use_object, cfg.seed);
    let data: Vec<Sequence> = demos.iter().map(|d| nav_sequence(vocab, d, &nav.layout, opts)).collect();
    let curve = train_imitation(&mut nav.cell, &data, &[], cfg)?;
    Ok((nav, curve))
}

/// Trains one interaction policy for `kind`, or a shared one over every kind when `None`.
pub fn train_interaction(
    vocab: &Vocabulary,
    demos: &[Demonstration],
    opts: &DataOptions,
    kind: Option<SubgoalKind>,
    cfg: &TrainConfig,
) -> Result<(InteractionPolicy, LossCurve), PolicyError> {
    let seed = cfg.seed ^ kind.map_or(0xA11, |k| k.index() as u64 * 7919);
    let mut ip = InteractionPolicy::new(kind, vocab.dim(), cfg.hidden, seed);
    let data: Vec<Sequence> = demos.iter().flat_map(|d| ip_sequences(vocab, d, &ip.layout, opts, kind)).collect();
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let mut curve = train_imitation(&mut ip.apm, &data, &[], &cfg)?;
    for mut row in train_imitation(&mut ip.ipm, &data, &[], &cfg)?.rows {
        row.split = format!("{}_class", row.split);
        curve.rows.push(row);
    }
    Ok((ip, curve))
}

pub fn train_flat(
    vocab: &Vocabulary,
    demos: &[Demonstration],
    opts: &DataOptions,
    class_heads: usize,
    cfg: &TrainConfig,
) -> Result<(FlatPolicy, LossCurve), PolicyError> {
    let mut flat = FlatPolicy::new(vocab.dim(), cfg.hidden, class_heads, cfg.seed);
    let data: Vec<Sequence> = demos.iter().map(|d| flat_sequence(vocab, d, &flat, opts)).collect();
    let curve = train_imitation(&mut flat.cell, &data, &[], cfg)?;
    Ok((flat, curve))
}
