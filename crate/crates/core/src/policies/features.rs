//! Sparse input features for the recurrent policies.

use serde::{Deserialize, Serialize};

use super::cell::{SparseVec, StepInput};
use crate::expert::Instructions;
use crate::lang::{EncodedInstruction, Vocabulary};
use crate::world::{ObjectClass, Observation, Pitch, ViewFeature, NUM_CLASSES, NUM_VIEWS};

/// Per-class slots: visible, closeness, interactable, bearing, open, toggled on.
pub const PER_CLASS: usize = 6;
pub const VIEW_DIM: usize = NUM_CLASSES * PER_CLASS + 1;

const OPEN_BIT: u8 = 1 << 5;
const ON_BIT: u8 = 1 << 4;

/// Encodes one view as a sparse vector of length [`VIEW_DIM`], sorted by index.
pub fn view_features(view: &ViewFeature, range: u8) -> SparseVec {
    let range = range.max(1) as f64;
    let mut nearest: Vec<Option<(u8, u8, usize)>> = vec![None; NUM_CLASSES];
    let mut reach = vec![false; NUM_CLASSES];
    for (k, v) in view.visible.iter().enumerate() {
        let c = v.class.index();
        let key = (v.distance, v.offset.unsigned_abs(), k);
        if nearest[c].map_or(true, |n| key < n) {
            nearest[c] = Some(key);
        }
        reach[c] |= v.interactable;
    }
    let mut out = SparseVec::new();
    for (c, n) in nearest.iter().enumerate() {
        let Some((dist, _, k)) = *n else { continue };
        let v = &view.visible[k];
        let base = (c * PER_CLASS) as u32;
        out.push((base, 1.0));
        out.push((base + 1, (range + 1.0 - dist as f64) / range));
        if reach[c] {
            out.push((base + 2, 1.0));
        }
        if v.offset != 0 {
            out.push((base + 3, v.offset as f64 / dist.max(1) as f64));
        }
        if v.state_bits & OPEN_BIT != 0 {
            out.push((base + 4, 1.0));
        }
        if v.state_bits & ON_BIT != 0 {
            out.push((base + 5, 1.0));
        }
    }
    if view.free_ahead > 0 {
        out.push(((NUM_CLASSES * PER_CLASS) as u32, view.free_ahead as f64 / range));
    }
    out
}

pub fn featurize(obs: &Observation, range: u8) -> Vec<SparseVec> {
    obs.views.iter().map(|v| view_features(v, range)).collect()
}

pub fn language_features(enc: &EncodedInstruction) -> SparseVec {
    enc.counts.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, &c)| (i as u32, c)).collect()
}

/// Which views reach the policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMask {
    #[default]
    All,
    EgoOnly,
    None,
}

/// Where the layout of a policy's step input is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub views: usize,
    pub lang: usize,
    pub prev_actions: usize,
    pub object: bool,
    pub prev_class: bool,
}

/// Per-step facts the layout turns into a [`StepInput`].
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Featurized views as produced by [`featurize`].
    pub views: &'a [SparseVec],
    pub held: Option<ObjectClass>,
    pub lang: &'a SparseVec,
    pub prev_action: Option<usize>,
    pub object: Option<ObjectClass>,
    pub prev_class: Option<ObjectClass>,
    pub pitch: Pitch,
    pub view_mask: ViewMask,
    pub head: usize,
}

impl InputLayout {
    pub fn gate_dim(&self) -> usize {
        self.lang + if self.object { NUM_CLASSES } else { 0 }
    }

    pub fn extra_dim(&self) -> usize {
        self.lang
            + self.prev_actions
            + if self.object { NUM_CLASSES } else { 0 }
            + if self.prev_class { NUM_CLASSES } else { 0 }
            + NUM_CLASSES
            + 3
    }

    pub fn build(&self, ctx: &StepContext) -> StepInput {
        let views = (0..self.views.min(NUM_VIEWS))
            .map(|i| {
                let keep = match ctx.view_mask {
                    ViewMask::All => true,
                    ViewMask::EgoOnly => i == 0,
                    ViewMask::None => false,
                };
                if keep {
                    ctx.views.get(i).cloned().unwrap_or_default()
                } else {
                    SparseVec::new()
                }
            })
            .collect();

        let mut gate = ctx.lang.clone();
        let mut extra = ctx.lang.clone();
        let mut at = self.lang as u32;
        if let Some(a) = ctx.prev_action.filter(|&a| a < self.prev_actions) {
            extra.push((at + a as u32, 1.0));
        }
        at += self.prev_actions as u32;
        if self.object {
            if let Some(o) = ctx.object {
                gate.push((self.lang as u32 + o.index() as u32, 1.0));
                extra.push((at + o.index() as u32, 1.0));
            }
            at += NUM_CLASSES as u32;
        }
        if self.prev_class {
            if let Some(c) = ctx.prev_class {
                extra.push((at + c.index() as u32, 1.0));
            }
            at += NUM_CLASSES as u32;
        }
        if let Some(h) = ctx.held {
            extra.push((at + h.index() as u32, 1.0));
        }
        at += NUM_CLASSES as u32;
        let p = Pitch::ALL.iter().position(|&x| x == ctx.pitch).unwrap_or(1);
        extra.push((at + p as u32, 1.0));
        StepInput { views, gate, extra, head: ctx.head }
    }
}

/// Which text a learned policy is conditioned on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageMode {
    #[default]
    Full,
    Zero,
    GoalOnly,
    /// Navigation sees its own instruction without the following one.
    InstructionOnly,
}

/// Language for navigation subgoal `i` (and the object encoder).
pub fn nav_language(vocab: &Vocabulary, ins: &Instructions, i: usize, mode: LanguageMode) -> EncodedInstruction {
    let own = || ins.steps.get(i).map(|s| vocab.encode(s)).unwrap_or_else(|| EncodedInstruction::zeros(vocab.dim()));
    match mode {
        LanguageMode::Full => vocab.pair_subtask(&ins.steps, i).unwrap_or_else(|_| own()),
        LanguageMode::InstructionOnly => own(),
        LanguageMode::GoalOnly => vocab.encode(&ins.goal),
        LanguageMode::Zero => EncodedInstruction::zeros(vocab.dim()),
    }
}

/// Language for interaction subgoal `i`.
pub fn ip_language(vocab: &Vocabulary, ins: &Instructions, i: usize, mode: LanguageMode) -> EncodedInstruction {
    match mode {
        LanguageMode::Full | LanguageMode::InstructionOnly => {
            ins.steps.get(i).map(|s| vocab.encode(s)).unwrap_or_else(|| EncodedInstruction::zeros(vocab.dim()))
        }
        LanguageMode::GoalOnly => vocab.encode(&ins.goal),
        LanguageMode::Zero => EncodedInstruction::zeros(vocab.dim()),
    }
}

/// Whole-episode language for the flat policy.
pub fn flat_language(vocab: &Vocabulary, ins: &Instructions, mode: LanguageMode) -> EncodedInstruction {
    match mode {
        LanguageMode::Full | LanguageMode::InstructionOnly => vocab.encode_all(ins.steps.iter().map(String::as_str)),
        LanguageMode::GoalOnly => vocab.encode(&ins.goal),
        LanguageMode::Zero => EncodedInstruction::zeros(vocab.dim()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::VisibleObject;

    fn seen(class: ObjectClass, distance: u8, offset: i8) -> VisibleObject {
        VisibleObject { id: 0, class, distance, offset, interactable: distance == 1 && offset == 0, state_bits: 0 }
    }

    #[test]
    fn nearest_instance_sets_closeness_and_bearing() {
        let view = ViewFeature {
            visible: vec![seen(ObjectClass::Mug, 3, 2), seen(ObjectClass::Mug, 2, -1)],
            free_ahead: 3,
        };
        let f = view_features(&view, 3);
        let base = (ObjectClass::Mug.index() * PER_CLASS) as u32;
        assert!(f.contains(&(base, 1.0)));
        assert!(f.contains(&(base + 1, 2.0 / 3.0)));
        assert!(f.contains(&(base + 3, -0.5)));
        assert!(f.iter().all(|&(i, _)| (i as usize) < VIEW_DIM));
        assert!(f.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn layout_indices_stay_in_bounds() {
        let layout = InputLayout { views: 5, lang: 10, prev_actions: 6, object: true, prev_class: true };
        let views = vec![SparseVec::new(); 5];
        let lang = vec![(3, 1.0)];
        let ctx = StepContext {
            views: &views,
            held: Some(ObjectClass::Apple),
            lang: &lang,
            prev_action: Some(5),
            object: Some(ObjectClass::Knife),
            prev_class: Some(ObjectClass::Bread),
            pitch: Pitch::Up,
            view_mask: ViewMask::All,
            head: 0,
        };
        let inp = layout.build(&ctx);
        assert!(inp.extra.iter().all(|&(i, _)| (i as usize) < layout.extra_dim()));
        assert!(inp.gate.iter().all(|&(i, _)| (i as usize) < layout.gate_dim()));
        assert_eq!(inp.extra.len(), 6);
    }
}
