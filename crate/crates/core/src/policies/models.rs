//! Inference wrappers around the trained parameters.

use serde::{Deserialize, Serialize};

use super::cell::{CellDims, RecurrentPolicyCell, SparseVec};
use super::features::{InputLayout, StepContext, ViewMask, VIEW_DIM};
use super::linear::LinearClassifier;
use super::optim::argmax;
use crate::lang::{EncodedInstruction, Vocabulary};
use crate::tasks::SubgoalKind;
use crate::world::{InteractAction, NavAction, ObjectClass, Pitch, NUM_CLASSES, NUM_VIEWS};

pub const NAV_OUTPUTS: usize = 6;
pub const MANIPULATE: usize = 5;
pub const IP_OUTPUTS: usize = 8;
pub const STOP: usize = 7;
/// Navigation, then interaction actions, then STOP.
pub const FLAT_OUTPUTS: usize = 13;
pub const FLAT_STOP: usize = 12;

pub fn nav_index(a: NavAction) -> usize {
    a.index()
}

pub fn flat_index_of_interact(a: InteractAction) -> usize {
    NavAction::ALL.len() + a.index()
}

/// Policy composition controller: instruction text to subgoal kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalClassifier {
    pub clf: LinearClassifier,
}

impl SubgoalClassifier {
    pub fn new(lang_dim: usize) -> Self {
        SubgoalClassifier { clf: LinearClassifier::zeros(lang_dim, SubgoalKind::ALL.len()) }
    }

    pub fn predict(&self, enc: &EncodedInstruction) -> SubgoalKind {
        SubgoalKind::ALL[self.clf.predict(&enc.counts)]
    }

    pub fn predict_text(&self, vocab: &Vocabulary, text: &str) -> SubgoalKind {
        self.predict(&vocab.encode(text))
    }
}

pub fn pcc_predict(model: &SubgoalClassifier, enc: &EncodedInstruction) -> SubgoalKind {
    model.predict(enc)
}

/// Object encoding module: paired subtask language to the class to locate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEncoder {
    pub clf: LinearClassifier,
}

impl ObjectEncoder {
    pub fn new(lang_dim: usize) -> Self {
        ObjectEncoder { clf: LinearClassifier::zeros(lang_dim, NUM_CLASSES) }
    }

    pub fn predict(&self, enc: &EncodedInstruction) -> ObjectClass {
        ObjectClass::ALL[self.clf.predict(&enc.counts)]
    }
}

pub fn oem_predict(model: &ObjectEncoder, enc: &EncodedInstruction) -> ObjectClass {
    model.predict(enc)
}

/// Master-policy state carried through the whole episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPolicyState {
    pub hidden: Vec<f64>,
    pub prev_action: Option<usize>,
    pub object: Option<ObjectClass>,
}

impl NavPolicyState {
    pub fn zeros(hidden: usize) -> Self {
        NavPolicyState { hidden: vec![0.0; hidden], prev_action: None, object: None }
    }

    /// Bit-exact digest used to check the state is untouched.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        self.hidden.iter().for_each(|v| feed(v.to_bits()));
        feed(self.prev_action.map_or(u64::MAX, |a| a as u64));
        feed(self.object.map_or(u64::MAX, |o| o.index() as u64));
        h
    }
}

/// Per-invocation state of one interaction policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPolicyState {
    pub h_apm: Vec<f64>,
    pub h_ipm: Vec<f64>,
    pub prev_action: Option<usize>,
    pub prev_class: Option<ObjectClass>,
}

impl InteractionPolicyState {
    pub fn zeros(hidden: usize) -> Self {
        InteractionPolicyState { h_apm: vec![0.0; hidden], h_ipm: vec![0.0; hidden], prev_action: None, prev_class: None }
    }

    pub fn is_zero(&self) -> bool {
        self.h_apm.iter().chain(&self.h_ipm).all(|&v| v == 0.0) && self.prev_action.is_none() && self.prev_class.is_none()
    }
}

/// Per-step observation facts shared by every policy.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub views: &'a [SparseVec],
    pub held: Option<ObjectClass>,
    pub pitch: Pitch,
    pub view_mask: ViewMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPolicy {
    pub cell: RecurrentPolicyCell,
    pub layout: InputLayout,
}

impl NavPolicy {
    pub fn layout(lang_dim: usize, use_object: bool) -> InputLayout {
        InputLayout { views: NUM_VIEWS, lang: lang_dim, prev_actions: NAV_OUTPUTS, object: use_object, prev_class: false }
    }

    pub fn new(lang_dim: usize, hidden: usize, use_object: bool, seed: u64) -> Self {
        let layout = Self::layout(lang_dim, use_object);
        let dims = CellDims {
            views: NUM_VIEWS,
            view_dim: VIEW_DIM,
            gate_in: layout.gate_dim(),
            extra: layout.extra_dim(),
            hidden,
            actions: NAV_OUTPUTS,
            class_heads: 0,
            classes: 0,
            progress: true,
        };
        NavPolicy { cell: RecurrentPolicyCell::new(dims, seed), layout }
    }

    pub fn uses_object(&self) -> bool {
        self.layout.object
    }

    pub fn initial_state(&self) -> NavPolicyState {
        NavPolicyState::zeros(self.cell.dims.hidden)
    }

    /// One step of the master policy; returns an index over `A_n` plus MANIPULATE.
    pub fn step(&self, state: &mut NavPolicyState, input: &PolicyInput, lang: &SparseVec, allow_manipulate: bool) -> usize {
        let ctx = StepContext {
            views: input.views,
            held: input.held,
            lang,
            prev_action: state.prev_action,
            object: state.object,
            prev_class: None,
            pitch: input.pitch,
            view_mask: input.view_mask,
            head: 0,
        };
        let out = self.cell.step(&state.hidden, &self.layout.build(&ctx));
        state.hidden = out.hidden;
        let mut probs = out.action_probs;
        if !allow_manipulate {
            probs[MANIPULATE] = f64::NEG_INFINITY;
        }
        let a = argmax(&probs);
        state.prev_action = Some(a);
        a
    }
}

pub fn nav_policy_step(
    policy: &NavPolicy,
    state: &mut NavPolicyState,
    input: &PolicyInput,
    l_pair: &SparseVec,
    o_t: Option<ObjectClass>,
) -> usize {
    state.object = o_t;
    policy.step(state, input, l_pair, true)
}

/// Action module and perception module for one subgoal kind, or shared when `kind` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPolicy {
    pub kind: Option<SubgoalKind>,
    pub apm: RecurrentPolicyCell,
    pub ipm: RecurrentPolicyCell,
    pub layout: InputLayout,
}

impl InteractionPolicy {
    pub fn layout(lang_dim: usize) -> InputLayout {
        InputLayout { views: 1, lang: lang_dim, prev_actions: IP_OUTPUTS, object: false, prev_class: true }
    }

    pub fn new(kind: Option<SubgoalKind>, lang_dim: usize, hidden: usize, seed: u64) -> Self {
        let layout = Self::layout(lang_dim);
        let base = CellDims {
            views: 1,
            view_dim: VIEW_DIM,
            gate_in: layout.gate_dim(),
            extra: layout.extra_dim(),
            hidden,
            actions: IP_OUTPUTS,
            class_heads: 0,
            classes: 0,
            progress: false,
        };
        let ipm = CellDims { actions: 0, class_heads: 1, classes: NUM_CLASSES, ..base };
        InteractionPolicy {
            kind,
            apm: RecurrentPolicyCell::new(base, seed),
            ipm: RecurrentPolicyCell::new(ipm, seed ^ 0x1F),
            layout,
        }
    }

    pub fn initial_state(&self) -> InteractionPolicyState {
        InteractionPolicyState::zeros(self.apm.dims.hidden)
    }

    /// Returns an index over `A_m` plus STOP, and the predicted target class.
    pub fn step(&self, state: &mut InteractionPolicyState, input: &PolicyInput, lang: &SparseVec) -> (usize, ObjectClass) {
        let ctx = StepContext {
            views: input.views,
            held: input.held,
            lang,
            prev_action: state.prev_action,
            object: None,
            prev_class: state.prev_class,
            pitch: input.pitch,
            view_mask: input.view_mask,
            head: 0,
        };
        let x = self.layout.build(&ctx);
        let a = self.apm.step(&state.h_apm, &x);
        let c = self.ipm.step(&state.h_ipm, &x);
        state.h_apm = a.hidden;
        state.h_ipm = c.hidden;
        let action = argmax(&a.action_probs);
        let class = ObjectClass::ALL[argmax(&c.class_probs)];
        state.prev_action = Some(action);
        state.prev_class = Some(class);
        (action, class)
    }
}

pub fn interaction_policy_step(
    policy: &InteractionPolicy,
    state: &mut InteractionPolicyState,
    input: &PolicyInput,
    l_t: &SparseVec,
) -> (usize, ObjectClass) {
    policy.step(state, input, l_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPolicyState {
    pub hidden: Vec<f64>,
    pub prev_action: Option<usize>,
}

/// A single recurrent policy over navigation, interaction and STOP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPolicy {
    pub cell: RecurrentPolicyCell,
    pub layout: InputLayout,
}

/// Which parts of the unified action space the flat policy may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatMask {
    pub navigation: bool,
    pub interaction: bool,
    pub stop: bool,
}

impl FlatMask {
    pub const ALL: FlatMask = FlatMask { navigation: true, interaction: true, stop: true };

    pub fn allows(&self, index: usize) -> bool {
        if index == FLAT_STOP {
            self.stop
        } else if index < NAV_OUTPUTS - 1 {
            self.navigation
        } else {
            self.interaction
        }
    }
}

impl FlatPolicy {
    /// `class_heads` is 7 for one head per interaction kind, 1 for a single head.
    pub fn new(lang_dim: usize, hidden: usize, class_heads: usize, seed: u64) -> Self {
        let layout = InputLayout { views: NUM_VIEWS, lang: lang_dim, prev_actions: FLAT_OUTPUTS, object: true, prev_class: false };
        let dims = CellDims {
            views: NUM_VIEWS,
            view_dim: VIEW_DIM,
            gate_in: layout.gate_dim(),
            extra: layout.extra_dim(),
            hidden,
            actions: FLAT_OUTPUTS,
            class_heads,
            classes: NUM_CLASSES,
            progress: false,
        };
        FlatPolicy { cell: RecurrentPolicyCell::new(dims, seed), layout }
    }

    pub fn initial_state(&self) -> FlatPolicyState {
        FlatPolicyState { hidden: self.cell.initial_state(), prev_action: None }
    }

    /// Index into the class heads for an interaction kind.
    pub fn head_for(&self, kind: Option<SubgoalKind>) -> usize {
        if self.cell.dims.class_heads <= 1 {
            return 0;
        }
        kind.and_then(|k| SubgoalKind::INTERACTIONS.iter().position(|&x| x == k)).unwrap_or(0)
    }

    pub fn step(
        &self,
        state: &mut FlatPolicyState,
        input: &PolicyInput,
        lang: &SparseVec,
        object: Option<ObjectClass>,
        kind: Option<SubgoalKind>,
        mask: FlatMask,
    ) -> (usize, ObjectClass) {
        let ctx = StepContext {
            views: input.views,
            held: input.held,
            lang,
            prev_action: state.prev_action,
            object,
            prev_class: None,
            pitch: input.pitch,
            view_mask: input.view_mask,
            head: self.head_for(kind),
        };
        let out = self.cell.step(&state.hidden, &self.layout.build(&ctx));
        state.hidden = out.hidden;
        let mut probs = out.action_probs;
        for (i, p) in probs.iter_mut().enumerate() {
            if !mask.allows(i) {
                *p = f64::NEG_INFINITY;
            }
        }
        let a = argmax(&probs);
        state.prev_action = Some(a);
        (a, ObjectClass::ALL[argmax(&out.class_probs)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::cell::RecurrentPolicyCell;

    fn blank_input(views: &[SparseVec]) -> PolicyInput<'_> {
        PolicyInput { views, held: None, pitch: Pitch::Level, view_mask: ViewMask::All }
    }

    #[test]
    fn untrained_zero_nav_cell_returns_a_valid_action() {
        let mut nav = NavPolicy::new(20, 8, true, 1);
        nav.cell = RecurrentPolicyCell::zeros(nav.cell.dims);
        let views = vec![SparseVec::new(); NUM_VIEWS];
        let mut st = nav.initial_state();
        let a = nav_policy_step(&nav, &mut st, &blank_input(&views), &vec![(2, 1.0)], Some(ObjectClass::Mug));
        assert!(a < NAV_OUTPUTS);
        assert_eq!(a, 0);
    }

    #[test]
    fn interaction_policy_starts_from_zero_and_leaves_nav_state_alone() {
        let nav = NavPolicy::new(20, 8, true, 1);
        let ip = InteractionPolicy::new(Some(SubgoalKind::PickupObject), 20, 8, 2);
        let views = vec![SparseVec::new(); NUM_VIEWS];
        let mut ns = nav.initial_state();
        nav_policy_step(&nav, &mut ns, &blank_input(&views), &vec![(1, 1.0)], Some(ObjectClass::Mug));
        let before = ns.digest();
        let mut st = ip.initial_state();
        assert!(st.is_zero());
        let (a, _) = ip.step(&mut st, &blank_input(&views[..1]), &vec![(1, 1.0)]);
        assert!(a < IP_OUTPUTS);
        assert!(!st.is_zero());
        assert_eq!(before, ns.digest());
    }
}
