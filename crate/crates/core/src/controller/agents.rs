use super::{AblationFlags, EpisodePlan, FlatAgent, FlatQuery, HierarchicalAgent, PolicyId, StepQuery};
use crate::expert::{ExpertTrajectory, Instructions};
use crate::lang::Vocabulary;
use crate::policies::{
    featurize, flat_language, ip_language, language_features, nav_language, FlatPolicy, FlatPolicyState,
    InteractionPolicy, InteractionPolicyState, NavPolicy, NavPolicyState, ObjectEncoder, PolicyInput,
    SubgoalClassifier, FLAT_STOP, MANIPULATE, STOP,
};
use crate::tasks::SubgoalKind;
use crate::world::{Action, NavAction, ObjectClass};

/// Replays an expert trajectory, indexed by subgoal and step within the segment.
#[derive(Debug, Clone, Copy)]
pub struct OracleAgent<'a> {
    pub trajectory: &'a ExpertTrajectory,
}

fn oracle_plan(traj: &ExpertTrajectory) -> EpisodePlan {
    let subgoals = &traj.task.subgoals;
    EpisodePlan {
        kinds: subgoals.iter().map(|s| s.kind).collect(),
        objects: subgoals.iter().map(|s| Some(s.target_class).filter(|_| s.kind.is_navigation())).collect(),
        ..EpisodePlan::default()
    }
}

impl HierarchicalAgent for OracleAgent<'_> {
    fn plan(&self, _: &Instructions, _: &AblationFlags) -> EpisodePlan {
        oracle_plan(self.trajectory)
    }

    fn nav_initial_state(&self) -> NavPolicyState {
        NavPolicyState::zeros(0)
    }

    fn nav_step(&self, _: &EpisodePlan, state: &mut NavPolicyState, q: &StepQuery) -> usize {
        let a = match self.trajectory.segment(q.subgoal).nth(q.step_in_segment).map(|s| s.action) {
            Some(Action::Nav(a)) => a.index(),
            _ => MANIPULATE,
        };
        state.prev_action = Some(a);
        a
    }

    fn ip_policy(&self, kind: SubgoalKind) -> Option<PolicyId> {
        Some(PolicyId::Interaction(kind))
    }

    fn ip_initial_state(&self, _: SubgoalKind) -> InteractionPolicyState {
        InteractionPolicyState::zeros(0)
    }

    fn ip_step(&self, _: SubgoalKind, _: &EpisodePlan, state: &mut InteractionPolicyState, q: &StepQuery) -> (usize, ObjectClass) {
        let out = match self.trajectory.segment(q.subgoal).nth(q.step_in_segment).map(|s| s.action) {
            Some(Action::Interact(a, c)) => (a.index(), c),
            _ => (STOP, ObjectClass::ALL[0]),
        };
        state.prev_action = Some(out.0);
        out
    }
}

/// Replays the expert's executed actions and STOP tokens as one flat stream.
#[derive(Debug, Clone, Copy)]
pub struct OracleFlatAgent<'a> {
    pub trajectory: &'a ExpertTrajectory,
}

impl FlatAgent for OracleFlatAgent<'_> {
    fn plan(&self, _: &Instructions, _: &AblationFlags) -> EpisodePlan {
        oracle_plan(self.trajectory)
    }

    fn initial_state(&self) -> FlatPolicyState {
        FlatPolicyState { hidden: Vec::new(), prev_action: None }
    }

    fn step(&self, _: &EpisodePlan, state: &mut FlatPolicyState, q: &FlatQuery) -> (usize, ObjectClass) {
        let step = self.trajectory.steps.iter().filter(|s| s.action != Action::Manipulate).nth(q.step);
        let out = match step.map(|s| s.action) {
            Some(Action::Nav(a)) => (a.index(), ObjectClass::ALL[0]),
            Some(Action::Interact(a, c)) => (NavAction::ALL.len() + a.index(), c),
            _ => (FLAT_STOP, ObjectClass::ALL[0]),
        };
        state.prev_action = Some(out.0);
        out
    }
}

/// Trained hierarchical agent assembled from shared parts.
#[derive(Debug, Clone)]
pub struct HierarchicalModels<'a> {
    pub vocab: &'a Vocabulary,
    pub pcc: &'a SubgoalClassifier,
    pub oem: Option<&'a ObjectEncoder>,
    pub nav: &'a NavPolicy,
    /// Per-kind policies, or a single shared one.
    pub ips: Vec<&'a InteractionPolicy>,
    pub visibility_range: u8,
}

impl<'a> HierarchicalModels<'a> {
    fn ip_for(&self, kind: SubgoalKind) -> Option<&'a InteractionPolicy> {
        self.ips
            .iter()
            .find(|p| p.kind == Some(kind))
            .or_else(|| self.ips.iter().find(|p| p.kind.is_none()))
            .copied()
    }

    fn input<'b>(&self, q: &StepQuery, views: &'b [crate::policies::SparseVec]) -> PolicyInput<'b> {
        PolicyInput { views, held: q.obs.held, pitch: q.pitch, view_mask: q.view_mask }
    }
}

fn predicted_kinds(pcc: &SubgoalClassifier, vocab: &Vocabulary, ins: &Instructions) -> Vec<SubgoalKind> {
    ins.steps.iter().map(|s| pcc.predict_text(vocab, s)).collect()
}

impl HierarchicalAgent for HierarchicalModels<'_> {
    fn plan(&self, ins: &Instructions, flags: &AblationFlags) -> EpisodePlan {
        let kinds = predicted_kinds(self.pcc, self.vocab, ins);
        let objects = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let oem = self.oem.filter(|_| flags.uses_object() && self.nav.uses_object() && k.is_navigation())?;
                Some(oem.predict(&nav_language(self.vocab, ins, i, flags.oem_language())))
            })
            .collect();
        let n = ins.steps.len();
        EpisodePlan {
            kinds,
            objects,
            nav_lang: (0..n).map(|i| language_features(&nav_language(self.vocab, ins, i, flags.nav_language()))).collect(),
            ip_lang: (0..n).map(|i| language_features(&ip_language(self.vocab, ins, i, flags.ip_language()))).collect(),
            episode_lang: Vec::new(),
        }
    }

    fn nav_initial_state(&self) -> NavPolicyState {
        self.nav.initial_state()
    }

    fn nav_step(&self, plan: &EpisodePlan, state: &mut NavPolicyState, q: &StepQuery) -> usize {
        let views = featurize(q.obs, self.visibility_range);
        self.nav.step(state, &self.input(q, &views), &plan.nav_lang[q.subgoal], q.allow_manipulate)
    }

    fn ip_policy(&self, kind: SubgoalKind) -> Option<PolicyId> {
        let p = self.ip_for(kind)?;
        Some(p.kind.map_or(PolicyId::SharedInteraction, PolicyId::Interaction))
    }

    fn ip_initial_state(&self, kind: SubgoalKind) -> InteractionPolicyState {
        self.ip_for(kind).map_or_else(|| InteractionPolicyState::zeros(0), |p| p.initial_state())
    }

    fn ip_step(&self, kind: SubgoalKind, plan: &EpisodePlan, state: &mut InteractionPolicyState, q: &StepQuery) -> (usize, ObjectClass) {
        let p = self.ip_for(kind).expect("checked by ip_policy");
        let views = featurize(q.obs, self.visibility_range);
        p.step(state, &self.input(q, &views[..1]), &plan.ip_lang[q.subgoal])
    }
}

/// Trained flat agent: one policy, with the subgoal classifier and object encoder for its cursor.
#[derive(Debug, Clone)]
pub struct FlatModels<'a> {
    pub vocab: &'a Vocabulary,
    pub pcc: &'a SubgoalClassifier,
    pub oem: &'a ObjectEncoder,
    pub flat: &'a FlatPolicy,
    pub visibility_range: u8,
}

impl FlatAgent for FlatModels<'_> {
    fn plan(&self, ins: &Instructions, flags: &AblationFlags) -> EpisodePlan {
        let kinds = predicted_kinds(self.pcc, self.vocab, ins);
        let objects = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| {
                k.is_navigation()
                    .then(|| self.oem.predict(&nav_language(self.vocab, ins, i, flags.oem_language())))
            })
            .collect();
        EpisodePlan {
            kinds,
            objects,
            episode_lang: language_features(&flat_language(self.vocab, ins, flags.ip_language())),
            ..EpisodePlan::default()
        }
    }

    fn initial_state(&self) -> FlatPolicyState {
        self.flat.initial_state()
    }

    fn step(&self, plan: &EpisodePlan, state: &mut FlatPolicyState, q: &FlatQuery) -> (usize, ObjectClass) {
        let views = featurize(q.obs, self.visibility_range);
        let input = PolicyInput { views: &views, held: q.obs.held, pitch: q.pitch, view_mask: q.view_mask };
        self.flat.step(state, &input, &plan.episode_lang, q.object, q.kind, q.mask)
    }
}
