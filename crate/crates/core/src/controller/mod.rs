//! The three-level control loop.
//!
//! The subgoal classifier runs once over all step instructions. The master
//! policy navigates until it yields with MANIPULATE (or the monitor fires), then
//! the interaction policy for the next subgoal runs until STOP.

mod agents;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::Instructions;
use crate::policies::{
    detect_deadlock, escape_action, subgoal_monitor_check, FlatMask, InteractionPolicyState, LanguageMode, MonitorNoise,
    NavPolicyState, ObservationHistory, SparseVec, ViewMask, FLAT_STOP, MANIPULATE, STOP,
};
use crate::tasks::SubgoalKind;
use crate::world::{
    Action, AgentPose, GridScene, InteractAction, NavAction, ObjectClass, ObjectId, Observation, Pitch, Simulator,
    WorldConfig,
};

pub use agents::{FlatModels, HierarchicalModels, OracleAgent, OracleFlatAgent};
pub use trace::{check_trace_invariants, read_traces_jsonl, render_trace, write_traces_jsonl, TraceViolation};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("no interaction policy for subgoal kind {0:?}")]
    ModelMismatch(SubgoalKind),
    #[error("invalid episode configuration: {0}")]
    InvalidConfig(String),
    #[error("trace i/o: {0}")]
    Io(String),
}

/// Which policy produced a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyId {
    Master,
    Interaction(SubgoalKind),
    SharedInteraction,
    Flat,
}

impl std::fmt::Display for PolicyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyId::Master => write!(f, "MP"),
            PolicyId::Interaction(k) => {
                let name = format!("{k:?}");
                write!(f, "IP_{}", name.trim_end_matches("Object"))
            }
            PolicyId::SharedInteraction => write!(f, "IP"),
            PolicyId::Flat => write!(f, "FLAT"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// The monitor ends navigation when it is available; otherwise MANIPULATE does.
    #[default]
    MonitorOnly,
    /// Monitor or MANIPULATE, whichever comes first.
    Either,
    TokenOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub no_oem: bool,
    pub no_nih_flat: bool,
    pub no_mip_single_ip: bool,
    pub goal_only: bool,
    pub nav_instruction_only: bool,
    pub ego_only: bool,
    pub no_vision: bool,
    pub no_language: bool,
}

impl AblationFlags {
    pub fn nav_language(&self) -> LanguageMode {
        if self.no_language {
            LanguageMode::Zero
        } else if self.goal_only {
            LanguageMode::GoalOnly
        } else if self.nav_instruction_only {
            LanguageMode::InstructionOnly
        } else {
            LanguageMode::Full
        }
    }

    pub fn ip_language(&self) -> LanguageMode {
        if self.no_language {
            LanguageMode::Zero
        } else if self.goal_only {
            LanguageMode::GoalOnly
        } else {
            LanguageMode::Full
        }
    }

    pub fn oem_language(&self) -> LanguageMode {
        if self.goal_only {
            LanguageMode::GoalOnly
        } else {
            LanguageMode::Full
        }
    }

    /// Whether the object encoding reaches the master policy.
    pub fn uses_object(&self) -> bool {
        !self.no_oem && !self.no_language && !self.nav_instruction_only
    }

    pub fn view_mask(&self) -> ViewMask {
        if self.no_vision {
            ViewMask::None
        } else if self.ego_only {
            ViewMask::EgoOnly
        } else {
            ViewMask::All
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub max_failures: usize,
    /// Failed actions tolerated in one interaction invocation before re-navigating.
    pub retry_limit: usize,
    pub window: usize,
    pub lem_enabled: bool,
    pub monitor_noise: MonitorNoise,
    pub transfer_mode: TransferMode,
    pub flags: AblationFlags,
    pub seed: u64,
    #[serde(skip)]
    pub world: WorldConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 400,
            max_failures: 10,
            retry_limit: 3,
            window: 10,
            lem_enabled: true,
            monitor_noise: MonitorNoise::default(),
            transfer_mode: TransferMode::default(),
            flags: AblationFlags::default(),
            seed: 0,
            world: WorldConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.window == 0 {
            return Err(ControllerError::InvalidConfig("loop-escape window must be at least 1".into()));
        }
        Ok(())
    }

    fn monitor_available(&self) -> bool {
        self.transfer_mode != TransferMode::TokenOnly && self.flags.uses_object() && !self.flags.no_vision
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Budget,
    Failures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub policy: PolicyId,
    pub action: Action,
    pub success: bool,
    pub fingerprint: u64,
    pub deadlock_fired: bool,
    pub subgoal: usize,
    pub target: Option<ObjectId>,
}

/// Control-flow facts gathered while the episode runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAudit {
    pub ip_invocations: usize,
    pub ip_started_from_zero: bool,
    pub nav_state_preserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_id: String,
    pub subgoals: Vec<SubgoalKind>,
    pub records: Vec<StepRecord>,
    pub final_scene: GridScene,
    /// Simulator-executed actions.
    pub path_length: usize,
    pub termination: Termination,
    pub audit: TraceAudit,
}

impl EpisodeTrace {
    pub fn deadlocks(&self) -> usize {
        self.records.iter().filter(|r| r.deadlock_fired).count()
    }
}

/// Everything the controller needs to start an episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub id: &'a str,
    pub scene: &'a GridScene,
    pub start: AgentPose,
    pub instructions: &'a Instructions,
}

/// Per-episode decisions made before the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodePlan {
    pub kinds: Vec<SubgoalKind>,
    /// Class to locate for each navigation subgoal.
    pub objects: Vec<Option<ObjectClass>>,
    pub nav_lang: Vec<SparseVec>,
    pub ip_lang: Vec<SparseVec>,
    pub episode_lang: SparseVec,
}

/// What a policy sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct StepQuery<'a> {
    pub obs: &'a Observation,
    pub pitch: Pitch,
    pub subgoal: usize,
    pub step_in_segment: usize,
    pub view_mask: ViewMask,
    pub allow_manipulate: bool,
}

pub trait HierarchicalAgent {
    fn plan(&self, instructions: &Instructions, flags: &AblationFlags) -> EpisodePlan;
    fn nav_initial_state(&self) -> NavPolicyState;
    /// Index over navigation actions plus MANIPULATE.
    fn nav_step(&self, plan: &EpisodePlan, state: &mut NavPolicyState, q: &StepQuery) -> usize;
    /// The policy that handles `kind`, if any.
    fn ip_policy(&self, kind: SubgoalKind) -> Option<PolicyId>;
    fn ip_initial_state(&self, kind: SubgoalKind) -> InteractionPolicyState;
    /// Index over interaction actions plus STOP, and the target class.
    fn ip_step(
        &self,
        kind: SubgoalKind,
        plan: &EpisodePlan,
        state: &mut InteractionPolicyState,
        q: &StepQuery,
    ) -> (usize, ObjectClass);
}

/// Facts for one step of the flat policy.
#[derive(Debug, Clone, Copy)]
pub struct FlatQuery<'a> {
    pub obs: &'a Observation,
    pub pitch: Pitch,
    pub object: Option<ObjectClass>,
    pub kind: Option<SubgoalKind>,
    /// Actions the flat policy has emitted so far.
    pub step: usize,
    pub view_mask: ViewMask,
    pub mask: FlatMask,
}

pub trait FlatAgent {
    fn plan(&self, instructions: &Instructions, flags: &AblationFlags) -> EpisodePlan;
    fn initial_state(&self) -> crate::policies::FlatPolicyState;
    /// Index over the unified action space, and the target class.
    fn step(&self, plan: &EpisodePlan, state: &mut crate::policies::FlatPolicyState, q: &FlatQuery) -> (usize, ObjectClass);
}

struct Run<'a> {
    sim: Simulator,
    cfg: &'a EpisodeConfig,
    records: Vec<StepRecord>,
    failures: usize,
    rng: ChaCha8Rng,
    history: ObservationHistory,
}

enum Stop {
    Budget,
    Failures,
}

enum IpResult {
    Done,
    Renavigate,
}

impl<'a> Run<'a> {
    fn new(setup: &EpisodeSetup, cfg: &'a EpisodeConfig) -> Self {
        Run {
            sim: Simulator::new(setup.scene.clone(), setup.start, cfg.world),
            cfg,
            records: Vec::new(),
            failures: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            history: ObservationHistory::new(cfg.window, cfg.max_steps + 1),
        }
    }

    fn budget(&self) -> Result<(), Stop> {
        if self.records.len() >= self.cfg.max_steps {
            Err(Stop::Budget)
        } else {
            Ok(())
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, policy: PolicyId, action: Action, success: bool, fp: u64, fired: bool, subgoal: usize, target: Option<ObjectId>) {
        let t = self.records.len();
        self.records.push(StepRecord { t, policy, action, success, fingerprint: fp, deadlock_fired: fired, subgoal, target });
    }

    fn fail(&mut self) -> Result<(), Stop> {
        self.failures += 1;
        if self.failures >= self.cfg.max_failures {
            Err(Stop::Failures)
        } else {
            Ok(())
        }
    }

    fn execute(&mut self, action: Action) -> (bool, Option<ObjectId>) {
        let out = self.sim.execute(action, None);
        (out.success, out.target)
    }

    /// Runs the master policy for navigation subgoal `nav` until control transfers.
    fn navigate<A: HierarchicalAgent + ?Sized>(
        &mut self,
        agent: &A,
        plan: &EpisodePlan,
        state: &mut NavPolicyState,
        nav: usize,
        label: usize,
        hand_over: bool,
    ) -> Result<(), Stop> {
        self.history.clear();
        state.object = plan.objects.get(nav).copied().flatten();
        let monitor = self.cfg.monitor_available() && state.object.is_some();
        let token = self.cfg.transfer_mode != TransferMode::MonitorOnly || !monitor;
        let mut step = 0;
        loop {
            self.budget()?;
            let obs = self.sim.observe();
            self.history.push(obs.fingerprint);
            if monitor {
                let target = state.object.expect("monitor needs a target");
                if subgoal_monitor_check(&obs, target, &self.cfg.monitor_noise, &mut self.rng) {
                    if hand_over {
                        self.push(PolicyId::Master, Action::Manipulate, true, obs.fingerprint, false, label, None);
                    }
                    return Ok(());
                }
            }
            let q = StepQuery {
                obs: &obs,
                pitch: self.sim.pose.pitch,
                subgoal: nav,
                step_in_segment: step,
                view_mask: self.cfg.flags.view_mask(),
                allow_manipulate: token,
            };
            let proposed = agent.nav_step(plan, state, &q);
            step += 1;
            let fired = self.cfg.lem_enabled && detect_deadlock(self.history.as_slice(), self.cfg.window);
            let action = if fired {
                let a = escape_action(&mut self.rng);
                state.prev_action = Some(a.index());
                a
            } else if proposed == MANIPULATE {
                if hand_over {
                    self.push(PolicyId::Master, Action::Manipulate, true, obs.fingerprint, false, label, None);
                }
                return Ok(());
            } else {
                NavAction::ALL[proposed]
            };
            let (ok, _) = self.execute(Action::Nav(action));
            self.push(PolicyId::Master, Action::Nav(action), ok, obs.fingerprint, fired, label, None);
            if !ok {
                self.fail()?;
            }
        }
    }

    fn interact<A: HierarchicalAgent + ?Sized>(
        &mut self,
        agent: &A,
        plan: &EpisodePlan,
        nav_state: &NavPolicyState,
        index: usize,
        audit: &mut TraceAudit,
    ) -> Result<IpResult, Stop> {
        let kind = plan.kinds[index];
        let policy = agent.ip_policy(kind).expect("validated before the episode");
        let mut state = agent.ip_initial_state(kind);
        audit.ip_invocations += 1;
        audit.ip_started_from_zero &= state.is_zero();
        let before = nav_state.digest();
        let mut local_failures = 0;
        let mut step = 0;
        let result = loop {
            self.budget()?;
            let obs = self.sim.observe();
            let q = StepQuery {
                obs: &obs,
                pitch: self.sim.pose.pitch,
                subgoal: index,
                step_in_segment: step,
                view_mask: self.cfg.flags.view_mask(),
                allow_manipulate: false,
            };
            let (a, class) = agent.ip_step(kind, plan, &mut state, &q);
            step += 1;
            if a >= STOP {
                self.push(policy, Action::Stop, true, obs.fingerprint, false, index, None);
                break IpResult::Done;
            }
            let action = Action::Interact(InteractAction::ALL[a], class);
            let (ok, target) = self.execute(action);
            self.push(policy, action, ok, obs.fingerprint, false, index, target);
            if !ok {
                self.fail()?;
                local_failures += 1;
                if local_failures > self.cfg.retry_limit {
                    self.push(policy, Action::Stop, false, obs.fingerprint, false, index, None);
                    break IpResult::Renavigate;
                }
            }
        };
        audit.nav_state_preserved &= nav_state.digest() == before;
        Ok(result)
    }
}

fn finish(id: &str, kinds: Vec<SubgoalKind>, run: Run, termination: Termination, audit: TraceAudit) -> EpisodeTrace {
    let path_length = run.records.iter().filter(|r| !r.action.is_token()).count();
    EpisodeTrace {
        episode_id: id.to_string(),
        subgoals: kinds,
        records: run.records,
        final_scene: run.sim.scene,
        path_length,
        termination,
        audit,
    }
}

fn stop_reason(s: Stop) -> Termination {
    match s {
        Stop::Budget => Termination::Budget,
        Stop::Failures => Termination::Failures,
    }
}

/// Runs one hierarchical episode.
pub fn run_episode<A: HierarchicalAgent + ?Sized>(
    setup: &EpisodeSetup,
    agent: &A,
    cfg: &EpisodeConfig,
) -> Result<EpisodeTrace, ControllerError> {
    cfg.validate()?;
    if cfg.flags.no_nih_flat {
        return Err(ControllerError::InvalidConfig("the flat agent runs through run_flat_episode".into()));
    }
    let plan = agent.plan(setup.instructions, &cfg.flags);
    for &k in plan.kinds.iter().filter(|k| !k.is_navigation()) {
        if agent.ip_policy(k).is_none() {
            return Err(ControllerError::ModelMismatch(k));
        }
    }
    let mut run = Run::new(setup, cfg);
    let mut audit = TraceAudit { ip_invocations: 0, ip_started_from_zero: true, nav_state_preserved: true };
    let mut nav_state = agent.nav_initial_state();
    let n = plan.kinds.len();
    let mut outcome: Result<(), Stop> = Ok(());
    let mut cursor = 0;
    while cursor < n {
        let kind = plan.kinds[cursor];
        let step: Result<usize, Stop> = (|| {
            if kind.is_navigation() {
                let next = cursor + 1;
                let pairs = next < n && !plan.kinds[next].is_navigation();
                run.navigate(agent, &plan, &mut nav_state, cursor, cursor, pairs)?;
                if !pairs {
                    return Ok(next);
                }
                loop {
                    match run.interact(agent, &plan, &nav_state, next, &mut audit)? {
                        IpResult::Done => return Ok(next + 1),
                        IpResult::Renavigate => run.navigate(agent, &plan, &mut nav_state, cursor, next, true)?,
                    }
                }
            } else {
                run.interact(agent, &plan, &nav_state, cursor, &mut audit)?;
                Ok(cursor + 1)
            }
        })();
        match step {
            Ok(c) => cursor = c,
            Err(s) => {
                outcome = Err(s);
                break;
            }
        }
    }
    let termination = match outcome {
        Ok(()) => Termination::Completed,
        Err(s) => stop_reason(s),
    };
    Ok(finish(setup.id, plan.kinds, run, termination, audit))
}

/// Runs one episode with a single policy over the unified action space.
pub fn run_flat_episode<A: FlatAgent + ?Sized>(
    setup: &EpisodeSetup,
    agent: &A,
    cfg: &EpisodeConfig,
) -> Result<EpisodeTrace, ControllerError> {
    cfg.validate()?;
    let plan = agent.plan(setup.instructions, &cfg.flags);
    let mut run = Run::new(setup, cfg);
    let audit = TraceAudit { ip_invocations: 0, ip_started_from_zero: true, nav_state_preserved: true };
    let mut state = agent.initial_state();
    let n = plan.kinds.len();
    let mut cursor = 0;
    let mut emitted = 0;
    // Set once the monitor has seen the target of the current navigation subgoal.
    let mut arrived = false;
    // Set once the current segment has moved on to its interaction.
    let mut interacting = false;
    let outcome: Result<(), Stop> = (|| {
        while cursor < n {
            run.budget()?;
            let obs = run.sim.observe();
            let navigating = plan.kinds[cursor].is_navigation();
            let (object, kind) = if navigating {
                (plan.objects[cursor], plan.kinds.get(cursor + 1).copied().filter(|k| !k.is_navigation()))
            } else {
                (None, Some(plan.kinds[cursor]))
            };
            let monitor = cfg.monitor_available() && navigating && object.is_some();
            if monitor && !arrived {
                let target = object.expect("checked above");
                arrived = subgoal_monitor_check(&obs, target, &cfg.monitor_noise, &mut run.rng);
            }
            let mask = match (monitor, arrived) {
                (false, _) => FlatMask::ALL,
                (true, false) => FlatMask { navigation: true, interaction: false, stop: false },
                (true, true) => FlatMask { navigation: false, interaction: true, stop: true },
            };
            let searching = !(monitor && arrived);
            if searching {
                run.history.push(obs.fingerprint);
            }
            let q = FlatQuery {
                obs: &obs,
                pitch: run.sim.pose.pitch,
                object,
                kind,
                step: emitted,
                view_mask: cfg.flags.view_mask(),
                mask,
            };
            let (a, class) = agent.step(&plan, &mut state, &q);
            emitted += 1;
            let fired = searching && cfg.lem_enabled && detect_deadlock(run.history.as_slice(), cfg.window);
            let action = if fired {
                let e = escape_action(&mut run.rng);
                state.prev_action = Some(e.index());
                Action::Nav(e)
            } else if a == FLAT_STOP {
                let label = if navigating && (arrived || interacting) && kind.is_some() { cursor + 1 } else { cursor };
                run.push(PolicyId::Flat, Action::Stop, true, obs.fingerprint, false, label, None);
                cursor = (cursor + 1..n).find(|&j| plan.kinds[j].is_navigation()).unwrap_or(n);
                arrived = false;
                interacting = false;
                run.history.clear();
                continue;
            } else if a < NavAction::ALL.len() {
                Action::Nav(NavAction::ALL[a])
            } else {
                Action::Interact(InteractAction::ALL[a - NavAction::ALL.len()], class)
            };
            interacting |= matches!(action, Action::Interact(..));
            let label = if navigating && (arrived || interacting) && kind.is_some() { cursor + 1 } else { cursor };
            let (ok, target) = run.execute(action);
            run.push(PolicyId::Flat, action, ok, obs.fingerprint, fired, label, target);
            if !ok {
                run.fail()?;
            }
        }
        Ok(())
    })();
    let termination = match outcome {
        Ok(()) => Termination::Completed,
        Err(s) => stop_reason(s),
    };
    Ok(finish(setup.id, plan.kinds, run, termination, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{generate_dataset, generate_expert_trajectory, DatasetConfig, ExpertTrajectory};
    use crate::tasks::{GoalCondition, Subgoal, TaskSpec, TaskType};
    use crate::world::{generate_scene, SceneGenConfig, StateFlag};

    fn token_only() -> EpisodeConfig {
        EpisodeConfig { transfer_mode: TransferMode::TokenOnly, lem_enabled: false, ..Default::default() }
    }

    fn small_dataset() -> crate::expert::Dataset {
        generate_dataset(&DatasetConfig { num_scenes: 5, tasks_per_scene: 6, ..Default::default() }).unwrap()
    }

    fn setup<'a>(id: &'a str, scene: &'a GridScene, traj: &'a ExpertTrajectory) -> EpisodeSetup<'a> {
        EpisodeSetup { id, scene, start: traj.start, instructions: &traj.instructions }
    }

    #[test]
    fn oracle_matches_expert_length_and_succeeds() {
        let ds = small_dataset();
        for r in &ds.records {
            let scene = ds.scene(r.scene_seed).unwrap();
            let agent = OracleAgent { trajectory: &r.trajectory };
            let trace = run_episode(&setup(&r.id, scene, &r.trajectory), &agent, &token_only()).unwrap();
            assert_eq!(trace.termination, Termination::Completed);
            assert_eq!(trace.path_length, r.trajectory.path_length, "{}", r.id);
            assert!(crate::tasks::evaluate_goal_conditions(&trace.final_scene, &r.trajectory.task).success);
            check_trace_invariants(&trace).unwrap();
            assert_eq!(trace.audit.ip_invocations, r.trajectory.task.subgoals.iter().filter(|s| !s.kind.is_navigation()).count());
        }
    }

    #[test]
    fn flat_oracle_succeeds() {
        let ds = small_dataset();
        for r in ds.records.iter().take(10) {
            let scene = ds.scene(r.scene_seed).unwrap();
            let agent = OracleFlatAgent { trajectory: &r.trajectory };
            let trace = run_flat_episode(&setup(&r.id, scene, &r.trajectory), &agent, &token_only()).unwrap();
            assert!(crate::tasks::evaluate_goal_conditions(&trace.final_scene, &r.trajectory.task).success);
            assert_eq!(trace.path_length, r.trajectory.path_length);
            assert!(trace.records.iter().all(|x| x.policy == PolicyId::Flat));
            check_trace_invariants(&trace).unwrap();
            for rec in &trace.records {
                if let Action::Interact(..) = rec.action {
                    assert!(!trace.subgoals[rec.subgoal].is_navigation(), "{}", r.id);
                }
            }
        }
    }

    #[test]
    fn zero_budget_gives_empty_trace() {
        let ds = small_dataset();
        let r = &ds.records[0];
        let agent = OracleAgent { trajectory: &r.trajectory };
        let cfg = EpisodeConfig { max_steps: 0, ..token_only() };
        let trace = run_episode(&setup(&r.id, ds.scene(r.scene_seed).unwrap(), &r.trajectory), &agent, &cfg).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.termination, Termination::Budget);
        assert_eq!(trace.path_length, 0);
    }

    #[test]
    fn heat_then_chill_switches_between_five_policies() {
        use ObjectClass::*;
        let spec = TaskSpec {
            task_type: TaskType::HeatAndPlace,
            seed: 3,
            conditions: vec![
                GoalCondition::ObjectStateFlag { object: Potato, flag: StateFlag::Heated },
                GoalCondition::ObjectInReceptacle { object: Potato, receptacle: CounterTop, min_count: 1, requires: Some(StateFlag::Cooled) },
            ],
            subgoals: vec![
                Subgoal::goto(Potato),
                Subgoal::interact(SubgoalKind::PickupObject, Potato, None),
                Subgoal::goto(Microwave),
                Subgoal::interact(SubgoalKind::HeatObject, Potato, Some(Microwave)),
                Subgoal::goto(Fridge),
                Subgoal::interact(SubgoalKind::CoolObject, Potato, Some(Fridge)),
                Subgoal::goto(CounterTop),
                Subgoal::interact(SubgoalKind::PutObject, Potato, Some(CounterTop)),
            ],
        };
        let (scene, traj) = (0..200)
            .find_map(|seed| {
                let scene = generate_scene(seed, &SceneGenConfig::default()).ok()?;
                let traj = generate_expert_trajectory(&scene, &spec).ok()?;
                Some((scene, traj))
            })
            .expect("some scene supports the task");
        let agent = OracleAgent { trajectory: &traj };
        let trace = run_episode(&setup("heat-chill", &scene, &traj), &agent, &token_only()).unwrap();
        let mut seq: Vec<String> = Vec::new();
        for r in &trace.records {
            let name = r.policy.to_string();
            if seq.last() != Some(&name) {
                seq.push(name);
            }
        }
        assert_eq!(seq, ["MP", "IP_Pickup", "MP", "IP_Heat", "MP", "IP_Cool", "MP", "IP_Put"]);
        check_trace_invariants(&trace).unwrap();
        println!("{}", render_trace(&trace));
    }

    /// Alternates two rotations forever.
    struct Oscillator;

    impl HierarchicalAgent for Oscillator {
        fn plan(&self, ins: &Instructions, _: &AblationFlags) -> EpisodePlan {
            EpisodePlan { kinds: vec![SubgoalKind::GotoLocation; ins.steps.len().max(1)], objects: vec![None], ..Default::default() }
        }
        fn nav_initial_state(&self) -> NavPolicyState {
            NavPolicyState::zeros(0)
        }
        fn nav_step(&self, _: &EpisodePlan, state: &mut NavPolicyState, _: &StepQuery) -> usize {
            let a = match state.prev_action {
                Some(1) => NavAction::RotateLeft,
                _ => NavAction::RotateRight,
            };
            state.prev_action = Some(a.index());
            a.index()
        }
        fn ip_policy(&self, _: SubgoalKind) -> Option<PolicyId> {
            None
        }
        fn ip_initial_state(&self, _: SubgoalKind) -> InteractionPolicyState {
            InteractionPolicyState::zeros(0)
        }
        fn ip_step(&self, _: SubgoalKind, _: &EpisodePlan, _: &mut InteractionPolicyState, _: &StepQuery) -> (usize, ObjectClass) {
            (STOP, ObjectClass::ALL[0])
        }
    }

    fn oscillate(lem: bool, seed: u64) -> EpisodeTrace {
        let ds = small_dataset();
        let r = &ds.records[0];
        let ins = Instructions { goal: String::new(), steps: vec!["x".into()] };
        let cfg = EpisodeConfig { max_steps: 60, max_failures: 1000, lem_enabled: lem, seed, ..Default::default() };
        let s = EpisodeSetup { id: "loop", scene: ds.scene(r.scene_seed).unwrap(), start: r.trajectory.start, instructions: &ins };
        run_episode(&s, &Oscillator, &cfg).unwrap()
    }

    #[test]
    fn loop_escape_fires_within_window_plus_two() {
        for w in [2, 5, 10] {
            let ds = small_dataset();
            let r = &ds.records[0];
            let ins = Instructions { goal: String::new(), steps: vec!["x".into()] };
            let cfg = EpisodeConfig { max_steps: 60, max_failures: 1000, window: w, ..Default::default() };
            let s = EpisodeSetup { id: "loop", scene: ds.scene(r.scene_seed).unwrap(), start: r.trajectory.start, instructions: &ins };
            let trace = run_episode(&s, &Oscillator, &cfg).unwrap();
            let first = trace.records.iter().position(|r| r.deadlock_fired).expect("escape fires");
            assert!(first <= w + 2, "W = {w}: first escape at {first}");
        }
        let off = oscillate(false, 0);
        assert_eq!(off.termination, Termination::Budget);
        assert_eq!(off.deadlocks(), 0);
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        assert_eq!(oscillate(true, 5), oscillate(true, 5));
    }

    #[test]
    fn missing_interaction_policy_is_rejected_up_front() {
        let ins = Instructions { goal: String::new(), steps: vec!["x".into(), "y".into()] };
        struct NoIp;
        impl HierarchicalAgent for NoIp {
            fn plan(&self, _: &Instructions, _: &AblationFlags) -> EpisodePlan {
                EpisodePlan { kinds: vec![SubgoalKind::GotoLocation, SubgoalKind::SliceObject], objects: vec![None, None], ..Default::default() }
            }
            fn nav_initial_state(&self) -> NavPolicyState {
                NavPolicyState::zeros(0)
            }
            fn nav_step(&self, _: &EpisodePlan, _: &mut NavPolicyState, _: &StepQuery) -> usize {
                MANIPULATE
            }
            fn ip_policy(&self, _: SubgoalKind) -> Option<PolicyId> {
                None
            }
            fn ip_initial_state(&self, _: SubgoalKind) -> InteractionPolicyState {
                InteractionPolicyState::zeros(0)
            }
            fn ip_step(&self, _: SubgoalKind, _: &EpisodePlan, _: &mut InteractionPolicyState, _: &StepQuery) -> (usize, ObjectClass) {
                (STOP, ObjectClass::ALL[0])
            }
        }
        let ds = small_dataset();
        let r = &ds.records[0];
        let s = EpisodeSetup { id: "x", scene: ds.scene(r.scene_seed).unwrap(), start: r.trajectory.start, instructions: &ins };
        assert_eq!(run_episode(&s, &NoIp, &EpisodeConfig::default()), Err(ControllerError::ModelMismatch(SubgoalKind::SliceObject)));
    }

    #[test]
    fn traces_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let traces = vec![oscillate(true, 1), oscillate(false, 2)];
        write_traces_jsonl(&path, &traces).unwrap();
        assert_eq!(read_traces_jsonl(&path).unwrap(), traces);
    }

    #[test]
    fn tampered_trace_is_flagged() {
        let mut t = oscillate(true, 1);
        t.path_length += 1;
        assert!(matches!(check_trace_invariants(&t), Err(TraceViolation::PathLength { .. })));
    }
}
