//! Task types, goal conditions, and the alternating subgoal decomposition.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{GridScene, ObjectClass, StateFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    PickAndPlace,
    CoolAndPlace,
    StackAndPlace,
    HeatAndPlace,
    CleanAndPlace,
    Examine,
    PickTwoAndPlace,
}

impl TaskType {
    pub const ALL: [TaskType; 7] = [
        TaskType::PickAndPlace,
        TaskType::CoolAndPlace,
        TaskType::StackAndPlace,
        TaskType::HeatAndPlace,
        TaskType::CleanAndPlace,
        TaskType::Examine,
        TaskType::PickTwoAndPlace,
    ];
}

impl std::fmt::Display for TaskType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubgoalKind {
    GotoLocation,
    PickupObject,
    PutObject,
    CoolObject,
    HeatObject,
    CleanObject,
    SliceObject,
    ToggleObject,
}

impl SubgoalKind {
    pub const ALL: [SubgoalKind; 8] = [
        SubgoalKind::GotoLocation,
        SubgoalKind::PickupObject,
        SubgoalKind::PutObject,
        SubgoalKind::CoolObject,
        SubgoalKind::HeatObject,
        SubgoalKind::CleanObject,
        SubgoalKind::SliceObject,
        SubgoalKind::ToggleObject,
    ];

    /// Every kind except navigation.
    pub const INTERACTIONS: [SubgoalKind; 7] = [
        SubgoalKind::PickupObject,
        SubgoalKind::PutObject,
        SubgoalKind::CoolObject,
        SubgoalKind::HeatObject,
        SubgoalKind::CleanObject,
        SubgoalKind::SliceObject,
        SubgoalKind::ToggleObject,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SubgoalKind> {
        Self::ALL.get(i).copied()
    }

    pub fn is_navigation(self) -> bool {
        self == SubgoalKind::GotoLocation
    }
}

impl std::fmt::Display for SubgoalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub kind: SubgoalKind,
    pub target_class: ObjectClass,
    pub receptacle_class: Option<ObjectClass>,
}

impl Subgoal {
    pub fn goto(target: ObjectClass) -> Self {
        Subgoal { kind: SubgoalKind::GotoLocation, target_class: target, receptacle_class: None }
    }

    pub fn interact(kind: SubgoalKind, target: ObjectClass, receptacle: Option<ObjectClass>) -> Self {
        Subgoal { kind, target_class: target, receptacle_class: receptacle }
    }

    /// Class the preceding navigation subgoal has to find.
    pub fn navigation_target(&self) -> ObjectClass {
        match self.kind {
            SubgoalKind::PutObject
            | SubgoalKind::HeatObject
            | SubgoalKind::CoolObject
            | SubgoalKind::CleanObject => self.receptacle_class.unwrap_or(self.target_class),
            _ => self.target_class,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum GoalCondition {
    /// At least `min_count` instances of `object` directly inside some `receptacle`.
    ObjectInReceptacle {
        object: ObjectClass,
        receptacle: ObjectClass,
        min_count: u8,
        requires: Option<StateFlag>,
    },
    ObjectStateFlag { object: ObjectClass, flag: StateFlag },
    ObjectClassSliced { object: ObjectClass },
    LampOnWhileHolding { object: ObjectClass, lamp: ObjectClass },
}

impl GoalCondition {
    pub fn holds(&self, scene: &GridScene) -> bool {
        match *self {
            GoalCondition::ObjectInReceptacle { object, receptacle, min_count, requires } => {
                let n = scene
                    .objects
                    .iter()
                    .filter(|o| o.class == object)
                    .filter(|o| requires.map(|f| o.state.get(f)).unwrap_or(true))
                    .filter(|o| {
                        o.contained_in
                            .and_then(|c| scene.object(c))
                            .map(|c| c.class == receptacle)
                            .unwrap_or(false)
                    })
                    .count();
                n >= min_count as usize
            }
            GoalCondition::ObjectStateFlag { object, flag } => {
                scene.objects.iter().any(|o| o.class == object && o.state.get(flag))
            }
            GoalCondition::ObjectClassSliced { object } => {
                scene.objects.iter().any(|o| o.class == object && o.state.sliced)
            }
            GoalCondition::LampOnWhileHolding { object, lamp } => {
                scene.objects.iter().any(|o| o.class == lamp && o.state.toggled_on)
                    && scene.objects.iter().any(|o| o.class == object && o.state.picked)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_type: TaskType,
    pub seed: u64,
    pub conditions: Vec<GoalCondition>,
    pub subgoals: Vec<Subgoal>,
}

impl TaskSpec {
    /// The principal object of the task (what gets carried around).
    pub fn main_object(&self) -> ObjectClass {
        self.subgoals
            .iter()
            .rev()
            .find(|s| s.kind == SubgoalKind::PickupObject)
            .map(|s| s.target_class)
            .unwrap_or(self.subgoals[0].target_class)
    }

    pub fn is_sliced_variant(&self) -> bool {
        self.subgoals.iter().any(|s| s.kind == SubgoalKind::SliceObject)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task serialization is infallible")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("task {task_type} is infeasible in scene {scene_id}")]
    Infeasible { task_type: TaskType, scene_id: String },
    #[error("task has no subgoals")]
    EmptySubgoals,
    #[error("subgoal sequence does not alternate navigation and interaction at position {0}")]
    NotAlternating(usize),
}

/// Verifies that subgoals alternate Goto / interaction, starting with Goto.
pub fn check_alternation(subgoals: &[Subgoal]) -> Result<(), TaskError> {
    if subgoals.is_empty() {
        return Err(TaskError::EmptySubgoals);
    }
    for (i, s) in subgoals.iter().enumerate() {
        if s.kind.is_navigation() != (i % 2 == 0) {
            return Err(TaskError::NotAlternating(i));
        }
    }
    if subgoals.len() % 2 != 0 {
        return Err(TaskError::NotAlternating(subgoals.len()));
    }
    Ok(())
}

/// One instruction slot per subgoal, index-aligned with the step-by-step instructions.
pub fn decompose_task(spec: &TaskSpec) -> Result<Vec<(usize, Subgoal)>, TaskError> {
    if spec.subgoals.is_empty() {
        return Err(TaskError::EmptySubgoals);
    }
    Ok(spec.subgoals.iter().copied().enumerate().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalStatus {
    pub satisfied: usize,
    pub total: usize,
    pub success: bool,
}

pub fn evaluate_goal_conditions(final_scene: &GridScene, spec: &TaskSpec) -> GoalStatus {
    let total = spec.conditions.len();
    let satisfied = spec.conditions.iter().filter(|c| c.holds(final_scene)).count();
    GoalStatus { satisfied, total, success: total > 0 && satisfied == total }
}

fn pair(a: ObjectClass, b: ObjectClass) -> [Subgoal; 2] {
    [Subgoal::goto(b), Subgoal::interact(SubgoalKind::PutObject, a, Some(b))]
}

fn fetch(object: ObjectClass) -> [Subgoal; 2] {
    [Subgoal::goto(object), Subgoal::interact(SubgoalKind::PickupObject, object, None)]
}

fn treat(kind: SubgoalKind, object: ObjectClass, appliance: ObjectClass) -> [Subgoal; 2] {
    [Subgoal::goto(appliance), Subgoal::interact(kind, object, Some(appliance))]
}

/// Knife fetch, slice, knife drop-off on the counter.
fn slice_prefix(object: ObjectClass) -> Vec<Subgoal> {
    let mut s = Vec::new();
    s.extend(fetch(ObjectClass::Knife));
    s.push(Subgoal::goto(object));
    s.push(Subgoal::interact(SubgoalKind::SliceObject, object, None));
    s.extend(pair(ObjectClass::Knife, ObjectClass::CounterTop));
    s
}

/// Parameters of one concrete task instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskParams {
    pub object: ObjectClass,
    pub receptacle: ObjectClass,
    pub container: Option<ObjectClass>,
    pub sliced: bool,
}

/// Builds the subgoal template and goal conditions for a task type.
pub fn build_task(task_type: TaskType, params: TaskParams, seed: u64) -> TaskSpec {
    let TaskParams { object, receptacle, container, sliced } = params;
    let mut subgoals = if sliced { slice_prefix(object) } else { Vec::new() };
    let slice_req = sliced.then_some(StateFlag::Sliced);
    let mut conditions = Vec::new();
    if sliced {
        conditions.push(GoalCondition::ObjectClassSliced { object });
    }
    let placed = |requires: Option<StateFlag>| GoalCondition::ObjectInReceptacle {
        object,
        receptacle,
        min_count: 1,
        requires,
    };
    match task_type {
        TaskType::PickAndPlace => {
            subgoals.extend(fetch(object));
            subgoals.extend(pair(object, receptacle));
            conditions.push(placed(slice_req));
        }
        TaskType::CoolAndPlace | TaskType::HeatAndPlace | TaskType::CleanAndPlace => {
            let (kind, appliance, flag) = match task_type {
                TaskType::CoolAndPlace => (SubgoalKind::CoolObject, ObjectClass::Fridge, StateFlag::Cooled),
                TaskType::HeatAndPlace => (SubgoalKind::HeatObject, ObjectClass::Microwave, StateFlag::Heated),
                _ => (SubgoalKind::CleanObject, ObjectClass::SinkBasin, StateFlag::Cleaned),
            };
            subgoals.extend(fetch(object));
            subgoals.extend(treat(kind, object, appliance));
            subgoals.extend(pair(object, receptacle));
            conditions.push(GoalCondition::ObjectStateFlag { object, flag });
            conditions.push(placed(Some(flag)));
        }
        TaskType::StackAndPlace => {
            let container = container.expect("stack tasks carry a container");
            subgoals.extend(fetch(object));
            subgoals.extend(pair(object, container));
            subgoals.extend(fetch(container));
            subgoals.extend(pair(container, receptacle));
            conditions.push(GoalCondition::ObjectInReceptacle {
                object,
                receptacle: container,
                min_count: 1,
                requires: None,
            });
            conditions.push(GoalCondition::ObjectInReceptacle {
                object: container,
                receptacle,
                min_count: 1,
                requires: None,
            });
        }
        TaskType::Examine => {
            subgoals.extend(fetch(object));
            subgoals.push(Subgoal::goto(receptacle));
            subgoals.push(Subgoal::interact(SubgoalKind::ToggleObject, receptacle, None));
            conditions.push(GoalCondition::ObjectStateFlag { object, flag: StateFlag::Picked });
            conditions.push(GoalCondition::LampOnWhileHolding { object, lamp: receptacle });
        }
        TaskType::PickTwoAndPlace => {
            subgoals.extend(fetch(object));
            subgoals.extend(pair(object, receptacle));
            subgoals.extend(fetch(object));
            subgoals.extend(pair(object, receptacle));
            for min_count in 1..=2 {
                conditions.push(GoalCondition::ObjectInReceptacle {
                    object,
                    receptacle,
                    min_count,
                    requires: None,
                });
            }
        }
    }
    TaskSpec { task_type, seed, conditions, subgoals }
}

/// Probability that a slice-capable task is drawn in its sliced variant.
const SLICED_VARIANT_RATE: f64 = 0.3;

fn present(scene: &GridScene, class: ObjectClass) -> bool {
    scene.objects.iter().any(|o| o.class == class && !scene.is_enclosed(o.id))
}

fn already_in(scene: &GridScene, object: ObjectClass, receptacle: ObjectClass) -> bool {
    scene.objects.iter().any(|o| {
        o.class == object
            && o.contained_in.and_then(|c| scene.object(c)).map(|c| c.class == receptacle).unwrap_or(false)
    })
}

/// All parameter tuples for `task_type` that make sense in this scene, before feasibility checks.
pub fn candidate_params(scene: &GridScene, task_type: TaskType) -> Vec<TaskParams> {
    let mut classes: Vec<ObjectClass> = scene
        .objects
        .iter()
        .filter(|o| o.caps.is_pickupable && !scene.is_enclosed(o.id))
        .map(|o| o.class)
        .collect();
    classes.sort();
    classes.dedup();
    let mut surfaces: Vec<ObjectClass> =
        scene.objects.iter().filter(|o| o.class.is_surface()).map(|o| o.class).collect();
    surfaces.sort();
    surfaces.dedup();

    let mut out = Vec::new();
    let simple = |o: &ObjectClass| !o.is_movable_container();
    match task_type {
        TaskType::PickAndPlace
        | TaskType::CoolAndPlace
        | TaskType::HeatAndPlace
        | TaskType::CleanAndPlace => {
            for &object in &classes {
                let caps = object.capabilities();
                let (ok, appliance) = match task_type {
                    TaskType::CoolAndPlace => (caps.can_cool, Some(ObjectClass::Fridge)),
                    TaskType::HeatAndPlace => (caps.can_heat, Some(ObjectClass::Microwave)),
                    TaskType::CleanAndPlace => (caps.can_clean, Some(ObjectClass::SinkBasin)),
                    _ => (true, None),
                };
                if !ok || appliance.map(|a| !present(scene, a)).unwrap_or(false) {
                    continue;
                }
                for &receptacle in &surfaces {
                    if already_in(scene, object, receptacle) {
                        continue;
                    }
                    out.push(TaskParams { object, receptacle, container: None, sliced: false });
                    // pieces share a cell with any twin, which would make grounding ambiguous
                    let can_slice = caps.is_sliceable
                        && scene.count_class(object) == 1
                        && present(scene, ObjectClass::Knife)
                        && present(scene, ObjectClass::CounterTop)
                        && task_type != TaskType::CleanAndPlace;
                    if can_slice {
                        out.push(TaskParams { object, receptacle, container: None, sliced: true });
                    }
                }
            }
        }
        TaskType::StackAndPlace => {
            for &container in classes.iter().filter(|c| c.is_movable_container()) {
                for &object in classes.iter().filter(|c| simple(c)) {
                    if already_in(scene, object, container) {
                        continue;
                    }
                    for &receptacle in &surfaces {
                        if already_in(scene, container, receptacle) {
                            continue;
                        }
                        out.push(TaskParams { object, receptacle, container: Some(container), sliced: false });
                    }
                }
            }
        }
        TaskType::Examine => {
            if present(scene, ObjectClass::DeskLamp) {
                for &object in classes.iter().filter(|c| simple(c)) {
                    out.push(TaskParams {
                        object,
                        receptacle: ObjectClass::DeskLamp,
                        container: None,
                        sliced: false,
                    });
                }
            }
        }
        TaskType::PickTwoAndPlace => {
            for &object in &classes {
                let visible = scene
                    .objects
                    .iter()
                    .filter(|o| o.class == object && !scene.is_enclosed(o.id))
                    .count();
                if visible < 2 {
                    continue;
                }
                for &receptacle in &surfaces {
                    if !already_in(scene, object, receptacle) {
                        out.push(TaskParams { object, receptacle, container: None, sliced: false });
                    }
                }
            }
        }
    }
    out
}

/// Samples a task of `task_type` whose expert trajectory completes in this scene.
pub fn generate_task(scene: &GridScene, task_type: TaskType, seed: u64) -> Result<TaskSpec, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A5C_0000_0000_0001);
    let mut candidates = candidate_params(scene, task_type);
    candidates.shuffle(&mut rng);
    // prefer the plain variant most of the time
    let want_sliced = rng.gen_bool(SLICED_VARIANT_RATE);
    candidates.sort_by_key(|p| p.sliced != want_sliced);
    for params in candidates.into_iter().take(24) {
        let spec = build_task(task_type, params, seed);
        if crate::expert::generate_expert_trajectory(scene, &spec).is_ok() {
            return Ok(spec);
        }
    }
    Err(TaskError::Infeasible { task_type, scene_id: scene.scene_id.clone() })
}
