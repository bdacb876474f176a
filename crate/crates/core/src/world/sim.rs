use serde::{Deserialize, Serialize};

use super::classes::ObjectClass;
use super::observe::{observe, view_from, Observation, WorldConfig};
use super::scene::{AgentPose, GridScene, ObjectId, ObjectInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NavAction {
    MoveAhead,
    RotateRight,
    RotateLeft,
    LookUp,
    LookDown,
}

impl NavAction {
    pub const ALL: [NavAction; 5] = [
        NavAction::MoveAhead,
        NavAction::RotateRight,
        NavAction::RotateLeft,
        NavAction::LookUp,
        NavAction::LookDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractAction {
    Pickup,
    Put,
    Open,
    Close,
    ToggleOn,
    ToggleOff,
    Slice,
}

impl InteractAction {
    pub const ALL: [InteractAction; 7] = [
        InteractAction::Pickup,
        InteractAction::Put,
        InteractAction::Open,
        InteractAction::Close,
        InteractAction::ToggleOn,
        InteractAction::ToggleOff,
        InteractAction::Slice,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Any action a policy can emit. Control tokens never reach the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Nav(NavAction),
    Interact(InteractAction, ObjectClass),
    Manipulate,
    Stop,
}

impl Action {
    pub fn is_token(self) -> bool {
        matches!(self, Action::Manipulate | Action::Stop)
    }

    pub fn label(self) -> String {
        match self {
            Action::Nav(a) => format!("{a:?}"),
            Action::Interact(a, c) => format!("{a:?}({c:?})"),
            Action::Manipulate => "<MANIPULATE>".into(),
            Action::Stop => "<STOP>".into(),
        }
    }
}

/// Slicing replaces the object with this many pieces.
pub const SLICE_PIECES: usize = 3;

pub fn step_nav(scene: &GridScene, pose: &AgentPose, action: NavAction) -> (AgentPose, bool) {
    let mut next = *pose;
    let ok = match action {
        NavAction::MoveAhead => {
            let ahead = pose.facing_cell();
            if scene.is_passable(ahead) {
                next.cell = ahead;
                true
            } else {
                false
            }
        }
        NavAction::RotateRight => {
            next.heading = pose.heading.right();
            true
        }
        NavAction::RotateLeft => {
            next.heading = pose.heading.left();
            true
        }
        NavAction::LookUp => match pose.pitch.up() {
            Some(p) => {
                next.pitch = p;
                true
            }
            None => false,
        },
        NavAction::LookDown => match pose.pitch.down() {
            Some(p) => {
                next.pitch = p;
                true
            }
            None => false,
        },
    };
    if ok {
        (next, true)
    } else {
        (*pose, false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionFailure {
    NoSuchObject,
    NotInteractable,
    HandsFull,
    HandsEmpty,
    NotPickupable,
    NotReceptacle,
    ReceptacleClosed,
    NotOpenable,
    AlreadyInState,
    NotToggleable,
    NoKnife,
    NotSliceable,
    SelfContainment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionOutcome {
    pub success: bool,
    pub failure: Option<InteractionFailure>,
    /// Ids created by the action (slice pieces).
    pub created: Vec<ObjectId>,
}

impl InteractionOutcome {
    fn ok() -> Self {
        InteractionOutcome { success: true, failure: None, created: Vec::new() }
    }

    fn fail(reason: InteractionFailure) -> Self {
        InteractionOutcome { success: false, failure: Some(reason), created: Vec::new() }
    }
}

fn is_interactable(scene: &GridScene, pose: &AgentPose, id: ObjectId, config: &WorldConfig) -> bool {
    view_from(scene, pose.cell, pose.heading, pose.pitch, config)
        .visible
        .iter()
        .any(|v| v.id == id && v.interactable)
}

/// Applies an interaction primitive to `target`. On failure the scene and pose are untouched.
pub fn apply_interaction(
    scene: &mut GridScene,
    pose: &mut AgentPose,
    action: InteractAction,
    target: ObjectId,
    config: &WorldConfig,
) -> InteractionOutcome {
    use InteractionFailure::*;

    let Some(obj) = scene.object(target).cloned() else {
        return InteractionOutcome::fail(NoSuchObject);
    };
    if !is_interactable(scene, pose, target, config) {
        return InteractionOutcome::fail(NotInteractable);
    }
    let mut created = Vec::new();
    match action {
        InteractAction::Pickup => {
            if pose.inventory.is_some() {
                return InteractionOutcome::fail(HandsFull);
            }
            if !obj.caps.is_pickupable {
                return InteractionOutcome::fail(NotPickupable);
            }
            let contents = scene.contents_of(target);
            let o = scene.object_mut(target).expect("checked above");
            o.pos = None;
            o.contained_in = None;
            o.state.picked = true;
            for id in contents {
                scene.object_mut(id).expect("content exists").pos = None;
            }
            pose.inventory = Some(target);
        }
        InteractAction::Put => {
            let Some(held) = pose.inventory else {
                return InteractionOutcome::fail(HandsEmpty);
            };
            if !obj.caps.is_receptacle {
                return InteractionOutcome::fail(NotReceptacle);
            }
            if obj.caps.is_openable && !obj.state.open {
                return InteractionOutcome::fail(ReceptacleClosed);
            }
            if held == target || scene.containers_of(target).contains(&held) {
                return InteractionOutcome::fail(SelfContainment);
            }
            let contents = scene.contents_of(held);
            let o = scene.object_mut(held).expect("held object exists");
            o.pos = obj.pos;
            o.contained_in = Some(target);
            o.state.picked = false;
            for id in contents {
                scene.object_mut(id).expect("content exists").pos = obj.pos;
            }
            pose.inventory = None;
        }
        InteractAction::Open | InteractAction::Close => {
            if !obj.caps.is_openable {
                return InteractionOutcome::fail(NotOpenable);
            }
            let want_open = action == InteractAction::Open;
            if obj.state.open == want_open {
                return InteractionOutcome::fail(AlreadyInState);
            }
            scene.object_mut(target).expect("checked above").state.open = want_open;
        }
        InteractAction::ToggleOn | InteractAction::ToggleOff => {
            if !obj.caps.is_toggleable {
                return InteractionOutcome::fail(NotToggleable);
            }
            let want_on = action == InteractAction::ToggleOn;
            if obj.state.toggled_on == want_on {
                return InteractionOutcome::fail(AlreadyInState);
            }
            scene.object_mut(target).expect("checked above").state.toggled_on = want_on;
        }
        InteractAction::Slice => {
            let holds_knife = pose
                .inventory
                .and_then(|id| scene.object(id))
                .map(|o| o.class == ObjectClass::Knife)
                .unwrap_or(false);
            if !holds_knife {
                return InteractionOutcome::fail(NoKnife);
            }
            if !obj.caps.is_sliceable || obj.state.sliced {
                return InteractionOutcome::fail(NotSliceable);
            }
            let first = scene.next_id();
            scene.objects.retain(|o| o.id != target);
            for k in 0..SLICE_PIECES as ObjectId {
                let mut piece = ObjectInstance { id: first + k, ..obj.clone() };
                piece.state.sliced = true;
                created.push(piece.id);
                scene.objects.push(piece);
            }
        }
    }
    settle(scene);
    InteractionOutcome { created, ..InteractionOutcome::ok() }
}

/// Applies appliance effects to everything currently inside a working appliance.
pub fn settle(scene: &mut GridScene) {
    let mut heat = Vec::new();
    let mut cool = Vec::new();
    let mut clean = Vec::new();
    for o in &scene.objects {
        if o.class.is_fixture() {
            continue;
        }
        for c in scene.containers_of(o.id) {
            let Some(container) = scene.object(c) else { continue };
            match container.class {
                ObjectClass::Microwave if container.state.toggled_on && o.caps.can_heat => {
                    heat.push(o.id)
                }
                ObjectClass::Fridge if !container.state.open && o.caps.can_cool => cool.push(o.id),
                ObjectClass::SinkBasin if o.caps.can_clean => {
                    let running = scene.objects.iter().any(|f| {
                        f.class == ObjectClass::Faucet && f.contained_in == Some(c) && f.state.toggled_on
                    });
                    if running {
                        clean.push(o.id);
                    }
                }
                _ => {}
            }
        }
    }
    for id in heat {
        let o = scene.object_mut(id).expect("collected from scene");
        o.state.heated = true;
        o.state.cooled = false;
    }
    for id in cool {
        scene.object_mut(id).expect("collected from scene").state.cooled = true;
    }
    for id in clean {
        scene.object_mut(id).expect("collected from scene").state.cleaned = true;
    }
}

/// Resolves a class-level target to the nearest visible instance (lowest id on ties).
pub fn ground_target(scene: &GridScene, pose: &AgentPose, class: ObjectClass, config: &WorldConfig) -> Option<ObjectId> {
    view_from(scene, pose.cell, pose.heading, pose.pitch, config)
        .visible
        .iter()
        .filter(|v| v.class == class)
        .min_by_key(|v| (v.distance, v.offset.unsigned_abs(), v.id))
        .map(|v| v.id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub success: bool,
    pub target: Option<ObjectId>,
}

/// A scene and agent pose confined to one episode.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scene: GridScene,
    pub pose: AgentPose,
    pub config: WorldConfig,
}

impl Simulator {
    pub fn new(scene: GridScene, pose: AgentPose, config: WorldConfig) -> Self {
        Simulator { scene, pose, config }
    }

    pub fn observe(&self) -> Observation {
        observe(&self.scene, &self.pose, &self.config)
    }

    pub fn navigate(&mut self, action: NavAction) -> bool {
        let (pose, ok) = step_nav(&self.scene, &self.pose, action);
        self.pose = pose;
        ok
    }

    /// Executes an interaction on an explicit object id.
    pub fn interact_with(&mut self, action: InteractAction, target: ObjectId) -> InteractionOutcome {
        apply_interaction(&mut self.scene, &mut self.pose, action, target, &self.config)
    }

    /// Executes any simulator action; interaction targets are grounded by class unless given.
    pub fn execute(&mut self, action: Action, target: Option<ObjectId>) -> StepOutcome {
        match action {
            Action::Nav(a) => StepOutcome { success: self.navigate(a), target: None },
            Action::Interact(a, class) => {
                let target = target.or_else(|| ground_target(&self.scene, &self.pose, class, &self.config));
                match target {
                    Some(id) => StepOutcome { success: self.interact_with(a, id).success, target: Some(id) },
                    None => StepOutcome { success: false, target: None },
                }
            }
            Action::Manipulate | Action::Stop => StepOutcome { success: true, target: None },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::scene::{Cell, Heading};
    use std::collections::BTreeSet;

    fn kitchen() -> (GridScene, AgentPose) {
        let mut scene = GridScene {
            scene_id: "kitchen".into(),
            seed: 0,
            width: 7,
            height: 7,
            blocked: BTreeSet::new(),
            objects: Vec::new(),
        };
        let mut add = |class, at, inside: Option<ObjectId>| {
            let id = scene.next_id();
            let mut o = ObjectInstance::new(id, class, at);
            o.contained_in = inside;
            scene.objects.push(o);
            id
        };
        let counter = add(ObjectClass::CounterTop, Cell(3, 2), None);
        add(ObjectClass::Apple, Cell(3, 2), Some(counter));
        add(ObjectClass::Potato, Cell(3, 2), Some(counter));
        let mw = add(ObjectClass::Microwave, Cell(2, 3), None);
        let _ = mw;
        let fridge = add(ObjectClass::Fridge, Cell(4, 3), None);
        let _ = fridge;
        let knife_table = add(ObjectClass::SideTable, Cell(3, 4), None);
        add(ObjectClass::Knife, Cell(3, 4), Some(knife_table));
        scene.object_mut(3).unwrap().state.open = true;
        (scene, AgentPose::new(Cell(3, 3), Heading::North))
    }

    fn id_of(scene: &GridScene, class: ObjectClass) -> ObjectId {
        scene.objects.iter().find(|o| o.class == class).unwrap().id
    }

    #[test]
    fn move_ahead_into_free_cell_and_into_wall() {
        let (scene, _) = kitchen();
        let pose = AgentPose::new(Cell(1, 1), Heading::East);
        let (next, ok) = step_nav(&scene, &pose, NavAction::MoveAhead);
        assert!(ok);
        assert_eq!(next.cell, Cell(2, 1));
        let pose = AgentPose::new(Cell(0, 1), Heading::West);
        let (next, ok) = step_nav(&scene, &pose, NavAction::MoveAhead);
        assert!(!ok);
        assert_eq!(next, pose);
    }

    #[test]
    fn four_right_turns_restore_heading() {
        let (scene, pose) = kitchen();
        let mut p = pose;
        for _ in 0..4 {
            p = step_nav(&scene, &p, NavAction::RotateRight).0;
        }
        assert_eq!(p, pose);
    }

    #[test]
    fn look_fails_at_limits() {
        let (scene, pose) = kitchen();
        let (up, ok) = step_nav(&scene, &pose, NavAction::LookUp);
        assert!(ok);
        let (again, ok) = step_nav(&scene, &up, NavAction::LookUp);
        assert!(!ok);
        assert_eq!(again, up);
    }

    #[test]
    fn pickup_requires_empty_hands() {
        let (mut scene, mut pose) = kitchen();
        let cfg = WorldConfig::default();
        let apple = id_of(&scene, ObjectClass::Apple);
        let out = apply_interaction(&mut scene, &mut pose, InteractAction::Pickup, apple, &cfg);
        assert!(out.success);
        assert_eq!(pose.inventory, Some(apple));
        assert_eq!(scene.object(apple).unwrap().pos, None);

        let potato = id_of(&scene, ObjectClass::Potato);
        let before = scene.clone();
        let pose_before = pose;
        let out = apply_interaction(&mut scene, &mut pose, InteractAction::Pickup, potato, &cfg);
        assert_eq!(out.failure, Some(InteractionFailure::HandsFull));
        assert_eq!(scene, before);
        assert_eq!(pose, pose_before);
    }

    #[test]
    fn heat_script_heats_the_potato() {
        let (scene, pose) = kitchen();
        let mut sim = Simulator::new(scene, pose, WorldConfig::default());
        let potato = id_of(&sim.scene, ObjectClass::Potato);
        let mw = id_of(&sim.scene, ObjectClass::Microwave);
        assert!(sim.interact_with(InteractAction::Pickup, potato).success);
        sim.navigate(NavAction::RotateLeft);
        assert!(sim.interact_with(InteractAction::Put, mw).success);
        assert!(!sim.scene.object(potato).unwrap().state.heated);
        for a in [InteractAction::Close, InteractAction::ToggleOn] {
            assert!(sim.interact_with(a, mw).success, "{a:?}");
        }
        assert!(sim.scene.object(potato).unwrap().state.heated);
        for a in [InteractAction::ToggleOff, InteractAction::Open] {
            assert!(sim.interact_with(a, mw).success, "{a:?}");
        }
        assert!(sim.interact_with(InteractAction::Pickup, potato).success);
        assert!(sim.scene.object(potato).unwrap().state.heated);
    }

    #[test]
    fn slice_replaces_object_with_pieces() {
        let (scene, pose) = kitchen();
        let mut sim = Simulator::new(scene, pose, WorldConfig::default());
        let apple = id_of(&sim.scene, ObjectClass::Apple);
        assert_eq!(
            sim.interact_with(InteractAction::Slice, apple).failure,
            Some(InteractionFailure::NoKnife)
        );
        sim.navigate(NavAction::RotateRight);
        sim.navigate(NavAction::RotateRight);
        let knife = id_of(&sim.scene, ObjectClass::Knife);
        assert!(sim.interact_with(InteractAction::Pickup, knife).success);
        sim.navigate(NavAction::RotateLeft);
        sim.navigate(NavAction::RotateLeft);
        let out = sim.interact_with(InteractAction::Slice, apple);
        assert!(out.success);
        assert_eq!(out.created.len(), SLICE_PIECES);
        assert!(sim.scene.object(apple).is_none());
        assert_eq!(sim.scene.count_class(ObjectClass::Apple), SLICE_PIECES);
        assert!(sim.scene.validate().is_ok());
    }

    #[test]
    fn cooling_after_heating_keeps_both_flags() {
        let (mut scene, _) = kitchen();
        let potato = id_of(&scene, ObjectClass::Potato);
        let fridge = id_of(&scene, ObjectClass::Fridge);
        let o = scene.object_mut(potato).unwrap();
        o.state.heated = true;
        o.contained_in = Some(fridge);
        o.pos = Some(Cell(4, 3));
        settle(&mut scene);
        let s = scene.object(potato).unwrap().state;
        assert!(s.heated && s.cooled);
    }
}
