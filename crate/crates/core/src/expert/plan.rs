use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::ExpertError;
use crate::tasks::{evaluate_goal_conditions, Subgoal, SubgoalKind, TaskSpec};
use crate::world::{
    start_pose, Action, AgentPose, Cell, GridScene, Heading, InteractAction, NavAction, ObjectClass, ObjectId,
    Pitch, Simulator, StateFlag, WorldConfig,
};

/// Which instances of a class count as the navigation goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetQuery {
    pub class: ObjectClass,
    pub require: Option<StateFlag>,
    /// Skip instances sitting directly in a receptacle of this class.
    pub exclude_in: Option<ObjectClass>,
    /// Only instances directly holding an object of this class.
    pub containing: Option<ObjectClass>,
}

impl TargetQuery {
    pub fn class(class: ObjectClass) -> Self {
        TargetQuery { class, require: None, exclude_in: None, containing: None }
    }

    pub fn matches(&self, scene: &GridScene, id: ObjectId) -> bool {
        let Some(o) = scene.object(id) else { return false };
        if o.class != self.class {
            return false;
        }
        if let Some(flag) = self.require {
            if !o.state.get(flag) {
                return false;
            }
        }
        if let Some(r) = self.exclude_in {
            if o.contained_in.and_then(|c| scene.object(c)).map(|c| c.class == r).unwrap_or(false) {
                return false;
            }
        }
        if let Some(inner) = self.containing {
            let holds = scene.objects.iter().any(|x| x.class == inner && x.contained_in == Some(id));
            if !holds {
                return false;
            }
        }
        true
    }
}

/// Navigation query for the Goto subgoal at `index`, derived from the surrounding subgoals.
pub fn query_for(spec: &TaskSpec, index: usize) -> TargetQuery {
    let goal = spec.subgoals[index];
    let mut q = TargetQuery::class(goal.target_class);
    let Some(next) = spec.subgoals.get(index + 1) else { return q };
    pickup_constraints(spec, index + 1, next, &mut q);
    q
}

fn pickup_constraints(spec: &TaskSpec, index: usize, sg: &Subgoal, q: &mut TargetQuery) {
    if sg.kind != SubgoalKind::PickupObject {
        return;
    }
    let earlier = &spec.subgoals[..index];
    for s in earlier {
        match s.kind {
            SubgoalKind::SliceObject if s.target_class == sg.target_class => q.require = Some(StateFlag::Sliced),
            SubgoalKind::PutObject if s.target_class == sg.target_class => q.exclude_in = s.receptacle_class,
            SubgoalKind::PutObject if s.receptacle_class == Some(sg.target_class) => {
                q.containing = Some(s.target_class)
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct NavState {
    cell: Cell,
    heading: Heading,
    pitch: Pitch,
}

struct NavGrid {
    width: i32,
    height: i32,
    passable: Vec<bool>,
}

impl NavGrid {
    fn new(scene: &GridScene) -> Self {
        NavGrid { width: scene.width, height: scene.height, passable: scene.passable_grid() }
    }

    fn passable(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height && self.passable[(c.1 * self.width + c.0) as usize]
    }

    fn index(&self, s: NavState) -> usize {
        (((s.cell.1 * self.width + s.cell.0) as usize) * 4 + s.heading as usize) * 3 + s.pitch as usize
    }

    /// Mirrors `step_nav`; `None` on a failed action.
    fn step(&self, s: NavState, a: NavAction) -> Option<NavState> {
        let mut n = s;
        match a {
            NavAction::MoveAhead => {
                let (dx, dy) = s.heading.delta();
                let ahead = s.cell.offset(dx, dy);
                if !self.passable(ahead) {
                    return None;
                }
                n.cell = ahead;
            }
            NavAction::RotateRight => n.heading = s.heading.right(),
            NavAction::RotateLeft => n.heading = s.heading.left(),
            NavAction::LookUp => n.pitch = s.pitch.up()?,
            NavAction::LookDown => n.pitch = s.pitch.down()?,
        }
        Some(n)
    }
}

/// Instance `ground_target` would pick when standing in front of `cell` at `pitch`, if interactable.
fn grounded_at(scene: &GridScene, class: ObjectClass) -> HashMap<(Cell, Pitch), ObjectId> {
    let mut map: HashMap<(Cell, Pitch), ObjectId> = HashMap::new();
    for o in scene.objects.iter().filter(|o| o.class == class) {
        let Some(pos) = o.pos else { continue };
        if scene.is_enclosed(o.id) {
            continue;
        }
        let elevation = scene.elevation_of(o.id);
        for p in Pitch::ALL {
            if p.sees(elevation, 1) {
                map.entry((pos, p)).and_modify(|id| *id = (*id).min(o.id)).or_insert(o.id);
            }
        }
    }
    map
}

/// Shortest navigation to a pose where an instance matching `query` is interactable.
///
/// Returns the actions (without the trailing MANIPULATE) and the grounded instance.
pub fn plan_navigation_to(
    scene: &GridScene,
    pose: &AgentPose,
    query: &TargetQuery,
    config: &WorldConfig,
) -> Result<(Vec<NavAction>, ObjectId), ExpertError> {
    let _ = config; // interaction range 1 is what the goal test encodes
    let goals: HashMap<(Cell, Pitch), ObjectId> = grounded_at(scene, query.class)
        .into_iter()
        .filter(|(_, id)| query.matches(scene, *id))
        .collect();
    let unreachable = || ExpertError::Unreachable { class: query.class };
    if goals.is_empty() {
        return Err(unreachable());
    }
    let grid = NavGrid::new(scene);
    let start = NavState { cell: pose.cell, heading: pose.heading, pitch: pose.pitch };
    let goal_of = |s: NavState| {
        let (dx, dy) = s.heading.delta();
        goals.get(&(s.cell.offset(dx, dy), s.pitch)).copied()
    };
    let mut parent: Vec<Option<(usize, NavAction)>> = vec![None; (grid.width * grid.height) as usize * 12];
    let mut seen = vec![false; parent.len()];
    seen[grid.index(start)] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        if let Some(id) = goal_of(s) {
            let mut plan = Vec::new();
            let mut cur = grid.index(s);
            while let Some((prev, a)) = parent[cur] {
                plan.push(a);
                cur = prev;
            }
            plan.reverse();
            return Ok((plan, id));
        }
        for a in NavAction::ALL {
            if let Some(n) = grid.step(s, a) {
                let i = grid.index(n);
                if !seen[i] {
                    seen[i] = true;
                    parent[i] = Some((grid.index(s), a));
                    queue.push_back(n);
                }
            }
        }
    }
    Err(unreachable())
}

/// BFS plan to the nearest pose with some `target_class` instance interactable, ending in MANIPULATE.
pub fn plan_navigation(
    scene: &GridScene,
    pose: &AgentPose,
    target_class: ObjectClass,
    config: &WorldConfig,
) -> Result<Vec<Action>, ExpertError> {
    let (plan, _) = plan_navigation_to(scene, pose, &TargetQuery::class(target_class), config)?;
    let mut out: Vec<Action> = plan.into_iter().map(Action::Nav).collect();
    out.push(Action::Manipulate);
    Ok(out)
}

fn interactable(scene: &GridScene, pose: &AgentPose, class: ObjectClass, config: &WorldConfig) -> Option<ObjectId> {
    crate::world::view_from(scene, pose.cell, pose.heading, pose.pitch, config)
        .visible
        .iter()
        .filter(|v| v.class == class && v.interactable)
        .min_by_key(|v| v.id)
        .map(|v| v.id)
}

/// Canonical primitive sequence for an interaction subgoal, terminated by STOP.
pub fn plan_interaction_script(
    subgoal: &Subgoal,
    scene: &GridScene,
    pose: &AgentPose,
    config: &WorldConfig,
) -> Result<Vec<Action>, ExpertError> {
    use InteractAction::*;
    let need = |class: ObjectClass| -> Result<ObjectId, ExpertError> {
        interactable(scene, pose, class, config)
            .ok_or(ExpertError::Scripting { kind: subgoal.kind, missing: class })
    };
    let obj = subgoal.target_class;
    let held = pose.inventory.and_then(|id| scene.object(id)).map(|o| o.class);
    let holding = |class: ObjectClass| -> Result<(), ExpertError> {
        if held == Some(class) {
            Ok(())
        } else {
            Err(ExpertError::Scripting { kind: subgoal.kind, missing: class })
        }
    };
    let act = |a: InteractAction, c: ObjectClass| Action::Interact(a, c);
    let mut script = match subgoal.kind {
        SubgoalKind::GotoLocation => return Err(ExpertError::NotInteraction),
        SubgoalKind::PickupObject => {
            need(obj)?;
            vec![act(Pickup, obj)]
        }
        SubgoalKind::PutObject => {
            let r = subgoal.receptacle_class.unwrap_or(obj);
            need(r)?;
            vec![act(Put, r)]
        }
        SubgoalKind::HeatObject => {
            let mw = ObjectClass::Microwave;
            let id = need(mw)?;
            holding(obj)?;
            let mut s = Vec::new();
            if !scene.object(id).map(|o| o.state.open).unwrap_or(false) {
                s.push(act(Open, mw));
            }
            s.extend([act(Put, mw), act(Close, mw), act(ToggleOn, mw), act(ToggleOff, mw), act(Open, mw)]);
            s.extend([act(Pickup, obj), act(Close, mw)]);
            s
        }
        SubgoalKind::CoolObject => {
            let fr = ObjectClass::Fridge;
            let id = need(fr)?;
            holding(obj)?;
            let mut s = Vec::new();
            if !scene.object(id).map(|o| o.state.open).unwrap_or(false) {
                s.push(act(Open, fr));
            }
            s.extend([act(Put, fr), act(Close, fr), act(Open, fr), act(Pickup, obj), act(Close, fr)]);
            s
        }
        SubgoalKind::CleanObject => {
            need(ObjectClass::SinkBasin)?;
            need(ObjectClass::Faucet)?;
            holding(obj)?;
            vec![
                act(Put, ObjectClass::SinkBasin),
                act(ToggleOn, ObjectClass::Faucet),
                act(ToggleOff, ObjectClass::Faucet),
                act(Pickup, obj),
            ]
        }
        SubgoalKind::SliceObject => {
            need(obj)?;
            holding(ObjectClass::Knife)?;
            vec![act(Slice, obj)]
        }
        SubgoalKind::ToggleObject => {
            need(obj)?;
            vec![act(ToggleOn, obj)]
        }
    };
    script.push(Action::Stop);
    Ok(script)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertStep {
    pub subgoal: usize,
    pub action: Action,
    pub target: Option<ObjectId>,
}

/// Coarse heading change at the start of a navigation segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Straight,
    Left,
    Right,
    Around,
}

/// Facts about each subgoal needed to describe it in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalContext {
    pub direction: Option<Direction>,
    /// Fixture the subgoal happens at.
    pub landmark: Option<ObjectClass>,
}

fn direction_of(plan: &[NavAction]) -> Option<Direction> {
    let first_moves: Vec<NavAction> = plan
        .iter()
        .copied()
        .filter(|a| !matches!(a, NavAction::LookUp | NavAction::LookDown))
        .take(2)
        .collect();
    match first_moves.as_slice() {
        [] => None,
        [NavAction::RotateLeft, NavAction::RotateLeft] | [NavAction::RotateRight, NavAction::RotateRight] => {
            Some(Direction::Around)
        }
        [NavAction::RotateLeft, ..] => Some(Direction::Left),
        [NavAction::RotateRight, ..] => Some(Direction::Right),
        _ => Some(Direction::Straight),
    }
}

fn landmark_of(scene: &GridScene, id: ObjectId) -> Option<ObjectClass> {
    let root = scene.containers_of(id).last().copied().unwrap_or(id);
    scene.object(root).map(|o| o.class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instructions {
    pub goal: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTrajectory {
    pub task: TaskSpec,
    #[serde(rename = "scene_ref")]
    pub scene_id: String,
    pub start: AgentPose,
    pub steps: Vec<ExpertStep>,
    pub contexts: Vec<SubgoalContext>,
    pub instructions: Instructions,
    /// Simulator-executed actions only.
    #[serde(rename = "L")]
    pub path_length: usize,
}

impl ExpertTrajectory {
    /// Steps belonging to subgoal `index`.
    pub fn segment(&self, index: usize) -> impl Iterator<Item = &ExpertStep> {
        self.steps.iter().filter(move |s| s.subgoal == index)
    }
}

/// Concatenated navigation plans and interaction scripts, replayed for validity as they are built.
pub fn generate_expert_trajectory(scene: &GridScene, spec: &TaskSpec) -> Result<ExpertTrajectory, ExpertError> {
    let config = WorldConfig::default();
    let start = start_pose(scene, spec.seed);
    let mut sim = Simulator::new(scene.clone(), start, config);
    let mut steps = Vec::new();
    let mut contexts = Vec::new();
    for (i, sg) in spec.subgoals.iter().enumerate() {
        if sg.kind.is_navigation() {
            let q = query_for(spec, i);
            let (plan, goal) = plan_navigation_to(&sim.scene, &sim.pose, &q, &config)?;
            for &a in &plan {
                if !sim.navigate(a) {
                    return Err(ExpertError::ReplayFailed { subgoal: i, action: Action::Nav(a) });
                }
                steps.push(ExpertStep { subgoal: i, action: Action::Nav(a), target: None });
            }
            steps.push(ExpertStep { subgoal: i, action: Action::Manipulate, target: Some(goal) });
            contexts.push(SubgoalContext { direction: direction_of(&plan), landmark: landmark_of(&sim.scene, goal) });
        } else {
            let script = plan_interaction_script(sg, &sim.scene, &sim.pose, &config)?;
            let source = crate::world::ground_target(&sim.scene, &sim.pose, sg.target_class, &config)
                .and_then(|id| landmark_of(&sim.scene, id));
            for &a in &script {
                let out = sim.execute(a, None);
                if !out.success {
                    return Err(ExpertError::ReplayFailed { subgoal: i, action: a });
                }
                steps.push(ExpertStep { subgoal: i, action: a, target: out.target });
            }
            contexts.push(SubgoalContext { direction: None, landmark: source });
        }
    }
    let status = evaluate_goal_conditions(&sim.scene, spec);
    if !status.success {
        return Err(ExpertError::GoalUnsatisfied { satisfied: status.satisfied, total: status.total });
    }
    let path_length = steps.iter().filter(|s| !s.action.is_token()).count();
    let mut traj = ExpertTrajectory {
        task: spec.clone(),
        scene_id: scene.scene_id.clone(),
        start,
        steps,
        contexts,
        instructions: Instructions { goal: String::new(), steps: Vec::new() },
        path_length,
    };
    traj.instructions = super::templates::generate_instructions(&traj, spec.seed);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectInstance;
    use std::collections::BTreeSet;

    fn open_room(w: i32, h: i32) -> GridScene {
        GridScene { scene_id: "t".into(), seed: 0, width: w, height: h, blocked: BTreeSet::new(), objects: Vec::new() }
    }

    fn add(scene: &mut GridScene, class: ObjectClass, at: Cell, inside: Option<ObjectId>) -> ObjectId {
        let id = scene.next_id();
        let mut o = ObjectInstance::new(id, class, at);
        o.contained_in = inside;
        scene.objects.push(o);
        id
    }

    #[test]
    fn already_interactable_is_just_manipulate() {
        let mut scene = open_room(6, 6);
        add(&mut scene, ObjectClass::CounterTop, Cell(2, 1), None);
        let pose = AgentPose::new(Cell(2, 2), Heading::North);
        let plan = plan_navigation(&scene, &pose, ObjectClass::CounterTop, &WorldConfig::default()).unwrap();
        assert_eq!(plan, vec![Action::Manipulate]);
    }

    #[test]
    fn three_cells_ahead_takes_two_moves() {
        let mut scene = open_room(8, 8);
        add(&mut scene, ObjectClass::CounterTop, Cell(3, 1), None);
        let pose = AgentPose::new(Cell(3, 4), Heading::North);
        let plan = plan_navigation(&scene, &pose, ObjectClass::CounterTop, &WorldConfig::default()).unwrap();
        let m = Action::Nav(NavAction::MoveAhead);
        assert_eq!(plan, vec![m, m, Action::Manipulate]);
    }

    #[test]
    fn walled_off_target_is_unreachable() {
        let mut scene = open_room(8, 8);
        add(&mut scene, ObjectClass::CounterTop, Cell(5, 5), None);
        for c in [Cell(4, 5), Cell(6, 5), Cell(5, 4), Cell(5, 6)] {
            scene.blocked.insert(c);
        }
        let pose = AgentPose::new(Cell(1, 1), Heading::North);
        let err = plan_navigation(&scene, &pose, ObjectClass::CounterTop, &WorldConfig::default()).unwrap_err();
        assert_eq!(err, ExpertError::Unreachable { class: ObjectClass::CounterTop });
    }

    #[test]
    fn low_receptacle_needs_look_down() {
        let mut scene = open_room(6, 6);
        add(&mut scene, ObjectClass::GarbageCan, Cell(2, 1), None);
        let pose = AgentPose::new(Cell(2, 2), Heading::North);
        let plan = plan_navigation(&scene, &pose, ObjectClass::GarbageCan, &WorldConfig::default()).unwrap();
        assert_eq!(plan, vec![Action::Nav(NavAction::LookDown), Action::Manipulate]);
    }

    #[test]
    fn heat_script_without_microwave_is_an_error() {
        let mut scene = open_room(6, 6);
        let c = add(&mut scene, ObjectClass::CounterTop, Cell(2, 1), None);
        add(&mut scene, ObjectClass::Potato, Cell(2, 1), Some(c));
        let pose = AgentPose::new(Cell(2, 2), Heading::North);
        let sg = Subgoal::interact(SubgoalKind::HeatObject, ObjectClass::Potato, Some(ObjectClass::Microwave));
        let err = plan_interaction_script(&sg, &scene, &pose, &WorldConfig::default()).unwrap_err();
        assert_eq!(err, ExpertError::Scripting { kind: SubgoalKind::HeatObject, missing: ObjectClass::Microwave });
    }

    #[test]
    fn cool_script_is_six_actions_and_stop() {
        let mut scene = open_room(6, 6);
        add(&mut scene, ObjectClass::Fridge, Cell(2, 1), None);
        let c = add(&mut scene, ObjectClass::CounterTop, Cell(3, 2), None);
        let apple = add(&mut scene, ObjectClass::Apple, Cell(3, 2), Some(c));
        let mut pose = AgentPose::new(Cell(2, 2), Heading::North);
        let o = scene.object_mut(apple).unwrap();
        o.pos = None;
        o.contained_in = None;
        o.state.picked = true;
        pose.inventory = Some(apple);
        let sg = Subgoal::interact(SubgoalKind::CoolObject, ObjectClass::Apple, Some(ObjectClass::Fridge));
        let script = plan_interaction_script(&sg, &scene, &pose, &WorldConfig::default()).unwrap();
        use InteractAction::*;
        let f = ObjectClass::Fridge;
        assert_eq!(
            script,
            vec![
                Action::Interact(Open, f),
                Action::Interact(Put, f),
                Action::Interact(Close, f),
                Action::Interact(Open, f),
                Action::Interact(Pickup, ObjectClass::Apple),
                Action::Interact(Close, f),
                Action::Stop,
            ]
        );
    }

    #[test]
    fn direction_hints() {
        use NavAction::*;
        assert_eq!(direction_of(&[]), None);
        assert_eq!(direction_of(&[RotateLeft, MoveAhead]), Some(Direction::Left));
        assert_eq!(direction_of(&[RotateRight, RotateRight, MoveAhead]), Some(Direction::Around));
        assert_eq!(direction_of(&[LookDown, MoveAhead]), Some(Direction::Straight));
        assert_eq!(direction_of(&[LookDown]), None);
    }

    /// Exhaustive depth-limited search: is there any plan of at most `depth` actions reaching a goal?
    fn exists_plan(scene: &GridScene, pose: AgentPose, class: ObjectClass, depth: usize) -> bool {
        exists_plan_memo(scene, pose, class, depth, &mut HashMap::new())
    }

    fn exists_plan_memo(
        scene: &GridScene,
        pose: AgentPose,
        class: ObjectClass,
        depth: usize,
        failed: &mut HashMap<AgentPose, usize>,
    ) -> bool {
        if failed.get(&pose).map(|&d| d >= depth).unwrap_or(false) {
            return false;
        }
        let cfg = WorldConfig::default();
        let hit = crate::world::view_from(scene, pose.cell, pose.heading, pose.pitch, &cfg)
            .visible
            .iter()
            .any(|v| v.class == class && v.interactable);
        if hit {
            return true;
        }
        if depth == 0 {
            return false;
        }
        let found = NavAction::ALL.iter().any(|&a| {
            let (next, ok) = crate::world::step_nav(scene, &pose, a);
            ok && exists_plan_memo(scene, next, class, depth - 1, failed)
        });
        if !found {
            failed.insert(pose, depth);
        }
        found
    }

    #[test]
    fn bfs_is_optimal_against_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cfg = WorldConfig::default();
        let mut checked = 0;
        for _ in 0..40 {
            let mut scene = open_room(6, 6);
            for _ in 0..4 {
                scene.blocked.insert(Cell(rng.gen_range(0..6), rng.gen_range(0..6)));
            }
            let target = Cell(rng.gen_range(0..6), rng.gen_range(0..6));
            if scene.blocked.contains(&target) {
                continue;
            }
            let class = [ObjectClass::CounterTop, ObjectClass::Shelf, ObjectClass::GarbageCan][rng.gen_range(0..3)];
            add(&mut scene, class, target, None);
            let start = Cell(rng.gen_range(0..6), rng.gen_range(0..6));
            if !scene.is_passable(start) {
                continue;
            }
            let pose = AgentPose::new(start, Heading::ALL[rng.gen_range(0..4)]);
            match plan_navigation(&scene, &pose, class, &cfg) {
                Ok(plan) => {
                    let n = plan.len() - 1;
                    assert!(exists_plan(&scene, pose, class, n));
                    if n > 0 {
                        assert!(!exists_plan(&scene, pose, class, n - 1), "shorter plan exists");
                    }
                    // replaying the plan reaches an interactable instance
                    let mut p = pose;
                    for a in &plan[..n] {
                        let Action::Nav(a) = a else { unreachable!() };
                        p = crate::world::step_nav(&scene, &p, *a).0;
                    }
                    assert!(exists_plan(&scene, p, class, 0));
                    checked += 1;
                }
                Err(_) => assert!(!exists_plan(&scene, pose, class, 7)),
            }
        }
        assert!(checked > 10);
    }
}
