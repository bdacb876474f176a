use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::classes::{Capabilities, Elevation, ObjectClass};
use super::WorldError;

pub type ObjectId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub i32, pub i32);

impl Cell {
    pub fn x(self) -> i32 {
        self.0
    }

    pub fn y(self) -> i32 {
        self.1
    }

    pub fn offset(self, dx: i32, dy: i32) -> Cell {
        Cell(self.0 + dx, self.1 + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self as usize + 1) % 4]
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self as usize + 3) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pitch {
    Down,
    Level,
    Up,
}

impl Pitch {
    pub const ALL: [Pitch; 3] = [Pitch::Down, Pitch::Level, Pitch::Up];

    pub fn up(self) -> Option<Pitch> {
        match self {
            Pitch::Down => Some(Pitch::Level),
            Pitch::Level => Some(Pitch::Up),
            Pitch::Up => None,
        }
    }

    pub fn down(self) -> Option<Pitch> {
        match self {
            Pitch::Up => Some(Pitch::Level),
            Pitch::Level => Some(Pitch::Down),
            Pitch::Down => None,
        }
    }

    /// Whether an object at `elevation`, `distance` cells ahead, is in frame.
    pub fn sees(self, elevation: Elevation, distance: u8) -> bool {
        match (self, distance) {
            (Pitch::Level, 1) => elevation == Elevation::Mid,
            (Pitch::Level, _) => true,
            (Pitch::Down, _) => elevation != Elevation::High,
            (Pitch::Up, 1) => elevation == Elevation::High,
            (Pitch::Up, _) => elevation != Elevation::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
    pub pitch: Pitch,
    pub inventory: Option<ObjectId>,
}

impl AgentPose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        AgentPose { cell, heading, pitch: Pitch::Level, inventory: None }
    }

    pub fn facing_cell(&self) -> Cell {
        let (dx, dy) = self.heading.delta();
        self.cell.offset(dx, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ObjectState {
    pub picked: bool,
    pub sliced: bool,
    pub heated: bool,
    pub cooled: bool,
    pub cleaned: bool,
    pub toggled_on: bool,
    pub open: bool,
}

/// Boolean state predicates named in goal conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateFlag {
    Picked,
    Sliced,
    Heated,
    Cooled,
    Cleaned,
    ToggledOn,
    Open,
}

impl ObjectState {
    pub fn get(&self, flag: StateFlag) -> bool {
        match flag {
            StateFlag::Picked => self.picked,
            StateFlag::Sliced => self.sliced,
            StateFlag::Heated => self.heated,
            StateFlag::Cooled => self.cooled,
            StateFlag::Cleaned => self.cleaned,
            StateFlag::ToggledOn => self.toggled_on,
            StateFlag::Open => self.open,
        }
    }

    /// Packs the flags visible to the observation model.
    pub fn bits(&self) -> u8 {
        (self.sliced as u8)
            | (self.heated as u8) << 1
            | (self.cooled as u8) << 2
            | (self.cleaned as u8) << 3
            | (self.toggled_on as u8) << 4
            | (self.open as u8) << 5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub class: ObjectClass,
    pub pos: Option<Cell>,
    pub caps: Capabilities,
    pub state: ObjectState,
    pub contained_in: Option<ObjectId>,
}

impl ObjectInstance {
    pub fn new(id: ObjectId, class: ObjectClass, pos: Cell) -> Self {
        ObjectInstance {
            id,
            class,
            pos: Some(pos),
            caps: class.capabilities(),
            state: ObjectState::default(),
            contained_in: None,
        }
    }
}

/// Discrete household room. Receptacles are the objects whose `caps.is_receptacle` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScene {
    pub scene_id: String,
    pub seed: u64,
    pub width: i32,
    pub height: i32,
    pub blocked: BTreeSet<Cell>,
    pub objects: Vec<ObjectInstance>,
}

impl GridScene {
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.0 >= 0 && cell.1 >= 0 && cell.0 < self.width && cell.1 < self.height
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        !self.in_bounds(cell) || self.blocked.contains(&cell)
    }

    pub fn fixture_at(&self, cell: Cell) -> Option<&ObjectInstance> {
        self.objects
            .iter()
            .find(|o| o.pos == Some(cell) && o.class.is_fixture() && o.contained_in.is_none())
    }

    /// Cells the agent can stand on.
    pub fn is_passable(&self, cell: Cell) -> bool {
        !self.is_blocked(cell) && self.fixture_at(cell).is_none()
    }

    pub fn passable_grid(&self) -> Vec<bool> {
        let mut grid = vec![true; (self.width * self.height) as usize];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.blocked.contains(&Cell(x, y)) {
                    grid[(y * self.width + x) as usize] = false;
                }
            }
        }
        for o in &self.objects {
            if let (Some(p), true, None) = (o.pos, o.class.is_fixture(), o.contained_in) {
                if self.in_bounds(p) {
                    grid[(p.1 * self.width + p.0) as usize] = false;
                }
            }
        }
        grid
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: ObjectId) -> Option<&mut ObjectInstance> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn receptacles(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(|o| o.caps.is_receptacle)
    }

    pub fn next_id(&self) -> ObjectId {
        self.objects.iter().map(|o| o.id + 1).max().unwrap_or(0)
    }

    /// Chain of containers from the direct parent outwards.
    pub fn containers_of(&self, id: ObjectId) -> Vec<ObjectId> {
        let mut chain = Vec::new();
        let mut current = self.object(id).and_then(|o| o.contained_in);
        while let Some(parent) = current {
            if chain.contains(&parent) {
                break;
            }
            chain.push(parent);
            current = self.object(parent).and_then(|o| o.contained_in);
        }
        chain
    }

    /// True when some enclosing container is openable and closed.
    pub fn is_enclosed(&self, id: ObjectId) -> bool {
        self.containers_of(id).into_iter().any(|c| {
            self.object(c).map(|o| o.caps.is_openable && !o.state.open).unwrap_or(false)
        })
    }

    /// Elevation of the outermost container (or the object itself).
    pub fn elevation_of(&self, id: ObjectId) -> Elevation {
        let root = self.containers_of(id).last().copied().unwrap_or(id);
        self.object(root).map(|o| o.class.elevation()).unwrap_or(Elevation::Mid)
    }

    /// Objects directly or transitively inside `id`.
    pub fn contents_of(&self, id: ObjectId) -> Vec<ObjectId> {
        self.objects
            .iter()
            .filter(|o| o.id != id && self.containers_of(o.id).contains(&id))
            .map(|o| o.id)
            .collect()
    }

    pub fn count_class(&self, class: ObjectClass) -> usize {
        self.objects.iter().filter(|o| o.class == class).count()
    }

    /// Checks the structural invariants of the scene.
    pub fn validate(&self) -> Result<(), WorldError> {
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(WorldError::InvalidScene(format!("duplicate object id {}", o.id)));
            }
            if o.caps != o.class.capabilities() {
                return Err(WorldError::InvalidScene(format!(
                    "object {} capabilities disagree with class {:?}",
                    o.id, o.class
                )));
            }
            if let Some(p) = o.pos {
                if !self.in_bounds(p) || self.blocked.contains(&p) {
                    return Err(WorldError::InvalidScene(format!(
                        "object {} placed on invalid cell {:?}",
                        o.id, p
                    )));
                }
            }
            if o.state.picked && o.pos.is_some() {
                return Err(WorldError::InvalidScene(format!(
                    "held object {} still has a position",
                    o.id
                )));
            }
        }
        for o in &self.objects {
            if let Some(parent) = o.contained_in {
                let container = self.object(parent).ok_or_else(|| {
                    WorldError::InvalidScene(format!("object {} inside missing receptacle {parent}", o.id))
                })?;
                if !container.caps.is_receptacle && !container.class.is_fixture() {
                    return Err(WorldError::InvalidScene(format!(
                        "object {} inside non-receptacle {parent}",
                        o.id
                    )));
                }
                if container.pos != o.pos {
                    return Err(WorldError::InvalidScene(format!(
                        "object {} position differs from its container {parent}",
                        o.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<GridScene, WorldError> {
        let scene: GridScene =
            serde_json::from_str(text).map_err(|e| WorldError::InvalidScene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_compose() {
        for h in Heading::ALL {
            assert_eq!(h.right().left(), h);
            assert_eq!(h.right().right().right().right(), h);
        }
    }

    #[test]
    fn pitch_limits() {
        assert_eq!(Pitch::Up.up(), None);
        assert_eq!(Pitch::Down.down(), None);
        assert_eq!(Pitch::Level.up(), Some(Pitch::Up));
    }

    #[test]
    fn validate_rejects_duplicate_ids() {
        let scene = GridScene {
            scene_id: "t".into(),
            seed: 0,
            width: 4,
            height: 4,
            blocked: BTreeSet::new(),
            objects: vec![
                ObjectInstance::new(0, ObjectClass::Mug, Cell(1, 1)),
                ObjectInstance::new(0, ObjectClass::Apple, Cell(2, 1)),
            ],
        };
        assert!(scene.validate().is_err());
    }
}
