use serde::{Deserialize, Serialize};

use super::classes::ObjectClass;
use super::scene::{AgentPose, Cell, GridScene, Heading, ObjectId, Pitch};

/// Egocentric view plus the four virtual neighbours.
pub const NUM_VIEWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub visibility_range: u8,
    pub interaction_range: u8,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { visibility_range: 3, interaction_range: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: ObjectId,
    pub class: ObjectClass,
    /// Depth along the faced direction, in cells.
    pub distance: u8,
    /// Lateral offset, negative to the left.
    pub offset: i8,
    pub interactable: bool,
    pub state_bits: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViewFeature {
    pub visible: Vec<VisibleObject>,
    /// Passable cells straight ahead, capped at the visibility range.
    pub free_ahead: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// `[ego, rotate-left, rotate-right, look-up, look-down]`.
    pub views: Vec<ViewFeature>,
    pub fingerprint: u64,
    pub held: Option<ObjectClass>,
}

impl Observation {
    pub fn ego(&self) -> &ViewFeature {
        &self.views[0]
    }

    /// Whether some instance of `class` can be interacted with right now.
    pub fn interactable(&self, class: ObjectClass) -> bool {
        self.ego().visible.iter().any(|v| v.class == class && v.interactable)
    }
}

/// Cells in the view cone, nearest first, as `(cell, depth, lateral)`.
fn cone(origin: Cell, heading: Heading, range: u8) -> impl Iterator<Item = (Cell, u8, i8)> {
    let (fx, fy) = heading.delta();
    let (rx, ry) = heading.right().delta();
    (1..=range as i32).flat_map(move |d| {
        (-(d - 1)..=(d - 1)).map(move |l| {
            (origin.offset(fx * d + rx * l, fy * d + ry * l), d as u8, l as i8)
        })
    })
}

fn line_of_sight(scene: &GridScene, origin: Cell, heading: Heading, depth: u8, lateral: i8) -> bool {
    let (fx, fy) = heading.delta();
    let (rx, ry) = heading.right().delta();
    let d = depth as i32;
    let l = lateral as i32;
    (1..d).all(|step| {
        // nearest lattice point on the ray, rounding half away from zero
        let num = l * step * 2;
        let lat = if num >= 0 { (num + d) / (2 * d) } else { -((-num + d) / (2 * d)) };
        let cell = origin.offset(fx * step + rx * lat, fy * step + ry * lat);
        !scene.is_blocked(cell)
    })
}

/// What the agent sees standing on `cell` with the given heading and pitch.
pub fn view_from(
    scene: &GridScene,
    cell: Cell,
    heading: Heading,
    pitch: Pitch,
    config: &WorldConfig,
) -> ViewFeature {
    let mut visible = Vec::new();
    for (target, depth, lateral) in cone(cell, heading, config.visibility_range) {
        if scene.is_blocked(target) || !line_of_sight(scene, cell, heading, depth, lateral) {
            continue;
        }
        for obj in scene.objects.iter().filter(|o| o.pos == Some(target)) {
            if scene.is_enclosed(obj.id) || !pitch.sees(scene.elevation_of(obj.id), depth) {
                continue;
            }
            visible.push(VisibleObject {
                id: obj.id,
                class: obj.class,
                distance: depth,
                offset: lateral,
                interactable: lateral == 0 && depth <= config.interaction_range,
                state_bits: obj.state.bits(),
            });
        }
    }
    let (fx, fy) = heading.delta();
    let free_ahead = (1..=config.visibility_range as i32)
        .take_while(|&d| scene.is_passable(cell.offset(fx * d, fy * d)))
        .count() as u8;
    ViewFeature { visible, free_ahead }
}

/// Stable FNV-1a digest of the sorted `(class, distance, state)` tuples of a view.
pub fn fingerprint(view: &ViewFeature) -> u64 {
    let mut keys: Vec<(u16, u8, u8)> = view
        .visible
        .iter()
        .map(|v| (v.class.index() as u16, v.distance, v.state_bits))
        .collect();
    keys.sort_unstable();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    feed(keys.len() as u8);
    feed((keys.len() >> 8) as u8);
    for (class, distance, bits) in keys {
        feed(class as u8);
        feed((class >> 8) as u8);
        feed(distance);
        feed(bits);
    }
    hash
}

pub fn observe(scene: &GridScene, pose: &AgentPose, config: &WorldConfig) -> Observation {
    let poses = [
        (pose.heading, pose.pitch),
        (pose.heading.left(), pose.pitch),
        (pose.heading.right(), pose.pitch),
        (pose.heading, pose.pitch.up().unwrap_or(pose.pitch)),
        (pose.heading, pose.pitch.down().unwrap_or(pose.pitch)),
    ];
    let views: Vec<ViewFeature> =
        poses.iter().map(|&(h, p)| view_from(scene, pose.cell, h, p, config)).collect();
    let fingerprint = fingerprint(&views[0]);
    let held = pose.inventory.and_then(|id| scene.object(id)).map(|o| o.class);
    Observation { views, fingerprint, held }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::scene::ObjectInstance;
    use std::collections::BTreeSet;

    fn room() -> GridScene {
        GridScene {
            scene_id: "unit".into(),
            seed: 0,
            width: 8,
            height: 8,
            blocked: BTreeSet::new(),
            objects: Vec::new(),
        }
    }

    fn place(scene: &mut GridScene, class: ObjectClass, at: Cell, inside: Option<ObjectId>) -> ObjectId {
        let id = scene.next_id();
        let mut obj = ObjectInstance::new(id, class, at);
        obj.contained_in = inside;
        scene.objects.push(obj);
        id
    }

    #[test]
    fn adjacent_mug_is_interactable() {
        let mut scene = room();
        let table = place(&mut scene, ObjectClass::DiningTable, Cell(3, 2), None);
        place(&mut scene, ObjectClass::Mug, Cell(3, 2), Some(table));
        let pose = AgentPose::new(Cell(3, 3), Heading::North);
        let obs = observe(&scene, &pose, &WorldConfig::default());
        let mug = obs.views[0].visible.iter().find(|v| v.class == ObjectClass::Mug).unwrap();
        assert_eq!(mug.distance, 1);
        assert!(mug.interactable);
        assert_eq!(obs.views.len(), NUM_VIEWS);
    }

    #[test]
    fn closed_fridge_hides_contents() {
        let mut scene = room();
        let fridge = place(&mut scene, ObjectClass::Fridge, Cell(3, 2), None);
        place(&mut scene, ObjectClass::Mug, Cell(3, 2), Some(fridge));
        let pose = AgentPose::new(Cell(3, 3), Heading::North);
        let obs = observe(&scene, &pose, &WorldConfig::default());
        for view in &obs.views {
            assert!(view.visible.iter().all(|v| v.class != ObjectClass::Mug));
        }
        scene.object_mut(fridge).unwrap().state.open = true;
        let obs = observe(&scene, &pose, &WorldConfig::default());
        assert!(obs.interactable(ObjectClass::Mug));
    }

    #[test]
    fn identical_inputs_give_identical_fingerprints() {
        let mut scene = room();
        place(&mut scene, ObjectClass::CounterTop, Cell(3, 1), None);
        let pose = AgentPose::new(Cell(3, 3), Heading::North);
        let a = observe(&scene, &pose, &WorldConfig::default());
        let b = observe(&scene.clone(), &pose, &WorldConfig::default());
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(a, b);
    }

    #[test]
    fn walls_block_sight() {
        let mut scene = room();
        place(&mut scene, ObjectClass::CounterTop, Cell(3, 0), None);
        scene.blocked.insert(Cell(3, 2));
        let pose = AgentPose::new(Cell(3, 3), Heading::North);
        let view = view_from(&scene, pose.cell, pose.heading, pose.pitch, &WorldConfig::default());
        assert!(view.visible.is_empty());
        assert_eq!(view.free_ahead, 0);
    }

    #[test]
    fn low_objects_need_looking_down_up_close() {
        let mut scene = room();
        place(&mut scene, ObjectClass::GarbageCan, Cell(3, 2), None);
        let cfg = WorldConfig::default();
        let level = view_from(&scene, Cell(3, 3), Heading::North, Pitch::Level, &cfg);
        assert!(level.visible.is_empty());
        let down = view_from(&scene, Cell(3, 3), Heading::North, Pitch::Down, &cfg);
        assert!(down.visible[0].interactable);
        // further away it is in frame at level pitch
        let far = view_from(&scene, Cell(3, 4), Heading::North, Pitch::Level, &cfg);
        assert_eq!(far.visible[0].distance, 2);
        assert!(!far.visible[0].interactable);
    }

    #[test]
    fn cone_widens_with_depth() {
        let cells: Vec<_> = cone(Cell(5, 5), Heading::North, 3).collect();
        assert_eq!(cells.len(), 1 + 3 + 5);
        assert_eq!(cells[0], (Cell(5, 4), 1, 0));
        // East of north-facing agent is its right
        assert!(cells.contains(&(Cell(6, 3), 2, 1)));
    }
}
