use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classes::ObjectClass;
use super::scene::{AgentPose, Cell, GridScene, Heading, ObjectId, ObjectInstance};
use super::WorldError;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenConfig {
    pub min_side: i32,
    pub max_side: i32,
    pub min_receptacles: usize,
    pub max_receptacles: usize,
    pub min_objects: usize,
    pub max_objects: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            min_side: 8,
            max_side: 16,
            min_receptacles: 4,
            max_receptacles: 10,
            min_objects: 8,
            max_objects: 20,
        }
    }
}

const EXTRA_RECEPTACLES: &[ObjectClass] = &[
    ObjectClass::DiningTable,
    ObjectClass::SideTable,
    ObjectClass::TvStand,
    ObjectClass::CoffeeTable,
    ObjectClass::Shelf,
    ObjectClass::GarbageCan,
    ObjectClass::Cabinet,
    ObjectClass::CounterTop,
];

const SMALL_OBJECTS: &[ObjectClass] = &[
    ObjectClass::Mug,
    ObjectClass::Cup,
    ObjectClass::Apple,
    ObjectClass::Potato,
    ObjectClass::Tomato,
    ObjectClass::Bread,
    ObjectClass::Lettuce,
    ObjectClass::Egg,
    ObjectClass::Knife,
    ObjectClass::Spoon,
    ObjectClass::CreditCard,
    ObjectClass::Book,
    ObjectClass::Pen,
    ObjectClass::KeyChain,
    ObjectClass::RemoteControl,
    ObjectClass::CellPhone,
    ObjectClass::Watch,
    ObjectClass::Bowl,
    ObjectClass::Plate,
];

/// Every passable cell is reachable from every other, and every fixture touches one.
fn layout_is_connected(scene: &GridScene) -> bool {
    let passable = scene.passable_grid();
    let w = scene.width;
    let idx = |c: Cell| (c.1 * w + c.0) as usize;
    let Some(start) = (0..passable.len()).find(|&i| passable[i]) else {
        return false;
    };
    let mut seen = vec![false; passable.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([Cell(start as i32 % w, start as i32 / w)]);
    while let Some(c) = queue.pop_front() {
        for h in Heading::ALL {
            let (dx, dy) = h.delta();
            let n = c.offset(dx, dy);
            if scene.in_bounds(n) && passable[idx(n)] && !seen[idx(n)] {
                seen[idx(n)] = true;
                queue.push_back(n);
            }
        }
    }
    if passable.iter().zip(&seen).any(|(p, s)| *p && !*s) {
        return false;
    }
    scene.objects.iter().filter(|o| o.class.is_fixture() && o.contained_in.is_none()).all(|o| {
        let p = o.pos.expect("fixtures are placed");
        Heading::ALL.iter().any(|h| {
            let (dx, dy) = h.delta();
            let n = p.offset(dx, dy);
            scene.in_bounds(n) && seen[idx(n)]
        })
    })
}

fn place_fixture(scene: &mut GridScene, rng: &mut ChaCha8Rng, class: ObjectClass) -> Result<ObjectId, WorldError> {
    for _ in 0..200 {
        let cell = Cell(rng.gen_range(1..scene.width - 1), rng.gen_range(1..scene.height - 1));
        if !scene.is_passable(cell) {
            continue;
        }
        let id = scene.next_id();
        scene.objects.push(ObjectInstance::new(id, class, cell));
        if layout_is_connected(scene) {
            return Ok(id);
        }
        scene.objects.pop();
    }
    Err(WorldError::Generation(format!("no room left for {class:?}")))
}

fn put_inside(scene: &mut GridScene, id: ObjectId, container: ObjectId) {
    let pos = scene.object(container).and_then(|c| c.pos);
    let o = scene.object_mut(id).expect("object just created");
    o.pos = pos;
    o.contained_in = Some(container);
}

/// Procedurally generates a room. Identical seeds give identical scenes.
pub fn generate_scene(seed: u64, config: &SceneGenConfig) -> Result<GridScene, WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_E5EE_D000_0000);
    let width = rng.gen_range(config.min_side..=config.max_side);
    let height = rng.gen_range(config.min_side..=config.max_side);
    let mut blocked = BTreeSet::new();
    for x in 0..width {
        blocked.insert(Cell(x, 0));
        blocked.insert(Cell(x, height - 1));
    }
    for y in 0..height {
        blocked.insert(Cell(0, y));
        blocked.insert(Cell(width - 1, y));
    }
    let mut scene = GridScene {
        scene_id: format!("scene_{seed:05}"),
        seed,
        width,
        height,
        blocked,
        objects: Vec::new(),
    };
    let pillars = rng.gen_range(0..=((width * height) / 48) as usize);
    for _ in 0..pillars {
        let cell = Cell(rng.gen_range(2..width - 2), rng.gen_range(2..height - 2));
        scene.blocked.insert(cell);
        if !layout_is_connected(&scene) {
            scene.blocked.remove(&cell);
        }
    }

    let mut receptacle_classes = vec![
        ObjectClass::CounterTop,
        ObjectClass::Fridge,
        ObjectClass::Microwave,
        ObjectClass::SinkBasin,
    ];
    // a second kind of surface, so objects have somewhere else to go
    let second = loop {
        let c = *EXTRA_RECEPTACLES.choose(&mut rng).expect("non-empty");
        if c.is_surface() && c != ObjectClass::CounterTop {
            break c;
        }
    };
    receptacle_classes.push(second);
    let total = rng.gen_range(config.min_receptacles.max(5)..=config.max_receptacles.max(5));
    while receptacle_classes.len() < total {
        receptacle_classes.push(*EXTRA_RECEPTACLES.choose(&mut rng).expect("non-empty"));
    }
    let mut surfaces = Vec::new();
    for class in receptacle_classes {
        let id = place_fixture(&mut scene, &mut rng, class)?;
        match class {
            ObjectClass::Microwave => scene.object_mut(id).expect("placed").state.open = true,
            ObjectClass::SinkBasin => {
                let faucet = scene.next_id();
                scene.objects.push(ObjectInstance::new(faucet, ObjectClass::Faucet, Cell(0, 0)));
                put_inside(&mut scene, faucet, id);
            }
            c if c.is_surface() => surfaces.push(id),
            _ => {}
        }
    }
    place_fixture(&mut scene, &mut rng, ObjectClass::DeskLamp)?;

    let count = rng.gen_range(config.min_objects..=config.max_objects);
    for k in 0..count {
        let class = if k == 0 {
            // every room has at least one movable container
            *[ObjectClass::Bowl, ObjectClass::Plate].choose(&mut rng).expect("non-empty")
        } else {
            *SMALL_OBJECTS.choose(&mut rng).expect("non-empty")
        };
        let host = *surfaces.choose(&mut rng).expect("counter always present");
        let id = scene.next_id();
        scene.objects.push(ObjectInstance::new(id, class, Cell(0, 0)));
        put_inside(&mut scene, id, host);
    }
    scene.validate()?;
    Ok(scene)
}

/// Deterministic start pose on a passable cell.
pub fn start_pose(scene: &GridScene, seed: u64) -> AgentPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0057_A27F_0000_0000);
    let passable = scene.passable_grid();
    let cells: Vec<Cell> = (0..passable.len())
        .filter(|&i| passable[i])
        .map(|i| Cell(i as i32 % scene.width, i as i32 / scene.width))
        .collect();
    let cell = *cells.choose(&mut rng).expect("generated scenes have free cells");
    AgentPose::new(cell, Heading::ALL[rng.gen_range(0..4)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = SceneGenConfig::default();
        for seed in 0..40 {
            let a = generate_scene(seed, &cfg).unwrap();
            let b = generate_scene(seed, &cfg).unwrap();
            assert_eq!(a, b);
            a.validate().unwrap();
            assert!((8..=16).contains(&a.width) && (8..=16).contains(&a.height));
            let receptacles = a.objects.iter().filter(|o| o.class.is_fixture() && o.caps.is_receptacle).count();
            assert!((4..=10).contains(&receptacles), "{receptacles}");
            let small = a.objects.iter().filter(|o| o.caps.is_pickupable).count();
            assert!((8..=20).contains(&small));
            assert!(layout_is_connected(&a));
        }
    }

    #[test]
    fn start_pose_is_passable() {
        let scene = generate_scene(3, &SceneGenConfig::default()).unwrap();
        for s in 0..20 {
            assert!(scene.is_passable(start_pose(&scene, s).cell));
        }
    }
}
