//! Immutable scene model, procedural generation, task sampling and scene
//! files.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::{CategoryId, K_TOTAL};
use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims, Heading, CELL_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightBand {
    Low,
    Eye,
    High,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInstance {
    pub instance_id: u32,
    pub category: CategoryId,
    pub footprint: Vec<Cell>,
    pub height_band: HeightBand,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scene {
    id: String,
    dims: Dims,
    walls: Vec<bool>,
    objects: Vec<ObjectInstance>,
    spawn_cells: Vec<Cell>,
    categories: Vec<CategoryId>,
    /// Per cell: index into `objects` plus one, or zero.
    object_at: Vec<u32>,
}

impl Scene {
    /// Builds a scene and checks every invariant.
    pub fn new(
        id: impl Into<String>,
        dims: Dims,
        walls: Vec<bool>,
        objects: Vec<ObjectInstance>,
        spawn_cells: Vec<Cell>,
        categories: Vec<CategoryId>,
    ) -> Result<Scene> {
        if walls.len() != dims.area() {
            return Err(Error::DimsMismatch(format!(
                "wall grid has {} cells, dims {}x{}",
                walls.len(),
                dims.l,
                dims.w
            )));
        }
        let mut object_at = vec![0u32; dims.area()];
        for (i, obj) in objects.iter().enumerate() {
            if obj.footprint.is_empty() {
                return Err(invariant("footprint-empty", obj.instance_id));
            }
            for &c in &obj.footprint {
                if !dims.contains(c) {
                    return Err(invariant("footprint-out-of-bounds", obj.instance_id));
                }
                let idx = dims.index(c);
                if walls[idx] {
                    return Err(invariant("footprint-on-wall", obj.instance_id));
                }
                if object_at[idx] != 0 {
                    return Err(invariant("footprint-overlap", obj.instance_id));
                }
                object_at[idx] = i as u32 + 1;
            }
            if !is_four_connected(&obj.footprint) {
                return Err(invariant("footprint-disconnected", obj.instance_id));
            }
        }
        let mut cats = categories;
        cats.sort();
        cats.dedup();
        if cats.len() > K_TOTAL {
            return Err(Error::InvariantViolation("too-many-categories".into()));
        }
        for obj in &objects {
            if cats.binary_search(&obj.category).is_err() {
                return Err(invariant("category-not-listed", obj.instance_id));
            }
        }
        for &s in &spawn_cells {
            if !dims.contains(s) || walls[dims.index(s)] || object_at[dims.index(s)] != 0 {
                return Err(Error::InvariantViolation(format!(
                    "spawn-not-free at ({}, {})",
                    s.x, s.y
                )));
            }
        }
        Ok(Scene {
            id: id.into(),
            dims,
            walls,
            objects,
            spawn_cells,
            categories: cats,
            object_at,
        })
    }

    /// The same scene under another id.
    pub fn with_id(mut self, id: impl Into<String>) -> Scene {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        CELL_SIZE
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn spawn_cells(&self) -> &[Cell] {
        &self.spawn_cells
    }

    /// Categories with at least one instance, sorted.
    pub fn categories(&self) -> &[CategoryId] {
        &self.categories
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        !self.dims.contains(c) || self.walls[self.dims.index(c)]
    }

    pub fn object_at(&self, c: Cell) -> Option<&ObjectInstance> {
        if !self.dims.contains(c) {
            return None;
        }
        match self.object_at[self.dims.index(c)] {
            0 => None,
            i => Some(&self.objects[i as usize - 1]),
        }
    }

    /// Traversable by an agent: in bounds, not a wall, not an object.
    pub fn is_free(&self, c: Cell) -> bool {
        self.dims.contains(c) && {
            let i = self.dims.index(c);
            !self.walls[i] && self.object_at[i] == 0
        }
    }

    pub fn wall_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.dims.cells().filter(move |&c| self.walls[self.dims.index(c)])
    }

    pub fn instances_of(&self, category: CategoryId) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.category == category)
    }

    /// Number of free cells reachable from `start` by 4-connected moves.
    pub fn reachable_count(&self, start: Cell) -> usize {
        flood_fill(self.dims, start, |c| self.is_free(c))
    }

    pub fn free_count(&self) -> usize {
        self.dims.cells().filter(|&c| self.is_free(c)).count()
    }
}

fn invariant(name: &str, instance: u32) -> Error {
    Error::InvariantViolation(format!("{name} (object {instance})"))
}

fn is_four_connected(cells: &[Cell]) -> bool {
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([cells[0]]);
    seen.insert(cells[0]);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors4() {
            if set.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == set.len()
}

fn flood_fill(dims: Dims, start: Cell, passable: impl Fn(Cell) -> bool) -> usize {
    if !passable(start) {
        return 0;
    }
    let mut seen = vec![false; dims.area()];
    let mut queue = VecDeque::from([start]);
    seen[dims.index(start)] = true;
    let mut count = 0;
    while let Some(c) = queue.pop_front() {
        count += 1;
        for n in c.neighbors4() {
            if dims.contains(n) && !seen[dims.index(n)] && passable(n) {
                seen[dims.index(n)] = true;
                queue.push_back(n);
            }
        }
    }
    count
}

// ---------------------------------------------------------------------------
// Generation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub dims: Dims,
    pub rooms: usize,
    /// Objects per square meter of floor.
    pub object_density: f64,
    /// Vocabulary subset the generator may draw from.
    pub categories: Vec<CategoryId>,
    pub door_width: usize,
    pub min_room_side: usize,
    /// Probability that an item is placed next to its affine furniture.
    pub affinity: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            dims: Dims::new(80, 80),
            rooms: 3,
            object_density: 1.0,
            categories: CategoryId::all().collect(),
            door_width: 10,
            min_room_side: 24,
            affinity: 0.85,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dims.l", self.dims.l), ("dims.w", self.dims.w)] {
            if !(16..=240).contains(&v) {
                return Err(Error::validation(name, format!("{v} not in 16..=240")));
            }
        }
        if self.rooms == 0 {
            return Err(Error::validation("rooms", "must be at least 1"));
        }
        if !(self.object_density >= 0.0 && self.object_density.is_finite()) {
            return Err(Error::validation("object_density", "must be finite and >= 0"));
        }
        if self.door_width < 2 {
            return Err(Error::validation("door_width", "must be at least 2"));
        }
        if self.min_room_side < self.door_width + 2 {
            return Err(Error::validation("min_room_side", "must exceed door_width + 1"));
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return Err(Error::validation("affinity", "must be in [0, 1]"));
        }
        if self.categories.iter().any(|c| c.index() >= K_TOTAL) {
            return Err(Error::validation("categories", "id outside vocabulary"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Furniture,
    Item,
}

struct Blueprint {
    kind: Kind,
    size: (usize, usize),
    band: HeightBand,
    near: Option<u8>,
}

/// Placement recipe per vocabulary entry.
fn blueprint(c: CategoryId) -> Blueprint {
    use HeightBand::*;
    let furniture = |w, h| Blueprint {
        kind: Kind::Furniture,
        size: (w, h),
        band: Eye,
        near: None,
    };
    let item = |band, near: Option<u8>| Blueprint {
        kind: Kind::Item,
        size: (2, 4),
        band,
        near,
    };
    match c.0 {
        0 => furniture(16, 10),
        1 => furniture(20, 8),
        2 => furniture(22, 14),
        3 => furniture(20, 9),
        4 => furniture(14, 14),
        5 => furniture(14, 6),
        6 => furniture(16, 6),
        7 => furniture(14, 8),
        8 => item(Low, Some(0)),
        9 => item(High, Some(1)),
        10 => item(Low, Some(5)),
        11 => item(High, Some(7)),
        12 => item(Low, Some(2)),
        13 => item(High, Some(6)),
        14 => item(High, Some(5)),
        15 => item(Low, Some(1)),
        16 => item(High, Some(4)),
        17 => item(Low, Some(3)),
        18 => item(Low, Some(4)),
        19 => item(High, Some(0)),
        20 => item(Eye, None),
        21 => item(Eye, Some(3)),
        22 => item(Low, None),
        _ => item(High, None),
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn width(&self) -> i32 {
        self.x1 - self.x0
    }
    fn height(&self) -> i32 {
        self.y1 - self.y0
    }
    fn area(&self) -> i32 {
        self.width() * self.height()
    }
}

struct Layout {
    dims: Dims,
    walls: Vec<bool>,
    rooms: Vec<Rect>,
    /// Cells kept clear of objects so doors stay usable.
    keep_clear: Vec<bool>,
}

fn build_layout(params: &GenParams, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let dims = params.dims;
    let mut walls = vec![false; dims.area()];
    for c in dims.cells() {
        if c.x == 0 || c.y == 0 || c.x as usize == dims.l - 1 || c.y as usize == dims.w - 1 {
            walls[dims.index(c)] = true;
        }
    }
    let mut keep_clear = vec![false; dims.area()];
    let mut rooms = vec![Rect {
        x0: 1,
        y0: 1,
        x1: dims.l as i32 - 1,
        y1: dims.w as i32 - 1,
    }];
    let min_side = params.min_room_side as i32;
    let door = params.door_width as i32;
    while rooms.len() < params.rooms {
        // Split the largest splittable room along its longer side.
        let pick = rooms
            .iter()
            .enumerate()
            .filter(|(_, r)| r.width().max(r.height()) >= 2 * min_side + 1)
            .max_by_key(|(i, r)| (r.area(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            return Err(Error::GenerationFailure(format!(
                "cannot fit {} rooms of side >= {} in {}x{}",
                params.rooms, min_side, dims.l, dims.w
            )));
        };
        let r = rooms.swap_remove(i);
        let vertical = r.width() >= r.height();
        let span = if vertical { r.width() } else { r.height() };
        let at = rng.gen_range(min_side..=span - min_side - 1);
        let along = if vertical { r.height() } else { r.width() };
        let door_start = rng.gen_range(0..=(along - door).max(0));
        for k in 0..along {
            let c = if vertical {
                Cell::new(r.x0 + at, r.y0 + k)
            } else {
                Cell::new(r.x0 + k, r.y0 + at)
            };
            if k >= door_start && k < door_start + door {
                // Door gap plus an approach apron on both sides.
                for d in -6..=6 {
                    let a = if vertical { c.offset(d, 0) } else { c.offset(0, d) };
                    for s in -2..=2 {
                        let b = if vertical { a.offset(0, s) } else { a.offset(s, 0) };
                        if dims.contains(b) {
                            keep_clear[dims.index(b)] = true;
                        }
                    }
                }
            } else {
                walls[dims.index(c)] = true;
            }
        }
        let (a, b) = if vertical {
            (
                Rect { x1: r.x0 + at, ..r },
                Rect { x0: r.x0 + at + 1, ..r },
            )
        } else {
            (
                Rect { y1: r.y0 + at, ..r },
                Rect { y0: r.y0 + at + 1, ..r },
            )
        };
        rooms.push(a);
        rooms.push(b);
    }
    rooms.sort_by_key(|r| (r.y0, r.x0));
    Ok(Layout {
        dims,
        walls,
        rooms,
        keep_clear,
    })
}

struct Placer<'a> {
    layout: &'a Layout,
    occupied: Vec<bool>,
    /// Object index plus one per cell.
    owner: Vec<u32>,
    objects: Vec<ObjectInstance>,
    free_cells: usize,
}

impl<'a> Placer<'a> {
    fn new(layout: &'a Layout) -> Self {
        let free_cells = layout.walls.iter().filter(|w| !**w).count();
        Placer {
            layout,
            occupied: layout.walls.clone(),
            owner: vec![0; layout.dims.area()],
            objects: Vec::new(),
            free_cells,
        }
    }

    fn rect_cells(x: i32, y: i32, w: i32, h: i32) -> Vec<Cell> {
        let mut out = Vec::with_capacity((w * h) as usize);
        for yy in y..y + h {
            for xx in x..x + w {
                out.push(Cell::new(xx, yy));
            }
        }
        out
    }

    /// Minimum gap (in cells, Chebyshev) between `cells` and existing objects.
    fn clearance_ok(&self, cells: &[Cell], gap: i32, ignore: Option<usize>) -> bool {
        let dims = self.layout.dims;
        for &c in cells {
            for dy in -gap..=gap {
                for dx in -gap..=gap {
                    let n = c.offset(dx, dy);
                    if !dims.contains(n) {
                        continue;
                    }
                    let owner = self.owner[dims.index(n)];
                    if owner != 0 && Some(owner as usize - 1) != ignore {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn try_place(
        &mut self,
        cells: Vec<Cell>,
        category: CategoryId,
        band: HeightBand,
        gap: i32,
        near: Option<usize>,
    ) -> bool {
        let dims = self.layout.dims;
        for &c in &cells {
            if !dims.contains(c) {
                return false;
            }
            let idx = dims.index(c);
            if self.occupied[idx] || self.layout.keep_clear[idx] {
                return false;
            }
        }
        if !self.clearance_ok(&cells, gap, near) {
            return false;
        }
        for &c in &cells {
            self.occupied[dims.index(c)] = true;
        }
        // Reject placements that split the free space.
        let start = dims.cells().find(|&c| !self.occupied[dims.index(c)]);
        let remaining = self.free_cells - cells.len();
        let reached = start
            .map(|s| flood_fill(dims, s, |c| !self.occupied[dims.index(c)]))
            .unwrap_or(0);
        if reached != remaining {
            for &c in &cells {
                self.occupied[dims.index(c)] = false;
            }
            return false;
        }
        self.free_cells = remaining;
        let id = self.objects.len() as u32;
        for &c in &cells {
            self.owner[dims.index(c)] = id + 1;
        }
        self.objects.push(ObjectInstance {
            instance_id: id,
            category,
            footprint: cells,
            height_band: band,
        });
        true
    }

    fn place_furniture(&mut self, category: CategoryId, rng: &mut ChaCha8Rng) -> bool {
        let bp = blueprint(category);
        for _ in 0..60 {
            let room = *self.layout.rooms.choose(rng).unwrap();
            let (mut w, mut h) = (bp.size.0 as i32, bp.size.1 as i32);
            let side = rng.gen_range(0..4);
            if side % 2 == 1 {
                std::mem::swap(&mut w, &mut h);
            }
            if w + 4 > room.width() || h + 4 > room.height() {
                continue;
            }
            // Flush against the chosen wall of the room.
            let (x, y) = match side {
                0 => (rng.gen_range(room.x0..=room.x1 - w), room.y0),
                1 => (room.x1 - w, rng.gen_range(room.y0..=room.y1 - h)),
                2 => (rng.gen_range(room.x0..=room.x1 - w), room.y1 - h),
                _ => (room.x0, rng.gen_range(room.y0..=room.y1 - h)),
            };
            let cells = Self::rect_cells(x, y, w, h);
            if self.try_place(cells, category, bp.band, 6, None) {
                return true;
            }
        }
        false
    }

    fn place_item(&mut self, category: CategoryId, affinity: f64, rng: &mut ChaCha8Rng) -> bool {
        let bp = blueprint(category);
        let anchors: Vec<usize> = match bp.near {
            Some(a) => self
                .objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.category.0 == a)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        };
        let attach = !anchors.is_empty() && rng.gen_bool(affinity);
        for _ in 0..80 {
            let w = rng.gen_range(bp.size.0..=bp.size.1) as i32;
            let h = rng.gen_range(bp.size.0..=bp.size.1) as i32;
            if attach {
                let ai = *anchors.choose(rng).unwrap();
                let fp = &self.objects[ai].footprint;
                let (ax0, ay0) = (fp[0].x, fp[0].y);
                let (ax1, ay1) = (fp[fp.len() - 1].x + 1, fp[fp.len() - 1].y + 1);
                let gap = 1;
                let (x, y) = match rng.gen_range(0..4) {
                    0 => (rng.gen_range(ax0 - w + 1..ax1), ay0 - gap - h),
                    1 => (ax1 + gap, rng.gen_range(ay0 - h + 1..ay1)),
                    2 => (rng.gen_range(ax0 - w + 1..ax1), ay1 + gap),
                    _ => (ax0 - gap - w, rng.gen_range(ay0 - h + 1..ay1)),
                };
                let cells = Self::rect_cells(x, y, w, h);
                if self.try_place(cells, category, bp.band, 3, Some(ai)) {
                    return true;
                }
            } else {
                let room = *self.layout.rooms.choose(rng).unwrap();
                if w + 8 > room.width() || h + 8 > room.height() {
                    continue;
                }
                let x = rng.gen_range(room.x0 + 3..=room.x1 - 3 - w);
                let y = rng.gen_range(room.y0 + 3..=room.y1 - 3 - h);
                let cells = Self::rect_cells(x, y, w, h);
                if self.try_place(cells, category, bp.band, 8, None) {
                    return true;
                }
            }
        }
        false
    }
}

/// Generates a scene deterministically from `(seed, params)`.
pub fn generate_scene(seed: u64, params: &GenParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_layout(params, &mut rng)?;
    let mut placer = Placer::new(&layout);

    let floor_m2 = placer.free_cells as f64 * CELL_SIZE * CELL_SIZE;
    let n_objects = (params.object_density * floor_m2).round() as usize;
    let mut furniture: Vec<CategoryId> = params
        .categories
        .iter()
        .copied()
        .filter(|c| blueprint(*c).kind == Kind::Furniture)
        .collect();
    let items: Vec<CategoryId> = params
        .categories
        .iter()
        .copied()
        .filter(|c| blueprint(*c).kind == Kind::Item)
        .collect();
    furniture.shuffle(&mut rng);
    let n_furniture = if items.is_empty() {
        n_objects
    } else if furniture.is_empty() {
        0
    } else {
        ((n_objects as f64) * 0.35).round() as usize
    };
    let n_items = n_objects - n_furniture.min(n_objects);

    for k in 0..n_furniture {
        let cat = furniture[k % furniture.len()];
        placer.place_furniture(cat, &mut rng);
    }
    for _ in 0..n_items {
        let cat = *items.choose(&mut rng).unwrap();
        placer.place_item(cat, params.affinity, &mut rng);
    }

    let dims = layout.dims;
    let occupied = placer.occupied.clone();
    let free = |c: Cell| dims.contains(c) && !occupied[dims.index(c)];
    let spawns: Vec<Cell> = dims
        .cells()
        .filter(|c| c.x % 5 == 2 && c.y % 5 == 2)
        .filter(|&c| (-1..=1).all(|dy| (-1..=1).all(|dx| free(c.offset(dx, dy)))))
        .collect();
    if spawns.len() < 5 {
        return Err(Error::GenerationFailure(format!(
            "only {} spawn cells available",
            spawns.len()
        )));
    }
    let categories: Vec<CategoryId> = placer
        .objects
        .iter()
        .map(|o| o.category)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Scene::new(
        format!("scene_{seed}"),
        dims,
        layout.walls.clone(),
        placer.objects,
        spawns,
        categories,
    )
}

// ---------------------------------------------------------------------------
// Tasks

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpawn {
    pub cell: Cell,
    pub heading: Heading,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub scene_id: String,
    pub targets: Vec<CategoryId>,
    pub agent_spawns: Vec<AgentSpawn>,
    pub seed: u64,
}

impl TaskSpec {
    /// The same task restricted to its first `n` agents.
    pub fn with_agents(&self, n: usize) -> TaskSpec {
        TaskSpec {
            agent_spawns: self.agent_spawns[..n.min(self.agent_spawns.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if !(1..=5).contains(&self.targets.len()) {
            return Err(Error::validation("targets", "need 1..=5 targets"));
        }
        if !(1..=5).contains(&self.agent_spawns.len()) {
            return Err(Error::validation("agent_spawns", "need 1..=5 agents"));
        }
        for t in &self.targets {
            if scene.instances_of(*t).next().is_none() {
                return Err(Error::InvariantViolation(format!(
                    "target {t} has no instance in {}",
                    scene.id()
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for s in &self.agent_spawns {
            if !scene.is_free(s.cell) || !seen.insert(s.cell) {
                return Err(Error::InvariantViolation(format!(
                    "spawn ({}, {}) is not a distinct free cell",
                    s.cell.x, s.cell.y
                )));
            }
        }
        Ok(())
    }
}

pub fn sample_task(scene: &Scene, m: usize, n: usize, seed: u64) -> Result<TaskSpec> {
    sample_task_from(scene, m, n, seed, None)
}

/// Samples targets (restricted to `allowed` when given) and spawns without
/// replacement.
pub fn sample_task_from(
    scene: &Scene,
    m: usize,
    n: usize,
    seed: u64,
    allowed: Option<&[CategoryId]>,
) -> Result<TaskSpec> {
    if !(1..=5).contains(&m) {
        return Err(Error::validation("M", format!("{m} not in 1..=5")));
    }
    if !(1..=5).contains(&n) {
        return Err(Error::validation("N", format!("{n} not in 1..=5")));
    }
    let pool: Vec<CategoryId> = scene
        .categories()
        .iter()
        .copied()
        .filter(|c| allowed.is_none_or(|a| a.contains(c)))
        .collect();
    if pool.len() < m {
        return Err(Error::InsufficientCategories {
            need: m,
            have: pool.len(),
        });
    }
    if scene.spawn_cells().len() < n {
        return Err(Error::InsufficientSpawns {
            need: n,
            have: scene.spawn_cells().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<CategoryId> = pool.choose_multiple(&mut rng, m).copied().collect();
    let spawns: Vec<Cell> = scene
        .spawn_cells()
        .choose_multiple(&mut rng, n)
        .copied()
        .collect();
    let agent_spawns = spawns
        .into_iter()
        .map(|cell| AgentSpawn {
            cell,
            heading: Heading::ALL[rng.gen_range(0..4)],
        })
        .collect();
    Ok(TaskSpec {
        scene_id: scene.id().to_string(),
        targets,
        agent_spawns,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Files

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    id: u32,
    category: String,
    footprint: Vec<[i32; 2]>,
    height_band: HeightBand,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    id: String,
    dims: [usize; 2],
    cell_size: f64,
    walls: Vec<[i32; 2]>,
    objects: Vec<ObjectRecord>,
    spawns: Vec<[i32; 2]>,
    categories: Vec<String>,
}

pub fn scene_to_json(scene: &Scene) -> String {
    let file = SceneFile {
        id: scene.id.clone(),
        dims: [scene.dims.l, scene.dims.w],
        cell_size: CELL_SIZE,
        walls: scene.wall_cells().map(|c| [c.x, c.y]).collect(),
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectRecord {
                id: o.instance_id,
                category: o.category.name().to_string(),
                footprint: o.footprint.iter().map(|c| [c.x, c.y]).collect(),
                height_band: o.height_band,
            })
            .collect(),
        spawns: scene.spawn_cells.iter().map(|c| [c.x, c.y]).collect(),
        categories: scene
            .categories
            .iter()
            .map(|c| c.name().to_string())
            .collect(),
    };
    serde_json::to_string(&file).expect("scene serializes")
}

/// Position of the first occurrence of `needle` in `text`, 1-based.
fn locate(text: &str, needle: &str) -> (usize, usize) {
    match text.find(needle) {
        Some(off) => {
            let before = &text[..off];
            let line = before.matches('\n').count() + 1;
            let col = off - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
            (line, col)
        }
        None => (0, 0),
    }
}

pub fn scene_from_json(text: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::json("scene", &e))?;
    let unknown = |name: &str| {
        let (line, column) = locate(text, &format!("\"{name}\""));
        Error::Parse {
            context: "scene".into(),
            line,
            column,
            message: format!("unknown category `{name}`"),
        }
    };
    if (file.cell_size - CELL_SIZE).abs() > 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "cell-size must be {CELL_SIZE}, got {}",
            file.cell_size
        )));
    }
    let dims = Dims::new(file.dims[0], file.dims[1]);
    let mut walls = vec![false; dims.area()];
    for [x, y] in file.walls {
        let c = Cell::new(x, y);
        if !dims.contains(c) {
            return Err(Error::InvariantViolation(format!("wall-out-of-bounds at ({x}, {y})")));
        }
        walls[dims.index(c)] = true;
    }
    let mut categories = Vec::with_capacity(file.categories.len());
    for name in &file.categories {
        categories.push(CategoryId::from_name(name).map_err(|_| unknown(name))?);
    }
    let mut objects = Vec::with_capacity(file.objects.len());
    for o in file.objects {
        let category = CategoryId::from_name(&o.category).map_err(|_| unknown(&o.category))?;
        objects.push(ObjectInstance {
            instance_id: o.id,
            category,
            footprint: o.footprint.iter().map(|&[x, y]| Cell::new(x, y)).collect(),
            height_band: o.height_band,
        });
    }
    let spawns = file.spawns.iter().map(|&[x, y]| Cell::new(x, y)).collect();
    Scene::new(file.id, dims, walls, objects, spawns, categories)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), scene_to_json(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    scene_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> GenParams {
        GenParams {
            dims: Dims::new(40, 40),
            rooms: 1,
            ..GenParams::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams::default();
        let a = generate_scene(7, &p).unwrap();
        let b = generate_scene(7, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(scene_to_json(&a), scene_to_json(&b));
    }

    #[test]
    fn zero_density_has_no_objects() {
        let p = GenParams {
            object_density: 0.0,
            ..GenParams::default()
        };
        let s = generate_scene(3, &p).unwrap();
        assert!(s.objects().is_empty());
        assert!(s.wall_cells().count() > 0);
    }

    #[test]
    fn free_space_is_connected() {
        // Flood-fill oracle from every spawn covers every free cell.
        let s = generate_scene(1, &small_params()).unwrap();
        let free = s.free_count();
        for &sp in s.spawn_cells() {
            assert_eq!(s.reachable_count(sp), free);
        }
        for seed in 0..20 {
            let s = generate_scene(seed, &GenParams::default()).unwrap();
            assert_eq!(s.reachable_count(s.spawn_cells()[0]), s.free_count());
        }
    }

    #[test]
    fn rooms_that_cannot_fit_fail() {
        let p = GenParams {
            dims: Dims::new(40, 40),
            rooms: 9,
            ..GenParams::default()
        };
        assert!(matches!(generate_scene(0, &p), Err(Error::GenerationFailure(_))));
    }

    #[test]
    fn invalid_dims_name_the_field() {
        let p = GenParams {
            dims: Dims::new(8, 80),
            ..GenParams::default()
        };
        match generate_scene(0, &p) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "dims.l"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sample_task_uses_all_categories_when_forced() {
        let s = generate_scene(5, &GenParams::default()).unwrap();
        let three: Vec<CategoryId> = s.categories()[..3].to_vec();
        let t = sample_task_from(&s, 3, 1, 9, Some(&three)).unwrap();
        let mut got = t.targets.clone();
        got.sort();
        assert_eq!(got, three);
        t.validate(&s).unwrap();
    }

    #[test]
    fn sample_task_errors() {
        let s = generate_scene(5, &GenParams::default()).unwrap();
        let two: Vec<CategoryId> = s.categories()[..2].to_vec();
        assert!(matches!(
            sample_task_from(&s, 3, 1, 0, Some(&two)),
            Err(Error::InsufficientCategories { need: 3, have: 2 })
        ));
        assert_eq!(sample_task(&s, 1, 1, 4).unwrap(), sample_task(&s, 1, 1, 4).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let s = generate_scene(11, &GenParams::default()).unwrap();
        let back = scene_from_json(&scene_to_json(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn footprint_on_wall_is_rejected() {
        let text = r#"{"id":"t","dims":[5,5],"cell_size":0.05,
            "walls":[[0,0],[1,0]],
            "objects":[{"id":0,"category":"Laptop","footprint":[[1,0]],"height_band":"eye"}],
            "spawns":[[2,2]],"categories":["Laptop"]}"#;
        match scene_from_json(text) {
            Err(Error::InvariantViolation(msg)) => assert!(msg.starts_with("footprint-on-wall")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_category_names_the_culprit() {
        let text = "{\"id\":\"t\",\"dims\":[5,5],\"cell_size\":0.05,\"walls\":[],\n\
            \"objects\":[{\"id\":0,\"category\":\"Toaster\",\"footprint\":[[1,1]],\"height_band\":\"low\"}],\n\
            \"spawns\":[[2,2]],\"categories\":[\"Laptop\"]}";
        match scene_from_json(text) {
            Err(Error::Parse { message, line, .. }) => {
                assert!(message.contains("Toaster"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
