//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use semnav::category::CategoryId;
use semnav::geometry::{Cell, Dims, Heading, Pitch};
use semnav::perception::{observe, Pose, SensorParams};
use semnav::scene::{HeightBand, ObjectInstance, Scene};

fn delta(h: Heading) -> (i32, i32) {
    match h {
        Heading::East => (1, 0),
        Heading::South => (0, 1),
        Heading::West => (-1, 0),
        Heading::North => (0, -1),
    }
}

fn turn(h: Heading, right: bool) -> Heading {
    let order = [Heading::East, Heading::South, Heading::West, Heading::North];
    let i = order.iter().position(|&o| o == h).unwrap();
    order[(i + if right { 1 } else { 3 }) % 4]
}

/// Forward move of up to five cells, stopping before anything blocked.
pub fn forward(dims: Dims, free: impl Fn(Cell) -> bool, c: Cell, h: Heading) -> Cell {
    let (dx, dy) = delta(h);
    let mut cur = c;
    for _ in 0..5 {
        let n = Cell::new(cur.x + dx, cur.y + dy);
        if n.x < 0 || n.y < 0 || n.x >= dims.l as i32 || n.y >= dims.w as i32 || !free(n) {
            break;
        }
        cur = n;
    }
    cur
}

/// Dijkstra with unit weights over (cell, heading): move, turn left, turn
/// right. Cost to the nearest state whose cell is within Chebyshev `radius`
/// of `goal`.
pub fn dijkstra_cost(dims: Dims, blocked: &[bool], start: Cell, heading: Heading, goal: Cell, radius: i32) -> Option<usize> {
    let free = |c: Cell| !blocked[c.y as usize * dims.l + c.x as usize];
    let mut dist: HashMap<(Cell, Heading), usize> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert((start, heading), 0);
    heap.push(Reverse((0usize, start.x, start.y, heading as u8)));
    let headings = [Heading::East, Heading::South, Heading::West, Heading::North];
    while let Some(Reverse((d, x, y, hi))) = heap.pop() {
        let c = Cell::new(x, y);
        let h = headings.into_iter().find(|&h| h as u8 == hi).unwrap();
        if dist.get(&(c, h)).is_some_and(|&best| best < d) {
            continue;
        }
        if (c.x - goal.x).abs().max((c.y - goal.y).abs()) <= radius {
            return Some(d);
        }
        let nexts = [(forward(dims, free, c, h), h), (c, turn(h, true)), (c, turn(h, false))];
        for (nc, nh) in nexts {
            let nd = d + 1;
            if dist.get(&(nc, nh)).map_or(true, |&best| nd < best) {
                dist.insert((nc, nh), nd);
                heap.push(Reverse((nd, nc.x, nc.y, nh as u8)));
            }
        }
    }
    None
}

/// Random occupancy grid with the given obstacle density.
pub fn random_grid(rng: &mut ChaCha8Rng, dims: Dims, density: f64) -> Vec<bool> {
    (0..dims.area()).map(|_| rng.gen_bool(density)).collect()
}

/// Fewest steps for one agent to declare every target and stop, by plain
/// BFS over (cell, heading, pitch, found set). `Found` is legal when an
/// unfound target shows on some ray closer than 1.0 m.
pub fn brute_force_makespan(scene: &Scene, spawn: Pose, targets: &[CategoryId], sensor: &SensorParams) -> Option<u32> {
    let dims = scene.dims();
    let full = (1u32 << targets.len()) - 1;
    type State = (Cell, Heading, Pitch, u32);
    let mut seen: HashMap<State, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    let s0 = (spawn.cell, spawn.heading, spawn.pitch, 0u32);
    seen.insert(s0, 0);
    queue.push_back(s0);
    let mut vis_cache: HashMap<(Cell, Heading, Pitch), Vec<CategoryId>> = HashMap::new();
    while let Some(s @ (c, h, p, mask)) = queue.pop_front() {
        let d = seen[&s];
        if mask == full {
            return Some(d + 1);
        }
        let mut next: Vec<State> = vec![
            (forward(dims, |x| scene.is_free(x), c, h), h, p, mask),
            (c, turn(h, true), p, mask),
            (c, turn(h, false), p, mask),
        ];
        let up = match p {
            Pitch::Down => Pitch::Level,
            _ => Pitch::Up,
        };
        let down = match p {
            Pitch::Up => Pitch::Level,
            _ => Pitch::Down,
        };
        next.push((c, h, up, mask));
        next.push((c, h, down, mask));
        let visible = vis_cache.entry((c, h, p)).or_insert_with(|| {
            let obs = observe(scene, &Pose { cell: c, heading: h, pitch: p }, sensor).unwrap();
            obs.categories_within(1.0).collect()
        });
        for (j, t) in targets.iter().enumerate() {
            if mask & 1 << j == 0 && visible.contains(t) {
                next.push((c, h, p, mask | 1 << j));
            }
        }
        for n in next {
            if n != s && !seen.contains_key(&n) {
                seen.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    None
}

/// A tiny walled room with random interior walls and a few objects.
pub fn tiny_scene(rng: &mut ChaCha8Rng, id: &str, side: usize, cats: &[CategoryId]) -> Scene {
    let dims = Dims::new(side, side);
    loop {
        let mut walls = vec![false; dims.area()];
        for c in dims.cells() {
            let border = c.x == 0 || c.y == 0 || c.x == side as i32 - 1 || c.y == side as i32 - 1;
            walls[dims.index(c)] = border || rng.gen_bool(0.08);
        }
        let mut objects = Vec::new();
        let mut taken = walls.clone();
        for (i, &k) in cats.iter().enumerate() {
            let c = Cell::new(rng.gen_range(1..side as i32 - 1), rng.gen_range(1..side as i32 - 1));
            if taken[dims.index(c)] {
                continue;
            }
            taken[dims.index(c)] = true;
            let band = [HeightBand::Low, HeightBand::Eye, HeightBand::High][rng.gen_range(0..3)];
            objects.push(ObjectInstance {
                instance_id: i as u32,
                category: k,
                footprint: vec![c],
                height_band: band,
            });
        }
        if objects.len() != cats.len() {
            continue;
        }
        let spawns: Vec<Cell> = dims.cells().filter(|c| !taken[dims.index(*c)]).collect();
        if spawns.is_empty() {
            continue;
        }
        return Scene::new(id, dims, walls, objects, spawns, cats.to_vec()).unwrap();
    }
}

/// Exact membership of `recv`'s cell center in the view sector of `sender`
/// (90° field of view, `range_m`) dilated by `margin_m`, for axis-aligned
/// headings. Coordinates are integers in quarter-cell units (1.25 cm).
pub fn in_dilated_sector(sender: &Pose, recv: &Pose, range_m: f64, margin_m: f64) -> bool {
    let unit = 0.0125;
    let r = (range_m / unit).round() as i128;
    let m = (margin_m / unit).round() as i128;
    assert!(((r as f64) * unit - range_m).abs() < 1e-12 && ((m as f64) * unit - margin_m).abs() < 1e-12);
    // Cell centers are odd multiples of two units.
    let ax = 4 * sender.cell.x as i128 + 2;
    let ay = 4 * sender.cell.y as i128 + 2;
    let px = 4 * recv.cell.x as i128 + 2;
    let py = 4 * recv.cell.y as i128 + 2;
    let (vx, vy) = (px - ax, py - ay);
    let (hx, hy) = delta(sender.heading);
    let (hx, hy) = (hx as i128, hy as i128);
    // Local frame: u along the heading, w across.
    let u = vx * hx + vy * hy;
    let w = -vx * hy + vy * hx;
    let rr = u * u + w * w;
    // Inside the wedge |w| <= u: distance is max(0, |v| - R).
    if w.abs() <= u {
        return rr <= (r + m) * (r + m);
    }
    // Outside the wedge the nearest sector point lies on an edge segment
    // from the apex to R(1, s)/sqrt2.
    let near_edge = |s: i128| -> bool {
        let along = u + s * w; // sqrt2 * projection onto the edge
        if along <= 0 {
            return rr <= m * m;
        }
        if along * along >= 2 * r * r {
            // Beyond the far end: |v - e|^2 = rr + R^2 - sqrt2 R along <= M^2.
            let lhs = rr + r * r - m * m;
            return lhs <= 0 || lhs * lhs <= 2 * r * r * along * along;
        }
        let perp = s * u - w; // sqrt2 * signed distance to the edge line
        perp * perp <= 2 * m * m
    };
    near_edge(1) || near_edge(-1)
}

/// Plain 4-connected BFS distances from `sources`; sources count as free.
pub fn grid_distances(dims: Dims, blocked: &[bool], sources: &[Cell]) -> Vec<Option<u32>> {
    let mut d = vec![None; dims.area()];
    let mut q = VecDeque::new();
    for &s in sources {
        let i = s.y as usize * dims.l + s.x as usize;
        if d[i].is_none() {
            d[i] = Some(0);
            q.push_back(s);
        }
    }
    while let Some(c) = q.pop_front() {
        let here = d[c.y as usize * dims.l + c.x as usize].unwrap();
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = Cell::new(c.x + dx, c.y + dy);
            if n.x < 0 || n.y < 0 || n.x >= dims.l as i32 || n.y >= dims.w as i32 {
                continue;
            }
            let i = n.y as usize * dims.l + n.x as usize;
            if !blocked[i] && d[i].is_none() {
                d[i] = Some(here + 1);
                q.push_back(n);
            }
        }
    }
    d
}
