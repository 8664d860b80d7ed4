//! Per-agent top-down semantic map: one evidence-count channel per category,
//! then occupied, then explored.

use std::collections::VecDeque;

use crate::category::{CategoryId, K_TOTAL};
use crate::error::{Error, Result};
use crate::geometry::{direction, Cell, Dims, RayTraversal, CELL_SIZE};
use crate::perception::{HitKind, Observation};

pub const CHANNELS: usize = K_TOTAL + 2;
pub const OCCUPIED: usize = K_TOTAL;
pub const EXPLORED: usize = K_TOTAL + 1;

const MAGIC: &[u8; 4] = b"SMAP";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticMap {
    dims: Dims,
    /// Row-major cells, channel-minor.
    counts: Vec<u16>,
}

impl SemanticMap {
    pub fn new(dims: Dims) -> Self {
        SemanticMap {
            dims,
            counts: vec![0; dims.area() * CHANNELS],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn slot(&self, c: Cell, channel: usize) -> usize {
        self.dims.index(c) * CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, c: Cell, channel: usize) -> u16 {
        self.counts[self.slot(c, channel)]
    }

    /// The channel counts of one cell.
    #[inline]
    pub fn cell_counts(&self, c: Cell) -> &[u16] {
        let s = self.dims.index(c) * CHANNELS;
        &self.counts[s..s + CHANNELS]
    }

    #[inline]
    pub fn add(&mut self, c: Cell, channel: usize, amount: u16) {
        let s = self.slot(c, channel);
        self.counts[s] = self.counts[s].saturating_add(amount);
    }

    pub fn category(&self, c: Cell, k: CategoryId) -> u16 {
        self.get(c, k.index())
    }

    pub fn occupied(&self, c: Cell) -> u16 {
        self.get(c, OCCUPIED)
    }

    pub fn explored(&self, c: Cell) -> u16 {
        self.get(c, EXPLORED)
    }

    /// Planning obstacle: any occupied evidence.
    #[inline]
    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.get(c, OCCUPIED) > 0
    }

    pub fn obstacle_grid(&self) -> Vec<bool> {
        self.dims.cells().map(|c| self.is_obstacle(c)).collect()
    }

    pub fn total(&self, channel: usize) -> u64 {
        self.counts
            .iter()
            .skip(channel)
            .step_by(CHANNELS)
            .map(|&v| v as u64)
            .sum()
    }

    pub fn raw_counts(&self) -> &[u16] {
        &self.counts
    }

    /// Adds one observation. Traversed cells strictly before a hit gain
    /// explored evidence; the hit cell gains occupied and explored, plus its
    /// category when the hit is a labelled object. The agent's own cell gains
    /// one explored count per call.
    pub fn project(&mut self, obs: &Observation) -> Result<()> {
        let origin = obs.pose.cell;
        if !self.dims.contains(origin) {
            return Err(Error::OutOfBounds {
                x: origin.x,
                y: origin.y,
            });
        }
        self.add(origin, EXPLORED, 1);
        let max_t = obs.max_range_m / CELL_SIZE;
        for ray in &obs.rays {
            let dir = direction(obs.pose.heading.degrees() as f64 + ray.bearing);
            match (ray.kind, ray.depth) {
                (HitKind::None, _) | (_, None) => {
                    for step in RayTraversal::new(self.dims, origin, dir, max_t) {
                        if step.t_mid() > max_t {
                            break;
                        }
                        self.add(step.cell, EXPLORED, 1);
                    }
                }
                (kind, Some(depth)) => {
                    // The hit cell is the traversed cell whose midpoint is
                    // nearest the depth. A plain interval test misplaces hits
                    // in cells the ray only clips at a corner.
                    let t_hit = depth / CELL_SIZE;
                    let steps: Vec<_> = RayTraversal::new(self.dims, origin, dir, t_hit + 1.0).collect();
                    let Some(hit) = steps
                        .iter()
                        .enumerate()
                        .min_by(|a, b| (a.1.t_mid() - t_hit).abs().total_cmp(&(b.1.t_mid() - t_hit).abs()))
                        .map(|(i, _)| i)
                    else {
                        continue;
                    };
                    for step in &steps[..hit] {
                        self.add(step.cell, EXPLORED, 1);
                    }
                    let c = steps[hit].cell;
                    self.add(c, EXPLORED, 1);
                    self.add(c, OCCUPIED, 1);
                    if kind == HitKind::Object {
                        if let Some(k) = ray.category {
                            self.add(c, k.index(), 1);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Cellwise, channelwise sum.
    pub fn merge(&mut self, other: &SemanticMap) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch(format!(
                "{}x{} vs {}x{}",
                self.dims.l, self.dims.w, other.dims.l, other.dims.w
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a = a.saturating_add(*b);
        }
        Ok(())
    }

    /// Binary layout: `SMAP`, u16 version, u16 channel count, u32 L, u32 W,
    /// then L*W*channels little-endian u16 counts, row-major, channel-minor.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.counts.len() * 2);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(CHANNELS as u16).to_le_bytes());
        out.extend_from_slice(&(self.dims.l as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.w as u32).to_le_bytes());
        for v in &self.counts {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SemanticMap> {
        let bad = |m: &str| Error::Parse {
            context: "semantic map".into(),
            line: 0,
            column: 0,
            message: m.to_string(),
        };
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing SMAP header"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if u16_at(4) != VERSION {
            return Err(bad("unsupported version"));
        }
        if u16_at(6) as usize != CHANNELS {
            return Err(bad("channel count mismatch"));
        }
        let dims = Dims::new(u32_at(8) as usize, u32_at(12) as usize);
        let n = dims.area() * CHANNELS;
        if bytes.len() != HEADER_LEN + 2 * n {
            return Err(bad("payload length mismatch"));
        }
        let counts = (0..n).map(|i| u16_at(HEADER_LEN + 2 * i)).collect();
        Ok(SemanticMap { dims, counts })
    }
}

pub fn project_observation(map: &SemanticMap, obs: &Observation) -> Result<SemanticMap> {
    let mut out = map.clone();
    out.project(obs)?;
    Ok(out)
}

pub fn merge_maps(local: &SemanticMap, received: &SemanticMap) -> Result<SemanticMap> {
    let mut out = local.clone();
    out.merge(received)?;
    Ok(out)
}

/// Hop counts from a goal set; `INFINITE` marks unreachable cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    dims: Dims,
    dist: Vec<u32>,
}

impl DistanceField {
    pub const INFINITE: u32 = u32::MAX;

    pub fn get(&self, c: Cell) -> u32 {
        if self.dims.contains(c) {
            self.dist[self.dims.index(c)]
        } else {
            Self::INFINITE
        }
    }

    pub fn finite(&self, c: Cell) -> Option<u32> {
        Some(self.get(c)).filter(|&d| d != Self::INFINITE)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }
}

/// Multi-source 4-connected BFS. Sources get 0 even when blocked; expansion
/// never enters blocked cells.
pub fn bfs_field(dims: Dims, sources: &[Cell], blocked: &[bool]) -> DistanceField {
    let mut dist = vec![DistanceField::INFINITE; dims.area()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dims.contains(s) && dist[dims.index(s)] != 0 {
            dist[dims.index(s)] = 0;
            queue.push_back(s);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[dims.index(c)] + 1;
        for n in c.neighbors4() {
            if dims.contains(n) {
                let i = dims.index(n);
                if !blocked[i] && dist[i] == DistanceField::INFINITE {
                    dist[i] = d;
                    queue.push_back(n);
                }
            }
        }
    }
    DistanceField { dims, dist }
}

pub fn distance_field(map: &SemanticMap, goals: &[Cell]) -> Result<DistanceField> {
    if goals.is_empty() {
        return Err(Error::EmptyGoalSet);
    }
    Ok(bfs_field(map.dims(), goals, &map.obstacle_grid()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Heading;
    use crate::perception::{Pose, RayHit};
    use proptest::prelude::*;

    fn laptop() -> CategoryId {
        CategoryId::from_name("Laptop").unwrap()
    }

    fn single_ray(cell: Cell, heading: Heading, hit: RayHit) -> Observation {
        Observation {
            pose: Pose::new(cell, heading),
            max_range_m: 5.0,
            rays: vec![hit],
        }
    }

    fn laptop_hit(depth: f64) -> RayHit {
        RayHit {
            bearing: 0.0,
            depth: Some(depth),
            kind: HitKind::Object,
            category: Some(laptop()),
            instance: Some(0),
        }
    }

    #[test]
    fn one_meter_hit_lands_twenty_cells_ahead() {
        let mut map = SemanticMap::new(Dims::new(60, 10));
        let c = Cell::new(5, 4);
        map.project(&single_ray(c, Heading::East, laptop_hit(1.0))).unwrap();
        let hit = Cell::new(25, 4);
        assert_eq!(map.category(hit, laptop()), 1);
        assert_eq!(map.occupied(hit), 1);
        assert_eq!(map.explored(hit), 1);
        for x in 6..25 {
            let cell = Cell::new(x, 4);
            assert_eq!(map.explored(cell), 1);
            assert_eq!(map.occupied(cell), 0);
        }
        assert_eq!(map.explored(Cell::new(26, 4)), 0);
        assert_eq!(map.total(laptop().index()), 1);
        assert_eq!(map.total(EXPLORED), 21);
    }

    #[test]
    fn none_ray_explores_to_range() {
        let mut map = SemanticMap::new(Dims::new(200, 5));
        let hit = RayHit {
            bearing: 0.0,
            depth: None,
            kind: HitKind::None,
            category: None,
            instance: None,
        };
        map.project(&single_ray(Cell::new(0, 2), Heading::East, hit)).unwrap();
        assert_eq!(map.total(OCCUPIED), 0);
        assert_eq!(map.explored(Cell::new(100, 2)), 1);
        assert_eq!(map.explored(Cell::new(101, 2)), 0);
    }

    #[test]
    fn projecting_twice_doubles_counts() {
        let obs = single_ray(Cell::new(2, 2), Heading::South, laptop_hit(0.4));
        let once = project_observation(&SemanticMap::new(Dims::new(10, 20)), &obs).unwrap();
        let twice = project_observation(&once, &obs).unwrap();
        for (a, b) in once.raw_counts().iter().zip(twice.raw_counts()) {
            assert_eq!(2 * a, *b);
        }
    }

    #[test]
    fn out_of_bounds_pose_rejected() {
        let mut map = SemanticMap::new(Dims::new(4, 4));
        let obs = single_ray(Cell::new(9, 9), Heading::East, laptop_hit(0.1));
        assert!(matches!(map.project(&obs), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn merge_with_zero_is_identity_and_dims_checked() {
        let mut a = SemanticMap::new(Dims::new(8, 8));
        a.add(Cell::new(1, 1), 3, 4);
        assert_eq!(merge_maps(&a, &SemanticMap::new(Dims::new(8, 8))).unwrap(), a);
        assert!(matches!(
            merge_maps(&a, &SemanticMap::new(Dims::new(8, 9))),
            Err(Error::DimsMismatch(_))
        ));
    }

    #[test]
    fn merging_disjoint_objects_keeps_both() {
        let dims = Dims::new(30, 30);
        let box_cat = CategoryId::from_name("Box").unwrap();
        let mut a = SemanticMap::new(dims);
        a.project(&single_ray(Cell::new(2, 2), Heading::East, laptop_hit(0.5))).unwrap();
        let mut b = SemanticMap::new(dims);
        let mut hit = laptop_hit(0.5);
        hit.category = Some(box_cat);
        b.project(&single_ray(Cell::new(2, 20), Heading::East, hit)).unwrap();
        let m = merge_maps(&a, &b).unwrap();
        assert_eq!(m.category(Cell::new(12, 2), laptop()), 1);
        assert_eq!(m.category(Cell::new(12, 20), box_cat), 1);
    }

    #[test]
    fn manhattan_on_empty_grid() {
        let map = SemanticMap::new(Dims::new(5, 5));
        let f = distance_field(&map, &[Cell::new(0, 0)]).unwrap();
        assert_eq!(f.get(Cell::new(4, 4)), 8);
        assert_eq!(f.get(Cell::new(0, 0)), 0);
        assert!(matches!(distance_field(&map, &[]), Err(Error::EmptyGoalSet)));
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut map = SemanticMap::new(Dims::new(7, 7));
        let goal = Cell::new(3, 3);
        for n in goal.neighbors4() {
            map.add(n, OCCUPIED, 1);
            map.add(n, EXPLORED, 1);
        }
        let f = distance_field(&map, &[goal]).unwrap();
        assert_eq!(f.get(goal), 0);
        for c in map.dims().cells() {
            if c != goal {
                assert_eq!(f.get(c), DistanceField::INFINITE);
            }
        }
    }

    #[test]
    fn binary_layout_header() {
        let mut map = SemanticMap::new(Dims::new(3, 2));
        map.add(Cell::new(2, 1), EXPLORED, 513);
        let bytes = map.to_bytes();
        assert_eq!(&bytes[..4], b"SMAP");
        assert_eq!(bytes.len(), 16 + 3 * 2 * CHANNELS * 2);
        // cell (2,1) is index 5; explored is the last channel.
        let off = 16 + 2 * (5 * CHANNELS + EXPLORED);
        assert_eq!(&bytes[off..off + 2], &[1, 2]);
        assert_eq!(SemanticMap::from_bytes(&bytes).unwrap(), map);
    }

    fn arb_map() -> impl Strategy<Value = SemanticMap> {
        proptest::collection::vec(0u16..50, 6 * 6 * CHANNELS).prop_map(|counts| SemanticMap {
            dims: Dims::new(6, 6),
            counts,
        })
    }

    proptest! {
        #[test]
        fn merge_commutes_and_associates(a in arb_map(), b in arb_map(), c in arb_map()) {
            prop_assert_eq!(merge_maps(&a, &b).unwrap(), merge_maps(&b, &a).unwrap());
            let left = merge_maps(&merge_maps(&a, &b).unwrap(), &c).unwrap();
            let right = merge_maps(&a, &merge_maps(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn binary_round_trip(a in arb_map()) {
            prop_assert_eq!(SemanticMap::from_bytes(&a.to_bytes()).unwrap(), a);
        }
    }

    #[test]
    fn projected_hits_land_on_the_struck_cell() {
        use crate::geometry::Pitch;
        use crate::perception::{observe, SensorParams};
        use crate::scene::{generate_scene, GenParams};
        let scene = generate_scene(7, &GenParams::default()).unwrap();
        let sensor = SensorParams::default();
        for (n, &c) in scene.spawn_cells().iter().step_by(37).enumerate() {
            for h in [Heading::East, Heading::South, Heading::West, Heading::North] {
                let mut pose = Pose::new(c, h);
                pose.pitch = [Pitch::Down, Pitch::Level, Pitch::Up][n % 3];
                let obs = observe(&scene, &pose, &sensor).unwrap();
                let mut map = SemanticMap::new(scene.dims());
                map.project(&obs).unwrap();
                for cell in scene.dims().cells() {
                    if map.occupied(cell) > 0 {
                        assert!(!scene.is_free(cell), "{cell:?} seen from {pose:?}");
                    }
                }
            }
        }
    }
}
