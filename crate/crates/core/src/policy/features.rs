//! State features: the pooled key-objects semantic map plus pose and last
//! action, and the per-block summaries the learned proposer scores.

use crate::category::K_TOTAL;
use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims};
use crate::perception::Pose;
use crate::priors::KeyObjectsMap;
use crate::semantic_map::{bfs_field, DistanceField, SemanticMap, CHANNELS};

use super::subgoal::{Analysis, MapView};
use super::Action;

/// Channels of the concatenated map: semantic channels plus the two key layers.
pub const FUSED_CHANNELS: usize = K_TOTAL + 4;
pub const POSE_FEATURES: usize = 4;
pub const ACTION_FEATURES: usize = 7;

pub fn feature_len(p: usize) -> usize {
    p * p * FUSED_CHANNELS + POSE_FEATURES + ACTION_FEATURES
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub p: usize,
    /// `p*p*FUSED_CHANNELS` values, block-major, channel-minor.
    pub map: Vec<f32>,
    pub pose: [f32; POSE_FEATURES],
    pub action: [f32; ACTION_FEATURES],
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.map.len() + POSE_FEATURES + ACTION_FEATURES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = self.map.clone();
        v.extend_from_slice(&self.pose);
        v.extend_from_slice(&self.action);
        v
    }
}

/// Partition of the grid into `p`×`p` blocks of `ceil(L/p)`×`ceil(W/p)` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub p: usize,
    pub sx: usize,
    pub sy: usize,
}

impl Blocks {
    pub fn new(dims: Dims, p: usize) -> Blocks {
        Blocks {
            p,
            sx: dims.l.div_ceil(p).max(1),
            sy: dims.w.div_ceil(p).max(1),
        }
    }

    pub fn count(&self) -> usize {
        self.p * self.p
    }

    pub fn of(&self, c: Cell) -> usize {
        let bx = (c.x as usize / self.sx).min(self.p - 1);
        let by = (c.y as usize / self.sy).min(self.p - 1);
        by * self.p + bx
    }

    pub fn center(&self, b: usize) -> Cell {
        let (bx, by) = (b % self.p, b / self.p);
        Cell::new((bx * self.sx + self.sx / 2) as i32, (by * self.sy + self.sy / 2) as i32)
    }
}

/// Block-max pooling of the semantic map concatenated with the key layers;
/// pose and last action appended.
pub fn fuse_features(
    sem: &SemanticMap,
    key: &KeyObjectsMap,
    pose: &Pose,
    last_action: Option<Action>,
    p: usize,
) -> Result<FeatureVector> {
    let dims = sem.dims();
    if key.dims() != dims {
        return Err(Error::DimsMismatch(format!(
            "semantic map {}x{} vs key map {}x{}",
            dims.l,
            dims.w,
            key.dims().l,
            key.dims().w
        )));
    }
    if p == 0 {
        return Err(Error::validation("policy.p", "must be at least 1"));
    }
    let blocks = Blocks::new(dims, p);
    let mut map = vec![0f32; blocks.count() * FUSED_CHANNELS];
    for c in dims.cells() {
        let base = blocks.of(c) * FUSED_CHANNELS;
        let counts = sem.cell_counts(c);
        for (ch, &v) in counts.iter().enumerate().take(CHANNELS) {
            if v > 0 {
                map[base + ch] = map[base + ch].max(v as f32);
            }
        }
        if key.is_target(c) {
            map[base + CHANNELS] = 1.0;
        }
        if key.is_related(c) {
            map[base + CHANNELS + 1] = 1.0;
        }
    }
    let pose_f = [
        (pose.cell.x as f64 / dims.l as f64) as f32,
        (pose.cell.y as f64 / dims.w as f64) as f32,
        (pose.heading.degrees() as f64 / 360.0) as f32,
        pose.pitch.index() as f32,
    ];
    let mut action = [0f32; ACTION_FEATURES];
    if let Some(a) = last_action {
        action[a.index()] = 1.0;
    }
    Ok(FeatureVector {
        p,
        map,
        pose: pose_f,
        action,
    })
}

/// Features per block seen by the learned proposer.
pub const BLOCK_FEATURES: usize = 9;

/// Per-block summaries and the validity mask (blocks holding a candidate).
///
/// Features: unchecked target present, unchecked related present, unchecked
/// frontier present, explored fraction, blocked fraction, normalised path
/// length to the block's nearest candidate, agent inside, and the smallest
/// normalised distance from a block candidate to a target cell and to a
/// related cell (1 when there is none).
pub fn block_features(an: &Analysis, checked: &[bool], p: usize) -> (Vec<f64>, Vec<bool>) {
    let view = an.view;
    let dims = view.dims;
    let blocks = Blocks::new(dims, p);
    let nb = blocks.count();
    let mut f = vec![0f64; nb * BLOCK_FEATURES];
    let mut cells = vec![0usize; nb];
    let mut best = vec![u32::MAX; nb];
    let to = key_field(view, &view.key.layer_targets);
    let ko = key_field(view, &view.key.layer_related);
    let mut near = vec![[u32::MAX; 2]; nb];
    for c in dims.cells() {
        let i = dims.index(c);
        let b = blocks.of(c);
        let row = &mut f[b * BLOCK_FEATURES..(b + 1) * BLOCK_FEATURES];
        cells[b] += 1;
        if !checked[i] {
            if view.key.layer_targets[i] {
                row[0] = 1.0;
            }
            if view.key.layer_related[i] {
                row[1] = 1.0;
            }
        }
        if view.explored[i] {
            row[3] += 1.0;
        }
        if view.blocked[i] {
            row[4] += 1.0;
        }
    }
    for &c in &an.candidates {
        let i = dims.index(c);
        let b = blocks.of(c);
        if an.frontier[i] && !checked[i] {
            f[b * BLOCK_FEATURES + 2] = 1.0;
        }
        best[b] = best[b].min(an.dist.get(c));
        for (slot, field) in [&to, &ko].into_iter().enumerate() {
            if let Some(d) = field.as_ref().and_then(|f| f.finite(c)) {
                near[b][slot] = near[b][slot].min(d);
            }
        }
    }
    let norm = (dims.l + dims.w) as f64;
    let agent_block = blocks.of(an.agent);
    let mut valid = vec![false; nb];
    for b in 0..nb {
        let row = &mut f[b * BLOCK_FEATURES..(b + 1) * BLOCK_FEATURES];
        let n = cells[b].max(1) as f64;
        row[3] /= n;
        row[4] /= n;
        valid[b] = best[b] != u32::MAX;
        row[5] = if valid[b] { best[b] as f64 / norm } else { 1.0 };
        row[6] = if b == agent_block { 1.0 } else { 0.0 };
        for slot in 0..2 {
            row[7 + slot] = match near[b][slot] {
                u32::MAX => 1.0,
                d => (d as f64 / norm).min(1.0),
            };
        }
    }
    (f, valid)
}

/// Path lengths to the cells of a key layer, if it has any.
pub fn key_field(view: &MapView, layer: &[bool]) -> Option<DistanceField> {
    let src: Vec<Cell> = layer
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| view.dims.cell(i))
        .collect();
    (!src.is_empty()).then(|| bfs_field(view.dims, &src, &view.blocked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Heading;

    #[test]
    fn zero_maps_keep_pose_and_action() {
        let dims = Dims::new(32, 32);
        let sem = SemanticMap::new(dims);
        let key = KeyObjectsMap::empty(dims);
        let pose = Pose::new(Cell::new(8, 16), Heading::South);
        let f = fuse_features(&sem, &key, &pose, Some(Action::RotateLeft), 16).unwrap();
        assert_eq!(f.len(), feature_len(16));
        assert!(f.map.iter().all(|&v| v == 0.0));
        assert_eq!(f.pose, [0.25, 0.5, 0.25, 1.0]);
        assert_eq!(f.action[Action::RotateLeft.index()], 1.0);
        assert_eq!(f.to_vec().len(), 16 * 16 * 28 + 11);
    }

    #[test]
    fn single_cell_lights_one_block() {
        let dims = Dims::new(80, 80);
        let mut sem = SemanticMap::new(dims);
        sem.add(Cell::new(37, 61), 5, 3);
        let key = KeyObjectsMap::empty(dims);
        let pose = Pose::new(Cell::new(0, 0), Heading::East);
        let f = fuse_features(&sem, &key, &pose, None, 16).unwrap();
        // 80 / 16 = 5 cells per block: block (7, 12).
        let b = 12 * 16 + 7;
        let lit: Vec<usize> = f.map.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(lit, vec![b * FUSED_CHANNELS + 5]);
        assert_eq!(f.map[b * FUSED_CHANNELS + 5], 3.0);
        assert_eq!(f, fuse_features(&sem, &key, &pose, None, 16).unwrap());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let sem = SemanticMap::new(Dims::new(10, 10));
        let key = KeyObjectsMap::empty(Dims::new(10, 11));
        let pose = Pose::new(Cell::new(0, 0), Heading::East);
        assert!(matches!(fuse_features(&sem, &key, &pose, None, 4), Err(Error::DimsMismatch(_))));
    }

    #[test]
    fn block_mask_follows_candidates() {
        let dims = Dims::new(8, 8);
        let mut explored = vec![false; 64];
        for c in dims.cells() {
            explored[dims.index(c)] = c.x < 4;
        }
        let view = MapView {
            dims,
            blocked: vec![false; 64],
            swept: explored.clone(),
            explored,
            key: KeyObjectsMap::empty(dims),
        };
        let an = Analysis::new(&view, Cell::new(1, 1));
        let (f, valid) = block_features(&an, &vec![false; 64], 2);
        assert_eq!(valid, vec![true, false, true, false]);
        assert_eq!(f[6], 1.0);
        assert_eq!(f[3], 1.0);
        assert_eq!(f[BLOCK_FEATURES + 3], 0.0);
        assert_eq!(f[2], 1.0);
        // No key cells: both distance features saturate.
        assert_eq!(&f[7..9], &[1.0, 1.0]);
    }

    #[test]
    fn key_distance_features() {
        let dims = Dims::new(8, 8);
        let mut view = MapView {
            dims,
            blocked: vec![false; 64],
            explored: vec![true; 64],
            swept: vec![true; 64],
            key: KeyObjectsMap::empty(dims),
        };
        view.key.layer_targets[dims.index(Cell::new(7, 7))] = true;
        let an = Analysis::new(&view, Cell::new(0, 0));
        let (f, _) = block_features(&an, &vec![false; 64], 2);
        // Block 0 holds (3,3), eight steps from (7,7); block 3 holds the target.
        assert_eq!(f[7], 8.0 / 16.0);
        assert_eq!(f[3 * BLOCK_FEATURES + 7], 0.0);
        assert_eq!(f[3 * BLOCK_FEATURES + 8], 1.0);
    }
}
