//! Egocentric observations by 2-D raycasting, plus segmentation noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::category::{CategoryId, K_TOTAL};
use crate::error::{Error, Result};
use crate::geometry::{direction, Cell, Heading, Pitch, RayTraversal, CELL_SIZE};
use crate::scene::{HeightBand, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
    pub pitch: Pitch,
}

impl Pose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        Pose {
            cell,
            heading,
            pitch: Pitch::Level,
        }
    }

    /// Position in meters (cell index times cell size).
    pub fn position_m(&self) -> (f64, f64) {
        (self.cell.x as f64 * CELL_SIZE, self.cell.y as f64 * CELL_SIZE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    pub fov_deg: f64,
    pub ray_count: usize,
    pub max_range_m: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            fov_deg: 90.0,
            ray_count: 61,
            max_range_m: 5.0,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 360.0) {
            return Err(Error::validation("sensor.fov_deg", "must be in (0, 360)"));
        }
        if self.ray_count < 2 {
            return Err(Error::validation("sensor.ray_count", "must be at least 2"));
        }
        if !(self.max_range_m > 0.0 && self.max_range_m.is_finite()) {
            return Err(Error::validation("sensor.max_range_m", "must be positive"));
        }
        Ok(())
    }

    pub fn bearing(&self, ray: usize) -> f64 {
        -0.5 * self.fov_deg + ray as f64 * self.fov_deg / (self.ray_count - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitKind {
    Wall,
    Object,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    /// Degrees relative to the heading, positive clockwise.
    pub bearing: f64,
    pub depth: Option<f64>,
    pub kind: HitKind,
    pub category: Option<CategoryId>,
    pub instance: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub max_range_m: f64,
    pub rays: Vec<RayHit>,
}

impl Observation {
    /// Categories seen on some ray closer than `range_m`.
    pub fn categories_within(&self, range_m: f64) -> impl Iterator<Item = CategoryId> + '_ {
        self.rays.iter().filter_map(move |r| match (r.category, r.depth) {
            (Some(c), Some(d)) if r.kind == HitKind::Object && d < range_m => Some(c),
            _ => None,
        })
    }

    pub fn sees_within(&self, category: CategoryId, range_m: f64) -> bool {
        self.categories_within(range_m).any(|c| c == category)
    }
}

pub(crate) fn band_for(pitch: Pitch) -> HeightBand {
    match pitch {
        Pitch::Down => HeightBand::Low,
        Pitch::Level => HeightBand::Eye,
        Pitch::Up => HeightBand::High,
    }
}

/// Casts `sensor.ray_count` rays across the field of view.
pub fn observe(scene: &Scene, pose: &Pose, sensor: &SensorParams) -> Result<Observation> {
    if !scene.is_free(pose.cell) {
        return Err(Error::InvalidPose(format!(
            "({}, {}) is not a free cell of {}",
            pose.cell.x,
            pose.cell.y,
            scene.id()
        )));
    }
    let band = band_for(pose.pitch);
    let max_t = sensor.max_range_m / CELL_SIZE;
    let rays = (0..sensor.ray_count)
        .map(|j| {
            let bearing = sensor.bearing(j);
            let dir = direction(pose.heading.degrees() as f64 + bearing);
            let mut hit = RayHit {
                bearing,
                depth: None,
                kind: HitKind::None,
                category: None,
                instance: None,
            };
            for step in RayTraversal::new(scene.dims(), pose.cell, dir, max_t) {
                let t = step.t_mid();
                if t > max_t {
                    break;
                }
                if scene.is_wall(step.cell) {
                    hit.kind = HitKind::Wall;
                    hit.depth = Some(t * CELL_SIZE);
                    break;
                }
                if let Some(obj) = scene.object_at(step.cell) {
                    if obj.height_band == band {
                        hit.kind = HitKind::Object;
                        hit.depth = Some(t * CELL_SIZE);
                        hit.category = Some(obj.category);
                        hit.instance = Some(obj.instance_id);
                        break;
                    }
                }
            }
            hit
        })
        .collect();
    Ok(Observation {
        pose: *pose,
        max_range_m: sensor.max_range_m,
        rays,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub p_miss: f64,
    pub p_confuse: f64,
    pub depth_sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            p_miss: 0.1,
            p_confuse: 0.0,
            depth_sigma: 0.0,
        }
    }
}

impl NoiseParams {
    pub const NONE: NoiseParams = NoiseParams {
        p_miss: 0.0,
        p_confuse: 0.0,
        depth_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("noise.p_miss", self.p_miss), ("noise.p_confuse", self.p_confuse)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(name, "must be a probability"));
            }
        }
        if !(self.depth_sigma >= 0.0 && self.depth_sigma.is_finite()) {
            return Err(Error::validation("noise.depth_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

/// Applies segmentation and depth noise. Wall hits keep their label; ray
/// count, bearings and hit kinds never change.
pub fn corrupt_segmentation<R: Rng>(
    obs: &Observation,
    noise: &NoiseParams,
    rng: &mut R,
) -> Observation {
    let depth_noise = (noise.depth_sigma > 0.0).then(|| Normal::new(0.0, noise.depth_sigma).unwrap());
    let mut out = obs.clone();
    for ray in &mut out.rays {
        if ray.kind == HitKind::Object {
            if let Some(cat) = ray.category {
                if noise.p_miss > 0.0 && rng.gen_bool(noise.p_miss) {
                    ray.category = None;
                    ray.instance = None;
                } else if noise.p_confuse > 0.0 && rng.gen_bool(noise.p_confuse) {
                    let mut other = rng.gen_range(0..K_TOTAL as u8 - 1);
                    if other >= cat.0 {
                        other += 1;
                    }
                    ray.category = Some(CategoryId(other));
                }
            }
        }
        if let (Some(d), Some(dist)) = (ray.depth, depth_noise.as_ref()) {
            let noisy = d + dist.sample(rng);
            ray.depth = Some(noisy.clamp(1e-6, obs.max_range_m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dims;
    use crate::scene::ObjectInstance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laptop() -> CategoryId {
        CategoryId::from_name("Laptop").unwrap()
    }

    /// 5x5 room (walls on the border) with an optional object.
    fn fixture(object: Option<(Cell, HeightBand)>) -> Scene {
        let dims = Dims::new(5, 5);
        let walls = dims
            .cells()
            .map(|c| c.x == 0 || c.y == 0 || c.x == 4 || c.y == 4)
            .collect();
        let objects: Vec<ObjectInstance> = object
            .into_iter()
            .map(|(c, band)| ObjectInstance {
                instance_id: 0,
                category: laptop(),
                footprint: vec![c],
                height_band: band,
            })
            .collect();
        let cats = objects.iter().map(|o| o.category).collect();
        Scene::new("fixture", dims, walls, objects, vec![Cell::new(1, 2)], cats).unwrap()
    }

    fn center(obs: &Observation) -> &RayHit {
        &obs.rays[obs.rays.len() / 2]
    }

    #[test]
    fn wall_one_cell_ahead() {
        let scene = fixture(None);
        let pose = Pose::new(Cell::new(3, 2), Heading::East);
        let obs = observe(&scene, &pose, &SensorParams::default()).unwrap();
        let c = center(&obs);
        assert_eq!(c.bearing, 0.0);
        assert_eq!(c.kind, HitKind::Wall);
        assert!((c.depth.unwrap() - 0.05).abs() < 1e-12);

        let pose = Pose::new(Cell::new(1, 2), Heading::East);
        let obs = observe(&scene, &pose, &SensorParams::default()).unwrap();
        assert!((center(&obs).depth.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn pitch_gates_object_visibility() {
        let scene = fixture(Some((Cell::new(3, 2), HeightBand::Eye)));
        let mut pose = Pose::new(Cell::new(1, 2), Heading::East);
        let sensor = SensorParams::default();
        let obs = observe(&scene, &pose, &sensor).unwrap();
        let c = center(&obs);
        assert_eq!(c.kind, HitKind::Object);
        assert_eq!(c.category, Some(laptop()));
        assert!((c.depth.unwrap() - 0.10).abs() < 1e-12);

        pose.pitch = Pitch::Up;
        let obs = observe(&scene, &pose, &sensor).unwrap();
        let c = center(&obs);
        assert_eq!(c.kind, HitKind::Wall);
        assert!((c.depth.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn empty_room_has_no_object_hits() {
        let dims = Dims::new(40, 40);
        let walls = dims
            .cells()
            .map(|c| c.x == 0 || c.y == 0 || c.x == 39 || c.y == 39)
            .collect();
        let scene = Scene::new("empty", dims, walls, vec![], vec![Cell::new(20, 20)], vec![]).unwrap();
        let obs = observe(&scene, &Pose::new(Cell::new(20, 20), Heading::North), &SensorParams::default())
            .unwrap();
        assert_eq!(obs.rays.len(), 61);
        assert!(obs.rays.iter().all(|r| r.kind != HitKind::Object));
    }

    #[test]
    fn invalid_pose_rejected() {
        let scene = fixture(None);
        let err = observe(&scene, &Pose::new(Cell::new(0, 0), Heading::East), &SensorParams::default());
        assert!(matches!(err, Err(Error::InvalidPose(_))));
    }

    fn object_rays(n: usize) -> Observation {
        Observation {
            pose: Pose::new(Cell::new(0, 0), Heading::East),
            max_range_m: 5.0,
            rays: (0..n)
                .map(|i| RayHit {
                    bearing: 0.0,
                    depth: Some(1.0),
                    kind: if i % 10 == 0 { HitKind::Wall } else { HitKind::Object },
                    category: (i % 10 != 0).then(laptop),
                    instance: (i % 10 != 0).then_some(0),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let obs = object_rays(200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrupt_segmentation(&obs, &NoiseParams::NONE, &mut rng), obs);
    }

    #[test]
    fn full_miss_drops_every_category() {
        let obs = object_rays(200);
        let noise = NoiseParams {
            p_miss: 1.0,
            ..NoiseParams::NONE
        };
        let out = corrupt_segmentation(&obs, &noise, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(out.rays.iter().all(|r| r.category.is_none()));
        for (a, b) in obs.rays.iter().zip(&out.rays) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.bearing, b.bearing);
        }
    }

    #[test]
    fn confusion_rate_matches_probability() {
        let obs = Observation {
            rays: object_rays(10_000)
                .rays
                .into_iter()
                .map(|mut r| {
                    r.kind = HitKind::Object;
                    r.category = Some(laptop());
                    r
                })
                .collect(),
            ..object_rays(0)
        };
        let noise = NoiseParams {
            p_confuse: 0.5,
            ..NoiseParams::NONE
        };
        let out = corrupt_segmentation(&obs, &noise, &mut ChaCha8Rng::seed_from_u64(3));
        let confused = out.rays.iter().filter(|r| r.category != Some(laptop())).count();
        let frac = confused as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn depth_noise_stays_in_range() {
        let obs = object_rays(500);
        let noise = NoiseParams {
            depth_sigma: 3.0,
            ..NoiseParams::NONE
        };
        let out = corrupt_segmentation(&obs, &noise, &mut ChaCha8Rng::seed_from_u64(4));
        for r in &out.rays {
            let d = r.depth.unwrap();
            assert!(d > 0.0 && d <= 5.0);
        }
    }
}
