use proptest::prelude::*;

use semnav::comms::Codec;
use semnav::geometry::{Dims, Heading};
use semnav::perception::{observe, Pose, SensorParams};
use semnav::policy::planner::{apply, plan_low_level};
use semnav::priors::{derive_prior_graph, prior_graph_from_json, prior_graph_to_json};
use semnav::scene::{generate_scene, scene_from_json, scene_to_json, GenParams};
use semnav::semantic_map::{merge_maps, project_observation, SemanticMap};

fn small() -> GenParams {
    GenParams {
        dims: Dims::new(32, 28),
        rooms: 1,
        min_room_side: 12,
        door_width: 4,
        ..GenParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scene_json_round_trips(seed in any::<u64>()) {
        let Ok(scene) = generate_scene(seed, &small()) else { return Ok(()) };
        let text = scene_to_json(&scene);
        let back = scene_from_json(&text).unwrap();
        prop_assert_eq!(&back, &scene);
        prop_assert_eq!(scene_to_json(&back), text);
    }

    #[test]
    fn observed_maps_round_trip_and_merge(seed in any::<u64>(), turns in 1usize..4) {
        let Ok(scene) = generate_scene(seed, &small()) else { return Ok(()) };
        let sensor = SensorParams::default();
        let spawn = scene.spawn_cells()[seed as usize % scene.spawn_cells().len()];
        let mut a = SemanticMap::new(scene.dims());
        let mut b = SemanticMap::new(scene.dims());
        for (i, &h) in Heading::ALL.iter().enumerate().take(turns) {
            let obs = observe(&scene, &Pose::new(spawn, h), &sensor).unwrap();
            if i % 2 == 0 { a = project_observation(&a, &obs).unwrap() } else { b = project_observation(&b, &obs).unwrap() }
        }
        prop_assert_eq!(SemanticMap::from_bytes(&a.to_bytes()).unwrap(), a.clone());
        prop_assert_eq!(merge_maps(&a, &b).unwrap(), merge_maps(&b, &a).unwrap());
        let codec = Codec::quantized(scene.dims(), 64).unwrap();
        prop_assert_eq!(codec.encode(&a).unwrap().len(), 64);
    }

    #[test]
    fn planner_never_enters_obstacles(seed in any::<u64>()) {
        let Ok(scene) = generate_scene(seed, &small()) else { return Ok(()) };
        let dims = scene.dims();
        let blocked: Vec<bool> = dims.cells().map(|c| !scene.is_free(c)).collect();
        let mut map = SemanticMap::new(dims);
        for c in dims.cells() {
            map.add(c, semnav::semantic_map::EXPLORED, 1);
            if blocked[dims.index(c)] {
                map.add(c, semnav::semantic_map::OCCUPIED, 1);
            }
        }
        let spawns = scene.spawn_cells();
        let mut pose = Pose::new(spawns[0], Heading::North);
        let goal = spawns[spawns.len() - 1];
        for _ in 0..400 {
            match plan_low_level(&map, &pose, goal).unwrap() {
                Some(a) => pose = apply(dims, &blocked, pose, a),
                None => break,
            }
            prop_assert!(scene.is_free(pose.cell));
        }
    }
}

#[test]
fn prior_graph_json_round_trips() {
    let scenes: Vec<_> = (0..6).filter_map(|s| generate_scene(s, &small()).ok()).collect();
    let g = derive_prior_graph(&scenes, 0.0).unwrap();
    assert!(!g.edges().is_empty());
    let back = prior_graph_from_json(&prior_graph_to_json(&g)).unwrap();
    assert_eq!(back, g);
}

#[test]
fn unknown_category_in_scene_file_reports_its_position() {
    let scene = generate_scene(1, &small()).unwrap();
    let name = scene.categories()[0].name();
    let text = scene_to_json(&scene).replace(&format!("\"{name}\""), "\"Toaster\"");
    let err = scene_from_json(&text).unwrap_err().to_string();
    assert!(err.contains("Toaster"), "{err}");
}
