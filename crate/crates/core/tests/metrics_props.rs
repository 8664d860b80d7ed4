use proptest::prelude::*;

use semnav::eval::episode::{Bandwidth, EpisodeResult};
use semnav::eval::metrics::{compute_ei, compute_spl, compute_sr};

fn result(i: usize, success: bool, d: usize, l: u32) -> EpisodeResult {
    EpisodeResult {
        task_id: format!("task{i}"),
        scene_id: "s".into(),
        variant: "greedy".into(),
        n: 1,
        m: 1,
        seed: 0,
        success,
        per_agent_steps: vec![d],
        d,
        l: Some(l),
        found_events: vec![],
        bandwidth: Bandwidth::default(),
        subgoal_returns: vec![],
    }
}

fn results() -> impl Strategy<Value = Vec<EpisodeResult>> {
    prop::collection::vec((any::<bool>(), 0usize..600, 0u32..400), 1..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (s, d, l))| result(i, s, d, l))
            .collect()
    })
}

proptest! {
    #[test]
    fn spl_is_bounded_by_sr(rs in results()) {
        let spl = compute_spl(&rs).unwrap();
        let sr = compute_sr(&rs).unwrap();
        prop_assert!(spl >= 0.0);
        prop_assert!(spl <= sr + 1e-12);
    }

    #[test]
    fn identical_runs_have_zero_improvement(rs in results()) {
        match compute_ei(&rs, &rs).unwrap() {
            Some(ei) => prop_assert_eq!(ei, 0.0),
            None => prop_assert!(rs.iter().all(|r| !r.success || r.d == 0)),
        }
    }

    #[test]
    fn faster_teams_improve(rs in results(), cut in 1usize..50) {
        let single: Vec<EpisodeResult> = rs.iter().map(|r| EpisodeResult { success: true, d: r.d + cut, ..r.clone() }).collect();
        let multi: Vec<EpisodeResult> = rs.iter().map(|r| EpisodeResult { success: true, ..r.clone() }).collect();
        let ei = compute_ei(&multi, &single).unwrap().unwrap();
        prop_assert!(ei > 0.0 && ei <= 1.0);
    }
}
