//! Success rate, success weighted by path length, and efficiency improvement.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::episode::EpisodeResult;

pub fn compute_sr(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// `R * L / max(D, L)` for one result.
pub fn spl_term(r: &EpisodeResult) -> Result<f64> {
    if !r.success {
        return Ok(0.0);
    }
    let l = r.l.ok_or_else(|| Error::MissingOracle(r.task_id.clone()))? as f64;
    let d = r.d as f64;
    Ok(if l == 0.0 { 1.0 } else { l / d.max(l) })
}

pub fn compute_spl(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for r in results {
        sum += spl_term(r)?;
    }
    Ok(sum / results.len() as f64)
}

/// `(E - D) / E` when both runs succeeded, else `None`.
pub fn ei_term(multi: &EpisodeResult, single: &EpisodeResult) -> Option<f64> {
    (multi.success && single.success && single.d > 0).then(|| (single.d as f64 - multi.d as f64) / single.d as f64)
}

/// Mean improvement over tasks where both the multi-agent and the paired
/// single-agent run succeeded; `None` when there is no such task. Pairs are
/// matched on task id and seed.
pub fn compute_ei(multi: &[EpisodeResult], single: &[EpisodeResult]) -> Result<Option<f64>> {
    let singles: BTreeMap<(&str, u64), &EpisodeResult> =
        single.iter().map(|r| ((r.task_id.as_str(), r.seed), r)).collect();
    let mut sum = 0.0;
    let mut n_suc = 0usize;
    for r in multi {
        let s = singles
            .get(&(r.task_id.as_str(), r.seed))
            .ok_or_else(|| Error::UnpairedTask(r.task_id.clone()))?;
        if let Some(t) = ei_term(r, s) {
            sum += t;
            n_suc += 1;
        }
    }
    Ok((n_suc > 0).then(|| sum / n_suc as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::episode::Bandwidth;

    fn res(task: &str, success: bool, d: usize, l: Option<u32>) -> EpisodeResult {
        EpisodeResult {
            task_id: task.into(),
            scene_id: "s".into(),
            variant: "greedy".into(),
            n: 1,
            m: 1,
            seed: 0,
            success,
            per_agent_steps: vec![d],
            d,
            l,
            found_events: vec![],
            bandwidth: Bandwidth::default(),
            subgoal_returns: vec![0.0],
        }
    }

    #[test]
    fn sr_cases() {
        let all: Vec<_> = (0..4).map(|i| res(&i.to_string(), true, 5, Some(5))).collect();
        assert_eq!(compute_sr(&all).unwrap(), 1.0);
        let mut some = all.clone();
        some[2].success = false;
        assert_eq!(compute_sr(&some).unwrap(), 0.75);
        assert!(matches!(compute_sr(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn spl_cases() {
        assert_eq!(compute_spl(&[res("a", true, 20, Some(10))]).unwrap(), 0.5);
        assert_eq!(compute_spl(&[res("a", false, 20, Some(10))]).unwrap(), 0.0);
        assert_eq!(compute_spl(&[res("a", true, 10, Some(10))]).unwrap(), 1.0);
        assert!(matches!(compute_spl(&[res("a", true, 10, None)]), Err(Error::MissingOracle(_))));
    }

    #[test]
    fn ei_cases() {
        let single = [res("a", true, 100, None), res("b", true, 50, None)];
        let multi = [res("a", true, 60, None), res("b", false, 10, None)];
        assert_eq!(compute_ei(&multi, &single).unwrap(), Some(0.4));
        assert_eq!(compute_ei(&multi[1..], &single).unwrap(), None);
        assert!(matches!(compute_ei(&[res("z", true, 1, None)], &single), Err(Error::UnpairedTask(_))));
    }
}
