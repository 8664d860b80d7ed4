//! Sub-goal reward: progress of the new sub-goal toward the nearest target
//! cell and the nearest related key-object cell.

use crate::geometry::Cell;
use crate::semantic_map::DistanceField;

/// `alpha * (to(prev) - to(new)) + beta * (ko(prev) - ko(new))`, distances in
/// cells. A term is zero when its field is absent (no goal cells) or either
/// distance is unreachable.
pub fn subgoal_reward(
    sg_new: Cell,
    sg_prev: Cell,
    dist_to_targets: Option<&DistanceField>,
    dist_to_keys: Option<&DistanceField>,
    alpha: f64,
    beta: f64,
) -> f64 {
    let term = |field: Option<&DistanceField>| -> f64 {
        field
            .and_then(|f| Some(f.finite(sg_prev)? as f64 - f.finite(sg_new)? as f64))
            .unwrap_or(0.0)
    };
    alpha * term(dist_to_targets) + beta * term(dist_to_keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dims;
    use crate::semantic_map::bfs_field;

    fn line_field() -> DistanceField {
        let dims = Dims::new(20, 1);
        bfs_field(dims, &[Cell::new(0, 0)], &vec![false; 20])
    }

    #[test]
    fn substitution_examples() {
        let f = line_field();
        let zero = bfs_field(Dims::new(20, 1), &[Cell::new(5, 0)], &vec![false; 20]);
        // to: 7 -> 5 gives 2; ko measured from cell 5 on both sides of it: 2 -> 8 gives 0.
        let r = subgoal_reward(Cell::new(5, 0), Cell::new(7, 0), Some(&f), None, 0.7, 0.3);
        assert_eq!(r, 1.4);
        let r = subgoal_reward(Cell::new(8, 0), Cell::new(2, 0), Some(&f), Some(&zero), 0.7, 0.3);
        assert_eq!(r, 0.7 * -6.0 + 0.3 * 0.0);
        let r = subgoal_reward(Cell::new(3, 0), Cell::new(3, 0), Some(&f), Some(&zero), 0.7, 0.3);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn unreachable_terms_vanish() {
        let dims = Dims::new(5, 1);
        let mut blocked = vec![false; 5];
        blocked[2] = true;
        let f = bfs_field(dims, &[Cell::new(0, 0)], &blocked);
        assert_eq!(subgoal_reward(Cell::new(4, 0), Cell::new(1, 0), Some(&f), None, 0.7, 0.3), 0.0);
    }
}
