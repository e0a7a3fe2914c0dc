//! Temperature ladders for the annealed optimizer.

use crate::data::{ScheduleKind, ScheduleSpec};
use crate::error::InferenceError;

/// Builds the descending temperature ladder, always ending exactly at 1.
///
/// With a single level the ladder is just `[1.0]` (no annealing). Otherwise
/// `t_max` must lie strictly inside `(1, 2)` so every heated exponent stays a
/// valid density.
pub fn make_schedule(spec: &ScheduleSpec) -> Result<Vec<f64>, InferenceError> {
    if spec.levels == 0 {
        return Err(InferenceError::BadSchedule(
            "schedule needs at least one level".to_string(),
        ));
    }
    if spec.levels == 1 {
        return Ok(vec![1.0]);
    }
    if !(spec.t_max > 1.0 && spec.t_max < 2.0) {
        return Err(InferenceError::BadSchedule(format!(
            "t_max must lie in (1, 2), got {}",
            spec.t_max
        )));
    }
    let levels = spec.levels;
    let denom = (levels - 1) as f64;
    let mut ladder: Vec<f64> = (0..levels)
        .map(|k| {
            let frac = k as f64 / denom;
            match spec.kind {
                ScheduleKind::Geometric => spec.t_max.powf(1.0 - frac),
                ScheduleKind::Harmonic => {
                    let inv = (1.0 - frac) / spec.t_max + frac;
                    1.0 / inv
                }
                ScheduleKind::Linear => spec.t_max + frac * (1.0 - spec.t_max),
            }
        })
        .collect();
    *ladder.last_mut().expect("levels >= 1") = 1.0;
    Ok(ladder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(kind: ScheduleKind, t_max: f64, levels: usize) -> ScheduleSpec {
        ScheduleSpec {
            kind,
            t_max,
            levels,
        }
    }

    #[test]
    fn geometric_three_levels_matches_closed_form() {
        let ladder = make_schedule(&spec(ScheduleKind::Geometric, 1.9, 3)).unwrap();
        assert_eq!(ladder.len(), 3);
        assert_eq!(ladder[0], 1.9);
        assert_relative_eq!(ladder[1], 1.9f64.powf(0.5), max_relative = 1e-15);
        assert_eq!(ladder[2], 1.0);
    }

    #[test]
    fn harmonic_spaces_inverse_temperatures_evenly() {
        let ladder = make_schedule(&spec(ScheduleKind::Harmonic, 1.8, 5)).unwrap();
        let invs: Vec<f64> = ladder.iter().map(|t| 1.0 / t).collect();
        let step = invs[1] - invs[0];
        for w in invs.windows(2) {
            assert_relative_eq!(w[1] - w[0], step, max_relative = 1e-12);
        }
        assert_relative_eq!(invs[0], 1.0 / 1.8, max_relative = 1e-15);
        assert_eq!(ladder[4], 1.0);
    }

    #[test]
    fn linear_interpolates_temperature() {
        let ladder = make_schedule(&spec(ScheduleKind::Linear, 1.5, 6)).unwrap();
        for (k, t) in ladder.iter().enumerate() {
            let expect = 1.5 + (k as f64 / 5.0) * (1.0 - 1.5);
            assert_relative_eq!(t, &expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_level_is_vanilla() {
        // t_max is irrelevant when there is nothing to anneal.
        let ladder = make_schedule(&spec(ScheduleKind::Geometric, 5.0, 1)).unwrap();
        assert_eq!(ladder, vec![1.0]);
    }

    #[test]
    fn ladders_are_strictly_decreasing_to_one() {
        for kind in [
            ScheduleKind::Geometric,
            ScheduleKind::Harmonic,
            ScheduleKind::Linear,
        ] {
            let ladder = make_schedule(&spec(kind, 1.99, 17)).unwrap();
            assert_eq!(ladder.len(), 17);
            for w in ladder.windows(2) {
                assert!(w[1] < w[0], "{kind:?} not decreasing: {w:?}");
            }
            assert_eq!(*ladder.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn out_of_range_t_max_is_rejected() {
        assert!(make_schedule(&spec(ScheduleKind::Geometric, 2.0, 3)).is_err());
        assert!(make_schedule(&spec(ScheduleKind::Geometric, 1.0, 3)).is_err());
        assert!(make_schedule(&spec(ScheduleKind::Geometric, 0.5, 3)).is_err());
        assert!(make_schedule(&spec(ScheduleKind::Geometric, 1.5, 0)).is_err());
    }
}
