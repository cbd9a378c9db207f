use crate::io::MetricsRow;

/// Geometric mean of the positive entries of `values`, plus the number of
/// entries that had to be dropped because they were not positive.
/// Returns NaN when nothing positive remains.
pub fn aggregate_geomean(values: &[f64]) -> (f64, usize) {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let dropped = values.len() - positive.len();
    if dropped > 0 {
        log::warn!("geometric mean: excluded {dropped} non-positive value(s) of {}", values.len());
    }
    if positive.is_empty() {
        return (f64::NAN, dropped);
    }
    let mean_log = positive.iter().map(|v| v.ln()).sum::<f64>() / positive.len() as f64;
    (mean_log.exp(), dropped)
}

/// Last logged step at which the training curve was below `threshold` of
/// the teacher reference score (baseline-shifted). `Some(0)` when the
/// curve never dips below it, `None` when the run ends below it.
pub fn crossing_step(rows: &[MetricsRow], teacher_score: f64, baseline: f64, threshold: f64) -> Option<u64> {
    let below = |r: &MetricsRow| {
        let f = (r.mean_episodic_return - baseline) / (teacher_score - baseline);
        f.is_nan() || f < threshold
    };
    match rows.iter().rposition(below) {
        None => Some(0),
        Some(i) if i + 1 == rows.len() => None,
        Some(i) => Some(rows[i].env_steps),
    }
}

/// Orders crossing steps with "never crossed" after every finite step.
pub fn crossing_key(c: Option<u64>) -> u64 {
    c.unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(returns: &[f64]) -> Vec<MetricsRow> {
        returns
            .iter()
            .enumerate()
            .map(|(i, &r)| MetricsRow {
                run_id: "x".into(),
                env_steps: (i as u64 + 1) * 100,
                mean_episodic_return: r,
                episodes_completed: 0,
                loss_ppo: 0.0,
                loss_value: 0.0,
                loss_kl: 0.0,
                loss_entropy: 0.0,
                wall_time_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn geomean_examples() {
        assert_eq!(aggregate_geomean(&[1.0, 1.0, 1.0]), (1.0, 0));
        assert!((aggregate_geomean(&[0.5, 2.0]).0 - 1.0).abs() < 1e-12);
        let (g, dropped) = aggregate_geomean(&[0.0, 4.0, -1.0, 1.0]);
        assert_eq!(dropped, 2);
        assert!((g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_is_last_step_below_threshold() {
        let r = rows(&[f64::NAN, 0.2, 0.95, 0.85, 0.93, 0.99]);
        assert_eq!(crossing_step(&r, 1.0, 0.0, 0.9), Some(400));
        assert_eq!(crossing_step(&rows(&[0.95, 1.0]), 1.0, 0.0, 0.9), Some(0));
        assert_eq!(crossing_step(&rows(&[0.95, 0.5]), 1.0, 0.0, 0.9), None);
    }

    #[test]
    fn crossing_respects_baseline() {
        // baseline -10, teacher -1: -2 is 8/9 of the way there
        let r = rows(&[-2.0, -1.5]);
        assert_eq!(crossing_step(&r, -1.0, -10.0, 0.9), Some(100));
    }
}
