use crate::trainer::MetricsRow;

pub const DEFAULT_RATIO: f64 = 5.0;

/// First epoch with `|q_target_mean| > ratio · max(|eval_return|, 1)`.
pub fn detect_q_explosion(rows: &[MetricsRow], ratio: f64) -> Option<usize> {
    rows.iter()
        .find(|r| r.q_target_mean.abs() > ratio * r.eval_return.abs().max(1.0) || !r.q_target_mean.is_finite())
        .map(|r| r.epoch)
}

/// Largest `|q_target_mean|` in a run.
pub fn max_abs_q(rows: &[MetricsRow]) -> f64 {
    rows.iter().map(|r| r.q_target_mean.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, q: f64, ret: f64) -> MetricsRow {
        MetricsRow {
            epoch,
            eval_return: ret,
            q_target_mean: q,
            weight_mean: 1.0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            mmd_mean: 0.0,
            target_var_mean: 0.0,
        }
    }

    #[test]
    fn flags_and_thresholds() {
        let healthy: Vec<_> = (0..5).map(|e| row(e, 20.0, 30.0)).collect();
        assert_eq!(detect_q_explosion(&healthy, DEFAULT_RATIO), None);
        let rows = vec![row(0, 20.0, 10.0), row(1, 1000.0, 10.0)];
        assert_eq!(detect_q_explosion(&rows, DEFAULT_RATIO), Some(1));
        assert_eq!(detect_q_explosion(&rows, 200.0), None);
        assert_eq!(max_abs_q(&rows), 1000.0);
    }
}
