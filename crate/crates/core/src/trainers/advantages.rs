use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::world::QueryId;

const STD_FLOOR: f64 = 1e-8;

/// Group-standardized advantages `(r − mean) / max(std, 1e-8)` with the
/// population standard deviation. Constant groups map to exact zeros.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::arg(alloc::format!(
            "group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(alloc::vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = sqrt(var).max(STD_FLOOR);
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Tabular per-query reward baseline for the PPO variant: an exponential
/// moving average of observed group-mean rewards, initialised at zero.
#[derive(Debug, Clone, Default)]
pub struct ValueBaseline {
    decay: f64,
    values: BTreeMap<QueryId, f64>,
}

impl ValueBaseline {
    pub fn new(decay: f64) -> Self {
        ValueBaseline { decay, values: BTreeMap::new() }
    }

    pub fn value(&self, q: QueryId) -> f64 {
        self.values.get(&q).copied().unwrap_or(0.0)
    }

    /// `r_i − V(q)` using the value before this group is observed.
    pub fn advantages(&self, q: QueryId, rewards: &[f64]) -> Vec<f64> {
        let v = self.value(q);
        rewards.iter().map(|r| r - v).collect()
    }

    pub fn observe(&mut self, q: QueryId, rewards: &[f64]) {
        if rewards.is_empty() {
            return;
        }
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let v = self.values.entry(q).or_insert(0.0);
        *v = self.decay * *v + (1.0 - self.decay) * mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_success_group() {
        let a = grpo_advantages(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(close(&a, &[2.0, -0.5, -0.5, -0.5, -0.5], 1e-12));
    }

    #[test]
    fn two_success_group() {
        // mean 0.4, population std sqrt(0.24)
        let s = sqrt(0.24);
        let expect = [0.6 / s, 0.6 / s, -0.4 / s, -0.4 / s, -0.4 / s];
        let a = grpo_advantages(&[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(close(&a, &expect, 1e-12));
        assert!((a[0] - 1.2247).abs() < 1e-4 && (a[2] + 0.8165).abs() < 1e-4);
    }

    #[test]
    fn constant_groups_are_exact_zero() {
        assert_eq!(grpo_advantages(&[1.0; 5]).unwrap(), [0.0; 5]);
        assert_eq!(grpo_advantages(&[0.0; 5]).unwrap(), [0.0; 5]);
    }

    #[test]
    fn short_group_rejected() {
        assert!(grpo_advantages(&[1.0]).is_err());
        assert!(grpo_advantages(&[]).is_err());
    }

    #[test]
    fn baseline_starts_at_zero_and_tracks_constant_reward() {
        let mut b = ValueBaseline::new(0.9);
        let q = QueryId(3);
        assert_eq!(b.advantages(q, &[1.0, 0.0]), [1.0, 0.0]);
        for _ in 0..200 {
            b.observe(q, &[1.0; 5]);
        }
        assert!((b.value(q) - 1.0).abs() < 1e-8);
        assert!(b.advantages(q, &[1.0; 5]).iter().all(|a| a.abs() < 1e-8));
    }
}
