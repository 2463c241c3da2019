use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Phase {
    /// Update step without an accuracy evaluation.
    Train,
    /// Row carries train/test accuracy.
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DynamicsRow {
    pub step: usize,
    pub phase: Phase,
    pub mean_reward: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mean_kl: Option<f64>,
    pub clip_frac: Option<f64>,
}

/// Per-step training trace. Steps are strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DynamicsLog {
    pub rows: Vec<DynamicsRow>,
}

impl DynamicsLog {
    pub(crate) fn push(&mut self, row: DynamicsRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.step < row.step));
        self.rows.push(row);
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.mean_reward).collect()
    }

    /// Mean per-step reward over the first and last tenth of reward rows.
    pub fn reward_deciles(&self) -> Option<(f64, f64)> {
        let r = self.rewards();
        if r.is_empty() {
            return None;
        }
        let n = (r.len() / 10).max(1);
        let first = r[..n].iter().sum::<f64>() / n as f64;
        let last = r[r.len() - n..].iter().sum::<f64>() / n as f64;
        Some((first, last))
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.test_acc)
    }

    pub fn final_train_acc(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.train_acc)
    }

    pub fn steps_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].step < w[1].step)
    }
}
