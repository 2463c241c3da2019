use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::policy::{Features, RecallPolicy, FEATURE_DIM};
use crate::world::QueryId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Optimizer {
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "sgd"))]
    Sgd,
    #[cfg_attr(feature = "serde", serde(rename = "adaptive-moments"))]
    AdaptiveMoments,
}

/// Ascent direction for one update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient {
    pub w: Features,
    pub rows: Vec<(QueryId, Vec<f64>)>,
}

impl Gradient {
    pub fn add_w(&mut self, scale: f64, f: &Features) {
        for (g, x) in self.w.iter_mut().zip(f) {
            *g += scale * x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
            && self.rows.iter().all(|(_, r)| r.iter().all(|x| x.is_finite()))
    }

    pub fn w_norm(&self) -> f64 {
        sqrt(self.w.iter().map(|x| x * x).sum())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Bias-corrected Adam direction for `g`, written back into `g`.
    fn transform(&mut self, g: &mut [f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(BETA2, self.t as f64);
        for ((x, m), v) in g.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * *x;
            *v = BETA2 * *v + (1.0 - BETA2) * *x * *x;
            *x = (*m / c1) / (sqrt(*v / c2) + EPS);
        }
    }
}

/// Applies ascent steps; owns optimizer state. Adam state for delta rows is
/// lazy: a row's moments advance only when the row receives a gradient.
#[derive(Debug, Clone)]
pub struct ParamUpdater {
    kind: Optimizer,
    delta_kind: Optimizer,
    lr: f64,
    delta_lr: f64,
    w_moments: Moments,
    row_moments: BTreeMap<QueryId, Moments>,
}

impl ParamUpdater {
    pub fn new(cfg: &TrainConfig) -> Self {
        ParamUpdater {
            kind: cfg.optimizer,
            delta_kind: cfg.delta_optimizer,
            lr: cfg.learning_rate,
            delta_lr: cfg.delta_learning_rate,
            w_moments: Moments::new(FEATURE_DIM),
            row_moments: BTreeMap::new(),
        }
    }

    pub fn ascend(&mut self, policy: &mut RecallPolicy, grad: &Gradient, step: usize) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::TrainingAborted {
                step,
                reason: alloc::format!("non-finite gradient (w = {:?})", grad.w),
            });
        }
        let mut gw = grad.w;
        if self.kind == Optimizer::AdaptiveMoments {
            self.w_moments.transform(&mut gw);
        }
        for (w, g) in policy.weights_mut().iter_mut().zip(gw) {
            *w += self.lr * g;
        }
        if !policy.delta_enabled() || self.delta_lr == 0.0 {
            return Ok(());
        }
        for (q, row) in &grad.rows {
            let mut g = row.clone();
            if self.delta_kind == Optimizer::AdaptiveMoments {
                self.row_moments
                    .entry(*q)
                    .or_insert_with(|| Moments::new(g.len()))
                    .transform(&mut g);
            }
            if let Some(delta) = policy.delta_row_mut(*q) {
                for (d, x) in delta.iter_mut().zip(&g) {
                    *d += self.delta_lr * x;
                }
            }
        }
        Ok(())
    }
}
