//! The trainable access transform over frozen knowledge and popularity.
//!
//! `logit(q, v) = w · φ(K[q, v], p[v]) + delta[q, v]` with
//! `φ(k, p) = [k, p, k·p, (k−t1)+, (k−t2)+, (k−t3)+, 1]`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{argmax, exp, ln, log_sum_exp, softmax_into};
use crate::world::{FactUniverse, FormId, QueryId};

pub const FEATURE_DIM: usize = 7;

pub type Features = [f64; FEATURE_DIM];

/// Fixed feature map. `knots` are the universe's hinge thresholds.
#[inline]
pub fn features(k: f64, p: f64, knots: &[f64; 3]) -> Features {
    [
        k,
        p,
        k * p,
        (k - knots[0]).max(0.0),
        (k - knots[1]).max(0.0),
        (k - knots[2]).max(0.0),
        1.0,
    ]
}

/// Gradient of a scalar with respect to the policy parameters, restricted to
/// one query's delta row.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGradient {
    pub w: Features,
    /// `None` when the query carries no delta row.
    pub delta: Option<Vec<f64>>,
}

/// Per-query quantities shared by every gradient and sampling call.
#[derive(Debug, Clone)]
pub struct QueryView {
    pub query: QueryId,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// `E_{v~π}[φ(v)]`.
    pub mean_features: Features,
}

impl QueryView {
    pub fn log_prob(&self, form: FormId) -> f64 {
        let lse = log_sum_exp(&self.logits);
        self.logits[form.index()] - lse
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallPolicy {
    universe: Arc<FactUniverse>,
    w: Features,
    delta: Vec<Option<Vec<f64>>>,
    delta_enabled: bool,
}

impl RecallPolicy {
    /// Base policy: `w0 = [1, λ0, 0, 0, 0, 0, 0]`, no delta rows.
    pub fn base(universe: Arc<FactUniverse>) -> Self {
        let lambda0 = universe.config.suppression_strength;
        let n = universe.n_facts();
        RecallPolicy {
            universe,
            w: [1.0, lambda0, 0.0, 0.0, 0.0, 0.0, 0.0],
            delta: vec![None; n],
            delta_enabled: true,
        }
    }

    pub fn with_weights(universe: Arc<FactUniverse>, w: Features) -> Self {
        let mut p = Self::base(universe);
        p.w = w;
        p
    }

    /// Rebuilds a policy from stored parameters. Triplets are
    /// `(query, form, value)`; every query they mention gets a delta row.
    pub fn from_parts(
        universe: Arc<FactUniverse>,
        w: Features,
        delta_rows: &[QueryId],
        triplets: &[(QueryId, FormId, f64)],
        delta_enabled: bool,
    ) -> Result<Self> {
        let mut p = Self::with_weights(universe, w);
        p.delta_enabled = delta_enabled;
        p.ensure_delta_rows(delta_rows)?;
        for &(q, v, x) in triplets {
            if v.index() >= p.universe.vocab_size() {
                return Err(Error::arg(alloc::format!("delta entry for unknown form {}", v.0)));
            }
            p.ensure_delta_rows(&[q])?;
            if let Some(Some(row)) = p.delta.get_mut(q.index()) {
                row[v.index()] = x;
            }
        }
        Ok(p)
    }

    pub fn universe(&self) -> &Arc<FactUniverse> {
        &self.universe
    }

    pub fn weights(&self) -> &Features {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut Features {
        &mut self.w
    }

    pub fn delta_enabled(&self) -> bool {
        self.delta_enabled
    }

    pub fn set_delta_enabled(&mut self, enabled: bool) {
        self.delta_enabled = enabled;
    }

    /// Allocates zero delta rows for `queries` (no-op for existing rows or
    /// when delta is disabled).
    pub fn ensure_delta_rows(&mut self, queries: &[QueryId]) -> Result<()> {
        if !self.delta_enabled {
            return Ok(());
        }
        let v = self.universe.vocab_size();
        for &q in queries {
            let slot = self
                .delta
                .get_mut(q.index())
                .ok_or_else(|| Error::arg(alloc::format!("unknown query {}", q.0)))?;
            if slot.is_none() {
                *slot = Some(vec![0.0; v]);
            }
        }
        Ok(())
    }

    pub fn delta_row(&self, q: QueryId) -> Option<&[f64]> {
        if !self.delta_enabled {
            return None;
        }
        self.delta.get(q.index()).and_then(|r| r.as_deref())
    }

    pub fn delta_row_mut(&mut self, q: QueryId) -> Option<&mut [f64]> {
        if !self.delta_enabled {
            return None;
        }
        self.delta.get_mut(q.index()).and_then(|r| r.as_deref_mut())
    }

    /// Queries that carry a delta row.
    pub fn delta_queries(&self) -> Vec<QueryId> {
        self.delta
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .map(|(i, _)| QueryId(i as u32))
            .collect()
    }

    /// Nonzero delta entries as `(query, form, value)`.
    pub fn delta_triplets(&self) -> Vec<(QueryId, FormId, f64)> {
        let mut out = Vec::new();
        for (qi, row) in self.delta.iter().enumerate() {
            if let Some(row) = row {
                for (vi, &x) in row.iter().enumerate() {
                    if x != 0.0 {
                        out.push((QueryId(qi as u32), FormId(vi as u32), x));
                    }
                }
            }
        }
        out
    }

    fn check_query(&self, q: QueryId) -> Result<()> {
        if q.index() < self.universe.n_facts() {
            Ok(())
        } else {
            Err(Error::arg(alloc::format!("unknown query {}", q.0)))
        }
    }

    pub fn form_features(&self, q: QueryId, form: FormId) -> Features {
        let k = self.universe.knowledge_row(q)[form.index()];
        features(k, self.universe.popularity[form.index()], &self.universe.knots)
    }

    pub fn logits_into(&self, q: QueryId, out: &mut Vec<f64>) -> Result<()> {
        self.check_query(q)?;
        let u = &*self.universe;
        let k_row = u.knowledge_row(q);
        let [wk, wp, wkp, h1, h2, h3, bias] = self.w;
        let [t1, t2, t3] = u.knots;
        out.clear();
        out.extend(k_row.iter().zip(&u.popularity).map(|(&k, &p)| {
            wk * k
                + wp * p
                + wkp * k * p
                + h1 * (k - t1).max(0.0)
                + h2 * (k - t2).max(0.0)
                + h3 * (k - t3).max(0.0)
                + bias
        }));
        if let Some(row) = self.delta_row(q) {
            for (o, d) in out.iter_mut().zip(row) {
                *o += d;
            }
        }
        Ok(())
    }

    pub fn logits(&self, q: QueryId) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.universe.vocab_size());
        self.logits_into(q, &mut out)?;
        Ok(out)
    }

    pub fn probs(&self, q: QueryId, temperature: f64) -> Result<Vec<f64>> {
        check_temperature(temperature)?;
        let logits = self.logits(q)?;
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, temperature, &mut probs);
        Ok(probs)
    }

    /// Logits, probabilities at temperature 1 and the feature expectation.
    pub fn view(&self, q: QueryId) -> Result<QueryView> {
        let logits = self.logits(q)?;
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, 1.0, &mut probs);
        let u = &*self.universe;
        let k_row = u.knowledge_row(q);
        let mut mean_features = [0.0; FEATURE_DIM];
        for ((&pi, &k), &p) in probs.iter().zip(k_row).zip(&u.popularity) {
            if pi == 0.0 {
                continue;
            }
            let f = features(k, p, &u.knots);
            for (m, x) in mean_features.iter_mut().zip(f) {
                *m += pi * x;
            }
        }
        Ok(QueryView { query: q, logits, probs, mean_features })
    }

    pub fn sample<R: Rng + ?Sized>(&self, q: QueryId, temperature: f64, rng: &mut R) -> Result<FormId> {
        let probs = self.probs(q, temperature)?;
        Ok(sample_index(&probs, rng))
    }

    /// Argmax of the logits, lowest form id on ties.
    pub fn greedy(&self, q: QueryId) -> Result<FormId> {
        let logits = self.logits(q)?;
        Ok(FormId(argmax(&logits) as u32))
    }

    pub fn log_prob(&self, q: QueryId, form: FormId) -> Result<f64> {
        let logits = self.logits(q)?;
        let x = logits
            .get(form.index())
            .ok_or_else(|| Error::arg(alloc::format!("unknown form {}", form.0)))?;
        Ok(x - log_sum_exp(&logits))
    }

    /// `∂ log π(form | q)`: `φ(form) − E_π[φ]` for `w`, `1{v = form} − π(v)`
    /// for the query's delta row.
    pub fn grad_log_prob(&self, q: QueryId, form: FormId) -> Result<QueryGradient> {
        if form.index() >= self.universe.vocab_size() {
            return Err(Error::arg(alloc::format!("unknown form {}", form.0)));
        }
        let view = self.view(q)?;
        Ok(self.grad_log_prob_from_view(&view, form))
    }

    pub fn grad_log_prob_from_view(&self, view: &QueryView, form: FormId) -> QueryGradient {
        let f = self.form_features(view.query, form);
        let mut w = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            w[i] = f[i] - view.mean_features[i];
        }
        let delta = self.delta_row(view.query).map(|_| {
            let mut row: Vec<f64> = view.probs.iter().map(|p| -p).collect();
            row[form.index()] += 1.0;
            row
        });
        QueryGradient { w, delta }
    }

    /// Exact `KL(π(·|q) ‖ π_ref(·|q))`.
    pub fn kl_to_reference(&self, reference: &ReferencePolicy, q: QueryId) -> Result<f64> {
        let a = self.logits(q)?;
        let b = reference.0.logits(q)?;
        Ok(kl_from_logits(&a, &b))
    }

    pub fn clone_as_reference(&self) -> ReferencePolicy {
        ReferencePolicy(self.clone())
    }
}

/// Immutable snapshot used as the KL and DPO anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy(RecallPolicy);

impl ReferencePolicy {
    pub fn policy(&self) -> &RecallPolicy {
        &self.0
    }

    pub fn logits(&self, q: QueryId) -> Result<Vec<f64>> {
        self.0.logits(q)
    }

    pub fn log_prob(&self, q: QueryId, form: FormId) -> Result<f64> {
        self.0.log_prob(q, form)
    }

    /// Thaws the snapshot into a trainable policy.
    pub fn to_policy(&self) -> RecallPolicy {
        self.0.clone()
    }
}

pub fn kl_from_logits(a: &[f64], b: &[f64]) -> f64 {
    let la = log_sum_exp(a);
    let lb = log_sum_exp(b);
    let kl: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let lp = x - la;
            let p = exp(lp);
            if p == 0.0 {
                0.0
            } else {
                p * (lp - (y - lb))
            }
        })
        .sum();
    kl.max(0.0)
}

/// KL between explicit probability vectors.
pub fn kl_from_probs(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (ln(a) - ln(b)))
        .sum()
}

pub(crate) fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(alloc::format!("temperature must be positive, got {t}")))
    }
}

/// Inverse-CDF draw from a normalized probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> FormId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return FormId(i as u32);
        }
    }
    // Rounding left `acc` a hair below 1: take the last form with mass.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1);
    FormId(last as u32)
}

/// Cumulative distribution for repeated draws from one query.
#[derive(Debug, Clone)]
pub struct Cdf(Vec<f64>);

impl Cdf {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        Cdf(probs
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FormId {
        let total = *self.0.last().unwrap_or(&1.0);
        let u: f64 = rng.gen::<f64>() * total;
        let i = self.0.partition_point(|&c| c <= u);
        FormId(i.min(self.0.len() - 1) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::world::fixtures::small_config;
    use crate::world::generate_universe;

    fn universe() -> Arc<FactUniverse> {
        Arc::new(generate_universe(&small_config(), 2).unwrap())
    }

    #[test]
    fn base_logits_are_knowledge_plus_popularity() {
        let u = universe();
        let p = RecallPolicy::base(u.clone());
        let lambda0 = u.config.suppression_strength;
        for q in [QueryId(0), QueryId(17)] {
            let l = p.logits(q).unwrap();
            for (v, &x) in l.iter().enumerate() {
                let expect = u.knowledge_row(q)[v] + lambda0 * u.popularity[v];
                assert!((x - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_uniform() {
        let u = universe();
        let p = RecallPolicy::with_weights(u.clone(), [0.0; 7]);
        let probs = p.probs(QueryId(3), 1.0).unwrap();
        let n = u.vocab_size() as f64;
        assert!(probs.iter().all(|&x| (x - 1.0 / n).abs() < 1e-15));
        let lp = p.log_prob(QueryId(3), FormId(5)).unwrap();
        assert!((lp + ln(n)).abs() < 1e-12);
    }

    #[test]
    fn bias_feature_cancels_in_softmax() {
        let u = universe();
        let base = RecallPolicy::base(u.clone());
        let mut shifted = base.clone();
        shifted.weights_mut()[6] = 5.0;
        let q = QueryId(8);
        let a = base.probs(q, 1.0).unwrap();
        let b = shifted.probs(q, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(base.greedy(q).unwrap(), shifted.greedy(q).unwrap());
        let f = FormId(1);
        assert!((base.log_prob(q, f).unwrap() - shifted.log_prob(q, f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn greedy_breaks_ties_to_lowest_id() {
        let u = universe();
        let mut p = RecallPolicy::with_weights(u.clone(), [0.0; 7]);
        let q = QueryId(0);
        p.ensure_delta_rows(&[q]).unwrap();
        let row = p.delta_row_mut(q).unwrap();
        row[7] = 3.0;
        row[9] = 3.0;
        assert_eq!(p.greedy(q).unwrap(), FormId(7));
    }

    #[test]
    fn unknown_query_is_an_argument_error() {
        let p = RecallPolicy::base(universe());
        assert!(matches!(p.logits(QueryId(10_000)), Err(Error::Argument(_))));
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let p = RecallPolicy::base(universe());
        let mut rng = stream(0, &[]);
        assert!(p.sample(QueryId(0), 0.0, &mut rng).is_err());
        assert!(p.sample(QueryId(0), -1.0, &mut rng).is_err());
    }

    #[test]
    fn kl_hand_value() {
        let kl = kl_from_logits(&[0.0, 0.0], &[ln(0.9), ln(0.1)]);
        let expect = 0.5 * ln(0.5 / 0.9) + 0.5 * ln(0.5 / 0.1);
        assert!((kl - expect).abs() < 1e-12);
        assert!((kl - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn reference_snapshot_is_isolated() {
        let u = universe();
        let mut p = RecallPolicy::base(u);
        let r = p.clone_as_reference();
        let q = QueryId(4);
        assert_eq!(p.kl_to_reference(&r, q).unwrap(), 0.0);
        let before = r.logits(q).unwrap();
        p.weights_mut()[1] = -2.0;
        assert_eq!(r.logits(q).unwrap(), before);
        assert!(p.kl_to_reference(&r, q).unwrap() > 0.0);
    }

    #[test]
    fn delta_only_touches_its_own_query() {
        let u = universe();
        let mut p = RecallPolicy::base(u);
        let before_other = p.logits(QueryId(1)).unwrap();
        p.ensure_delta_rows(&[QueryId(0)]).unwrap();
        p.delta_row_mut(QueryId(0)).unwrap()[3] = 2.0;
        assert_eq!(p.logits(QueryId(1)).unwrap(), before_other);
        assert!(p.delta_row(QueryId(1)).is_none());
        let mut shared = p.clone();
        shared.weights_mut()[0] = 1.5;
        assert_ne!(shared.logits(QueryId(1)).unwrap(), before_other);
    }

    #[test]
    fn disabled_delta_is_ignored() {
        let u = universe();
        let mut p = RecallPolicy::base(u);
        p.ensure_delta_rows(&[QueryId(0)]).unwrap();
        p.delta_row_mut(QueryId(0)).unwrap()[3] = 2.0;
        let with = p.logits(QueryId(0)).unwrap();
        p.set_delta_enabled(false);
        let without = p.logits(QueryId(0)).unwrap();
        assert!((with[3] - without[3] - 2.0).abs() < 1e-12);
        assert!(p.grad_log_prob(QueryId(0), FormId(0)).unwrap().delta.is_none());
    }

    #[test]
    fn parts_round_trip() {
        let u = universe();
        let mut p = RecallPolicy::base(u.clone());
        p.weights_mut()[4] = 0.25;
        p.ensure_delta_rows(&[QueryId(2), QueryId(5)]).unwrap();
        p.delta_row_mut(QueryId(2)).unwrap()[1] = -0.5;
        let q = RecallPolicy::from_parts(u, *p.weights(), &p.delta_queries(), &p.delta_triplets(), true).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn cdf_draw_matches_inverse_cdf() {
        let probs = [0.5, 0.3, 0.2];
        let cdf = Cdf::new(&probs);
        let mut a = stream(1, &[]);
        let mut b = stream(1, &[]);
        for _ in 0..1000 {
            assert_eq!(cdf.draw(&mut a), sample_index(&probs, &mut b));
        }
    }
}
