//! Online logistic-regression quality model.
//!
//! Features are standardised with running (Welford) statistics once the
//! model has seen `warmup` samples; before that raw features are used.
//! Training is plain SGD on a class-weighted log loss with an L2 penalty.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::{dot, logistic, Label};

/// Floor applied to running variances before dividing.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub l2: f64,
    /// Loss weight of NOK samples (≥ 1; 1 disables class weighting).
    pub nok_weight: f64,
    /// Decision threshold on the defect probability.
    pub threshold: f64,
    /// Samples seen before standardisation switches on.
    pub warmup: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.05,
            l2: 1e-4,
            nok_weight: 1.0,
            threshold: 0.5,
            warmup: 20,
        }
    }
}

/// Margin uncertainty `1 - |2p - 1|`: 1 at p = 0.5, 0 at p ∈ {0, 1}.
pub fn uncertainty(p_defect: f64) -> f64 {
    1.0 - (2.0 * p_defect - 1.0).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_defect: f64,
    pub label: Label,
    pub uncertainty: f64,
}

impl Prediction {
    /// Ties at the threshold classify as NOK.
    pub fn from_probability(p_defect: f64, threshold: f64) -> Self {
        Prediction {
            p_defect,
            label: if p_defect >= threshold {
                Label::Nok
            } else {
                Label::Ok
            },
            uncertainty: uncertainty(p_defect),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
    /// Part index at which the label became available.
    pub acquired_at: u64,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: Label, acquired_at: u64) -> Self {
        LabeledSample {
            features,
            label,
            acquired_at,
        }
    }
}

/// Gradient of the per-sample loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// A sample `update` refused to learn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    /// Position in the batch as passed in.
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub applied: usize,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    pub updates: UpdateReport,
    /// Set when the seed data lacks one of the classes.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub weights: Vec<f64>,
    pub bias: f64,
    feature_mean: Vec<f64>,
    feature_m2: Vec<f64>,
    samples_seen: u64,
    pub hyper: Hyperparameters,
}

impl Model {
    pub fn new(dim: usize, hyper: Hyperparameters) -> Self {
        Model {
            weights: vec![0.0; dim],
            bias: 0.0,
            feature_mean: vec![0.0; dim],
            feature_m2: vec![0.0; dim],
            samples_seen: 0,
            hyper,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    /// Population variance of each feature seen so far.
    pub fn feature_variance(&self) -> Vec<f64> {
        if self.samples_seen == 0 {
            return vec![0.0; self.dim()];
        }
        let n = self.samples_seen as f64;
        self.feature_m2.iter().map(|m2| (m2 / n).max(0.0)).collect()
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: features.len(),
            });
        }
        Ok(())
    }

    pub fn standardizing(&self) -> bool {
        self.samples_seen >= self.hyper.warmup && self.samples_seen > 0
    }

    /// Features as the linear model sees them.
    pub fn standardize(&self, features: &[f64]) -> Vec<f64> {
        if !self.standardizing() {
            return features.to_vec();
        }
        let n = self.samples_seen as f64;
        features
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_m2)
            .map(|((x, m), m2)| (x - m) / (m2 / n).max(VARIANCE_FLOOR).sqrt())
            .collect()
    }

    fn probability_of(&self, z: &[f64]) -> f64 {
        logistic(dot(&self.weights, z) + self.bias)
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        self.check_dim(features)?;
        let p = self.probability_of(&self.standardize(features));
        Ok(Prediction::from_probability(p, self.hyper.threshold))
    }

    fn class_weight(&self, label: Label) -> f64 {
        match label {
            Label::Nok => self.hyper.nok_weight,
            Label::Ok => 1.0,
        }
    }

    /// Per-sample loss on already standardised features:
    /// `γ_y · logloss(p, y) + λ/2 · ‖w‖²`.
    pub fn sample_loss(&self, z: &[f64], label: Label) -> f64 {
        let s = dot(&self.weights, z) + self.bias;
        // log(1 + e^s) - y·s, computed without overflow.
        let softplus = if s > 0.0 {
            s + (-s).exp().ln_1p()
        } else {
            s.exp().ln_1p()
        };
        let logloss = softplus - label.target() * s;
        let penalty = 0.5 * self.hyper.l2 * dot(&self.weights, &self.weights);
        self.class_weight(label) * logloss + penalty
    }

    pub fn sample_gradient(&self, z: &[f64], label: Label) -> Gradient {
        let residual = self.class_weight(label) * (self.probability_of(z) - label.target());
        Gradient {
            weights: z
                .iter()
                .zip(&self.weights)
                .map(|(zi, wi)| residual * zi + self.hyper.l2 * wi)
                .collect(),
            bias: residual,
        }
    }

    fn apply(&mut self, g: &Gradient) {
        let eta = self.hyper.learning_rate;
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            *w -= eta * gw;
        }
        self.bias -= eta * g.bias;
    }

    fn observe(&mut self, features: &[f64]) {
        self.samples_seen += 1;
        let n = self.samples_seen as f64;
        for ((x, m), m2) in features
            .iter()
            .zip(self.feature_mean.iter_mut())
            .zip(self.feature_m2.iter_mut())
        {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
    }

    fn reject_reason(&self, sample: &LabeledSample) -> Option<String> {
        if sample.features.len() != self.dim() {
            Some(format!(
                "expected {} features, found {}",
                self.dim(),
                sample.features.len()
            ))
        } else if sample.features.iter().any(|x| !x.is_finite()) {
            Some("non-finite feature".to_string())
        } else {
            None
        }
    }

    /// One SGD step per sample in a seeded shuffled order. Running feature
    /// statistics absorb each sample before its step.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[LabeledSample],
        rng: &mut R,
    ) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::Usage("update needs a non-empty batch".into()));
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.shuffle(rng);
        let mut report = UpdateReport::default();
        for i in order {
            let sample = &batch[i];
            if let Some(reason) = self.reject_reason(sample) {
                report.rejected.push(Rejected {
                    position: i,
                    reason,
                });
                continue;
            }
            self.observe(&sample.features);
            let z = self.standardize(&sample.features);
            let g = self.sample_gradient(&z, sample.label);
            self.apply(&g);
            report.applied += 1;
        }
        report.rejected.sort_by_key(|r| r.position);
        Ok(report)
    }

    /// `epochs` shuffled update passes over the seed data.
    pub fn pretrain<R: Rng + ?Sized>(
        &mut self,
        seed_data: &[LabeledSample],
        epochs: u32,
        rng: &mut R,
    ) -> Result<PretrainReport> {
        if seed_data.is_empty() {
            return Err(Error::Usage("pretraining needs at least one sample".into()));
        }
        let noks = seed_data.iter().filter(|s| s.label.is_defect()).count();
        let warning = if noks == 0 || noks == seed_data.len() {
            Some(format!(
                "pretraining data holds a single class ({} of {} NOK)",
                noks,
                seed_data.len()
            ))
        } else {
            None
        };
        let mut updates = UpdateReport::default();
        for _ in 0..epochs {
            let r = self.update(seed_data, rng)?;
            updates.applied += r.applied;
            updates.rejected.extend(r.rejected);
        }
        Ok(PretrainReport { updates, warning })
    }

    /// Mean per-sample loss over `data` with the current statistics frozen.
    pub fn batch_loss(&self, data: &[LabeledSample]) -> f64 {
        let total: f64 = data
            .iter()
            .map(|s| self.sample_loss(&self.standardize(&s.features), s.label))
            .sum();
        total / data.len() as f64
    }

    pub fn batch_gradient(&self, data: &[LabeledSample]) -> Gradient {
        let mut acc = Gradient {
            weights: vec![0.0; self.dim()],
            bias: 0.0,
        };
        for s in data {
            let g = self.sample_gradient(&self.standardize(&s.features), s.label);
            for (a, gw) in acc.weights.iter_mut().zip(&g.weights) {
                *a += gw;
            }
            acc.bias += g.bias;
        }
        let n = data.len() as f64;
        acc.weights.iter_mut().for_each(|w| *w /= n);
        acc.bias /= n;
        acc
    }

    /// Full-batch gradient descent. Statistics absorb `data` once up front
    /// and then stay frozen, so each epoch descends one fixed objective.
    /// Returns the loss before each epoch followed by the final loss.
    pub fn fit_full_batch(&mut self, data: &[LabeledSample], epochs: usize) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Usage("full-batch fit needs data".into()));
        }
        for s in data {
            self.check_dim(&s.features)?;
        }
        for s in data {
            self.observe(&s.features);
        }
        let mut losses = Vec::with_capacity(epochs + 1);
        for _ in 0..epochs {
            losses.push(self.batch_loss(data));
            let g = self.batch_gradient(data);
            self.apply(&g);
        }
        losses.push(self.batch_loss(data));
        Ok(losses)
    }

    /// Plain-text `key = value` snapshot; vectors are space separated.
    pub fn to_key_values(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let h = &self.hyper;
        let mut out = String::new();
        let _ = writeln!(out, "dimension = {}", self.dim());
        let _ = writeln!(out, "samples_seen = {}", self.samples_seen);
        let _ = writeln!(out, "learning_rate = {:?}", h.learning_rate);
        let _ = writeln!(out, "l2 = {:?}", h.l2);
        let _ = writeln!(out, "nok_weight = {:?}", h.nok_weight);
        let _ = writeln!(out, "threshold = {:?}", h.threshold);
        let _ = writeln!(out, "warmup = {}", h.warmup);
        let _ = writeln!(out, "bias = {:?}", self.bias);
        let _ = writeln!(out, "weights = {}", join(&self.weights));
        let _ = writeln!(out, "feature_mean = {}", join(&self.feature_mean));
        let _ = writeln!(out, "feature_m2 = {}", join(&self.feature_m2));
        out
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("malformed snapshot line: {line}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::Usage(format!("snapshot missing key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Usage(format!("snapshot key {k} is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Usage(format!("snapshot key {k} is not an integer")))
        };
        let dim = int("dimension")? as usize;
        let vec = |k: &str| -> Result<Vec<f64>> {
            let v = get(k)?
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Usage(format!("snapshot key {k} holds a non-number")))?;
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
            Ok(v)
        };
        Ok(Model {
            weights: vec("weights")?,
            bias: num("bias")?,
            feature_mean: vec("feature_mean")?,
            feature_m2: vec("feature_m2")?,
            samples_seen: int("samples_seen")?,
            hyper: Hyperparameters {
                learning_rate: num("learning_rate")?,
                l2: num("l2")?,
                nok_weight: num("nok_weight")?,
                threshold: num("threshold")?,
                warmup: int("warmup")?,
            },
        })
    }
}
