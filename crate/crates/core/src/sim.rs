//! Part stream generator.
//!
//! Each part draws its process parameters from the active regime
//! (mean + Gaussian noise + optional linear drift) and a hidden quality
//! label from a logistic-linear defect process. Fault events add a logit
//! boost while they are active.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::learner::LabeledSample;
use crate::rng::{stream_rng, SimRng, Stream};

/// Quality outcome of one part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Ok,
    Nok,
}

impl Label {
    pub fn is_defect(self) -> bool {
        self == Label::Nok
    }

    /// 1.0 for NOK, 0.0 for OK.
    pub fn target(self) -> f64 {
        match self {
            Label::Ok => 0.0,
            Label::Nok => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ok => "OK",
            Label::Nok => "NOK",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessParameters(pub Vec<f64>);

impl ProcessParameters {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A product variant: parameter distribution plus defect weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub id: u32,
    pub mean: Vec<f64>,
    /// Diagonal of the parameter covariance.
    pub variance: Vec<f64>,
    pub defect_weights: Vec<f64>,
    pub defect_bias: f64,
    /// When set, `defect_bias` was solved so the drift-free marginal defect
    /// rate equals this value.
    pub base_defect_rate: Option<f64>,
    /// Per-part linear shift of the mean, applied as `drift * part_index`.
    pub drift: Vec<f64>,
}

impl Regime {
    /// Regime with zero defect weights and unit variance.
    pub fn constant_rate(id: u32, dim: usize, defect_rate: f64) -> Self {
        Regime {
            id,
            mean: vec![0.0; dim],
            variance: vec![1.0; dim],
            defect_weights: vec![0.0; dim],
            defect_bias: logit(defect_rate),
            base_defect_rate: None,
            drift: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_at(&self, index: u64) -> Vec<f64> {
        let t = index as f64;
        self.mean
            .iter()
            .zip(&self.drift)
            .map(|(m, d)| m + d * t)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultEvent {
    pub onset: u64,
    pub duration: u64,
    pub logit_boost: f64,
}

impl FaultEvent {
    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }

    pub fn is_active(&self, index: u64) -> bool {
        index >= self.onset && index < self.end()
    }
}

/// Half-open part-index range `[start, end)` produced under one regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub start: u64,
    pub end: u64,
    pub regime: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub index: u64,
    pub params: ProcessParameters,
    pub variant: u32,
    true_label: Label,
}

impl Part {
    pub fn new(index: u64, params: ProcessParameters, variant: u32, true_label: Label) -> Self {
        Part {
            index,
            params,
            variant,
            true_label,
        }
    }

    /// Hidden quality. Only the lab and the evaluation code may read this.
    pub fn true_label(&self) -> Label {
        self.true_label
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// σ(w·x + b + boost) for the given regime.
pub fn true_defect_probability(
    params: &ProcessParameters,
    regime: &Regime,
    fault_boost: f64,
) -> Result<f64> {
    if params.dim() != regime.defect_weights.len() {
        return Err(Error::Dimension {
            expected: regime.defect_weights.len(),
            got: params.dim(),
        });
    }
    let z = dot(&regime.defect_weights, params.as_slice()) + regime.defect_bias + fault_boost;
    Ok(logistic(z))
}

/// Sum of logit boosts of faults active at `index`.
pub fn fault_boost_at(faults: &[FaultEvent], index: u64) -> f64 {
    faults
        .iter()
        .filter(|f| f.is_active(index))
        .map(|f| f.logit_boost)
        .sum()
}

/// Marginal defect rate E[σ(w·x + b)] for x ~ N(mean, diag(variance)).
///
/// The logit is Gaussian, so this is a one-dimensional integral; composite
/// Simpson over ±10 standard deviations.
pub fn marginal_defect_rate(weights: &[f64], mean: &[f64], variance: &[f64], bias: f64) -> f64 {
    let centre = dot(weights, mean) + bias;
    let spread = weights
        .iter()
        .zip(variance)
        .map(|(w, v)| w * w * v)
        .sum::<f64>()
        .sqrt();
    if spread == 0.0 {
        return logistic(centre);
    }
    const INTERVALS: usize = 2000;
    const HALF_WIDTH: f64 = 10.0;
    let h = 2.0 * HALF_WIDTH / INTERVALS as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |u: f64| logistic(centre + spread * u) * norm * (-0.5 * u * u).exp();
    let mut acc = f(-HALF_WIDTH) + f(HALF_WIDTH);
    for i in 1..INTERVALS {
        let u = -HALF_WIDTH + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    acc * h / 3.0
}

/// Bias that makes the drift-free, fault-free marginal defect rate equal `rate`.
pub fn calibrate_bias(weights: &[f64], mean: &[f64], variance: &[f64], rate: f64) -> f64 {
    let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal_defect_rate(weights, mean, variance, mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generator state for one run's part stream.
#[derive(Debug, Clone)]
pub struct ProcessState {
    index: u64,
    regime: u32,
    active_faults: Vec<usize>,
    rng: SimRng,
}

impl ProcessState {
    /// Starts a stream at part 0. The process generator is derived from
    /// `seed` through [`Stream::Process`], independent of all decisions.
    pub fn init(config: &ScenarioConfig, seed: u64) -> Self {
        Self::with_rng(config, stream_rng(seed, Stream::Process))
    }

    pub fn with_rng(config: &ScenarioConfig, rng: SimRng) -> Self {
        let mut state = ProcessState {
            index: 0,
            regime: 0,
            active_faults: Vec::new(),
            rng,
        };
        state.sync_schedule(config);
        state
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn active_regime(&self) -> u32 {
        self.regime
    }

    /// Indices into `config.faults` active at the current index.
    pub fn active_faults(&self) -> &[usize] {
        &self.active_faults
    }

    fn sync_schedule(&mut self, config: &ScenarioConfig) {
        self.regime = config.regime_id_at(self.index);
        self.active_faults = config
            .faults
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_active(self.index))
            .map(|(i, _)| i)
            .collect();
    }

    /// Produces the next part, or `None` once the horizon is reached.
    pub fn next_part(&mut self, config: &ScenarioConfig) -> Option<Part> {
        if self.index >= config.horizon {
            return None;
        }
        let regime = config
            .regime(self.regime)
            .expect("schedule references a validated regime");
        let boost: f64 = self
            .active_faults
            .iter()
            .map(|&i| config.faults[i].logit_boost)
            .sum();
        let part = draw_part(regime, self.index, boost, &mut self.rng);
        self.index += 1;
        self.sync_schedule(config);
        Some(part)
    }
}

/// Draws one part from `regime` at `index`: parameters first (one standard
/// normal per dimension), then one uniform for the label.
pub fn draw_part<R: Rng + ?Sized>(
    regime: &Regime,
    index: u64,
    fault_boost: f64,
    rng: &mut R,
) -> Part {
    let values: Vec<f64> = regime
        .mean_at(index)
        .iter()
        .zip(&regime.variance)
        .map(|(m, v)| {
            let noise: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * noise
        })
        .collect();
    let params = ProcessParameters(values);
    let p =
        true_defect_probability(&params, regime, fault_boost).expect("regime dimension validated");
    let u: f64 = rng.random();
    let label = if u < p { Label::Nok } else { Label::Ok };
    Part::new(index, params, regime.id, label)
}

/// Held-out labelled parts for accuracy checkpoints.
///
/// Part `j` of `n` is drawn at index `j * horizon / n` under the regime
/// scheduled there (drift included, faults excluded) from the
/// [`Stream::Evaluation`] generator, so it never overlaps the production
/// stream of the same seed.
pub fn eval_stream(config: &ScenarioConfig, seed: u64, n: usize) -> Vec<LabeledSample> {
    let mut rng = stream_rng(seed, Stream::Evaluation);
    (0..n as u64)
        .map(|j| {
            let index = j * config.horizon / n as u64;
            let regime = config
                .regime(config.regime_id_at(index))
                .expect("schedule references a validated regime");
            let part = draw_part(regime, index, 0.0, &mut rng);
            LabeledSample::new(part_features(&part, config), part.true_label(), index)
        })
        .collect()
}

/// Learner input: process parameters followed by a one-hot variant block.
pub fn part_features(part: &Part, config: &ScenarioConfig) -> Vec<f64> {
    let mut z = part.params.0.clone();
    z.extend(config.variant_one_hot(part.variant));
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn single(rate: f64, dim: usize) -> ScenarioConfig {
        ScenarioConfig::single_regime(Regime::constant_rate(0, dim, rate), 100_000)
    }

    #[test]
    fn logistic_of_zero_is_half() {
        let r = Regime {
            defect_bias: 0.0,
            ..Regime::constant_rate(0, 3, 0.5)
        };
        let p = true_defect_probability(&ProcessParameters(vec![1.0, -2.0, 3.0]), &r, 0.0).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn constructed_zero_logit() {
        let r = Regime {
            defect_weights: vec![1.0, -1.0],
            defect_bias: -1.0,
            ..Regime::constant_rate(0, 2, 0.5)
        };
        let p = true_defect_probability(&ProcessParameters(vec![2.0, 1.0]), &r, 0.0).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn logit_round_trip() {
        let b = logit(0.05);
        assert!((b - (-2.944_438_979_166_44)).abs() < 1e-9);
        let r = Regime::constant_rate(0, 2, 0.05);
        let p = true_defect_probability(&ProcessParameters(vec![0.3, 9.0]), &r, 0.0).unwrap();
        assert!((p - 0.05).abs() < 1e-9);
    }

    #[test]
    fn fault_shifted_logit() {
        let r = Regime {
            defect_bias: -2.944,
            ..Regime::constant_rate(0, 1, 0.05)
        };
        let p = true_defect_probability(&ProcessParameters(vec![0.0]), &r, 4.0).unwrap();
        // σ(1.056) = 1 / (1 + e^-1.056)
        assert!((p - 0.741_9).abs() < 1e-3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let r = Regime::constant_rate(0, 2, 0.05);
        let err = true_defect_probability(&ProcessParameters(vec![1.0]), &r, 0.0).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = single(0.05, 3);
        let mut a = ProcessState::init(&cfg, 42);
        let mut b = ProcessState::init(&cfg, 42);
        for _ in 0..500 {
            assert_eq!(a.next_part(&cfg), b.next_part(&cfg));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = single(0.05, 3);
        let mut a = ProcessState::init(&cfg, 1);
        let mut b = ProcessState::init(&cfg, 2);
        let differs = (0..100)
            .any(|_| a.next_part(&cfg).unwrap().params != b.next_part(&cfg).unwrap().params);
        assert!(differs);
    }

    #[test]
    fn single_regime_is_active() {
        let cfg = single(0.05, 2);
        assert_eq!(ProcessState::init(&cfg, 0).active_regime(), 0);
    }

    #[test]
    fn zero_noise_gives_mean() {
        let mut regime = Regime::constant_rate(0, 3, 0.05);
        regime.mean = vec![1.5, -2.0, 0.25];
        regime.variance = vec![0.0; 3];
        let cfg = ScenarioConfig::single_regime(regime, 50);
        let mut s = ProcessState::init(&cfg, 9);
        while let Some(p) = s.next_part(&cfg) {
            assert_eq!(p.params.0, vec![1.5, -2.0, 0.25]);
        }
    }

    #[test]
    fn stream_ends_at_horizon() {
        let cfg = ScenarioConfig::single_regime(Regime::constant_rate(0, 1, 0.05), 10);
        let mut s = ProcessState::init(&cfg, 3);
        let idx: Vec<u64> = std::iter::from_fn(|| s.next_part(&cfg))
            .map(|p| p.index)
            .collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn empirical_rate_matches_bias() {
        let n = 100_000;
        let cfg = single(0.05, 2);
        let mut s = ProcessState::init(&cfg, 2024);
        let noks = std::iter::from_fn(|| s.next_part(&cfg))
            .filter(|p| p.true_label().is_defect())
            .count();
        let rate = noks as f64 / n as f64;
        let bound = 3.0 * (0.05_f64 * 0.95 / n as f64).sqrt();
        assert!((rate - 0.05).abs() <= bound, "rate {rate}");
    }

    #[test]
    fn fault_window_rate() {
        // Base logit -2.944 boosted by +4 for the whole stream.
        let mut cfg = single(0.05, 1);
        cfg.regimes[0].defect_bias = -2.944;
        cfg.faults.push(FaultEvent {
            onset: 0,
            duration: 100_000,
            logit_boost: 4.0,
        });
        let mut s = ProcessState::init(&cfg, 5);
        let n = 100_000;
        let noks = std::iter::from_fn(|| s.next_part(&cfg))
            .filter(|p| p.true_label().is_defect())
            .count();
        let expected = logistic(1.056);
        let rate = noks as f64 / n as f64;
        assert!((rate - expected).abs() < 3.0 * (expected * (1.0 - expected) / n as f64).sqrt());
    }

    #[test]
    fn calibrated_bias_hits_marginal_rate() {
        let w = [2.0, -1.5, 1.0, 0.0];
        let mean = [0.0; 4];
        let var = [1.0; 4];
        let b = calibrate_bias(&w, &mean, &var, 0.05);
        assert!((marginal_defect_rate(&w, &mean, &var, b) - 0.05).abs() < 1e-9);
        // Monte Carlo cross-check of the quadrature.
        let mut regime = Regime::constant_rate(0, 4, 0.05);
        regime.defect_weights = w.to_vec();
        regime.defect_bias = b;
        let cfg = ScenarioConfig::single_regime(regime, 200_000);
        let mut s = ProcessState::init(&cfg, 11);
        let noks = std::iter::from_fn(|| s.next_part(&cfg))
            .filter(|p| p.true_label().is_defect())
            .count();
        let rate = noks as f64 / 200_000.0;
        assert!(
            (rate - 0.05).abs() < 3.0 * (0.0475_f64 / 200_000.0).sqrt(),
            "rate {rate}"
        );
    }

    #[test]
    fn zero_weights_calibrate_to_logit() {
        let b = calibrate_bias(&[0.0, 0.0], &[1.0, 2.0], &[1.0, 1.0], 0.05);
        assert!((b - logit(0.05)).abs() < 1e-9);
    }
}
