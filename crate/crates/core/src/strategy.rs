//! Per-part sampling policies.
//!
//! A strategy sees the part index, its process parameters and the model's
//! prediction. It never sees the hidden label; results only reach it through
//! [`SamplingStrategy::on_label`] once the lab returns them.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lab::InspectionResult;
use crate::learner::Prediction;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Inspect,
    Pass,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Inspect => "Inspect",
            Verdict::Pass => "Pass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    RandomDraw,
    PeriodicTick,
    SpcOutOfControl,
    PredictedDefect,
    LowConfidence,
    BudgetExhausted,
    Default,
    /// Forced inspection while collecting pretraining labels.
    Commissioning,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::RandomDraw => "RandomDraw",
            Reason::PeriodicTick => "PeriodicTick",
            Reason::SpcOutOfControl => "SpcOutOfControl",
            Reason::PredictedDefect => "PredictedDefect",
            Reason::LowConfidence => "LowConfidence",
            Reason::BudgetExhausted => "BudgetExhausted",
            Reason::Default => "Default",
            Reason::Commissioning => "Commissioning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: Reason,
}

impl Decision {
    pub const PASS: Decision = Decision {
        verdict: Verdict::Pass,
        reason: Reason::Default,
    };

    pub fn inspect(reason: Reason) -> Self {
        Decision {
            verdict: Verdict::Inspect,
            reason,
        }
    }

    pub fn pass(reason: Reason) -> Self {
        Decision {
            verdict: Verdict::Pass,
            reason,
        }
    }

    pub fn is_inspect(&self) -> bool {
        self.verdict == Verdict::Inspect
    }

    /// Reason codes that only make sense with one verdict.
    pub fn is_consistent(&self) -> bool {
        match self.reason {
            Reason::BudgetExhausted => self.verdict == Verdict::Pass,
            Reason::PredictedDefect
            | Reason::LowConfidence
            | Reason::RandomDraw
            | Reason::PeriodicTick
            | Reason::SpcOutOfControl
            | Reason::Commissioning => self.verdict == Verdict::Inspect,
            Reason::Default => true,
        }
    }
}

/// What a strategy may look at for one part.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub index: u64,
    pub params: &'a [f64],
    pub prediction: &'a Prediction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelStats {
    pub labels_received: u64,
    pub nok_received: u64,
}

/// Strategy-side record of outstanding inspections and returned labels.
#[derive(Debug, Clone, Default)]
pub struct LabelBook {
    pending: HashSet<u64>,
    stats: LabelStats,
}

impl LabelBook {
    pub fn record(&mut self, decision: &Decision, index: u64) {
        if decision.is_inspect() {
            self.pending.insert(index);
        }
    }

    pub fn receive(&mut self, result: &InspectionResult) -> Result<()> {
        if !self.pending.remove(&result.part) {
            return Err(Error::Internal(format!(
                "label for part {} which this strategy never inspected",
                result.part
            )));
        }
        self.stats.labels_received += 1;
        if result.label.is_defect() {
            self.stats.nok_received += 1;
        }
        Ok(())
    }

    pub fn stats(&self) -> LabelStats {
        self.stats
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}

pub trait SamplingStrategy: Send {
    fn kind(&self) -> StrategyKind;

    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision>;

    fn on_label(&mut self, result: &InspectionResult) -> Result<()>;

    fn label_stats(&self) -> LabelStats;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Random,
    Periodic,
    Spc,
    Smart,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::Periodic,
        StrategyKind::Spc,
        StrategyKind::Smart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Periodic => "periodic",
            StrategyKind::Spc => "spc",
            StrategyKind::Smart => "smart",
        }
    }

    /// Builds the strategy with the scenario's parameters.
    pub fn build(self, config: &ScenarioConfig, rng: SimRng) -> Result<Box<dyn SamplingStrategy>> {
        let p = &config.strategies;
        Ok(match self {
            StrategyKind::Random => Box::new(RandomSampler::new(p.random.rate, rng)?),
            StrategyKind::Periodic => Box::new(PeriodicSampler::new(p.periodic.interval)?),
            StrategyKind::Spc => Box::new(SpcSampler::new(p.spc)?),
            StrategyKind::Smart => {
                Box::new(SmartSampler::new(p.smart, config.learner.hyper.threshold)?)
            }
        })
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown strategy {s:?} (expected random, periodic, spc or smart)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomParams {
    pub rate: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams { rate: 0.025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicParams {
    pub interval: u64,
}

impl Default for PeriodicParams {
    fn default() -> Self {
        PeriodicParams { interval: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpcParams {
    /// Parts used to estimate the control limits.
    pub calibration: u64,
    /// Index of the monitored process parameter.
    pub feature: usize,
}

impl Default for SpcParams {
    fn default() -> Self {
        SpcParams {
            calibration: 500,
            feature: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmartParams {
    /// Minimum uncertainty that triggers an inspection.
    pub tau: f64,
    pub capacity: f64,
    /// Tokens added per part.
    pub refill: f64,
}

impl Default for SmartParams {
    fn default() -> Self {
        SmartParams {
            tau: 0.8,
            capacity: 10.0,
            refill: 0.025,
        }
    }
}

/// Inspects each part independently with probability `rate`.
#[derive(Debug, Clone)]
pub struct RandomSampler {
    rate: f64,
    rng: SimRng,
    book: LabelBook,
}

impl RandomSampler {
    pub fn new(rate: f64, rng: SimRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("random rate {rate} outside [0, 1]")));
        }
        Ok(RandomSampler {
            rate,
            rng,
            book: LabelBook::default(),
        })
    }
}

impl SamplingStrategy for RandomSampler {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Random
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision> {
        let d = if self.rng.random_bool(self.rate) {
            Decision::inspect(Reason::RandomDraw)
        } else {
            Decision::PASS
        };
        self.book.record(&d, obs.index);
        Ok(d)
    }

    fn on_label(&mut self, result: &InspectionResult) -> Result<()> {
        self.book.receive(result)
    }

    fn label_stats(&self) -> LabelStats {
        self.book.stats()
    }
}

/// Inspects part `i` exactly when `(i + 1) % interval == 0`.
#[derive(Debug, Clone)]
pub struct PeriodicSampler {
    interval: u64,
    /// `(last index + 1) % interval`.
    counter: u64,
    book: LabelBook,
}

impl PeriodicSampler {
    pub fn new(interval: u64) -> Result<Self> {
        if interval == 0 {
            return Err(Error::Config("periodic interval must be at least 1".into()));
        }
        Ok(PeriodicSampler {
            interval,
            counter: 0,
            book: LabelBook::default(),
        })
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl SamplingStrategy for PeriodicSampler {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Periodic
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision> {
        self.counter = (obs.index + 1) % self.interval;
        let d = if self.counter == 0 {
            Decision::inspect(Reason::PeriodicTick)
        } else {
            Decision::PASS
        };
        self.book.record(&d, obs.index);
        Ok(d)
    }

    fn on_label(&mut self, result: &InspectionResult) -> Result<()> {
        self.book.receive(result)
    }

    fn label_stats(&self) -> LabelStats {
        self.book.stats()
    }
}

/// Shewhart individuals chart on one process parameter with ±3σ limits
/// estimated from the first `calibration` parts it sees.
#[derive(Debug, Clone)]
pub struct SpcSampler {
    params: SpcParams,
    count: u64,
    mean: f64,
    m2: f64,
    limits: Option<(f64, f64)>,
    book: LabelBook,
}

impl SpcSampler {
    pub fn new(params: SpcParams) -> Result<Self> {
        if params.calibration < 2 {
            return Err(Error::Config(
                "SPC calibration needs at least 2 parts".into(),
            ));
        }
        Ok(SpcSampler {
            params,
            count: 0,
            mean: 0.0,
            m2: 0.0,
            limits: None,
            book: LabelBook::default(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation of the calibration window.
    pub fn sigma(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).sqrt()
    }

    pub fn limits(&self) -> Option<(f64, f64)> {
        self.limits
    }

    pub fn is_calibrated(&self) -> bool {
        self.limits.is_some()
    }

    fn judge(&mut self, value: f64) -> Result<Decision> {
        if let Some((lo, hi)) = self.limits {
            return Ok(if value < lo || value > hi {
                Decision::inspect(Reason::SpcOutOfControl)
            } else {
                Decision::PASS
            });
        }
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
        if self.count == self.params.calibration {
            let sigma = self.sigma();
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!(
                    "monitored feature {} has zero spread after calibration",
                    self.params.feature
                )));
            }
            self.limits = Some((self.mean - 3.0 * sigma, self.mean + 3.0 * sigma));
        }
        Ok(Decision::PASS)
    }
}

impl SamplingStrategy for SpcSampler {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Spc
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision> {
        let value = *obs
            .params
            .get(self.params.feature)
            .ok_or(Error::Dimension {
                expected: self.params.feature + 1,
                got: obs.params.len(),
            })?;
        let d = self.judge(value)?;
        self.book.record(&d, obs.index);
        Ok(d)
    }

    fn on_label(&mut self, result: &InspectionResult) -> Result<()> {
        self.book.receive(result)
    }

    fn label_stats(&self) -> LabelStats {
        self.book.stats()
    }
}

/// Inspection budget: holds at most `capacity` tokens, gains `refill` per
/// part and spends one per inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill: f64,
}

impl TokenBucket {
    /// Starts full.
    pub fn new(capacity: f64, refill: f64) -> Self {
        TokenBucket {
            capacity,
            tokens: capacity,
            refill,
        }
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn tick(&mut self) {
        self.tokens = (self.tokens + self.refill).min(self.capacity);
    }

    pub fn try_take(&mut self) -> bool {
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Most inspections possible in any window of `parts` parts.
    pub fn window_bound(&self, parts: u64) -> f64 {
        self.capacity + self.refill * parts as f64
    }
}

/// Inspects parts the model flags as defective or is unsure about, while
/// the token budget allows.
#[derive(Debug, Clone)]
pub struct SmartSampler {
    threshold: f64,
    tau: f64,
    bucket: TokenBucket,
    book: LabelBook,
}

impl SmartSampler {
    pub fn new(params: SmartParams, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&params.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", params.tau)));
        }
        Ok(SmartSampler {
            threshold,
            tau: params.tau,
            bucket: TokenBucket::new(params.capacity, params.refill),
            book: LabelBook::default(),
        })
    }

    pub fn bucket(&self) -> &TokenBucket {
        &self.bucket
    }

    pub fn bucket_mut(&mut self) -> &mut TokenBucket {
        &mut self.bucket
    }

    /// Decision for one prediction; refills the bucket first.
    pub fn judge(&mut self, prediction: &Prediction) -> Decision {
        self.bucket.tick();
        let flagged = prediction.p_defect >= self.threshold;
        let unsure = prediction.uncertainty >= self.tau;
        if !(flagged || unsure) {
            return Decision::PASS;
        }
        if self.bucket.try_take() {
            Decision::inspect(if flagged {
                Reason::PredictedDefect
            } else {
                Reason::LowConfidence
            })
        } else {
            Decision::pass(Reason::BudgetExhausted)
        }
    }
}

impl SamplingStrategy for SmartSampler {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Smart
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision> {
        let d = self.judge(obs.prediction);
        self.book.record(&d, obs.index);
        Ok(d)
    }

    fn on_label(&mut self, result: &InspectionResult) -> Result<()> {
        self.book.receive(result)
    }

    fn label_stats(&self) -> LabelStats {
        self.book.stats()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Label;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn pred(p: f64) -> Prediction {
        Prediction::from_probability(p, 0.5)
    }

    fn run(s: &mut dyn SamplingStrategy, n: u64) -> Vec<Decision> {
        let p = pred(0.1);
        (0..n)
            .map(|i| {
                s.decide(&Observation {
                    index: i,
                    params: &[0.0],
                    prediction: &p,
                })
                .unwrap()
            })
            .collect()
    }

    fn result(part: u64, label: Label) -> InspectionResult {
        InspectionResult {
            part,
            label,
            submitted_at: part,
            returned_at: part,
            destroyed: true,
        }
    }

    #[test]
    fn random_extremes() {
        let mut never = RandomSampler::new(0.0, SimRng::seed_from_u64(1)).unwrap();
        assert!(run(&mut never, 1000).iter().all(|d| !d.is_inspect()));
        let mut always = RandomSampler::new(1.0, SimRng::seed_from_u64(1)).unwrap();
        assert!(run(&mut always, 1000).iter().all(|d| d.is_inspect()));
    }

    #[test]
    fn random_rate_law() {
        let n = 100_000;
        let mut s = RandomSampler::new(0.05, SimRng::seed_from_u64(77)).unwrap();
        let k = run(&mut s, n).iter().filter(|d| d.is_inspect()).count();
        let frac = k as f64 / n as f64;
        assert!((frac - 0.05).abs() <= 3.0 * (0.05_f64 * 0.95 / n as f64).sqrt());
    }

    #[test]
    fn periodic_every_part() {
        let mut s = PeriodicSampler::new(1).unwrap();
        assert!(run(&mut s, 50).iter().all(|d| d.is_inspect()));
    }

    #[test]
    fn periodic_indices() {
        let mut s = PeriodicSampler::new(5).unwrap();
        let hits: Vec<usize> = run(&mut s, 20)
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_inspect())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(hits, vec![4, 9, 14, 19]);
        assert!(s.counter() < 5);
    }

    #[test]
    fn periodic_zero_interval_rejected() {
        assert!(matches!(PeriodicSampler::new(0), Err(Error::Config(_))));
    }

    fn calibrated_spc() -> SpcSampler {
        let mut s = SpcSampler::new(SpcParams {
            calibration: 4,
            feature: 0,
        })
        .unwrap();
        for v in [1.0, 2.0, 3.0, 4.0] {
            assert_eq!(s.judge(v).unwrap(), Decision::PASS);
        }
        s
    }

    #[test]
    fn spc_limits() {
        let mut s = calibrated_spc();
        let (mean, sigma) = (s.mean(), s.sigma());
        assert_eq!(mean, 2.5);
        assert_eq!(s.judge(mean).unwrap(), Decision::PASS);
        assert_eq!(
            s.judge(mean + 4.0 * sigma).unwrap(),
            Decision::inspect(Reason::SpcOutOfControl)
        );
        assert_eq!(
            s.judge(mean - 4.0 * sigma).unwrap(),
            Decision::inspect(Reason::SpcOutOfControl)
        );
    }

    #[test]
    fn spc_degenerate_feature() {
        let mut s = SpcSampler::new(SpcParams {
            calibration: 3,
            feature: 0,
        })
        .unwrap();
        s.judge(1.0).unwrap();
        s.judge(1.0).unwrap();
        assert!(matches!(s.judge(1.0), Err(Error::Config(_))));
    }

    #[test]
    fn spc_in_control_trigger_rate() {
        let mut rng = SimRng::seed_from_u64(2718);
        let calibration = 20_000;
        let mut s = SpcSampler::new(SpcParams {
            calibration,
            feature: 0,
        })
        .unwrap();
        for _ in 0..calibration {
            s.judge(rng.sample(StandardNormal)).unwrap();
        }
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| s.judge(rng.sample(StandardNormal)).unwrap().is_inspect())
            .count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.0027).abs() <= 0.001, "rate {rate}");
    }

    #[test]
    fn smart_examples() {
        let mut s = SmartSampler::new(SmartParams::default(), 0.5).unwrap();
        assert_eq!(
            s.judge(&pred(0.99)),
            Decision::inspect(Reason::PredictedDefect)
        );
        assert_eq!(
            s.judge(&pred(0.5)),
            Decision::inspect(Reason::PredictedDefect)
        );
        assert_eq!(
            s.judge(&pred(0.45)),
            Decision::inspect(Reason::LowConfidence)
        );
        assert_eq!(s.judge(&pred(0.01)), Decision::PASS);
    }

    #[test]
    fn smart_maximal_uncertainty_is_low_confidence_above_threshold() {
        // With θ_d above 0.5 only the uncertainty clause can fire at p = 0.5.
        let mut s = SmartSampler::new(
            SmartParams {
                tau: 1.0,
                ..Default::default()
            },
            0.9,
        )
        .unwrap();
        assert_eq!(
            s.judge(&pred(0.5)),
            Decision::inspect(Reason::LowConfidence)
        );
    }

    #[test]
    fn smart_budget_exhaustion() {
        let mut s = SmartSampler::new(
            SmartParams {
                tau: 0.8,
                capacity: 2.0,
                refill: 0.0,
            },
            0.5,
        )
        .unwrap();
        assert!(s.judge(&pred(0.9)).is_inspect());
        assert!(s.judge(&pred(0.9)).is_inspect());
        assert_eq!(s.judge(&pred(0.9)), Decision::pass(Reason::BudgetExhausted));
    }

    #[test]
    fn label_bookkeeping() {
        let mut s = PeriodicSampler::new(1).unwrap();
        run(&mut s, 12);
        s.on_label(&result(3, Label::Nok)).unwrap();
        assert_eq!(
            s.label_stats(),
            LabelStats {
                labels_received: 1,
                nok_received: 1
            }
        );
        for i in 4..12 {
            s.on_label(&result(i, Label::Ok)).unwrap();
        }
        s.on_label(&result(0, Label::Ok)).unwrap();
        s.on_label(&result(1, Label::Ok)).unwrap();
        assert_eq!(s.label_stats().labels_received, 11);
        assert!(matches!(
            s.on_label(&result(3, Label::Ok)),
            Err(Error::Internal(_))
        ));
        assert!(matches!(
            s.on_label(&result(99, Label::Ok)),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn no_labels_no_change() {
        let s = SmartSampler::new(SmartParams::default(), 0.5).unwrap();
        assert_eq!(s.label_stats(), LabelStats::default());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!(matches!(
            "greedy".parse::<StrategyKind>(),
            Err(Error::Usage(_))
        ));
    }

    proptest! {
        #[test]
        fn periodic_count_law(n in 0u64..5000, k in 1u64..300) {
            let mut s = PeriodicSampler::new(k).unwrap();
            let count = run(&mut s, n).iter().filter(|d| d.is_inspect()).count() as u64;
            prop_assert_eq!(count, n / k);
        }

        #[test]
        fn smart_budget_window_bound(
            ps in prop::collection::vec(0.0f64..=1.0, 1..600),
            capacity in 1.0f64..20.0,
            refill in 0.0f64..0.5,
            tau in 0.0f64..=1.0,
            window in 1usize..200,
        ) {
            let mut s = SmartSampler::new(SmartParams { tau, capacity, refill }, 0.5).unwrap();
            let inspected: Vec<bool> = ps.iter().map(|&p| {
                let d = s.judge(&pred(p));
                assert!(d.is_consistent());
                let b = s.bucket();
                assert!(b.tokens() >= 0.0 && b.tokens() <= b.capacity());
                d.is_inspect()
            }).collect();
            let bound = capacity + refill * window as f64;
            for w in inspected.windows(window.min(inspected.len())) {
                prop_assert!(w.iter().filter(|x| **x).count() as f64 <= bound + 1e-9);
            }
        }

        #[test]
        fn smart_flags_defects_when_funded(p in 0.5f64..=1.0, tokens in 1.0f64..10.0, tau in 0.0f64..=1.0) {
            let mut s = SmartSampler::new(SmartParams { tau, capacity: 10.0, refill: 0.0 }, 0.5).unwrap();
            while s.bucket().tokens() > tokens {
                s.bucket_mut().try_take();
            }
            if s.bucket().tokens() >= 1.0 {
                prop_assert_eq!(s.judge(&pred(p)), Decision::inspect(Reason::PredictedDefect));
            }
        }

        #[test]
        fn random_reasons_consistent(seed in any::<u64>(), rate in 0.0f64..=1.0) {
            let mut s = RandomSampler::new(rate, SimRng::seed_from_u64(seed)).unwrap();
            prop_assert!(run(&mut s, 200).iter().all(Decision::is_consistent));
        }
    }
}
