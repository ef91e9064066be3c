//! One simulated production run: commissioning, pretraining, then the
//! per-part predict / decide / inspect / retrain loop.
//!
//! Event ordering per production part `t`:
//!
//! 1. `FaultOnset` for faults starting at `t`, then `PartProduced`
//! 2. prediction and `Decision`; `Submitted` if inspected
//! 3. lab results due at `t` (`ResultReturned`), then one `ModelRetrained`
//!    if any arrived
//! 4. `EvalCheckpoint` when `(t + 1) % cadence == 0` and after the last part
//!
//! Commissioning force-inspects parts `0..pretrain_size`; production waits
//! for those results, so their return times can exceed the index of the
//! next produced part. Results still in the lab at the horizon are flushed
//! and logged but not trained on.

use std::collections::HashMap;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lab::{InspectionResult, Lab};
use crate::learner::{LabeledSample, Model};
use crate::metrics::{evaluate_checkpoint, Event, RunReport};
use crate::rng::{stream_rng, Stream};
use crate::sim::{eval_stream, part_features, Part, ProcessState};
use crate::strategy::{Decision, Observation, Reason, SamplingStrategy, StrategyKind};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    /// Model at the horizon.
    pub model: Model,
}

struct Loop<'c> {
    config: &'c ScenarioConfig,
    events: Vec<Event>,
    lab: Lab,
    /// Features of parts waiting in the lab.
    pending: HashMap<u64, Vec<f64>>,
    labels: u64,
}

impl Loop<'_> {
    fn produce(&mut self, part: &Part) {
        let t = part.index;
        for (i, f) in self.config.faults.iter().enumerate() {
            if f.onset == t {
                self.events.push(Event::FaultOnset { t, fault: i });
            }
        }
        self.events.push(Event::PartProduced {
            t,
            variant: part.variant,
            defective: part.true_label().is_defect(),
        });
    }

    fn submit(&mut self, part: &Part, features: Vec<f64>) -> Result<()> {
        let ticket = self.lab.submit(part, part.index)?;
        self.events.push(Event::Submitted {
            t: part.index,
            part: part.index,
            due: ticket.due,
            destructive: ticket.destructive,
        });
        self.pending.insert(part.index, features);
        Ok(())
    }

    fn receive(&mut self, results: &[InspectionResult]) -> Result<Vec<LabeledSample>> {
        let mut batch = Vec::with_capacity(results.len());
        for r in results {
            self.events.push(Event::ResultReturned {
                t: r.returned_at,
                part: r.part,
                submitted_at: r.submitted_at,
                label: r.label,
                destroyed: r.destroyed,
            });
            let features = self
                .pending
                .remove(&r.part)
                .ok_or_else(|| Error::Internal(format!("lab returned unknown part {}", r.part)))?;
            batch.push(LabeledSample::new(features, r.label, r.returned_at));
            self.labels += 1;
        }
        Ok(batch)
    }

    fn checkpoint(&mut self, t: u64, model: &Model, eval: &[LabeledSample]) -> Result<()> {
        self.events.push(Event::EvalCheckpoint {
            t,
            labels: self.labels,
            balanced_accuracy: evaluate_checkpoint(model, eval)?,
        });
        Ok(())
    }
}

/// Runs `strategy` on the scenario with `seed`. Fully determined by
/// `(config, strategy, seed)`.
pub fn run(config: &ScenarioConfig, strategy: StrategyKind, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    let mut process = ProcessState::init(config, seed);
    let mut sampler = strategy.build(config, stream_rng(seed, Stream::Strategy))?;
    let mut learner_rng = stream_rng(seed, Stream::Learner);
    let eval = eval_stream(config, seed, config.evaluation.stream_size);
    let mut model = Model::new(config.feature_dim(), config.learner.hyper);
    let mut lp = Loop {
        config,
        events: Vec::with_capacity(2 * config.horizon as usize + 64),
        lab: Lab::new(config.lab.delay, config.lab.destructive),
        pending: HashMap::new(),
        labels: 0,
    };

    // Commissioning.
    let pretrain = config.learner.pretrain_size;
    let mut last = 0;
    for _ in 0..pretrain {
        let part = process
            .next_part(config)
            .ok_or_else(|| Error::Internal("stream ended during commissioning".into()))?;
        lp.produce(&part);
        lp.events.push(Event::Decision {
            t: part.index,
            decision: Decision::inspect(Reason::Commissioning),
        });
        let features = part_features(&part, config);
        lp.submit(&part, features)?;
        last = part.index;
    }
    let results = lp.lab.collect_due(last + config.lab.delay);
    let seed_data = lp.receive(&results)?;
    let report = model.pretrain(&seed_data, config.learner.pretrain_epochs, &mut learner_rng)?;
    let ready = last + config.lab.delay;
    if let Some(message) = report.warning {
        lp.events.push(Event::Warning { t: ready, message });
    }
    lp.events.push(Event::ModelRetrained {
        t: ready,
        batch: seed_data.len(),
        samples_seen: model.samples_seen(),
    });
    lp.checkpoint(pretrain, &model, &eval)?;

    // Production.
    let cadence = config.evaluation.cadence;
    let mut last_checkpoint = pretrain;
    while let Some(part) = process.next_part(config) {
        let t = part.index;
        lp.produce(&part);
        let features = part_features(&part, config);
        let prediction = model.predict(&features)?;
        let decision = sampler.decide(&Observation {
            index: t,
            params: part.params.as_slice(),
            prediction: &prediction,
        })?;
        lp.events.push(Event::Decision { t, decision });
        if decision.is_inspect() {
            lp.submit(&part, features)?;
        }
        let results = lp.lab.collect_due(t);
        if !results.is_empty() {
            deliver(sampler.as_mut(), &results)?;
            let batch = lp.receive(&results)?;
            let update = model.update(&batch, &mut learner_rng)?;
            for r in update.rejected {
                lp.events.push(Event::Warning {
                    t,
                    message: format!(
                        "rejected sample from part {}: {}",
                        results[r.position].part, r.reason
                    ),
                });
            }
            lp.events.push(Event::ModelRetrained {
                t,
                batch: batch.len(),
                samples_seen: model.samples_seen(),
            });
        }
        if (t + 1) % cadence == 0 {
            lp.checkpoint(t, &model, &eval)?;
            last_checkpoint = t;
        }
    }
    let end = config.horizon - 1;
    if last_checkpoint != end && end >= pretrain {
        lp.checkpoint(end, &model, &eval)?;
    }

    let leftovers = lp.lab.flush();
    deliver(sampler.as_mut(), &leftovers)?;
    lp.receive(&leftovers)?;

    let grace = config.lab.delay + config.max_interval();
    let report = RunReport::from_events(
        strategy,
        seed,
        lp.events,
        config.faults.clone(),
        config.costs,
        grace,
    );
    Ok(RunOutput { report, model })
}

fn deliver(sampler: &mut dyn SamplingStrategy, results: &[InspectionResult]) -> Result<()> {
    // Commissioning parts were never the strategy's.
    results.iter().try_for_each(|r| sampler.on_label(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Regime;

    fn small() -> ScenarioConfig {
        let mut regime = Regime::constant_rate(0, 3, 0.1);
        regime.defect_weights = vec![1.5, -1.0, 0.5];
        let mut cfg = ScenarioConfig::single_regime(regime, 3000);
        cfg.evaluation.stream_size = 400;
        cfg.evaluation.cadence = 500;
        cfg.lab.delay = 7;
        cfg.strategies.random.rate = 0.05;
        cfg
    }

    #[test]
    fn deterministic() {
        let cfg = small();
        for kind in StrategyKind::ALL {
            let a = run(&cfg, kind, 3).unwrap();
            let b = run(&cfg, kind, 3).unwrap();
            assert_eq!(a.report, b.report);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn zero_rate_random_inspects_only_commissioning() {
        let mut cfg = small();
        cfg.strategies.random.rate = 0.0;
        let out = run(&cfg, StrategyKind::Random, 1).unwrap();
        assert_eq!(out.report.totals.inspections, cfg.learner.pretrain_size);
    }

    #[test]
    fn curve_starts_after_pretraining() {
        let cfg = small();
        let out = run(&cfg, StrategyKind::Smart, 2).unwrap();
        let curve = &out.report.curve;
        assert_eq!(curve[0].t, cfg.learner.pretrain_size);
        assert_eq!(curve[0].labels, cfg.learner.pretrain_size);
        assert_eq!(curve.last().unwrap().t, cfg.horizon - 1);
        assert!(curve.windows(2).all(|w| w[0].labels <= w[1].labels));
    }

    #[test]
    fn every_submission_returns() {
        let cfg = small();
        let out = run(&cfg, StrategyKind::Periodic, 4).unwrap();
        let r = &out.report;
        assert_eq!(r.labels.total, r.totals.inspections);
    }
}
