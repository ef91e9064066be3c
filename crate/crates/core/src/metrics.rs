//! Run accounting and evaluation.
//!
//! The event log is the source of truth: every aggregate on a
//! [`RunReport`] is derived from it by [`RunReport::from_events`].

use crate::config::MIN_EVAL_STREAM;
use crate::error::{Error, Result};
use crate::learner::{LabeledSample, Model};
use crate::sim::{FaultEvent, Label};
use crate::strategy::{Decision, StrategyKind};

/// Currency per inspection, per destroyed part and per shipped defect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub inspect: f64,
    pub destroyed_part: f64,
    pub false_negative: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            inspect: 1.0,
            destroyed_part: 5.0,
            false_negative: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    PartProduced {
        t: u64,
        variant: u32,
        defective: bool,
    },
    Decision {
        t: u64,
        decision: Decision,
    },
    Submitted {
        t: u64,
        part: u64,
        due: u64,
        destructive: bool,
    },
    ResultReturned {
        t: u64,
        part: u64,
        submitted_at: u64,
        label: Label,
        destroyed: bool,
    },
    ModelRetrained {
        t: u64,
        batch: usize,
        samples_seen: u64,
    },
    FaultOnset {
        t: u64,
        fault: usize,
    },
    EvalCheckpoint {
        t: u64,
        labels: u64,
        balanced_accuracy: Option<f64>,
    },
    Warning {
        t: u64,
        message: String,
    },
}

impl Event {
    pub fn time(&self) -> u64 {
        match self {
            Event::PartProduced { t, .. }
            | Event::Decision { t, .. }
            | Event::Submitted { t, .. }
            | Event::ResultReturned { t, .. }
            | Event::ModelRetrained { t, .. }
            | Event::FaultOnset { t, .. }
            | Event::EvalCheckpoint { t, .. }
            | Event::Warning { t, .. } => *t,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Event::PartProduced { .. } => "PartProduced",
            Event::Decision { .. } => "Decision",
            Event::Submitted { .. } => "Submitted",
            Event::ResultReturned { .. } => "ResultReturned",
            Event::ModelRetrained { .. } => "ModelRetrained",
            Event::FaultOnset { .. } => "FaultOnset",
            Event::EvalCheckpoint { .. } => "EvalCheckpoint",
            Event::Warning { .. } => "Warning",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub produced: u64,
    pub inspections: u64,
    pub destroyed: u64,
    pub shipped_ok: u64,
    pub shipped_defective: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub total: u64,
    pub nok: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: u64,
    pub labels: u64,
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    Detected(u64),
    Undetected,
}

impl Latency {
    pub fn parts(self) -> Option<u64> {
        match self {
            Latency::Detected(n) => Some(n),
            Latency::Undetected => None,
        }
    }
}

impl std::fmt::Display for Latency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Latency::Detected(n) => write!(f, "{n}"),
            Latency::Undetected => f.write_str("undetected"),
        }
    }
}

/// Quality-related OEE components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OeeProxy {
    pub quality_ratio: f64,
    /// Parts produced under a fault before its detection, summed over faults.
    pub scrap_run_total: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub events: Vec<Event>,
    pub totals: Totals,
    pub labels: LabelCounts,
    pub curve: Vec<CurvePoint>,
    pub faults: Vec<FaultEvent>,
    pub latencies: Vec<Latency>,
    pub costs: CostModel,
    /// Parts after a fault's end during which a detection still counts.
    pub grace: u64,
}

impl RunReport {
    pub fn from_events(
        strategy: StrategyKind,
        seed: u64,
        events: Vec<Event>,
        faults: Vec<FaultEvent>,
        costs: CostModel,
        grace: u64,
    ) -> Self {
        let totals = totals_from_events(&events);
        let labels = label_counts(&events);
        let curve = events
            .iter()
            .filter_map(|e| match *e {
                Event::EvalCheckpoint {
                    t,
                    labels,
                    balanced_accuracy,
                } => Some(CurvePoint {
                    t,
                    labels,
                    balanced_accuracy,
                }),
                _ => None,
            })
            .collect();
        let latencies = faults
            .iter()
            .map(|f| detection_latency(&events, f, grace))
            .collect();
        RunReport {
            strategy,
            seed,
            events,
            totals,
            labels,
            curve,
            faults,
            latencies,
            costs,
            grace,
        }
    }

    pub fn total_cost(&self) -> f64 {
        total_cost(&self.totals, &self.costs)
    }

    pub fn dataset_balance(&self) -> Option<f64> {
        dataset_balance(&self.labels)
    }

    pub fn oee_proxy(&self) -> OeeProxy {
        oee_proxy(&self.totals, &self.faults, &self.latencies)
    }

    /// Last checkpoint that produced a balanced accuracy.
    pub fn final_balanced_accuracy(&self) -> Option<f64> {
        self.curve.iter().rev().find_map(|c| c.balanced_accuracy)
    }

    pub fn detection_latency(&self, fault: &FaultEvent) -> Latency {
        detection_latency(&self.events, fault, self.grace)
    }
}

pub fn totals_from_events(events: &[Event]) -> Totals {
    let mut t = Totals::default();
    let mut defective = std::collections::HashSet::new();
    let mut destroyed = std::collections::HashSet::new();
    let mut produced = Vec::new();
    for e in events {
        match *e {
            Event::PartProduced {
                t: index,
                defective: d,
                ..
            } => {
                t.produced += 1;
                produced.push(index);
                if d {
                    defective.insert(index);
                }
            }
            Event::Submitted {
                part, destructive, ..
            } => {
                t.inspections += 1;
                if destructive {
                    t.destroyed += 1;
                    destroyed.insert(part);
                }
            }
            _ => {}
        }
    }
    for part in produced {
        match (destroyed.contains(&part), defective.contains(&part)) {
            (true, _) => {}
            (false, true) => t.shipped_defective += 1,
            (false, false) => t.shipped_ok += 1,
        }
    }
    t
}

pub fn label_counts(events: &[Event]) -> LabelCounts {
    events.iter().fold(LabelCounts::default(), |mut c, e| {
        if let Event::ResultReturned { label, .. } = e {
            c.total += 1;
            if label.is_defect() {
                c.nok += 1;
            }
        }
        c
    })
}

/// `c_inspect·N_inspected + c_part·N_destroyed + c_fn·N_shipped_defective`.
pub fn total_cost(totals: &Totals, costs: &CostModel) -> f64 {
    costs.inspect * totals.inspections as f64
        + costs.destroyed_part * totals.destroyed as f64
        + costs.false_negative * totals.shipped_defective as f64
}

/// NOK share of collected labels; `None` before any label arrives.
pub fn dataset_balance(labels: &LabelCounts) -> Option<f64> {
    (labels.total > 0).then(|| labels.nok as f64 / labels.total as f64)
}

/// Parts from fault onset until the first NOK result for a part submitted at
/// or after onset comes back. Results returned after `end + grace` do not
/// count.
pub fn detection_latency(events: &[Event], fault: &FaultEvent, grace: u64) -> Latency {
    let cutoff = fault.end().saturating_add(grace);
    events
        .iter()
        .filter_map(|e| match *e {
            Event::ResultReturned {
                t,
                submitted_at,
                label: Label::Nok,
                ..
            } if submitted_at >= fault.onset && t <= cutoff => Some(t - fault.onset),
            _ => None,
        })
        .min()
        .map_or(Latency::Undetected, Latency::Detected)
}

pub fn oee_proxy(totals: &Totals, faults: &[FaultEvent], latencies: &[Latency]) -> OeeProxy {
    let quality_ratio = if totals.produced == 0 {
        1.0
    } else {
        totals.shipped_ok as f64 / totals.produced as f64
    };
    let scrap_run_total = faults
        .iter()
        .zip(latencies)
        .map(|(f, l)| l.parts().map_or(f.duration, |n| n.min(f.duration)))
        .sum();
    OeeProxy {
        quality_ratio,
        scrap_run_total,
    }
}

/// Mean of the true-positive and true-negative rates, NOK being positive.
/// `None` unless both classes occur in `actual`.
pub fn balanced_accuracy(predicted: &[Label], actual: &[Label]) -> Option<f64> {
    let (mut tp, mut pos, mut tn, mut neg) = (0u64, 0u64, 0u64, 0u64);
    for (p, a) in predicted.iter().zip(actual) {
        match a {
            Label::Nok => {
                pos += 1;
                tp += (*p == Label::Nok) as u64;
            }
            Label::Ok => {
                neg += 1;
                tn += (*p == Label::Ok) as u64;
            }
        }
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}

/// Balanced accuracy of `model` on a held-out labelled stream.
pub fn evaluate_checkpoint(model: &Model, eval: &[LabeledSample]) -> Result<Option<f64>> {
    if eval.len() < MIN_EVAL_STREAM {
        return Err(Error::Usage(format!(
            "evaluation needs at least {MIN_EVAL_STREAM} parts, got {}",
            eval.len()
        )));
    }
    let predicted = eval
        .iter()
        .map(|s| model.predict(&s.features).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let actual: Vec<Label> = eval.iter().map(|s| s.label).collect();
    Ok(balanced_accuracy(&predicted, &actual))
}
