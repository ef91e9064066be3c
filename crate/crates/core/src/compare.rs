//! Multi-seed strategy comparison.

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::RunReport;
use crate::rng::replication_seed;
use crate::runner::run;
use crate::strategy::StrategyKind;

/// Per-run figures kept for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: StrategyKind,
    pub replication: u32,
    pub seed: u64,
    pub inspections: u64,
    pub labels: u64,
    pub nok_labels: u64,
    pub balance: Option<f64>,
    pub final_balanced_accuracy: Option<f64>,
    pub total_cost: f64,
    /// Mean over detected faults.
    pub mean_latency: Option<f64>,
    pub undetected_faults: usize,
    pub quality_ratio: f64,
    pub scrap_run_total: u64,
    /// Accuracy curve as (labels collected, balanced accuracy).
    pub curve: Vec<(u64, Option<f64>)>,
    /// Per-fault latency, `None` when undetected.
    pub latencies: Vec<Option<u64>>,
}

impl ComparisonRow {
    pub fn from_report(report: &RunReport, replication: u32) -> Self {
        let detected: Vec<u64> = report.latencies.iter().filter_map(|l| l.parts()).collect();
        let oee = report.oee_proxy();
        ComparisonRow {
            strategy: report.strategy,
            replication,
            seed: report.seed,
            inspections: report.totals.inspections,
            labels: report.labels.total,
            nok_labels: report.labels.nok,
            balance: report.dataset_balance(),
            final_balanced_accuracy: report.final_balanced_accuracy(),
            total_cost: report.total_cost(),
            mean_latency: mean(detected.iter().map(|&n| n as f64)),
            undetected_faults: report.latencies.len() - detected.len(),
            quality_ratio: oee.quality_ratio,
            scrap_run_total: oee.scrap_run_total,
            curve: report
                .curve
                .iter()
                .map(|c| (c.labels, c.balanced_accuracy))
                .collect(),
            latencies: report.latencies.iter().map(|l| l.parts()).collect(),
        }
    }
}

/// Mean and sample standard deviation; `None` for an empty sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        let m = mean(v.iter().copied())?;
        let std = if n > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean: m, std, n })
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyAggregate {
    pub strategy: StrategyKind,
    pub runs: usize,
    pub final_balanced_accuracy: Option<Stat>,
    pub labels: Option<Stat>,
    pub inspections: Option<Stat>,
    pub total_cost: Option<Stat>,
    pub balance: Option<Stat>,
    pub mean_latency: Option<Stat>,
    pub quality_ratio: Option<Stat>,
    pub scrap_run_total: Option<Stat>,
    /// Checkpoint-wise mean of (labels collected, balanced accuracy).
    pub mean_curve: Vec<(f64, f64)>,
}

impl StrategyAggregate {
    fn from_rows(strategy: StrategyKind, rows: &[&ComparisonRow]) -> Self {
        let stat =
            |f: &dyn Fn(&ComparisonRow) -> Option<f64>| Stat::of(rows.iter().filter_map(|r| f(r)));
        let points = rows.iter().map(|r| r.curve.len()).min().unwrap_or(0);
        let mean_curve = (0..points)
            .filter_map(|i| {
                let labels = mean(rows.iter().map(|r| r.curve[i].0 as f64))?;
                let acc = mean(rows.iter().filter_map(|r| r.curve[i].1))?;
                Some((labels, acc))
            })
            .collect();
        StrategyAggregate {
            strategy,
            runs: rows.len(),
            final_balanced_accuracy: stat(&|r| r.final_balanced_accuracy),
            labels: stat(&|r| Some(r.labels as f64)),
            inspections: stat(&|r| Some(r.inspections as f64)),
            total_cost: stat(&|r| Some(r.total_cost)),
            balance: stat(&|r| r.balance),
            mean_latency: stat(&|r| r.mean_latency),
            quality_ratio: stat(&|r| Some(r.quality_ratio)),
            scrap_run_total: stat(&|r| Some(r.scrap_run_total as f64)),
            mean_curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    /// Ordered by strategy (as requested) then replication.
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<StrategyAggregate>,
}

impl ComparisonSummary {
    pub fn from_rows(strategies: &[StrategyKind], mut rows: Vec<ComparisonRow>) -> Self {
        let rank = |k: StrategyKind| {
            strategies
                .iter()
                .position(|s| *s == k)
                .unwrap_or(usize::MAX)
        };
        rows.sort_by_key(|r| (rank(r.strategy), r.replication));
        let aggregates = strategies
            .iter()
            .map(|&k| {
                let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.strategy == k).collect();
                StrategyAggregate::from_rows(k, &mine)
            })
            .collect();
        ComparisonSummary { rows, aggregates }
    }

    pub fn aggregate(&self, strategy: StrategyKind) -> Option<&StrategyAggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }

    pub fn rows_for(&self, strategy: StrategyKind) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }
}

/// Runs every strategy on replications `0..replications`, seeding
/// replication `i` with `replication_seed(config.seed, i)`. Runs execute in
/// parallel; the result does not depend on scheduling.
pub fn compare(
    config: &ScenarioConfig,
    strategies: &[StrategyKind],
    replications: u32,
) -> Result<ComparisonSummary> {
    if replications < 1 {
        return Err(Error::Usage("at least one replication is required".into()));
    }
    if strategies.is_empty() {
        return Err(Error::Usage("at least one strategy is required".into()));
    }
    config.validate()?;
    let jobs: Vec<(StrategyKind, u32)> = strategies
        .iter()
        .flat_map(|&k| (0..replications).map(move |i| (k, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(kind, i)| {
            let seed = replication_seed(config.seed, i as u64);
            run(config, kind, seed)
                .map(|out| ComparisonRow::from_report(&out.report, i))
                .map_err(|e| Error::Run {
                    strategy: kind.name().to_string(),
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonSummary::from_rows(strategies, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_basics() {
        let s = Stat::of([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of([5.0]).unwrap().std, 0.0);
        assert!(Stat::of(std::iter::empty()).is_none());
    }
}
