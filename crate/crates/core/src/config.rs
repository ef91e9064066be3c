//! Scenario configuration.
//!
//! Scenarios are TOML files. Every key is documented in the README; missing
//! optional keys take the defaults defined on the types below. Loading
//! collects every problem (missing keys, wrong types, unknown keys and
//! invariant violations) before reporting, so a single run of `validate`
//! shows all of them.

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result, ValidationErrors};
use crate::learner::Hyperparameters;
use crate::metrics::CostModel;
use crate::sim::{calibrate_bias, FaultEvent, Regime, ScheduleEntry};
use crate::strategy::{PeriodicParams, RandomParams, SmartParams, SpcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabConfig {
    /// Result delay in parts.
    pub delay: u64,
    pub destructive: bool,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            delay: 20,
            destructive: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub hyper: Hyperparameters,
    /// Parts force-inspected during commissioning.
    pub pretrain_size: u64,
    pub pretrain_epochs: u32,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            hyper: Hyperparameters::default(),
            pretrain_size: 50,
            pretrain_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrategyParams {
    pub random: RandomParams,
    pub periodic: PeriodicParams,
    pub spc: SpcParams,
    pub smart: SmartParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Parts between accuracy checkpoints.
    pub cadence: u64,
    /// Held-out parts per evaluation.
    pub stream_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cadence: 1000,
            stream_size: 2000,
        }
    }
}

pub const MIN_EVAL_STREAM: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub horizon: u64,
    pub dimension: usize,
    pub regimes: Vec<Regime>,
    pub schedule: Vec<ScheduleEntry>,
    pub faults: Vec<FaultEvent>,
    pub lab: LabConfig,
    pub costs: CostModel,
    pub learner: LearnerConfig,
    pub strategies: StrategyParams,
    pub evaluation: EvalConfig,
}

impl ScenarioConfig {
    /// One regime covering `[0, horizon)` with default everything else.
    pub fn single_regime(regime: Regime, horizon: u64) -> Self {
        ScenarioConfig {
            seed: 0,
            horizon,
            dimension: regime.dim(),
            schedule: vec![ScheduleEntry {
                start: 0,
                end: horizon,
                regime: regime.id,
            }],
            regimes: vec![regime],
            faults: Vec::new(),
            lab: LabConfig::default(),
            costs: CostModel::default(),
            learner: LearnerConfig::default(),
            strategies: StrategyParams::default(),
            evaluation: EvalConfig::default(),
        }
    }

    pub fn regime(&self, id: u32) -> Option<&Regime> {
        self.regimes.iter().find(|r| r.id == id)
    }

    fn regime_slot(&self, id: u32) -> Option<usize> {
        self.regimes.iter().position(|r| r.id == id)
    }

    /// Regime id of the schedule entry covering `index`. Past the horizon the
    /// last entry's regime is returned.
    pub fn regime_id_at(&self, index: u64) -> u32 {
        let pos = self.schedule.partition_point(|e| e.end <= index);
        self.schedule
            .get(pos)
            .or_else(|| self.schedule.last())
            .map(|e| e.regime)
            .unwrap_or(self.regimes[0].id)
    }

    pub fn variant_count(&self) -> usize {
        self.regimes.len()
    }

    /// Learner feature width: parameters plus one-hot variant block.
    pub fn feature_dim(&self) -> usize {
        self.dimension + self.variant_count()
    }

    pub fn variant_one_hot(&self, id: u32) -> Vec<f64> {
        let mut v = vec![0.0; self.variant_count()];
        if let Some(slot) = self.regime_slot(id) {
            v[slot] = 1.0;
        }
        v
    }

    /// Largest sampling interval configured; part of the undetected-fault cutoff.
    pub fn max_interval(&self) -> u64 {
        self.strategies.periodic.interval
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let root: Table = match text.parse() {
            Ok(t) => t,
            Err(e) => {
                let mut errs = ValidationErrors::default();
                errs.push("<file>", format!("not valid TOML: {}", e.message()));
                return Err(Error::Validation(errs));
            }
        };
        let mut errs = ValidationErrors::default();
        let cfg = parse_root(root, &mut errs);
        if let Some(cfg) = &cfg {
            cfg.check(&mut errs);
        }
        match cfg {
            Some(cfg) if errs.is_empty() => Ok(cfg),
            _ => Err(Error::Validation(errs)),
        }
    }

    /// Re-checks all invariants on an in-memory config.
    pub fn validate(&self) -> Result<()> {
        let mut errs = ValidationErrors::default();
        self.check(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn check(&self, errs: &mut ValidationErrors) {
        let d = self.dimension;
        if self.horizon < 1 {
            errs.push("horizon", "must be at least 1");
        }
        if d < 1 {
            errs.push("dimension", "must be at least 1");
        }
        if self.regimes.is_empty() {
            errs.push("regimes", "at least one regime is required");
        }
        for (i, r) in self.regimes.iter().enumerate() {
            let key = |k: &str| format!("regimes[{i}].{k}");
            if self.regimes[..i].iter().any(|o| o.id == r.id) {
                errs.push(key("id"), format!("duplicate regime id {}", r.id));
            }
            for (name, v) in [
                ("mean", &r.mean),
                ("variance", &r.variance),
                ("defect_weights", &r.defect_weights),
                ("drift", &r.drift),
            ] {
                if v.len() != d {
                    errs.push(key(name), format!("expected {d} values, found {}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    errs.push(key(name), "values must be finite");
                }
            }
            if r.variance.iter().any(|&v| v < 0.0) {
                errs.push(key("variance"), "entries must be non-negative");
            }
            if !r.defect_bias.is_finite() {
                errs.push(key("defect_bias"), "must be finite");
            }
            if let Some(rate) = r.base_defect_rate {
                if !(0.0..=1.0).contains(&rate) {
                    errs.push(key("base_defect_rate"), "probability out of range");
                } else if rate == 0.0 || rate == 1.0 {
                    errs.push(key("base_defect_rate"), "must lie strictly between 0 and 1");
                }
            }
        }

        self.check_schedule(errs);

        for (i, f) in self.faults.iter().enumerate() {
            if f.duration < 1 {
                errs.push(format!("faults[{i}].duration"), "must be at least 1");
            }
            if !(f.logit_boost.is_finite() && f.logit_boost > 0.0) {
                errs.push(format!("faults[{i}].logit_boost"), "must be finite and > 0");
            }
            if f.onset >= self.horizon {
                errs.push(format!("faults[{i}].onset"), "must be below the horizon");
            }
        }

        for (name, c) in [
            ("costs.inspect", self.costs.inspect),
            ("costs.destroyed_part", self.costs.destroyed_part),
            ("costs.false_negative", self.costs.false_negative),
        ] {
            if !(c.is_finite() && c >= 0.0) {
                errs.push(name, "must be finite and >= 0");
            }
        }

        let h = &self.learner.hyper;
        if !(h.learning_rate.is_finite() && h.learning_rate > 0.0) {
            errs.push("learner.learning_rate", "must be finite and > 0");
        }
        if !(h.l2.is_finite() && h.l2 >= 0.0) {
            errs.push("learner.l2", "must be finite and >= 0");
        }
        if !(h.nok_weight.is_finite() && h.nok_weight >= 1.0) {
            errs.push("learner.nok_weight", "must be finite and >= 1");
        }
        probability(errs, "learner.threshold", h.threshold);
        if self.learner.pretrain_size < 1 {
            errs.push("learner.pretrain_size", "must be at least 1");
        } else if self.learner.pretrain_size > self.horizon {
            errs.push("learner.pretrain_size", "must not exceed the horizon");
        }

        let s = &self.strategies;
        probability(errs, "strategies.random.rate", s.random.rate);
        if s.periodic.interval < 1 {
            errs.push("strategies.periodic.interval", "must be at least 1");
        }
        if s.spc.calibration < 2 {
            errs.push("strategies.spc.calibration", "must be at least 2");
        }
        if s.spc.feature >= d {
            errs.push(
                "strategies.spc.feature",
                format!(
                    "feature index {} must be below dimension {d}",
                    s.spc.feature
                ),
            );
        }
        probability(errs, "strategies.smart.tau", s.smart.tau);
        probability(errs, "strategies.smart.refill", s.smart.refill);
        if !(s.smart.capacity.is_finite() && s.smart.capacity >= 1.0) {
            errs.push("strategies.smart.capacity", "must be finite and >= 1");
        }

        if self.evaluation.cadence < 1 {
            errs.push("evaluation.cadence", "must be at least 1");
        }
        if self.evaluation.stream_size < MIN_EVAL_STREAM {
            errs.push(
                "evaluation.stream_size",
                format!("must be at least {MIN_EVAL_STREAM}"),
            );
        }
    }

    fn check_schedule(&self, errs: &mut ValidationErrors) {
        if self.schedule.is_empty() {
            errs.push("schedule", "at least one range is required");
            return;
        }
        for (i, e) in self.schedule.iter().enumerate() {
            if e.start >= e.end {
                errs.push(
                    format!("schedule[{i}]"),
                    format!("empty range [{}, {})", e.start, e.end),
                );
            }
            if self.regime(e.regime).is_none() {
                errs.push(
                    format!("schedule[{i}].regime"),
                    format!("unknown regime id {}", e.regime),
                );
            }
        }
        let mut order: Vec<usize> = (0..self.schedule.len()).collect();
        order.sort_by_key(|&i| (self.schedule[i].start, self.schedule[i].end));
        if order.iter().enumerate().any(|(pos, &i)| pos != i) {
            errs.push("schedule", "ranges must be listed in increasing order");
        }
        let mut covered = 0;
        for w in order.windows(2) {
            let (a, b) = (&self.schedule[w[0]], &self.schedule[w[1]]);
            if b.start < a.end {
                errs.push(
                    "schedule",
                    format!(
                        "ranges overlap: schedule[{}] [{}, {}) and schedule[{}] [{}, {})",
                        w[0], a.start, a.end, w[1], b.start, b.end
                    ),
                );
            } else if b.start > a.end {
                errs.push(
                    "schedule",
                    format!("gap between part {} and part {}", a.end, b.start),
                );
            }
        }
        if let Some(&first) = order.first() {
            let first = &self.schedule[first];
            if first.start != 0 {
                errs.push("schedule", "ranges must start at part 0");
            }
            covered = order
                .iter()
                .map(|&i| self.schedule[i].end)
                .max()
                .unwrap_or(covered);
        }
        if covered != self.horizon {
            errs.push(
                "schedule",
                format!(
                    "ranges end at {covered} but the horizon is {}",
                    self.horizon
                ),
            );
        }
    }

    /// Serialises to the same TOML layout [`ScenarioConfig::load`] reads.
    pub fn to_toml_string(&self) -> String {
        let mut root = Table::new();
        root.insert("seed".into(), int(self.seed));
        root.insert("horizon".into(), int(self.horizon));
        root.insert("dimension".into(), int(self.dimension as u64));

        let regimes = self
            .regimes
            .iter()
            .map(|r| {
                let mut t = Table::new();
                t.insert("id".into(), int(r.id as u64));
                t.insert("mean".into(), floats(&r.mean));
                t.insert("variance".into(), floats(&r.variance));
                t.insert("defect_weights".into(), floats(&r.defect_weights));
                match r.base_defect_rate {
                    Some(rate) => t.insert("base_defect_rate".into(), Value::Float(rate)),
                    None => t.insert("defect_bias".into(), Value::Float(r.defect_bias)),
                };
                t.insert("drift".into(), floats(&r.drift));
                Value::Table(t)
            })
            .collect();
        root.insert("regimes".into(), Value::Array(regimes));

        let schedule = self
            .schedule
            .iter()
            .map(|e| {
                let mut t = Table::new();
                t.insert("start".into(), int(e.start));
                t.insert("end".into(), int(e.end));
                t.insert("regime".into(), int(e.regime as u64));
                Value::Table(t)
            })
            .collect();
        root.insert("schedule".into(), Value::Array(schedule));

        let faults = self
            .faults
            .iter()
            .map(|f| {
                let mut t = Table::new();
                t.insert("onset".into(), int(f.onset));
                t.insert("duration".into(), int(f.duration));
                t.insert("logit_boost".into(), Value::Float(f.logit_boost));
                Value::Table(t)
            })
            .collect();
        root.insert("faults".into(), Value::Array(faults));

        let mut lab = Table::new();
        lab.insert("delay".into(), int(self.lab.delay));
        lab.insert("destructive".into(), Value::Boolean(self.lab.destructive));
        root.insert("lab".into(), Value::Table(lab));

        let mut costs = Table::new();
        costs.insert("inspect".into(), Value::Float(self.costs.inspect));
        costs.insert(
            "destroyed_part".into(),
            Value::Float(self.costs.destroyed_part),
        );
        costs.insert(
            "false_negative".into(),
            Value::Float(self.costs.false_negative),
        );
        root.insert("costs".into(), Value::Table(costs));

        let h = &self.learner.hyper;
        let mut learner = Table::new();
        learner.insert("learning_rate".into(), Value::Float(h.learning_rate));
        learner.insert("l2".into(), Value::Float(h.l2));
        learner.insert("nok_weight".into(), Value::Float(h.nok_weight));
        learner.insert("threshold".into(), Value::Float(h.threshold));
        learner.insert("warmup".into(), int(h.warmup));
        learner.insert("pretrain_size".into(), int(self.learner.pretrain_size));
        learner.insert(
            "pretrain_epochs".into(),
            int(self.learner.pretrain_epochs as u64),
        );
        root.insert("learner".into(), Value::Table(learner));

        let s = &self.strategies;
        let mut strategies = Table::new();
        let mut random = Table::new();
        random.insert("rate".into(), Value::Float(s.random.rate));
        strategies.insert("random".into(), Value::Table(random));
        let mut periodic = Table::new();
        periodic.insert("interval".into(), int(s.periodic.interval));
        strategies.insert("periodic".into(), Value::Table(periodic));
        let mut spc = Table::new();
        spc.insert("calibration".into(), int(s.spc.calibration));
        spc.insert("feature".into(), int(s.spc.feature as u64));
        strategies.insert("spc".into(), Value::Table(spc));
        let mut smart = Table::new();
        smart.insert("tau".into(), Value::Float(s.smart.tau));
        smart.insert("capacity".into(), Value::Float(s.smart.capacity));
        smart.insert("refill".into(), Value::Float(s.smart.refill));
        strategies.insert("smart".into(), Value::Table(smart));
        root.insert("strategies".into(), Value::Table(strategies));

        let mut eval = Table::new();
        eval.insert("cadence".into(), int(self.evaluation.cadence));
        eval.insert(
            "stream_size".into(),
            int(self.evaluation.stream_size as u64),
        );
        root.insert("evaluation".into(), Value::Table(eval));

        toml::to_string(&root).expect("plain tables always serialise")
    }
}

fn probability(errs: &mut ValidationErrors, key: &str, p: f64) {
    if !(0.0..=1.0).contains(&p) {
        errs.push(key, format!("probability out of range (got {p})"));
    }
}

fn int(v: u64) -> Value {
    Value::Integer(v as i64)
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

/// Reads keys out of one TOML table, recording problems under a dotted path.
/// Keys are removed as they are read so leftovers can be reported as unknown.
struct Section<'e> {
    path: String,
    table: Table,
    errs: &'e mut ValidationErrors,
}

impl<'e> Section<'e> {
    fn new(path: impl Into<String>, table: Table, errs: &'e mut ValidationErrors) -> Self {
        Section {
            path: path.into(),
            table,
            errs,
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn mismatch(&mut self, k: &str, want: &str, got: &Value) {
        let key = self.key(k);
        self.errs.push(
            key,
            format!("type mismatch: expected {want}, found {}", got.type_str()),
        );
    }

    fn missing(&mut self, k: &str) {
        let key = self.key(k);
        self.errs.push(key, "missing key");
    }

    fn uint(&mut self, k: &str) -> Option<u64> {
        match self.table.remove(k)? {
            Value::Integer(i) if i >= 0 => Some(i as u64),
            Value::Integer(_) => {
                let key = self.key(k);
                self.errs.push(key, "must be a non-negative integer");
                None
            }
            other => {
                self.mismatch(k, "integer", &other);
                None
            }
        }
    }

    fn float(&mut self, k: &str) -> Option<f64> {
        match self.table.remove(k)? {
            Value::Float(f) => Some(f),
            Value::Integer(i) => Some(i as f64),
            other => {
                self.mismatch(k, "number", &other);
                None
            }
        }
    }

    fn boolean(&mut self, k: &str) -> Option<bool> {
        match self.table.remove(k)? {
            Value::Boolean(b) => Some(b),
            other => {
                self.mismatch(k, "boolean", &other);
                None
            }
        }
    }

    fn floats(&mut self, k: &str) -> Option<Vec<f64>> {
        match self.table.remove(k)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(f) => out.push(*f),
                        Value::Integer(n) => out.push(*n as f64),
                        other => {
                            let key = format!("{}[{i}]", self.key(k));
                            self.errs.push(
                                key,
                                format!(
                                    "type mismatch: expected number, found {}",
                                    other.type_str()
                                ),
                            );
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.mismatch(k, "array of numbers", &other);
                None
            }
        }
    }

    fn table(&mut self, k: &str) -> Option<Table> {
        match self.table.remove(k)? {
            Value::Table(t) => Some(t),
            other => {
                self.mismatch(k, "table", &other);
                None
            }
        }
    }

    fn tables(&mut self, k: &str) -> Option<Vec<Table>> {
        match self.table.remove(k)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.into_iter().enumerate() {
                    match item {
                        Value::Table(t) => out.push(t),
                        other => {
                            let key = format!("{}[{i}]", self.key(k));
                            self.errs.push(
                                key,
                                format!(
                                    "type mismatch: expected table, found {}",
                                    other.type_str()
                                ),
                            );
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.mismatch(k, "array of tables", &other);
                None
            }
        }
    }

    fn sub(&mut self, k: &str) -> Section<'_> {
        let table = self.table(k).unwrap_or_default();
        let path = self.key(k);
        Section::new(path, table, self.errs)
    }

    /// Reports any keys not consumed so far.
    fn finish(self) {
        for k in self.table.keys() {
            let key = if self.path.is_empty() {
                k.clone()
            } else {
                format!("{}.{k}", self.path)
            };
            self.errs.push(key, "unknown key");
        }
    }
}

fn parse_root(root: Table, errs: &mut ValidationErrors) -> Option<ScenarioConfig> {
    let mut s = Section::new("", root, errs);
    let seed = s.uint("seed").unwrap_or(0);
    let horizon = s.uint("horizon");
    if horizon.is_none() && !s.errs.mentions("horizon") {
        s.missing("horizon");
    }
    let dimension = s.uint("dimension");
    if dimension.is_none() && !s.errs.mentions("dimension") {
        s.missing("dimension");
    }
    let d = dimension.unwrap_or(1) as usize;

    let regime_tables = s.tables("regimes");
    if regime_tables.is_none() && !s.errs.mentions("regimes") {
        s.missing("regimes");
    }
    let mut regimes = Vec::new();
    for (i, t) in regime_tables.unwrap_or_default().into_iter().enumerate() {
        let mut r = Section::new(format!("regimes[{i}]"), t, s.errs);
        let id = r.uint("id");
        if id.is_none() && !r.errs.mentions(&r.key("id")) {
            r.missing("id");
        }
        let mean = r.floats("mean").unwrap_or_else(|| vec![0.0; d]);
        let variance = r.floats("variance").unwrap_or_else(|| vec![1.0; d]);
        let defect_weights = r.floats("defect_weights").unwrap_or_else(|| vec![0.0; d]);
        let drift = r.floats("drift").unwrap_or_else(|| vec![0.0; d]);
        let bias = r.float("defect_bias");
        let rate = r.float("base_defect_rate");
        let base_defect_rate = match (bias, rate) {
            (Some(_), Some(_)) => {
                let key = r.key("defect_bias");
                r.errs
                    .push(key, "give either defect_bias or base_defect_rate, not both");
                None
            }
            (Some(_), None) => None,
            (None, rate) => Some(rate.unwrap_or(0.05)),
        };
        r.finish();
        let defect_bias = match base_defect_rate {
            Some(rate)
                if rate > 0.0
                    && rate < 1.0
                    && [&mean, &variance, &defect_weights]
                        .iter()
                        .all(|v| v.len() == d) =>
            {
                calibrate_bias(&defect_weights, &mean, &variance, rate)
            }
            _ => bias.unwrap_or(0.0),
        };
        regimes.push(Regime {
            id: id.unwrap_or(0) as u32,
            mean,
            variance,
            defect_weights,
            defect_bias,
            base_defect_rate,
            drift,
        });
    }

    let schedule = match s.tables("schedule") {
        Some(entries) => entries
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let mut e = Section::new(format!("schedule[{i}]"), t, s.errs);
                let start = e.uint("start");
                let end = e.uint("end");
                let regime = e.uint("regime");
                for (k, v) in [("start", start), ("end", end), ("regime", regime)] {
                    if v.is_none() && !e.errs.mentions(&e.key(k)) {
                        e.missing(k);
                    }
                }
                e.finish();
                ScheduleEntry {
                    start: start.unwrap_or(0),
                    end: end.unwrap_or(0),
                    regime: regime.unwrap_or(0) as u32,
                }
            })
            .collect(),
        None if regimes.len() == 1 => vec![ScheduleEntry {
            start: 0,
            end: horizon.unwrap_or(1),
            regime: regimes[0].id,
        }],
        None => {
            if regimes.len() > 1 {
                s.errs.push(
                    "schedule",
                    "required when more than one regime is configured",
                );
            }
            Vec::new()
        }
    };

    let faults = s
        .tables("faults")
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut f = Section::new(format!("faults[{i}]"), t, s.errs);
            let onset = f.uint("onset");
            let duration = f.uint("duration");
            let boost = f.float("logit_boost");
            if onset.is_none() && !f.errs.mentions(&f.key("onset")) {
                f.missing("onset");
            }
            if duration.is_none() && !f.errs.mentions(&f.key("duration")) {
                f.missing("duration");
            }
            if boost.is_none() && !f.errs.mentions(&f.key("logit_boost")) {
                f.missing("logit_boost");
            }
            f.finish();
            FaultEvent {
                onset: onset.unwrap_or(0),
                duration: duration.unwrap_or(1),
                logit_boost: boost.unwrap_or(1.0),
            }
        })
        .collect();

    let lab = {
        let def = LabConfig::default();
        let mut t = s.sub("lab");
        let lab = LabConfig {
            delay: t.uint("delay").unwrap_or(def.delay),
            destructive: t.boolean("destructive").unwrap_or(def.destructive),
        };
        t.finish();
        lab
    };

    let costs = {
        let def = CostModel::default();
        let mut t = s.sub("costs");
        let costs = CostModel {
            inspect: t.float("inspect").unwrap_or(def.inspect),
            destroyed_part: t.float("destroyed_part").unwrap_or(def.destroyed_part),
            false_negative: t.float("false_negative").unwrap_or(def.false_negative),
        };
        t.finish();
        costs
    };

    let learner = {
        let def = LearnerConfig::default();
        let mut t = s.sub("learner");
        let learner = LearnerConfig {
            hyper: Hyperparameters {
                learning_rate: t.float("learning_rate").unwrap_or(def.hyper.learning_rate),
                l2: t.float("l2").unwrap_or(def.hyper.l2),
                nok_weight: t.float("nok_weight").unwrap_or(def.hyper.nok_weight),
                threshold: t.float("threshold").unwrap_or(def.hyper.threshold),
                warmup: t.uint("warmup").unwrap_or(def.hyper.warmup),
            },
            pretrain_size: t.uint("pretrain_size").unwrap_or(def.pretrain_size),
            pretrain_epochs: t
                .uint("pretrain_epochs")
                .map(|e| e.min(u32::MAX as u64) as u32)
                .unwrap_or(def.pretrain_epochs),
        };
        t.finish();
        learner
    };

    let strategies = {
        let def = StrategyParams::default();
        let mut t = s.sub("strategies");
        let random = {
            let mut r = t.sub("random");
            let p = RandomParams {
                rate: r.float("rate").unwrap_or(def.random.rate),
            };
            r.finish();
            p
        };
        let periodic = {
            let mut r = t.sub("periodic");
            let p = PeriodicParams {
                interval: r.uint("interval").unwrap_or(def.periodic.interval),
            };
            r.finish();
            p
        };
        let spc = {
            let mut r = t.sub("spc");
            let p = SpcParams {
                calibration: r.uint("calibration").unwrap_or(def.spc.calibration),
                feature: r
                    .uint("feature")
                    .map(|f| f as usize)
                    .unwrap_or(def.spc.feature),
            };
            r.finish();
            p
        };
        let smart = {
            let mut r = t.sub("smart");
            let p = SmartParams {
                tau: r.float("tau").unwrap_or(def.smart.tau),
                capacity: r.float("capacity").unwrap_or(def.smart.capacity),
                refill: r.float("refill").unwrap_or(def.smart.refill),
            };
            r.finish();
            p
        };
        t.finish();
        StrategyParams {
            random,
            periodic,
            spc,
            smart,
        }
    };

    let evaluation = {
        let def = EvalConfig::default();
        let mut t = s.sub("evaluation");
        let e = EvalConfig {
            cadence: t.uint("cadence").unwrap_or(def.cadence),
            stream_size: t
                .uint("stream_size")
                .map(|n| n as usize)
                .unwrap_or(def.stream_size),
        };
        t.finish();
        e
    };

    s.finish();

    let (horizon, dimension) = (horizon?, dimension?);
    Some(ScenarioConfig {
        seed,
        horizon,
        dimension: dimension as usize,
        regimes,
        schedule,
        faults,
        lab,
        costs,
        learner,
        strategies,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 1000
dimension = 2

[[regimes]]
id = 0
"#;

    fn errors(text: &str) -> ValidationErrors {
        match ScenarioConfig::from_toml_str(text) {
            Err(Error::Validation(e)) => e,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.horizon, 1000);
        assert_eq!(
            cfg.schedule,
            vec![ScheduleEntry {
                start: 0,
                end: 1000,
                regime: 0
            }]
        );
        assert_eq!(cfg.regimes[0].variance, vec![1.0, 1.0]);
        assert_eq!(cfg.regimes[0].base_defect_rate, Some(0.05));
        assert!((cfg.regimes[0].defect_bias - crate::sim::logit(0.05)).abs() < 1e-9);
        assert_eq!(cfg.lab, LabConfig::default());
        assert_eq!(cfg.learner, LearnerConfig::default());
        assert_eq!(cfg.strategies, StrategyParams::default());
        assert_eq!(cfg.feature_dim(), 3);
    }

    #[test]
    fn overlapping_ranges_are_named() {
        let errs = errors(
            r#"
horizon = 100
dimension = 1
[[regimes]]
id = 0
[[regimes]]
id = 1
[[schedule]]
start = 0
end = 60
regime = 0
[[schedule]]
start = 50
end = 100
regime = 1
"#,
        );
        let v = errs.iter().find(|v| v.reason.contains("overlap")).unwrap();
        assert!(v.reason.contains("schedule[0] [0, 60)"));
        assert!(v.reason.contains("schedule[1] [50, 100)"));
    }

    #[test]
    fn rate_out_of_range() {
        let errs = errors(&format!("{MINIMAL}\n[strategies.random]\nrate = 1.5\n"));
        let v = errs
            .iter()
            .find(|v| v.key == "strategies.random.rate")
            .unwrap();
        assert!(v.reason.contains("probability out of range"));
    }

    #[test]
    fn all_failures_reported_at_once() {
        let errs = errors(
            r#"
dimension = "four"
bogus = 1
[[regimes]]
id = 0
[learner]
learning_rate = -1.0
[strategies.smart]
tau = 2.0
"#,
        );
        assert!(errs
            .iter()
            .any(|v| v.key == "horizon" && v.reason == "missing key"));
        assert!(errs
            .iter()
            .any(|v| v.key == "dimension" && v.reason.contains("type mismatch")));
        assert!(errs
            .iter()
            .any(|v| v.key == "bogus" && v.reason == "unknown key"));
        // Invariant checks need a parsed config, so they only appear once the
        // structural errors are fixed.
        let errs = errors(
            r#"
horizon = 100
dimension = 1
[[regimes]]
id = 0
[learner]
learning_rate = -1.0
[strategies.smart]
tau = 2.0
[strategies.spc]
feature = 3
"#,
        );
        assert_eq!(errs.len(), 3, "{errs}");
    }

    #[test]
    fn schedule_gap_and_coverage() {
        let errs = errors(
            r#"
horizon = 100
dimension = 1
[[regimes]]
id = 0
[[schedule]]
start = 0
end = 40
regime = 0
[[schedule]]
start = 50
end = 90
regime = 7
"#,
        );
        assert!(errs.mentions("gap"));
        assert!(errs.mentions("unknown regime id 7"));
        assert!(errs.mentions("horizon is 100"));
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 99
horizon = 300
dimension = 2
[[regimes]]
id = 3
mean = [1.0, -1.0]
defect_weights = [0.5, 0.25]
base_defect_rate = 0.1
[[regimes]]
id = 5
defect_bias = -2.0
drift = [0.001, 0.0]
[[schedule]]
start = 0
end = 100
regime = 3
[[schedule]]
start = 100
end = 300
regime = 5
[[faults]]
onset = 150
duration = 20
logit_boost = 3.5
[strategies.spc]
feature = 1
"#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.regime_id_at(99), 3);
        assert_eq!(cfg.regime_id_at(100), 5);
        assert_eq!(cfg.variant_one_hot(5), vec![0.0, 1.0]);
    }

    #[test]
    fn both_bias_and_rate_rejected() {
        let errs = errors(
            "horizon = 10\ndimension = 1\n[[regimes]]\nid = 0\ndefect_bias = 0.0\nbase_defect_rate = 0.1\n",
        );
        assert!(errs.mentions("not both"));
    }
}
