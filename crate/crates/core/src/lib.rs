//! Production-line quality-inspection simulator with pluggable sampling
//! strategies, including model-driven active sampling.
//!
//! The main entry points are [`runner::run`] for a single seeded run and
//! [`compare::compare`] for multi-seed comparisons across strategies.

pub mod compare;
pub mod config;
pub mod error;
pub mod lab;
pub mod learner;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod strategy;

pub use compare::{compare, ComparisonRow, ComparisonSummary, StrategyAggregate};
pub use config::ScenarioConfig;
pub use error::{Error, Result, ValidationErrors};
pub use lab::{InspectionResult, InspectionTicket, Lab};
pub use learner::{Hyperparameters, LabeledSample, Model, Prediction};
pub use metrics::{CostModel, Event, Latency, RunReport};
pub use runner::{run, RunOutput};
pub use sim::{FaultEvent, Label, Part, ProcessParameters, ProcessState, Regime};
pub use strategy::{Decision, Reason, SamplingStrategy, StrategyKind, Verdict};
