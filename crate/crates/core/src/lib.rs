//! Simulation and analysis of Byzantine-tolerant update diffusion.
//!
//! A replica accepts an update once `t` distinct replicas have told it
//! about the update, or immediately if it belongs to the update's initial
//! set. Each round, every replica that runs the protocol pushes the
//! updates it has accepted to `F` targets chosen by a [`Protocol`].

pub mod adversary;
pub mod analysis;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod protocols;
pub mod rng;
pub mod scalar;
pub mod trace;

pub use adversary::{sample_failure_config, Behavior, FailureConfig, SpamTargeting};
pub use analysis::{counting_lower_bound, coupon_r, AnalysisError, BoundKind, BoundParams};
pub use engine::{run_trial, run_trial_with, EngineError, RecordOptions, Simulation, StopRule};
pub use metrics::{compute_delay, compute_fanin, AmortizedWindow, FanInOptions, MetricsError};
pub use model::{
    accept_rule, validate_config, AlphaRule, ConfigErrors, InvalidParameter, PerturbationConfig, Protocol, ReplicaId,
    Round, SystemConfig, UpdateId, UpdateIntro,
};
pub use protocols::{build_tree_layout, TargetSelector, TreeLayout};
pub use scalar::{Real, Scalar};
pub use trace::{read_trace, write_trace, TrialTrace};

/// Exact rational for closed-form quantities such as `R_{β,t}`.
pub type Rational = num_rational::BigRational;

pub type DelayStats = metrics::DelayStats<f64>;
pub type FanInStats = metrics::FanInStats<f64>;
pub type FanInSummary = metrics::FanInSummary<f64>;
pub type BoundReport = analysis::BoundReport<f64>;

pub type DelayStatsF32 = metrics::DelayStats<f32>;
pub type FanInStatsF32 = metrics::FanInStats<f32>;
pub type BoundReportF32 = analysis::BoundReport<f32>;
