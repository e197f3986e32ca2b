//! Trace-driven simulation harness.
//!
//! Pipeline: ingest or synthesize an encounter trace, discretize it into
//! fixed-length sharing intervals, estimate a per-group meeting-probability
//! matrix from deadline-sized windows, pick study groups by their
//! expectation deviation, then replay caching strategies over each window
//! and report mean realized cost per strategy and deadline.

pub mod estimate;
pub mod experiment;
pub mod replay;
pub mod trace;

pub use estimate::{estimate_probabilities, expectation_deviation, select_groups};
pub use experiment::{
    run_experiment, CostReport, CostRow, ExperimentConfig, GroupMode, Strategy,
};
pub use replay::{copcash, replay, target_set, target_user, SharingMode};
pub use trace::{
    generate_bernoulli_trace, intervalize, ContactEvent, ContactKind, EncounterTrace,
    IntervalizedTrace,
};
