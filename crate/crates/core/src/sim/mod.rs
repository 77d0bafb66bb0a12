//! Simulation: data-generating processes, Monte Carlo truth, replication
//! studies and the consistency demonstration.

pub mod figure;
pub mod scenario;
pub mod study;
pub mod truth;

pub use figure::{consistency_demo, ConsistencyDemo, FigureRow};
pub use scenario::{expit, generate, Scenario};
pub use study::{run_study, EstimandKind, Interval, Method, Specification, StudyConfig, StudyReport};
pub use truth::{monte_carlo_truth, Truth};
