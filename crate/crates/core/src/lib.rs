//! Relaxed fixed-point flows `x' = λ(t) (T(x) - x)` for nonexpansive `T`,
//! their Krasnoselskii-Mann discretisation, and numerical checks of the
//! regularity-driven convergence rates.

pub mod certify;
pub mod error;
pub mod fixset;
pub mod flow;
pub mod functions;
pub mod ode;
pub mod operators;
pub mod point;
pub mod rates;
pub mod regularity;
pub mod sampling;
pub mod scenario;
pub mod schedule;
pub mod sets;
pub mod verify;

pub use error::{Error, Result};
pub use fixset::{distance_to_fix, dykstra_project, residual, DistanceResult, FixSetOracle};
pub use flow::{
    integrate_flow, km_iterate, km_iterate_sequence, sample_metrics, IntegratorConfig, Method,
    Mode, Sampling, Trajectory, TrajectorySample,
};
pub use functions::SimpleFunction;
pub use operators::{Operator, OperatorMeta, OperatorSpec};
pub use point::Point;
pub use schedule::LambdaSchedule;
pub use sets::PrimitiveSet;
pub use rates::{
    check_hoelder_rate_bound, check_linear_rate_bound, fit_decay, select_model,
    verify_comparison_lemmas, BoundCheck, FitOutcome, Metric, Model, RateFit,
};
pub use regularity::{
    check_avg_inequality, check_combination_bound, check_composition_bound,
    check_core_identities, check_descent, estimate_collection_regularity,
    estimate_operator_regularity, CollectionEstimate, InequalityReport, RegularityEstimate,
    RegularityMode,
};
pub use sampling::Region;
pub use scenario::{ScenarioConfig, ScenarioReport, ScenarioRun};
