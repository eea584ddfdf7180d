//! Online validation: randomized assignment, fixed-horizon and sequential
//! analysis, regression adjustment, exposure filtering.

pub mod abtest;
pub mod assign;
pub mod cuped;
pub mod exposure;
pub mod sequential;
pub mod welch;

pub use abtest::{run_abtest, AbConfig, AbEngine, ExperimentResult, MetricEstimate, Method};
pub use assign::assign;
pub use cuped::{cuped_adjust, CupedResult};
pub use exposure::{exposure_filter, AnalysisRow, ExposureLevel, FilteredSet};
pub use sequential::{sequential_cs, ConfidenceSequence, SequentialTrajectory, TrajectoryPoint};
pub use welch::{welch_t, WelchResult};
