//! Experiment runner for the employer-learning model: configuration,
//! seeded Monte Carlo replications and report rendering.

pub mod config;
pub mod experiment;
pub mod replicate;
pub mod report;

use emplearn::error::ErrorKind;

pub use config::{ConfigError, ExperimentConfig};

/// Exit status for a failed command: 2 for configuration problems, 3 for
/// relevance or identification failures, 4 for numerical failures, 1 for
/// anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<emplearn::Error>() {
            return match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Identification => 3,
                ErrorKind::Numerical => 4,
                ErrorKind::Io => 1,
            };
        }
    }
    1
}
