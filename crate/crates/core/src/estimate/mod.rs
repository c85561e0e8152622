//! Estimators built on simulated or loaded panels.

mod correlate;
mod covariates;
mod io;
mod iv;
mod late;
mod mixing;
mod partial;
mod varying;

pub use correlate::{
    iv_margin_weights, ols_correlate_profile, ols_speed_fit, weighted_ols_profile, CommonKappaFit, MarginWeights,
    OlsPaths, OlsRecord, OlsSpeedFit, WolsRecord, WolsResult,
};
pub use covariates::{CovariateSpec, GroupColumn};
pub use io::{fit_summary, parse_fit_summary, read_estimates_csv, write_estimates_csv};
pub use iv::{
    experience_profile, first_stage, flatness_test, wald_at, BootstrapDraws, EstimatorTag, ExperienceEstimates,
    ExperienceRecord, FirstStageResult, FlatnessTest, ProfileOptions, ProfilePoint,
};
pub use late::{late_learning_fit, late_profile, LateFit, LateProfile};
pub use mixing::{fit_mixing, LambdaSource, MixingFit, MixingOptions, NllsWeighting};
pub use partial::{partial_bounds, partial_bounds_with_transparent, partial_point_id, PartialIdMode, PartialIdResult};
pub use varying::{joint_fit, sequential_fit, JointFit, SequentialFit};
