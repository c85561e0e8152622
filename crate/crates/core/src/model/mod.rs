//! Closed forms of the learning model: Kalman weights, posteriors, the wage
//! and productivity equations, and the private/social split of the return
//! to schooling.

mod learning;
mod returns;
mod structure;
mod wage;

pub use learning::{
    kappa, posterior_ability, posterior_variance, theta, LearningParams, PosteriorVariance,
};
pub use returns::{
    adjustment_term, private_return, social_return, ReturnsDecomposition, ReturnsRecord,
};
pub use structure::{
    conditional_prior, Calibration, ConditionalPrior, ExperienceBaseline, HiddenCorrelate,
    InformationRegime, ObservedCorrelate, SchoolingEquation, SkillPriceProfile, StructuralParams,
};
pub use wage::{log_productivity, log_wage, WageSetter};

pub(crate) use learning::learning_weight;
