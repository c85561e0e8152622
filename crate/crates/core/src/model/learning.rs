use crate::error::{invalid, Error, Result};

/// Prior and noise variances of the employer's ability signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub sigma0_sq: f64,
    pub sigma_eps_sq: f64,
}

impl LearningParams {
    pub fn new(sigma0_sq: f64, sigma_eps_sq: f64) -> Result<Self> {
        kappa(sigma0_sq, sigma_eps_sq)?;
        Ok(Self { sigma0_sq, sigma_eps_sq })
    }

    /// Signal-to-total variance ratio.
    pub fn kappa(&self) -> f64 {
        self.sigma0_sq / (self.sigma0_sq + self.sigma_eps_sq)
    }
}

/// Speed of learning `σ₀² / (σ₀² + σ_ε²)`.
pub fn kappa(sigma0_sq: f64, sigma_eps_sq: f64) -> Result<f64> {
    if !(sigma_eps_sq > 0.0) || !sigma_eps_sq.is_finite() {
        return Err(invalid(format!("noise variance must be positive, got {sigma_eps_sq}")));
    }
    if !(sigma0_sq >= 0.0) || !sigma0_sq.is_finite() {
        return Err(invalid(format!("prior variance must be nonnegative, got {sigma0_sq}")));
    }
    Ok(sigma0_sq / (sigma0_sq + sigma_eps_sq))
}

/// Weight on the schooling-based prior after `t` output signals.
///
/// Experience is a count, so negative values are ruled out by the type.
pub fn theta(kappa: f64, t: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(invalid(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    Ok(learning_weight(kappa, t))
}

/// `theta` without validation, for inner loops that already checked `kappa`.
pub(crate) fn learning_weight(kappa: f64, t: usize) -> f64 {
    if t == 0 {
        return 1.0;
    }
    (1.0 - kappa) / (1.0 + (t as f64 - 1.0) * kappa)
}

/// Posterior mean of ability: `θ_t·prior + (1−θ_t)·signal_mean`.
pub fn posterior_ability(
    prior_mean: f64,
    signal_mean: Option<f64>,
    t: usize,
    kappa: f64,
) -> Result<f64> {
    let w = theta(kappa, t)?;
    if t == 0 {
        return Ok(prior_mean);
    }
    let xbar = signal_mean
        .ok_or_else(|| Error::InvalidInput(format!("{t} signals observed but no signal mean")))?;
    Ok(w * prior_mean + (1.0 - w) * xbar)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorVariance {
    /// Posterior variance of ability after `t` signals.
    pub ability: f64,
    /// Variance of the skill component of log productivity, `λ_t²(ability + σ_ε²)`.
    pub wage_term: f64,
}

pub fn posterior_variance(
    learning: &LearningParams,
    t: usize,
    lambda_t: f64,
) -> Result<PosteriorVariance> {
    kappa(learning.sigma0_sq, learning.sigma_eps_sq)?;
    let ability = if learning.sigma0_sq == 0.0 {
        0.0
    } else {
        let (s0, se) = (learning.sigma0_sq, learning.sigma_eps_sq);
        s0 * se / (se + t as f64 * s0)
    };
    Ok(PosteriorVariance {
        ability,
        wage_term: lambda_t * lambda_t * (ability + learning.sigma_eps_sq),
    })
}
