use super::learning::{learning_weight, posterior_variance};
use super::structure::{conditional_prior, ConditionalPrior, InformationRegime, StructuralParams};
use crate::error::{Error, Result};

/// Log productivity `λ_t(β_ws·S + β_wq·Q + A + ε) + H(t)`.
pub fn log_productivity(
    s: f64,
    a: f64,
    q: f64,
    eps: f64,
    t: usize,
    params: &StructuralParams,
) -> Result<f64> {
    let lambda = params.skill_prices.at(t)?;
    let h = params.baseline.as_slice()[t];
    Ok(lambda * (params.beta_ws * s + params.beta_wq() * q + a + eps) + h)
}

/// Wage setting for one information regime. Building the prior involves a
/// small matrix solve, so the simulator constructs this once per regime.
#[derive(Debug, Clone)]
pub struct WageSetter {
    prior: ConditionalPrior,
    kappa: f64,
    beta_ws: f64,
    beta_wq: f64,
    lambdas: Vec<f64>,
    h_tilde: Vec<f64>,
}

impl WageSetter {
    pub fn new(params: &StructuralParams, regime: InformationRegime) -> Result<Self> {
        let prior = conditional_prior(params, regime)?;
        let learning = params.learning(regime)?;
        let lambdas = params.skill_prices.as_slice().to_vec();
        let h = params.baseline.as_slice();
        let h_tilde = if params.baseline.include_variance_term {
            h.iter()
                .zip(&lambdas)
                .enumerate()
                .map(|(t, (h, l))| Ok(h + 0.5 * posterior_variance(&learning, t, *l)?.wage_term))
                .collect::<Result<Vec<_>>>()?
        } else {
            h.to_vec()
        };
        Ok(Self {
            prior,
            kappa: learning.kappa(),
            beta_ws: params.beta_ws,
            beta_wq: params.beta_wq(),
            lambdas,
            h_tilde,
        })
    }

    pub fn prior(&self) -> &ConditionalPrior {
        &self.prior
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn horizon(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// Log wage at experience `t` given the full signal history.
    pub fn log_wage(&self, s: f64, q: f64, d: f64, signals: &[f64], t: usize) -> Result<f64> {
        if signals.len() != t {
            return Err(Error::InvalidInput(format!(
                "expected {t} signals at experience {t}, got {}",
                signals.len()
            )));
        }
        let mean = (t > 0).then(|| signals.iter().sum::<f64>() / t as f64);
        self.log_wage_given_prior(self.prior.mean(s, q, d), s, q, mean, t)
    }

    /// Log wage for a prior mean computed by the caller, with signals
    /// summarised by their mean.
    pub fn log_wage_given_prior(
        &self,
        prior_mean: f64,
        s: f64,
        q: f64,
        signal_mean: Option<f64>,
        t: usize,
    ) -> Result<f64> {
        if t > self.horizon() {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon() });
        }
        let w = learning_weight(self.kappa, t);
        let belief = if t == 0 {
            prior_mean
        } else {
            let xbar = signal_mean
                .ok_or_else(|| Error::InvalidInput(format!("no signal mean at experience {t}")))?;
            w * prior_mean + (1.0 - w) * xbar
        };
        Ok(self.lambdas[t] * (self.beta_ws * s + self.beta_wq * q + belief) + self.h_tilde[t])
    }
}

/// Log wage `λ_t(β_ws·S + β_wq·Q + E[A | information]) + H̃(t)`.
///
/// Pass `q = 0` when the observed correlate is disabled. `d` only matters
/// under the transparent regime.
pub fn log_wage(
    s: f64,
    q: f64,
    d: f64,
    signals: &[f64],
    t: usize,
    params: &StructuralParams,
    regime: InformationRegime,
) -> Result<f64> {
    WageSetter::new(params, regime)?.log_wage(s, q, d, signals, t)
}
