use std::io::Write;

use super::learning::learning_weight;
use super::structure::{conditional_prior, InformationRegime, StructuralParams};
use crate::error::{invalid, Result};

/// Causal effect of schooling on productivity at experience `t`.
pub fn social_return(params: &StructuralParams, t: usize) -> Result<f64> {
    let lambda = params.skill_prices.at(t)?;
    Ok(lambda * (params.beta_ws + params.beta_wq() * params.delta_qs() + params.delta_as))
}

/// Gap between the employer's prior slope and the causal ability slope,
/// `φ_S + φ_Q·δ_QS − δ_AS`, under the hidden regime.
pub fn adjustment_term(params: &StructuralParams) -> Result<f64> {
    let prior = conditional_prior(params, InformationRegime::Hidden)?;
    Ok(prior.slope_s + prior.slope_q * params.delta_qs() - params.delta_as)
}

/// Causal effect of schooling on wages at experience `t` when the
/// instrument is hidden from employers.
pub fn private_return(params: &StructuralParams, t: usize) -> Result<f64> {
    let social = social_return(params, t)?;
    let lambda = params.skill_prices.at(t)?;
    let kappa = params.learning(InformationRegime::Hidden)?.kappa();
    Ok(social + learning_weight(kappa, t) * lambda * adjustment_term(params)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnsRecord {
    pub t: usize,
    pub private: f64,
    pub social: f64,
    pub signaling_gap: f64,
    pub theta: f64,
}

/// Private and social returns by experience.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsDecomposition {
    pub records: Vec<ReturnsRecord>,
}

impl ReturnsDecomposition {
    /// True returns implied by a structure, `t = 0..=T`.
    pub fn from_structure(params: &StructuralParams) -> Result<Self> {
        let kappa = params.learning(InformationRegime::Hidden)?.kappa();
        let records = (0..=params.horizon())
            .map(|t| {
                let private = private_return(params, t)?;
                let social = social_return(params, t)?;
                Ok(ReturnsRecord {
                    t,
                    private,
                    social,
                    signaling_gap: private - social,
                    theta: learning_weight(kappa, t),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records })
    }

    /// Returns implied by fitted mixing parameters: private
    /// `λ_t(θ_t·b0 + (1−θ_t)·b_inf)`, social `λ_t·b_inf`.
    pub fn from_fit(b0: f64, b_inf: f64, kappa: f64, lambdas: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(invalid(format!("kappa must lie in [0, 1], got {kappa}")));
        }
        let records = lambdas
            .iter()
            .enumerate()
            .map(|(t, &l)| {
                let theta = learning_weight(kappa, t);
                let private = l * (theta * b0 + (1.0 - theta) * b_inf);
                let social = l * b_inf;
                ReturnsRecord { t, private, social, signaling_gap: private - social, theta }
            })
            .collect();
        Ok(Self { records })
    }

    pub fn private_profile(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.private).collect()
    }

    pub fn social_profile(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.social).collect()
    }

    /// Columns `t, private, social, gap, theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "private", "social", "gap", "theta"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                r.private.to_string(),
                r.social.to_string(),
                r.signaling_gap.to_string(),
                r.theta.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
