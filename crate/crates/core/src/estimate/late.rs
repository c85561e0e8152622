use super::covariates::Factors;
use super::iv::{assemble, ExperienceEstimates, IvData, ProfileOptions, ProfilePoint};
use super::mixing::{fit_mixing, MixingOptions};
use super::varying::sequential_fit;
use crate::error::{Error, Result};
use crate::model::learning_weight;
use crate::simulate::HPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct LateProfile {
    pub estimates: ExperienceEstimates,
    /// First-stage difference `Pr(S=1|D=1) − Pr(S=1|D=0)`.
    pub complier_share: f64,
}

/// Wald ratio on wage levels at each experience year.
pub fn late_profile(panel: &HPanel, options: &ProfileOptions) -> Result<LateProfile> {
    let outcomes = (0..=panel.horizon()).map(|t| panel.wage_at(t)).collect::<Result<Vec<_>>>()?;
    let data = IvData { d: panel.d(), s: panel.s(), outcomes, factors: Factors::empty() };
    let fs = data.first_stage()?;
    if !(fs.kappa_hat.abs() > 1e-12) {
        return Err(Error::Relevance("no compliers: schooling does not respond to the instrument".into()));
    }
    if !options.estimator.is_iv() {
        return Err(Error::InvalidInput("LATE profiles use an IV estimator tag".into()));
    }
    let (point, draws) = data.profile(options)?;
    Ok(LateProfile {
        estimates: assemble(options.estimator, point, draws, panel.n_workers(), Some(fs)),
        complier_share: fs.kappa_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateFit {
    pub records: Vec<ProfilePoint>,
    /// Complier return at entry.
    pub upsilon: f64,
    /// Limit minus entry return, `Υ₁ − Υ₀`.
    pub upsilon_gap: f64,
    pub kappa_hat: Option<f64>,
    /// `θ(κ̂, t)` for each record; empty when κ is not identified.
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub identified: bool,
}

/// Fits `LATE_t = λ_t (Υ + (1 − θ_t)(Υ₁ − Υ₀))`. Without a transparent
/// profile λ ≡ 1; with one, λ is read off its ratio to the entry value.
pub fn late_learning_fit(
    hidden: &[ProfilePoint],
    transparent: Option<&[ProfilePoint]>,
    options: &MixingOptions,
) -> Result<LateFit> {
    let (fit, lambda) = match transparent {
        None => {
            let fit = fit_mixing(hidden, None, options)?;
            let lambda = fit.lambda.clone();
            (fit, lambda)
        }
        Some(tr) => {
            let seq = sequential_fit(tr, hidden, options)?;
            (seq.fit, seq.lambda)
        }
    };
    let theta = match fit.kappa_hat {
        Some(k) => hidden.iter().map(|p| learning_weight(k, p.t)).collect(),
        None => Vec::new(),
    };
    Ok(LateFit {
        records: hidden.to_vec(),
        upsilon: fit.b0,
        upsilon_gap: fit.b_inf - fit.b0,
        kappa_hat: fit.kappa_hat,
        theta,
        lambda,
        identified: fit.identified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::EstimatorTag;
    use crate::simulate::ComplianceType;

    #[test]
    fn six_worker_enumeration() {
        use ComplianceType::*;
        let kinds = vec![AlwaysTaker, AlwaysTaker, NeverTaker, NeverTaker, Complier, Complier];
        let d = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let s: Vec<f64> = kinds.iter().zip(&d).map(|(k, d)| k.schooling(*d as u8) as f64).collect();
        let horizon = 2;
        let wage: Vec<f64> = (0..=horizon).flat_map(|t| (0..6).map(move |i| 1.0 + 0.3 * i as f64 + 0.07 * (t * i) as f64)).collect();
        let panel = HPanel::from_columns(horizon, (0..6).collect(), d.clone(), s.clone(), kinds, wage.clone()).unwrap();
        let prof = late_profile(&panel, &ProfileOptions::new(EstimatorTag::HiddenIv).with_resamples(0, 0)).unwrap();
        for t in 0..=horizon {
            let w = &wage[t * 6..(t + 1) * 6];
            let mean = |f: &dyn Fn(usize) -> bool, x: &[f64]| {
                let v: Vec<f64> = (0..6).filter(|i| f(*i)).map(|i| x[i]).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let treated = |i: usize| d[i] == 1.0;
            let control = |i: usize| d[i] == 0.0;
            let brute = (mean(&treated, w) - mean(&control, w)) / (mean(&treated, &s) - mean(&control, &s));
            assert!((prof.estimates.records[t].b_hat - brute).abs() < 1e-12);
        }
        assert!((prof.complier_share - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_compliers_is_relevance_failure() {
        use ComplianceType::*;
        let panel = HPanel::from_columns(
            0,
            (0..4).collect(),
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![AlwaysTaker, AlwaysTaker, NeverTaker, NeverTaker],
            vec![2.0, 2.0, 1.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            late_profile(&panel, &ProfileOptions::new(EstimatorTag::HiddenIv)),
            Err(Error::Relevance(_))
        ));
    }

    fn forward(upsilon: f64, gap: f64, kappa: f64) -> Vec<ProfilePoint> {
        (0..=30).map(|t| ProfilePoint::new(t, upsilon + (1.0 - learning_weight(kappa, t)) * gap)).collect()
    }

    #[test]
    fn noise_free_recovery() {
        let pts = forward(0.2, -0.14, 0.5);
        let f = late_learning_fit(&pts, None, &MixingOptions::default()).unwrap();
        assert!((f.upsilon - 0.2).abs() < 1e-6);
        assert!((f.upsilon_gap + 0.14).abs() < 1e-6);
        assert!((f.kappa_hat.unwrap() - 0.5).abs() < 1e-6);
        // The normalised profile is one minus the weight on the prior.
        let (l0, linf) = (f.upsilon, f.upsilon + f.upsilon_gap);
        for (p, th) in pts.iter().zip(&f.theta) {
            assert!(((p.b - l0) / (linf - l0) - (1.0 - th)).abs() < 1e-6);
        }
    }

    #[test]
    fn equal_potential_gaps_are_unidentified() {
        let f = late_learning_fit(&forward(0.2, 0.0, 0.5), None, &MixingOptions::default()).unwrap();
        assert!(!f.identified);
        assert!(f.kappa_hat.is_none());
    }

    #[test]
    fn growing_skill_prices_with_transparent_profile() {
        let lam = |t: usize| 1.0 + 0.02 * t as f64;
        let hidden: Vec<_> = forward(0.2, -0.14, 0.5).into_iter().map(|p| ProfilePoint::new(p.t, lam(p.t) * p.b)).collect();
        let transparent: Vec<_> = (0..=30).map(|t| ProfilePoint::new(t, lam(t) * 0.06)).collect();
        let f = late_learning_fit(&hidden, Some(&transparent), &MixingOptions::default()).unwrap();
        assert!((f.kappa_hat.unwrap() - 0.5).abs() < 1e-6);
        assert!((f.lambda[30] - 1.6).abs() < 1e-12);
    }
}
