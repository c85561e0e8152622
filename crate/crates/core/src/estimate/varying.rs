use super::iv::ProfilePoint;
use super::mixing::{fit_mixing, Design, LambdaSource, MixingFit, MixingOptions, NllsWeighting};
use crate::error::{Error, Result};
use crate::model::learning_weight;

/// λ read off the transparent profile, then a mixing fit of the hidden one.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialFit {
    pub lambda: Vec<f64>,
    pub fit: MixingFit,
    /// Transparent return at entry, the social return before skill-price
    /// growth.
    pub transparent_social: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub fit: MixingFit,
    pub lambda: Vec<f64>,
    pub transparent_social: f64,
    pub iterations: usize,
    /// Pooled over both profiles.
    pub rss: f64,
}

/// Transparent estimates indexed by experience; every hidden `t` and `t = 0`
/// must be present.
fn transparent_by_t(transparent: &[ProfilePoint], hidden: &[ProfilePoint]) -> Result<(Vec<Option<ProfilePoint>>, usize)> {
    let max_t = transparent.iter().chain(hidden).map(|p| p.t).max().unwrap_or(0);
    let mut by_t = vec![None; max_t + 1];
    for p in transparent {
        by_t[p.t] = Some(*p);
    }
    if by_t[0].is_none() {
        return Err(Error::InvalidInput("transparent profile has no t = 0 estimate".into()));
    }
    if let Some(p) = hidden.iter().find(|p| by_t[p.t].is_none()) {
        return Err(Error::InvalidInput(format!("transparent profile has no estimate at t = {}", p.t)));
    }
    Ok((by_t, max_t))
}

/// `λ̂_t = b̂_t / b̂_0` from the transparent profile, then
/// `fit_mixing(hidden, λ̂)`.
pub fn sequential_fit(
    transparent: &[ProfilePoint],
    hidden: &[ProfilePoint],
    options: &MixingOptions,
) -> Result<SequentialFit> {
    let (by_t, _) = transparent_by_t(transparent, hidden)?;
    let base = by_t[0].unwrap();
    let bound = base.se.filter(|s| s.is_finite()).map_or(0.0, |s| 10.0 * s).max(1e-12);
    if !(base.b.abs() > bound) {
        return Err(Error::Unstable(format!(
            "transparent return at entry ({:e}) is not bounded away from zero",
            base.b
        )));
    }
    // Years missing from the transparent profile are never read by the fit.
    let lambda: Vec<f64> = by_t.iter().map(|p| p.map_or(f64::NAN, |p| p.b / base.b)).collect();
    let mut fit = fit_mixing(hidden, Some(&lambda), options)?;
    fit.lambda_source = LambdaSource::Estimated;
    Ok(SequentialFit { lambda, fit, transparent_social: base.b })
}

fn weight(p: &ProfilePoint, weighting: NllsWeighting) -> f64 {
    match weighting {
        NllsWeighting::Uniform => 1.0,
        NllsWeighting::InverseVariance => 1.0 / p.se.unwrap_or(1.0).max(1e-10).powi(2),
    }
}

/// Pooled least squares over both profiles, `hidden_t = λ_t m_t(κ, b0, b_inf)`
/// and `transparent_t = λ_t s`, with `λ_0 = 1`. Alternates between the
/// closed-form λ step and a mixing fit given λ.
pub fn joint_fit(hidden: &[ProfilePoint], transparent: &[ProfilePoint], options: &MixingOptions) -> Result<JointFit> {
    let (by_t, max_t) = transparent_by_t(transparent, hidden)?;
    if transparent.iter().all(|p| p.b.abs() < 1e-300) {
        return Err(Error::Unidentified("transparent profile is identically zero, so λ is not identified".into()));
    }
    // Validates weights and finiteness up front.
    Design::new(hidden, &vec![1.0; max_t + 1], options.weighting)?;
    Design::new(transparent, &vec![1.0; max_t + 1], options.weighting)?;

    let mut hidden_by_t: Vec<Vec<ProfilePoint>> = vec![Vec::new(); max_t + 1];
    for p in hidden {
        hidden_by_t[p.t].push(*p);
    }
    let base = by_t[0].unwrap().b;
    let start: Vec<f64> = by_t.iter().map(|p| p.map_or(1.0, |p| if base != 0.0 { p.b / base } else { 1.0 })).collect();

    // Everything but λ profiled out: transparent level in closed form, the
    // mixing parameters by a mixing fit.
    let evaluate = |lambda: &[f64]| -> Result<(MixingFit, f64, f64)> {
        let (num, den) = transparent.iter().fold((0.0, 0.0), |(n, d), p| {
            let w = weight(p, options.weighting);
            (n + w * lambda[p.t] * p.b, d + w * lambda[p.t] * lambda[p.t])
        });
        let s = if den > 0.0 { num / den } else { base };
        let fit = fit_mixing(hidden, Some(lambda), options)?;
        let h: f64 = hidden
            .iter()
            .map(|p| weight(p, options.weighting) * (p.b - lambda[p.t] * mean_return(&fit, p.t)).powi(2))
            .sum();
        let tr: f64 = transparent
            .iter()
            .map(|p| weight(p, options.weighting) * (p.b - lambda[p.t] * s).powi(2))
            .sum();
        Ok((fit, s, h + tr))
    };
    // λ given everything else, per year.
    let lambda_step = |fit: &MixingFit, s: f64, lambda: &[f64]| -> Vec<f64> {
        let mut next = lambda.to_vec();
        for t in 1..=max_t {
            let (mut num, mut den) = (0.0, 0.0);
            let m = mean_return(fit, t);
            for p in &hidden_by_t[t] {
                let w = weight(p, options.weighting);
                num += w * p.b * m;
                den += w * m * m;
            }
            if let Some(p) = by_t[t] {
                let w = weight(&p, options.weighting);
                num += w * p.b * s;
                den += w * s * s;
            }
            if den > 0.0 {
                next[t] = num / den;
            }
        }
        next
    };

    let mut lambda = start;
    let (mut fit, mut s, mut rss) = evaluate(&lambda)?;
    let scale: f64 = hidden.iter().chain(transparent).map(|p| p.b * p.b).sum::<f64>().max(f64::MIN_POSITIVE);
    const MAX_ITERATIONS: usize = 500;
    for iteration in 1..=MAX_ITERATIONS {
        let stepped = lambda_step(&fit, s, &lambda);
        let (mut f_next, mut s_next, mut r_next) = evaluate(&stepped)?;
        // Extrapolate along the step while the pooled rss keeps falling.
        let dir: Vec<f64> = stepped.iter().zip(&lambda).map(|(a, b)| a - b).collect();
        let mut best = stepped;
        let mut alpha = 1.0;
        while alpha <= 64.0 {
            let cand: Vec<f64> = best.iter().zip(&dir).map(|(l, d)| l + alpha * d).collect();
            let (f, sc, r) = evaluate(&cand)?;
            if !(r < r_next) {
                break;
            }
            (f_next, s_next, r_next) = (f, sc, r);
            best = cand;
            alpha *= 2.0;
        }
        let change = (rss - r_next).abs();
        lambda = best;
        (fit, s, rss) = (f_next, s_next, r_next);
        if change <= 1e-10 * rss.max(1e-300) || rss <= 1e-30 * scale {
            fit.lambda_source = LambdaSource::Estimated;
            fit.lambda = lambda.clone();
            return Ok(JointFit { fit, lambda, transparent_social: s, iterations: iteration, rss });
        }
    }
    fit.lambda_source = LambdaSource::Estimated;
    fit.lambda = lambda.clone();
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        rss,
        last: Box::new(JointFit { fit, lambda, transparent_social: s, iterations: MAX_ITERATIONS, rss }),
    })
}

/// `θ_t b0 + (1−θ_t) b_inf` for a fit.
fn mean_return(fit: &MixingFit, t: usize) -> f64 {
    let th = fit.kappa_hat.map_or(1.0, |k| learning_weight(k, t));
    th * fit.b0 + (1.0 - th) * fit.b_inf
}
