use super::iv::ProfilePoint;
use super::mixing::{fit_mixing, minimize_over_kappa, MixingOptions, NllsWeighting};
use super::varying::sequential_fit;
use crate::error::{Error, Result};
use crate::model::learning_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialIdMode {
    BoundsOnly,
    PointIdWithHidden,
    PointIdWithTransparent,
}

impl PartialIdMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PartialIdMode::BoundsOnly => "bounds_only",
            PartialIdMode::PointIdWithHidden => "point_id_with_hidden",
            PartialIdMode::PointIdWithTransparent => "point_id_with_transparent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialIdResult {
    pub mode: PartialIdMode,
    /// The partial-sample profile, a lower bound on the private return when
    /// the hidden return exceeds the transparent one.
    pub lower_bound: Vec<ProfilePoint>,
    /// `ρ·(b0_hidden − b0_transparent)`, available with a hidden sample.
    pub rho_scaled_gap: Option<f64>,
    pub kappa_hat: Option<f64>,
    /// Initial return of the fitted sample: the partial one in bounds mode,
    /// the hidden one under point identification.
    pub b0: f64,
    pub b_inf: f64,
    /// `λ_t θ_t` by experience, from the hidden/partial difference.
    pub lambda_theta: Option<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub identified: bool,
    pub rss: f64,
}

/// Mixing fit of the partial profile under constant skill prices.
pub fn partial_bounds(partial: &[ProfilePoint], options: &MixingOptions) -> Result<PartialIdResult> {
    let fit = fit_mixing(partial, None, options)?;
    Ok(PartialIdResult {
        mode: PartialIdMode::BoundsOnly,
        lower_bound: partial.to_vec(),
        rho_scaled_gap: None,
        kappa_hat: fit.kappa_hat,
        b0: fit.b0,
        b_inf: fit.b_inf,
        lambda_theta: None,
        lambda: fit.lambda,
        identified: fit.identified,
        rss: fit.rss,
    })
}

/// Skill prices from a transparent profile, then a mixing fit of the partial
/// profile given them.
pub fn partial_bounds_with_transparent(
    partial: &[ProfilePoint],
    transparent: &[ProfilePoint],
    options: &MixingOptions,
) -> Result<PartialIdResult> {
    let seq = sequential_fit(transparent, partial, options)?;
    Ok(PartialIdResult {
        mode: PartialIdMode::PointIdWithTransparent,
        lower_bound: partial.to_vec(),
        rho_scaled_gap: None,
        kappa_hat: seq.fit.kappa_hat,
        b0: seq.fit.b0,
        b_inf: seq.fit.b_inf,
        lambda_theta: None,
        lambda: seq.lambda,
        identified: seq.fit.identified,
        rss: seq.fit.rss,
    })
}

/// Point identification from a hidden and a partial profile.
///
/// The difference `hidden_t − partial_t = λ_t θ_t ρ·gap` pins down `λ_t θ_t`
/// after dividing by its value at entry. Given the skill prices (`None` is
/// λ ≡ 1) that path is `θ_t(κ)` up to scale, which fixes κ. The hidden
/// profile is then linear in `(b0, b_inf)`:
/// `hidden_t = λ_t θ_t b0 + λ_t (1 − θ_t) b_inf`.
///
/// With λ free the hidden profile alone cannot separate κ from `b_inf`,
/// because `(1 − θ_t)/θ_t = tκ/(1 − κ)`.
pub fn partial_point_id(
    hidden: &[ProfilePoint],
    partial: &[ProfilePoint],
    lambda: Option<&[f64]>,
    options: &MixingOptions,
) -> Result<PartialIdResult> {
    let max_t = hidden.iter().chain(partial).map(|p| p.t).max().unwrap_or(0);
    let lambda = match lambda {
        Some(l) if l.len() > max_t => l.to_vec(),
        Some(_) => return Err(Error::InvalidInput("skill prices do not cover the profile".into())),
        None => vec![1.0; max_t + 1],
    };
    let mut part_by_t = vec![None; max_t + 1];
    for p in partial {
        part_by_t[p.t] = Some(*p);
    }
    let h0 = hidden
        .iter()
        .find(|p| p.t == 0)
        .ok_or_else(|| Error::InvalidInput("hidden profile has no t = 0 estimate".into()))?;
    let p0 = part_by_t[0].ok_or_else(|| Error::InvalidInput("partial profile has no t = 0 estimate".into()))?;
    let diff0 = h0.b - p0.b;
    let noise = match (h0.se, p0.se) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => 2.0 * (a * a + b * b).sqrt(),
        _ => 0.0,
    };
    if diff0 < -noise.max(1e-12) {
        return Err(Error::AssumptionRejected(format!(
            "hidden return at entry is below the partial one by {:e}",
            -diff0
        )));
    }
    if diff0.abs() <= noise.max(1e-12) {
        // No transparent share (or no signaling gap): only the hidden
        // profile is informative.
        let fit = fit_mixing(hidden, Some(&lambda), options)?;
        return Ok(PartialIdResult {
            mode: PartialIdMode::PointIdWithHidden,
            lower_bound: partial.to_vec(),
            rho_scaled_gap: Some(diff0),
            kappa_hat: fit.kappa_hat,
            b0: fit.b0,
            b_inf: fit.b_inf,
            lambda_theta: None,
            lambda,
            identified: false,
            rss: fit.rss,
        });
    }

    let mut lambda_theta = vec![f64::NAN; max_t + 1];
    let mut obs = Vec::new();
    for h in hidden {
        let p = part_by_t[h.t]
            .ok_or_else(|| Error::InvalidInput(format!("partial profile has no estimate at t = {}", h.t)))?;
        let lt = (h.b - p.b) / diff0;
        lambda_theta[h.t] = lt;
        let w = match options.weighting {
            NllsWeighting::Uniform => 1.0,
            NllsWeighting::InverseVariance => 1.0 / h.se.unwrap_or(1.0).max(1e-10).powi(2),
        };
        obs.push((h.t, h.b, lt, w));
    }
    if obs.iter().map(|o| o.0).collect::<std::collections::BTreeSet<_>>().len() < 3 {
        return Err(Error::InvalidInput("point identification needs at least three experience years".into()));
    }

    let (kappa, _) = minimize_over_kappa(options.grid_size, |k| {
        obs.iter().map(|&(t, _, lt, w)| w * (lt - lambda[t] * learning_weight(k, t)).powi(2)).sum()
    });

    // Regressors `λθ` and `λ(1 − θ)` on the fitted path, which is far less
    // noisy than the measured `λθ` once θ is small.
    let xs: Vec<(f64, f64)> = obs
        .iter()
        .map(|&(t, _, _, _)| {
            let th = learning_weight(kappa, t);
            (lambda[t] * th, lambda[t] * (1.0 - th))
        })
        .collect();
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(_, b, _, w), &(x1, x2)) in obs.iter().zip(&xs) {
        a11 += w * x1 * x1;
        a12 += w * x1 * x2;
        a22 += w * x2 * x2;
        r1 += w * x1 * b;
        r2 += w * x2 * b;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 1e-12 * a11 * a22) {
        return Err(Error::Unidentified(format!(
            "the hidden profile does not separate initial and limit returns at κ = {kappa}"
        )));
    }
    let b0 = (a22 * r1 - a12 * r2) / det;
    let b_inf = (a11 * r2 - a12 * r1) / det;
    let rss = obs
        .iter()
        .zip(&xs)
        .map(|(&(_, b, _, w), &(x1, x2))| w * (b - x1 * b0 - x2 * b_inf).powi(2))
        .sum();
    Ok(PartialIdResult {
        mode: PartialIdMode::PointIdWithHidden,
        lower_bound: partial.to_vec(),
        rho_scaled_gap: Some(diff0),
        kappa_hat: Some(kappa),
        b0,
        b_inf,
        lambda_theta: Some(lambda_theta),
        lambda,
        identified: true,
        rss,
    })
}
