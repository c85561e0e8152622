use nalgebra::{DMatrix, DVector};

use super::covariates::{CovariateSpec, Factors};
use super::iv::{dot, ProfilePoint};
use super::mixing::{fit_mixing, minimize_over_kappa, Design, MixingFit, MixingOptions};
use crate::error::{Error, Result};
use crate::simulate::Panel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsRecord {
    pub t: usize,
    /// Coefficient on schooling.
    pub b: f64,
    /// Coefficient on the hidden correlate.
    pub c: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsPaths {
    pub records: Vec<OlsRecord>,
}

impl OlsPaths {
    pub fn b_points(&self) -> Vec<ProfilePoint> {
        self.records.iter().map(|r| ProfilePoint::new(r.t, r.b)).collect()
    }

    pub fn c_points(&self) -> Vec<ProfilePoint> {
        self.records.iter().map(|r| ProfilePoint::new(r.t, r.c)).collect()
    }
}

/// Per-year OLS of log wages on schooling and the hidden correlate.
pub fn ols_correlate_profile(panel: &Panel, covariates: &CovariateSpec) -> Result<OlsPaths> {
    let z = panel.z().ok_or_else(|| Error::InvalidInput("panel has no hidden correlate column".into()))?;
    let n = panel.n_workers();
    let ones = vec![1.0; n];
    let factors = Factors::resolve(panel, covariates)?;
    let st = factors.demean(panel.s(), &ones);
    let zt = factors.demean(z, &ones);
    let (ss, sz, zz) = (dot(&st, &st), dot(&st, &zt), dot(&zt, &zt));
    let det = ss * zz - sz * sz;
    if !(det > 1e-10 * ss * zz) {
        return Err(Error::RankDeficient("schooling and the hidden correlate are collinear".into()));
    }
    let records = (0..=panel.horizon())
        .map(|t| {
            let y = panel.ln_wage_at(t)?;
            let (sy, zy) = (dot(&st, y), dot(&zt, y));
            Ok(OlsRecord { t, b: (zz * sy - sz * zy) / det, c: (ss * zy - sz * sy) / det, n })
        })
        .collect::<Result<_>>()?;
    Ok(OlsPaths { records })
}

/// Both paths forced to share one κ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonKappaFit {
    pub kappa_hat: f64,
    pub b0: f64,
    pub b_inf: f64,
    pub c0: f64,
    pub c_inf: f64,
    /// Pooled over both paths.
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsSpeedFit {
    pub b_fit: MixingFit,
    pub c_fit: MixingFit,
    pub common: CommonKappaFit,
}

/// Separate and common-κ mixing fits of the schooling and correlate paths.
pub fn ols_speed_fit(paths: &OlsPaths, lambda: Option<&[f64]>, options: &MixingOptions) -> Result<OlsSpeedFit> {
    let b = paths.b_points();
    let c = paths.c_points();
    let b_fit = fit_mixing(&b, lambda, options)?;
    let c_fit = fit_mixing(&c, lambda, options)?;
    let lam = b_fit.lambda.clone();
    let db = Design::new(&b, &lam, options.weighting)?;
    let dc = Design::new(&c, &lam, options.weighting)?;
    let (kappa, _) = minimize_over_kappa(options.grid_size, |k| db.linear_step(k).2 + dc.linear_step(k).2);
    let (b0, b_inf, rb) = db.linear_step(kappa);
    let (c0, c_inf, rc) = dc.linear_step(kappa);
    Ok(OlsSpeedFit { b_fit, c_fit, common: CommonKappaFit { kappa_hat: kappa, b0, b_inf, c0, c_inf, rss: rb + rc } })
}

/// IV weights on each schooling margin `s ∈ (s_min, s_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginWeights {
    pub s_min: i32,
    pub s_max: i32,
    /// `weights[k]` belongs to margin `s_min + 1 + k`.
    pub weights: Vec<f64>,
}

impl MarginWeights {
    pub fn margins(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.weights.iter().enumerate().map(|(k, w)| (self.s_min + 1 + k as i32, *w))
    }

    pub fn at(&self, s: i32) -> f64 {
        if s <= self.s_min || s > self.s_max {
            0.0
        } else {
            self.weights[(s - self.s_min - 1) as usize]
        }
    }
}

fn integer_schooling(panel: &Panel) -> Result<((i32, i32), Vec<i32>)> {
    let grid = panel
        .grid()
        .ok_or_else(|| Error::InvalidInput("schooling has not been discretized onto a grid".into()))?;
    let s = panel
        .s()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || v < grid.0 as f64 || v > grid.1 as f64 {
                Err(Error::InvalidInput(format!("schooling value {v} is not on the grid {}..={}", grid.0, grid.1)))
            } else {
                Ok(v as i32)
            }
        })
        .collect::<Result<_>>()?;
    Ok((grid, s))
}

/// `π_s = cov(1(S ≥ s), D) / cov(S, D)`.
pub fn iv_margin_weights(panel: &Panel) -> Result<MarginWeights> {
    let ((s_min, s_max), s) = integer_schooling(panel)?;
    let n = panel.n_workers() as f64;
    let d = panel.d();
    let d_mean = d.iter().sum::<f64>() / n;
    let dc: Vec<f64> = d.iter().map(|v| v - d_mean).collect();
    let cov_sd = s.iter().zip(&dc).map(|(s, d)| *s as f64 * d).sum::<f64>() / n;
    if !(cov_sd.abs() > 1e-12) {
        return Err(Error::WeakInstrument("schooling does not covary with the instrument".into()));
    }
    let weights = (s_min + 1..=s_max)
        .map(|m| s.iter().zip(&dc).filter(|(s, _)| **s >= m).map(|(_, d)| d).sum::<f64>() / n / cov_sd)
        .collect();
    Ok(MarginWeights { s_min, s_max, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WolsRecord {
    pub t: usize,
    pub b_wols: f64,
    /// `None` without a hidden correlate or when no interaction survived.
    pub c_wols: Option<f64>,
    /// Step coefficient per margin `s ∈ (s_min, s_max]`.
    pub gamma_step: Vec<f64>,
    /// Correlate slope per year `s ∈ [s_min, s_max]`, `None` when dropped.
    pub gamma_z: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WolsResult {
    pub weights: MarginWeights,
    pub records: Vec<WolsRecord>,
    /// Margins sharing a step with a neighbouring empty year.
    pub merged_margins: Vec<i32>,
    /// Margins below the lowest or above the highest populated year.
    pub degenerate_margins: Vec<i32>,
    pub dropped_interactions: Vec<i32>,
}

enum Column {
    /// `1(S ≥ p)`, covering the listed margins.
    Step { margins: Vec<i32> },
    Interaction { year: i32 },
}

/// Per-year OLS on schooling step dummies and the hidden correlate
/// interacted with each schooling year, aggregated with IV margin weights.
pub fn weighted_ols_profile(panel: &Panel, weights: &MarginWeights, covariates: &CovariateSpec) -> Result<WolsResult> {
    let ((s_min, s_max), s) = integer_schooling(panel)?;
    if (weights.s_min, weights.s_max) != (s_min, s_max) {
        return Err(Error::InvalidInput("margin weights were computed on a different grid".into()));
    }
    let n = panel.n_workers();
    let mut count = vec![0usize; (s_max - s_min + 1) as usize];
    for v in &s {
        count[(v - s_min) as usize] += 1;
    }
    let populated: Vec<i32> = (s_min..=s_max).filter(|y| count[(y - s_min) as usize] > 0).collect();
    let lowest = populated[0];
    let highest = *populated.last().unwrap();

    let mut columns = Vec::new();
    let mut merged = Vec::new();
    for pair in populated.windows(2) {
        let margins: Vec<i32> = (pair[0] + 1..=pair[1]).collect();
        if margins.len() > 1 {
            merged.extend(&margins);
        }
        columns.push(Column::Step { margins });
    }
    let degenerate: Vec<i32> = (s_min + 1..=s_max).filter(|m| *m <= lowest || *m > highest).collect();
    if panel.z().is_some() {
        columns.extend(populated.iter().map(|&year| Column::Interaction { year }));
    }

    let ones = vec![1.0; n];
    let factors = Factors::resolve(panel, covariates)?;
    let z = panel.z();
    let raw: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| match c {
            Column::Step { margins } => s.iter().map(|v| if *v >= margins[margins.len() - 1] { 1.0 } else { 0.0 }).collect(),
            Column::Interaction { year } => {
                let z = z.unwrap();
                s.iter().zip(z).map(|(v, z)| if v == year { *z } else { 0.0 }).collect()
            }
        })
        .collect();
    let x: Vec<Vec<f64>> = raw.iter().map(|c| factors.demean(c, &ones)).collect();
    let k = x.len();
    let xtx = DMatrix::from_fn(k, k, |i, j| dot(&x[i], &x[j]));

    // Cholesky with column skipping: a column that adds nothing beyond the
    // ones already kept is dropped.
    let mut kept: Vec<usize> = Vec::new();
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..k {
        let mut lj = Vec::with_capacity(kept.len());
        for (a, &ka) in kept.iter().enumerate() {
            let mut v = xtx[(j, ka)];
            for b in 0..a {
                v -= lj[b] * l[a][b];
            }
            lj.push(v / l[a][a]);
        }
        let pivot = xtx[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
        if pivot > 1e-10 * xtx[(j, j)] && xtx[(j, j)] > 0.0 {
            lj.push(pivot.sqrt());
            l.push(lj);
            kept.push(j);
        } else {
            match &columns[j] {
                Column::Interaction { year } => dropped.push(*year),
                Column::Step { margins } => {
                    return Err(Error::RankDeficient(format!(
                        "schooling step at {} is collinear with the other regressors",
                        margins[margins.len() - 1]
                    )))
                }
            }
        }
    }
    let sub = DMatrix::from_fn(kept.len(), kept.len(), |i, j| xtx[(kept[i], kept[j])]);
    let chol = sub
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("regressor cross-product is not positive definite".into()))?;

    let mut records = Vec::new();
    for t in 0..=panel.horizon() {
        let y = panel.ln_wage_at(t)?;
        let rhs = DVector::from_iterator(kept.len(), kept.iter().map(|&j| dot(&x[j], y)));
        let coef = chol.solve(&rhs);
        let mut gamma_step = vec![0.0; (s_max - s_min) as usize];
        let mut gamma_z = vec![None; (s_max - s_min + 1) as usize];
        for (i, &j) in kept.iter().enumerate() {
            match &columns[j] {
                Column::Step { margins } => {
                    for m in margins {
                        gamma_step[(m - s_min - 1) as usize] = coef[i] / margins.len() as f64;
                    }
                }
                Column::Interaction { year } => gamma_z[(year - s_min) as usize] = Some(coef[i]),
            }
        }
        let b_wols = weights.margins().map(|(m, w)| w * gamma_step[(m - s_min - 1) as usize]).sum();
        let (num, mass) = weights.margins().fold((0.0, 0.0), |(num, mass), (m, w)| {
            match gamma_z[(m - s_min) as usize] {
                Some(g) => (num + w * g, mass + w),
                None => (num, mass),
            }
        });
        let c_wols = if mass != 0.0 { Some(num / mass) } else { None };
        records.push(WolsRecord { t, b_wols, c_wols, gamma_step, gamma_z });
    }
    Ok(WolsResult {
        weights: weights.clone(),
        records,
        merged_margins: merged,
        degenerate_margins: degenerate,
        dropped_interactions: dropped,
    })
}
