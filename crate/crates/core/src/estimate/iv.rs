use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::covariates::{CovariateSpec, Factors};
use crate::error::{Error, Result};
use crate::rng::{purpose, unit_stream};
use crate::simulate::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorTag {
    HiddenIv,
    TransparentIv,
    PartialIv,
    Ols,
    Wols,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::HiddenIv => "hidden_iv",
            EstimatorTag::TransparentIv => "transparent_iv",
            EstimatorTag::PartialIv => "partial_iv",
            EstimatorTag::Ols => "ols",
            EstimatorTag::Wols => "wols",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::HiddenIv, Self::TransparentIv, Self::PartialIv, Self::Ols, Self::Wols]
            .into_iter()
            .find(|t| t.as_str() == s)
    }

    pub fn is_iv(self) -> bool {
        matches!(self, Self::HiddenIv | Self::TransparentIv | Self::PartialIv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStageResult {
    pub kappa_hat: f64,
    pub se: f64,
    pub f_stat: f64,
    pub n: usize,
}

/// One per-experience estimate with its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperienceRecord {
    pub t: usize,
    pub b_hat: f64,
    pub se: Option<f64>,
    pub n: usize,
}

/// A point on a return profile, the input to every mixing fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub t: usize,
    pub b: f64,
    pub se: Option<f64>,
}

impl ProfilePoint {
    pub fn new(t: usize, b: f64) -> Self {
        Self { t, b, se: None }
    }
}

/// Bootstrap replicates aligned with `ExperienceEstimates::records`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub draws: Vec<Vec<f64>>,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceEstimates {
    pub estimator: EstimatorTag,
    pub records: Vec<ExperienceRecord>,
    /// Experience years whose estimate could not be formed.
    pub gaps: Vec<usize>,
    pub first_stage: Option<FirstStageResult>,
    pub bootstrap: Option<BootstrapDraws>,
}

impl ExperienceEstimates {
    pub fn from_points(estimator: EstimatorTag, points: &[ProfilePoint], n: usize) -> Self {
        Self {
            estimator,
            records: points.iter().map(|p| ExperienceRecord { t: p.t, b_hat: p.b, se: p.se, n }).collect(),
            gaps: Vec::new(),
            first_stage: None,
            bootstrap: None,
        }
    }

    pub fn points(&self) -> Vec<ProfilePoint> {
        self.records.iter().map(|r| ProfilePoint { t: r.t, b: r.b_hat, se: r.se }).collect()
    }

    pub fn at(&self, t: usize) -> Option<&ExperienceRecord> {
        self.records.iter().find(|r| r.t == t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub estimator: EstimatorTag,
    /// Bootstrap resamples over workers; 0 skips standard errors.
    pub resamples: usize,
    pub seed: u64,
}

impl ProfileOptions {
    pub fn new(estimator: EstimatorTag) -> Self {
        Self { estimator, resamples: 200, seed: 0 }
    }

    pub fn with_resamples(mut self, resamples: usize, seed: u64) -> Self {
        self.resamples = resamples;
        self.seed = seed;
        self
    }
}

/// Columns shared by the log-wage panel and the wage-level panel.
pub(crate) struct IvData<'a> {
    pub d: &'a [f64],
    pub s: &'a [f64],
    pub outcomes: Vec<&'a [f64]>,
    pub factors: Factors<'a>,
}

impl<'a> IvData<'a> {
    pub(crate) fn from_panel(panel: &'a Panel, covariates: &CovariateSpec) -> Result<Self> {
        let outcomes = (0..=panel.horizon()).map(|t| panel.ln_wage_at(t)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d: panel.d(),
            s: panel.s(),
            outcomes,
            factors: Factors::resolve(panel, covariates)?,
        })
    }

    fn n(&self) -> usize {
        self.d.len()
    }

    /// Per-experience Wald ratios `Σ w·D̃·Y_t / Σ w·D̃·S`; only the instrument
    /// needs partialling.
    fn wald(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let dt = self.factors.demean(self.d, weights);
        let wd: Vec<f64> = dt.iter().zip(weights).map(|(a, b)| a * b).collect();
        let mass: f64 = weights.iter().sum();
        let den = centered_dot(&wd, self.s, weights);
        if !(den.abs() > 1e-12 * mass) {
            return Err(Error::WeakInstrument(format!(
                "instrument-schooling covariance is {:e}",
                den / mass
            )));
        }
        Ok(self.outcomes.iter().map(|y| centered_dot(&wd, y, weights) / den).collect())
    }

    fn ols(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let st = self.factors.demean(self.s, weights);
        let ws: Vec<f64> = st.iter().zip(weights).map(|(a, b)| a * b).collect();
        let den = dot(&ws, &st);
        let mass: f64 = weights.iter().sum();
        if !(den > 1e-12 * mass) {
            return Err(Error::RankDeficient("schooling has no variation after partialling".into()));
        }
        Ok(self.outcomes.iter().map(|y| centered_dot(&ws, y, weights) / den).collect())
    }

    fn estimate(&self, estimator: EstimatorTag, weights: &[f64]) -> Result<Vec<f64>> {
        if estimator.is_iv() {
            self.wald(weights)
        } else if estimator == EstimatorTag::Ols {
            self.ols(weights)
        } else {
            Err(Error::InvalidInput(format!(
                "{} profiles are built by weighted_ols_profile",
                estimator.as_str()
            )))
        }
    }

    pub(crate) fn first_stage(&self) -> Result<FirstStageResult> {
        let n = self.n();
        let ones = vec![1.0; n];
        let dt = self.factors.demean(self.d, &ones);
        let sdd = dot(&dt, &dt);
        if !(sdd > 1e-12 * n as f64) {
            return Err(Error::Relevance("instrument takes a single value after partialling".into()));
        }
        let st = self.factors.demean(self.s, &ones);
        let coef = dot(&dt, &st) / sdd;
        let rss: f64 = st.iter().zip(&dt).map(|(s, d)| (s - coef * d).powi(2)).sum();
        let dof = n as f64 - self.factors.absorbed(&ones) as f64 - 1.0;
        let se = if dof > 0.0 { (rss / dof / sdd).sqrt() } else { f64::NAN };
        let f_stat = if se > 0.0 { (coef / se).powi(2) } else if se == 0.0 { f64::INFINITY } else { f64::NAN };
        Ok(FirstStageResult { kappa_hat: coef, se, f_stat, n })
    }

    /// Point estimates plus worker-bootstrap replicates.
    pub(crate) fn profile(&self, opts: &ProfileOptions) -> Result<(Vec<f64>, Option<BootstrapDraws>)> {
        let n = self.n();
        let point = self.estimate(opts.estimator, &vec![1.0; n])?;
        if opts.resamples == 0 {
            return Ok((point, None));
        }
        let results: Vec<Option<Vec<f64>>> = (0..opts.resamples as u64)
            .into_par_iter()
            .map(|r| {
                let w = resample_weights(n, opts.seed, r);
                self.estimate(opts.estimator, &w).ok()
            })
            .collect();
        let failed = results.iter().filter(|r| r.is_none()).count();
        let draws = results.into_iter().flatten().collect();
        Ok((point, Some(BootstrapDraws { draws, failed })))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ a·(y − ȳ)` with `ȳ` the weighted mean; exact zero for constant `y`.
fn centered_dot(a: &[f64], y: &[f64], weights: &[f64]) -> f64 {
    let (sw, swy) = weights.iter().zip(y).fold((0.0, 0.0), |(s, sy), (w, v)| (s + w, sy + w * v));
    let m = if sw > 0.0 { swy / sw } else { 0.0 };
    a.iter().zip(y).map(|(a, v)| a * (v - m)).sum()
}

/// Multinomial counts from drawing `n` workers with replacement.
pub(crate) fn resample_weights(n: usize, seed: u64, resample: u64) -> Vec<f64> {
    let mut rng = unit_stream(seed, purpose::BOOTSTRAP, resample);
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1.0;
    }
    w
}

pub(crate) fn bootstrap_se(draws: &BootstrapDraws, k: usize) -> Option<f64> {
    let vals: Vec<f64> = draws.draws.iter().map(|d| d[k]).filter(|v| v.is_finite()).collect();
    if vals.len() < 2 {
        return None;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    Some((vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt())
}

pub(crate) fn assemble(
    estimator: EstimatorTag,
    point: Vec<f64>,
    draws: Option<BootstrapDraws>,
    n: usize,
    first_stage: Option<FirstStageResult>,
) -> ExperienceEstimates {
    let mut records = Vec::new();
    let mut gaps = Vec::new();
    for (t, b) in point.iter().enumerate() {
        if b.is_finite() {
            let se = draws.as_ref().and_then(|d| bootstrap_se(d, t));
            records.push(ExperienceRecord { t, b_hat: *b, se, n });
        } else {
            gaps.push(t);
        }
    }
    // Keep replicate columns aligned with the surviving records.
    let draws = draws.map(|d| BootstrapDraws {
        draws: d
            .draws
            .into_iter()
            .map(|row| row.into_iter().enumerate().filter(|(t, _)| !gaps.contains(t)).map(|(_, v)| v).collect())
            .collect(),
        failed: d.failed,
    });
    ExperienceEstimates { estimator, records, gaps, first_stage, bootstrap: draws }
}

/// Regression of schooling on the instrument after partialling.
pub fn first_stage(panel: &Panel, covariates: &CovariateSpec) -> Result<FirstStageResult> {
    IvData::from_panel(panel, covariates)?.first_stage()
}

/// Wald estimate at one experience year.
pub fn wald_at(panel: &Panel, t: usize, covariates: &CovariateSpec) -> Result<f64> {
    panel.ln_wage_at(t)?;
    let data = IvData::from_panel(panel, covariates)?;
    Ok(data.wald(&vec![1.0; panel.n_workers()])?[t])
}

/// Wald (or OLS) estimates at every experience year with worker-bootstrap
/// standard errors.
pub fn experience_profile(
    panel: &Panel,
    covariates: &CovariateSpec,
    options: &ProfileOptions,
) -> Result<ExperienceEstimates> {
    let data = IvData::from_panel(panel, covariates)?;
    let fs = if options.estimator.is_iv() { Some(data.first_stage()?) } else { None };
    let (point, draws) = data.profile(options)?;
    Ok(assemble(options.estimator, point, draws, panel.n_workers(), fs))
}

/// Joint test that the profile is flat, `b_t = b_0` for all `t > 0`, using
/// the bootstrap covariance of the differences (Hotelling's T² scaled to an
/// F statistic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessTest {
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

pub fn flatness_test(estimates: &ExperienceEstimates) -> Result<FlatnessTest> {
    let draws = estimates
        .bootstrap
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("flatness test needs bootstrap replicates".into()))?;
    let k = estimates.records.len().saturating_sub(1);
    let b = draws.draws.len();
    if k == 0 || b <= k + 1 {
        return Err(Error::InvalidInput(format!(
            "flatness test needs more resamples ({b}) than restrictions ({k}) plus one"
        )));
    }
    let diff = |row: &[f64]| -> Vec<f64> { row[1..].iter().map(|x| x - row[0]).collect() };
    let point: Vec<f64> = diff(&estimates.records.iter().map(|r| r.b_hat).collect::<Vec<_>>());
    let reps: Vec<Vec<f64>> = draws.draws.iter().map(|r| diff(r)).collect();
    let mut mean = vec![0.0; k];
    for r in &reps {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / b as f64;
        }
    }
    let cov = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        reps.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (b - 1) as f64
    });
    let g = nalgebra::DVector::from_vec(point);
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("bootstrap covariance is singular".into()))?;
    let t2 = g.dot(&chol.solve(&g));
    let f_stat = t2 * (b - k) as f64 / (k as f64 * (b - 1) as f64);
    let dist = FisherSnedecor::new(k as f64, (b - k) as f64)
        .map_err(|e| Error::Unstable(format!("F distribution: {e}")))?;
    Ok(FlatnessTest { f_stat, df1: k, df2: b - k, p_value: dist.sf(f_stat) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::WorkerColumns;

    fn table(d: Vec<f64>, s: Vec<f64>, wages: Vec<f64>) -> Panel {
        let n = d.len();
        Panel::from_columns(
            wages.len() / n - 1,
            WorkerColumns { worker_id: (0..n as u64).collect(), d, s, ..Default::default() },
            wages,
            None,
        )
        .unwrap()
    }

    #[test]
    fn two_group_table() {
        let p = table(vec![1.0, 1.0, 0.0, 0.0], vec![12.0, 12.0, 11.0, 11.0], vec![2.0, 2.0, 1.8, 1.8]);
        assert!((wald_at(&p, 0, &CovariateSpec::none()).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn constant_wages_give_zero() {
        let p = table(vec![1.0, 0.0, 1.0], vec![12.0, 10.0, 13.0], vec![1.0; 3]);
        assert_eq!(wald_at(&p, 0, &CovariateSpec::none()).unwrap(), 0.0);
    }

    #[test]
    fn exact_first_stage() {
        let d: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let s: Vec<f64> = d.iter().map(|x| 2.0 * x).collect();
        let p = table(d, s, vec![0.0; 20]);
        let fs = first_stage(&p, &CovariateSpec::none()).unwrap();
        assert!((fs.kappa_hat - 2.0).abs() < 1e-14);
        assert!(fs.se.abs() < 1e-12);
    }

    #[test]
    fn constant_instrument_is_relevance_failure() {
        let p = table(vec![1.0; 4], vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]);
        assert!(matches!(first_stage(&p, &CovariateSpec::none()), Err(Error::Relevance(_))));
        assert!(matches!(wald_at(&p, 0, &CovariateSpec::none()), Err(Error::WeakInstrument(_))));
    }

    #[test]
    fn single_year_profile() {
        let p = table(vec![1.0, 0.0, 1.0, 0.0], vec![12.0, 11.0, 12.5, 10.5], vec![2.0, 1.8, 2.1, 1.7]);
        let e = experience_profile(&p, &CovariateSpec::none(), &ProfileOptions::new(EstimatorTag::HiddenIv).with_resamples(20, 1))
            .unwrap();
        assert_eq!(e.records.len(), 1);
        assert_eq!(e.records[0].t, 0);
    }

    #[test]
    fn resampling_is_multinomial_and_reproducible() {
        let w = resample_weights(1000, 5, 3);
        assert_eq!(w.iter().sum::<f64>(), 1000.0);
        assert_eq!(w, resample_weights(1000, 5, 3));
        assert_ne!(w, resample_weights(1000, 5, 4));
    }
}
