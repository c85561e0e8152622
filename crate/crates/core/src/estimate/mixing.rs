use super::iv::ProfilePoint;
use crate::error::{Error, Result};
use crate::model::learning_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NllsWeighting {
    #[default]
    Uniform,
    /// Weights `1/se²`; every point must carry a standard error.
    InverseVariance,
}

impl NllsWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            NllsWeighting::Uniform => "uniform",
            NllsWeighting::InverseVariance => "inverse_variance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Self::Uniform),
            "inverse_variance" => Some(Self::InverseVariance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingOptions {
    /// Number of equally spaced κ values in [0, 1] scanned before refinement.
    pub grid_size: usize,
    pub weighting: NllsWeighting,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self { grid_size: 2001, weighting: NllsWeighting::Uniform }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    Constant,
    Fixed,
    Estimated,
}

impl LambdaSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LambdaSource::Constant => "constant",
            LambdaSource::Fixed => "fixed",
            LambdaSource::Estimated => "estimated",
        }
    }
}

/// Fit of `b_t = λ_t (θ_t(κ) b0 + (1 − θ_t(κ)) b_inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingFit {
    pub b0: f64,
    pub b_inf: f64,
    /// `None` when the profile carries no information about κ.
    pub kappa_hat: Option<f64>,
    /// Skill prices indexed by experience, `lambda[0] = 1`.
    pub lambda: Vec<f64>,
    pub lambda_source: LambdaSource,
    pub rss: f64,
    pub identified: bool,
    pub n_points: usize,
}

impl MixingFit {
    /// Fitted value at experience `t` (λ beyond the stored profile is 1).
    pub fn predict(&self, t: usize) -> f64 {
        let lam = self.lambda.get(t).copied().unwrap_or(1.0);
        let th = self.kappa_hat.map_or(1.0, |k| learning_weight(k, t));
        lam * (th * self.b0 + (1.0 - th) * self.b_inf)
    }

    pub fn theta(&self, t: usize) -> Option<f64> {
        self.kappa_hat.map(|k| learning_weight(k, t))
    }
}

/// Observations prepared for the inner linear step.
pub(crate) struct Design {
    pub t: Vec<usize>,
    pub b: Vec<f64>,
    pub lam: Vec<f64>,
    pub w: Vec<f64>,
}

impl Design {
    pub(crate) fn new(points: &[ProfilePoint], lambda: &[f64], weighting: NllsWeighting) -> Result<Self> {
        let mut d = Design { t: vec![], b: vec![], lam: vec![], w: vec![] };
        for p in points {
            if !p.b.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite estimate at t = {}", p.t)));
            }
            let lam = *lambda
                .get(p.t)
                .ok_or_else(|| Error::InvalidInput(format!("no skill price for t = {}", p.t)))?;
            let w = match weighting {
                NllsWeighting::Uniform => 1.0,
                NllsWeighting::InverseVariance => {
                    let se = p.se.filter(|s| s.is_finite()).ok_or_else(|| {
                        Error::InvalidInput(format!("inverse-variance weighting needs a standard error at t = {}", p.t))
                    })?;
                    1.0 / se.max(1e-10).powi(2)
                }
            };
            d.t.push(p.t);
            d.b.push(p.b);
            d.lam.push(lam);
            d.w.push(w);
        }
        Ok(d)
    }

    fn distinct_t(&self) -> usize {
        let mut t = self.t.clone();
        t.sort_unstable();
        t.dedup();
        t.len()
    }

    /// Best `(b0, b_inf)` and rss for a given κ.
    pub(crate) fn linear_step(&self, kappa: f64) -> (f64, f64, f64) {
        let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.t.len() {
            let th = learning_weight(kappa, self.t[i]);
            let x1 = self.lam[i] * th;
            let x2 = self.lam[i] * (1.0 - th);
            let w = self.w[i];
            a11 += w * x1 * x1;
            a12 += w * x1 * x2;
            a22 += w * x2 * x2;
            r1 += w * x1 * self.b[i];
            r2 += w * x2 * self.b[i];
        }
        let det = a11 * a22 - a12 * a12;
        let (b0, b_inf) = if det > 1e-12 * (a11 * a22).max(f64::MIN_POSITIVE) {
            ((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det)
        } else {
            // The two regressors are proportional; only their sum is estimable.
            let c = self.common_level();
            (c, c)
        };
        (b0, b_inf, self.rss(kappa, b0, b_inf))
    }

    pub(crate) fn rss(&self, kappa: f64, b0: f64, b_inf: f64) -> f64 {
        (0..self.t.len())
            .map(|i| {
                let th = learning_weight(kappa, self.t[i]);
                let e = self.b[i] - self.lam[i] * (th * b0 + (1.0 - th) * b_inf);
                self.w[i] * e * e
            })
            .sum()
    }

    /// Least-squares level `c` in `b_t = λ_t c`.
    fn common_level(&self) -> f64 {
        let num: f64 = (0..self.t.len()).map(|i| self.w[i] * self.lam[i] * self.b[i]).sum();
        let den: f64 = (0..self.t.len()).map(|i| self.w[i] * self.lam[i] * self.lam[i]).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    fn is_flat(&self) -> bool {
        let r: Vec<f64> = self.b.iter().zip(&self.lam).filter(|(_, l)| **l != 0.0).map(|(b, l)| b / l).collect();
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        r.is_empty() || hi - lo < 1e-10
    }
}

/// Grid scan over `[0, 1]` followed by golden-section refinement inside the
/// bracket around the grid minimum. Ties go to the smallest κ; NaN counts as
/// +∞.
pub(crate) fn minimize_over_kappa(grid_size: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = |k: f64| {
        let v = f(k);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let n = grid_size.max(2);
    let step = 1.0 / (n - 1) as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..n {
        let v = g(i as f64 * step);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = best_i.saturating_sub(1) as f64 * step;
    let mut hi = ((best_i + 1).min(n - 1)) as f64 * step;
    let best_k = best_i as f64 * step;
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = g(x2);
        }
    }
    let k = 0.5 * (lo + hi);
    let v = g(k);
    if v < best {
        (k, v)
    } else {
        (best_k, best)
    }
}

/// Profiles out `(b0, b_inf)` in closed form and searches over κ.
///
/// `lambda` is indexed by experience; `None` means λ ≡ 1.
pub fn fit_mixing(points: &[ProfilePoint], lambda: Option<&[f64]>, options: &MixingOptions) -> Result<MixingFit> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty profile".into()));
    }
    let max_t = points.iter().map(|p| p.t).max().unwrap_or(0);
    let (lam, source) = match lambda {
        Some(l) => (l.to_vec(), LambdaSource::Fixed),
        None => (vec![1.0; max_t + 1], LambdaSource::Constant),
    };
    let design = Design::new(points, &lam, options.weighting)?;
    let n_points = points.len();
    let mut fit = MixingFit {
        b0: 0.0,
        b_inf: 0.0,
        kappa_hat: None,
        lambda: lam,
        lambda_source: source,
        rss: 0.0,
        identified: false,
        n_points,
    };

    if design.is_flat() {
        let c = design.common_level();
        fit.b0 = c;
        fit.b_inf = c;
        fit.rss = design.rss(0.0, c, c);
        return Ok(fit);
    }
    if design.distinct_t() < 3 {
        let first = points.iter().min_by_key(|p| p.t).unwrap();
        let last = points.iter().max_by_key(|p| p.t).unwrap();
        let scale = |p: &ProfilePoint| {
            let l = fit.lambda[p.t];
            if l != 0.0 {
                p.b / l
            } else {
                0.0
            }
        };
        fit.b0 = scale(first);
        fit.b_inf = scale(last);
        return Ok(fit);
    }

    let (kappa, _) = minimize_over_kappa(options.grid_size, |k| design.linear_step(k).2);
    let (b0, b_inf, rss) = design.linear_step(kappa);
    fit.b0 = b0;
    fit.b_inf = b_inf;
    fit.rss = rss;
    fit.kappa_hat = Some(kappa);
    fit.identified = true;
    Ok(fit)
}
