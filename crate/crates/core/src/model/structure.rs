use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use super::learning::LearningParams;
use crate::error::{invalid, Error, Result};

/// What employers see about the instrument when they set wages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InformationRegime {
    /// The instrument never enters wage setting.
    Hidden,
    /// The instrument is priced into the prior from the first year.
    Transparent,
}

impl InformationRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            InformationRegime::Hidden => "hidden",
            InformationRegime::Transparent => "transparent",
        }
    }
}

/// Skill prices `λ_t`, `t = 0..=T`, normalised so that `λ_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillPriceProfile {
    lambdas: Vec<f64>,
}

impl SkillPriceProfile {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        let Some(&first) = lambdas.first() else {
            return Err(invalid("skill price profile is empty"));
        };
        if (first - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("skill price at t=0 must be 1, got {first}")));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(invalid(format!("skill prices must be finite and nonnegative, got {bad}")));
        }
        Ok(Self { lambdas })
    }

    pub fn constant(horizon: usize) -> Self {
        Self { lambdas: vec![1.0; horizon + 1] }
    }

    /// `λ_t = 1 + slope·t`.
    pub fn linear(horizon: usize, slope: f64) -> Result<Self> {
        Self::new((0..=horizon).map(|t| 1.0 + slope * t as f64).collect())
    }

    pub fn horizon(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn at(&self, t: usize) -> Result<f64> {
        self.lambdas
            .get(t)
            .copied()
            .ok_or(Error::OutOfHorizon { t, horizon: self.horizon() })
    }
}

/// Common experience effects `H(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceBaseline {
    h: Vec<f64>,
    /// Add half the skill-component variance to wages (the lognormal mean
    /// correction). Off by default; it never depends on schooling.
    pub include_variance_term: bool,
}

impl ExperienceBaseline {
    pub fn new(h: Vec<f64>, include_variance_term: bool) -> Result<Self> {
        if h.is_empty() {
            return Err(invalid("experience baseline is empty"));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(invalid("experience baseline has non-finite entries"));
        }
        Ok(Self { h, include_variance_term })
    }

    pub fn zeros(horizon: usize) -> Self {
        Self { h: vec![0.0; horizon + 1], include_variance_term: false }
    }

    pub fn horizon(&self) -> usize {
        self.h.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }
}

/// `S = o + ϰ·D + v` with `D ~ Bernoulli(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchoolingEquation {
    pub intercept: f64,
    pub first_stage: f64,
    pub resid_var: f64,
    pub treat_share: f64,
}

/// Ability correlate observed by employers: `Q = δ_QS·S + Q̃`, entering
/// productivity with coefficient `beta_wq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedCorrelate {
    pub beta_wq: f64,
    pub delta_qs: f64,
    pub var_qtilde: f64,
    pub cov_v_qtilde: f64,
    pub cov_atilde_qtilde: f64,
}

/// Ability correlate seen only by the researcher: `Z = loading·A + ζ` with
/// independent noise `ζ`. `loading = 0` gives an irrelevant variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenCorrelate {
    pub loading: f64,
    pub noise_var: f64,
}

/// Causal and statistical primitives of the data-generating process.
///
/// The employer's prior variance is not an input: it is the residual
/// variance of the ability projection implied by the covariances, so the
/// speed of learning follows from `sigma_eps_sq` and the information regime.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    pub beta_ws: f64,
    pub delta_as: f64,
    /// Direct effect of the instrument on ability. Nonzero values break the
    /// exclusion restriction and are only accepted by the simulator when
    /// explicitly enabled.
    pub delta_ad: f64,
    pub schooling: SchoolingEquation,
    pub cov_v_atilde: f64,
    pub var_atilde: f64,
    pub sigma_eps_sq: f64,
    pub observed_correlate: Option<ObservedCorrelate>,
    pub hidden_correlate: Option<HiddenCorrelate>,
    pub skill_prices: SkillPriceProfile,
    pub baseline: ExperienceBaseline,
}

/// Targets for [`StructuralParams::calibrated`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub beta_ws: f64,
    pub delta_as: f64,
    /// Private minus social return at `t = 0`.
    pub adjustment: f64,
    pub kappa: f64,
    pub first_stage: f64,
    pub treat_share: f64,
    pub schooling_intercept: f64,
    /// Total variance of schooling.
    pub schooling_var: f64,
    /// Prior ability variance `Var(A | S)`.
    pub prior_var: f64,
    pub horizon: usize,
}

impl Default for Calibration {
    /// Initial return 0.198, limit return 0.055, speed of learning 0.505 and a
    /// first stage of 0.237 years. The variances are small enough that a
    /// sample of 2·10⁵ workers pins down the limit return to a few tenths of
    /// a percentage point.
    fn default() -> Self {
        Self {
            beta_ws: 0.04,
            delta_as: 0.015,
            adjustment: 0.143,
            kappa: 0.505,
            first_stage: 0.237,
            treat_share: 0.5,
            schooling_intercept: 12.0,
            schooling_var: 0.5,
            prior_var: 0.006,
            horizon: 30,
        }
    }
}

/// Ability projection used by employers: `E[A | S, Q, (D)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalPrior {
    pub regime: InformationRegime,
    pub intercept: f64,
    pub slope_s: f64,
    pub slope_q: f64,
    pub slope_d: f64,
    pub residual_var: f64,
}

impl ConditionalPrior {
    pub fn mean(&self, s: f64, q: f64, d: f64) -> f64 {
        self.intercept + self.slope_s * s + self.slope_q * q + self.slope_d * d
    }
}

// Base shocks in the order (D, v, Ã, Q̃). Every observable is affine in them.
const N_SHOCKS: usize = 4;

#[derive(Debug, Clone, Copy)]
struct LinearForm {
    constant: f64,
    load: [f64; N_SHOCKS],
}

struct ShockModel {
    cov: [[f64; N_SHOCKS]; N_SHOCKS],
    mean_d: f64,
}

impl ShockModel {
    fn mean(&self, f: &LinearForm) -> f64 {
        f.constant + f.load[0] * self.mean_d
    }

    fn cov(&self, f: &LinearForm, g: &LinearForm) -> f64 {
        let mut acc = 0.0;
        for i in 0..N_SHOCKS {
            for j in 0..N_SHOCKS {
                acc += f.load[i] * self.cov[i][j] * g.load[j];
            }
        }
        acc
    }
}

impl StructuralParams {
    /// Solves the selection covariance, ability variance and noise variance
    /// that reproduce the calibration targets under the hidden regime.
    pub fn calibrated(c: &Calibration) -> Result<Self> {
        if !(c.kappa > 0.0 && c.kappa < 1.0) {
            return Err(invalid(format!("calibration kappa must lie in (0, 1), got {}", c.kappa)));
        }
        if !(c.prior_var > 0.0) {
            return Err(invalid("calibration prior variance must be positive"));
        }
        let vd = c.treat_share * (1.0 - c.treat_share);
        let resid_var = c.schooling_var - c.first_stage * c.first_stage * vd;
        if !(resid_var > 0.0) {
            return Err(invalid(
                "schooling variance too small for the requested first stage",
            ));
        }
        let cov = c.adjustment * c.schooling_var;
        let params = Self {
            beta_ws: c.beta_ws,
            delta_as: c.delta_as,
            delta_ad: 0.0,
            schooling: SchoolingEquation {
                intercept: c.schooling_intercept,
                first_stage: c.first_stage,
                resid_var,
                treat_share: c.treat_share,
            },
            cov_v_atilde: cov,
            var_atilde: c.prior_var + cov * cov / c.schooling_var,
            sigma_eps_sq: c.prior_var * (1.0 - c.kappa) / c.kappa,
            observed_correlate: None,
            hidden_correlate: None,
            skill_prices: SkillPriceProfile::constant(c.horizon),
            baseline: ExperienceBaseline::zeros(c.horizon),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn horizon(&self) -> usize {
        self.skill_prices.horizon()
    }

    pub fn beta_wq(&self) -> f64 {
        self.observed_correlate.map_or(0.0, |q| q.beta_wq)
    }

    pub fn delta_qs(&self) -> f64 {
        self.observed_correlate.map_or(0.0, |q| q.delta_qs)
    }

    pub fn validate(&self) -> Result<()> {
        let sch = &self.schooling;
        let scalars = [
            ("beta_ws", self.beta_ws),
            ("delta_as", self.delta_as),
            ("delta_ad", self.delta_ad),
            ("schooling intercept", sch.intercept),
            ("first stage", sch.first_stage),
            ("cov_v_atilde", self.cov_v_atilde),
            ("var_atilde", self.var_atilde),
            ("sigma_eps_sq", self.sigma_eps_sq),
        ];
        if let Some((name, v)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{name} is not finite ({v})")));
        }
        if !(self.sigma_eps_sq > 0.0) {
            return Err(invalid("sigma_eps_sq must be positive"));
        }
        if !(sch.resid_var >= 0.0 && self.var_atilde >= 0.0) {
            return Err(invalid("variances must be nonnegative"));
        }
        if !(sch.treat_share > 0.0 && sch.treat_share < 1.0) {
            return Err(invalid(format!("treatment share must lie in (0, 1), got {}", sch.treat_share)));
        }
        if sch.first_stage == 0.0 {
            return Err(Error::Relevance("first-stage effect of the instrument is zero".into()));
        }
        if self.skill_prices.horizon() != self.baseline.horizon() {
            return Err(invalid(format!(
                "skill prices cover {} years but the baseline covers {}",
                self.skill_prices.horizon(),
                self.baseline.horizon()
            )));
        }
        if let Some(q) = &self.observed_correlate {
            let v = [q.beta_wq, q.delta_qs, q.var_qtilde, q.cov_v_qtilde, q.cov_atilde_qtilde];
            if v.iter().any(|x| !x.is_finite()) || q.var_qtilde < 0.0 {
                return Err(invalid("observed correlate parameters invalid"));
            }
        }
        let c = self.shock_cov3();
        let eig = SymmetricEigen::new(c).eigenvalues;
        let scale = c.diagonal().max().max(1e-300);
        if eig.min() < -1e-12 * scale {
            return Err(invalid(
                "covariance of schooling residual, ability and correlate is not positive semidefinite",
            ));
        }
        if let Some(z) = &self.hidden_correlate {
            if !(z.noise_var >= 0.0) || !z.loading.is_finite() {
                return Err(invalid("hidden correlate parameters invalid"));
            }
            if self.var_hidden_correlate() <= 0.0 {
                return Err(invalid("hidden correlate has zero variance"));
            }
        }
        Ok(())
    }

    fn shock_cov3(&self) -> Matrix3<f64> {
        let q = self.observed_correlate.unwrap_or(ObservedCorrelate {
            beta_wq: 0.0,
            delta_qs: 0.0,
            var_qtilde: 0.0,
            cov_v_qtilde: 0.0,
            cov_atilde_qtilde: 0.0,
        });
        Matrix3::new(
            self.schooling.resid_var, self.cov_v_atilde, q.cov_v_qtilde,
            self.cov_v_atilde, self.var_atilde, q.cov_atilde_qtilde,
            q.cov_v_qtilde, q.cov_atilde_qtilde, q.var_qtilde,
        )
    }

    fn shocks(&self) -> ShockModel {
        let p = self.schooling.treat_share;
        let c3 = self.shock_cov3();
        let mut cov = [[0.0; N_SHOCKS]; N_SHOCKS];
        cov[0][0] = p * (1.0 - p);
        for i in 0..3 {
            for j in 0..3 {
                cov[i + 1][j + 1] = c3[(i, j)];
            }
        }
        ShockModel { cov, mean_d: p }
    }

    fn form_s(&self) -> LinearForm {
        LinearForm {
            constant: self.schooling.intercept,
            load: [self.schooling.first_stage, 1.0, 0.0, 0.0],
        }
    }

    fn form_a(&self) -> LinearForm {
        let s = self.form_s();
        LinearForm {
            constant: self.delta_as * s.constant,
            load: [
                self.delta_as * s.load[0] + self.delta_ad,
                self.delta_as * s.load[1],
                1.0,
                0.0,
            ],
        }
    }

    fn form_q(&self) -> LinearForm {
        let s = self.form_s();
        let dq = self.delta_qs();
        LinearForm {
            constant: dq * s.constant,
            load: [dq * s.load[0], dq * s.load[1], 0.0, 1.0],
        }
    }

    fn form_d(&self) -> LinearForm {
        LinearForm { constant: 0.0, load: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn var_schooling(&self) -> f64 {
        let s = self.form_s();
        self.shocks().cov(&s, &s)
    }

    pub fn var_ability(&self) -> f64 {
        let a = self.form_a();
        self.shocks().cov(&a, &a)
    }

    pub fn cov_ability_schooling(&self) -> f64 {
        self.shocks().cov(&self.form_a(), &self.form_s())
    }

    pub fn mean_ability(&self) -> f64 {
        self.shocks().mean(&self.form_a())
    }

    pub(crate) fn var_hidden_correlate(&self) -> f64 {
        self.hidden_correlate
            .map_or(0.0, |z| z.loading * z.loading * self.var_ability() + z.noise_var)
    }

    /// Population coefficient of ability on the hidden correlate.
    pub fn ability_on_correlate(&self) -> Option<f64> {
        let z = self.hidden_correlate?;
        Some(z.loading * self.var_ability() / self.var_hidden_correlate())
    }

    /// Prior and noise variances under the given regime.
    pub fn learning(&self, regime: InformationRegime) -> Result<LearningParams> {
        let prior = conditional_prior(self, regime)?;
        LearningParams::new(prior.residual_var, self.sigma_eps_sq)
    }
}

/// Linear projection of ability on what employers observe at hiring:
/// schooling (and the observed correlate), plus the instrument under the
/// transparent regime.
///
/// Conditioning on `(S, D)` is exact Gaussian conditioning. Under the hidden
/// regime schooling is a two-component mixture, so the projection is the best
/// linear predictor rather than the exact conditional mean.
pub fn conditional_prior(
    params: &StructuralParams,
    regime: InformationRegime,
) -> Result<ConditionalPrior> {
    params.validate()?;
    let shocks = params.shocks();
    let a = params.form_a();
    let mut xs = vec![params.form_s()];
    if params.observed_correlate.is_some() {
        xs.push(params.form_q());
    }
    if regime == InformationRegime::Transparent {
        xs.push(params.form_d());
    }
    let k = xs.len();
    let sxx = DMatrix::from_fn(k, k, |i, j| shocks.cov(&xs[i], &xs[j]));
    let sxa = DVector::from_fn(k, |i, _| shocks.cov(&xs[i], &a));
    let eig = SymmetricEigen::new(sxx.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::DegenerateModel(format!(
            "conditioning covariance under the {} regime is singular",
            regime.as_str()
        )));
    }
    let coef = sxx
        .cholesky()
        .ok_or_else(|| Error::DegenerateModel("conditioning covariance is not positive definite".into()))?
        .solve(&sxa);
    let explained = coef.dot(&sxa);
    let residual_var = (shocks.cov(&a, &a) - explained).max(0.0);
    let intercept = shocks.mean(&a)
        - xs.iter().zip(coef.iter()).map(|(x, b)| b * shocks.mean(x)).sum::<f64>();
    let mut prior = ConditionalPrior {
        regime,
        intercept,
        slope_s: coef[0],
        slope_q: 0.0,
        slope_d: 0.0,
        residual_var,
    };
    let mut next = 1;
    if params.observed_correlate.is_some() {
        prior.slope_q = coef[next];
        next += 1;
    }
    if regime == InformationRegime::Transparent {
        prior.slope_d = coef[next];
    }
    Ok(prior)
}
