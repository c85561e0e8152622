use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{InformationRegime, StructuralParams};
use crate::rng::{purpose, unit_stream};

/// How the instrument is exposed to employers across the sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExposureRegime {
    Hidden,
    Transparent,
    /// Each worker is independently transparent with probability `rho`.
    Partial { rho: f64 },
}

impl ExposureRegime {
    pub fn label(&self) -> &'static str {
        match self {
            ExposureRegime::Hidden => "hidden",
            ExposureRegime::Transparent => "transparent",
            ExposureRegime::Partial { .. } => "partial",
        }
    }

    fn resolve(&self, u: f64) -> InformationRegime {
        match *self {
            ExposureRegime::Hidden => InformationRegime::Hidden,
            ExposureRegime::Transparent => InformationRegime::Transparent,
            ExposureRegime::Partial { rho } if u < rho => InformationRegime::Transparent,
            ExposureRegime::Partial { .. } => InformationRegime::Hidden,
        }
    }
}

/// Cohort-like and region-like groups. Each level gets an additive wage
/// shift and an additive schooling shift, both independent of the
/// instrument. Employers know the group, so a schooling shift carries no
/// information about ability beyond its causal effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupConfig {
    pub n_cohorts: u32,
    pub n_regions: u32,
    pub wage_shift_sd: f64,
    pub schooling_shift_sd: f64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { n_cohorts: 10, n_regions: 20, wage_shift_sd: 0.05, schooling_shift_sd: 0.1 }
    }
}

impl GroupConfig {
    /// A single cohort and region with no shifts.
    pub fn none() -> Self {
        Self { n_cohorts: 1, n_regions: 1, wage_shift_sd: 0.0, schooling_shift_sd: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_workers: usize,
    pub horizon: usize,
    pub regime: ExposureRegime,
    pub seed: u64,
    /// Allow a direct effect of the instrument on ability.
    pub quality_violation: bool,
    pub groups: GroupConfig,
}

impl SimulationConfig {
    pub fn new(n_workers: usize, horizon: usize, regime: ExposureRegime, seed: u64) -> Self {
        Self {
            n_workers,
            horizon,
            regime,
            seed,
            quality_violation: false,
            groups: GroupConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 {
            return Err(invalid("at least one worker is required"));
        }
        if let ExposureRegime::Partial { rho } = self.regime {
            if !(0.0..=1.0).contains(&rho) {
                return Err(invalid(format!("exposure share must lie in [0, 1], got {rho}")));
            }
        }
        let g = &self.groups;
        if g.n_cohorts == 0 || g.n_regions == 0 {
            return Err(invalid("group counts must be positive"));
        }
        if !(g.wage_shift_sd >= 0.0 && g.schooling_shift_sd >= 0.0) {
            return Err(invalid("group shift standard deviations must be nonnegative"));
        }
        Ok(())
    }

    pub(crate) fn check_structure(&self, structure: &StructuralParams) -> Result<()> {
        self.validate()?;
        structure.validate()?;
        if structure.horizon() != self.horizon {
            return Err(Error::OutOfHorizon { t: self.horizon, horizon: structure.horizon() });
        }
        if structure.delta_ad != 0.0 && !self.quality_violation {
            return Err(invalid(
                "a direct instrument effect on ability requires quality_violation to be enabled",
            ));
        }
        Ok(())
    }
}

/// One worker's time-invariant draws.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerDraw {
    pub id: u64,
    pub d: u8,
    pub exposure: InformationRegime,
    /// Schooling including the group shift.
    pub s: f64,
    pub v: f64,
    pub a_tilde: f64,
    pub a: f64,
    pub q: Option<f64>,
    pub z: Option<f64>,
    /// `A − β_Az·Z` with the population coefficient.
    pub eta: Option<f64>,
    pub cohort: u32,
    pub region: u32,
    pub schooling_shift: f64,
    pub wage_shift: f64,
}

// Lower Cholesky factor of a PSD matrix, zeroing columns with no variance.
fn psd_cholesky(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    let scale = m[0][0].max(m[1][1]).max(m[2][2]).max(1e-300);
    for j in 0..3 {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let piv = d.sqrt();
        l[j][j] = piv;
        for i in j + 1..3 {
            let mut x = m[i][j];
            for k in 0..j {
                x -= l[i][k] * l[j][k];
            }
            l[i][j] = x / piv;
        }
    }
    l
}

struct GroupEffects {
    cohort_wage: Vec<f64>,
    cohort_school: Vec<f64>,
    region_wage: Vec<f64>,
    region_school: Vec<f64>,
}

fn group_effects(seed: u64, g: &GroupConfig) -> GroupEffects {
    let mut rng = unit_stream(seed, purpose::GROUP_EFFECTS, 0);
    let mut draw = |n: u32, sd: f64| -> Vec<f64> {
        (0..n).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
    };
    let cohort_wage = draw(g.n_cohorts, g.wage_shift_sd);
    let cohort_school = draw(g.n_cohorts, g.schooling_shift_sd);
    let region_wage = draw(g.n_regions, g.wage_shift_sd);
    let region_school = draw(g.n_regions, g.schooling_shift_sd);
    GroupEffects { cohort_wage, cohort_school, region_wage, region_school }
}

/// Draws workers independently; worker `i` uses its own stream keyed on
/// `(seed, i)`, so the result does not depend on the thread schedule.
pub fn draw_population(config: &SimulationConfig, structure: &StructuralParams) -> Result<Vec<WorkerDraw>> {
    config.check_structure(structure)?;
    let sch = structure.schooling;
    let q = structure.observed_correlate;
    let chol = {
        let q = q.unwrap_or(crate::model::ObservedCorrelate {
            beta_wq: 0.0,
            delta_qs: 0.0,
            var_qtilde: 0.0,
            cov_v_qtilde: 0.0,
            cov_atilde_qtilde: 0.0,
        });
        psd_cholesky([
            [sch.resid_var, structure.cov_v_atilde, q.cov_v_qtilde],
            [structure.cov_v_atilde, structure.var_atilde, q.cov_atilde_qtilde],
            [q.cov_v_qtilde, q.cov_atilde_qtilde, q.var_qtilde],
        ])
    };
    let groups = group_effects(config.seed, &config.groups);
    let beta_az = structure.ability_on_correlate();
    let hidden = structure.hidden_correlate;
    let delta_qs = structure.delta_qs();
    let workers = (0..config.n_workers as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = unit_stream(config.seed, purpose::POPULATION, id);
            let u_exposure: f64 = rng.random();
            let u_d: f64 = rng.random();
            let mut e = [0.0; 4];
            for x in e.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let cohort = rng.random_range(0..config.groups.n_cohorts);
            let region = rng.random_range(0..config.groups.n_regions);

            let d = u8::from(u_d < sch.treat_share);
            let v = chol[0][0] * e[0];
            let a_tilde = chol[1][0] * e[0] + chol[1][1] * e[1];
            let q_tilde = chol[2][0] * e[0] + chol[2][1] * e[1] + chol[2][2] * e[2];
            let schooling_shift = groups.cohort_school[cohort as usize] + groups.region_school[region as usize];
            let wage_shift = groups.cohort_wage[cohort as usize] + groups.region_wage[region as usize];
            let s = sch.intercept + sch.first_stage * d as f64 + v + schooling_shift;
            let a = structure.delta_as * s + structure.delta_ad * d as f64 + a_tilde;
            let z = hidden.map(|h| h.loading * a + h.noise_var.sqrt() * e[3]);
            WorkerDraw {
                id,
                d,
                exposure: config.regime.resolve(u_exposure),
                s,
                v,
                a_tilde,
                a,
                q: q.map(|_| delta_qs * s + q_tilde),
                z,
                eta: z.zip(beta_az).map(|(z, b)| a - b * z),
                cohort,
                region,
                schooling_shift,
                wage_shift,
            }
        })
        .collect();
    Ok(workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{conditional_prior, Calibration, HiddenCorrelate};

    fn base() -> StructuralParams {
        StructuralParams::calibrated(&Calibration::default()).unwrap()
    }

    fn slope(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let b = sxy / sxx;
        let rss: f64 = x.iter().zip(y).map(|(a, c)| (c - my - b * (a - mx)).powi(2)).sum();
        (b, (rss / (n - 2.0) / sxx).sqrt())
    }

    #[test]
    fn single_worker() {
        let cfg = SimulationConfig::new(1, 30, ExposureRegime::Hidden, 1);
        assert_eq!(draw_population(&cfg, &base()).unwrap().len(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SimulationConfig::new(500, 30, ExposureRegime::Partial { rho: 0.3 }, 9);
        let a = draw_population(&cfg, &base()).unwrap();
        let b = draw_population(&cfg, &base()).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 10;
        assert_ne!(a, draw_population(&other, &base()).unwrap());
    }

    #[test]
    fn exposure_extremes_reproduce_pure_regimes() {
        let p = base();
        let mk = |r| SimulationConfig::new(300, 30, r, 4);
        let h = draw_population(&mk(ExposureRegime::Hidden), &p).unwrap();
        let p0 = draw_population(&mk(ExposureRegime::Partial { rho: 0.0 }), &p).unwrap();
        let t = draw_population(&mk(ExposureRegime::Transparent), &p).unwrap();
        let p1 = draw_population(&mk(ExposureRegime::Partial { rho: 1.0 }), &p).unwrap();
        assert_eq!(h, p0);
        assert_eq!(t, p1);
    }

    #[test]
    fn structural_identities_hold_per_draw() {
        let mut p = base();
        p.hidden_correlate = Some(HiddenCorrelate { loading: 1.0, noise_var: 0.01 });
        let cfg = SimulationConfig::new(200, 30, ExposureRegime::Hidden, 2);
        let b = p.ability_on_correlate().unwrap();
        for w in draw_population(&cfg, &p).unwrap() {
            let s = p.schooling.intercept + p.schooling.first_stage * w.d as f64 + w.v + w.schooling_shift;
            assert!((w.s - s).abs() < 1e-12);
            assert!((w.a - (p.delta_as * w.s + w.a_tilde)).abs() < 1e-12);
            assert!((w.a - (b * w.z.unwrap() + w.eta.unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn first_stage_and_selection_slope_converge() {
        let p = base();
        let mut cfg = SimulationConfig::new(200_000, 30, ExposureRegime::Hidden, 5);
        cfg.groups = GroupConfig::none();
        let w = draw_population(&cfg, &p).unwrap();
        let d: Vec<f64> = w.iter().map(|x| x.d as f64).collect();
        let s: Vec<f64> = w.iter().map(|x| x.s).collect();
        let a: Vec<f64> = w.iter().map(|x| x.a).collect();
        let (k, se) = slope(&d, &s);
        assert!((k - 0.237).abs() < 3.0 * se, "{k} {se}");
        let (phi, se) = slope(&s, &a);
        let prior = conditional_prior(&p, InformationRegime::Hidden).unwrap();
        assert!((phi - prior.slope_s).abs() < 3.0 * se, "{phi} vs {}", prior.slope_s);
    }

    #[test]
    fn horizon_and_violation_checks() {
        let p = base();
        let cfg = SimulationConfig::new(10, 29, ExposureRegime::Hidden, 1);
        assert!(matches!(draw_population(&cfg, &p), Err(Error::OutOfHorizon { .. })));
        let mut q = p.clone();
        q.delta_ad = 0.01;
        let mut cfg = SimulationConfig::new(10, 30, ExposureRegime::Hidden, 1);
        assert!(draw_population(&cfg, &q).is_err());
        cfg.quality_violation = true;
        assert!(draw_population(&cfg, &q).is_ok());
        let bad = SimulationConfig::new(10, 30, ExposureRegime::Partial { rho: 1.5 }, 1);
        assert!(draw_population(&bad, &p).is_err());
    }

    #[test]
    fn cholesky_handles_singular_blocks() {
        let l = psd_cholesky([[1.0, 0.5, 0.0], [0.5, 0.25, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(l[1][1], 0.0);
        assert_eq!(l[2][2], 0.0);
        assert!((l[1][0] - 0.5).abs() < 1e-15);
    }
}
