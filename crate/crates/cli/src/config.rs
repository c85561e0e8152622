//! Experiment configuration: flat `section.key = value` files.
//!
//! Every key has a default, so an empty file is a valid configuration (the
//! calibrated hidden-instrument experiment). Unknown keys, duplicates and
//! malformed values are rejected before any work starts.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use emplearn::estimate::{EstimatorTag, MixingOptions, NllsWeighting};
use emplearn::kv::KvDocument;
use emplearn::model::{
    Calibration, ExperienceBaseline, HiddenCorrelate, InformationRegime, ObservedCorrelate, SchoolingEquation,
    SkillPriceProfile, StructuralParams,
};
use emplearn::simulate::{ExposureRegime, GroupConfig, SimulationConfig};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

// Solved by the calibration, so only allowed with `structure.source = explicit`.
const STRUCTURE_KEYS: [&str; 9] = [
    "structure.beta_ws",
    "structure.delta_as",
    "structure.schooling_intercept",
    "structure.first_stage",
    "structure.schooling_resid_var",
    "structure.treat_share",
    "structure.cov_v_atilde",
    "structure.var_atilde",
    "structure.sigma_eps_sq",
];

const KNOWN_KEYS: &[&str] = &[
    "structure.source",
    "structure.beta_ws",
    "structure.delta_as",
    "structure.delta_ad",
    "structure.schooling_intercept",
    "structure.first_stage",
    "structure.schooling_resid_var",
    "structure.treat_share",
    "structure.cov_v_atilde",
    "structure.var_atilde",
    "structure.sigma_eps_sq",
    "structure.skill_price_slope",
    "correlate_q.enabled",
    "correlate_q.beta_wq",
    "correlate_q.delta_qs",
    "correlate_q.var_qtilde",
    "correlate_q.cov_v_qtilde",
    "correlate_q.cov_atilde_qtilde",
    "correlate_z.enabled",
    "correlate_z.loading",
    "correlate_z.noise_var",
    "calibration.beta_ws",
    "calibration.delta_as",
    "calibration.adjustment",
    "calibration.kappa",
    "calibration.first_stage",
    "calibration.treat_share",
    "calibration.schooling_intercept",
    "calibration.schooling_var",
    "calibration.prior_var",
    "groups.n_cohorts",
    "groups.n_regions",
    "groups.wage_shift_sd",
    "groups.schooling_shift_sd",
    "simulation.n_workers",
    "simulation.horizon",
    "simulation.regime",
    "simulation.rho",
    "simulation.seed",
    "simulation.quality_violation",
    "estimation.estimators",
    "estimation.bootstrap_resamples",
    "estimation.nlls_weighting",
    "estimation.kappa_grid",
    "estimation.absorb_groups",
    "analysis.career_length",
    "analysis.baseline_wage",
    "replication.n_reps",
    "replication.jobs",
    "output.write_panel",
];

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineWage {
    Flat,
    /// CSV with columns `t,wage`.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSection {
    /// Empty means the IV estimator matching the exposure regime.
    pub estimators: Vec<EstimatorTag>,
    pub bootstrap_resamples: usize,
    pub mixing: MixingOptions,
    pub absorb_groups: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub structure: StructuralParams,
    /// `λ_t = 1 + slope·t`.
    pub skill_price_slope: f64,
    pub simulation: SimulationConfig,
    pub estimation: EstimationSection,
    pub career_length: usize,
    pub baseline_wage: BaselineWage,
    pub n_reps: usize,
    /// Thread count for replications. Not part of the resolved config,
    /// since results do not depend on it.
    pub jobs: usize,
    pub write_panel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_kv(&KvDocument::new()).expect("defaults are valid")
    }
}

struct Reader<'a> {
    doc: &'a KvDocument,
}

impl Reader<'_> {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.doc.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| err(format!("cannot parse `{key}` = `{v}`"))),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.doc.get(key).is_some()
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc = KvDocument::parse(text).map_err(|e| err(e.to_string()))?;
        Self::from_kv(&doc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self, ConfigError> {
        if let Some(k) = doc.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(err(format!("unknown key `{k}`")));
        }
        let r = Reader { doc };

        let horizon: usize = r.get("simulation.horizon", 30)?;
        let source: String = r.get("structure.source", "calibration".to_string())?;
        let mut structure = match source.as_str() {
            "calibration" => {
                if let Some(k) = STRUCTURE_KEYS.iter().find(|k| r.has(k)) {
                    return Err(err(format!("`{k}` requires structure.source = explicit")));
                }
                let d = Calibration::default();
                let c = Calibration {
                    beta_ws: r.get("calibration.beta_ws", d.beta_ws)?,
                    delta_as: r.get("calibration.delta_as", d.delta_as)?,
                    adjustment: r.get("calibration.adjustment", d.adjustment)?,
                    kappa: r.get("calibration.kappa", d.kappa)?,
                    first_stage: r.get("calibration.first_stage", d.first_stage)?,
                    treat_share: r.get("calibration.treat_share", d.treat_share)?,
                    schooling_intercept: r.get("calibration.schooling_intercept", d.schooling_intercept)?,
                    schooling_var: r.get("calibration.schooling_var", d.schooling_var)?,
                    prior_var: r.get("calibration.prior_var", d.prior_var)?,
                    horizon,
                };
                StructuralParams::calibrated(&c).map_err(|e| err(format!("calibration: {e}")))?
            }
            "explicit" => {
                if let Some(k) = doc.keys().find(|k| k.starts_with("calibration.")) {
                    return Err(err(format!("`{k}` requires structure.source = calibration")));
                }
                let d = StructuralParams::calibrated(&Calibration { horizon, ..Calibration::default() })
                    .map_err(|e| err(e.to_string()))?;
                StructuralParams {
                    beta_ws: r.get("structure.beta_ws", d.beta_ws)?,
                    delta_as: r.get("structure.delta_as", d.delta_as)?,
                    schooling: SchoolingEquation {
                        intercept: r.get("structure.schooling_intercept", d.schooling.intercept)?,
                        first_stage: r.get("structure.first_stage", d.schooling.first_stage)?,
                        resid_var: r.get("structure.schooling_resid_var", d.schooling.resid_var)?,
                        treat_share: r.get("structure.treat_share", d.schooling.treat_share)?,
                    },
                    cov_v_atilde: r.get("structure.cov_v_atilde", d.cov_v_atilde)?,
                    var_atilde: r.get("structure.var_atilde", d.var_atilde)?,
                    sigma_eps_sq: r.get("structure.sigma_eps_sq", d.sigma_eps_sq)?,
                    ..d
                }
            }
            other => return Err(err(format!("structure.source must be calibration or explicit, got `{other}`"))),
        };
        structure.delta_ad = r.get("structure.delta_ad", 0.0)?;
        let slope: f64 = r.get("structure.skill_price_slope", 0.0)?;
        structure.skill_prices =
            SkillPriceProfile::linear(horizon, slope).map_err(|e| err(format!("skill prices: {e}")))?;
        structure.baseline = ExperienceBaseline::zeros(horizon);
        if r.get("correlate_q.enabled", false)? {
            structure.observed_correlate = Some(ObservedCorrelate {
                beta_wq: r.get("correlate_q.beta_wq", 0.02)?,
                delta_qs: r.get("correlate_q.delta_qs", 0.1)?,
                var_qtilde: r.get("correlate_q.var_qtilde", 0.5)?,
                cov_v_qtilde: r.get("correlate_q.cov_v_qtilde", 0.0)?,
                cov_atilde_qtilde: r.get("correlate_q.cov_atilde_qtilde", 0.01)?,
            });
        }
        if r.get("correlate_z.enabled", false)? {
            structure.hidden_correlate = Some(HiddenCorrelate {
                loading: r.get("correlate_z.loading", 1.0)?,
                noise_var: r.get("correlate_z.noise_var", 0.01)?,
            });
        }
        structure.validate().map_err(|e| err(format!("structure: {e}")))?;

        let regime = match r.get("simulation.regime", "hidden".to_string())?.as_str() {
            "hidden" => ExposureRegime::Hidden,
            "transparent" => ExposureRegime::Transparent,
            "partial" => ExposureRegime::Partial { rho: r.get("simulation.rho", 0.5)? },
            other => return Err(err(format!("simulation.regime must be hidden, transparent or partial, got `{other}`"))),
        };
        if r.has("simulation.rho") && !matches!(regime, ExposureRegime::Partial { .. }) {
            return Err(err("simulation.rho only applies to simulation.regime = partial"));
        }
        let mut simulation =
            SimulationConfig::new(r.get("simulation.n_workers", 200_000)?, horizon, regime, r.get("simulation.seed", 1)?);
        simulation.quality_violation = r.get("simulation.quality_violation", false)?;
        let g = GroupConfig::none();
        simulation.groups = GroupConfig {
            n_cohorts: r.get("groups.n_cohorts", g.n_cohorts)?,
            n_regions: r.get("groups.n_regions", g.n_regions)?,
            wage_shift_sd: r.get("groups.wage_shift_sd", g.wage_shift_sd)?,
            schooling_shift_sd: r.get("groups.schooling_shift_sd", g.schooling_shift_sd)?,
        };
        simulation.validate().map_err(|e| err(format!("simulation: {e}")))?;
        if structure.delta_ad != 0.0 && !simulation.quality_violation {
            return Err(err("structure.delta_ad needs simulation.quality_violation = true"));
        }

        let estimators = match r.get("estimation.estimators", "auto".to_string())?.as_str() {
            "auto" => Vec::new(),
            list => list
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    match EstimatorTag::parse(s) {
                        Some(EstimatorTag::Wols) => Err(err("wols is not available as a pipeline estimator")),
                        Some(tag) => Ok(tag),
                        None => Err(err(format!("unknown estimator `{s}`"))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let weighting_name: String = r.get("estimation.nlls_weighting", "uniform".to_string())?;
        let weighting = NllsWeighting::parse(&weighting_name)
            .ok_or_else(|| err(format!("estimation.nlls_weighting must be uniform or inverse_variance, got `{weighting_name}`")))?;
        let grid_size: usize = r.get("estimation.kappa_grid", 2001)?;
        if grid_size < 2 {
            return Err(err("estimation.kappa_grid must be at least 2"));
        }
        let estimation = EstimationSection {
            estimators,
            bootstrap_resamples: r.get("estimation.bootstrap_resamples", 200)?,
            mixing: MixingOptions { grid_size, weighting },
            absorb_groups: r.get("estimation.absorb_groups", false)?,
        };
        if weighting == NllsWeighting::InverseVariance && estimation.bootstrap_resamples < 2 {
            return Err(err("inverse-variance weighting needs at least two bootstrap resamples"));
        }

        let career_length: usize = r.get("analysis.career_length", 40)?;
        if career_length <= horizon {
            return Err(err(format!("analysis.career_length ({career_length}) must exceed the horizon ({horizon})")));
        }
        let baseline_wage = match r.get("analysis.baseline_wage", "flat".to_string())?.as_str() {
            "flat" => BaselineWage::Flat,
            path => BaselineWage::File(PathBuf::from(path)),
        };
        let n_reps: usize = r.get("replication.n_reps", 100)?;
        let jobs: usize = r.get("replication.jobs", 1)?;
        if n_reps == 0 {
            return Err(err("replication.n_reps must be at least 1"));
        }
        if jobs == 0 {
            return Err(err("replication.jobs must be at least 1"));
        }
        Ok(Self {
            structure,
            skill_price_slope: slope,
            simulation,
            estimation,
            career_length,
            baseline_wage,
            n_reps,
            jobs,
            write_panel: r.get("output.write_panel", true)?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.simulation.horizon
    }

    /// Estimators to run, with the regime-matched IV estimator first when
    /// the list is left to default.
    pub fn estimators(&self) -> Vec<EstimatorTag> {
        if self.estimation.estimators.is_empty() {
            vec![self.regime_estimator()]
        } else {
            self.estimation.estimators.clone()
        }
    }

    pub fn regime_estimator(&self) -> EstimatorTag {
        match self.simulation.regime {
            ExposureRegime::Hidden => EstimatorTag::HiddenIv,
            ExposureRegime::Transparent => EstimatorTag::TransparentIv,
            ExposureRegime::Partial { .. } => EstimatorTag::PartialIv,
        }
    }

    /// Fully explicit form. Parsing it gives back an identical config
    /// (apart from `jobs`).
    pub fn resolved(&self) -> KvDocument {
        let mut d = KvDocument::new();
        let p = &self.structure;
        let s = &p.schooling;
        d.set("structure.source", "explicit");
        d.set("structure.beta_ws", p.beta_ws);
        d.set("structure.delta_as", p.delta_as);
        d.set("structure.delta_ad", p.delta_ad);
        d.set("structure.schooling_intercept", s.intercept);
        d.set("structure.first_stage", s.first_stage);
        d.set("structure.schooling_resid_var", s.resid_var);
        d.set("structure.treat_share", s.treat_share);
        d.set("structure.cov_v_atilde", p.cov_v_atilde);
        d.set("structure.var_atilde", p.var_atilde);
        d.set("structure.sigma_eps_sq", p.sigma_eps_sq);
        d.set("structure.skill_price_slope", self.skill_price_slope);
        d.set("correlate_q.enabled", p.observed_correlate.is_some());
        if let Some(q) = p.observed_correlate {
            d.set("correlate_q.beta_wq", q.beta_wq);
            d.set("correlate_q.delta_qs", q.delta_qs);
            d.set("correlate_q.var_qtilde", q.var_qtilde);
            d.set("correlate_q.cov_v_qtilde", q.cov_v_qtilde);
            d.set("correlate_q.cov_atilde_qtilde", q.cov_atilde_qtilde);
        }
        d.set("correlate_z.enabled", p.hidden_correlate.is_some());
        if let Some(z) = p.hidden_correlate {
            d.set("correlate_z.loading", z.loading);
            d.set("correlate_z.noise_var", z.noise_var);
        }
        let g = &self.simulation.groups;
        d.set("groups.n_cohorts", g.n_cohorts);
        d.set("groups.n_regions", g.n_regions);
        d.set("groups.wage_shift_sd", g.wage_shift_sd);
        d.set("groups.schooling_shift_sd", g.schooling_shift_sd);
        let sim = &self.simulation;
        d.set("simulation.n_workers", sim.n_workers);
        d.set("simulation.horizon", sim.horizon);
        d.set("simulation.regime", sim.regime.label());
        if let ExposureRegime::Partial { rho } = sim.regime {
            d.set("simulation.rho", rho);
        }
        d.set("simulation.seed", sim.seed);
        d.set("simulation.quality_violation", sim.quality_violation);
        let est = &self.estimation;
        let names: Vec<&str> = self.estimators().iter().map(|t| t.as_str()).collect();
        d.set("estimation.estimators", names.join(","));
        d.set("estimation.bootstrap_resamples", est.bootstrap_resamples);
        d.set("estimation.nlls_weighting", est.mixing.weighting.as_str());
        d.set("estimation.kappa_grid", est.mixing.grid_size);
        d.set("estimation.absorb_groups", est.absorb_groups);
        d.set("analysis.career_length", self.career_length);
        match &self.baseline_wage {
            BaselineWage::Flat => d.set("analysis.baseline_wage", "flat"),
            BaselineWage::File(path) => d.set("analysis.baseline_wage", path.display()),
        };
        d.set("replication.n_reps", self.n_reps);
        d.set("output.write_panel", self.write_panel);
        d
    }

    /// SHA-256 of the resolved config text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved().to_string().as_bytes()))
    }

    pub fn kappa_truth(&self) -> Option<f64> {
        match self.simulation.regime {
            ExposureRegime::Transparent => None,
            _ => self.structure.learning(InformationRegime::Hidden).ok().map(|l| l.kappa()),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_calibrated_experiment() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.simulation.n_workers, 200_000);
        assert_eq!(c.horizon(), 30);
        assert_eq!(c.estimators(), vec![EstimatorTag::HiddenIv]);
        assert!((c.kappa_truth().unwrap() - 0.505).abs() < 1e-12);
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        assert!(ExperimentConfig::parse("simulation.n_wrokers = 10").unwrap_err().0.contains("n_wrokers"));
        assert!(ExperimentConfig::parse("structure.beta_ws = 0.1").is_err());
        assert!(ExperimentConfig::parse("structure.source = explicit\ncalibration.kappa = 0.3").is_err());
        assert!(ExperimentConfig::parse("simulation.rho = 0.3").is_err());
        assert!(ExperimentConfig::parse("simulation.n_workers = ten").is_err());
        assert!(ExperimentConfig::parse("simulation.n_workers = 1\nsimulation.n_workers = 2").is_err());
        assert!(ExperimentConfig::parse("estimation.estimators = hidden_iv,magic").is_err());
        assert!(ExperimentConfig::parse("replication.n_reps = 0").is_err());
        assert!(ExperimentConfig::parse("structure.delta_ad = 0.1").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "simulation.regime = partial\nsimulation.rho = 0.25\ncalibration.kappa = 0.4\n\
                    structure.skill_price_slope = 0.01\ncorrelate_z.enabled = true\nreplication.jobs = 4";
        let c = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&c.resolved().to_string()).unwrap();
        assert_eq!(again.resolved(), c.resolved());
        assert_eq!(again.structure, c.structure);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(again.jobs, 1);
        assert_eq!(c.jobs, 4);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse("simulation.seed = 1").unwrap();
        let b = ExperimentConfig::parse("simulation.seed = 2").unwrap();
        let c = ExperimentConfig::parse("replication.jobs = 8").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
