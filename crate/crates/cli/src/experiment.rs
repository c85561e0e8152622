//! The simulate → estimate → analyze pipeline and its file bundle.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use emplearn::analysis::{signaling_decomposition, Career, SignalingSummary};
use emplearn::estimate::{
    experience_profile, fit_mixing, fit_summary, flatness_test, parse_fit_summary, write_estimates_csv,
    CovariateSpec, EstimatorTag, ExperienceEstimates, FlatnessTest, MixingFit, ProfileOptions,
};
use emplearn::kv::KvDocument;
use emplearn::model::ReturnsDecomposition;
use emplearn::simulate::{draw_population, simulate_panel, Panel};

use crate::config::{BaselineWage, ConfigError, ExperimentConfig};

pub const PANEL_FILE: &str = "panel.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const FIT_FILE: &str = "fit_summary.txt";
pub const DECOMPOSITION_FILE: &str = "decomposition.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.resolved.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Estimate,
    Analyze,
    Report,
    Montecarlo,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Estimate => "estimate",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
            Stage::Montecarlo => "montecarlo",
        }
    }
}

pub fn in_stage<T>(stage: Stage, r: Result<T>) -> Result<T> {
    r.with_context(|| format!("stage {} failed", stage.name()))
}

/// Files written by one command. Unless [`Outputs::commit`] is called, they
/// are deleted on drop so a failed run leaves nothing half-written.
pub struct Outputs {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), header: header_line(config), written: Vec::new(), committed: false })
    }

    /// Writes `name` with the config-hash comment as its first line.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = self.header.clone().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&buf))
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn header_line(config: &ExperimentConfig) -> String {
    format!("# config_hash={}\n", config.hash())
}

fn config_hash_of(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix("# config_hash=").map(str::trim)
}

/// Reads a bundle file and checks that it came from `config`.
fn read_matching(dir: &Path, name: &str, config: &ExperimentConfig) -> Result<String> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    match config_hash_of(&text) {
        Some(h) if h == config.hash() => Ok(text),
        Some(_) => Err(ConfigError(format!("{} was produced by a different configuration", path.display())).into()),
        None => bail!("{} has no config_hash header", path.display()),
    }
}

pub fn simulate(config: &ExperimentConfig) -> Result<Panel> {
    let workers = draw_population(&config.simulation, &config.structure)?;
    Ok(simulate_panel(&workers, &config.structure, &config.simulation)?)
}

#[derive(Debug, Clone)]
pub struct Estimates {
    pub profiles: Vec<ExperienceEstimates>,
    pub fit: MixingFit,
    pub mode: String,
    pub flatness: Option<FlatnessTest>,
}

impl Estimates {
    pub fn main_profile(&self) -> &ExperienceEstimates {
        &self.profiles[0]
    }

    pub fn summary(&self) -> KvDocument {
        let mut doc = fit_summary(&self.fit, &self.mode);
        doc.set("estimator", self.main_profile().estimator.as_str());
        if let Some(fs) = self.main_profile().first_stage {
            doc.set("first_stage", fs.kappa_hat).set("first_stage_se", fs.se).set("first_stage_f", fs.f_stat);
        }
        if let Some(f) = self.flatness {
            doc.set("flatness_f", f.f_stat).set("flatness_df1", f.df1).set("flatness_df2", f.df2).set("flatness_p", f.p_value);
        }
        doc
    }
}

/// Per-experience profiles for every configured estimator, then a mixing
/// fit of the first one.
pub fn estimate(config: &ExperimentConfig, panel: &Panel, seed: u64) -> Result<Estimates> {
    let covariates = if config.estimation.absorb_groups { CovariateSpec::groups() } else { CovariateSpec::none() };
    let mut tags = config.estimators();
    // The regime-matched estimator drives the fit when it was requested.
    if let Some(i) = tags.iter().position(|t| *t == config.regime_estimator()) {
        tags.swap(0, i);
    }
    let profiles = tags
        .iter()
        .map(|&tag| {
            let opts = ProfileOptions::new(tag).with_resamples(config.estimation.bootstrap_resamples, seed);
            experience_profile(panel, &covariates, &opts)
        })
        .collect::<emplearn::Result<Vec<_>>>()?;
    let main = &profiles[0];
    let fit = fit_mixing(&main.points(), None, &config.estimation.mixing)?;
    let mode = match main.estimator {
        EstimatorTag::HiddenIv => "hidden",
        EstimatorTag::TransparentIv => "transparent",
        EstimatorTag::PartialIv => "bounds_only",
        EstimatorTag::Ols | EstimatorTag::Wols => "ols",
    };
    let flatness = match &main.bootstrap {
        Some(b) if b.draws.len() > main.records.len() => Some(flatness_test(main)?),
        _ => None,
    };
    Ok(Estimates { profiles, fit, mode: mode.to_string(), flatness })
}

fn career(config: &ExperimentConfig) -> Result<Career> {
    let baseline = match &config.baseline_wage {
        BaselineWage::Flat => None,
        BaselineWage::File(path) => Some(read_baseline(path, config.career_length)?),
    };
    Ok(Career { baseline, career_length: config.career_length })
}

fn read_baseline(path: &Path, years: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read baseline wages from {}", path.display()))?;
    let mut wages = vec![f64::NAN; years];
    for row in rdr.records() {
        let row = row?;
        let t: usize = row.get(0).unwrap_or("").trim().parse().context("baseline column `t`")?;
        let w: f64 = row.get(1).unwrap_or("").trim().parse().context("baseline column `wage`")?;
        if t < years {
            wages[t] = w;
        }
    }
    if let Some(t) = wages.iter().position(|w| w.is_nan()) {
        return Err(ConfigError(format!("baseline wage file {} has no wage for t = {t}", path.display())).into());
    }
    Ok(wages)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub decomposition: ReturnsDecomposition,
    pub signaling: SignalingSummary,
}

impl Analysis {
    pub fn summary(&self) -> KvDocument {
        let s = &self.signaling;
        let mut doc = KvDocument::new();
        doc.set("private_irr", s.private_irr)
            .set("social_return", s.social_return)
            .set("signaling_points", s.signaling_points)
            .set("signaling_share", s.signaling_share);
        doc
    }
}

/// Returns implied by the fit and the IRR split over a full career.
pub fn analyze(config: &ExperimentConfig, fit: &MixingFit) -> Result<Analysis> {
    let kappa = match fit.kappa_hat {
        Some(k) => k,
        // A flat fit has the same returns under any κ.
        None if fit.b0 == fit.b_inf => 1.0,
        None => return Err(emplearn::Error::Unidentified("the fit does not pin down the speed of learning".into()).into()),
    };
    let decomposition = ReturnsDecomposition::from_fit(fit.b0, fit.b_inf, kappa, &fit.lambda)?;
    let signaling = signaling_decomposition(
        &decomposition.private_profile(),
        &decomposition.social_profile(),
        fit.b_inf,
        &career(config)?,
    )?;
    Ok(Analysis { decomposition, signaling })
}

fn kv_body(doc: &KvDocument) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |buf| {
        write!(buf, "{doc}")?;
        Ok(())
    }
}

pub fn write_panel(out: &mut Outputs, panel: &Panel) -> Result<PathBuf> {
    out.write(PANEL_FILE, |buf| Ok(panel.write_csv(buf)?))
}

pub fn write_estimates(out: &mut Outputs, est: &Estimates) -> Result<()> {
    let refs: Vec<&ExperienceEstimates> = est.profiles.iter().collect();
    out.write(ESTIMATES_FILE, |buf| Ok(write_estimates_csv(buf, &refs)?))?;
    out.write(FIT_FILE, kv_body(&est.summary()))?;
    Ok(())
}

pub fn write_analysis(out: &mut Outputs, a: &Analysis) -> Result<()> {
    out.write(DECOMPOSITION_FILE, |buf| Ok(a.decomposition.write_csv(buf)?))?;
    out.write(SUMMARY_FILE, kv_body(&a.summary()))?;
    Ok(())
}

pub fn write_config(out: &mut Outputs, config: &ExperimentConfig) -> Result<()> {
    out.write(CONFIG_FILE, kv_body(&config.resolved()))?;
    Ok(())
}

/// Simulates a panel into `dir`.
pub fn run_simulate(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(dir, config)?;
    write_config(&mut out, config)?;
    let panel = in_stage(Stage::Simulate, simulate(config))?;
    write_panel(&mut out, &panel)?;
    Ok(out.commit())
}

/// Estimates from the panel already in `dir`.
pub fn run_estimate(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let text = read_matching(dir, PANEL_FILE, config)?;
    let panel = in_stage(Stage::Estimate, Panel::read_csv(text.as_bytes()).map_err(anyhow::Error::from))?;
    let mut out = Outputs::new(dir, config)?;
    let est = in_stage(Stage::Estimate, estimate(config, &panel, config.simulation.seed))?;
    write_estimates(&mut out, &est)?;
    Ok(out.commit())
}

/// Analyses the fit summary already in `dir`.
pub fn run_analyze(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let text = read_matching(dir, FIT_FILE, config)?;
    let (fit, _) = parse_fit_summary(&KvDocument::parse(&text)?)?;
    let mut out = Outputs::new(dir, config)?;
    let a = in_stage(Stage::Analyze, analyze(config, &fit))?;
    write_analysis(&mut out, &a)?;
    Ok(out.commit())
}

/// The whole pipeline. Output files depend only on the config.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(dir, config)?;
    write_config(&mut out, config)?;
    let panel = in_stage(Stage::Simulate, simulate(config))?;
    if config.write_panel {
        write_panel(&mut out, &panel)?;
    }
    let est = in_stage(Stage::Estimate, estimate(config, &panel, config.simulation.seed))?;
    write_estimates(&mut out, &est)?;
    let a = in_stage(Stage::Analyze, analyze(config, &est.fit))?;
    write_analysis(&mut out, &a)?;
    Ok(out.commit())
}

/// Reads the fit summary written by a run.
pub fn read_fit(dir: &Path) -> Result<(MixingFit, String)> {
    let path = dir.join(FIT_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_fit_summary(&KvDocument::parse(&text)?).map_err(|e| anyhow!(e))
}
