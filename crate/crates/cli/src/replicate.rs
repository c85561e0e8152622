//! Monte Carlo replications of the estimate pipeline.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use emplearn::estimate::{fit_mixing, MixingFit, ProfilePoint};
use emplearn::model::{private_return, social_return};
use emplearn::rng::{derive_seed, purpose};
use emplearn::simulate::ExposureRegime;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiment::{estimate, header_line, simulate};

/// Two-sided 90% normal quantile.
const Z90: f64 = 1.6448536269514722;

pub const PARAMETERS: [&str; 3] = ["kappa_hat", "b0", "b_inf"];

/// Point estimates of one replication and their bootstrap standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub values: [Option<f64>; 3],
    pub se: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub parameter: &'static str,
    pub truth: Option<f64>,
    pub mean: Option<f64>,
    /// `None` with fewer than two successful replications.
    pub sd: Option<f64>,
    pub bias: Option<f64>,
    /// Share of 90% intervals covering the truth, over replications with a
    /// standard error.
    pub coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub n_reps: usize,
    pub n_failed: usize,
    pub parameters: Vec<ParameterSummary>,
    pub failures: Vec<(usize, String)>,
}

fn values(fit: &MixingFit) -> [Option<f64>; 3] {
    [fit.kappa_hat, Some(fit.b0), Some(fit.b_inf)]
}

/// `(κ, b0, b_inf)` implied by the configured structure for the fitted
/// profile.
pub fn truths(config: &ExperimentConfig) -> [Option<f64>; 3] {
    let p = &config.structure;
    let social = social_return(p, 0).ok();
    let private = private_return(p, 0).ok();
    let b0 = match config.simulation.regime {
        ExposureRegime::Hidden => private,
        ExposureRegime::Transparent => social,
        ExposureRegime::Partial { rho } => private.zip(social).map(|(h, s)| (1.0 - rho) * h + rho * s),
    };
    let kappa = if b0 == social { None } else { config.kappa_truth() };
    [kappa, b0, social]
}

fn sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// One replication under its own seed.
pub fn replicate(config: &ExperimentConfig, seed: u64) -> Result<Replicate> {
    let mut cfg = config.clone();
    cfg.simulation.seed = seed;
    let panel = simulate(&cfg)?;
    let est = estimate(&cfg, &panel, seed)?;
    let main = est.main_profile();
    let mut se = [None; 3];
    if let Some(b) = &main.bootstrap {
        // Refit every bootstrap profile for the parameter standard errors.
        let mut draws: [Vec<f64>; 3] = Default::default();
        for row in &b.draws {
            let pts: Vec<ProfilePoint> = main.records.iter().zip(row).map(|(r, v)| ProfilePoint::new(r.t, *v)).collect();
            if let Ok(f) = fit_mixing(&pts, None, &cfg.estimation.mixing) {
                for (d, v) in draws.iter_mut().zip(values(&f)) {
                    d.extend(v);
                }
            }
        }
        se = [sd(&draws[0]), sd(&draws[1]), sd(&draws[2])];
    }
    Ok(Replicate { values: values(&est.fit), se })
}

/// Seed of replication `r`, a function of the master seed and `r` only.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[purpose::REPLICATION, r as u64])
}

/// Runs `config.n_reps` replications on `config.jobs` threads. The summary
/// does not depend on the thread count.
pub fn run_replications(config: &ExperimentConfig) -> Result<ReplicationSummary> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build().context("cannot start worker threads")?;
    let results: Vec<Result<Replicate, String>> = pool.install(|| {
        (0..config.n_reps)
            .into_par_iter()
            .map(|r| replicate(config, replication_seed(config.simulation.seed, r)).map_err(|e| format!("{e:#}")))
            .collect()
    });
    Ok(summarize(config, &results))
}

pub fn summarize(config: &ExperimentConfig, results: &[Result<Replicate, String>]) -> ReplicationSummary {
    let truth = truths(config);
    let failures: Vec<(usize, String)> =
        results.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e.clone()))).collect();
    let ok: Vec<&Replicate> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let parameters = PARAMETERS
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.values[k]).collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let covered: Vec<bool> = match truth[k] {
                Some(t) => ok
                    .iter()
                    .filter_map(|r| Some((r.values[k]?, r.se[k]?)))
                    .map(|(v, s)| (v - t).abs() <= Z90 * s)
                    .collect(),
                None => Vec::new(),
            };
            ParameterSummary {
                parameter: name,
                truth: truth[k],
                mean,
                sd: sd(&vals),
                bias: mean.zip(truth[k]).map(|(m, t)| m - t),
                coverage: (!covered.is_empty())
                    .then(|| covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64),
                n_ok: vals.len(),
                n_failed: results.len() - vals.len(),
            }
        })
        .collect();
    ReplicationSummary { n_reps: results.len(), n_failed: failures.len(), parameters, failures }
}

fn cell(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| x.to_string())
}

/// CSV `parameter,truth,mean,sd,bias,coverage,n_ok,n_failed` under the
/// config-hash comment. `NA` marks undefined values.
pub fn summary_csv(config: &ExperimentConfig, s: &ReplicationSummary) -> String {
    let mut out = header_line(config);
    out.push_str("parameter,truth,mean,sd,bias,coverage,n_ok,n_failed\n");
    for p in &s.parameters {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.parameter,
            cell(p.truth),
            cell(p.mean),
            cell(p.sd),
            cell(p.bias),
            cell(p.coverage),
            p.n_ok,
            p.n_failed
        );
    }
    out
}
