//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Monte Carlo checks use fixed seeds.

use std::fmt::Write as _;
use std::process::{Command, ExitCode};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use emplearn::analysis::{irr, theta_table, Career, IrrInput};
use emplearn::estimate::{
    experience_profile, fit_mixing, flatness_test, iv_margin_weights, joint_fit, late_learning_fit, late_profile,
    partial_point_id, sequential_fit, weighted_ols_profile, CovariateSpec, EstimatorTag, ExperienceEstimates,
    MixingOptions, ProfileOptions, ProfilePoint,
};
use emplearn::model::{
    adjustment_term, posterior_ability, posterior_variance, private_return, social_return, theta, Calibration,
    InformationRegime, LearningParams, ReturnsDecomposition, SkillPriceProfile, StructuralParams,
};
use emplearn::rng::{derive_seed, unit_stream};
use emplearn::simulate::{
    discretize_schooling, draw_population, simulate_heterogeneous, simulate_panel, ComplianceType, ExposureRegime,
    GroupConfig, HPanel, HeterogeneousConfig, Panel, PotentialMeans, SimulationConfig, TypeShares, WorkerColumns,
};
use emplearn::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const MASTER: u64 = 20_240_601;
const N: usize = 200_000;
const T: usize = 30;
const REPS: usize = 100;

/// Outcome of one criterion: pass flag and a one-line account.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn seed(criterion: u64, r: usize) -> u64 {
    derive_seed(MASTER, &[criterion, r as u64])
}

fn calibrated() -> StructuralParams {
    StructuralParams::calibrated(&Calibration::default()).unwrap()
}

fn panel(structure: &StructuralParams, regime: ExposureRegime, seed: u64) -> Result<Panel> {
    let mut cfg = SimulationConfig::new(N, structure.horizon(), regime, seed);
    cfg.groups = GroupConfig::none();
    let workers = draw_population(&cfg, structure)?;
    Ok(simulate_panel(&workers, structure, &cfg)?)
}

fn profile(p: &Panel, tag: EstimatorTag, resamples: usize, seed: u64) -> Result<ExperienceEstimates> {
    Ok(experience_profile(p, &CovariateSpec::none(), &ProfileOptions::new(tag).with_resamples(resamples, seed))?)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Largest `|b_t − truth_t| / se_t` over a profile with bootstrap SEs.
fn worst_z(e: &ExperienceEstimates, truth: impl Fn(usize) -> f64) -> (f64, usize) {
    e.records
        .iter()
        .map(|r| ((r.b_hat - truth(r.t)).abs() / r.se.unwrap().max(1e-12), r.t))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Largest distance of the replication mean from the truth, in Monte Carlo
/// standard errors `sd/√R`, over a set of per-replication paths.
fn worst_mc_z(paths: &[Vec<f64>], truth: impl Fn(usize) -> f64) -> (f64, usize) {
    let r = paths.len() as f64;
    (0..paths[0].len())
        .map(|t| {
            let xs: Vec<f64> = paths.iter().map(|p| p[t]).collect();
            let (m, sd) = mean_sd(&xs);
            ((m - truth(t)).abs() / (sd / r.sqrt()).max(1e-15), t)
        })
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn b_path(e: &ExperienceEstimates) -> Vec<f64> {
    e.records.iter().map(|r| r.b_hat).collect()
}

fn weight_on_initial_signal() -> Result<Outcome> {
    let cases = [(0.505, [16.4, 8.9, 6.1]), (0.532, [15.0, 8.1, 5.5])];
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (kappa, want) in cases {
        let rows = theta_table(kappa, &[5, 10, 15])?;
        let got: Vec<String> = rows.iter().map(|(_, th)| format!("{:.2}", 100.0 * th)).collect();
        write!(detail, "κ={kappa}: {} ", got.join("/"))?;
        for ((_, th), w) in rows.iter().zip(want) {
            worst = worst.max((100.0 * th - w).abs());
        }
    }
    Ok(Outcome::new(worst <= 0.05, format!("{detail}max gap {worst:.3} pp")))
}

/// Hidden and OLS profiles of the 100 hidden-regime replications.
struct HiddenRuns {
    hidden: Vec<Vec<f64>>,
    ols: Vec<Vec<f64>>,
}

fn hidden_runs() -> Result<HiddenRuns> {
    let p = calibrated();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..REPS)
        .into_par_iter()
        .map(|r| {
            let pn = panel(&p, ExposureRegime::Hidden, seed(4, r))?;
            Ok((b_path(&profile(&pn, EstimatorTag::HiddenIv, 0, 0)?), b_path(&profile(&pn, EstimatorTag::Ols, 0, 0)?)))
        })
        .collect::<Result<_>>()?;
    let (hidden, ols) = runs.into_iter().unzip();
    Ok(HiddenRuns { hidden, ols })
}

fn hidden_iv_identification() -> Result<Outcome> {
    let start = Instant::now();
    let p = calibrated();
    let pn = panel(&p, ExposureRegime::Hidden, seed(2, 0))?;
    let e = profile(&pn, EstimatorTag::HiddenIv, 200, seed(2, 1))?;
    let secs = start.elapsed().as_secs_f64();
    let (z, t) = worst_z(&e, |t| 0.055 + theta(0.505, t).unwrap() * 0.143);
    Ok(Outcome::new(
        z <= 3.0 && e.records.len() == T + 1 && secs < 300.0,
        format!("n={N}, 200 resamples: worst |b−truth|/se = {z:.2} at t={t}; {secs:.1} s"),
    ))
}

fn transparent_iv_identification() -> Result<Outcome> {
    let p = calibrated();
    let runs: Vec<(ExperienceEstimates, f64)> = (0..REPS)
        .into_par_iter()
        .map(|r| {
            let pn = panel(&p, ExposureRegime::Transparent, seed(3, r))?;
            let e = profile(&pn, EstimatorTag::TransparentIv, 100, seed(3, REPS + r))?;
            let pv = flatness_test(&e)?.p_value;
            Ok((e, pv))
        })
        .collect::<Result<_>>()?;
    let (z, t) = worst_z(&runs[0].0, |_| 0.055);
    let not_rejected = runs.iter().filter(|(_, pv)| *pv > 0.05).count();
    Ok(Outcome::new(
        z <= 3.0 && not_rejected >= 90,
        format!("worst |b−0.055|/se = {z:.2} at t={t}; flatness not rejected in {not_rejected}/{REPS}"),
    ))
}

fn mixing_round_trip(runs: &HiddenRuns) -> Result<Outcome> {
    let opts = MixingOptions::default();
    let (mut k_ok, mut b0_ok, mut binf_ok, mut all_ok) = (0, 0, 0, 0);
    for path in &runs.hidden {
        let pts: Vec<ProfilePoint> = path.iter().enumerate().map(|(t, b)| ProfilePoint::new(t, *b)).collect();
        let f = fit_mixing(&pts, None, &opts)?;
        let k = f.kappa_hat.is_some_and(|k| (k - 0.505).abs() <= 0.05);
        let b0 = (f.b0 - 0.198).abs() <= 0.010;
        let binf = (f.b_inf - 0.055).abs() <= 0.005;
        k_ok += usize::from(k);
        b0_ok += usize::from(b0);
        binf_ok += usize::from(binf);
        all_ok += usize::from(k && b0 && binf);
    }
    Ok(Outcome::new(
        all_ok >= 90,
        format!("all three within tolerance in {all_ok}/{REPS} (κ {k_ok}, b0 {b0_ok}, b_inf {binf_ok})"),
    ))
}

fn varying_skill_prices() -> Result<Outcome> {
    const R: usize = 30;
    let mut p = calibrated();
    p.skill_prices = SkillPriceProfile::linear(T, 0.01)?;
    let opts = MixingOptions::default();
    let runs: Vec<[(f64, Vec<f64>); 2]> = (0..R)
        .into_par_iter()
        .map(|r| {
            let h = panel(&p, ExposureRegime::Hidden, seed(5, 2 * r))?;
            let tr = panel(&p, ExposureRegime::Transparent, seed(5, 2 * r + 1))?;
            let hidden = profile(&h, EstimatorTag::HiddenIv, 0, 0)?.points();
            let transparent = profile(&tr, EstimatorTag::TransparentIv, 0, 0)?.points();
            let seq = sequential_fit(&transparent, &hidden, &opts)?;
            let joint = joint_fit(&hidden, &transparent, &opts)?;
            let k = |f: &emplearn::estimate::MixingFit| f.kappa_hat.context("κ not identified");
            Ok([(k(&seq.fit)?, seq.lambda), (k(&joint.fit)?, joint.lambda)])
        })
        .collect::<Result<_>>()?;

    let truth = |t: usize| 1.0 + 0.01 * t as f64;
    let mut pass = true;
    let mut detail = String::new();
    let mut ses = Vec::new();
    for (m, name) in ["sequential", "joint"].iter().enumerate() {
        let kappas: Vec<f64> = runs.iter().map(|r| r[m].0).collect();
        let k_in = kappas.iter().filter(|k| (*k - 0.505).abs() <= 0.05).count();
        let lambdas: Vec<Vec<f64>> = runs.iter().map(|r| r[m].1.clone()).collect();
        let (z, t) = worst_mc_z(&lambdas, truth);
        pass &= k_in == R && z <= 3.0;
        write!(detail, "{name}: κ within 0.05 in {k_in}/{R}, worst λ z {z:.2} (t={t}); ")?;
        // Sampling SE of one estimate: κ then each λ_t.
        let mut se = vec![mean_sd(&kappas).1];
        se.extend((0..=T).map(|t| mean_sd(&lambdas.iter().map(|l| l[t]).collect::<Vec<_>>()).1));
        ses.push(se);
    }
    // Both methods on the same replication differ by less than two Monte
    // Carlo standard errors of a single estimate.
    let mut worst: f64 = 0.0;
    for r in &runs {
        let diffs = std::iter::once(r[0].0 - r[1].0).chain((0..=T).map(|t| r[0].1[t] - r[1].1[t]));
        for (i, d) in diffs.enumerate() {
            let se = ses[0][i].max(ses[1][i]);
            if se > 0.0 {
                worst = worst.max(d.abs() / se);
            }
        }
    }
    pass &= worst <= 2.0;
    write!(detail, "largest method gap {worst:.2} MC SE")?;
    Ok(Outcome::new(pass, detail))
}

fn irr_identities() -> Result<Outcome> {
    let mut rng = unit_stream(MASTER, 6, 0);
    let decreasing = ReturnsDecomposition::from_fit(0.198, 0.055, 0.505, &[1.0; T + 1])?.private_profile();
    let mut flat_err: f64 = 0.0;
    let mut zero_err: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..20 {
        let b = rng.random_range(-0.05..0.3);
        let base: Vec<f64> = (0..40).map(|_| rng.random_range(0.2..3.0)).collect();
        let career = Career { baseline: Some(base), career_length: 40 };
        let run = |returns: Vec<f64>, limit: f64| irr(&IrrInput { returns, limit_return: limit, career: career.clone() });
        flat_err = flat_err.max((run(vec![b; T + 1], b)? - b).abs());
        zero_err = zero_err.max(run(vec![0.0; T + 1], 0.0)?.abs());
        let r = run(decreasing.clone(), 0.055)?;
        ordered &= 0.055 < r && r < 0.198;
    }
    Ok(Outcome::new(
        flat_err <= 1e-10 && zero_err <= 1e-10 && ordered,
        format!("flat max error {flat_err:.1e}, zero max {zero_err:.1e}, decreasing profile inside (b_inf, b0): {ordered}"),
    ))
}

fn partial_transparency() -> Result<Outcome> {
    const R: usize = 40;
    let p = calibrated();
    let mut pass = true;
    let mut detail = String::new();
    for (i, rho) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let paths: Vec<Vec<f64>> = (0..R)
            .into_par_iter()
            .map(|r| {
                let pn = panel(&p, ExposureRegime::Partial { rho }, seed(7, i * R + r))?;
                Ok(b_path(&profile(&pn, EstimatorTag::PartialIv, 0, 0)?))
            })
            .collect::<Result<_>>()?;
        let (z, t) =
            worst_mc_z(&paths, |t| (1.0 - rho) * private_return(&p, t).unwrap() + rho * social_return(&p, t).unwrap());
        pass &= z <= 3.0;
        write!(detail, "ρ={rho}: worst z {z:.2} (t={t}); ")?;
    }

    let hidden: Vec<ProfilePoint> = (0..=T).map(|t| ProfilePoint::new(t, private_return(&p, t).unwrap())).collect();
    let partial: Vec<ProfilePoint> = (0..=T)
        .map(|t| ProfilePoint::new(t, 0.5 * private_return(&p, t).unwrap() + 0.5 * social_return(&p, t).unwrap()))
        .collect();
    let r = partial_point_id(&hidden, &partial, None, &MixingOptions::default())?;
    let err = [r.b0 - 0.198, r.b_inf - 0.055, r.kappa_hat.unwrap_or(f64::NAN) - 0.505]
        .iter()
        .fold(0.0f64, |a, e| if e.is_nan() { f64::INFINITY } else { a.max(e.abs()) });
    pass &= err <= 1e-6;
    write!(detail, "noise-free point id error {err:.1e}; ")?;

    // Partial sample above the hidden one at entry.
    let rejected = matches!(
        partial_point_id(&partial, &hidden, None, &MixingOptions::default()),
        Err(Error::AssumptionRejected(_))
    );
    pass &= rejected;
    write!(detail, "ordering violation rejected: {rejected}")?;
    Ok(Outcome::new(pass, detail))
}

fn late_config(n: usize, shares: TypeShares) -> HeterogeneousConfig {
    HeterogeneousConfig {
        n_workers: n,
        horizon: T,
        seed: seed(8, 0),
        shares,
        treat_share: 0.5,
        means: PotentialMeans { always: [1.3, 1.5], never: [0.9, 1.0], complier: [1.1, 1.2] },
        sigma_psi_sq: 0.16,
        sigma_eps_sq: 0.16,
        regime: InformationRegime::Hidden,
    }
}

fn heterogeneous_late() -> Result<Outcome> {
    let mut detail = String::new();
    // Six workers, one per type and instrument value, earning the expected
    // wage of their cell. With equal type shares this is the population.
    let third = 1.0 / 3.0;
    let cfg6 = late_config(6, TypeShares { always: third, never: third, complier: 1.0 - 2.0 * third, defier: 0.0 });
    let truth6 = cfg6.truth()?;
    let kinds = [ComplianceType::AlwaysTaker, ComplianceType::NeverTaker, ComplianceType::Complier];
    let cells: Vec<(ComplianceType, u8)> = kinds.iter().flat_map(|k| [(*k, 0u8), (*k, 1)]).collect();
    let means = |k: ComplianceType| match k {
        ComplianceType::AlwaysTaker => cfg6.means.always,
        ComplianceType::NeverTaker => cfg6.means.never,
        _ => cfg6.means.complier,
    };
    let mut wage = Vec::new();
    for t in 0..=T {
        let th = theta(0.5, t)?;
        for &(k, d) in &cells {
            let s = k.schooling(d);
            wage.push(th * cfg6.prior_mean(s, None) + (1.0 - th) * means(k)[s as usize]);
        }
    }
    let six = HPanel::from_columns(
        T,
        (0..6).collect(),
        cells.iter().map(|c| c.1 as f64).collect(),
        cells.iter().map(|c| c.0.schooling(c.1) as f64).collect(),
        cells.iter().map(|c| c.0).collect(),
        wage.clone(),
    )?;
    let prof = late_profile(&six, &ProfileOptions::new(EstimatorTag::HiddenIv).with_resamples(0, 0))?;
    let mut enum_err: f64 = 0.0;
    for r in &prof.estimates.records {
        let w = &wage[r.t * 6..(r.t + 1) * 6];
        let mean_by = |d: u8, x: &dyn Fn(usize) -> f64| {
            let idx: Vec<usize> = (0..6).filter(|i| cells[*i].1 == d).collect();
            idx.iter().map(|i| x(*i)).sum::<f64>() / idx.len() as f64
        };
        let ws = |i: usize| w[i];
        let ss = |i: usize| cells[i].0.schooling(cells[i].1) as f64;
        let by_hand = (mean_by(1, &ws) - mean_by(0, &ws)) / (mean_by(1, &ss) - mean_by(0, &ss));
        let formula = truth6.upsilon + (1.0 - theta(0.5, r.t)?) * (truth6.upsilon_1 - truth6.upsilon_0);
        enum_err = enum_err.max((r.b_hat - by_hand).abs()).max((r.b_hat - formula).abs());
    }
    let mut pass = enum_err <= 1e-12;
    write!(detail, "6-worker oracle error {enum_err:.1e}; ")?;

    let cfg = late_config(N, TypeShares { always: 0.2, never: 0.3, complier: 0.5, defier: 0.0 });
    let truth = cfg.truth()?;
    let hp = simulate_heterogeneous(&cfg, &SkillPriceProfile::constant(T))?;
    let prof = late_profile(&hp, &ProfileOptions::new(EstimatorTag::HiddenIv).with_resamples(200, seed(8, 1)))?;
    let gap = truth.upsilon_1 - truth.upsilon_0;
    let at = |t: usize| prof.estimates.at(t).unwrap();
    let z0 = (at(0).b_hat - truth.upsilon).abs() / at(0).se.unwrap();
    let exact30 = truth.upsilon + (1.0 - theta(0.5, T)?) * gap;
    let z30 = (at(T).b_hat - exact30).abs() / at(T).se.unwrap();
    let z30_limit = (at(T).b_hat - (truth.upsilon + gap)).abs() / at(T).se.unwrap();
    let fit = late_learning_fit(&prof.estimates.points(), None, &MixingOptions::default())?;
    let k = fit.kappa_hat.unwrap_or(f64::NAN);
    pass &= z0 <= 3.0 && z30 <= 3.0 && (k - 0.5).abs() <= 0.07;
    write!(
        detail,
        "t=0 z {z0:.2}; t=30 z {z30:.2} (vs Υ+Υ₁−Υ₀: {z30_limit:.2}); κ̂ {k:.3}"
    )?;
    Ok(Outcome::new(pass, detail))
}

fn ols_bias(runs: &HiddenRuns) -> Result<Outcome> {
    let p = calibrated();
    let adj = adjustment_term(&p)?;
    let bias: Vec<Vec<f64>> = runs
        .ols
        .iter()
        .map(|path| path.iter().enumerate().map(|(t, b)| b - private_return(&p, t).unwrap()).collect())
        .collect();
    let (z, t) = worst_mc_z(&bias, |t| (1.0 - theta(0.505, t).unwrap()) * adj);
    Ok(Outcome::new(z <= 3.0, format!("worst z {z:.2} at t={t} over {REPS} replications")))
}

fn reweighting() -> Result<Outcome> {
    let mut detail = String::new();
    let p = calibrated();
    let mut cfg = SimulationConfig::new(50_000, T, ExposureRegime::Hidden, seed(10, 0));
    cfg.groups = GroupConfig::none();
    let sim = simulate_panel(&draw_population(&cfg, &p)?, &p, &cfg)?;
    let w = iv_margin_weights(&discretize_schooling(&sim, 8, 16)?)?;
    let sum_err = (w.weights.iter().sum::<f64>() - 1.0).abs();
    let mut pass = sum_err <= 1e-12;
    write!(detail, "|Σπ−1| = {sum_err:.1e}; ")?;

    // Wages linear in integer schooling.
    const R: usize = 20;
    let gaps: Vec<f64> = (0..R)
        .into_par_iter()
        .map(|r| {
            let n = 20_000;
            let mut rng = unit_stream(seed(10, 1), 10, r as u64);
            let d: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
            let s: Vec<f64> = d
                .iter()
                .map(|d| (11.0 + 1.5 * d + 2.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(7.0, 17.0))
                .collect();
            let wage: Vec<f64> = s.iter().map(|s| 0.08 * s + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            let cols = WorkerColumns { worker_id: (0..n as u64).collect(), d, s, ..Default::default() };
            let pn = discretize_schooling(&Panel::from_columns(0, cols, wage, None)?, 7, 17)?;
            let wols = weighted_ols_profile(&pn, &iv_margin_weights(&pn)?, &CovariateSpec::none())?;
            let ols = profile(&pn, EstimatorTag::Ols, 0, 0)?;
            Ok(wols.records[0].b_wols - ols.records[0].b_hat)
        })
        .collect::<Result<_>>()?;
    let (m, sd) = mean_sd(&gaps);
    let z = m.abs() / (sd / (R as f64).sqrt());
    pass &= z <= 3.0;
    write!(detail, "b_wols − OLS = {m:.2e} ({z:.2} MC SE); ")?;

    // The instrument moves schooling across the 9→10 margin only.
    let base = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
    let d: Vec<f64> = (0..120).map(|i| (i % 2) as f64).collect();
    let s: Vec<f64> =
        (0..120).map(|i| base[(i / 2) % 6] + if base[(i / 2) % 6] == 9.0 { d[i] } else { 0.0 }).collect();
    let wage: Vec<f64> = s.iter().map(|s| (0.3 * s).sin()).collect();
    let cols = WorkerColumns { worker_id: (0..120).collect(), d, s, ..Default::default() };
    let pn = discretize_schooling(&Panel::from_columns(0, cols, wage, None)?, 7, 12)?;
    let w = iv_margin_weights(&pn)?;
    let conc_err = w.margins().map(|(m, v)| (v - if m == 10 { 1.0 } else { 0.0 }).abs()).fold(0.0f64, f64::max);
    pass &= conc_err <= 1e-12;
    write!(detail, "single-margin weight error {conc_err:.1e}")?;
    Ok(Outcome::new(pass, detail))
}

/// `E[A | y]` and `Var(A | y)` by conditioning the joint normal.
fn conditioned(prior: f64, s0: f64, se: f64, signals: &[f64]) -> (f64, f64) {
    let t = signals.len();
    let cov = DMatrix::from_fn(t, t, |i, j| s0 + if i == j { se } else { 0.0 });
    let cross = DVector::from_element(t, s0);
    let centred = DVector::from_iterator(t, signals.iter().map(|y| y - prior));
    let gain = cov.cholesky().unwrap().solve(&cross);
    (prior + gain.dot(&centred), s0 - gain.dot(&cross))
}

fn posterior_oracle() -> Result<Outcome> {
    let mut rng = unit_stream(MASTER, 11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = rng.random_range(1..=10usize);
        let prior = rng.random_range(-2.0..2.0);
        let s0 = rng.random_range(0.01..2.0);
        let se = rng.random_range(0.01..2.0);
        let signals: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (mean, var) = conditioned(prior, s0, se, &signals);
        let xbar = signals.iter().sum::<f64>() / t as f64;
        let got = posterior_ability(prior, Some(xbar), t, s0 / (s0 + se))?;
        let pv = posterior_variance(&LearningParams::new(s0, se)?, t, 1.0)?;
        worst = worst.max((got - mean).abs()).max((pv.ability - var).abs());
    }
    Ok(Outcome::new(worst <= 1e-10, format!("1000 cases, max error {worst:.1e}")))
}

fn montecarlo_determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    std::fs::write(
        dir.path().join("mc.txt"),
        "simulation.n_workers = 5000\nestimation.bootstrap_resamples = 40\nreplication.n_reps = 8\n",
    )?;
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let out = format!("jobs{jobs}");
        let run = Command::new(env!("CARGO_BIN_EXE_emplearn"))
            .current_dir(dir.path())
            .args(["montecarlo", "--config", "mc.txt", "--jobs", jobs, "--out", &out])
            .output()?;
        ensure!(run.status.success(), "montecarlo --jobs {jobs} failed: {}", String::from_utf8_lossy(&run.stderr));
        outputs.push(std::fs::read(dir.path().join(out).join("montecarlo.csv"))?);
    }
    Ok(Outcome::new(outputs[0] == outputs[1], format!("{} bytes, jobs 1 vs 8", outputs[0].len())))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, r: Result<Outcome>| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    report(1, "weight on initial signal", weight_on_initial_signal());
    report(2, "hidden IV identification", hidden_iv_identification());
    report(3, "transparent IV identification", transparent_iv_identification());
    let runs = hidden_runs();
    report(4, "mixing fit round trip", runs.as_ref().map_err(|e| anyhow::anyhow!("{e:#}")).and_then(mixing_round_trip));
    report(5, "experience-varying skill prices", varying_skill_prices());
    report(6, "IRR identities", irr_identities());
    report(7, "partial transparency", partial_transparency());
    report(8, "heterogeneous LATE", heterogeneous_late());
    report(9, "OLS bias", runs.as_ref().map_err(|e| anyhow::anyhow!("{e:#}")).and_then(ols_bias));
    report(10, "reweighting identities", reweighting());
    report(11, "Gaussian learning oracle", posterior_oracle());
    report(12, "montecarlo determinism", montecarlo_determinism());
    println!("{} of 12 criteria failed ({:.0} s)", failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
