use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::panel::{opt, write_long_csv};
use crate::error::{invalid, Error, Result};
use crate::model::{kappa, learning_weight, InformationRegime, SkillPriceProfile};
use crate::rng::{purpose, unit_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComplianceType {
    AlwaysTaker,
    NeverTaker,
    Complier,
    Defier,
}

impl ComplianceType {
    /// Schooling chosen under instrument value `d`.
    pub fn schooling(self, d: u8) -> u8 {
        match self {
            ComplianceType::AlwaysTaker => 1,
            ComplianceType::NeverTaker => 0,
            ComplianceType::Complier => d,
            ComplianceType::Defier => 1 - d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeShares {
    pub always: f64,
    pub never: f64,
    pub complier: f64,
    pub defier: f64,
}

/// Mean potential productivity `[without schooling, with schooling]` by type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialMeans {
    pub always: [f64; 2],
    pub never: [f64; 2],
    pub complier: [f64; 2],
}

impl PotentialMeans {
    fn of(&self, kind: ComplianceType) -> [f64; 2] {
        match kind {
            ComplianceType::AlwaysTaker => self.always,
            ComplianceType::NeverTaker => self.never,
            ComplianceType::Complier | ComplianceType::Defier => self.complier,
        }
    }
}

/// Binary schooling with heterogeneous potential productivity. Wages are
/// in levels: `w_t = λ_t(θ_t·μ + (1−θ_t)·ξ̄_t)` where `μ` is the population
/// mean of realised productivity among workers with the same observables.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousConfig {
    pub n_workers: usize,
    pub horizon: usize,
    pub seed: u64,
    pub shares: TypeShares,
    pub treat_share: f64,
    pub means: PotentialMeans,
    pub sigma_psi_sq: f64,
    pub sigma_eps_sq: f64,
    pub regime: InformationRegime,
}

/// Population values of the complier effects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateTruth {
    /// Difference in employers' prior means between schooling levels.
    pub upsilon: f64,
    /// Complier mean of `ψ_1` minus the prior mean at `S = 1`.
    pub upsilon_1: f64,
    /// Complier mean of `ψ_0` minus the prior mean at `S = 0`.
    pub upsilon_0: f64,
    pub kappa: f64,
    pub complier_share: f64,
}

impl HeterogeneousConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.shares;
        if s.defier != 0.0 {
            return Err(Error::Unsupported("defiers violate monotonicity and are not supported".into()));
        }
        if [s.always, s.never, s.complier].iter().any(|x| !(*x >= 0.0)) {
            return Err(invalid("type shares must be nonnegative"));
        }
        if (s.always + s.never + s.complier - 1.0).abs() > 1e-12 {
            return Err(invalid("type shares must sum to one"));
        }
        if !(self.treat_share > 0.0 && self.treat_share < 1.0) {
            return Err(invalid("treatment share must lie in (0, 1)"));
        }
        if !(self.sigma_psi_sq > 0.0 && self.sigma_eps_sq > 0.0) {
            return Err(invalid("productivity and noise variances must be positive"));
        }
        if self.n_workers == 0 {
            return Err(invalid("at least one worker is required"));
        }
        let m = &self.means;
        if m.always.iter().chain(&m.never).chain(&m.complier).any(|x| !x.is_finite()) {
            return Err(invalid("potential means must be finite"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.sigma_psi_sq / (self.sigma_psi_sq + self.sigma_eps_sq)
    }

    /// Population mean of realised productivity given schooling, and given
    /// the instrument too when `d` is supplied.
    pub fn prior_mean(&self, s: u8, d: Option<u8>) -> f64 {
        let sh = &self.shares;
        let p = self.treat_share;
        let mut mass = 0.0;
        let mut total = 0.0;
        let mut add = |weight: f64, mean: f64| {
            mass += weight;
            total += weight * mean;
        };
        for (kind, share) in [
            (ComplianceType::AlwaysTaker, sh.always),
            (ComplianceType::NeverTaker, sh.never),
            (ComplianceType::Complier, sh.complier),
        ] {
            for dv in [0u8, 1] {
                if d.is_some_and(|x| x != dv) || kind.schooling(dv) != s {
                    continue;
                }
                let pd = if dv == 1 { p } else { 1.0 - p };
                add(share * pd, self.means.of(kind)[s as usize]);
            }
        }
        if mass > 0.0 {
            total / mass
        } else {
            self.means.of(ComplianceType::Complier)[s as usize]
        }
    }

    fn prior_for(&self, s: u8, d: u8) -> f64 {
        match self.regime {
            InformationRegime::Hidden => self.prior_mean(s, None),
            InformationRegime::Transparent => self.prior_mean(s, Some(d)),
        }
    }

    pub fn truth(&self) -> Result<LateTruth> {
        self.validate()?;
        let mu1 = self.prior_mean(1, None);
        let mu0 = self.prior_mean(0, None);
        Ok(LateTruth {
            upsilon: mu1 - mu0,
            upsilon_1: self.means.complier[1] - mu1,
            upsilon_0: self.means.complier[0] - mu0,
            kappa: kappa(self.sigma_psi_sq, self.sigma_eps_sq)?,
            complier_share: self.shares.complier,
        })
    }
}

/// Heterogeneous-returns panel, wages in levels, experience-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HPanel {
    horizon: usize,
    worker_id: Vec<u64>,
    d: Vec<f64>,
    s: Vec<f64>,
    kind: Vec<ComplianceType>,
    wage: Vec<f64>,
    psi: Option<Vec<f64>>,
}

impl HPanel {
    pub fn from_columns(
        horizon: usize,
        worker_id: Vec<u64>,
        d: Vec<f64>,
        s: Vec<f64>,
        kind: Vec<ComplianceType>,
        wage: Vec<f64>,
    ) -> Result<Self> {
        let n = worker_id.len();
        if n == 0 || d.len() != n || s.len() != n || kind.len() != n || wage.len() != n * (horizon + 1) {
            return Err(Error::InvalidInput("heterogeneous panel columns have inconsistent lengths".into()));
        }
        if d.iter().chain(&s).any(|x| *x != 0.0 && *x != 1.0) {
            return Err(Error::InvalidInput("schooling and instrument must be binary".into()));
        }
        Ok(Self { horizon, worker_id, d, s, kind, wage, psi: None })
    }

    pub fn n_workers(&self) -> usize {
        self.worker_id.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn kinds(&self) -> &[ComplianceType] {
        &self.kind
    }

    /// Realised productivity per worker, retained by the simulator for
    /// oracle checks.
    pub fn productivity(&self) -> Option<&[f64]> {
        self.psi.as_deref()
    }

    pub fn wage_at(&self, t: usize) -> Result<&[f64]> {
        if t > self.horizon {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon });
        }
        let n = self.n_workers();
        Ok(&self.wage[t * n..(t + 1) * n])
    }

    /// Same column layout as the main panel with `wage_level` in place of
    /// `ln_wage`; correlates and groups are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.n_workers();
        write_long_csv(out, "wage_level", (0..n).flat_map(move |i| {
            (0..=self.horizon).map(move |t| {
                [
                    self.worker_id[i].to_string(),
                    t.to_string(),
                    self.wage[t * n + i].to_string(),
                    (self.s[i] as u8).to_string(),
                    (self.d[i] as u8).to_string(),
                    opt::<f64>(None),
                    opt::<f64>(None),
                    opt::<u32>(None),
                    opt::<u32>(None),
                ]
            })
        }))
    }
}

/// Simulates the binary-schooling panel. Types are assigned by rank of a
/// uniform draw, so type counts match the shares up to rounding.
pub fn simulate_heterogeneous(config: &HeterogeneousConfig, skill_prices: &SkillPriceProfile) -> Result<HPanel> {
    config.validate()?;
    if skill_prices.horizon() != config.horizon {
        return Err(Error::OutOfHorizon { t: config.horizon, horizon: skill_prices.horizon() });
    }
    let n = config.n_workers;
    let years = config.horizon + 1;
    let kappa = config.kappa();
    let lambdas = skill_prices.as_slice();

    let mut ranks: Vec<(f64, usize)> = (0..n)
        .map(|i| (unit_stream(config.seed, purpose::HETEROGENEOUS, i as u64).random::<f64>(), i))
        .collect();
    ranks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_always = (n as f64 * config.shares.always).round() as usize;
    let n_never = ((n as f64 * config.shares.never).round() as usize).min(n - n_always);
    let mut kind = vec![ComplianceType::Complier; n];
    for (rank, &(_, i)) in ranks.iter().enumerate() {
        if rank < n_always {
            kind[i] = ComplianceType::AlwaysTaker;
        } else if rank < n_always + n_never {
            kind[i] = ComplianceType::NeverTaker;
        }
    }

    let sd_psi = config.sigma_psi_sq.sqrt();
    let sd_eps = config.sigma_eps_sq.sqrt();
    let rows: Vec<(u8, u8, f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = unit_stream(config.seed, purpose::HETEROGENEOUS, i as u64);
            let _rank_draw: f64 = rng.random();
            let d = u8::from(rng.random::<f64>() < config.treat_share);
            let s = kind[i].schooling(d);
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            let means = config.means.of(kind[i]);
            let psi = [means[0] + sd_psi * e0, means[1] + sd_psi * e1][s as usize];
            let prior = config.prior_for(s, d);
            let mut sum = 0.0;
            let wages = (0..years)
                .map(|t| {
                    let theta = learning_weight(kappa, t);
                    let belief = if t == 0 { prior } else { theta * prior + (1.0 - theta) * sum / t as f64 };
                    let e: f64 = StandardNormal.sample(&mut rng);
                    sum += psi + sd_eps * e;
                    lambdas[t] * belief
                })
                .collect();
            (d, s, psi, wages)
        })
        .collect();

    let mut wage = vec![0.0; n * years];
    for (i, (_, _, _, w)) in rows.iter().enumerate() {
        for t in 0..years {
            wage[t * n + i] = w[t];
        }
    }
    let mut panel = HPanel::from_columns(
        config.horizon,
        (0..n as u64).collect(),
        rows.iter().map(|r| r.0 as f64).collect(),
        rows.iter().map(|r| r.1 as f64).collect(),
        kind,
        wage,
    )?;
    panel.psi = Some(rows.iter().map(|r| r.2).collect());
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config(n: usize) -> HeterogeneousConfig {
        HeterogeneousConfig {
            n_workers: n,
            horizon: 30,
            seed: 8,
            shares: TypeShares { always: 0.2, never: 0.3, complier: 0.5, defier: 0.0 },
            treat_share: 0.5,
            means: PotentialMeans { always: [1.3, 1.5], never: [0.9, 1.0], complier: [1.1, 1.2] },
            sigma_psi_sq: 0.16,
            sigma_eps_sq: 0.16,
            regime: InformationRegime::Hidden,
        }
    }

    #[test]
    fn defiers_unsupported() {
        let mut c = config(10);
        c.shares.defier = 0.1;
        c.shares.complier = 0.4;
        assert!(matches!(
            simulate_heterogeneous(&c, &SkillPriceProfile::constant(30)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn type_counts_are_exact() {
        let c = config(1000);
        let p = simulate_heterogeneous(&c, &SkillPriceProfile::constant(30)).unwrap();
        let count = |k| p.kinds().iter().filter(|x| **x == k).count();
        assert_eq!(count(ComplianceType::AlwaysTaker), 200);
        assert_eq!(count(ComplianceType::NeverTaker), 300);
        assert_eq!(count(ComplianceType::Complier), 500);
        for i in 0..1000 {
            assert_eq!(p.s()[i] as u8, p.kinds()[i].schooling(p.d()[i] as u8));
        }
    }

    #[test]
    fn first_year_wage_is_prior_mean() {
        let c = config(500);
        let p = simulate_heterogeneous(&c, &SkillPriceProfile::constant(30)).unwrap();
        let w0 = p.wage_at(0).unwrap();
        for i in 0..500 {
            assert_eq!(w0[i], c.prior_mean(p.s()[i] as u8, None));
        }
    }

    #[test]
    fn degenerate_compliers_give_constant_gap() {
        let mut c = config(2000);
        c.shares = TypeShares { always: 0.0, never: 0.0, complier: 1.0, defier: 0.0 };
        c.means.complier = [1.0, 1.25];
        c.sigma_psi_sq = 1e-12;
        let p = simulate_heterogeneous(&c, &SkillPriceProfile::constant(30)).unwrap();
        for t in [0, 1, 10, 30] {
            let w = p.wage_at(t).unwrap();
            let mean = |s: f64| {
                let v: Vec<f64> = w.iter().zip(p.s()).filter(|(_, x)| **x == s).map(|(y, _)| *y).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            assert!((mean(1.0) - mean(0.0) - 0.25).abs() < 1e-5, "t={t}");
        }
    }

    #[test]
    fn expected_wage_given_productivity_mixes_prior_and_truth() {
        // w_t − θ_t·μ_S − (1−θ_t)·ψ is (1−θ_t) times a mean of noise.
        let c = config(100_000);
        let p = simulate_heterogeneous(&c, &SkillPriceProfile::constant(30)).unwrap();
        let psi = p.productivity().unwrap();
        for t in [1, 5, 30] {
            let theta = learning_weight(c.kappa(), t);
            let w = p.wage_at(t).unwrap();
            for s in [0.0, 1.0] {
                let r: Vec<f64> = (0..w.len())
                    .filter(|&i| p.s()[i] == s)
                    .map(|i| w[i] - theta * c.prior_mean(s as u8, None) - (1.0 - theta) * psi[i])
                    .collect();
                let n = r.len() as f64;
                let m = r.iter().sum::<f64>() / n;
                let sd = (r.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                assert!(m.abs() < 3.0 * sd / n.sqrt(), "t={t} s={s} {m}");
                let expected_sd = (1.0 - theta) * (c.sigma_eps_sq / t as f64).sqrt();
                assert!((sd / expected_sd - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn truth_values() {
        let c = config(10);
        let t = c.truth().unwrap();
        let mu1 = (0.2 * 1.5 + 0.25 * 1.2) / 0.45;
        let mu0 = (0.3 * 0.9 + 0.25 * 1.1) / 0.55;
        assert!((t.upsilon - (mu1 - mu0)).abs() < 1e-14);
        assert!((t.upsilon_1 - (1.2 - mu1)).abs() < 1e-14);
        assert!((t.upsilon_0 - (1.1 - mu0)).abs() < 1e-14);
        assert_eq!(t.kappa, 0.5);
    }
}
