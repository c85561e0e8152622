use std::collections::HashMap;
use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::population::{SimulationConfig, WorkerDraw};
use crate::error::{invalid, Error, Result};
use crate::model::{InformationRegime, StructuralParams, WageSetter};
use crate::rng::{purpose, unit_stream};

/// Worker-level columns of a panel, one entry per worker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerColumns {
    pub worker_id: Vec<u64>,
    pub d: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub cohort: Option<Vec<u32>>,
    pub region: Option<Vec<u32>>,
    /// Resolved exposure per worker; kept for oracles, never read by
    /// estimators.
    pub exposure: Option<Vec<InformationRegime>>,
}

/// A balanced worker-by-experience panel. Wages are stored experience-major:
/// all workers at `t = 0`, then all at `t = 1`, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    horizon: usize,
    workers: WorkerColumns,
    s_continuous: Option<Vec<f64>>,
    grid: Option<(i32, i32)>,
    ln_wage: Vec<f64>,
    signal: Option<Vec<f64>>,
}

/// One row of a panel in long format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelRecord {
    pub worker_id: u64,
    pub t: usize,
    pub ln_wage: f64,
    pub s: f64,
    pub d: f64,
    pub z: Option<f64>,
    pub q: Option<f64>,
    pub group_cohort: Option<u32>,
    pub group_region: Option<u32>,
    pub signal: Option<f64>,
}

impl Panel {
    /// Builds a panel from worker columns and experience-major wages.
    pub fn from_columns(
        horizon: usize,
        workers: WorkerColumns,
        ln_wage: Vec<f64>,
        signal: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = workers.worker_id.len();
        if n == 0 {
            return Err(Error::InvalidInput("panel has no workers".into()));
        }
        let same = |len: usize| len == n;
        let ok = same(workers.d.len())
            && same(workers.s.len())
            && workers.z.as_ref().is_none_or(|c| same(c.len()))
            && workers.q.as_ref().is_none_or(|c| same(c.len()))
            && workers.cohort.as_ref().is_none_or(|c| same(c.len()))
            && workers.region.as_ref().is_none_or(|c| same(c.len()))
            && workers.exposure.as_ref().is_none_or(|c| same(c.len()));
        if !ok {
            return Err(Error::InvalidInput("worker columns have different lengths".into()));
        }
        let cells = n * (horizon + 1);
        if ln_wage.len() != cells || signal.as_ref().is_some_and(|s| s.len() != cells) {
            return Err(Error::InvalidInput(format!(
                "expected {cells} wage cells for {n} workers over {} years",
                horizon + 1
            )));
        }
        if workers.d.iter().any(|&d| d != 0.0 && d != 1.0) {
            return Err(Error::InvalidInput("instrument must be 0 or 1".into()));
        }
        if ln_wage.iter().chain(&workers.s).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite wage or schooling".into()));
        }
        Ok(Self { horizon, workers, s_continuous: None, grid: None, ln_wage, signal })
    }

    /// Rebuilds a panel from long-format rows. Every worker must appear at
    /// every experience `0..=T`; worker order follows first appearance.
    pub fn from_records(records: &[PanelRecord]) -> Result<Self> {
        let horizon = records.iter().map(|r| r.t).max().ok_or_else(|| Error::InvalidInput("no records".into()))?;
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut first: Vec<&PanelRecord> = Vec::new();
        for r in records {
            index.entry(r.worker_id).or_insert_with(|| {
                first.push(r);
                first.len() - 1
            });
        }
        let n = first.len();
        let mut wage = vec![f64::NAN; n * (horizon + 1)];
        let mut seen = vec![false; n * (horizon + 1)];
        let has_signal = records.iter().all(|r| r.signal.is_some());
        let mut signal = has_signal.then(|| vec![0.0; n * (horizon + 1)]);
        for r in records {
            let i = index[&r.worker_id];
            let w = &first[i];
            let consistent = r.s == w.s
                && r.d == w.d
                && r.z == w.z
                && r.q == w.q
                && r.group_cohort == w.group_cohort
                && r.group_region == w.group_region;
            if !consistent {
                return Err(Error::Parse(format!("worker {} has time-varying attributes", r.worker_id)));
            }
            let cell = r.t * n + i;
            if seen[cell] {
                return Err(Error::Parse(format!("duplicate record for worker {} at t={}", r.worker_id, r.t)));
            }
            seen[cell] = true;
            wage[cell] = r.ln_wage;
            if let (Some(sig), Some(x)) = (signal.as_mut(), r.signal) {
                sig[cell] = x;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse("panel is not balanced".into()));
        }
        let optional = |get: &dyn Fn(&PanelRecord) -> Option<f64>| -> Result<Option<Vec<f64>>> {
            let present = first.iter().filter(|r| get(r).is_some()).count();
            match present {
                0 => Ok(None),
                p if p == n => Ok(Some(first.iter().map(|r| get(r).unwrap()).collect())),
                _ => Err(Error::Parse("optional column is only partly filled".into())),
            }
        };
        let group = |get: &dyn Fn(&PanelRecord) -> Option<u32>| -> Result<Option<Vec<u32>>> {
            let present = first.iter().filter(|r| get(r).is_some()).count();
            match present {
                0 => Ok(None),
                p if p == n => Ok(Some(first.iter().map(|r| get(r).unwrap()).collect())),
                _ => Err(Error::Parse("group column is only partly filled".into())),
            }
        };
        let workers = WorkerColumns {
            worker_id: first.iter().map(|r| r.worker_id).collect(),
            d: first.iter().map(|r| r.d).collect(),
            s: first.iter().map(|r| r.s).collect(),
            z: optional(&|r| r.z)?,
            q: optional(&|r| r.q)?,
            cohort: group(&|r| r.group_cohort)?,
            region: group(&|r| r.group_region)?,
            exposure: None,
        };
        signal = signal.filter(|_| has_signal);
        Self::from_columns(horizon, workers, wage, signal)
    }

    pub fn n_workers(&self) -> usize {
        self.workers.worker_id.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn workers(&self) -> &WorkerColumns {
        &self.workers
    }

    pub fn worker_ids(&self) -> &[u64] {
        &self.workers.worker_id
    }

    pub fn d(&self) -> &[f64] {
        &self.workers.d
    }

    /// Schooling used by estimators (the discretised values after
    /// [`discretize_schooling`]).
    pub fn s(&self) -> &[f64] {
        &self.workers.s
    }

    /// Schooling before discretisation, if the panel was discretised.
    pub fn s_continuous(&self) -> Option<&[f64]> {
        self.s_continuous.as_deref()
    }

    pub fn grid(&self) -> Option<(i32, i32)> {
        self.grid
    }

    pub fn z(&self) -> Option<&[f64]> {
        self.workers.z.as_deref()
    }

    pub fn q(&self) -> Option<&[f64]> {
        self.workers.q.as_deref()
    }

    pub fn cohort(&self) -> Option<&[u32]> {
        self.workers.cohort.as_deref()
    }

    pub fn region(&self) -> Option<&[u32]> {
        self.workers.region.as_deref()
    }

    pub fn exposure(&self) -> Option<&[InformationRegime]> {
        self.workers.exposure.as_deref()
    }

    /// Log wages of all workers at experience `t`.
    pub fn ln_wage_at(&self, t: usize) -> Result<&[f64]> {
        if t > self.horizon {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon });
        }
        let n = self.n_workers();
        Ok(&self.ln_wage[t * n..(t + 1) * n])
    }

    /// Output signals of all workers realised at experience `t`.
    pub fn signal_at(&self, t: usize) -> Option<&[f64]> {
        let n = self.n_workers();
        self.signal.as_ref().filter(|_| t <= self.horizon).map(|s| &s[t * n..(t + 1) * n])
    }

    /// Long-format rows, worker by worker.
    pub fn records(&self) -> impl Iterator<Item = PanelRecord> + '_ {
        let n = self.n_workers();
        let w = &self.workers;
        (0..n).flat_map(move |i| {
            (0..=self.horizon).map(move |t| PanelRecord {
                worker_id: w.worker_id[i],
                t,
                ln_wage: self.ln_wage[t * n + i],
                s: w.s[i],
                d: w.d[i],
                z: w.z.as_ref().map(|c| c[i]),
                q: w.q.as_ref().map(|c| c[i]),
                group_cohort: w.cohort.as_ref().map(|c| c[i]),
                group_region: w.region.as_ref().map(|c| c[i]),
                signal: self.signal.as_ref().map(|c| c[t * n + i]),
            })
        })
    }

    /// Columns `worker_id, t, ln_wage, S, D, Z, Q, group_cohort,
    /// group_region`; absent optional columns are written as empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_long_csv(out, "ln_wage", self.records().map(|r| {
            [
                r.worker_id.to_string(),
                r.t.to_string(),
                r.ln_wage.to_string(),
                r.s.to_string(),
                (r.d as u8).to_string(),
                opt(r.z),
                opt(r.q),
                opt(r.group_cohort),
                opt(r.group_region),
            ]
        }))
    }

    /// Reads the format written by [`Panel::write_csv`]. Lines starting with
    /// `#` are comments.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let records = read_long_csv(input, "ln_wage")?
            .into_iter()
            .map(|r| PanelRecord {
                worker_id: r.worker_id,
                t: r.t,
                ln_wage: r.outcome,
                s: r.s,
                d: r.d,
                z: r.z,
                q: r.q,
                group_cohort: r.cohort,
                group_region: r.region,
                signal: None,
            })
            .collect::<Vec<_>>();
        Self::from_records(&records)
    }
}

pub(crate) fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) const COLUMNS: [&str; 9] =
    ["worker_id", "t", "OUTCOME", "S", "D", "Z", "Q", "group_cohort", "group_region"];

pub(crate) fn write_long_csv<W: Write>(
    out: W,
    outcome: &str,
    rows: impl Iterator<Item = [String; 9]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = COLUMNS.map(|c| if c == "OUTCOME" { outcome } else { c });
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct LongRow {
    pub worker_id: u64,
    pub t: usize,
    pub outcome: f64,
    pub s: f64,
    pub d: f64,
    pub z: Option<f64>,
    pub q: Option<f64>,
    pub cohort: Option<u32>,
    pub region: Option<u32>,
}

pub(crate) fn read_long_csv<R: Read>(input: R, outcome: &str) -> Result<Vec<LongRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = COLUMNS.map(|c| if c == "OUTCOME" { outcome } else { c });
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected columns {}, found {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
        rec[i].trim().parse().map_err(|_| Error::Parse(format!("line {line}: bad value '{}'", &rec[i])))
    }
    fn optional<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<T>> {
        if rec[i].trim().is_empty() {
            Ok(None)
        } else {
            field(rec, i, line).map(Some)
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let d: f64 = field(&rec, 4, line)?;
        rows.push(LongRow {
            worker_id: field(&rec, 0, line)?,
            t: field(&rec, 1, line)?,
            outcome: field(&rec, 2, line)?,
            s: field(&rec, 3, line)?,
            d,
            z: optional(&rec, 5, line)?,
            q: optional(&rec, 6, line)?,
            cohort: optional(&rec, 7, line)?,
            region: optional(&rec, 8, line)?,
        });
    }
    Ok(rows)
}

struct Setters {
    hidden: WageSetter,
    transparent: Option<WageSetter>,
}

impl Setters {
    fn new(structure: &StructuralParams, workers: &[WorkerDraw]) -> Result<Self> {
        let hidden = WageSetter::new(structure, InformationRegime::Hidden)?;
        let transparent = workers
            .iter()
            .any(|w| w.exposure == InformationRegime::Transparent)
            .then(|| WageSetter::new(structure, InformationRegime::Transparent))
            .transpose()?;
        Ok(Self { hidden, transparent })
    }

    fn for_regime(&self, regime: InformationRegime) -> &WageSetter {
        match regime {
            InformationRegime::Hidden => &self.hidden,
            InformationRegime::Transparent => self.transparent.as_ref().expect("transparent setter built"),
        }
    }
}

// Wages and signals for one worker given standardised noise draws.
fn worker_path(
    w: &WorkerDraw,
    structure: &StructuralParams,
    setter: &WageSetter,
    std_noise: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = w.schooling_shift;
    let q = w.q.unwrap_or(0.0);
    // Employers net out the known group shift before projecting ability,
    // then add back its causal effect.
    let prior_mean = setter.prior().mean(w.s - g, q - structure.delta_qs() * g, w.d as f64)
        + structure.delta_as * g;
    let sd = structure.sigma_eps_sq.sqrt();
    let mut wages = Vec::with_capacity(std_noise.len());
    let mut signals = Vec::with_capacity(std_noise.len());
    let mut sum = 0.0;
    for (t, e) in std_noise.iter().enumerate() {
        let mean = (t > 0).then(|| sum / t as f64);
        wages.push(setter.log_wage_given_prior(prior_mean, w.s, q, mean, t)? + w.wage_shift);
        let xi = w.a + sd * e;
        signals.push(xi);
        sum += xi;
    }
    Ok((wages, signals))
}

/// Log-wage path of one worker for given standardised noise draws
/// (`ε_t = σ_ε·noise_t`), one per year of the horizon.
pub fn wage_path(w: &WorkerDraw, structure: &StructuralParams, std_noise: &[f64]) -> Result<Vec<f64>> {
    if std_noise.len() != structure.horizon() + 1 {
        return Err(Error::OutOfHorizon { t: std_noise.len().saturating_sub(1), horizon: structure.horizon() });
    }
    let setter = WageSetter::new(structure, w.exposure)?;
    Ok(worker_path(w, structure, &setter, std_noise)?.0)
}

/// Generates output signals and wages for every worker and experience year.
pub fn simulate_panel(
    workers: &[WorkerDraw],
    structure: &StructuralParams,
    config: &SimulationConfig,
) -> Result<Panel> {
    config.check_structure(structure)?;
    if workers.is_empty() {
        return Err(invalid("no workers to simulate"));
    }
    let setters = Setters::new(structure, workers)?;
    let years = config.horizon + 1;
    let paths = workers
        .par_iter()
        .map(|w| {
            let mut rng = unit_stream(config.seed, purpose::WAGE_NOISE, w.id);
            let noise: Vec<f64> = (0..years).map(|_| StandardNormal.sample(&mut rng)).collect();
            worker_path(w, structure, setters.for_regime(w.exposure), &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = workers.len();
    let mut ln_wage = vec![0.0; n * years];
    let mut signal = vec![0.0; n * years];
    for (i, (wages, sig)) in paths.iter().enumerate() {
        for t in 0..years {
            ln_wage[t * n + i] = wages[t];
            signal[t * n + i] = sig[t];
        }
    }
    let columns = WorkerColumns {
        worker_id: workers.iter().map(|w| w.id).collect(),
        d: workers.iter().map(|w| w.d as f64).collect(),
        s: workers.iter().map(|w| w.s).collect(),
        z: workers.iter().map(|w| w.z).collect(),
        q: workers.iter().map(|w| w.q).collect(),
        cohort: Some(workers.iter().map(|w| w.cohort).collect()),
        region: Some(workers.iter().map(|w| w.region).collect()),
        exposure: Some(workers.iter().map(|w| w.exposure).collect()),
    };
    Panel::from_columns(config.horizon, columns, ln_wage, Some(signal))
}

/// Rounds schooling to the nearest year on `[s_min, s_max]`, clamping at the
/// ends. The original values stay available via [`Panel::s_continuous`].
pub fn discretize_schooling(panel: &Panel, s_min: i32, s_max: i32) -> Result<Panel> {
    if s_min > s_max {
        return Err(invalid(format!("empty schooling grid [{s_min}, {s_max}]")));
    }
    let original = panel.s_continuous.clone().unwrap_or_else(|| panel.workers.s.clone());
    let mut out = panel.clone();
    out.workers.s = original
        .iter()
        .map(|s| s.round().clamp(s_min as f64, s_max as f64))
        .collect();
    out.s_continuous = Some(original);
    out.grid = Some((s_min, s_max));
    Ok(out)
}
