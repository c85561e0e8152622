//! Three-panel text report of a run: fitted parameters, the weight on the
//! initial signal, and the IRR split.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use emplearn::estimate::parse_fit_summary;
use emplearn::kv::KvDocument;

use crate::experiment::{DECOMPOSITION_FILE, FIT_FILE, SUMMARY_FILE};

pub const WEIGHT_YEARS: [usize; 3] = [5, 10, 15];

/// Inputs of the report; `None` marks a missing file.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub fit: Option<KvDocument>,
    /// `(t, θ_t)` rows of the decomposition.
    pub weights: Option<Vec<(usize, f64)>>,
    pub summary: Option<KvDocument>,
}

impl ReportInputs {
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Option<String>> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            fs::read_to_string(&path).map(Some).with_context(|| format!("cannot read {}", path.display()))
        };
        let fit = read(FIT_FILE)?.map(|t| KvDocument::parse(&t)).transpose()?;
        let summary = read(SUMMARY_FILE)?.map(|t| KvDocument::parse(&t)).transpose()?;
        let weights = read(DECOMPOSITION_FILE)?.map(|t| parse_weights(&t)).transpose()?;
        Ok(Self { fit, weights, summary })
    }
}

fn parse_weights(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("decomposition has no `{name}` column"));
    let (ti, thi) = (col("t")?, col("theta")?);
    rdr.records()
        .map(|row| {
            let row = row?;
            Ok((row[ti].parse()?, row[thi].parse()?))
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn num(doc: &KvDocument, key: &str) -> Result<f64> {
    doc.parse_value::<f64>(key)?.with_context(|| format!("missing `{key}`"))
}

/// Renders the report. Fails listing every missing section.
pub fn render(inputs: &ReportInputs) -> Result<String> {
    let mut missing = Vec::new();
    if inputs.fit.is_none() {
        missing.push(format!("parameters of interest ({FIT_FILE})"));
    }
    if inputs.weights.is_none() {
        missing.push(format!("weight on initial signal ({DECOMPOSITION_FILE})"));
    }
    if inputs.summary.is_none() {
        missing.push(format!("internal rate of return ({SUMMARY_FILE})"));
    }
    if !missing.is_empty() {
        bail!("report inputs missing: {}", missing.join("; "));
    }
    let (fit_doc, weights, summary) =
        (inputs.fit.as_ref().unwrap(), inputs.weights.as_ref().unwrap(), inputs.summary.as_ref().unwrap());
    let (fit, mode) = parse_fit_summary(fit_doc)?;

    let mut out = String::new();
    writeln!(out, "Parameters of interest ({mode})")?;
    writeln!(out, "  {:<28}{}", "initial return b0", pct(fit.b0))?;
    writeln!(out, "  {:<28}{}", "limit return b_inf", pct(fit.b_inf))?;
    let kappa = fit.kappa_hat.map_or("not identified".to_string(), |k| format!("{k:.3}"));
    writeln!(out, "  {:<28}{}", "speed of learning kappa", kappa)?;
    if let Some(fs) = fit_doc.parse_value::<f64>("first_stage")? {
        writeln!(out, "  {:<28}{fs:.3}", "first stage")?;
    }
    writeln!(out)?;
    writeln!(out, "Weight on initial signal")?;
    for t in WEIGHT_YEARS {
        let cell = weights.iter().find(|(s, _)| *s == t).map_or("n/a".to_string(), |(_, th)| pct(*th));
        writeln!(out, "  {:<28}{}", format!("t = {t}"), cell)?;
    }
    writeln!(out)?;
    writeln!(out, "Internal rate of return")?;
    writeln!(out, "  {:<28}{}", "private IRR", pct(num(summary, "private_irr")?))?;
    writeln!(out, "  {:<28}{}", "social return", pct(num(summary, "social_return")?))?;
    writeln!(out, "  {:<28}{}", "signaling value", pct(num(summary, "signaling_share")?))?;
    Ok(out)
}

pub fn emit_report(dir: &Path) -> Result<String> {
    render(&ReportInputs::load(dir)?)
}
