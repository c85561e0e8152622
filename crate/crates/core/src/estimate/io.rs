use std::io::{Read, Write};

use super::iv::{EstimatorTag, ExperienceEstimates, ExperienceRecord};
use super::mixing::{LambdaSource, MixingFit};
use crate::error::{Error, Result};
use crate::kv::KvDocument;

/// Long format, columns `estimator, t, b_hat, se, n`; a missing standard
/// error is an empty field.
pub fn write_estimates_csv<W: Write>(out: W, estimates: &[&ExperienceEstimates]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "t", "b_hat", "se", "n"])?;
    for e in estimates {
        for r in &e.records {
            w.write_record([
                e.estimator.as_str().to_string(),
                r.t.to_string(),
                r.b_hat.to_string(),
                r.se.map(|s| s.to_string()).unwrap_or_default(),
                r.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by estimator in order of first appearance. Bootstrap draws
/// and first-stage results are not part of the file.
pub fn read_estimates_csv<R: Read>(input: R) -> Result<Vec<ExperienceEstimates>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["estimator", "t", "b_hat", "se", "n"] {
        return Err(Error::Parse(format!("unexpected estimates header {:?}", headers)));
    }
    let mut out: Vec<ExperienceEstimates> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse(format!("estimates row {}: bad {what}", i + 1));
        let tag = EstimatorTag::parse(&row[0]).ok_or_else(|| bad("estimator"))?;
        let t: usize = row[1].parse().map_err(|_| bad("t"))?;
        let b_hat: f64 = row[2].parse().map_err(|_| bad("b_hat"))?;
        let se = if row[3].is_empty() { None } else { Some(row[3].parse::<f64>().map_err(|_| bad("se"))?) };
        let n: usize = row[4].parse().map_err(|_| bad("n"))?;
        let rec = ExperienceRecord { t, b_hat, se, n };
        match out.iter_mut().find(|e| e.estimator == tag) {
            Some(e) => {
                if e.records.last().is_some_and(|r| r.t >= t) {
                    return Err(bad("ordering: t must increase within an estimator"));
                }
                e.records.push(rec)
            }
            None => out.push(ExperienceEstimates {
                estimator: tag,
                records: vec![rec],
                gaps: Vec::new(),
                first_stage: None,
                bootstrap: None,
            }),
        }
    }
    Ok(out)
}

/// Flat summary of a mixing fit: `kappa_hat, b0, b_inf, rss, identified,
/// mode`, then the skill prices as `lambda.<t>`.
pub fn fit_summary(fit: &MixingFit, mode: &str) -> KvDocument {
    let mut d = KvDocument::new();
    d.set("kappa_hat", fit.kappa_hat.map_or("NA".to_string(), |k| k.to_string()))
        .set("b0", fit.b0)
        .set("b_inf", fit.b_inf)
        .set("rss", fit.rss)
        .set("identified", fit.identified)
        .set("mode", mode)
        .set("lambda_source", fit.lambda_source.as_str())
        .set("n_points", fit.n_points);
    for (t, l) in fit.lambda.iter().enumerate() {
        d.set(format!("lambda.{t}"), l);
    }
    d
}

/// Inverse of [`fit_summary`]; returns the fit and its mode.
pub fn parse_fit_summary(doc: &KvDocument) -> Result<(MixingFit, String)> {
    let num = |k: &str| -> Result<f64> {
        doc.parse_value::<f64>(k)?.ok_or_else(|| Error::Parse(format!("missing key `{k}`")))
    };
    let kappa_hat = match doc.require("kappa_hat")? {
        "NA" => None,
        v => Some(v.parse().map_err(|_| Error::Parse(format!("cannot parse kappa_hat `{v}`")))?),
    };
    let lambda_source = match doc.get("lambda_source").unwrap_or("constant") {
        "constant" => LambdaSource::Constant,
        "fixed" => LambdaSource::Fixed,
        "estimated" => LambdaSource::Estimated,
        v => return Err(Error::Parse(format!("unknown lambda_source `{v}`"))),
    };
    let mut lambda = Vec::new();
    while let Some(v) = doc.parse_value::<f64>(&format!("lambda.{}", lambda.len()))? {
        lambda.push(v);
    }
    let fit = MixingFit {
        b0: num("b0")?,
        b_inf: num("b_inf")?,
        kappa_hat,
        lambda,
        lambda_source,
        rss: num("rss")?,
        identified: doc.parse_value("identified")?.ok_or_else(|| Error::Parse("missing key `identified`".into()))?,
        n_points: doc.parse_value("n_points")?.unwrap_or(0),
    };
    Ok((fit, doc.require("mode")?.to_string()))
}
