//! CSV and JSON readers and writers.
//!
//! Longitudinal data: one row per observation with columns
//! `id,time,dv,amt_bolus,rate,t_inf`; the dose columns repeat on every row
//! of a subject and must agree. Covariates live in a separate file keyed by
//! `id`. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nlmesel::model::{Dataset, SubjectRecord};
use nlmesel::sapg::TraceRecord;
use nlmesel::DosingRegimen;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Deserialize)]
struct ObsRow {
    id: String,
    time: f64,
    dv: f64,
    amt_bolus: f64,
    rate: f64,
    t_inf: f64,
}

pub fn read_dataset(data: &Path, covariates: Option<&Path>, l: usize) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(data).with_context(|| format!("opening {}", data.display()))?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, (Vec<f64>, Vec<f64>, DosingRegimen)> = BTreeMap::new();
    for (line, rec) in rdr.deserialize::<ObsRow>().enumerate() {
        let r = rec.with_context(|| format!("{}: row {}", data.display(), line + 2))?;
        let dosing = DosingRegimen {
            bolus: r.amt_bolus,
            infusion_rate: r.rate,
            infusion_duration: r.t_inf,
        };
        let entry = rows.entry(r.id.clone()).or_insert_with(|| {
            order.push(r.id.clone());
            (Vec::new(), Vec::new(), dosing)
        });
        if entry.2 != dosing {
            bail!("{}: subject {} has inconsistent dose columns", data.display(), r.id);
        }
        entry.0.push(r.time);
        entry.1.push(r.dv);
    }

    let covs = match covariates {
        Some(path) => read_covariates(path)?,
        None => BTreeMap::new(),
    };
    let k = covs.values().next().map_or(0, Vec::len);
    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let (times, observations, dosing) = rows.remove(&id).expect("id recorded");
        let covariates = if covariates.is_some() {
            covs.get(&id)
                .cloned()
                .ok_or_else(|| anyhow!("subject {id} has no covariate row"))?
        } else {
            Vec::new()
        };
        if covariates.len() != k {
            bail!("subject {id}: expected {k} covariates, got {}", covariates.len());
        }
        subjects.push(SubjectRecord {
            id,
            times,
            observations,
            covariates,
            dosing,
        });
    }
    Ok(Dataset::new(subjects, l)?)
}

fn read_covariates(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        bail!("{}: first column must be `id`", path.display());
    }
    let mut out = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        if out.insert(id.clone(), vals).is_some() {
            bail!("{}: duplicate id {id}", path.display());
        }
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = csv_writer(&dir.join("data.csv"))?;
    w.write_record(["id", "time", "dv", "amt_bolus", "rate", "t_inf"])?;
    for s in &dataset.subjects {
        for (t, y) in s.times.iter().zip(&s.observations) {
            w.write_record([
                s.id.clone(),
                fmt_f64(*t),
                fmt_f64(*y),
                fmt_f64(s.dosing.bolus),
                fmt_f64(s.dosing.infusion_rate),
                fmt_f64(s.dosing.infusion_duration),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("covariates.csv"))?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=dataset.dims.k).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    for s in &dataset.subjects {
        let mut row = vec![s.id.clone()];
        row.extend(s.covariates.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let l = trace.first().map_or(0, |t| t.mu.len());
    let mut header: Vec<String> = ["iteration", "objective", "delta_sa", "sigma", "nnz_beta", "nnz_gamma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=l).map(|i| format!("mu{i}")));
    header.extend((1..=l).map(|i| format!("delta{i}")));
    w.write_record(&header)?;
    for t in trace {
        let mut row = vec![
            t.iteration.to_string(),
            fmt_f64(t.objective),
            fmt_f64(t.delta_sa),
            fmt_f64(t.sigma),
            t.nnz_beta.to_string(),
            t.nnz_gamma.to_string(),
        ];
        row.extend(t.mu.iter().chain(&t.delta).map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
