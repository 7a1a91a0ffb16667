//! `sweep`: one attack-and-evaluate row per (method, m, l) cell, flushed as
//! soon as the cell finishes so an interrupted run can be resumed.

use std::collections::HashSet;
use std::path::Path;

use hotcold::experiment::{run_cell, CellSetup, Method};
use hotcold::objective::mean;
use hotcold::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::SweepArgs;
use crate::commands::{append_file, emit};
use crate::config::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub m: usize,
    pub l: f64,
    pub ap: f64,
    pub asr: f64,
    pub lambda: f64,
    pub pixel_value: f64,
    /// Mean active cells of the optimized genomes; empty for baselines.
    pub n: Option<f64>,
    pub seeds: usize,
}

type CellKey = (String, usize, u64);

fn key(method: &str, m: usize, l: f64) -> CellKey {
    (method.to_owned(), m, l.to_bits())
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Load {
        entry: path.display().to_string(),
        reason: e.to_string(),
    })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Load {
                entry: format!("{}:{}", path.display(), i + 2),
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn sweep(settings: &Settings, a: &SweepArgs) -> Result<()> {
    let search = settings.search(&a.search)?;
    let methods = a.methods.iter().map(|s| Method::parse(s)).collect::<Result<Vec<_>>>()?;
    if a.m_list.is_empty() || a.l_list.is_empty() || methods.is_empty() {
        return Err(Error::Argument(
            "sweep needs at least one m, one l and one method".into(),
        ));
    }
    for &m in &a.m_list {
        for &l in &a.l_list {
            search.template(m, l)?;
        }
    }
    let seeds = if a.seeds.is_empty() {
        vec![search.seed]
    } else {
        a.seeds.clone()
    };
    let det_cfg = settings.detector()?;
    let eval = settings.eval()?;

    let existing = a.out.exists() && std::fs::metadata(&a.out).map(|m| m.len() > 0).unwrap_or(false);
    if existing && !a.resume {
        return Err(Error::Argument(format!(
            "{} already exists; pass --resume to complete it or choose another --out",
            a.out.display()
        )));
    }
    let done: HashSet<CellKey> = if existing {
        read_rows(&a.out)?.iter().map(|r| key(&r.method, r.m, r.l)).collect()
    } else {
        HashSet::new()
    };

    let train = settings.load(&a.train)?;
    let test = settings.load(&a.test)?;
    let detector = det_cfg.build()?;

    let mut writer = csv::WriterBuilder::new()
        .has_headers(!existing)
        .from_writer(append_file(&a.out)?);
    let (mut ran, mut skipped) = (0usize, 0usize);
    for &m in &a.m_list {
        for &l in &a.l_list {
            let setup = CellSetup {
                train: &train,
                test: &test,
                detector: detector.as_ref(),
                template: search.template(m, l)?,
                loss: search.loss.clone(),
                options: search.options.clone(),
                epochs: search.epochs,
                eval,
            };
            for &method in &methods {
                if done.contains(&key(method.label(), m, l)) {
                    skipped += 1;
                    continue;
                }
                let outcomes = seeds
                    .iter()
                    .map(|&seed| run_cell(&setup, method, seed))
                    .collect::<Result<Vec<_>>>()?;
                let aps: Vec<f64> = outcomes.iter().map(|o| o.report.ap).collect();
                let asrs: Vec<f64> = outcomes.iter().map(|o| o.report.asr.unwrap_or(0.0)).collect();
                let ns: Vec<f64> = outcomes
                    .iter()
                    .filter_map(|o| o.genome().map(|g| g.active_cells() as f64))
                    .collect();
                let row = SweepRow {
                    method: method.label().to_owned(),
                    m,
                    l,
                    ap: mean(&aps),
                    asr: mean(&asrs),
                    lambda: search.loss.lambda,
                    pixel_value: search.pixel_value,
                    n: (!ns.is_empty()).then(|| mean(&ns)),
                    seeds: seeds.len(),
                };
                let flush_err = |e: std::io::Error| Error::io(&a.out, e);
                writer.serialize(&row).map_err(|e| Error::Load {
                    entry: a.out.display().to_string(),
                    reason: e.to_string(),
                })?;
                writer.flush().map_err(flush_err)?;
                ran += 1;
            }
        }
    }
    emit(json!({ "table": a.out, "cells_run": ran, "cells_skipped": skipped }));
    Ok(())
}
