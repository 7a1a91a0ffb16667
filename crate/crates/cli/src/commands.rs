use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use hotcold::baselines::{BaselineKind, BaselineSpec};
use hotcold::dataset::{emit_augmented, generate_synthetic, import_yolo, write_manifest, write_split, AnnotatedScene};
use hotcold::evaluation::{attacked_images, evaluate, Attack, EvalReport};
use hotcold::grid::{Genome, GenomeFile, GenomeMeta};
use hotcold::optimizer::{optimize_with, TraceRow};
use hotcold::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    ApplyArgs, AttackArgs, AugmentArgs, BaselineArgs, BaselineChoice, EvaluateArgs, ImportYoloArgs, SynthArgs,
};
use crate::config::Settings;

/// Prints one JSON summary line on stdout.
pub fn emit(summary: serde_json::Value) {
    println!("{summary}");
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Load {
            entry: path.display().to_string(),
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_pr(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in &report.pr_curve {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_genome(path: &Path) -> Result<(GenomeFile, Genome)> {
    let doc = GenomeFile::read(path)?;
    let g = doc.genome()?;
    Ok((doc, g))
}

fn report_summary(r: &EvalReport, scenes: usize) -> serde_json::Value {
    json!({
        "ap": r.ap,
        "clean_ap": r.clean_ap,
        "asr": r.asr,
        "n_baseline_tp": r.n_baseline_tp,
        "scenes": scenes,
    })
}

pub fn attack(settings: &Settings, a: &AttackArgs) -> Result<()> {
    let search = settings.search(&a.search)?;
    let template = search.template(settings.m(a.m), settings.l(a.l))?;
    let det_cfg = settings.detector()?;
    let eval = settings.eval()?;
    let train = settings.load(&a.train)?;
    let detector = det_cfg.build()?;

    let result = optimize_with(
        &train,
        template,
        search.epochs,
        &search.loss,
        detector.as_ref(),
        search.seed,
        &search.options,
        |_| {},
    )?;
    let meta = GenomeMeta {
        seed: Some(search.seed),
        lambda: Some(search.loss.lambda),
        fitness: Some(result.loss),
        detector_id: Some(detector.id().to_owned()),
    };
    GenomeFile::new(&result.genome, meta).write(&a.out)?;
    if let Some(path) = &a.trace {
        write_trace(path, &result.trace)?;
    }
    let report = evaluate(&train, detector.as_ref(), Attack::Universal(&result.genome), &eval)?;
    emit(json!({
        "loss": result.loss,
        "n": result.genome.active_cells(),
        "asr": report.asr,
        "ap": report.ap,
        "clean_ap": report.clean_ap,
        "genome": a.out,
    }));
    Ok(())
}

pub fn apply(settings: &Settings, a: &ApplyArgs) -> Result<()> {
    let (_, g) = read_genome(&a.genome)?;
    let scenes = settings.load(&a.data)?;
    let images = attacked_images(&scenes, Attack::Universal(&g))?;
    let attacked: Vec<AnnotatedScene> = scenes
        .into_iter()
        .zip(images)
        .map(|(s, image)| AnnotatedScene { image, ..s })
        .collect();
    let manifest = write_split(&attacked, &a.out, &a.ext)?;
    emit(json!({ "manifest": manifest, "scenes": attacked.len() }));
    Ok(())
}

pub fn evaluate_cmd(settings: &Settings, a: &EvaluateArgs) -> Result<()> {
    let eval = settings.eval()?;
    let det_cfg = settings.detector()?;
    let genome = a.genome.as_deref().map(read_genome).transpose()?;
    let scenes = settings.load(&a.data)?;
    let detector = det_cfg.build()?;
    let attack = match &genome {
        Some((_, g)) => Attack::Universal(g),
        None => Attack::None,
    };
    let report = evaluate(&scenes, detector.as_ref(), attack, &eval)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    if let Some(path) = &a.pr {
        write_pr(path, &report)?;
    }
    emit(report_summary(&report, scenes.len()));
    Ok(())
}

pub fn baseline(settings: &Settings, a: &BaselineArgs) -> Result<()> {
    let eval = settings.eval()?;
    let det_cfg = settings.detector()?;
    let (m, l, pixel_value, seed) = (
        settings.m(a.m),
        settings.l(a.l),
        settings.pixel_value(a.pixel_value),
        settings.seed(a.seed),
    );
    // validates m, l and the pixel value before any loading
    hotcold::grid::GenomeCodec::new(m, l, pixel_value)?;
    let kinds: &[BaselineKind] = match a.kind {
        BaselineChoice::R => &[BaselineKind::Random],
        BaselineChoice::Mr => &[BaselineKind::ManualRandom],
        BaselineChoice::Both => &[BaselineKind::Random, BaselineKind::ManualRandom],
    };
    let scenes = settings.load(&a.data)?;
    let detector = det_cfg.build()?;
    let mut reports = BTreeMap::new();
    let mut summary = serde_json::Map::new();
    for &kind in kinds {
        let spec = BaselineSpec {
            kind,
            m,
            l,
            pixel_value,
            seed,
        };
        let report = evaluate(&scenes, detector.as_ref(), Attack::Baseline(&spec), &eval)?;
        summary.insert(kind.label().to_owned(), report_summary(&report, scenes.len()));
        reports.insert(kind.label(), report);
    }
    if let Some(path) = &a.report {
        write_json(path, &reports)?;
    }
    emit(serde_json::Value::Object(summary));
    Ok(())
}

pub fn synth(settings: &Settings, a: &SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::Argument("--count must be at least 1".into()));
    }
    let scenes = generate_synthetic(a.count, settings.seed(a.seed), &settings.synth())?;
    let manifest = write_split(&scenes, &a.out, &a.ext)?;
    let persons: usize = scenes.iter().map(|s| s.persons.len()).sum();
    emit(json!({ "manifest": manifest, "scenes": scenes.len(), "persons": persons }));
    Ok(())
}

pub fn augment(settings: &Settings, a: &AugmentArgs) -> Result<()> {
    let (_, g) = read_genome(&a.genome)?;
    let scenes = settings.load(&a.data)?;
    let manifest = emit_augmented(&scenes, &g, &a.out, &a.ext)?;
    emit(json!({ "manifest": manifest, "clean": scenes.len(), "attacked": scenes.len() }));
    Ok(())
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm"];

pub fn import_yolo_cmd(a: &ImportYoloArgs) -> Result<()> {
    let entries = std::fs::read_dir(&a.images).map_err(|e| Error::io(&a.images, e))?;
    let mut images: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
        })
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(Error::Load {
            entry: a.images.display().to_string(),
            reason: "no images found".into(),
        });
    }
    let mut records = Vec::with_capacity(images.len());
    for image in &images {
        let stem = image
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_owned();
        let labels = a.labels.join(format!("{stem}.txt"));
        let mut record = import_yolo(image, &labels, a.person_class, &stem)?;
        let absolute = std::fs::canonicalize(image).map_err(|e| Error::io(image, e))?;
        record.image = absolute.display().to_string();
        records.push(record);
    }
    write_manifest(&a.out, &records)?;
    let persons: usize = records.iter().map(|r| r.persons.len()).sum();
    emit(json!({ "manifest": a.out, "scenes": records.len(), "persons": persons }));
    Ok(())
}

/// Opens `path` for appending, creating it when missing.
pub fn append_file(path: &Path) -> Result<File> {
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}
