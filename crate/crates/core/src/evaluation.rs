//! Clean-versus-attacked evaluation of a detector on a scene set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{sample_baseline, scene_rng, BaselineSpec};
use std::borrow::Cow;

use crate::compositor::render_quantized;
use crate::dataset::AnnotatedScene;
use crate::detector::{object_score, Detection, Detector};
use crate::error::Result;
use crate::grid::Genome;
use crate::image::{BoundingBox, GrayImage};
use crate::metrics::{attack_success_rate, average_precision, detected_labels, PrPoint};
use crate::objective::mean;

#[derive(Debug, Clone, Copy)]
pub enum Attack<'a> {
    None,
    /// One genome applied to every person of every scene.
    Universal(&'a Genome),
    /// A fresh random genome per person.
    Baseline(&'a BaselineSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub score_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.25,
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelId {
    pub scene: String,
    pub person: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub id: String,
    pub clean_object_probability: f64,
    pub attacked_object_probability: Option<f64>,
    /// Every clean true positive of the scene is hidden by the attack.
    pub success: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// AP of the attacked run, or of the clean run when nothing is attacked.
    pub ap: f64,
    pub clean_ap: f64,
    pub asr: Option<f64>,
    pub n_baseline_tp: usize,
    /// Labels still detected in the evaluated run.
    pub matched_labels: Vec<LabelId>,
    pub pr_curve: Vec<PrPoint>,
    pub per_scene: Vec<SceneOutcome>,
}

/// Renders the attack on every scene and quantizes to 8 bits.
pub fn attacked_images(scenes: &[AnnotatedScene], attack: Attack<'_>) -> Result<Vec<GrayImage>> {
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| match attack {
            Attack::None => Ok(scene.image.quantized()),
            Attack::Universal(g) => render_quantized(scene, |_, _| Ok(Cow::Borrowed(g))),
            Attack::Baseline(spec) => {
                let mut rng = scene_rng(spec.seed, i);
                render_quantized(scene, |_, person| {
                    sample_baseline(spec, person, &mut rng).map(Cow::Owned)
                })
            }
        })
        .collect()
}

pub fn detect_all(images: &[GrayImage], detector: &dyn Detector) -> Result<Vec<Vec<Detection>>> {
    images.par_iter().map(|img| detector.detect(img)).collect()
}

fn ground_truth(scenes: &[AnnotatedScene]) -> Vec<Vec<BoundingBox>> {
    scenes.iter().map(|s| s.persons.clone()).collect()
}

/// Builds the report from precomputed detections; `attacked` is `None`
/// when only the clean run is evaluated.
pub fn report_from_detections(
    scenes: &[AnnotatedScene],
    clean: &[Vec<Detection>],
    attacked: Option<&[Vec<Detection>]>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let gts = ground_truth(scenes);
    let clean_ap = average_precision(clean, &gts, cfg.iou_threshold)?;
    let evaluated = attacked.unwrap_or(clean);
    let ap = match attacked {
        Some(a) => average_precision(a, &gts, cfg.iou_threshold)?,
        None => clean_ap.clone(),
    };
    let baseline = detected_labels(clean, &gts, cfg.score_threshold, cfg.iou_threshold);
    let asr = match attacked {
        Some(a) => Some(attack_success_rate(
            clean,
            a,
            &gts,
            cfg.score_threshold,
            cfg.iou_threshold,
        )?),
        None => None,
    };
    let matched_labels = detected_labels(evaluated, &gts, cfg.score_threshold, cfg.iou_threshold)
        .into_iter()
        .map(|l| LabelId {
            scene: scenes[l.scene].id.clone(),
            person: l.person,
        })
        .collect();

    let per_scene = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let probability = |dets: &[Detection]| {
                let v: Vec<f64> = s
                    .persons
                    .iter()
                    .map(|p| object_score(dets, p, cfg.iou_threshold))
                    .collect();
                mean(&v)
            };
            let success = asr.as_ref().map(|r| {
                let mine: Vec<bool> = r.labels.iter().filter(|(l, _)| l.scene == i).map(|(_, s)| *s).collect();
                !mine.is_empty() && mine.iter().all(|survived| !survived)
            });
            SceneOutcome {
                id: s.id.clone(),
                clean_object_probability: probability(&clean[i]),
                attacked_object_probability: attacked.map(|a| probability(&a[i])),
                success,
            }
        })
        .collect();

    Ok(EvalReport {
        ap: ap.ap,
        clean_ap: clean_ap.ap,
        asr: asr.as_ref().map(|r| r.asr),
        n_baseline_tp: baseline.len(),
        matched_labels,
        pr_curve: ap.pr_curve,
        per_scene,
    })
}

/// Runs the detector on clean and (when attacking) attacked copies of the scenes.
pub fn evaluate(
    scenes: &[AnnotatedScene],
    detector: &dyn Detector,
    attack: Attack<'_>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let clean_images = attacked_images(scenes, Attack::None)?;
    let clean = detect_all(&clean_images, detector)?;
    match attack {
        Attack::None => report_from_detections(scenes, &clean, None, cfg),
        _ => {
            let attacked = detect_all(&attacked_images(scenes, attack)?, detector)?;
            report_from_detections(scenes, &clean, Some(&attacked), cfg)
        }
    }
}
