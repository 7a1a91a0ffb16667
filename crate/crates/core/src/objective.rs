//! Attack loss: mean object probability over a batch of scenes plus a
//! penalty on growth of the covered area.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::borrow::Cow;

use crate::compositor::render_quantized;
use crate::dataset::AnnotatedScene;
use crate::detector::{object_score, Detector};
use crate::error::{Error, Result};
use crate::grid::{area_measure, Genome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub iou_threshold: f64,
    /// Scenes per fitness batch; `None` uses the whole training split.
    pub batch_size: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            iou_threshold: 0.5,
            batch_size: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!(
                "lambda {} must be a non-negative number",
                self.lambda
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Argument(format!(
                "IoU threshold {} outside (0, 1)",
                self.iou_threshold
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sum with pairwise splitting; the result depends only on input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Mean object probability of the scene's persons after the attack.
/// Images are quantized to 8 bits before detection.
pub fn object_probability(
    scene: &AnnotatedScene,
    g: &Genome,
    detector: &dyn Detector,
    iou_threshold: f64,
) -> Result<f64> {
    let image = render_quantized(scene, |_, _| Ok(Cow::Borrowed(g)))?;
    let dets = detector.detect(&image)?;
    let scores: Vec<f64> = scene
        .persons
        .iter()
        .map(|p| object_score(&dets, p, iou_threshold))
        .collect();
    Ok(mean(&scores))
}

/// `lambda * max(0, area(g) - area(reference))`; zero without a reference.
pub fn growth_penalty(g: &Genome, reference: Option<&Genome>, lambda: f64) -> f64 {
    match reference {
        Some(r) => lambda * (area_measure(g) - area_measure(r)).max(0.0),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub mean_object_probability: f64,
    pub penalty: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.mean_object_probability + self.penalty
    }
}

pub fn mean_object_probability(
    batch: &[AnnotatedScene],
    g: &Genome,
    detector: &dyn Detector,
    iou_threshold: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("loss needs at least one scene".into()));
    }
    let per_scene = batch
        .par_iter()
        .map(|s| object_probability(s, g, detector, iou_threshold))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&per_scene))
}

pub fn evaluate_loss(
    batch: &[AnnotatedScene],
    g: &Genome,
    reference: Option<&Genome>,
    cfg: &LossConfig,
    detector: &dyn Detector,
) -> Result<LossValue> {
    Ok(LossValue {
        mean_object_probability: mean_object_probability(batch, g, detector, cfg.iou_threshold)?,
        penalty: growth_penalty(g, reference, cfg.lambda),
    })
}

pub fn loss(
    batch: &[AnnotatedScene],
    g: &Genome,
    reference: Option<&Genome>,
    cfg: &LossConfig,
    detector: &dyn Detector,
) -> Result<f64> {
    evaluate_loss(batch, g, reference, cfg, detector).map(|v| v.total())
}
