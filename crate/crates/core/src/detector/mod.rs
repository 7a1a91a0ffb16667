//! Detector contract: an image goes in, scored person boxes come out.

mod external;
pub mod protocol;
mod toy;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use external::{ExternalClient, ExternalDetector};
pub use toy::{ToyDetector, ToyParams};

use crate::error::{Error, Result};
use crate::image::{BoundingBox, GrayImage};

pub const PERSON: &str = "person";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class_name: String,
    pub score: f64,
}

impl Detection {
    pub fn person(bbox: BoundingBox, score: f64) -> Self {
        Self {
            bbox,
            class_name: PERSON.to_owned(),
            score,
        }
    }

    pub fn is_person(&self) -> bool {
        self.class_name == PERSON
    }
}

pub trait Detector: Send + Sync {
    /// Identifier recorded in genome metadata.
    fn id(&self) -> &str;

    /// All detections, unthresholded, in [`detection_order`].
    fn detect(&self, image: &GrayImage) -> Result<Vec<Detection>>;
}

/// Descending score; ties broken by box `x`, then `y`.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

/// Object probability of one ground-truth person: the best score among
/// person detections overlapping it with IoU at least `iou_threshold`.
pub fn object_score(dets: &[Detection], person: &BoundingBox, iou_threshold: f64) -> f64 {
    dets.iter()
        .filter(|d| d.is_person() && d.bbox.iou(person) >= iou_threshold)
        .map(|d| d.score)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Toy,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub score_threshold: f64,
    pub iou_threshold: f64,
    pub command: Option<String>,
    pub pool_size: usize,
    #[serde(default)]
    pub toy: ToyParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Toy,
            score_threshold: 0.25,
            iou_threshold: 0.5,
            command: None,
            pool_size: 1,
            toy: ToyParams::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("score threshold", self.score_threshold),
            ("IoU threshold", self.iou_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Argument(format!("{name} {t} outside (0, 1)")));
            }
        }
        if self.kind == DetectorKind::External && self.command.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Argument("external detector needs a command".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Argument("detector pool size must be at least 1".into()));
        }
        self.toy.validate()
    }

    pub fn build(&self) -> Result<Box<dyn Detector>> {
        self.validate()?;
        Ok(match self.kind {
            DetectorKind::Toy => Box::new(ToyDetector::new(self.toy.clone())),
            DetectorKind::External => Box::new(ExternalDetector::spawn(
                self.command.as_deref().unwrap_or_default(),
                self.pool_size,
            )?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_total() {
        let mut dets = vec![
            Detection::person(BoundingBox::new(5.0, 1.0, 1.0, 1.0), 0.5),
            Detection::person(BoundingBox::new(2.0, 9.0, 1.0, 1.0), 0.5),
            Detection::person(BoundingBox::new(2.0, 3.0, 1.0, 1.0), 0.5),
            Detection::person(BoundingBox::new(9.0, 0.0, 1.0, 1.0), 0.9),
        ];
        sort_detections(&mut dets);
        let order: Vec<(f64, f64)> = dets.iter().map(|d| (d.bbox.x, d.bbox.y)).collect();
        assert_eq!(order, vec![(9.0, 0.0), (2.0, 3.0), (2.0, 9.0), (5.0, 1.0)]);
    }

    #[test]
    fn object_score_ignores_other_classes_and_weak_overlap() {
        let gt = BoundingBox::new(0.0, 0.0, 10.0, 20.0);
        let mut car = Detection::person(gt, 0.99);
        car.class_name = "car".into();
        let dets = vec![
            car,
            Detection::person(BoundingBox::new(0.0, 0.0, 10.0, 9.0), 0.95),
            Detection::person(BoundingBox::new(0.0, 2.0, 10.0, 18.0), 0.7),
        ];
        assert_eq!(object_score(&dets, &gt, 0.5), 0.7);
        assert_eq!(object_score(&[], &gt, 0.5), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectorConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.score_threshold = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = DetectorConfig {
            kind: DetectorKind::External,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
