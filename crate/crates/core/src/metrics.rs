//! Average precision and attack success rate over a scene set.

use serde::{Deserialize, Serialize};

use crate::detector::{object_score, Detection};
use crate::error::{Error, Result};
use crate::image::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// One point per ranked person detection.
    pub pr_curve: Vec<PrPoint>,
}

/// All-point interpolated AP for the "person" class.
///
/// Detections from every scene are ranked by score (ties: scene index, then
/// box `x`, then `y`); each is matched to the unmatched ground truth of its
/// scene with the highest IoU, provided that IoU reaches `iou_threshold`.
pub fn average_precision(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<BoundingBox>],
    iou_threshold: f64,
) -> Result<ApResult> {
    if detections.len() != ground_truth.len() {
        return Err(Error::Argument(format!(
            "{} detection lists for {} scenes",
            detections.len(),
            ground_truth.len()
        )));
    }
    let total_gt: usize = ground_truth.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one ground-truth person".into(),
        ));
    }

    let mut ranked: Vec<(usize, &Detection)> = detections
        .iter()
        .enumerate()
        .flat_map(|(scene, dets)| dets.iter().filter(|d| d.is_person()).map(move |d| (scene, d)))
        .collect();
    ranked.sort_by(|(sa, a), (sb, b)| {
        b.score
            .total_cmp(&a.score)
            .then(sa.cmp(sb))
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
    });

    let mut matched: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut pr_curve = Vec::with_capacity(ranked.len());
    for (rank, (scene, det)) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in ground_truth[*scene].iter().enumerate() {
            if matched[*scene][j] {
                continue;
            }
            let iou = det.bbox.iou(gt);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            matched[*scene][j] = true;
            tp += 1;
        }
        pr_curve.push(PrPoint {
            recall: tp as f64 / total_gt as f64,
            precision: tp as f64 / (rank + 1) as f64,
        });
    }

    // precision envelope, then area under the step function
    let mut envelope: Vec<f64> = pr_curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in pr_curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    Ok(ApResult { ap, pr_curve })
}

/// Ground-truth person `person` of scene `scene`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelRef {
    pub scene: usize,
    pub person: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsrResult {
    pub asr: f64,
    /// Ground-truth persons the clean run detects.
    pub n: usize,
    pub survivors: usize,
    /// Clean true positives and whether each is still detected under attack.
    pub labels: Vec<(LabelRef, bool)>,
}

/// Labels detected by a run: some person detection at or above
/// `score_threshold` overlaps them with IoU at least `iou_threshold`.
pub fn detected_labels(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<BoundingBox>],
    score_threshold: f64,
    iou_threshold: f64,
) -> Vec<LabelRef> {
    ground_truth
        .iter()
        .zip(detections)
        .enumerate()
        .flat_map(|(scene, (gts, dets))| {
            gts.iter().enumerate().filter_map(move |(person, gt)| {
                (object_score(dets, gt, iou_threshold) >= score_threshold).then_some(LabelRef { scene, person })
            })
        })
        .collect()
}

/// `1 - survivors / N` over the persons detected without attack.
pub fn attack_success_rate(
    clean: &[Vec<Detection>],
    attacked: &[Vec<Detection>],
    ground_truth: &[Vec<BoundingBox>],
    score_threshold: f64,
    iou_threshold: f64,
) -> Result<AsrResult> {
    if clean.len() != ground_truth.len() || attacked.len() != ground_truth.len() {
        return Err(Error::Argument(format!(
            "clean ({}) and attacked ({}) runs must cover the same {} scenes",
            clean.len(),
            attacked.len(),
            ground_truth.len()
        )));
    }
    let baseline = detected_labels(clean, ground_truth, score_threshold, iou_threshold);
    if baseline.is_empty() {
        return Err(Error::UndefinedMetric(
            "attack success rate needs at least one person detected without attack".into(),
        ));
    }
    let labels: Vec<(LabelRef, bool)> = baseline
        .into_iter()
        .map(|label| {
            let gt = &ground_truth[label.scene][label.person];
            let survived = object_score(&attacked[label.scene], gt, iou_threshold) >= score_threshold;
            (label, survived)
        })
        .collect();
    let n = labels.len();
    let survivors = labels.iter().filter(|(_, s)| *s).count();
    Ok(AsrResult {
        asr: 1.0 - survivors as f64 / n as f64,
        n,
        survivors,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, 10.0, 30.0)
    }

    fn hit(x: f64, score: f64) -> Detection {
        Detection::person(gt(x), score)
    }

    #[test]
    fn perfect_single_detection() {
        let r = average_precision(&[vec![hit(0.0, 0.9)]], &[vec![gt(0.0)]], 0.5).unwrap();
        assert_eq!(r.ap, 1.0);
    }

    #[test]
    fn total_miss() {
        let r = average_precision(&[vec![]], &[vec![gt(0.0)]], 0.5).unwrap();
        assert_eq!(r.ap, 0.0);
        assert!(r.pr_curve.is_empty());
    }

    #[test]
    fn interpolated_hit_miss_hit() {
        let dets = vec![vec![hit(0.0, 0.9), hit(100.0, 0.8), hit(50.0, 0.7)]];
        let gts = vec![vec![gt(0.0), gt(50.0)]];
        let r = average_precision(&dets, &gts, 0.5).unwrap();
        assert!((r.ap - 5.0 / 6.0).abs() < 1e-12);
        let recalls: Vec<f64> = r.pr_curve.iter().map(|p| p.recall).collect();
        assert_eq!(recalls, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn duplicate_detections_count_once() {
        let dets = vec![vec![hit(0.0, 0.9), hit(0.0, 0.8)]];
        let r = average_precision(&dets, &[vec![gt(0.0)]], 0.5).unwrap();
        assert_eq!(r.pr_curve[1].precision, 0.5);
        assert_eq!(r.ap, 1.0);
    }

    #[test]
    fn no_ground_truth_is_undefined() {
        let err = average_precision(&[vec![hit(0.0, 0.9)]], &[vec![]], 0.5).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn asr_extremes_and_partial() {
        let gts: Vec<Vec<BoundingBox>> = (0..10).map(|i| vec![gt(i as f64 * 20.0)]).collect();
        let clean: Vec<Vec<Detection>> = gts.iter().map(|g| vec![Detection::person(g[0], 0.95)]).collect();
        let none = vec![vec![]; 10];

        assert_eq!(attack_success_rate(&clean, &clean, &gts, 0.25, 0.5).unwrap().asr, 0.0);
        assert_eq!(attack_success_rate(&clean, &none, &gts, 0.25, 0.5).unwrap().asr, 1.0);

        let mut four: Vec<Vec<Detection>> = none.clone();
        four[..4].clone_from_slice(&clean[..4]);
        let r = attack_success_rate(&clean, &four, &gts, 0.25, 0.5).unwrap();
        assert_eq!((r.n, r.survivors), (10, 4));
        assert!((r.asr - 0.6).abs() < 1e-12);
    }

    #[test]
    fn clean_misses_are_excluded() {
        let gts = vec![vec![gt(0.0)], vec![gt(0.0)]];
        let clean = vec![vec![hit(0.0, 0.9)], vec![hit(0.0, 0.1)]];
        let attacked = vec![vec![], vec![]];
        let r = attack_success_rate(&clean, &attacked, &gts, 0.25, 0.5).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.asr, 1.0);
        let err = attack_success_rate(&attacked, &attacked, &gts, 0.25, 0.5).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }
}
