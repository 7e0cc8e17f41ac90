//! Detection scoring: IoU, greedy matching, precision/recall sweeps,
//! per-class average precision and mean AP over classes.
//!
//! Matching follows the VOC recipe with two explicit choices:
//! detections are visited in descending score order with ties broken by
//! content (image id, box, then input position), and a detection is matched
//! to its best-IoU *unmatched* ground-truth box. Ground truth flagged
//! `difficult` is dropped from both matching and the recall denominator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::DomainDataset;
use crate::geometry::{AnnotationSet, BoundingBox};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// No ground truth for the class, so recall is undefined.
    UndefinedAp,
    NoDefinedClasses,
    InvalidScore(f64),
    InvalidIouThreshold(f64),
    UnlabelledTarget(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UndefinedAp => f.write_str("AP is undefined for a class without ground truth"),
            Self::NoDefinedClasses => f.write_str("no class has ground truth; mAP is undefined"),
            Self::InvalidScore(s) => {
                write!(f, "detection score {s} is not a finite value in [0, 1]")
            }
            Self::InvalidIouThreshold(t) => write!(f, "IoU threshold {t} is outside [0, 1]"),
            Self::UnlabelledTarget(name) => {
                write!(f, "target domain '{name}' carries no annotations")
            }
        }
    }
}

impl core::error::Error for EvalError {}

/// One detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    pub image_id: String,
    pub class_label: String,
    score: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Deserialize)]
struct RawDetection {
    image_id: String,
    class_label: String,
    score: f64,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

impl TryFrom<RawDetection> for Detection {
    type Error = EvalError;

    fn try_from(raw: RawDetection) -> Result<Self, Self::Error> {
        Self::new(raw.image_id, raw.class_label, raw.score, raw.bbox)
    }
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        class_label: impl Into<String>,
        score: f64,
        bbox: BoundingBox,
    ) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::InvalidScore(score));
        }
        Ok(Self {
            image_id: image_id.into(),
            class_label: class_label.into(),
            score,
            bbox,
        })
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the precision envelope over every recall step.
    #[default]
    AllPoints,
    /// Mean enveloped precision at recall 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// Use the VOC `+1` pixel convention for areas and intersections.
    pub legacy_area: bool,
    /// Fixed class list; when `None` the classes present in the ground truth are used.
    pub classes: Option<Vec<String>>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interpolation: Interpolation::AllPoints,
            legacy_area: false,
            classes: None,
        }
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox, legacy_area: bool) -> f64 {
    let pad = if legacy_area { 1.0 } else { 0.0 };
    let iw = a.xmax().min(b.xmax()) - a.xmin().max(b.xmin()) + pad;
    let ih = a.ymax().min(b.ymax()) - a.ymin().max(b.ymin()) + pad;
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let area = |r: &BoundingBox| (r.width() + pad) * (r.height() + pad);
    let union = area(a) + area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchFlag {
    pub score: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatches {
    /// One flag per detection, in processing order.
    pub flags: Vec<MatchFlag>,
    /// Non-difficult ground-truth boxes of the class.
    pub n_gt: usize,
}

impl ClassMatches {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| f.is_tp).count()
    }
}

/// Processing order for detections: score descending, then image id, then
/// box coordinates, then input position. Permuting the input only reorders
/// detections that are identical in every field.
fn processing_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (dets[i], dets[j]);
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then_with(|| {
                a.bbox
                    .as_array()
                    .iter()
                    .zip(b.bbox.as_array().iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| i.cmp(&j))
    });
    order
}

/// Greedy assignment of `class_label` detections to ground truth.
///
/// Detections of other classes are skipped.
pub fn match_detections(
    dets: &[Detection],
    gt: &[AnnotationSet],
    class_label: &str,
    iou_threshold: f64,
    legacy_area: bool,
) -> ClassMatches {
    // image id -> (box, matched) for non-difficult GT of this class
    let mut pool: BTreeMap<&str, Vec<(BoundingBox, bool)>> = BTreeMap::new();
    let mut n_gt = 0;
    for ann in gt {
        let boxes = pool.entry(ann.image_id()).or_default();
        for obj in ann.objects() {
            if obj.class_label == class_label && !obj.difficult {
                boxes.push((obj.bbox, false));
                n_gt += 1;
            }
        }
    }

    let class_dets: Vec<&Detection> = dets
        .iter()
        .filter(|d| d.class_label == class_label)
        .collect();
    let mut flags = Vec::with_capacity(class_dets.len());
    for idx in processing_order(&class_dets) {
        let det = class_dets[idx];
        let mut is_tp = false;
        if let Some(boxes) = pool.get_mut(det.image_id.as_str()) {
            let mut best: Option<(usize, f64)> = None;
            for (k, (b, matched)) in boxes.iter().enumerate() {
                if *matched {
                    continue;
                }
                let o = iou(&det.bbox, b, legacy_area);
                if best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((k, o));
                }
            }
            if let Some((k, o)) = best {
                if o >= iou_threshold {
                    boxes[k].1 = true;
                    is_tp = true;
                }
            }
        }
        flags.push(MatchFlag {
            score: det.score,
            is_tp,
        });
    }
    ClassMatches { flags, n_gt }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall after each prefix of the score-ordered sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
}

/// Recall is reported as 0 for every prefix when `n_gt` is 0.
pub fn precision_recall_curve(flags: &[MatchFlag], n_gt: usize) -> PrCurve {
    let mut tp = 0usize;
    let points = flags
        .iter()
        .enumerate()
        .map(|(k, f)| {
            if f.is_tp {
                tp += 1;
            }
            let recall = if n_gt == 0 {
                0.0
            } else {
                tp as f64 / n_gt as f64
            };
            PrPoint {
                recall,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect();
    PrCurve { points, n_gt }
}

/// Precision at each point replaced by the maximum precision at that point
/// or any later one.
pub fn precision_envelope(curve: &PrCurve) -> Vec<f64> {
    let mut env: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

pub fn average_precision(curve: &PrCurve, mode: Interpolation) -> Result<f64, EvalError> {
    if curve.n_gt == 0 {
        return Err(EvalError::UndefinedAp);
    }
    let env = precision_envelope(curve);
    let ap = match mode {
        Interpolation::AllPoints => {
            let mut prev_recall = 0.0;
            let mut area = 0.0;
            for (p, e) in curve.points.iter().zip(&env) {
                area += (p.recall - prev_recall) * e;
                prev_recall = p.recall;
            }
            area
        }
        Interpolation::ElevenPoint => {
            let mut total = 0.0;
            for step in 0..=10 {
                let t = f64::from(step) / 10.0;
                // env is non-increasing, so the first point reaching t carries the max.
                let p = curve
                    .points
                    .iter()
                    .position(|p| p.recall >= t)
                    .map_or(0.0, |i| env[i]);
                total += p;
            }
            total / 11.0
        }
    };
    Ok(ap.clamp(0.0, 1.0))
}

/// Arithmetic mean of the defined per-class APs.
///
/// Classes mapped to `None` (undefined AP) are excluded from the class count.
pub fn mean_ap<K: Ord>(per_class: &BTreeMap<K, Option<f64>>) -> Result<f64, EvalError> {
    let defined: Vec<f64> = per_class.values().filter_map(|v| *v).collect();
    if defined.is_empty() {
        return Err(EvalError::NoDefinedClasses);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n_gt: usize,
    pub n_det: usize,
    pub n_tp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap: BTreeMap<String, f64>,
    /// Classes without ground truth; excluded from the mean.
    pub undefined_classes: Vec<String>,
    pub map_value: f64,
    pub params: EvalParams,
    pub counts: BTreeMap<String, ClassCounts>,
    /// Detections whose class is outside the label set, by class.
    pub unknown_class_detections: BTreeMap<String, usize>,
    /// Detections on images absent from the target domain.
    pub unknown_image_detections: usize,
}

impl EvalReport {
    /// Recall over all included classes: matched GT / total GT.
    pub fn overall_recall(&self) -> f64 {
        let (tp, gt) = self
            .counts
            .values()
            .fold((0usize, 0usize), |(tp, gt), c| (tp + c.n_tp, gt + c.n_gt));
        if gt == 0 {
            0.0
        } else {
            tp as f64 / gt as f64
        }
    }
}

/// Scores `dets` against the annotations of a labelled `target` domain.
pub fn evaluate(
    dets: &[Detection],
    target: &DomainDataset,
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    if !target.labelled() {
        return Err(EvalError::UnlabelledTarget(target.name().into()));
    }
    if !(0.0..=1.0).contains(&params.iou_threshold) {
        return Err(EvalError::InvalidIouThreshold(params.iou_threshold));
    }
    let gt: Vec<AnnotationSet> = target
        .records()
        .iter()
        .map(|r| r.annotations.clone())
        .collect();
    let classes: BTreeSet<String> = match &params.classes {
        Some(list) => list.iter().cloned().collect(),
        None => gt
            .iter()
            .flat_map(|a| a.objects().iter().map(|o| o.class_label.clone()))
            .collect(),
    };

    let mut unknown_class_detections: BTreeMap<String, usize> = BTreeMap::new();
    let mut unknown_image_detections = 0;
    let mut kept = Vec::with_capacity(dets.len());
    for d in dets {
        if target.get(&d.image_id).is_none() {
            unknown_image_detections += 1;
        } else if !classes.contains(&d.class_label) {
            *unknown_class_detections
                .entry(d.class_label.clone())
                .or_default() += 1;
        } else {
            kept.push(d.clone());
        }
    }

    let mut aps: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for class in &classes {
        let m = match_detections(&kept, &gt, class, params.iou_threshold, params.legacy_area);
        let curve = precision_recall_curve(&m.flags, m.n_gt);
        let ap = match average_precision(&curve, params.interpolation) {
            Ok(v) => Some(v),
            Err(EvalError::UndefinedAp) => None,
            Err(e) => return Err(e),
        };
        aps.insert(class.clone(), ap);
        counts.insert(
            class.clone(),
            ClassCounts {
                n_gt: m.n_gt,
                n_det: m.flags.len(),
                n_tp: m.true_positives(),
            },
        );
    }
    let map_value = mean_ap(&aps)?;
    let undefined_classes = aps
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k.clone())
        .collect();
    let per_class_ap = aps
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
    Ok(EvalReport {
        per_class_ap,
        undefined_classes,
        map_value,
        params: params.clone(),
        counts,
        unknown_class_detections,
        unknown_image_detections,
    })
}
