//! Detection metrics: greedy IoU matching, all-points Average Precision and
//! discrete / continuous ROC areas.
//!
//! Curves are built at every distinct confidence value, so detections with
//! equal confidence always enter the curve together and the metrics do not
//! depend on input order.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::{detection_order, DetectorOutput};
use crate::error::{Error, Result};
use crate::model::{iou, Dataset};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub image_id: String,
    pub confidence: f64,
    pub is_tp: bool,
    /// IoU with the face this detection claimed; `None` for false positives.
    pub matched_iou: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub records: Vec<MatchRecord>,
    pub num_gt_faces: usize,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_tp).count()
    }

    pub fn fp_count(&self) -> usize {
        self.records.len() - self.tp_count()
    }
}

/// Greedy matching per image: detections in descending confidence (ties by
/// box order) each take the still-unmatched face with the largest IoU. A
/// detection is a true positive iff that IoU is strictly above
/// `iou_threshold`; false positives do not consume a face.
pub fn match_detections(
    outputs: &BTreeMap<String, DetectorOutput>,
    dataset: &Dataset,
    iou_threshold: f64,
) -> Result<MatchResult> {
    if let Some(id) = outputs.keys().find(|id| dataset.get(id).is_none()) {
        return Err(Error::UnknownImage(id.clone()));
    }
    let mut result = MatchResult { records: Vec::new(), num_gt_faces: dataset.num_faces() };
    for image in dataset.images() {
        let output = outputs.get(image.id()).ok_or_else(|| Error::MissingImage(image.id().to_string()))?;
        let mut dets = output.detections().to_vec();
        dets.sort_by(detection_order);
        let faces = image.faces();
        let mut taken = vec![false; faces.len()];
        for det in dets {
            let best = faces
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .map(|(i, f)| (i, iou(&det.bbox, &f.bbox)))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            let record = match best {
                Some((i, v)) if v > iou_threshold => {
                    taken[i] = true;
                    MatchRecord { image_id: image.id().to_string(), confidence: det.confidence, is_tp: true, matched_iou: Some(v) }
                }
                _ => MatchRecord { image_id: image.id().to_string(), confidence: det.confidence, is_tp: false, matched_iou: None },
            };
            result.records.push(record);
        }
    }
    Ok(result)
}

/// Cumulative `(tp, fp, iou_sum)` at each distinct confidence, descending.
fn threshold_sweep(matches: &MatchResult) -> Vec<(usize, usize, f64)> {
    let mut recs: Vec<&MatchRecord> = matches.records.iter().collect();
    recs.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut points = Vec::new();
    let (mut tp, mut fp, mut iou_sum) = (0usize, 0usize, 0.0f64);
    let mut i = 0;
    while i < recs.len() {
        let conf = recs[i].confidence;
        while i < recs.len() && recs[i].confidence == conf {
            if recs[i].is_tp {
                tp += 1;
                iou_sum += recs[i].matched_iou.unwrap_or(0.0);
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp, fp, iou_sum));
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

pub fn pr_curve(matches: &MatchResult) -> Result<Vec<PrPoint>> {
    if matches.num_gt_faces == 0 {
        return Err(Error::NoGroundTruth);
    }
    let g = matches.num_gt_faces as f64;
    Ok(threshold_sweep(matches)
        .into_iter()
        .map(|(tp, fp, _)| PrPoint { recall: tp as f64 / g, precision: tp as f64 / (tp + fp) as f64 })
        .collect())
}

/// Area under the all-points interpolated precision/recall curve.
pub fn average_precision(matches: &MatchResult) -> Result<f64> {
    let curve = pr_curve(matches)?;
    let mut interp = vec![0.0; curve.len()];
    let mut running = 0.0f64;
    for (i, pt) in curve.iter().enumerate().rev() {
        running = running.max(pt.precision);
        interp[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (pt, p) in curve.iter().zip(interp) {
        ap += (pt.recall - prev_recall) * p;
        prev_recall = pt.recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocMode {
    /// Each true positive scores 1.
    Discrete,
    /// Each true positive scores its IoU.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpAxis {
    /// Total false-positive count, at least 1.
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for FpAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(FpAxis::Auto),
            n => match n.parse::<usize>() {
                Ok(v) if v > 0 => Ok(FpAxis::Fixed(v)),
                _ => Err(Error::Config(format!("fp axis must be `auto` or a positive integer, got `{n}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub false_positives: usize,
    pub score_rate: f64,
}

/// ROC points starting at the origin.
pub fn roc_curve(matches: &MatchResult, mode: RocMode) -> Result<Vec<RocPoint>> {
    if matches.num_gt_faces == 0 {
        return Err(Error::NoGroundTruth);
    }
    let g = matches.num_gt_faces as f64;
    let mut pts = vec![RocPoint { false_positives: 0, score_rate: 0.0 }];
    pts.extend(threshold_sweep(matches).into_iter().map(|(tp, fp, iou_sum)| RocPoint {
        false_positives: fp,
        score_rate: match mode {
            RocMode::Discrete => tp as f64 / g,
            RocMode::Continuous => iou_sum / g,
        },
    }));
    Ok(pts)
}

/// Trapezoidal area under the ROC curve over `[0, fp_axis_max]`, normalized
/// by the axis length. The curve is held flat past its last point and cut
/// (with linear interpolation) at the axis end.
pub fn roc_area(matches: &MatchResult, mode: RocMode, fp_axis: FpAxis) -> Result<f64> {
    let pts = roc_curve(matches, mode)?;
    let max_x = match fp_axis {
        FpAxis::Auto => matches.fp_count().max(1),
        FpAxis::Fixed(v) => v,
    } as f64;
    let mut area = 0.0;
    let (mut px, mut py) = (0.0f64, 0.0f64);
    for pt in &pts[1..] {
        let (x, y) = (pt.false_positives as f64, pt.score_rate);
        if x > max_x {
            let y_end = py + (y - py) * (max_x - px) / (x - px);
            area += (max_x - px) * (py + y_end) / 2.0;
            px = max_x;
            break;
        }
        area += (x - px) * (py + y) / 2.0;
        px = x;
        py = y;
    }
    if px < max_x {
        area += (max_x - px) * py;
    }
    Ok(area / max_x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub disc_roc: f64,
    pub cont_roc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub fp_axis: FpAxis,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD, fp_axis: FpAxis::Auto }
    }
}

pub fn report(matches: &MatchResult, fp_axis: FpAxis) -> Result<EvalReport> {
    Ok(EvalReport {
        ap: average_precision(matches)?,
        disc_roc: roc_area(matches, RocMode::Discrete, fp_axis)?,
        cont_roc: roc_area(matches, RocMode::Continuous, fp_axis)?,
    })
}

/// Match and score a full set of outputs.
pub fn evaluate(
    outputs: &BTreeMap<String, DetectorOutput>,
    dataset: &Dataset,
    opts: &EvalOptions,
) -> Result<(EvalReport, MatchResult)> {
    let matches = match_detections(outputs, dataset, opts.iou_threshold)?;
    Ok((report(&matches, opts.fp_axis)?, matches))
}
