//! Seeded detector simulator.
//!
//! Each ground-truth face of relative size `s` is found with probability
//! `q * logistic(gamma * (s - s0))`; found faces are reported with jittered
//! boxes and a confidence in `[c_tp, 1]`. A Poisson number of false positives
//! with confidences in `[0, c_fp]` is added. Every draw comes from a keyed
//! stream (see [`crate::keyed`]), and draws are consumed in a fixed order
//! regardless of configuration, so two configs sharing a seed share their
//! random numbers. That coupling is what makes a slow/fast pair dominant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, Detection, DetectorBackend, DetectorOutput};
use crate::error::{Error, Result};
use crate::keyed::{self, Purpose};
use crate::model::{iou, relative_face_size, BoundingBox, ImageRecord};

/// Placement attempts per false positive before it is dropped.
const FP_ATTEMPTS: u64 = 16;
/// False positives are kept at or below this IoU with every face.
const FP_MAX_IOU: f64 = 0.5;
/// Above this jitter a jittered true face may fall below IoU 0.5.
const DOMINANCE_MAX_JITTER: f64 = 0.1;
const POISSON_CAP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDetectorConfig {
    /// Peak detection probability.
    pub quality: f64,
    /// Relative size at which detection probability is `quality / 2`.
    pub size_midpoint: f64,
    /// Logistic slope. `f64::INFINITY` gives a hard step at the midpoint.
    pub size_slope: f64,
    /// Mean false positives per image.
    pub false_positive_rate: f64,
    /// Coordinate jitter as a fraction of the box side.
    pub localization_noise: f64,
    pub tp_confidence_floor: f64,
    pub fp_confidence_ceiling: f64,
    pub seed: u64,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            quality: 0.9,
            size_midpoint: 0.1,
            size_slope: 30.0,
            false_positive_rate: 0.5,
            localization_noise: 0.05,
            tp_confidence_floor: 0.7,
            fp_confidence_ceiling: 0.65,
            seed: 0,
        }
    }
}

impl SyntheticDetectorConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic detector: {m}")));
        if !(0.0..=1.0).contains(&self.quality) {
            return bad("quality must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.size_midpoint) {
            return bad("size midpoint must lie in [0, 1)");
        }
        if !(self.size_slope > 0.0) {
            return bad("size slope must be > 0");
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return bad("false positive rate must be a finite value >= 0");
        }
        if !(0.0..0.5).contains(&self.localization_noise) {
            return bad("localization noise must lie in [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.tp_confidence_floor) || !(0.0..=1.0).contains(&self.fp_confidence_ceiling) {
            return bad("confidence bounds must lie in [0, 1]");
        }
        if self.fp_confidence_ceiling >= self.tp_confidence_floor {
            return bad("fp confidence ceiling must be below the tp confidence floor");
        }
        Ok(())
    }

    /// Probability of detecting a face of relative size `s`.
    pub fn detect_probability(&self, s: f64) -> f64 {
        let z = s - self.size_midpoint;
        let logistic = if self.size_slope.is_infinite() {
            match z.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => 0.0,
                _ => 0.5,
            }
        } else {
            1.0 / (1.0 + (-self.size_slope * z).exp())
        };
        self.quality * logistic
    }

    /// Whether, under shared draws, this config detects a superset of the
    /// faces `weaker` detects and emits a subset of its false positives.
    pub fn dominates(&self, weaker: &SyntheticDetectorConfig) -> bool {
        self.seed == weaker.seed
            && self.size_slope == weaker.size_slope
            && self.quality >= weaker.quality
            && self.size_midpoint <= weaker.size_midpoint
            && self.false_positive_rate <= weaker.false_positive_rate
            && self.localization_noise <= weaker.localization_noise
            && weaker.localization_noise <= DOMINANCE_MAX_JITTER
            && self.fp_confidence_ceiling == weaker.fp_confidence_ceiling
    }
}

/// Where a synthetic detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    /// Index into the image's ground-truth faces.
    Face(usize),
    /// Index of the false-positive slot.
    FalsePositive(usize),
}

/// Inverse-CDF Poisson draw; monotone in `lambda` for a fixed `u`.
fn poisson_inverse(lambda: f64, u: f64) -> u64 {
    let mut k = 0;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < POISSON_CAP {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}

/// Unsorted, unfiltered detections with their origins.
pub fn synthetic_detect_traced(cfg: &SyntheticDetectorConfig, image: &ImageRecord) -> Vec<(Detection, Origin)> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let mut out = Vec::new();

    for (idx, face) in image.faces().iter().enumerate() {
        let mut rng = keyed::stream(cfg.seed, image.id(), idx as u64, Purpose::FaceDraw);
        // Fixed draw order: detect, four jitters, confidence.
        let u_detect: f64 = rng.random();
        let jitter: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let u_conf: f64 = rng.random();

        if u_detect >= cfg.detect_probability(relative_face_size(&face.bbox, image)) {
            continue;
        }
        let b = face.bbox;
        let (dx, dy) = (cfg.localization_noise * b.width(), cfg.localization_noise * b.height());
        let jittered = BoundingBox::new(
            b.x_min() + jitter[0] * dx,
            b.y_min() + jitter[1] * dy,
            b.x_max() + jitter[2] * dx,
            b.y_max() + jitter[3] * dy,
        )
        .ok()
        .and_then(|j| j.clamp_to(w, h));
        let Some(bbox) = jittered else { continue };
        let confidence = cfg.tp_confidence_floor + u_conf * (1.0 - cfg.tp_confidence_floor);
        out.push((Detection { bbox, confidence }, Origin::Face(idx)));
    }

    let u_count: f64 = keyed::stream(cfg.seed, image.id(), 0, Purpose::FalsePositiveCount).random();
    let count = poisson_inverse(cfg.false_positive_rate, u_count);
    let diag = image.diagonal();
    for k in 0..count {
        let mut rng = keyed::stream(cfg.seed, image.id(), k, Purpose::FalsePositive);
        let u_conf: f64 = rng.random();
        for _ in 0..FP_ATTEMPTS {
            let (u_side, u_x, u_y): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let side = ((0.02 + 0.18 * u_side) * diag).min(w).min(h);
            let (x0, y0) = (u_x * (w - side), u_y * (h - side));
            let Ok(bbox) = BoundingBox::new(x0, y0, x0 + side, y0 + side) else { continue };
            if image.faces().iter().all(|f| iou(&f.bbox, &bbox) <= FP_MAX_IOU) {
                let confidence = u_conf * cfg.fp_confidence_ceiling;
                out.push((Detection { bbox, confidence }, Origin::FalsePositive(k as usize)));
                break;
            }
        }
    }
    out
}

/// Pure function of `(cfg, image)`: no threshold, zero latency.
pub fn synthetic_detect(cfg: &SyntheticDetectorConfig, image: &ImageRecord) -> DetectorOutput {
    let dets = synthetic_detect_traced(cfg, image).into_iter().map(|(d, _)| d).collect();
    DetectorOutput::new(image.id(), dets, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBackend {
    config: BackendConfig,
    synth: SyntheticDetectorConfig,
}

impl SyntheticBackend {
    pub fn new(config: BackendConfig, synth: SyntheticDetectorConfig) -> Result<Self> {
        config.validate()?;
        synth.validate()?;
        Ok(Self { config, synth })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn synth(&self) -> &SyntheticDetectorConfig {
        &self.synth
    }

    /// Detections that survive the confidence threshold, with origins.
    pub fn detect_traced(&self, image: &ImageRecord) -> Vec<(Detection, Origin)> {
        let mut v: Vec<_> = synthetic_detect_traced(&self.synth, image)
            .into_iter()
            .filter(|(d, _)| d.confidence >= self.config.confidence_threshold)
            .collect();
        v.sort_by(|a, b| super::detection_order(&a.0, &b.0));
        v
    }

    /// Dominance of the simulated pair, accounting for threshold filtering.
    pub fn dominates(&self, weaker: &SyntheticBackend) -> bool {
        let thr = self.config.confidence_threshold;
        self.synth.dominates(&weaker.synth)
            && thr == weaker.config.confidence_threshold
            && self.synth.tp_confidence_floor >= thr
            && weaker.synth.tp_confidence_floor >= thr
    }
}

impl DetectorBackend for SyntheticBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput> {
        let dets = self.detect_traced(image).into_iter().map(|(d, _)| d).collect();
        Ok(DetectorOutput::new(image.id(), dets, self.config.per_image_latency_s))
    }
}
