//! Black-box detector backends.
//!
//! A backend maps an [`ImageRecord`] to a [`DetectorOutput`]. Two kinds exist:
//! detections precomputed by an external model ([`PrecomputedBackend`]) and a
//! seeded simulator ([`SyntheticBackend`]).

mod synthetic;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, ImageRecord};

pub use synthetic::{
    synthetic_detect, synthetic_detect_traced, Origin, SyntheticBackend, SyntheticDetectorConfig,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Geometry(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { bbox, confidence })
    }
}

/// Descending confidence; ties by lexicographic box order.
pub(crate) fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.confidence.total_cmp(&a.confidence).then_with(|| a.bbox.lex_cmp(&b.bbox))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub image_id: String,
    detections: Vec<Detection>,
    pub latency_model_s: f64,
}

impl DetectorOutput {
    /// Sorts `detections` into descending confidence order.
    pub fn new(image_id: impl Into<String>, mut detections: Vec<Detection>, latency_model_s: f64) -> Self {
        detections.sort_by(detection_order);
        Self { image_id: image_id.into(), detections, latency_model_s }
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
    #[serde(default)]
    pub per_image_latency_s: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, per_image_latency_s: f64) -> Self {
        Self { name: name.into(), confidence_threshold: default_threshold(), per_image_latency_s }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.confidence_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "backend `{}`: confidence threshold {} outside [0, 1]",
                self.name, self.confidence_threshold
            )));
        }
        if !(self.per_image_latency_s >= 0.0 && self.per_image_latency_s.is_finite()) {
            return Err(Error::Config(format!("backend `{}`: latency must be >= 0", self.name)));
        }
        Ok(())
    }
}

/// A detector treated as a black box. Implementations must be deterministic
/// for a fixed state and image, and safe to call from many threads.
pub trait DetectorBackend: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput>;
}

pub fn detect(backend: &dyn DetectorBackend, image: &ImageRecord) -> Result<DetectorOutput> {
    backend.detect(image)
}

/// Detections exported by an external model, keyed by image id.
#[derive(Debug, Clone)]
pub struct PrecomputedBackend {
    config: BackendConfig,
    stored: HashMap<String, Vec<Detection>>,
}

#[derive(Serialize, Deserialize)]
struct JsonlDetections {
    id: String,
    #[serde(default)]
    detections: Vec<[f64; 5]>,
}

/// Load the jsonl detections format:
/// `{"id": str, "detections": [[x_min, y_min, x_max, y_max, confidence], ...]}`.
pub fn load_precomputed(text: &str, config: BackendConfig) -> Result<PrecomputedBackend> {
    config.validate()?;
    let mut stored = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlDetections =
            serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let dets = rec
            .detections
            .iter()
            .map(|d| {
                BoundingBox::new(d[0], d[1], d[2], d[3]).and_then(|b| Detection::new(b, d[4]))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        if stored.insert(rec.id.clone(), dets).is_some() {
            return Err(Error::DuplicateId(rec.id));
        }
    }
    Ok(PrecomputedBackend { config, stored })
}

impl PrecomputedBackend {
    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }
}

impl DetectorBackend for PrecomputedBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput> {
        let stored = self
            .stored
            .get(image.id())
            .ok_or_else(|| Error::MissingImage(image.id().to_string()))?;
        let kept = stored
            .iter()
            .filter(|d| d.confidence >= self.config.confidence_threshold)
            .copied()
            .collect();
        Ok(DetectorOutput::new(image.id(), kept, self.config.per_image_latency_s))
    }
}

/// Render outputs in the jsonl detections format, one line per output.
pub fn detections_to_jsonl<'a>(outputs: impl IntoIterator<Item = &'a DetectorOutput>) -> String {
    let mut out = String::new();
    for o in outputs {
        let rec = JsonlDetections {
            id: o.image_id.clone(),
            detections: o
                .detections()
                .iter()
                .map(|d| {
                    let [a, b, c, e] = d.bbox.to_array();
                    [a, b, c, e, d.confidence]
                })
                .collect(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("plain struct serializes"));
    }
    out
}

/// Wraps a backend and counts invocations.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: DetectorBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: DetectorBackend> DetectorBackend for CountingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.detect(image)
    }
}

impl<T: DetectorBackend + ?Sized> DetectorBackend for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput> {
        (**self).detect(image)
    }
}

impl<T: DetectorBackend + ?Sized> DetectorBackend for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn detect(&self, image: &ImageRecord) -> Result<DetectorOutput> {
        (**self).detect(image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(id: &str) -> ImageRecord {
        ImageRecord::new(id, 100, 100, vec![]).unwrap()
    }

    #[test]
    fn empty_backend_reports_missing_id() {
        let b = load_precomputed("", BackendConfig::new("fast", 0.1)).unwrap();
        assert!(b.is_empty());
        assert!(matches!(b.detect(&image("x")), Err(Error::MissingImage(id)) if id == "x"));
    }

    #[test]
    fn threshold_filter_and_sort() {
        let text = "{\"id\":\"a\",\"detections\":[[0,0,10,10,0.9],[5,5,20,20,0.4]]}\n\
                    {\"id\":\"b\",\"detections\":[[0,0,10,10,0.6],[5,5,20,20,0.8]]}\n";
        let b = load_precomputed(text, BackendConfig::new("fast", 0.28)).unwrap();
        let a = b.detect(&image("a")).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.detections()[0].confidence, 0.9);
        assert_eq!(a.latency_model_s, 0.28);
        let out = b.detect(&image("b")).unwrap();
        let confs: Vec<_> = out.detections().iter().map(|d| d.confidence).collect();
        assert_eq!(confs, [0.8, 0.6]);
        assert_eq!(b.detect(&image("b")).unwrap(), out);
    }

    #[test]
    fn threshold_is_inclusive() {
        let text = "{\"id\":\"a\",\"detections\":[[0,0,10,10,0.5],[0,0,10,10,0.49]]}";
        let b = load_precomputed(text, BackendConfig::new("f", 0.0)).unwrap();
        assert_eq!(b.detect(&image("a")).unwrap().len(), 1);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = "{\"id\":\"a\",\"detections\":[]}\n{\"id\":\"b\",\"detections\":[[0,0,10,10,1.5]]}\n";
        assert!(matches!(
            load_precomputed(text, BackendConfig::new("f", 0.0)),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = "{\"id\":\"a\",\"detections\":[]}\n{\"id\":\"a\",\"detections\":[]}\n";
        assert!(matches!(load_precomputed(text, BackendConfig::new("f", 0.0)), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn jsonl_roundtrip() {
        let text = "{\"id\":\"a\",\"detections\":[[0.5,1.0,10.25,10.0,0.75]]}\n";
        let b = load_precomputed(text, BackendConfig::new("f", 0.0)).unwrap();
        let out = b.detect(&image("a")).unwrap();
        assert_eq!(detections_to_jsonl([&out]), text);
    }

    #[test]
    fn counting_backend_counts() {
        let b = CountingBackend::new(load_precomputed("{\"id\":\"a\"}", BackendConfig::new("f", 0.0)).unwrap());
        b.detect(&image("a")).unwrap();
        b.detect(&image("a")).unwrap();
        assert_eq!(b.calls(), 2);
    }
}
