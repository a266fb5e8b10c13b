//! Easy-versus-hard dispatch and its cost model.
//!
//! An image goes to the fast backend when its criterion value is `<= t` and
//! to the slow backend otherwise. [`route`] is the literal per-image rule;
//! [`route_batch`] runs a whole dataset and, for detector-based criteria,
//! reuses the fast detector's output instead of running it twice.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorBackend, DetectorOutput};
use crate::difficulty::{
    criterion_features, criterion_value, rank_split, threshold_split, CriterionInput, CriterionKind,
    CriterionScore, Partition, ScoreTables,
};
use crate::error::{Error, Result};
use crate::model::{Dataset, ImageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub image_id: String,
    /// `None` when the partition was supplied externally (random baseline).
    pub criterion_value: Option<f64>,
    pub easy: bool,
    pub chosen_backend: Route,
    pub fast_output_reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    /// One decision per image, ordered by image id.
    pub decisions: Vec<RoutingDecision>,
    pub threshold: f64,
    /// `None` for externally supplied partitions.
    pub criterion: Option<CriterionKind>,
}

impl RoutingPlan {
    pub fn easy_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.easy).count()
    }

    pub fn easy_fraction(&self) -> f64 {
        if self.decisions.is_empty() {
            1.0
        } else {
            self.easy_count() as f64 / self.decisions.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    Threshold(f64),
    EasyFraction(f64),
}

/// Value of `criterion` for `image`, running `fast` if the criterion needs it.
fn resolve(
    image: &ImageRecord,
    criterion: &CriterionKind,
    fast: &dyn DetectorBackend,
    tables: &ScoreTables,
) -> Result<(CriterionScore, Option<DetectorOutput>)> {
    match criterion {
        CriterionKind::ExternalDifficulty(name) => {
            let table = tables.get(name).ok_or_else(|| Error::UnknownTable(name.clone()))?;
            Ok((criterion_value(criterion, image.id(), CriterionInput::Table(table))?, None))
        }
        _ => {
            let out = fast.detect(image)?;
            let features = criterion_features(&out, image);
            Ok((criterion_value(criterion, image.id(), CriterionInput::Features(&features))?, Some(out)))
        }
    }
}

/// Route one image. The fast detector is re-run for easy images even when
/// the criterion already ran it; [`route_batch`] avoids that.
pub fn route(
    image: &ImageRecord,
    criterion: &CriterionKind,
    t: f64,
    fast: &dyn DetectorBackend,
    slow: &dyn DetectorBackend,
    tables: &ScoreTables,
) -> Result<(DetectorOutput, RoutingDecision)> {
    let (score, _) = resolve(image, criterion, fast, tables)?;
    let easy = score.value <= t;
    let (output, chosen) = if easy { (fast.detect(image)?, Route::Fast) } else { (slow.detect(image)?, Route::Slow) };
    let decision = RoutingDecision {
        image_id: image.id().to_string(),
        criterion_value: Some(score.value),
        easy,
        chosen_backend: chosen,
        fast_output_reused: false,
    };
    Ok((output, decision))
}

pub type RoutedOutputs = BTreeMap<String, DetectorOutput>;

/// Route every image of `dataset`. Detector-based criteria call `fast`
/// exactly once per image and hand that output back for easy images.
pub fn route_batch(
    dataset: &Dataset,
    criterion: &CriterionKind,
    split: SplitSpec,
    fast: &dyn DetectorBackend,
    slow: &dyn DetectorBackend,
    tables: &ScoreTables,
) -> Result<(RoutedOutputs, RoutingPlan)> {
    let mut scores = Vec::with_capacity(dataset.len());
    let mut fast_cache = BTreeMap::new();
    for image in dataset.images() {
        let (score, out) = resolve(image, criterion, fast, tables)?;
        if let Some(out) = out {
            fast_cache.insert(image.id().to_string(), out);
        }
        scores.push(score);
    }

    let (partition, threshold) = match split {
        SplitSpec::Threshold(t) => (threshold_split(&scores, t), t),
        SplitSpec::EasyFraction(p) => {
            let part = rank_split(&scores, p)?;
            let t = if p >= 1.0 {
                f64::INFINITY
            } else {
                scores
                    .iter()
                    .filter(|s| part.easy.contains(&s.image_id))
                    .map(|s| s.value)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            (part, t)
        }
    };

    let values: BTreeMap<&str, f64> = scores.iter().map(|s| (s.image_id.as_str(), s.value)).collect();
    let mut outputs = RoutedOutputs::new();
    let mut decisions = Vec::with_capacity(dataset.len());
    for image in dataset.images() {
        let id = image.id();
        let easy = partition.easy.contains(id);
        let (output, chosen, reused) = match (easy, fast_cache.remove(id)) {
            (true, Some(cached)) => (cached, Route::Fast, true),
            (true, None) => (fast.detect(image)?, Route::Fast, false),
            (false, _) => (slow.detect(image)?, Route::Slow, false),
        };
        decisions.push(RoutingDecision {
            image_id: id.to_string(),
            criterion_value: values.get(id).copied(),
            easy,
            chosen_backend: chosen,
            fast_output_reused: reused,
        });
        outputs.insert(id.to_string(), output);
    }
    let plan = RoutingPlan { decisions, threshold, criterion: Some(criterion.clone()) };
    Ok((outputs, plan))
}

/// Route with a partition computed elsewhere, e.g. a random split.
pub fn route_partition(
    dataset: &Dataset,
    partition: &Partition,
    fast: &dyn DetectorBackend,
    slow: &dyn DetectorBackend,
) -> Result<(RoutedOutputs, RoutingPlan)> {
    let mut outputs = RoutedOutputs::new();
    let mut decisions = Vec::with_capacity(dataset.len());
    for image in dataset.images() {
        let easy = partition.easy.contains(image.id());
        let (output, chosen) = if easy { (fast.detect(image)?, Route::Fast) } else { (slow.detect(image)?, Route::Slow) };
        decisions.push(RoutingDecision {
            image_id: image.id().to_string(),
            criterion_value: None,
            easy,
            chosen_backend: chosen,
            fast_output_reused: false,
        });
        outputs.insert(image.id().to_string(), output);
    }
    let threshold = if decisions.iter().all(|d| d.easy) { f64::INFINITY } else { f64::NAN };
    Ok((outputs, RoutingPlan { decisions, threshold, criterion: None }))
}

/// Run one backend on every image.
pub fn run_standalone(dataset: &Dataset, backend: &dyn DetectorBackend) -> Result<RoutedOutputs> {
    dataset
        .images()
        .iter()
        .map(|img| Ok((img.id().to_string(), backend.detect(img)?)))
        .collect()
}

/// Per-image latencies, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub t_fast: f64,
    pub t_slow: f64,
    /// Cost of a score-table difficulty prediction.
    pub t_pred: f64,
}

impl TimingModel {
    pub fn new(t_fast: f64, t_slow: f64, t_pred: f64) -> Result<Self> {
        let m = Self { t_fast, t_slow, t_pred };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.t_fast, self.t_slow, self.t_pred].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("timing model latencies must be finite and >= 0".into()))
        }
    }

    /// MobileNet-SSD / S3FD / difficulty predictor on AFW.
    pub fn afw() -> Self {
        Self { t_fast: 0.28, t_slow: 1.89, t_pred: 0.05 }
    }

    /// MobileNet-SSD / S3FD / difficulty predictor on FDDB.
    pub fn fddb() -> Self {
        Self { t_fast: 0.27, t_slow: 1.17, t_pred: 0.05 }
    }
}

impl Default for TimingModel {
    fn default() -> Self {
        Self::afw()
    }
}

impl FromStr for TimingModel {
    type Err = Error;

    /// `fast=0.28,slow=1.89,pred=0.05`; omitted keys keep the AFW values.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = TimingModel::afw();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("timing entry `{part}` is not key=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad timing value `{v}`")))?;
            match k.trim() {
                "fast" => m.t_fast = v,
                "slow" => m.t_slow = v,
                "pred" => m.t_pred = v,
                other => return Err(Error::Config(format!("unknown timing key `{other}`"))),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    /// No criterion cost at all (random split, standalone detectors).
    Free,
    /// Score-table difficulty predictor.
    ScoreTable,
    /// Criterion computed from the fast detector's output.
    Detector,
}

impl CostFamily {
    pub fn of(criterion: Option<&CriterionKind>) -> Self {
        match criterion {
            None => CostFamily::Free,
            Some(k) if k.is_detector_based() => CostFamily::Detector,
            Some(_) => CostFamily::ScoreTable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub avg_seconds_per_image: f64,
    pub detection: f64,
    pub criterion_overhead: f64,
}

/// Closed-form per-image cost at easy fraction `p`.
///
/// Detection costs `p * t_fast + (1 - p) * t_slow`. At interior splits a
/// score-table criterion adds `t_pred`; a detector criterion adds the fast
/// run wasted on hard images, `(1 - p) * t_fast`. Nothing is added at
/// `p = 0` or `p = 1`.
pub fn cost_at(family: CostFamily, p: f64, model: &TimingModel) -> CostReport {
    let detection = p * model.t_fast + (1.0 - p) * model.t_slow;
    let interior = p > 0.0 && p < 1.0;
    let criterion_overhead = match family {
        _ if !interior => 0.0,
        CostFamily::Free => 0.0,
        CostFamily::ScoreTable => model.t_pred,
        CostFamily::Detector => (1.0 - p) * model.t_fast,
    };
    CostReport { avg_seconds_per_image: detection + criterion_overhead, detection, criterion_overhead }
}

pub fn compute_cost(plan: &RoutingPlan, model: &TimingModel) -> CostReport {
    cost_at(CostFamily::of(plan.criterion.as_ref()), plan.easy_fraction(), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{BackendConfig, CountingBackend, SyntheticBackend, SyntheticDetectorConfig};
    use crate::difficulty::ScoreTable;
    use crate::model::{BoundingBox, FaceSource, GroundTruthFace};

    fn dataset(n: usize) -> Dataset {
        let images = (0..n)
            .map(|i| {
                let faces = (0..(i % 4))
                    .map(|k| {
                        let x = 10.0 + 60.0 * k as f64;
                        let side = 8.0 + 6.0 * ((i + k) % 5) as f64;
                        GroundTruthFace {
                            bbox: BoundingBox::new(x, 20.0, x + side, 20.0 + side).unwrap(),
                            source: FaceSource::Rectangle,
                        }
                    })
                    .collect();
                ImageRecord::new(format!("im{i:03}"), 240, 120, faces).unwrap()
            })
            .collect();
        Dataset::new("t", images).unwrap()
    }

    fn pair() -> (SyntheticBackend, SyntheticBackend) {
        let fast_cfg = SyntheticDetectorConfig { quality: 0.8, size_midpoint: 0.1, seed: 4, ..Default::default() };
        let slow_cfg = SyntheticDetectorConfig { quality: 0.97, size_midpoint: 0.03, false_positive_rate: 0.2, ..fast_cfg };
        (
            SyntheticBackend::new(BackendConfig::new("fast", 0.28), fast_cfg).unwrap(),
            SyntheticBackend::new(BackendConfig::new("slow", 1.89), slow_cfg).unwrap(),
        )
    }

    fn tables(ds: &Dataset) -> ScoreTables {
        let mut t = ScoreTable::default();
        for (i, img) in ds.images().iter().enumerate() {
            t.insert(img.id(), ((i * 7) % 11) as f64).unwrap();
        }
        ScoreTables::from([("class_agnostic".to_string(), t)])
    }

    #[test]
    fn infinite_thresholds_pick_one_side() {
        let ds = dataset(6);
        let (fast, slow) = pair();
        let tabs = tables(&ds);
        for kind in CriterionKind::standard_set().into_iter().filter(|k| k.to_string() != "difficulty:person_aware") {
            for img in ds.images() {
                let (out, d) = route(img, &kind, f64::INFINITY, &fast, &slow, &tabs).unwrap();
                assert!(d.easy && d.chosen_backend == Route::Fast);
                assert_eq!(out, fast.detect(img).unwrap());
                let (out, d) = route(img, &kind, f64::NEG_INFINITY, &fast, &slow, &tabs).unwrap();
                assert!(!d.easy && d.chosen_backend == Route::Slow);
                assert_eq!(out, slow.detect(img).unwrap());
            }
        }
    }

    #[test]
    fn empty_fast_output_goes_slow() {
        let ds = dataset(4);
        let blind = SyntheticDetectorConfig { quality: 0.0, false_positive_rate: 0.0, ..Default::default() };
        let fast = SyntheticBackend::new(BackendConfig::new("fast", 0.0), blind).unwrap();
        let (_, slow) = pair();
        for img in ds.images() {
            let (_, d) = route(img, &CriterionKind::NumFaces, 1e9, &fast, &slow, &ScoreTables::new()).unwrap();
            assert_eq!(d.criterion_value, Some(f64::INFINITY));
            assert_eq!(d.chosen_backend, Route::Slow);
        }
    }

    #[test]
    fn unknown_table_is_config_error() {
        let ds = dataset(2);
        let (fast, slow) = pair();
        let kind = CriterionKind::ExternalDifficulty("missing".into());
        let err = route(&ds.images()[0], &kind, 0.0, &fast, &slow, &ScoreTables::new()).unwrap_err();
        assert!(matches!(err, Error::UnknownTable(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn batch_matches_naive_route_and_counts_calls() {
        let ds = dataset(40);
        let (fast, slow) = pair();
        let tabs = tables(&ds);
        let kinds = [
            CriterionKind::NumFaces,
            CriterionKind::AvgFaceSize,
            CriterionKind::ExternalDifficulty("class_agnostic".into()),
        ];
        for kind in kinds {
            for p in [0.25, 0.5, 0.75] {
                let cf = CountingBackend::new(&fast);
                let cs = CountingBackend::new(&slow);
                let (outs, plan) = route_batch(&ds, &kind, SplitSpec::EasyFraction(p), &cf, &cs, &tabs).unwrap();
                let easy = plan.easy_count();
                if kind.is_detector_based() {
                    assert_eq!(cf.calls(), ds.len());
                } else {
                    assert_eq!(cf.calls(), easy);
                }
                assert_eq!(cs.calls(), ds.len() - easy);
                for (img, d) in ds.images().iter().zip(&plan.decisions) {
                    let expect = if d.easy { fast.detect(img) } else { slow.detect(img) }.unwrap();
                    assert_eq!(&expect, &outs[img.id()]);
                    assert_eq!(d.fast_output_reused, d.easy && kind.is_detector_based());
                }
            }
            for t in [-0.1, 1.0, 2.0, 5.0] {
                let (outs, plan) = route_batch(&ds, &kind, SplitSpec::Threshold(t), &fast, &slow, &tabs).unwrap();
                for (img, d) in ds.images().iter().zip(&plan.decisions) {
                    let (naive, nd) = route(img, &kind, t, &fast, &slow, &tabs).unwrap();
                    assert_eq!(nd.easy, d.easy);
                    assert_eq!(&naive, &outs[img.id()]);
                }
            }
        }
    }

    #[test]
    fn afw_cost_examples() {
        let m = TimingModel::afw();
        let c = cost_at(CostFamily::ScoreTable, 0.5, &m);
        assert!((c.avg_seconds_per_image - 1.135).abs() < 1e-12);
        let c = cost_at(CostFamily::Detector, 0.75, &m);
        assert!((c.avg_seconds_per_image - 0.7525).abs() < 1e-12);
        for fam in [CostFamily::Free, CostFamily::ScoreTable, CostFamily::Detector] {
            let c = cost_at(fam, 1.0, &m);
            assert_eq!((c.avg_seconds_per_image, c.criterion_overhead), (0.28, 0.0));
            assert_eq!(cost_at(fam, 0.0, &m).avg_seconds_per_image, 1.89);
        }
    }

    #[test]
    fn timing_model_parsing() {
        let m: TimingModel = "fast=0.27,slow=1.17,pred=0.05".parse().unwrap();
        assert_eq!(m, TimingModel::fddb());
        assert!("fast=-1".parse::<TimingModel>().is_err());
        assert!("speed=1".parse::<TimingModel>().is_err());
    }
}
