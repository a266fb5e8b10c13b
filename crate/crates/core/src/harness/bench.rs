//! Seeded synthetic benchmark: a dataset, a dominant fast/slow detector pair
//! and two difficulty score tables that track the fast detector's misses.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::detectors::{BackendConfig, SyntheticBackend, SyntheticDetectorConfig};
use crate::difficulty::{ScoreTable, ScoreTables};
use crate::error::{Error, Result};
use crate::keyed::{self, Purpose};
use crate::model::{relative_face_size, BoundingBox, Dataset, FaceSource, GroundTruthFace, ImageRecord};
use crate::router::TimingModel;

const PLACEMENT_ATTEMPTS: usize = 500;
const MIN_FACE_SIZE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBenchConfig {
    pub num_images: usize,
    /// Faces per image are `1 + Poisson(faces_mean)`.
    pub faces_mean: f64,
    /// Median relative face size of a single-face image.
    pub size_median: f64,
    /// Log-normal spread shared by all faces of one image.
    pub size_sigma_image: f64,
    /// Log-normal spread of each face around its image's scale.
    pub size_sigma_face: f64,
    /// Crowded images have smaller faces: scale ~ count^(-crowd_exponent).
    pub crowd_exponent: f64,
    /// Face sizes in a `k`-face image are capped at `size_cap / sqrt(k)`.
    pub size_cap: f64,
    pub width: u32,
    pub height: u32,
    pub fast: SyntheticDetectorConfig,
    pub slow: SyntheticDetectorConfig,
    pub confidence_threshold: f64,
    pub timing: TimingModel,
    /// Uniform noise amplitude for the `class_agnostic` and `person_aware` tables.
    pub score_noise: [f64; 2],
    pub seed: u64,
}

impl Default for SynthBenchConfig {
    fn default() -> Self {
        let fast = SyntheticDetectorConfig {
            quality: 0.92,
            size_midpoint: 0.09,
            size_slope: 40.0,
            false_positive_rate: 0.6,
            localization_noise: 0.06,
            tp_confidence_floor: 0.7,
            fp_confidence_ceiling: 0.65,
            seed: 0,
        };
        let slow = SyntheticDetectorConfig {
            quality: 0.99,
            size_midpoint: 0.03,
            false_positive_rate: 0.2,
            localization_noise: 0.03,
            ..fast
        };
        Self {
            num_images: 500,
            faces_mean: 1.0,
            size_median: 0.18,
            size_sigma_image: 0.35,
            size_sigma_face: 0.2,
            crowd_exponent: 0.6,
            size_cap: 0.4,
            width: 640,
            height: 480,
            fast,
            slow,
            confidence_threshold: 0.5,
            timing: TimingModel::afw(),
            score_noise: [0.3, 0.6],
            seed: 0,
        }
    }
}

impl SynthBenchConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_images(mut self, n: usize) -> Self {
        self.num_images = n;
        self
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic benchmark: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive");
        }
        if !(self.faces_mean >= 0.0 && self.faces_mean.is_finite()) {
            return bad("faces_mean must be >= 0");
        }
        if !(self.size_median > 0.0 && self.size_median < 1.0) {
            return bad("size_median must lie in (0, 1)");
        }
        if !(self.size_cap > 0.0 && self.size_cap <= 1.0) {
            return bad("size_cap must lie in (0, 1]");
        }
        if self.size_sigma_image < 0.0 || self.size_sigma_face < 0.0 || self.crowd_exponent < 0.0 {
            return bad("spreads and crowd exponent must be >= 0");
        }
        if self.score_noise.iter().any(|a| !(*a >= 0.0)) {
            return bad("score noise must be >= 0");
        }
        self.fast.validate()?;
        self.slow.validate()?;
        self.timing.validate()
    }

    /// Detector seed shared by both simulators.
    fn detector_seed(&self) -> u64 {
        keyed::key(self.seed, "detectors", 0, Purpose::FaceDraw)
    }
}

pub struct Benchmark {
    pub dataset: Dataset,
    pub fast: SyntheticBackend,
    pub slow: SyntheticBackend,
    pub tables: ScoreTables,
}

pub const SCORE_TABLE_NAMES: [&str; 2] = ["class_agnostic", "person_aware"];

/// Build a benchmark. Both detectors draw from one shared seed, so with the
/// default parameters the slow detector dominates the fast one image by image.
pub fn generate_benchmark(cfg: &SynthBenchConfig) -> Result<Benchmark> {
    cfg.validate()?;
    let shared = cfg.detector_seed();
    let fast_cfg = SyntheticDetectorConfig { seed: shared, ..cfg.fast };
    let slow_cfg = SyntheticDetectorConfig { seed: shared, ..cfg.slow };
    let fast = SyntheticBackend::new(
        BackendConfig::new("fast", cfg.timing.t_fast).with_threshold(cfg.confidence_threshold),
        fast_cfg,
    )?;
    let slow = SyntheticBackend::new(
        BackendConfig::new("slow", cfg.timing.t_slow).with_threshold(cfg.confidence_threshold),
        slow_cfg,
    )?;

    let width = (cfg.num_images.max(1) - 1).to_string().len().max(5);
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut tables = [ScoreTable::default(), ScoreTable::default()];
    for i in 0..cfg.num_images {
        let id = format!("img{i:0width$}");
        let image = layout_image(cfg, &id)?;
        let expected_misses: f64 = image
            .faces()
            .iter()
            .map(|f| 1.0 - fast_cfg.detect_probability(relative_face_size(&f.bbox, &image)))
            .sum();
        for (t, table) in tables.iter_mut().enumerate() {
            let mut rng = keyed::stream(cfg.seed, &id, t as u64, Purpose::ScoreNoise);
            let noise = cfg.score_noise[t] * rng.random_range(-1.0..=1.0);
            table.insert(id.clone(), expected_misses + noise)?;
        }
        images.push(image);
    }
    let dataset = Dataset::new(format!("synthetic-{}", cfg.seed), images)?;
    let [a, b] = tables;
    let tables = ScoreTables::from([(SCORE_TABLE_NAMES[0].to_string(), a), (SCORE_TABLE_NAMES[1].to_string(), b)]);
    Ok(Benchmark { dataset, fast, slow, tables })
}

fn layout_image(cfg: &SynthBenchConfig, id: &str) -> Result<ImageRecord> {
    let mut rng = keyed::stream(cfg.seed, id, 0, Purpose::ImageLayout);
    let extra = if cfg.faces_mean > 0.0 {
        Poisson::new(cfg.faces_mean).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let count = 1 + extra;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let log_scale = cfg.size_median.ln() - cfg.crowd_exponent * (count as f64).ln()
        + cfg.size_sigma_image * unit.sample(&mut rng);
    let max_size = (cfg.size_cap / (count as f64).sqrt()).max(MIN_FACE_SIZE);

    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
    for _ in 0..count {
        let s = (log_scale + cfg.size_sigma_face * unit.sample(&mut rng)).exp().clamp(MIN_FACE_SIZE, max_size);
        let aspect: f64 = rng.random_range(0.75..=1.0);
        let area = s * s * w * h;
        let fw = (area * aspect).sqrt().min(w);
        let fh = (area / aspect).sqrt().min(h);
        let free = |c: &BoundingBox| boxes.iter().all(|b| b.intersection_area(c) == 0.0);
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x0 = rng.random::<f64>() * (w - fw);
            let y0 = rng.random::<f64>() * (h - fh);
            let candidate = BoundingBox::new(x0, y0, x0 + fw, y0 + fh)?;
            if free(&candidate) {
                placed = Some(candidate);
                break;
            }
        }
        // Random placement can paint itself into a corner; scan before giving up.
        if placed.is_none() {
            placed = grid_positions(w - fw, h - fh, fw / 4.0, fh / 4.0)
                .map(|(x0, y0)| BoundingBox::new(x0, y0, x0 + fw, y0 + fh))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .find(|c| free(c));
        }
        match placed {
            Some(b) => boxes.push(b),
            None => {
                return Err(Error::InfeasiblePlacement { image: id.to_string(), faces: count, attempts: PLACEMENT_ATTEMPTS })
            }
        }
    }
    let faces = boxes.into_iter().map(|bbox| GroundTruthFace { bbox, source: FaceSource::Rectangle }).collect();
    ImageRecord::new(id, cfg.width, cfg.height, faces)
}

/// Lattice of top-left corners over `[0, max_x] x [0, max_y]`, edges included.
fn grid_positions(max_x: f64, max_y: f64, step_x: f64, step_y: f64) -> impl Iterator<Item = (f64, f64)> {
    let axis = |max: f64, step: f64| {
        let n = (max / step.max(1e-9)).floor() as usize;
        (0..=n).map(move |i| i as f64 * step).chain((n as f64 * step < max).then_some(max))
    };
    let xs: Vec<f64> = axis(max_x, step_x).collect();
    axis(max_y, step_y).flat_map(move |y| xs.clone().into_iter().map(move |x| (x, y)))
}
