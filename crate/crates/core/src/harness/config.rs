//! Declarative experiment configuration (TOML file and/or CLI flags) and
//! its resolution into loaded datasets, backends and score tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{load_precomputed, BackendConfig, DetectorBackend, SyntheticBackend, SyntheticDetectorConfig};
use crate::difficulty::{load_score_table, CriterionKind, ScoreTables};
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, FpAxis};
use crate::model::{parse_dataset, parse_fddb_ellipse, Dataset, DatasetFormat};
use crate::router::TimingModel;

use super::bench::{generate_benchmark, SynthBenchConfig};
use super::report::ReportFormat;
use super::sweep::{Experiment, DEFAULT_RUNS, DEFAULT_SPLITS};

/// Every field is optional so a file and flags can be layered; see [`ExperimentConfig::overlay`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    /// `id,width,height` CSV with image sizes for FDDB annotations.
    pub image_sizes: Option<PathBuf>,
    /// Generate an in-memory synthetic benchmark with this many images
    /// instead of reading `dataset`.
    pub synthetic: Option<usize>,
    /// Partial overrides of the synthetic benchmark defaults.
    pub bench: Option<toml::Table>,
    /// Detections file path, or `synth:key=value,...`.
    pub fast: Option<String>,
    pub slow: Option<String>,
    pub criteria: Option<Vec<String>>,
    /// `name=path` or `path` (named after the file stem).
    pub scores: Option<Vec<String>>,
    pub splits: Option<Vec<f64>>,
    /// `fast=..,slow=..,pred=..`
    pub timing: Option<String>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub emit: Option<Vec<String>>,
    pub fp_axis: Option<String>,
    pub iou_threshold: Option<f64>,
    pub confidence_threshold: Option<f64>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Fields set in `top` win.
    pub fn overlay(mut self, top: ExperimentConfig) -> Self {
        overlay_fields!(
            self, top, dataset, format, image_sizes, synthetic, bench, fast, slow, criteria, scores, splits, timing,
            runs, seed, out, emit, fp_axis, iou_threshold, confidence_threshold
        );
        self
    }

    pub fn timing_model(&self) -> Result<TimingModel> {
        self.timing.as_deref().map_or(Ok(TimingModel::afw()), str::parse)
    }

    pub fn emit_formats(&self) -> Result<Vec<ReportFormat>> {
        match &self.emit {
            None => Ok(vec![ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Plotdata]),
            Some(list) => list.iter().map(|s| s.parse()).collect(),
        }
    }

    pub fn eval_options(&self) -> Result<EvalOptions> {
        let mut opts = EvalOptions::default();
        if let Some(axis) = &self.fp_axis {
            opts.fp_axis = axis.parse::<FpAxis>()?;
        }
        if let Some(t) = self.iou_threshold {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::Config(format!("iou threshold {t} outside [0, 1)")));
            }
            opts.iou_threshold = t;
        }
        Ok(opts)
    }

    pub fn bench_config(&self) -> Result<SynthBenchConfig> {
        let mut cfg = SynthBenchConfig::default();
        if let Some(over) = &self.bench {
            let mut base = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            merge_tables(&mut base, over);
            cfg = toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        }
        if let Some(n) = self.synthetic {
            cfg.num_images = n;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(t) = &self.timing {
            cfg.timing = t.parse()?;
        }
        Ok(cfg)
    }
}

fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Loaded inputs of an experiment.
pub struct Resolved {
    pub dataset: Dataset,
    pub fast: Box<dyn DetectorBackend>,
    pub slow: Box<dyn DetectorBackend>,
    pub tables: ScoreTables,
    pub criteria: Vec<CriterionKind>,
    pub splits: Vec<f64>,
    pub timing: TimingModel,
    pub runs: usize,
    pub seed: u64,
    pub eval: EvalOptions,
}

impl Resolved {
    pub fn experiment(&self) -> Experiment<'_> {
        Experiment {
            dataset: &self.dataset,
            fast: self.fast.as_ref(),
            slow: self.slow.as_ref(),
            tables: &self.tables,
            criteria: self.criteria.clone(),
            splits: self.splits.clone(),
            timing: self.timing,
            runs: self.runs,
            seed: self.seed,
            eval: self.eval,
        }
    }
}

/// Parse `synth:q=0.9,s0=0.1,gamma=30,lambda=0.5,eta=0.05,ctp=0.7,cfp=0.65,seed=1`.
pub fn parse_synth_spec(spec: &str) -> Result<SyntheticDetectorConfig> {
    let body = spec
        .strip_prefix("synth:")
        .or_else(|| (spec == "synth").then_some(""))
        .ok_or_else(|| Error::Config(format!("`{spec}` is not a synth spec")))?;
    let mut cfg = SyntheticDetectorConfig::default();
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("synth entry `{part}` is not key=value")))?;
        let bad = || Error::Config(format!("bad synth value `{part}`"));
        let x = || v.trim().parse::<f64>().map_err(|_| bad());
        match k.trim() {
            "q" | "quality" => cfg.quality = x()?,
            "s0" | "size_midpoint" => cfg.size_midpoint = x()?,
            "gamma" | "size_slope" => cfg.size_slope = x()?,
            "lambda" | "false_positive_rate" => cfg.false_positive_rate = x()?,
            "eta" | "localization_noise" => cfg.localization_noise = x()?,
            "ctp" | "tp_confidence_floor" => cfg.tp_confidence_floor = x()?,
            "cfp" | "fp_confidence_ceiling" => cfg.fp_confidence_ceiling = x()?,
            "seed" => cfg.seed = v.trim().parse().map_err(|_| bad())?,
            other => return Err(Error::Config(format!("unknown synth key `{other}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend_from_spec(spec: &str, name: &str, latency: f64, threshold: f64) -> Result<Box<dyn DetectorBackend>> {
    let config = BackendConfig::new(name, latency).with_threshold(threshold);
    if spec.starts_with("synth") {
        Ok(Box::new(SyntheticBackend::new(config, parse_synth_spec(spec)?)?))
    } else {
        let text = fs::read_to_string(spec)?;
        Ok(Box::new(load_precomputed(&text, config)?))
    }
}

fn read_sizes(path: &Path) -> Result<BTreeMap<String, (u32, u32)>> {
    let text = fs::read_to_string(path)?;
    let mut sizes = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("id,")) {
            continue;
        }
        let fields: Vec<&str> = line.rsplitn(3, ',').collect();
        let parsed = match fields.as_slice() {
            [h, w, id] => h.trim().parse().ok().zip(w.trim().parse().ok()).map(|(h, w)| (id.to_string(), (w, h))),
            _ => None,
        };
        let (id, wh) = parsed.ok_or_else(|| Error::parse(i + 1, "expected `id,width,height`"))?;
        sizes.insert(id, wh);
    }
    Ok(sizes)
}

pub fn load_dataset(path: &Path, format: DatasetFormat, sizes: Option<&Path>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().map_or("dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let ds = match (format, sizes) {
        (DatasetFormat::FddbEllipse, Some(sizes)) => parse_fddb_ellipse(&text, &read_sizes(sizes)?)?,
        _ => parse_dataset(&text, format)?,
    };
    Ok(ds.with_name(name))
}

pub fn load_tables(specs: &[String]) -> Result<ScoreTables> {
    let mut tables = ScoreTables::new();
    for spec in specs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (stem, p)
            }
        };
        let table = load_score_table(&fs::read_to_string(&path)?)?;
        if tables.insert(name.clone(), table).is_some() {
            return Err(Error::Config(format!("score table `{name}` given twice")));
        }
    }
    Ok(tables)
}

/// Detector-based criteria plus one external criterion per loaded table.
pub fn default_criteria(tables: &ScoreTables) -> Vec<CriterionKind> {
    let mut v: Vec<CriterionKind> = tables.keys().map(|k| CriterionKind::ExternalDifficulty(k.clone())).collect();
    v.extend([CriterionKind::NumFaces, CriterionKind::AvgFaceSize, CriterionKind::FacesOverAvgSize]);
    v
}

type Backend = Box<dyn DetectorBackend>;

pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved> {
    let timing = cfg.timing_model()?;
    let eval = cfg.eval_options()?;
    let threshold = cfg.confidence_threshold.unwrap_or(0.5);
    let seed = cfg.seed.unwrap_or(0);

    let (dataset, mut fast, mut slow, mut tables): (Dataset, Option<Backend>, Option<Backend>, ScoreTables) =
        if cfg.synthetic.is_some() {
            let bench = generate_benchmark(&cfg.bench_config()?)?;
            (bench.dataset, Some(Box::new(bench.fast)), Some(Box::new(bench.slow)), bench.tables)
        } else {
            let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("no dataset given (--dataset or --synthetic)".into()))?;
            let ds = load_dataset(path, cfg.format.unwrap_or(DatasetFormat::Jsonl), cfg.image_sizes.as_deref())?;
            (ds, None, None, ScoreTables::new())
        };

    if let Some(spec) = &cfg.fast {
        fast = Some(backend_from_spec(spec, "fast", timing.t_fast, threshold)?);
    }
    if let Some(spec) = &cfg.slow {
        slow = Some(backend_from_spec(spec, "slow", timing.t_slow, threshold)?);
    }
    let fast = fast.ok_or_else(|| Error::Config("no fast backend given (--fast)".into()))?;
    let slow = slow.ok_or_else(|| Error::Config("no slow backend given (--slow)".into()))?;
    if let Some(specs) = &cfg.scores {
        tables.extend(load_tables(specs)?);
    }

    let criteria = match &cfg.criteria {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<CriterionKind>>>()?,
        None => default_criteria(&tables),
    };
    for c in &criteria {
        if let CriterionKind::ExternalDifficulty(name) = c {
            if !tables.contains_key(name) {
                return Err(Error::Config(format!("criterion `{c}` needs --scores {name}=<csv>")));
            }
        }
    }

    let splits = cfg.splits.clone().unwrap_or_else(|| DEFAULT_SPLITS.to_vec());
    let runs = cfg.runs.unwrap_or(DEFAULT_RUNS);
    let resolved = Resolved { dataset, fast, slow, tables, criteria, splits, timing, runs, seed, eval };
    resolved.experiment().validate()?;
    Ok(resolved)
}
