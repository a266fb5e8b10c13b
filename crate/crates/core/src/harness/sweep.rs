//! Criterion x split sweeps and the random-split baseline.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorBackend;
use crate::difficulty::{easy_count, CriterionKind, Partition, ScoreTables};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::model::Dataset;
use crate::router::{
    compute_cost, cost_at, route_batch, route_partition, CostFamily, CostReport, RoutedOutputs, RoutingPlan,
    SplitSpec, TimingModel,
};

pub const DEFAULT_SPLITS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];
pub const DEFAULT_RUNS: usize = 5;

/// A fully resolved experiment: data, backends and sweep settings.
pub struct Experiment<'a> {
    pub dataset: &'a Dataset,
    pub fast: &'a dyn DetectorBackend,
    pub slow: &'a dyn DetectorBackend,
    pub tables: &'a ScoreTables,
    pub criteria: Vec<CriterionKind>,
    pub splits: Vec<f64>,
    pub timing: TimingModel,
    pub runs: usize,
    pub seed: u64,
    pub eval: EvalOptions,
}

impl Experiment<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("baseline runs must be >= 1".into()));
        }
        if let Some(p) = self.splits.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("split {p} outside [0, 1]")));
        }
        for c in &self.criteria {
            if let CriterionKind::ExternalDifficulty(name) = c {
                if !self.tables.contains_key(name) {
                    return Err(Error::UnknownTable(name.clone()));
                }
            }
        }
        self.timing.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub criterion: CriterionKind,
    pub easy_fraction: f64,
    /// Fraction actually routed to the fast detector (can fall short of
    /// `easy_fraction` when detector-based criteria see empty outputs).
    pub achieved_easy_fraction: f64,
    pub report: EvalReport,
    pub tp: usize,
    pub fp: usize,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub easy_fraction: f64,
    pub runs: usize,
    pub mean: EvalReport,
    pub stddev: EvalReport,
    pub mean_tp: f64,
    pub mean_fp: f64,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset: String,
    pub num_images: usize,
    pub num_faces: usize,
    pub timing: TimingModel,
    pub splits: Vec<f64>,
    pub criteria: Vec<CriterionKind>,
    /// Criterion-major, in `criteria` x `splits` order.
    pub cells: Vec<SweepCell>,
    /// One per split.
    pub baseline: Vec<BaselineCell>,
}

impl SweepResult {
    pub fn cell(&self, criterion: &CriterionKind, easy_fraction: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| &c.criterion == criterion && c.easy_fraction == easy_fraction)
    }

    pub fn baseline_at(&self, easy_fraction: f64) -> Option<&BaselineCell> {
        self.baseline.iter().find(|b| b.easy_fraction == easy_fraction)
    }
}

/// Route one (criterion, split) cell.
pub fn run_cell(exp: &Experiment<'_>, criterion: &CriterionKind, p: f64) -> Result<(RoutedOutputs, RoutingPlan)> {
    route_batch(exp.dataset, criterion, SplitSpec::EasyFraction(p), exp.fast, exp.slow, exp.tables)
}

pub fn run_sweep(exp: &Experiment<'_>) -> Result<SweepResult> {
    exp.validate()?;
    let mut cells = Vec::with_capacity(exp.criteria.len() * exp.splits.len());
    for criterion in &exp.criteria {
        for &p in &exp.splits {
            let started = Instant::now();
            let (outputs, plan) = run_cell(exp, criterion, p)?;
            let (report, matches) = evaluate(&outputs, exp.dataset, &exp.eval)?;
            cells.push(SweepCell {
                criterion: criterion.clone(),
                easy_fraction: p,
                achieved_easy_fraction: plan.easy_fraction(),
                report,
                tp: matches.tp_count(),
                fp: matches.fp_count(),
                cost: compute_cost(&plan, &exp.timing),
            });
            log::debug!("cell {criterion} p={p}: {:?}", started.elapsed());
        }
    }
    let baseline = exp
        .splits
        .iter()
        .map(|&p| {
            let started = Instant::now();
            let b = random_baseline(exp.dataset, exp.fast, exp.slow, p, exp.runs, exp.seed, &exp.eval, &exp.timing);
            log::debug!("baseline p={p}: {:?}", started.elapsed());
            b
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        dataset: exp.dataset.name().to_string(),
        num_images: exp.dataset.len(),
        num_faces: exp.dataset.num_faces(),
        timing: exp.timing,
        splits: exp.splits.clone(),
        criteria: exp.criteria.clone(),
        cells,
        baseline,
    })
}

/// Uniformly random easy subset of exactly `round(p * N)` images.
pub fn random_partition(dataset: &Dataset, p: f64, seed: u64) -> Partition {
    let n = dataset.len();
    let k = easy_count(p, n).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<usize> = index::sample(&mut rng, n, k).into_iter().collect();
    let mut part = Partition::default();
    for (i, img) in dataset.images().iter().enumerate() {
        let side = if chosen.contains(&i) { &mut part.easy } else { &mut part.hard };
        side.insert(img.id().to_string());
    }
    part
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if let Some(&first) = values.first() {
        if values.iter().all(|&v| v == first) {
            return (first, 0.0);
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Average over `runs` random splits; run `r` uses seed `seed + r`.
/// Reports the sample standard deviation.
#[allow(clippy::too_many_arguments)]
pub fn random_baseline(
    dataset: &Dataset,
    fast: &dyn DetectorBackend,
    slow: &dyn DetectorBackend,
    p: f64,
    runs: usize,
    seed: u64,
    opts: &EvalOptions,
    timing: &TimingModel,
) -> Result<BaselineCell> {
    if runs == 0 {
        return Err(Error::Config("baseline runs must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("split {p} outside [0, 1]")));
    }
    let mut reports = Vec::with_capacity(runs);
    let (mut tps, mut fps) = (Vec::with_capacity(runs), Vec::with_capacity(runs));
    for r in 0..runs {
        let part = random_partition(dataset, p, seed.wrapping_add(r as u64));
        let (outputs, _) = route_partition(dataset, &part, fast, slow)?;
        let (report, matches) = evaluate(&outputs, dataset, opts)?;
        reports.push(report);
        tps.push(matches.tp_count() as f64);
        fps.push(matches.fp_count() as f64);
    }
    let col = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    let (ap, ap_sd) = col(|r| r.ap);
    let (disc, disc_sd) = col(|r| r.disc_roc);
    let (cont, cont_sd) = col(|r| r.cont_roc);
    Ok(BaselineCell {
        easy_fraction: p,
        runs,
        mean: EvalReport { ap, disc_roc: disc, cont_roc: cont },
        stddev: EvalReport { ap: ap_sd, disc_roc: disc_sd, cont_roc: cont_sd },
        mean_tp: mean_std(&tps).0,
        mean_fp: mean_std(&fps).0,
        cost: cost_at(CostFamily::Free, p, timing),
    })
}
