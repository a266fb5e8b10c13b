//! Splitting criteria and threshold calibration.
//!
//! Every criterion is oriented so that a larger value means a harder image;
//! an image is easy when its value is `<= t`. Detector-based criteria assign
//! `+inf` to images on which the fast detector found nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorOutput;
use crate::error::{Error, Result};
use crate::model::{relative_face_size, ImageRecord};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CriterionKind {
    /// Externally predicted difficulty, looked up in the named score table.
    ExternalDifficulty(String),
    /// Number of faces the fast detector finds.
    NumFaces,
    /// Negated mean relative size of the detected faces.
    AvgFaceSize,
    /// Face count divided by mean relative face size.
    FacesOverAvgSize,
}

impl CriterionKind {
    pub fn is_detector_based(&self) -> bool {
        !matches!(self, CriterionKind::ExternalDifficulty(_))
    }

    /// The five criteria with the conventional table names.
    pub fn standard_set() -> Vec<CriterionKind> {
        vec![
            CriterionKind::ExternalDifficulty("class_agnostic".into()),
            CriterionKind::ExternalDifficulty("person_aware".into()),
            CriterionKind::NumFaces,
            CriterionKind::AvgFaceSize,
            CriterionKind::FacesOverAvgSize,
        ]
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriterionKind::ExternalDifficulty(t) => write!(f, "difficulty:{t}"),
            CriterionKind::NumFaces => f.write_str("num_faces"),
            CriterionKind::AvgFaceSize => f.write_str("avg_face_size"),
            CriterionKind::FacesOverAvgSize => f.write_str("faces_over_avg_size"),
        }
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "num_faces" | "n" => Ok(CriterionKind::NumFaces),
            "avg_face_size" | "avg" => Ok(CriterionKind::AvgFaceSize),
            "faces_over_avg_size" | "n/avg" => Ok(CriterionKind::FacesOverAvgSize),
            "class_agnostic" | "person_aware" => Ok(CriterionKind::ExternalDifficulty(s.to_string())),
            _ => match s.split_once(':') {
                Some(("difficulty" | "external", table)) if !table.is_empty() => {
                    Ok(CriterionKind::ExternalDifficulty(table.to_string()))
                }
                _ => Err(Error::Config(format!("unknown criterion `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for CriterionKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CriterionKind> for String {
    fn from(k: CriterionKind) -> Self {
        k.to_string()
    }
}

/// Per-image difficulty scores produced by an external predictor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn insert(&mut self, id: impl Into<String>, score: f64) -> Result<()> {
        let id = id.into();
        if self.scores.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.scores.insert(id, score);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.scores.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scores.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,score\n");
        for (id, v) in &self.scores {
            out.push_str(&format!("{id},{v}\n"));
        }
        out
    }
}

/// Parse `id,score` CSV. A leading `id,score` header line is optional.
pub fn load_score_table(text: &str) -> Result<ScoreTable> {
    let mut table = ScoreTable::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.replace(' ', "") == "id,score") {
            continue;
        }
        let (id, score) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(lineno, "expected `id,score`"))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad score `{score}`")))?;
        if score.is_nan() {
            return Err(Error::parse(lineno, "score is NaN"));
        }
        table.insert(id.trim(), score)?;
    }
    Ok(table)
}

/// Named score tables, one per external predictor.
pub type ScoreTables = BTreeMap<String, ScoreTable>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionFeatures {
    pub n: usize,
    /// Mean relative face size; `None` iff `n == 0`.
    pub avg: Option<f64>,
}

/// Face count and mean relative size of the detections. Detections are
/// measured after clipping to the image; ones with nothing inside are ignored.
pub fn criterion_features(output: &DetectorOutput, image: &ImageRecord) -> CriterionFeatures {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let sizes: Vec<f64> = output
        .detections()
        .iter()
        .filter_map(|d| d.bbox.clamp_to(w, h))
        .map(|b| relative_face_size(&b, image))
        .collect();
    let n = sizes.len();
    let avg = (n > 0).then(|| sizes.iter().sum::<f64>() / n as f64);
    CriterionFeatures { n, avg }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub image_id: String,
    /// Higher is harder; `+inf` marks a detector-based miss.
    pub value: f64,
}

impl CriterionScore {
    pub fn new(image_id: impl Into<String>, value: f64) -> Self {
        Self { image_id: image_id.into(), value }
    }
}

pub enum CriterionInput<'a> {
    Features(&'a CriterionFeatures),
    Table(&'a ScoreTable),
}

pub fn criterion_value(kind: &CriterionKind, image_id: &str, input: CriterionInput<'_>) -> Result<CriterionScore> {
    let value = match (kind, input) {
        (CriterionKind::ExternalDifficulty(name), CriterionInput::Table(table)) => table
            .get(image_id)
            .ok_or_else(|| Error::MissingScore { table: name.clone(), id: image_id.to_string() })?,
        (_, CriterionInput::Features(f)) if f.n == 0 || f.avg.is_none() => f64::INFINITY,
        (CriterionKind::NumFaces, CriterionInput::Features(f)) => f.n as f64,
        (CriterionKind::AvgFaceSize, CriterionInput::Features(f)) => -f.avg.unwrap_or_default(),
        (CriterionKind::FacesOverAvgSize, CriterionInput::Features(f)) => {
            f.n as f64 / f.avg.unwrap_or_default()
        }
        (kind, _) => {
            return Err(Error::Config(format!("criterion `{kind}` cannot be evaluated from this input")))
        }
    };
    Ok(CriterionScore::new(image_id, value))
}

/// `round(x)` and `ceil(x)` that ignore float noise like `0.1 * 30`.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

pub(crate) fn easy_count(p: f64, n: usize) -> usize {
    snap(p * n as f64).round().max(0.0) as usize
}

/// Smallest value `t` with `|{v <= t}| >= ceil(p * N)`; `-inf` at `p = 0`
/// and `+inf` at `p = 1`.
pub fn calibrate_threshold(values: &[CriterionScore], easy_fraction: f64) -> Result<f64> {
    check_fraction(easy_fraction)?;
    if easy_fraction == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if easy_fraction == 1.0 {
        return Ok(f64::INFINITY);
    }
    if values.is_empty() {
        return Err(Error::EmptyValues);
    }
    let k = (snap(easy_fraction * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let mut sorted: Vec<f64> = values.iter().map(|v| v.value).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("easy fraction {p} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub easy: BTreeSet<String>,
    pub hard: BTreeSet<String>,
}

/// Images with `value <= t` are easy.
pub fn threshold_split(values: &[CriterionScore], t: f64) -> Partition {
    let mut part = Partition::default();
    for v in values {
        if v.value <= t {
            part.easy.insert(v.image_id.clone());
        } else {
            part.hard.insert(v.image_id.clone());
        }
    }
    part
}

/// Marks the `round(p * N)` lowest-valued images easy, ties broken by id.
///
/// For `p < 1` images carrying the `+inf` sentinel are never easy, even if
/// that leaves fewer than `round(p * N)` easy images.
pub fn rank_split(values: &[CriterionScore], easy_fraction: f64) -> Result<Partition> {
    check_fraction(easy_fraction)?;
    let mut order: Vec<&CriterionScore> = values.iter().collect();
    order.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| a.image_id.cmp(&b.image_id)));
    let mut k = easy_count(easy_fraction, values.len());
    if easy_fraction < 1.0 {
        let finite = order.iter().filter(|v| v.value != f64::INFINITY).count();
        k = k.min(finite);
    }
    let mut part = Partition::default();
    for (i, v) in order.into_iter().enumerate() {
        let side = if i < k { &mut part.easy } else { &mut part.hard };
        side.insert(v.image_id.clone());
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::Detection;
    use crate::model::BoundingBox;
    use proptest::prelude::*;

    fn scores(vals: &[f64]) -> Vec<CriterionScore> {
        vals.iter().enumerate().map(|(i, v)| CriterionScore::new(format!("img{i}"), *v)).collect()
    }

    fn output_with_sizes(image: &ImageRecord, sides: &[f64]) -> DetectorOutput {
        let dets = sides
            .iter()
            .map(|s| Detection { bbox: BoundingBox::new(0.0, 0.0, *s, *s).unwrap(), confidence: 0.9 })
            .collect();
        DetectorOutput::new(image.id(), dets, 0.0)
    }

    #[test]
    fn score_table_parsing() {
        assert!(load_score_table("").unwrap().is_empty());
        assert!(load_score_table("id,score\n").unwrap().is_empty());
        let t = load_score_table("id,score\na,0.3\nb,0.7\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(0.7));
        assert!(matches!(load_score_table("id,score\na,1\na,2\n"), Err(Error::DuplicateId(id)) if id == "a"));
        assert!(matches!(load_score_table("id,score\na,x\n"), Err(Error::Parse { line: 2, .. })));
        assert_eq!(load_score_table(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn features_cases() {
        let img = ImageRecord::new("i", 100, 100, vec![]).unwrap();
        let f = criterion_features(&output_with_sizes(&img, &[]), &img);
        assert_eq!((f.n, f.avg), (0, None));
        let f = criterion_features(&output_with_sizes(&img, &[10.0, 20.0]), &img);
        assert_eq!(f.n, 2);
        assert!((f.avg.unwrap() - 0.15).abs() < 1e-15);
        let f = criterion_features(&output_with_sizes(&img, &[10.0]), &img);
        assert_eq!((f.n, f.avg), (1, Some(0.1)));
    }

    #[test]
    fn criterion_values() {
        let none = CriterionFeatures { n: 0, avg: None };
        for kind in [CriterionKind::NumFaces, CriterionKind::AvgFaceSize, CriterionKind::FacesOverAvgSize] {
            assert_eq!(criterion_value(&kind, "x", CriterionInput::Features(&none)).unwrap().value, f64::INFINITY);
        }
        let one = CriterionFeatures { n: 1, avg: Some(0.2) };
        assert_eq!(
            criterion_value(&CriterionKind::AvgFaceSize, "x", CriterionInput::Features(&one)).unwrap().value,
            -0.2
        );
        let two = CriterionFeatures { n: 2, avg: Some(0.15) };
        let v = criterion_value(&CriterionKind::FacesOverAvgSize, "x", CriterionInput::Features(&two)).unwrap();
        assert!((v.value - 13.333_333_333_333_334).abs() < 1e-12);
        let table = load_score_table("a,0.3\n").unwrap();
        let kind = CriterionKind::ExternalDifficulty("t".into());
        assert_eq!(criterion_value(&kind, "a", CriterionInput::Table(&table)).unwrap().value, 0.3);
        assert!(matches!(
            criterion_value(&kind, "zz", CriterionInput::Table(&table)),
            Err(Error::MissingScore { .. })
        ));
    }

    #[test]
    fn criterion_names_roundtrip() {
        for k in CriterionKind::standard_set() {
            assert_eq!(k.to_string().parse::<CriterionKind>().unwrap(), k);
        }
        assert!("bogus".parse::<CriterionKind>().is_err());
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_threshold(&scores(&[1.0, 2.0, 3.0, 4.0]), 0.5).unwrap(), 2.0);
        assert_eq!(calibrate_threshold(&scores(&[1.0, 2.0]), 1.0).unwrap(), f64::INFINITY);
        assert_eq!(calibrate_threshold(&[], 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(calibrate_threshold(&[], 0.5), Err(Error::EmptyValues)));
        let vals = scores(&[1.0, 2.0, 2.0, 3.0]);
        let t = calibrate_threshold(&vals, 0.5).unwrap();
        assert_eq!(t, 2.0);
        assert_eq!(threshold_split(&vals, t).easy.len(), 3);
    }

    /// Enumerates every candidate threshold and picks the smallest one that
    /// covers at least ceil(p * N) values.
    fn brute_threshold(vals: &[f64], p: f64) -> f64 {
        let need = (p * vals.len() as f64 - 1e-9).ceil() as usize;
        let mut cands = vals.to_vec();
        cands.sort_by(f64::total_cmp);
        cands
            .into_iter()
            .find(|t| vals.iter().filter(|v| *v <= t).count() >= need)
            .unwrap()
    }

    #[test]
    fn rank_split_examples() {
        let vals = scores(&[3.0, 1.0, 4.0, 2.0]);
        assert!(rank_split(&vals, 0.0).unwrap().easy.is_empty());
        let p = rank_split(&vals, 0.75).unwrap();
        assert_eq!(p.easy, ["img0", "img1", "img3"].iter().map(|s| s.to_string()).collect());
        let ties = scores(&[2.0, 2.0, 2.0, 2.0]);
        let p = rank_split(&ties, 0.5).unwrap();
        assert_eq!(p.easy, ["img0", "img1"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn sentinel_is_hard_below_full_split() {
        let vals = scores(&[f64::INFINITY, f64::INFINITY, f64::INFINITY, 1.0]);
        let p = rank_split(&vals, 0.75).unwrap();
        assert_eq!(p.easy.len(), 1);
        assert!(p.easy.contains("img3"));
        assert_eq!(rank_split(&vals, 1.0).unwrap().easy.len(), 4);
    }

    proptest! {
        #[test]
        fn calibration_matches_enumeration(vals in prop::collection::vec(0u8..6, 1..12), pi in 1usize..20) {
            let p = pi as f64 / 20.0;
            let v: Vec<f64> = vals.iter().map(|x| *x as f64).collect();
            let t = calibrate_threshold(&scores(&v), p).unwrap();
            prop_assert_eq!(t, brute_threshold(&v, p));
        }

        #[test]
        fn rank_split_partitions(vals in prop::collection::vec(0u8..5, 0..16), pi in 0usize..5) {
            let p = pi as f64 * 0.25;
            let s = scores(&vals.iter().map(|x| *x as f64).collect::<Vec<_>>());
            let part = rank_split(&s, p).unwrap();
            prop_assert_eq!(part.easy.len() + part.hard.len(), s.len());
            prop_assert!(part.easy.is_disjoint(&part.hard));
            prop_assert_eq!(part.easy.len(), (p * s.len() as f64).round() as usize);
            // tie-break oracle: stable sort by (value, id)
            let mut order: Vec<_> = s.iter().collect();
            order.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.image_id.cmp(&b.image_id)));
            let want: BTreeSet<String> = order.iter().take(part.easy.len()).map(|v| v.image_id.clone()).collect();
            prop_assert_eq!(&part.easy, &want);
        }

        #[test]
        fn threshold_split_contains_rank_split(vals in prop::collection::vec(0u8..5, 1..16), pi in 1usize..4) {
            let p = pi as f64 * 0.25;
            let s = scores(&vals.iter().map(|x| *x as f64).collect::<Vec<_>>());
            let t = calibrate_threshold(&s, p).unwrap();
            let by_value = threshold_split(&s, t);
            let by_rank = rank_split(&s, p).unwrap();
            // the count bound uses ceil, rank_split uses round: compare at matching counts
            if (p * s.len() as f64).fract() == 0.0 {
                prop_assert!(by_value.easy.is_superset(&by_rank.easy));
                let unique = s.iter().filter(|v| v.value == t).count() == 1;
                if unique {
                    prop_assert_eq!(&by_value.easy, &by_rank.easy);
                }
            }
        }

        #[test]
        fn orientation_laws(sides in prop::collection::vec(2.0f64..40.0, 1..6), grow in 1.01f64..2.0) {
            let img = ImageRecord::new("o", 100, 100, vec![]).unwrap();
            let base = criterion_features(&output_with_sizes(&img, &sides), &img);
            let bigger: Vec<f64> = sides.iter().map(|s| s * grow).collect();
            let grown = criterion_features(&output_with_sizes(&img, &bigger), &img);
            let v = |f: &CriterionFeatures, k: CriterionKind| criterion_value(&k, "o", CriterionInput::Features(f)).unwrap().value;
            prop_assert!(v(&grown, CriterionKind::AvgFaceSize) < v(&base, CriterionKind::AvgFaceSize));
            let mut more = sides.clone();
            more.push(10.0);
            let added = criterion_features(&output_with_sizes(&img, &more), &img);
            prop_assert!(v(&added, CriterionKind::NumFaces) > v(&base, CriterionKind::NumFaces));
        }
    }
}
