//! Geometry, ground truth and dataset ingestion.
//!
//! All coordinates are continuous pixels. Boxes are `[x_min, x_max) x [y_min, y_max)`
//! with strictly positive area; ellipses from FDDB-style annotations are converted
//! to their tight axis-aligned box at ingest so every later stage is box-vs-box.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::Geometry(format!(
                "box ({x_min}, {y_min}, {x_max}, {y_max}) must have x_min < x_max and y_min < y_max"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, half_width: f64, half_height: f64) -> Result<Self> {
        Self::new(cx - half_width, cy - half_height, cx + half_width, cy + half_height)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersect with `[0, width] x [0, height]`. `None` when nothing of
    /// positive area is left.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        BoundingBox::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width),
            self.y_max.min(height),
        )
        .ok()
    }

    /// Lexicographic order on `(x_min, y_min, x_max, y_max)`.
    pub fn lex_cmp(&self, other: &BoundingBox) -> std::cmp::Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Rotated ellipse as used by FDDB ground truth. `angle` is in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseAnnotation {
    center_x: f64,
    center_y: f64,
    semi_major: f64,
    semi_minor: f64,
    angle: f64,
}

impl EllipseAnnotation {
    pub fn new(center_x: f64, center_y: f64, semi_major: f64, semi_minor: f64, angle: f64) -> Result<Self> {
        let finite = [center_x, center_y, semi_major, semi_minor, angle]
            .iter()
            .all(|v| v.is_finite());
        if !finite || semi_minor <= 0.0 || semi_major < semi_minor {
            return Err(Error::Geometry(format!(
                "ellipse axes ({semi_major}, {semi_minor}) must satisfy semi_major >= semi_minor > 0"
            )));
        }
        Ok(Self { center_x, center_y, semi_major, semi_minor, angle })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.center_x, self.center_y)
    }
    pub fn semi_major(&self) -> f64 {
        self.semi_major
    }
    pub fn semi_minor(&self) -> f64 {
        self.semi_minor
    }
    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Point on the boundary at parameter `t` (radians).
    pub fn boundary_point(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (ex, ey) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        (self.center_x + ex * c - ey * s, self.center_y + ex * s + ey * c)
    }
}

/// Tight axis-aligned box around a rotated ellipse.
pub fn ellipse_to_box(e: &EllipseAnnotation) -> BoundingBox {
    let (s, c) = e.angle.sin_cos();
    let (a2, b2) = (e.semi_major * e.semi_major, e.semi_minor * e.semi_minor);
    let half_width = (a2 * c * c + b2 * s * s).sqrt();
    let half_height = (a2 * s * s + b2 * c * c).sqrt();
    // Both half extents are >= semi_minor > 0, so the box is always valid.
    BoundingBox::from_center(e.center_x, e.center_y, half_width, half_height)
        .expect("ellipse with positive axes yields a positive-area box")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceSource {
    Rectangle,
    ConvertedEllipse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthFace {
    pub bbox: BoundingBox,
    pub source: FaceSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    id: String,
    width: u32,
    height: u32,
    faces: Vec<GroundTruthFace>,
}

impl ImageRecord {
    /// Builds an image, clamping every face to the image extent.
    pub fn new(id: impl Into<String>, width: u32, height: u32, faces: Vec<GroundTruthFace>) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!("image `{id}` must have positive dimensions")));
        }
        let faces = faces
            .into_iter()
            .map(|f| match f.bbox.clamp_to(width as f64, height as f64) {
                Some(bbox) => Ok(GroundTruthFace { bbox, source: f.source }),
                None => Err(Error::ZeroAreaBox(id.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { id, width, height, faces })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn faces(&self) -> &[GroundTruthFace] {
        &self.faces
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// `sqrt(area(box) / area(image))`: the side-length ratio of the box
/// relative to the image, invariant to image resolution.
pub fn relative_face_size(bbox: &BoundingBox, image: &ImageRecord) -> f64 {
    (bbox.area() / image.area()).sqrt()
}

/// An ordered, id-unique collection of images. Iteration is always
/// lexicographic by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, mut images: Vec<ImageRecord>) -> Result<Self> {
        images.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = images.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
        Ok(Self { name: name.into(), images })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.images
            .binary_search_by(|img| img.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn num_faces(&self) -> usize {
        self.images.iter().map(|img| img.faces.len()).sum()
    }

    /// Serialize to the jsonl dataset format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for img in &self.images {
            let line = JsonlImage {
                id: img.id.clone(),
                width: img.width,
                height: img.height,
                faces: img.faces.iter().map(|f| f.bbox.to_array()).collect(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("plain struct serializes"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Jsonl,
    FddbEllipse,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "fddb-ellipse" | "fddb" => Ok(DatasetFormat::FddbEllipse),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlImage {
    id: String,
    width: u32,
    height: u32,
    #[serde(default)]
    faces: Vec<[f64; 4]>,
}

/// Parse a dataset. FDDB annotations carry no image dimensions, so their
/// extent is inferred; use [`parse_fddb_ellipse`] to supply known sizes.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::Jsonl => parse_jsonl(text),
        DatasetFormat::FddbEllipse => parse_fddb_ellipse(text, &BTreeMap::new()),
    }
}

fn parse_jsonl(text: &str) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlImage = serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        let faces = rec
            .faces
            .iter()
            .map(|b| {
                BoundingBox::try_from(*b)
                    .map(|bbox| GroundTruthFace { bbox, source: FaceSource::Rectangle })
                    .map_err(|e| Error::parse(lineno, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        images.push(ImageRecord::new(rec.id, rec.width, rec.height, faces).map_err(|e| match e {
            Error::Geometry(msg) => Error::parse(lineno, msg),
            other => other,
        })?);
    }
    Dataset::new("dataset", images)
}

/// Parse the FDDB ellipse layout: blocks of `<image id>`, `<count>`, then
/// `count` lines of `semi_major semi_minor angle center_x center_y 1`.
///
/// `sizes` maps image ids to `(width, height)`. Images without an entry get
/// an extent that just covers their faces (rounded up, origin at 0).
pub fn parse_fddb_ellipse(text: &str, sizes: &BTreeMap<String, (u32, u32)>) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut images = Vec::new();
    let mut seen = HashSet::new();

    while let Some((id_line, id)) = lines.next() {
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let (count_line, count) = lines
            .next()
            .ok_or_else(|| Error::parse(id_line, format!("missing face count for image `{id}`")))?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::parse(count_line, format!("expected a face count, got `{count}`")))?;

        let mut boxes = Vec::with_capacity(count);
        for k in 0..count {
            let (lineno, line) = lines.next().ok_or_else(|| {
                Error::parse(count_line, format!("image `{id}` declares {count} faces, found {k}"))
            })?;
            let fields = line
                .split_whitespace()
                .map(f64::from_str)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(lineno, format!("bad ellipse field: {e}")))?;
            if fields.len() < 5 {
                return Err(Error::parse(lineno, format!("expected 6 ellipse fields, got {}", fields.len())));
            }
            // FDDB occasionally lists the minor axis first.
            let (major, minor) = if fields[0] >= fields[1] {
                (fields[0], fields[1])
            } else {
                (fields[1], fields[0])
            };
            let angle = if fields[0] >= fields[1] {
                fields[2]
            } else {
                fields[2] + std::f64::consts::FRAC_PI_2
            };
            let ellipse = EllipseAnnotation::new(fields[3], fields[4], major, minor, angle)
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
            boxes.push(ellipse_to_box(&ellipse));
        }

        let (width, height) = match sizes.get(id) {
            Some(&wh) => wh,
            None => {
                let w = boxes.iter().map(|b| b.x_max()).fold(1.0, f64::max).ceil();
                let h = boxes.iter().map(|b| b.y_max()).fold(1.0, f64::max).ceil();
                (w as u32, h as u32)
            }
        };
        let faces = boxes
            .into_iter()
            .map(|bbox| GroundTruthFace { bbox, source: FaceSource::ConvertedEllipse })
            .collect();
        images.push(ImageRecord::new(id, width, height, faces)?);
    }
    Dataset::new("dataset", images)
}
