//! Domain types for the annotation pipeline.
//!
//! Types here are plain data with public fields so records can be built from
//! untrusted JSONL and then checked; the validating constructors are the
//! convenient path, [`validate_record`] is the authority. Whole-record
//! invariants (stage monotonicity, hallucination phrases appearing in the
//! reference text) are reported as [`Violation`] values rather than panics so
//! callers can surface them.

mod config;
mod record;

pub use config::{
    config_fingerprint, load_config, BackendEndpoints, ConfigError, DepthOrientation,
    PipelineConfig,
};
pub(crate) use config::sha256_hex;
pub use record::{from_jsonl_line, read_records, to_jsonl_line, write_records, RECORD_SCHEMA};

use crate::numeric::Real;
use crate::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Construction-time failures for model types.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid entity phrase: {0}")]
    Phrase(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid image reference: {0}")]
    Image(String),
    #[error("invalid raster: {0}")]
    Raster(String),
    #[error("record line is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported record schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: String },
}

/// Locator for one image: stable id, pixel dimensions, and where the pixels
/// live (a file path or URL). Records never embed pixel data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub pixel_source: String,
}

impl ImageRef {
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        pixel_source: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::Image("id must be nonempty".into()));
        }
        if width == 0 || height == 0 {
            return Err(ModelError::Image(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { id, width, height, pixel_source: pixel_source.into() })
    }
}

/// Axis-aligned box in normalized image coordinates, corners `(x1, y1)` top
/// left and `(x2, y2)` bottom right, all components in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[Scalar; 4]", into = "[Scalar; 4]")]
pub struct BBoxNorm {
    pub x1: Scalar,
    pub y1: Scalar,
    pub x2: Scalar,
    pub y2: Scalar,
}

impl BBoxNorm {
    pub fn new(x1: Scalar, y1: Scalar, x2: Scalar, y2: Scalar) -> Result<Self, ModelError> {
        let b = Self { x1, y1, x2, y2 };
        match b.check() {
            None => Ok(b),
            Some(rule) => Err(ModelError::Geometry(format!("{rule}: [{x1}, {y1}, {x2}, {y2}]"))),
        }
    }

    /// Rule violated by this box, if any.
    pub(crate) fn check(&self) -> Option<&'static str> {
        let Self { x1, y1, x2, y2 } = *self;
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Some("coordinates must be finite");
        }
        if !(0.0..=1.0).contains(&x1) || !(0.0..=1.0).contains(&y1) {
            return Some("corners must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&x2) || !(0.0..=1.0).contains(&y2) {
            return Some("corners must lie in [0, 1]");
        }
        if x1 > x2 || y1 > y2 {
            return Some("top-left corner must not pass bottom-right");
        }
        None
    }
}

impl From<[Scalar; 4]> for BBoxNorm {
    fn from([x1, y1, x2, y2]: [Scalar; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BBoxNorm> for [Scalar; 4] {
    fn from(b: BBoxNorm) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Axis-aligned box in pixel corner coordinates: `0 <= x1 <= x2 <= width`,
/// `0 <= y1 <= y2 <= height`. A box covering pixel column range `x1..x2`; a
/// one-pixel box at `(x, y)` is `(x, y, x+1, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct PixelBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, ModelError> {
        if x1 > x2 || y1 > y2 {
            return Err(ModelError::Geometry(format!(
                "pixel box corners out of order: [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x2 <= width && self.y2 <= height
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x2 - self.x1) * u64::from(self.y2 - self.y1)
    }
}

impl std::fmt::Display for PixelBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl From<[u32; 4]> for PixelBox {
    fn from([x1, y1, x2, y2]: [u32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<PixelBox> for [u32; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Dense binary mask over an image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ModelError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(ModelError::Raster(format!(
                "mask holds {} bits for a {width}x{height} image (expected {expected})",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// All-false mask.
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    /// Mask with exactly the pixels inside `pbox` set.
    pub fn filled_box(width: u32, height: u32, pbox: &PixelBox) -> Self {
        let mut mask = Self::empty(width, height);
        for y in pbox.y1..pbox.y2.min(height) {
            let row = y as usize * width as usize;
            for x in pbox.x1..pbox.x2.min(width) {
                mask.bits[row + x as usize] = true;
            }
        }
        mask
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Dense per-pixel depth raster, row-major, every value finite.
///
/// Generic over the scalar so the math kernels can run at either precision;
/// the unparameterized name means `DepthMap<Scalar>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<R: Real = Scalar> {
    pub width: u32,
    pub height: u32,
    pub values: Vec<R>,
}

impl<R: Real> DepthMap<R> {
    pub fn new(width: u32, height: u32, values: Vec<R>) -> Result<Self, ModelError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(ModelError::Raster(format!(
                "depth map holds {} values for a {width}x{height} image (expected {expected})",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Raster("depth values must be finite".into()));
        }
        Ok(Self { width, height, values })
    }
}

/// Noun phrase naming one object. Nonempty after trimming, single line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityPhrase(String);

impl EntityPhrase {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(ModelError::Phrase("phrase is empty".into()));
        }
        if trimmed.contains('\n') || trimmed.contains('\r') {
            return Err(ModelError::Phrase(format!("phrase spans multiple lines: {trimmed:?}")));
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EntityPhrase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EntityPhrase {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityPhrase> for String {
    fn from(p: EntityPhrase) -> Self {
        p.0
    }
}

/// One grounded object: what it is, where it sits, how near it is
/// (`depth_rel` in `[0, 1]`, 1 = nearest to the camera), and how much of the
/// frame it covers (`size_frac` in `(0, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub phrase: EntityPhrase,
    pub bbox: BBoxNorm,
    #[serde(rename = "depth")]
    pub depth_rel: Scalar,
    #[serde(rename = "size")]
    pub size_frac: Scalar,
    /// Set when segmentation failed and the box itself was used as the mask.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mask_fallback: bool,
}

impl ObjectAnnotation {
    pub fn new(
        phrase: EntityPhrase,
        bbox: BBoxNorm,
        depth_rel: Scalar,
        size_frac: Scalar,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&depth_rel) {
            return Err(ModelError::Geometry(format!("depth_rel out of [0, 1]: {depth_rel}")));
        }
        if !(size_frac > 0.0 && size_frac <= 1.0) {
            return Err(ModelError::Geometry(format!("size_frac out of (0, 1]: {size_frac}")));
        }
        Ok(Self { phrase, bbox, depth_rel, size_frac, mask_fallback: false })
    }
}

/// Progress of one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Pending,
    Complete,
    Failed(String),
}

impl StageState {
    pub fn is_complete(&self) -> bool {
        matches!(self, StageState::Complete)
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, StageState::Failed(_))
    }
}

/// Per-record stage flags. A later stage can only be complete if every
/// earlier one is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub phase_a: StageState,
    pub phase_b: StageState,
    pub phase_c: StageState,
}

impl StageStatus {
    pub fn pending() -> Self {
        Self {
            phase_a: StageState::Pending,
            phase_b: StageState::Pending,
            phase_c: StageState::Pending,
        }
    }

    pub fn all_complete(&self) -> bool {
        self.phase_a.is_complete() && self.phase_b.is_complete() && self.phase_c.is_complete()
    }
}

/// Full per-image result of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image: ImageRef,
    pub reference_description: String,
    pub hallucinations: Vec<EntityPhrase>,
    pub objects: Vec<ObjectAnnotation>,
    pub final_description: Option<String>,
    pub stage_status: StageStatus,
    pub config_fingerprint: String,
}

/// One broken invariant: which field, which rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Check every record invariant, reporting violations as data.
///
/// Hallucination phrases are matched against the reference description
/// case-insensitively, mirroring how the detector stage treats casing.
pub fn validate_record(record: &AnnotationRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, rule: String| {
        out.push(Violation { field: field.to_string(), rule });
    };

    if record.image.id.is_empty() {
        push("image_id", "must be nonempty".into());
    }
    if record.image.width == 0 || record.image.height == 0 {
        push(
            "width/height",
            format!("must be at least 1, got {}x{}", record.image.width, record.image.height),
        );
    }
    if record.config_fingerprint.is_empty() {
        push("config_fingerprint", "must be nonempty".into());
    }

    for (i, obj) in record.objects.iter().enumerate() {
        if let Some(rule) = obj.bbox.check() {
            push(&format!("objects[{i}].bbox"), rule.into());
        }
        if !(0.0..=1.0).contains(&obj.depth_rel) {
            push(&format!("objects[{i}].depth"), format!("out of [0, 1]: {}", obj.depth_rel));
        }
        if !(obj.size_frac > 0.0 && obj.size_frac <= 1.0) {
            push(&format!("objects[{i}].size"), format!("out of (0, 1]: {}", obj.size_frac));
        }
    }

    let reference_lower = record.reference_description.to_lowercase();
    for (i, phrase) in record.hallucinations.iter().enumerate() {
        if !reference_lower.contains(&phrase.as_str().to_lowercase()) {
            push(
                &format!("hallucinations[{i}]"),
                format!("phrase {:?} does not occur in reference_description", phrase.as_str()),
            );
        }
    }

    let status = &record.stage_status;
    if record.final_description.is_some() && !status.all_complete() {
        push("final_description", "present although not every stage is complete".into());
    }
    if status.phase_c.is_complete() && !status.phase_b.is_complete() {
        push("stage_status.phase_c", "complete although phase_b is not".into());
    }
    if status.phase_b.is_complete() && !status.phase_a.is_complete() {
        push("stage_status.phase_b", "complete although phase_a is not".into());
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> AnnotationRecord {
        AnnotationRecord {
            image: ImageRef::new("img-1", 640, 480, "scenes/img-1.pgm").unwrap(),
            reference_description:
                "A red cube rests beside a blue sphere, with a ghostly lantern nearby.".into(),
            hallucinations: vec![EntityPhrase::new("ghostly lantern").unwrap()],
            objects: vec![
                ObjectAnnotation::new(
                    EntityPhrase::new("red cube").unwrap(),
                    BBoxNorm::new(0.1, 0.2, 0.5, 0.9).unwrap(),
                    1.0,
                    0.25,
                )
                .unwrap(),
                ObjectAnnotation::new(
                    EntityPhrase::new("blue sphere").unwrap(),
                    BBoxNorm::new(0.6, 0.1, 0.9, 0.4).unwrap(),
                    0.0,
                    0.05,
                )
                .unwrap(),
            ],
            final_description: Some("A red cube rests beside a blue sphere.".into()),
            stage_status: StageStatus {
                phase_a: StageState::Complete,
                phase_b: StageState::Complete,
                phase_c: StageState::Complete,
            },
            config_fingerprint: "deadbeef".into(),
        }
    }

    #[test]
    fn valid_record_has_no_violations() {
        assert_eq!(validate_record(&sample_record()), Vec::new());
    }

    #[test]
    fn missing_hallucination_phrase_is_reported() {
        let mut r = sample_record();
        r.reference_description = "A red cube rests beside a blue sphere.".into();
        let violations = validate_record(&r);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "hallucinations[0]");
        assert!(violations[0].rule.contains("ghostly lantern"));
    }

    #[test]
    fn hallucination_match_ignores_case() {
        let mut r = sample_record();
        r.hallucinations = vec![EntityPhrase::new("Ghostly Lantern").unwrap()];
        assert_eq!(validate_record(&r), Vec::new());
    }

    #[test]
    fn premature_final_description_is_reported() {
        let mut r = sample_record();
        r.stage_status.phase_c = StageState::Pending;
        let violations = validate_record(&r);
        assert!(violations.iter().any(|v| v.field == "final_description"));
    }

    #[test]
    fn stage_order_must_be_monotonic() {
        let mut r = sample_record();
        r.final_description = None;
        r.stage_status.phase_a = StageState::Failed("backend outage".into());
        let violations = validate_record(&r);
        assert!(violations.iter().any(|v| v.field == "stage_status.phase_b"));
    }

    #[test]
    fn out_of_range_fields_are_reported_per_object() {
        let mut r = sample_record();
        r.objects[1].depth_rel = 1.5;
        r.objects[1].size_frac = 0.0;
        let violations = validate_record(&r);
        assert!(violations.iter().any(|v| v.field == "objects[1].depth"));
        assert!(violations.iter().any(|v| v.field == "objects[1].size"));
    }

    #[test]
    fn constructors_reject_bad_values() {
        assert!(ImageRef::new("", 10, 10, "x").is_err());
        assert!(ImageRef::new("a", 0, 10, "x").is_err());
        assert!(BBoxNorm::new(0.6, 0.0, 0.4, 1.0).is_err());
        assert!(BBoxNorm::new(0.0, 0.0, 1.1, 1.0).is_err());
        assert!(EntityPhrase::new("  ").is_err());
        assert!(EntityPhrase::new("two\nlines").is_err());
        assert!(PixelBox::new(5, 0, 4, 1).is_err());
        assert!(PixelMask::new(2, 2, vec![true; 3]).is_err());
        assert!(DepthMap::<f64>::new(2, 2, vec![0.0, 1.0, 2.0, f64::NAN]).is_err());
        let phrase = EntityPhrase::new("cat").unwrap();
        let bbox = BBoxNorm::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(ObjectAnnotation::new(phrase.clone(), bbox, -0.1, 0.5).is_err());
        assert!(ObjectAnnotation::new(phrase, bbox, 0.5, 0.0).is_err());
    }

    #[test]
    fn entity_phrase_trims_and_compares() {
        let p = EntityPhrase::new("  red cube ").unwrap();
        assert_eq!(p.as_str(), "red cube");
        assert_eq!(p.to_string(), "red cube");
    }

    #[test]
    fn filled_box_mask_matches_area() {
        let pbox = PixelBox::new(1, 1, 3, 4).unwrap();
        let mask = PixelMask::filled_box(5, 5, &pbox);
        assert_eq!(mask.count_set() as u64, pbox.area());
        let one = PixelBox::new(2, 2, 3, 3).unwrap();
        assert_eq!(PixelMask::filled_box(5, 5, &one).count_set(), 1);
    }
}
