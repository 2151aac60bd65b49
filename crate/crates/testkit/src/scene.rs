//! Deterministic synthetic scenes with exact ground truth.
//!
//! A scene is a handful of disjoint rectangle or ellipse regions on a flat
//! background, each with its own uniform depth, plus a reference description
//! that names every planted object and sprinkles in distractor phrases that
//! exist only in the text. Everything derives from the seed, so a scene can
//! be regenerated anywhere and its rasters recomputed on demand.

use pictext::model::{DepthMap, ImageRef, PixelBox, PixelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Depth raster value outside every object. Scenes are generated for the
/// near-is-high convention, so the background sits below every object depth.
pub const BACKGROUND_DEPTH: f64 = 0.25;

const PLANTED_NOUNS: &[&str] = &[
    "cube", "sphere", "pyramid", "cylinder", "cone", "torus", "prism", "wedge", "disk", "block",
    "slab", "orb",
];
const PLANTED_COLORS: &[&str] = &[
    "red", "blue", "green", "amber", "violet", "teal", "gray", "coral", "olive", "navy", "plum",
    "rust",
];
const DISTRACTOR_NOUNS: &[&str] = &[
    "kettle", "lantern", "ladder", "bicycle", "umbrella", "wagon", "barrel", "flag", "bench",
    "crate",
];
const DISTRACTOR_COLORS: &[&str] = &["crimson", "golden", "silver", "bronze", "ivory", "beige"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Rectangle,
    Ellipse,
}

/// One painted region. The bounding box is `[x1, x2) x [y1, y2)` in pixels;
/// an ellipse is inscribed in it and tested at pixel centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub phrase: String,
    pub shape: RegionShape,
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
    pub depth_value: f64,
    /// Whether the reference description mentions this object. Unplanted
    /// objects are pure clutter: painted and given depth, never proposed.
    pub planted: bool,
}

impl SceneObject {
    pub fn bbox(&self) -> PixelBox {
        PixelBox::new(self.x1, self.y1, self.x2, self.y2).expect("scene boxes are ordered")
    }

    /// Region membership of the pixel whose top-left corner is `(x, y)`.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        if x < self.x1 || x >= self.x2 || y < self.y1 || y >= self.y2 {
            return false;
        }
        match self.shape {
            RegionShape::Rectangle => true,
            RegionShape::Ellipse => {
                let cx = (self.x1 + self.x2) as f64 / 2.0;
                let cy = (self.y1 + self.y2) as f64 / 2.0;
                let rx = (self.x2 - self.x1) as f64 / 2.0;
                let ry = (self.y2 - self.y1) as f64 / 2.0;
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
    /// Phrases woven into the description that match nothing in the scene.
    pub distractor_phrases: Vec<String>,
    /// The text a perfect holistic captioner would produce: every planted
    /// phrase and every distractor phrase, verbatim.
    pub reference_description: String,
}

impl SyntheticScene {
    pub fn planted(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.planted)
    }

    /// Index of the object owning pixel `(x, y)`, if any. Regions are
    /// disjoint, so the first hit is the only hit.
    pub fn owner_at(&self, x: u32, y: u32) -> Option<usize> {
        self.objects.iter().position(|o| o.contains(x, y))
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        match self.owner_at(x, y) {
            Some(i) => self.objects[i].depth_value,
            None => BACKGROUND_DEPTH,
        }
    }

    pub fn depth_map(&self) -> DepthMap {
        let mut values = Vec::with_capacity(self.width as usize * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                values.push(self.depth_at(x, y));
            }
        }
        DepthMap::new(self.width, self.height, values).expect("scene depth raster is well formed")
    }

    pub fn mask_for(&self, index: usize) -> PixelMask {
        let object = &self.objects[index];
        let mut bits = vec![false; self.width as usize * self.height as usize];
        for y in object.y1..object.y2 {
            for x in object.x1..object.x2 {
                if object.contains(x, y) {
                    bits[y as usize * self.width as usize + x as usize] = true;
                }
            }
        }
        PixelMask::new(self.width, self.height, bits).expect("mask matches scene dims")
    }

    /// Grayscale raster as a binary (P5) PGM file body.
    pub fn pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for y in 0..self.height {
            for x in 0..self.width {
                let gray = match self.owner_at(x, y) {
                    Some(i) => 72 + ((i as u32 * 23) % 160) as u8,
                    None => 16,
                };
                out.push(gray);
            }
        }
        out
    }
}

/// Deterministically generate a scene. `n_objects` is an upper bound: a
/// placement that cannot avoid existing regions after a fixed number of
/// attempts is skipped, which keeps generation total and seed-stable.
pub fn generate_scene(seed: u64, n_objects: usize, n_distractors: usize) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(96..=256u32);
    let height = rng.gen_range(96..=256u32);

    let mut objects: Vec<SceneObject> = Vec::new();
    let mut used_phrases = std::collections::HashSet::new();
    for _ in 0..n_objects {
        let mut placed = None;
        for _ in 0..40 {
            let w = rng.gen_range(12..=64.min(width / 2));
            let h = rng.gen_range(12..=64.min(height / 2));
            let x1 = rng.gen_range(0..=width - w);
            let y1 = rng.gen_range(0..=height - h);
            let (x2, y2) = (x1 + w, y1 + h);
            let overlaps = objects
                .iter()
                .any(|o| x1 < o.x2 && o.x1 < x2 && y1 < o.y2 && o.y1 < y2);
            if !overlaps {
                placed = Some((x1, y1, x2, y2));
                break;
            }
        }
        let Some((x1, y1, x2, y2)) = placed else { continue };
        let phrase = loop {
            let color = PLANTED_COLORS[rng.gen_range(0..PLANTED_COLORS.len())];
            let noun = PLANTED_NOUNS[rng.gen_range(0..PLANTED_NOUNS.len())];
            let phrase = format!("{color} {noun}");
            if used_phrases.insert(phrase.clone()) {
                break phrase;
            }
        };
        let depth_value = loop {
            let d: f64 = rng.gen_range(1.0..9.0);
            if objects.iter().all(|o| (o.depth_value - d).abs() > 1e-3) {
                break d;
            }
        };
        let shape =
            if rng.gen_bool(0.5) { RegionShape::Rectangle } else { RegionShape::Ellipse };
        let planted = rng.gen_bool(0.75);
        objects.push(SceneObject { phrase, shape, x1, y1, x2, y2, depth_value, planted });
    }

    let mut distractor_phrases = Vec::new();
    let mut used_distractors = std::collections::HashSet::new();
    while distractor_phrases.len() < n_distractors {
        let color = DISTRACTOR_COLORS[rng.gen_range(0..DISTRACTOR_COLORS.len())];
        let noun = DISTRACTOR_NOUNS[rng.gen_range(0..DISTRACTOR_NOUNS.len())];
        let phrase = format!("{color} {noun}");
        if used_distractors.insert(phrase.clone()) {
            distractor_phrases.push(phrase);
        }
    }

    let mut mentions: Vec<String> = objects
        .iter()
        .filter(|o| o.planted)
        .map(|o| format!("a {}", o.phrase))
        .chain(distractor_phrases.iter().map(|p| format!("a {p}")))
        .collect();
    for i in (1..mentions.len()).rev() {
        mentions.swap(i, rng.gen_range(0..=i));
    }
    let reference_description = if mentions.is_empty() {
        "This scene shows a plain empty surface under even light.".to_string()
    } else {
        format!(
            "This scene shows {} resting on a plain surface. The light is even and shadowless.",
            mentions.join(", ")
        )
    };

    SyntheticScene {
        seed,
        id: format!("scene-{seed:04}"),
        width,
        height,
        objects,
        distractor_phrases,
        reference_description,
    }
}

/// A scene written to disk: the PGM pixels plus a JSON ground-truth sidecar.
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub image: ImageRef,
    pub pgm_path: PathBuf,
    pub sidecar_path: PathBuf,
}

/// Write `<id>.pgm` and `<id>.json` under `dir`.
pub fn write_scene_files(scene: &SyntheticScene, dir: &Path) -> std::io::Result<SceneFiles> {
    std::fs::create_dir_all(dir)?;
    let pgm_path = dir.join(format!("{}.pgm", scene.id));
    std::fs::write(&pgm_path, scene.pgm_bytes())?;
    let sidecar_path = dir.join(format!("{}.json", scene.id));
    let json = serde_json::to_string_pretty(scene).expect("scene serializes");
    std::fs::write(&sidecar_path, json)?;
    let image = ImageRef::new(
        scene.id.clone(),
        scene.width,
        scene.height,
        pgm_path.display().to_string(),
    )
    .expect("scene ids and dims are valid");
    Ok(SceneFiles { image, pgm_path, sidecar_path })
}

/// Write a `manifest.jsonl` (`{id, path, width, height}` per line) into
/// `dir`, returning the manifest path. Pixel paths under `dir` are written
/// relative to it, so the whole directory can be moved or shipped.
pub fn write_manifest(files: &[SceneFiles], dir: &Path) -> std::io::Result<PathBuf> {
    let path = dir.join("manifest.jsonl");
    let mut out = std::fs::File::create(&path)?;
    for f in files {
        let pixel_path = f.pgm_path.strip_prefix(dir).unwrap_or(&f.pgm_path);
        let row = serde_json::json!({
            "id": f.image.id,
            "path": pixel_path.display().to_string(),
            "width": f.image.width,
            "height": f.image.height,
        });
        writeln!(out, "{row}")?;
    }
    Ok(path)
}
