//! Brute-force reference measurements for synthetic scenes.
//!
//! Recomputes per-object geometry with plain pixel loops straight off the
//! scene definition: no masks, no shared accumulation helpers, no reuse of
//! the annotation pipeline. The only shared code is the scene's own region
//! membership test, which defines the ground truth both sides measure.

use crate::scene::SyntheticScene;
use pictext::model::DepthOrientation;

/// Expected annotation values for one planted object.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMeasure {
    pub phrase: String,
    /// Normalized box `[x1, y1, x2, y2]`, each edge divided by its image
    /// dimension.
    pub bbox: [f64; 4],
    /// Min-max rescaled mean depth over planted objects, 1 = nearest.
    pub depth_rel: f64,
    /// Member pixels over total pixels.
    pub size_frac: f64,
}

/// Measure every planted object, in scene order.
pub fn brute_force_measures(
    scene: &SyntheticScene,
    orientation: DepthOrientation,
) -> Vec<OracleMeasure> {
    let mut phrases = Vec::new();
    let mut boxes = Vec::new();
    let mut sizes = Vec::new();
    let mut mean_depths = Vec::new();

    for object in scene.planted() {
        let mut count: u64 = 0;
        let mut depth_sum = 0.0f64;
        for y in 0..scene.height {
            for x in 0..scene.width {
                if object.contains(x, y) {
                    count += 1;
                    depth_sum += scene.depth_at(x, y);
                }
            }
        }
        assert!(count > 0, "planted object {:?} covers no pixels", object.phrase);
        phrases.push(object.phrase.clone());
        boxes.push([
            object.x1 as f64 / scene.width as f64,
            object.y1 as f64 / scene.height as f64,
            object.x2 as f64 / scene.width as f64,
            object.y2 as f64 / scene.height as f64,
        ]);
        sizes.push(count as f64 / (scene.width as f64 * scene.height as f64));
        mean_depths.push(depth_sum / count as f64);
    }

    let rescaled = rescale(&mean_depths);
    phrases
        .into_iter()
        .zip(boxes)
        .zip(sizes)
        .zip(rescaled)
        .map(|(((phrase, bbox), size_frac), scaled)| {
            let depth_rel = match orientation {
                DepthOrientation::NearIsHigh => scaled,
                DepthOrientation::NearIsLow => 1.0 - scaled,
            };
            OracleMeasure { phrase, bbox, depth_rel, size_frac }
        })
        .collect()
}

fn rescale(values: &[f64]) -> Vec<f64> {
    let Some(min) = values.iter().copied().reduce(f64::min) else {
        return Vec::new();
    };
    let max = values.iter().copied().reduce(f64::max).unwrap();
    if max == min {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}
