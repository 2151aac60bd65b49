//! Fine-grained object annotation: dense-caption the image, segment each
//! proposed box, measure per-object depth and size from the rasters, then
//! normalize everything into [`ObjectAnnotation`] values ready for prompt
//! rendering.
//!
//! Measurements run on masks, not boxes: a box over a non-rectangular object
//! overstates its area, so size comes from set mask bits and depth from the
//! mask-selected pixels. Depth normalization is per image over the object
//! mean depths (min-max to [0, 1], oriented so 1 = nearest); averaging raw
//! values and then rescaling commutes with any affine rescale of the raster,
//! so the backend's raw scale does not matter.

use crate::gateway::{DenseCaptionBackend, DepthBackend, GatewayError, SegmenterBackend};
use crate::model::{DepthOrientation, EntityPhrase, ModelError, ObjectAnnotation, PixelBox};
use crate::numeric::{masked_mean, min_max_rescale, Real};
use crate::{BBoxNorm, DepthMap, ImageRef, PixelMask, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetailError {
    #[error("mask is {mask_w}x{mask_h} but the raster is {raster_w}x{raster_h}")]
    DimsMismatch { mask_w: u32, mask_h: u32, raster_w: u32, raster_h: u32 },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("box {bbox} exceeds image {width}x{height}")]
    OutOfBounds { bbox: PixelBox, width: u32, height: u32 },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("assembling annotation: {0}")]
    Model(#[from] ModelError),
}

/// Per-object raster measurements before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawObjectMeasure {
    pub phrase: EntityPhrase,
    pub bbox_px: PixelBox,
    pub mask: PixelMask,
    pub mean_depth_raw: Scalar,
    /// Set-bit count over total pixels; in (0, 1] since the mask is nonempty.
    pub size_frac: Scalar,
    /// True when segmentation failed and the mask is a box fill.
    pub mask_fallback: bool,
}

/// Mean depth over the mask's set pixels, in the raster's raw scale.
pub fn object_depth<R: Real>(mask: &PixelMask, depth: &DepthMap<R>) -> Result<R, DetailError> {
    if (mask.width, mask.height) != (depth.width, depth.height) {
        return Err(DetailError::DimsMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            raster_w: depth.width,
            raster_h: depth.height,
        });
    }
    masked_mean(&mask.bits, &depth.values).ok_or(DetailError::EmptyMask)
}

/// Fraction of the image the mask covers.
pub fn object_size(mask: &PixelMask, image: &ImageRef) -> Result<Scalar, DetailError> {
    if (mask.width, mask.height) != (image.width, image.height) {
        return Err(DetailError::DimsMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            raster_w: image.width,
            raster_h: image.height,
        });
    }
    let set = mask.count_set();
    if set == 0 {
        return Err(DetailError::EmptyMask);
    }
    Ok(set as Scalar / (image.width as Scalar * image.height as Scalar))
}

/// Pixel box to unit coordinates: each edge divided by its image dimension.
pub fn normalize_bbox(bbox: &PixelBox, image: &ImageRef) -> Result<BBoxNorm, DetailError> {
    if !bbox.fits_in(image.width, image.height) {
        return Err(DetailError::OutOfBounds {
            bbox: *bbox,
            width: image.width,
            height: image.height,
        });
    }
    let w = image.width as Scalar;
    let h = image.height as Scalar;
    BBoxNorm::new(
        bbox.x1 as Scalar / w,
        bbox.y1 as Scalar / h,
        bbox.x2 as Scalar / w,
        bbox.y2 as Scalar / h,
    )
    .map_err(DetailError::Model)
}

/// Min-max rescale the per-object mean depths to [0, 1], oriented so 1 is
/// nearest the camera. Backends whose larger raw value means farther
/// (metric depth) are flipped after rescaling. All-equal input maps to 0.5.
pub fn normalize_depths<R: Real>(raw_means: &[R], orientation: DepthOrientation) -> Vec<R> {
    let scaled = min_max_rescale(raw_means);
    match orientation {
        DepthOrientation::NearIsHigh => scaled,
        DepthOrientation::NearIsLow => scaled.into_iter().map(|v| R::one() - v).collect(),
    }
}

/// Run the full annotation pass for one image: propose boxes, segment each
/// (concurrently; the gateway caps in-flight calls), estimate depth once,
/// measure, normalize. Exact duplicate (phrase, box) proposals and zero-area
/// boxes are dropped. A box whose segmentation comes back empty falls back
/// to a box-fill mask and the annotation carries `mask_fallback`; any other
/// backend failure aborts the image.
pub fn build_finegrained_info(
    image: &ImageRef,
    dense_captioner: &dyn DenseCaptionBackend,
    segmenter: &dyn SegmenterBackend,
    depth_estimator: &dyn DepthBackend,
    orientation: DepthOrientation,
) -> Result<Vec<ObjectAnnotation>, DetailError> {
    let mut proposals = dense_captioner.dense_caption(image)?;
    let mut seen = std::collections::HashSet::new();
    proposals.retain(|c| {
        c.bbox_px.area() > 0 && seen.insert((c.phrase.as_str().to_string(), c.bbox_px))
    });
    if proposals.is_empty() {
        return Ok(Vec::new());
    }

    let depth_map = depth_estimator.estimate_depth(image)?;

    let masks: Vec<Result<(PixelMask, bool), DetailError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = proposals
            .iter()
            .map(|proposal| {
                scope.spawn(move || match segmenter.segment(image, &[proposal.bbox_px]) {
                    Ok(mut masks) => Ok((masks.swap_remove(0), false)),
                    Err(GatewayError::MaskEmpty { .. }) => Ok((
                        PixelMask::filled_box(image.width, image.height, &proposal.bbox_px),
                        true,
                    )),
                    Err(other) => Err(DetailError::Gateway(other)),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("segmentation thread panicked"))
            .collect()
    });

    let mut measures = Vec::with_capacity(proposals.len());
    for (proposal, mask) in proposals.into_iter().zip(masks) {
        let (mask, mask_fallback) = mask?;
        let mean_depth_raw = object_depth(&mask, &depth_map)?;
        let size_frac = object_size(&mask, image)?;
        measures.push(RawObjectMeasure {
            phrase: proposal.phrase,
            bbox_px: proposal.bbox_px,
            mask,
            mean_depth_raw,
            size_frac,
            mask_fallback,
        });
    }

    let raw_means: Vec<Scalar> = measures.iter().map(|m| m.mean_depth_raw).collect();
    let depths = normalize_depths(&raw_means, orientation);

    measures
        .into_iter()
        .zip(depths)
        .map(|(m, depth_rel)| {
            let bbox = normalize_bbox(&m.bbox_px, image)?;
            let mut annotation =
                ObjectAnnotation::new(m.phrase, bbox, depth_rel, m.size_frac)?;
            annotation.mask_fallback = m.mask_fallback;
            Ok(annotation)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::DenseCaption;
    use proptest::prelude::*;

    fn mask_from(width: u32, height: u32, set: &[(u32, u32)]) -> PixelMask {
        let mut bits = vec![false; (width * height) as usize];
        for &(x, y) in set {
            bits[(y * width + x) as usize] = true;
        }
        PixelMask::new(width, height, bits).unwrap()
    }

    fn image(width: u32, height: u32) -> ImageRef {
        ImageRef::new("img", width, height, "mem://img").unwrap()
    }

    #[test]
    fn depth_of_single_pixel_mask_is_that_pixel() {
        let depth = DepthMap::new(2, 2, vec![0.2, 0.8, 0.4, 0.6]).unwrap();
        let mask = mask_from(2, 2, &[(0, 0)]);
        assert_eq!(object_depth(&mask, &depth).unwrap(), 0.2);
    }

    #[test]
    fn depth_of_full_mask_is_the_plain_mean() {
        let depth = DepthMap::new(2, 2, vec![0.2, 0.8, 0.4, 0.6]).unwrap();
        let mask = PixelMask::new(2, 2, vec![true; 4]).unwrap();
        let mean: Scalar = object_depth(&mask, &depth).unwrap();
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_field_means_constant_depth() {
        let depth = DepthMap::new(3, 3, vec![0.5; 9]).unwrap();
        let mask = mask_from(3, 3, &[(1, 1), (2, 0)]);
        assert_eq!(object_depth(&mask, &depth).unwrap(), 0.5);
    }

    #[test]
    fn depth_checks_dims_and_emptiness() {
        let depth = DepthMap::new(2, 2, vec![0.0; 4]).unwrap();
        let wrong = PixelMask::empty(3, 2);
        assert!(matches!(
            object_depth(&wrong, &depth),
            Err(DetailError::DimsMismatch { .. })
        ));
        let empty = PixelMask::empty(2, 2);
        assert!(matches!(object_depth(&empty, &depth), Err(DetailError::EmptyMask)));
    }

    #[test]
    fn size_is_set_bits_over_total() {
        let img = image(10, 10);
        let set: Vec<(u32, u32)> =
            (0..5).flat_map(|y| (0..5).map(move |x| (x, y))).collect();
        let mask = mask_from(10, 10, &set);
        assert_eq!(object_size(&mask, &img).unwrap(), 0.25);

        let tiny_img = image(100, 100);
        let tiny = mask_from(100, 100, &[(7, 3)]);
        assert_eq!(object_size(&tiny, &tiny_img).unwrap(), 0.0001);

        let full = PixelMask::new(10, 10, vec![true; 100]).unwrap();
        assert_eq!(object_size(&full, &img).unwrap(), 1.0);
    }

    #[test]
    fn bbox_normalization_is_proportional() {
        let img = image(640, 480);
        let b = |x1, y1, x2, y2| PixelBox::new(x1, y1, x2, y2).unwrap();
        let n = normalize_bbox(&b(64, 48, 320, 240), &img).unwrap();
        assert_eq!((n.x1, n.y1, n.x2, n.y2), (0.1, 0.1, 0.5, 0.5));
        let full = normalize_bbox(&b(0, 0, 640, 480), &img).unwrap();
        assert_eq!((full.x1, full.y1, full.x2, full.y2), (0.0, 0.0, 1.0, 1.0));
        let quarter = normalize_bbox(&b(320, 240, 640, 480), &img).unwrap();
        assert_eq!((quarter.x1, quarter.y1, quarter.x2, quarter.y2), (0.5, 0.5, 1.0, 1.0));
        assert!(matches!(
            normalize_bbox(&b(0, 0, 641, 480), &img),
            Err(DetailError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn depth_normalization_examples() {
        assert_eq!(
            normalize_depths(&[2.0, 8.0], DepthOrientation::NearIsLow),
            vec![1.0, 0.0]
        );
        assert_eq!(
            normalize_depths(&[3.0, 3.0, 3.0], DepthOrientation::NearIsHigh),
            vec![0.5, 0.5, 0.5]
        );
        assert_eq!(
            normalize_depths(&[3.0, 3.0, 3.0], DepthOrientation::NearIsLow),
            vec![0.5, 0.5, 0.5]
        );
        assert_eq!(
            normalize_depths(&[0.1, 0.4, 0.7], DepthOrientation::NearIsHigh),
            vec![0.0, 0.5000000000000001, 1.0]
        );
    }

    struct ScriptedCaptioner(Vec<DenseCaption>);

    impl DenseCaptionBackend for ScriptedCaptioner {
        fn dense_caption(&self, _: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
            Ok(self.0.clone())
        }
    }

    /// Segments a box to its exact fill, or reports MaskEmpty for boxes
    /// listed as failing.
    struct BoxFillSegmenter {
        failing: Vec<PixelBox>,
    }

    impl SegmenterBackend for BoxFillSegmenter {
        fn segment(
            &self,
            image: &ImageRef,
            boxes: &[PixelBox],
        ) -> Result<Vec<PixelMask>, GatewayError> {
            if let Some(b) = boxes.iter().find(|b| self.failing.contains(b)) {
                return Err(GatewayError::MaskEmpty { bbox: *b });
            }
            Ok(boxes
                .iter()
                .map(|b| PixelMask::filled_box(image.width, image.height, b))
                .collect())
        }
    }

    struct GradientDepth;

    impl DepthBackend for GradientDepth {
        fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
            // each row's depth equals its y index
            let values = (0..image.height)
                .flat_map(|y| (0..image.width).map(move |_| y as Scalar))
                .collect();
            Ok(DepthMap::new(image.width, image.height, values).unwrap())
        }
    }

    fn caption(phrase: &str, x1: u32, y1: u32, x2: u32, y2: u32) -> DenseCaption {
        DenseCaption {
            phrase: EntityPhrase::new(phrase).unwrap(),
            bbox_px: PixelBox::new(x1, y1, x2, y2).unwrap(),
        }
    }

    #[test]
    fn assembles_annotations_with_exact_measurements() {
        let img = image(10, 10);
        let captioner = ScriptedCaptioner(vec![
            caption("near strip", 0, 0, 10, 1),
            caption("far strip", 0, 9, 10, 10),
        ]);
        let segmenter = BoxFillSegmenter { failing: vec![] };
        let annotations = build_finegrained_info(
            &img,
            &captioner,
            &segmenter,
            &GradientDepth,
            DepthOrientation::NearIsLow,
        )
        .unwrap();
        assert_eq!(annotations.len(), 2);
        // raw means 0 and 9; near_is_low flips so row 0 is nearest
        assert_eq!(annotations[0].depth_rel, 1.0);
        assert_eq!(annotations[1].depth_rel, 0.0);
        assert_eq!(annotations[0].size_frac, 0.1);
        assert_eq!(annotations[0].bbox, BBoxNorm::new(0.0, 0.0, 1.0, 0.1).unwrap());
        assert!(!annotations[0].mask_fallback);
    }

    #[test]
    fn empty_scene_yields_no_annotations() {
        let img = image(4, 4);
        let annotations = build_finegrained_info(
            &img,
            &ScriptedCaptioner(vec![]),
            &BoxFillSegmenter { failing: vec![] },
            &GradientDepth,
            DepthOrientation::NearIsHigh,
        )
        .unwrap();
        assert!(annotations.is_empty());
    }

    #[test]
    fn failed_segmentation_falls_back_to_box_fill_with_flag() {
        let img = image(10, 10);
        let failing = PixelBox::new(2, 2, 5, 5).unwrap();
        let captioner = ScriptedCaptioner(vec![
            caption("solid", 0, 0, 10, 1),
            caption("ghost", 2, 2, 5, 5),
            caption("other", 0, 9, 10, 10),
        ]);
        let segmenter = BoxFillSegmenter { failing: vec![failing] };
        let annotations = build_finegrained_info(
            &img,
            &captioner,
            &segmenter,
            &GradientDepth,
            DepthOrientation::NearIsHigh,
        )
        .unwrap();
        assert_eq!(annotations.len(), 3);
        assert!(!annotations[0].mask_fallback);
        assert!(annotations[1].mask_fallback);
        assert_eq!(annotations[1].size_frac, 0.09);
        assert!(!annotations[2].mask_fallback);
    }

    #[test]
    fn non_mask_failures_abort_the_image() {
        struct DownSegmenter;
        impl SegmenterBackend for DownSegmenter {
            fn segment(
                &self,
                _: &ImageRef,
                _: &[PixelBox],
            ) -> Result<Vec<PixelMask>, GatewayError> {
                Err(GatewayError::Transport { detail: "down".into() })
            }
        }
        let img = image(4, 4);
        let captioner = ScriptedCaptioner(vec![caption("thing", 0, 0, 2, 2)]);
        let err = build_finegrained_info(
            &img,
            &captioner,
            &DownSegmenter,
            &GradientDepth,
            DepthOrientation::NearIsHigh,
        )
        .unwrap_err();
        assert!(matches!(err, DetailError::Gateway(GatewayError::Transport { .. })));
    }

    #[test]
    fn duplicate_and_degenerate_proposals_are_dropped() {
        let img = image(8, 8);
        let captioner = ScriptedCaptioner(vec![
            caption("twin", 0, 0, 4, 4),
            caption("twin", 0, 0, 4, 4),
            caption("line", 3, 0, 3, 8),
            caption("twin", 4, 4, 8, 8),
        ]);
        let annotations = build_finegrained_info(
            &img,
            &captioner,
            &BoxFillSegmenter { failing: vec![] },
            &GradientDepth,
            DepthOrientation::NearIsHigh,
        )
        .unwrap();
        let phrases: Vec<&str> = annotations.iter().map(|a| a.phrase.as_str()).collect();
        assert_eq!(phrases, vec!["twin", "twin"]);
        assert_ne!(annotations[0].bbox, annotations[1].bbox);
    }

    #[test]
    fn mask_size_never_exceeds_box_size_and_is_strictly_less_off_rectangles() {
        let img = image(10, 10);
        let bbox = PixelBox::new(2, 2, 8, 8).unwrap();
        let box_frac = bbox.area() as Scalar / 100.0;
        let full = PixelMask::filled_box(10, 10, &bbox);
        assert_eq!(object_size(&full, &img).unwrap(), box_frac);
        // knock out a corner: any non-rectangular object sits strictly below
        let mut bits = full.bits.clone();
        bits[(2 * 10 + 2) as usize] = false;
        let carved = PixelMask::new(10, 10, bits).unwrap();
        assert!(object_size(&carved, &img).unwrap() < box_frac);
    }

    proptest! {
        /// Nearer oriented raw mean never gets a smaller normalized depth.
        #[test]
        fn normalization_preserves_nearness_order(
            means in proptest::collection::vec(-100.0f64..100.0, 1..8),
            near_is_low in any::<bool>(),
        ) {
            let orientation = if near_is_low {
                DepthOrientation::NearIsLow
            } else {
                DepthOrientation::NearIsHigh
            };
            let out = normalize_depths(&means, orientation);
            for i in 0..means.len() {
                for j in 0..means.len() {
                    let i_nearer = if near_is_low {
                        means[i] <= means[j]
                    } else {
                        means[i] >= means[j]
                    };
                    if i_nearer {
                        prop_assert!(out[i] >= out[j] - 1e-12);
                    }
                }
            }
        }

        /// Affine raster rescales (positive gain) do not change the result.
        #[test]
        fn normalization_commutes_with_affine_rescale(
            means in proptest::collection::vec(-50.0f64..50.0, 1..8),
            gain in 0.01f64..10.0,
            offset in -20.0f64..20.0,
        ) {
            let rescaled: Vec<Scalar> = means.iter().map(|m| gain * m + offset).collect();
            let a = normalize_depths(&means, DepthOrientation::NearIsHigh);
            let b = normalize_depths(&rescaled, DepthOrientation::NearIsHigh);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
