//! Contract enforcement layers shared by every backend implementation:
//! a concurrency cap, attempt-level call metrics, response validation
//! ([`Guarded`]), and jittered exponential backoff over transient transport
//! failures ([`Retrying`]).

use super::{
    ChatBackend, ChatMessage, DecodeParams, DenseCaption, DenseCaptionBackend, DepthBackend,
    Detection, DetectorBackend, EmbedBackend, EmbeddingVector, ExpertKind, GatewayError,
    SegmenterBackend,
};
use crate::model::{EntityPhrase, PipelineConfig, PixelBox};
use crate::{DepthMap, ImageRef, PixelMask};
use rand::Rng;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

/// Counting semaphore bounding in-flight calls to one backend.
pub struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    /// A zero capacity would deadlock, so it is bumped to one.
    pub fn new(capacity: usize) -> Arc<Limiter> {
        Arc::new(Limiter { available: Mutex::new(capacity.max(1)), freed: Condvar::new() })
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().expect("limiter lock poisoned");
        while *available == 0 {
            available = self.freed.wait(available).expect("limiter lock poisoned");
        }
        *available -= 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.limiter.available.lock().expect("limiter lock poisoned");
        *available += 1;
        self.limiter.freed.notify_one();
    }
}

/// Attempt counts per expert kind. Counts every attempt that reaches a
/// backend, so retries show up individually.
#[derive(Debug, Default)]
pub struct CallMetrics {
    counts: [AtomicU64; ExpertKind::ALL.len()],
}

impl CallMetrics {
    pub fn record(&self, kind: ExpertKind) {
        self.counts[kind.index()].fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self, kind: ExpertKind) -> u64 {
        self.counts[kind.index()].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        ExpertKind::ALL.iter().map(|&k| self.count(k)).sum()
    }

    pub fn snapshot(&self) -> BTreeMap<&'static str, u64> {
        ExpertKind::ALL.iter().map(|&k| (k.name(), self.count(k))).collect()
    }
}

/// Wraps a backend with the gateway's call contract: take a concurrency
/// permit, count the attempt, delegate, then validate what came back against
/// the image before letting it leave the module.
pub struct Guarded<B> {
    inner: B,
    kind: ExpertKind,
    limiter: Arc<Limiter>,
    metrics: Arc<CallMetrics>,
}

impl<B> Guarded<B> {
    pub fn new(
        inner: B,
        kind: ExpertKind,
        limiter: Arc<Limiter>,
        metrics: Arc<CallMetrics>,
    ) -> Self {
        Guarded { inner, kind, limiter, metrics }
    }

    fn enter(&self) -> Permit<'_> {
        let permit = self.limiter.acquire();
        self.metrics.record(self.kind);
        permit
    }
}

fn invalid(detail: String) -> GatewayError {
    GatewayError::Validation { detail }
}

impl<B: ChatBackend> ChatBackend for Guarded<B> {
    fn chat(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::Precondition {
                detail: "chat requires at least one message".to_string(),
            });
        }
        let _permit = self.enter();
        let text = self.inner.chat(messages, params)?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse {
                detail: "chat backend returned no text".to_string(),
            });
        }
        Ok(text)
    }
}

impl<B: DetectorBackend> DetectorBackend for Guarded<B> {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        let _permit = self.enter();
        let detections = self.inner.detect(image, phrase)?;
        for d in &detections {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(invalid(format!(
                    "detection score {} for {:?} outside [0, 1]",
                    d.score,
                    d.phrase.as_str()
                )));
            }
        }
        Ok(detections)
    }
}

impl<B: DenseCaptionBackend> DenseCaptionBackend for Guarded<B> {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        let _permit = self.enter();
        let captions = self.inner.dense_caption(image)?;
        for c in &captions {
            if !c.bbox_px.fits_in(image.width, image.height) {
                return Err(invalid(format!(
                    "caption box {} exceeds image {}x{}",
                    c.bbox_px, image.width, image.height
                )));
            }
        }
        Ok(captions)
    }
}

impl<B: SegmenterBackend> SegmenterBackend for Guarded<B> {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        for b in boxes {
            if !b.fits_in(image.width, image.height) {
                return Err(GatewayError::Precondition {
                    detail: format!(
                        "segment box {b} exceeds image {}x{}",
                        image.width, image.height
                    ),
                });
            }
        }
        let _permit = self.enter();
        let masks = self.inner.segment(image, boxes)?;
        if masks.len() != boxes.len() {
            return Err(invalid(format!(
                "segmenter returned {} masks for {} boxes",
                masks.len(),
                boxes.len()
            )));
        }
        for (mask, bbox) in masks.iter().zip(boxes) {
            if (mask.width, mask.height) != (image.width, image.height) {
                return Err(invalid(format!(
                    "mask dims {}x{} do not match image {}x{}",
                    mask.width, mask.height, image.width, image.height
                )));
            }
            if mask.count_set() == 0 {
                return Err(GatewayError::MaskEmpty { bbox: *bbox });
            }
        }
        Ok(masks)
    }
}

impl<B: DepthBackend> DepthBackend for Guarded<B> {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        let _permit = self.enter();
        let map = self.inner.estimate_depth(image)?;
        if (map.width, map.height) != (image.width, image.height) {
            return Err(invalid(format!(
                "depth raster {}x{} does not match image {}x{}",
                map.width, map.height, image.width, image.height
            )));
        }
        Ok(map)
    }
}

impl<B: EmbedBackend> EmbedBackend for Guarded<B> {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        if model_tag.trim().is_empty() {
            return Err(GatewayError::Precondition {
                detail: "embed_image requires a model tag".to_string(),
            });
        }
        let _permit = self.enter();
        let vector = self.inner.embed_image(image, model_tag)?;
        if vector.values.is_empty() {
            return Err(invalid("embedding has zero length".to_string()));
        }
        if vector.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("embedding holds non-finite values".to_string()));
        }
        Ok(vector)
    }
}

/// Backoff schedule for transient failures: full jitter over an
/// exponentially growing cap.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_delay: Duration,
    /// Total attempts, including the first.
    pub max_attempts: u32,
}

impl RetryPolicy {
    pub fn from_config(config: &PipelineConfig) -> Self {
        RetryPolicy {
            base: Duration::from_millis(500),
            factor: 2.0,
            max_delay: Duration::from_secs(10),
            max_attempts: config.retry_limit.saturating_add(1),
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let cap = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        let cap = cap.min(self.max_delay.as_secs_f64());
        if cap <= 0.0 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(rand::thread_rng().gen_range(0.0..=cap))
    }

    fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(value) => return Ok(value),
                Err(e) if e.is_transient() && attempt + 1 < self.max_attempts.max(1) => {
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Retries transient transport failures; everything else passes through on
/// the first attempt.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Retrying { inner, policy }
    }
}

impl<B: ChatBackend> ChatBackend for Retrying<B> {
    fn chat(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        self.policy.run(|| self.inner.chat(messages, params))
    }
}

impl<B: DetectorBackend> DetectorBackend for Retrying<B> {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        self.policy.run(|| self.inner.detect(image, phrase))
    }
}

impl<B: DenseCaptionBackend> DenseCaptionBackend for Retrying<B> {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        self.policy.run(|| self.inner.dense_caption(image))
    }
}

impl<B: SegmenterBackend> SegmenterBackend for Retrying<B> {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        self.policy.run(|| self.inner.segment(image, boxes))
    }
}

impl<B: DepthBackend> DepthBackend for Retrying<B> {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        self.policy.run(|| self.inner.estimate_depth(image))
    }
}

impl<B: EmbedBackend> EmbedBackend for Retrying<B> {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        self.policy.run(|| self.inner.embed_image(image, model_tag))
    }
}
