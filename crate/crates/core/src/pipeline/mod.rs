//! Orchestration of the three phases per image (holistic caption, expert
//! grounding, recaption), with content-addressed caching, bounded cross-image
//! parallelism, and JSONL emission.
//!
//! Failure policy is skip-and-record: a stage failure marks the record and
//! leaves downstream stages pending, but never aborts the run. The only
//! fatal errors are an unusable cache directory or an unwritable output
//! path. Caching is keyed by the config fingerprint, so any config change
//! invalidates every stage, and a warm re-run touches no backend at all.

mod cache;

pub use cache::{CacheStore, Stage};

use crate::gateway::{Backends, ChatBackend, ChatMessage, DecodeParams};
use crate::hallucination::{detect_hallucinations, HallucinationReport};
use crate::model::{
    config_fingerprint, AnnotationRecord, ObjectAnnotation, PipelineConfig, StageState,
    StageStatus,
};
use crate::prompting::{parse_recaption_response, render_phase_a_prompt, render_recaption_prompt};
use crate::ImageRef;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("image id {id:?} is not filename-safe")]
    BadImageId { id: String },
    #[error("cache io at {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing output {path}: {source}")]
    OutputIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A stage's value plus whether it came from cache.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResult<T> {
    pub value: T,
    pub cache_hit: bool,
}

/// Cached form of phase B's two results.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PhaseBPayload {
    report: HallucinationReport,
    annotations: Vec<ObjectAnnotation>,
}

fn cache_reason(e: &PipelineError) -> String {
    format!("cache: {e}")
}

/// Phase A: one multimodal chat call with the configured instruction and the
/// image attached; the reply text verbatim is the reference description.
pub fn run_phase_a(
    image: &ImageRef,
    chat: &dyn ChatBackend,
    config: &PipelineConfig,
    cache: &CacheStore,
) -> Result<PhaseResult<String>, String> {
    match cache.load(&image.id, Stage::A).map_err(|e| cache_reason(&e))? {
        Some(bytes) => {
            let value = String::from_utf8(bytes)
                .map_err(|_| "cache: phase A entry is not valid UTF-8".to_string())?;
            Ok(PhaseResult { value, cache_hit: true })
        }
        None => {
            let bundle = render_phase_a_prompt(
                &config.phase_a_instruction,
                &config.prompt_template_version,
            );
            let messages =
                vec![ChatMessage::user_with_image(bundle.rendered, image.clone())];
            let value =
                chat.chat(&messages, &DecodeParams::default()).map_err(|e| e.to_string())?;
            cache.store(&image.id, Stage::A, value.as_bytes()).map_err(|e| cache_reason(&e))?;
            Ok(PhaseResult { value, cache_hit: false })
        }
    }
}

/// Phase B: hallucination detection and fine-grained annotation, run
/// concurrently since they share no state. Either failing fails the phase.
pub fn run_phase_b(
    image: &ImageRef,
    reference_description: &str,
    backends: &Backends,
    config: &PipelineConfig,
    cache: &CacheStore,
) -> Result<PhaseResult<(HallucinationReport, Vec<ObjectAnnotation>)>, String> {
    if let Some(bytes) = cache.load(&image.id, Stage::B).map_err(|e| cache_reason(&e))? {
        let payload: PhaseBPayload = serde_json::from_slice(&bytes)
            .map_err(|e| format!("cache: phase B entry is corrupt: {e}"))?;
        return Ok(PhaseResult {
            value: (payload.report, payload.annotations),
            cache_hit: true,
        });
    }

    let (report, annotations) = std::thread::scope(|scope| {
        let detection = scope.spawn(|| {
            detect_hallucinations(
                image,
                reference_description,
                &backends.chat_llm,
                &backends.detector,
                config,
            )
        });
        let annotation = scope.spawn(|| {
            crate::detail::build_finegrained_info(
                image,
                &backends.dense_captioner,
                &backends.segmenter,
                &backends.depth_estimator,
                config.depth_orientation,
            )
        });
        let report = detection.join().expect("hallucination thread panicked");
        let annotations = annotation.join().expect("annotation thread panicked");
        (report, annotations)
    });
    let report = report.map_err(|e| e.to_string())?;
    let annotations = annotations.map_err(|e| e.to_string())?;

    let payload = PhaseBPayload { report, annotations };
    let bytes = serde_json::to_vec(&payload).expect("phase B payload serializes");
    cache.store(&image.id, Stage::B, &bytes).map_err(|e| cache_reason(&e))?;
    Ok(PhaseResult { value: (payload.report, payload.annotations), cache_hit: false })
}

/// Phase C: render the recaption prompt from phase B's findings and ask the
/// text LLM for the corrected description.
pub fn run_phase_c(
    image: &ImageRef,
    reference_description: &str,
    report: &HallucinationReport,
    annotations: &[ObjectAnnotation],
    chat: &dyn ChatBackend,
    config: &PipelineConfig,
    cache: &CacheStore,
) -> Result<PhaseResult<String>, String> {
    match cache.load(&image.id, Stage::C).map_err(|e| cache_reason(&e))? {
        Some(bytes) => {
            let value = String::from_utf8(bytes)
                .map_err(|_| "cache: phase C entry is not valid UTF-8".to_string())?;
            Ok(PhaseResult { value, cache_hit: true })
        }
        None => {
            let bundle = render_recaption_prompt(
                reference_description,
                &report.hallucinated,
                annotations,
                &config.prompt_template_version,
            );
            let messages = vec![ChatMessage::user_text(bundle.rendered)];
            let reply =
                chat.chat(&messages, &DecodeParams::default()).map_err(|e| e.to_string())?;
            let value = parse_recaption_response(&reply).map_err(|e| e.to_string())?;
            cache.store(&image.id, Stage::C, value.as_bytes()).map_err(|e| cache_reason(&e))?;
            Ok(PhaseResult { value, cache_hit: false })
        }
    }
}

fn process_image(
    image: &ImageRef,
    backends: &Backends,
    config: &PipelineConfig,
    cache: &CacheStore,
    fingerprint: &str,
    cache_hits: &AtomicU64,
) -> AnnotationRecord {
    let mut record = AnnotationRecord {
        image: image.clone(),
        reference_description: String::new(),
        hallucinations: Vec::new(),
        objects: Vec::new(),
        final_description: None,
        stage_status: StageStatus::pending(),
        config_fingerprint: fingerprint.to_string(),
    };
    let hit = |flag: bool| {
        if flag {
            cache_hits.fetch_add(1, Ordering::Relaxed);
        }
    };

    let reference = match run_phase_a(image, &backends.chat_mllm, config, cache) {
        Ok(r) => {
            hit(r.cache_hit);
            record.stage_status.phase_a = StageState::Complete;
            record.reference_description = r.value.clone();
            r.value
        }
        Err(reason) => {
            record.stage_status.phase_a = StageState::Failed(reason);
            return record;
        }
    };

    let (report, annotations) = match run_phase_b(image, &reference, backends, config, cache) {
        Ok(r) => {
            hit(r.cache_hit);
            record.stage_status.phase_b = StageState::Complete;
            r.value
        }
        Err(reason) => {
            record.stage_status.phase_b = StageState::Failed(reason);
            return record;
        }
    };
    record.hallucinations = report.hallucinated.clone();
    record.objects = annotations.clone();

    match run_phase_c(
        image,
        &reference,
        &report,
        &annotations,
        &backends.chat_llm,
        config,
        cache,
    ) {
        Ok(r) => {
            hit(r.cache_hit);
            record.stage_status.phase_c = StageState::Complete;
            record.final_description = Some(r.value);
        }
        Err(reason) => {
            record.stage_status.phase_c = StageState::Failed(reason);
        }
    }
    record
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub complete: usize,
    pub failed_phase_a: usize,
    pub failed_phase_b: usize,
    pub failed_phase_c: usize,
    pub cache_hits: u64,
    pub backend_calls: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dataset_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: RunSummary,
    pub records: Vec<AnnotationRecord>,
}

/// Process every image with bounded parallelism and write one JSONL record
/// per image (input order) plus a run summary JSON next to it. Per-image
/// failures are recorded in stage status; only output/cache plumbing is
/// fatal. `backend_calls` counts only this run's attempts.
pub fn run_pipeline(
    images: &[ImageRef],
    backends: &Backends,
    config: &PipelineConfig,
    cache_dir: &Path,
    out_path: &Path,
) -> Result<RunOutcome, PipelineError> {
    let fingerprint = config_fingerprint(config);
    let cache = CacheStore::new(cache_dir, &fingerprint);
    let cache_hits = AtomicU64::new(0);
    let calls_before = backends.metrics.total();

    let workers = config.parallelism.max(1).min(images.len().max(1));
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, AnnotationRecord)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(image) = images.get(i) else { break };
                        out.push((
                            i,
                            process_image(
                                image,
                                backends,
                                config,
                                &cache,
                                &fingerprint,
                                &cache_hits,
                            ),
                        ));
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    let records: Vec<AnnotationRecord> = indexed.into_iter().map(|(_, r)| r).collect();

    let mut summary = RunSummary {
        total: records.len(),
        complete: 0,
        failed_phase_a: 0,
        failed_phase_b: 0,
        failed_phase_c: 0,
        cache_hits: cache_hits.load(Ordering::Relaxed),
        backend_calls: backends.metrics.total() - calls_before,
    };
    for record in &records {
        if record.stage_status.all_complete() {
            summary.complete += 1;
        } else if record.stage_status.phase_a.is_failed() {
            summary.failed_phase_a += 1;
        } else if record.stage_status.phase_b.is_failed() {
            summary.failed_phase_b += 1;
        } else {
            summary.failed_phase_c += 1;
        }
    }

    let dataset_path = write_atomic(out_path, |out| {
        crate::model::write_records(out, &records).map(|_| ())
    })?;
    let summary_path = PathBuf::from(format!("{}.summary.json", out_path.display()));
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&summary_path, |out| {
        use std::io::Write;
        out.write_all(summary_json.as_bytes())
    })?;

    Ok(RunOutcome { dataset_path, summary_path, summary, records })
}

fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut std::fs::File) -> std::io::Result<()>,
) -> Result<PathBuf, PipelineError> {
    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError {
        let path = path.to_path_buf();
        move |source| PipelineError::OutputIo { path, source }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let temp = path.with_file_name(format!(
        ".{file_name}.tmp-{}-{}",
        std::process::id(),
        cache_temp_seq()
    ));
    let mut file = std::fs::File::create(&temp).map_err(io_err(&temp))?;
    write(&mut file).map_err(io_err(&temp))?;
    file.sync_all().map_err(io_err(&temp))?;
    drop(file);
    std::fs::rename(&temp, path).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn cache_temp_seq() -> u64 {
    static SEQ: AtomicU64 = AtomicU64::new(0);
    SEQ.fetch_add(1, Ordering::Relaxed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{
        DenseCaption, DenseCaptionBackend, DepthBackend, Detection, DetectorBackend,
        EmbedBackend, EmbeddingVector, GatewayError, SegmenterBackend,
    };
    use crate::model::{BBoxNorm, EntityPhrase, PixelBox};
    use crate::prompting::{EXTRACT_MARKER, RECAPTION_MARKER};
    use crate::{DepthMap, PixelMask};
    use std::sync::Arc;

    /// Answers phase-A prompts with a fixed caption, extraction prompts with
    /// a fixed phrase list, and recaption prompts with a fixed rewrite.
    struct RoutingChat {
        caption: String,
        entities: String,
        rewrite: String,
    }

    impl ChatBackend for RoutingChat {
        fn chat(&self, messages: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
            let text = messages
                .iter()
                .flat_map(|m| m.parts())
                .filter_map(|p| match p {
                    crate::gateway::ContentPart::Text(t) => Some(t.as_str()),
                    _ => None,
                })
                .collect::<Vec<_>>()
                .join("\n");
            if text.contains(EXTRACT_MARKER) {
                Ok(format!("{EXTRACT_MARKER} {}", self.entities))
            } else if text.contains(RECAPTION_MARKER) {
                Ok(format!("{RECAPTION_MARKER} {}", self.rewrite))
            } else {
                Ok(self.caption.clone())
            }
        }
    }

    struct OneBoxCaptioner;

    impl DenseCaptionBackend for OneBoxCaptioner {
        fn dense_caption(&self, _: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
            Ok(vec![DenseCaption {
                phrase: EntityPhrase::new("red cube").unwrap(),
                bbox_px: PixelBox::new(0, 0, 2, 2).unwrap(),
            }])
        }
    }

    struct FillSegmenter;

    impl SegmenterBackend for FillSegmenter {
        fn segment(
            &self,
            image: &ImageRef,
            boxes: &[PixelBox],
        ) -> Result<Vec<PixelMask>, GatewayError> {
            Ok(boxes
                .iter()
                .map(|b| PixelMask::filled_box(image.width, image.height, b))
                .collect())
        }
    }

    struct FlatDepth;

    impl DepthBackend for FlatDepth {
        fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
            Ok(DepthMap::new(
                image.width,
                image.height,
                vec![1.0; (image.width * image.height) as usize],
            )
            .unwrap())
        }
    }

    struct YesDetector;

    impl DetectorBackend for YesDetector {
        fn detect(
            &self,
            _: &ImageRef,
            phrase: &EntityPhrase,
        ) -> Result<Vec<Detection>, GatewayError> {
            Ok(vec![Detection {
                phrase: phrase.clone(),
                bbox: BBoxNorm::new(0.0, 0.0, 0.5, 0.5).unwrap(),
                score: 1.0,
            }])
        }
    }

    struct NoEmbedder;

    impl EmbedBackend for NoEmbedder {
        fn embed_image(&self, _: &ImageRef, _: &str) -> Result<EmbeddingVector, GatewayError> {
            Err(GatewayError::NotConfigured { backend: "embedder".into() })
        }
    }

    fn scripted_backends() -> Backends {
        let chat = Arc::new(RoutingChat {
            caption: "A red cube sits on a table.".to_string(),
            entities: "red cube.".to_string(),
            rewrite: "The image shows a red cube.".to_string(),
        });
        Backends::guarded(
            chat.clone(),
            chat,
            Arc::new(YesDetector),
            Arc::new(OneBoxCaptioner),
            Arc::new(FillSegmenter),
            Arc::new(FlatDepth),
            Arc::new(NoEmbedder),
            2,
        )
    }

    fn images(n: usize) -> Vec<ImageRef> {
        (0..n)
            .map(|i| ImageRef::new(format!("img-{i}"), 4, 4, format!("mem://{i}")).unwrap())
            .collect()
    }

    #[test]
    fn phase_a_caches_the_reply_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::new(dir.path(), "fp");
        let backends = scripted_backends();
        let config = PipelineConfig::default();
        let image = &images(1)[0];

        let cold = run_phase_a(image, &backends.chat_mllm, &config, &cache).unwrap();
        assert_eq!(cold.value, "A red cube sits on a table.");
        assert!(!cold.cache_hit);
        let calls_after_cold = backends.metrics.total();

        let warm = run_phase_a(image, &backends.chat_mllm, &config, &cache).unwrap();
        assert_eq!(warm.value, cold.value);
        assert!(warm.cache_hit);
        assert_eq!(backends.metrics.total(), calls_after_cold);
    }

    #[test]
    fn phase_b_returns_report_and_annotations_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::new(dir.path(), "fp");
        let backends = scripted_backends();
        let config = PipelineConfig::default();
        let image = &images(1)[0];

        let cold =
            run_phase_b(image, "A red cube sits on a table.", &backends, &config, &cache)
                .unwrap();
        let (report, annotations) = &cold.value;
        assert_eq!(report.verified.len(), 1);
        assert!(report.hallucinated.is_empty());
        assert_eq!(annotations.len(), 1);
        assert_eq!(annotations[0].phrase.as_str(), "red cube");
        assert_eq!(annotations[0].size_frac, 0.25);

        let calls = backends.metrics.total();
        let warm =
            run_phase_b(image, "A red cube sits on a table.", &backends, &config, &cache)
                .unwrap();
        assert!(warm.cache_hit);
        assert_eq!(warm.value, cold.value);
        assert_eq!(backends.metrics.total(), calls);
    }

    #[test]
    fn phase_c_renders_even_empty_sections_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::new(dir.path(), "fp");
        let backends = scripted_backends();
        let config = PipelineConfig::default();
        let image = &images(1)[0];
        let report = HallucinationReport {
            extracted: vec![],
            verified: vec![],
            hallucinated: vec![],
            warnings: vec![],
        };
        let cold = run_phase_c(
            image,
            "A plain wall.",
            &report,
            &[],
            &backends.chat_llm,
            &config,
            &cache,
        )
        .unwrap();
        assert_eq!(cold.value, "The image shows a red cube.");
        let warm = run_phase_c(
            image,
            "A plain wall.",
            &report,
            &[],
            &backends.chat_llm,
            &config,
            &cache,
        )
        .unwrap();
        assert!(warm.cache_hit);
    }

    #[test]
    fn phase_c_rejects_pure_reasoning_replies() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::new(dir.path(), "fp");
        struct CotChat;
        impl ChatBackend for CotChat {
            fn chat(&self, _: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
                Ok("@@@ internal notes only @@@".to_string())
            }
        }
        let config = PipelineConfig::default();
        let image = &images(1)[0];
        let report = HallucinationReport {
            extracted: vec![],
            verified: vec![],
            hallucinated: vec![],
            warnings: vec![],
        };
        let err = run_phase_c(image, "text", &report, &[], &CotChat, &config, &cache)
            .unwrap_err();
        assert!(err.contains("no description"));
    }

    #[test]
    fn run_pipeline_processes_all_images_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cache_dir = dir.path().join("cache");
        let out = dir.path().join("out").join("dataset.jsonl");
        let backends = scripted_backends();
        let config = PipelineConfig { parallelism: 3, ..Default::default() };
        let images = images(3);

        let first = run_pipeline(&images, &backends, &config, &cache_dir, &out).unwrap();
        assert_eq!(first.summary.total, 3);
        assert_eq!(first.summary.complete, 3);
        assert_eq!(first.summary.cache_hits, 0);
        assert!(first.summary.backend_calls > 0);
        let first_bytes = std::fs::read(&first.dataset_path).unwrap();

        let second = run_pipeline(&images, &backends, &config, &cache_dir, &out).unwrap();
        assert_eq!(second.summary.complete, 3);
        assert_eq!(second.summary.backend_calls, 0);
        assert_eq!(second.summary.cache_hits, 9);
        let second_bytes = std::fs::read(&second.dataset_path).unwrap();
        assert_eq!(first_bytes, second_bytes);

        let summary_text = std::fs::read_to_string(&second.summary_path).unwrap();
        let parsed: RunSummary = serde_json::from_str(&summary_text).unwrap();
        assert_eq!(parsed, second.summary);
    }

    #[test]
    fn records_come_back_in_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let backends = scripted_backends();
        let config = PipelineConfig { parallelism: 4, ..Default::default() };
        let images = images(8);
        let outcome = run_pipeline(
            &images,
            &backends,
            &config,
            &dir.path().join("cache"),
            &dir.path().join("d.jsonl"),
        )
        .unwrap();
        let ids: Vec<&str> = outcome.records.iter().map(|r| r.image.id.as_str()).collect();
        let expected: Vec<String> = (0..8).map(|i| format!("img-{i}")).collect();
        assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        struct FailingChat;
        impl ChatBackend for FailingChat {
            fn chat(
                &self,
                messages: &[ChatMessage],
                _: &DecodeParams,
            ) -> Result<String, GatewayError> {
                let has_image = messages
                    .iter()
                    .flat_map(|m| m.parts())
                    .any(|p| matches!(p, crate::gateway::ContentPart::Image(i) if i.id == "img-1"));
                if has_image {
                    Err(GatewayError::Refusal { status: 400, message: "blocked".into() })
                } else {
                    Ok("A plain scene.".to_string())
                }
            }
        }
        let chat = Arc::new(RoutingChat {
            caption: String::new(),
            entities: "thing.".to_string(),
            rewrite: "Rewritten.".to_string(),
        });
        let backends = Backends::guarded(
            Arc::new(FailingChat),
            chat,
            Arc::new(YesDetector),
            Arc::new(OneBoxCaptioner),
            Arc::new(FillSegmenter),
            Arc::new(FlatDepth),
            Arc::new(NoEmbedder),
            2,
        );
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig::default();
        let images = images(3);
        let outcome = run_pipeline(
            &images,
            &backends,
            &config,
            &dir.path().join("cache"),
            &dir.path().join("d.jsonl"),
        )
        .unwrap();
        assert_eq!(outcome.summary.complete, 2);
        assert_eq!(outcome.summary.failed_phase_a, 1);
        let failed = &outcome.records[1];
        assert!(failed.stage_status.phase_a.is_failed());
        assert_eq!(failed.stage_status.phase_b, StageState::Pending);
        assert!(failed.final_description.is_none());
        for record in &outcome.records {
            assert!(crate::model::validate_record(record).is_empty());
        }
    }

    #[test]
    fn changing_config_invalidates_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache_dir = dir.path().join("cache");
        let out = dir.path().join("d.jsonl");
        let backends = scripted_backends();
        let images = images(1);
        let base = PipelineConfig::default();
        run_pipeline(&images, &backends, &base, &cache_dir, &out).unwrap();

        let changed =
            PipelineConfig { detector_threshold: 0.5, ..PipelineConfig::default() };
        let rerun = run_pipeline(&images, &backends, &changed, &cache_dir, &out).unwrap();
        assert_eq!(rerun.summary.cache_hits, 0);
        assert!(rerun.summary.backend_calls > 0);
    }

    #[test]
    fn unwritable_output_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("not-a-dir");
        std::fs::write(&blocker, b"file").unwrap();
        let out = blocker.join("d.jsonl");
        let backends = scripted_backends();
        let config = PipelineConfig::default();
        let err = run_pipeline(&images(1), &backends, &config, &dir.path().join("c"), &out)
            .unwrap_err();
        assert!(matches!(err, PipelineError::OutputIo { .. }));
    }
}
