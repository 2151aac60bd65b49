//! Uniform interfaces to the six expert backends: chat (LLM and MLLM),
//! open-set detector, dense captioner, segmenter, depth estimator, and image
//! embedder.
//!
//! Each backend kind has a remote implementation speaking a small HTTP JSON
//! protocol and a fixture implementation replaying recorded responses, keyed
//! by a digest of the canonicalized request. [`Guarded`] enforces the shared
//! contract on any implementation (concurrency cap, call metrics, geometry
//! validation), and [`Retrying`] adds jittered exponential backoff over
//! transient transport failures. [`build_backends`] assembles the whole set
//! from a [`PipelineConfig`], picking fixture or remote per endpoint scheme.

mod canonical;
mod fixture;
mod guard;
mod remote;
pub mod rle;
pub mod wire;

pub use canonical::{canonical_chat_request, canonical_digest, image_token};
pub use fixture::{
    FixtureChat, FixtureDenseCaptioner, FixtureDepth, FixtureDetector, FixtureEmbedder,
    FixtureSegmenter, FixtureStore, Recording,
};
pub use guard::{CallMetrics, Guarded, Limiter, Retrying, RetryPolicy};
pub use remote::{
    RemoteChat, RemoteDenseCaptioner, RemoteDepth, RemoteDetector, RemoteEmbedder, RemoteSegmenter,
};

use crate::model::{BBoxNorm, EntityPhrase, PipelineConfig, PixelBox};
use crate::{DepthMap, ImageRef, PixelMask, Scalar};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Network-level failure; the only retryable class.
    #[error("transport failure: {detail}")]
    Transport { detail: String },
    /// Backend answered with a structured error.
    #[error("backend refused request (status {status}): {message}")]
    Refusal { status: u16, message: String },
    #[error("backend does not know model tag {tag:?}")]
    UnknownModelTag { tag: String },
    /// No usable payload: empty chat text, or no fixture recorded for the
    /// request digest.
    #[error("empty response: {detail}")]
    EmptyResponse { detail: String },
    /// Segmentation produced no pixels for a box.
    #[error("segmenter returned an empty mask for box {bbox}")]
    MaskEmpty { bbox: PixelBox },
    /// Response payload did not parse as the expected shape.
    #[error("undecodable response: {detail}")]
    Decode { detail: String },
    /// Backend returned geometry or values violating the call contract.
    #[error("invalid backend response: {detail}")]
    Validation { detail: String },
    /// Caller violated a call precondition.
    #[error("precondition violated: {detail}")]
    Precondition { detail: String },
    #[error("no endpoint configured for {backend}")]
    NotConfigured { backend: String },
    #[error("unsupported endpoint {endpoint:?} (expected fixture://, http://, or https://)")]
    BadEndpoint { endpoint: String },
    #[error("reading {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GatewayError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

/// Sampling parameters for chat calls.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.0, max_tokens: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    Image(ImageRef),
}

/// One chat turn. Image parts are only valid in user messages, which the
/// constructors enforce; fields stay private so the invariant holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    role: Role,
    parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, parts: vec![ContentPart::Text(text.into())] }
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, parts: vec![ContentPart::Text(text.into())] }
    }

    pub fn user_with_image(text: impl Into<String>, image: ImageRef) -> Self {
        ChatMessage {
            role: Role::User,
            parts: vec![ContentPart::Text(text.into()), ContentPart::Image(image)],
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, parts: vec![ContentPart::Text(text.into())] }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn parts(&self) -> &[ContentPart] {
        &self.parts
    }
}

/// One scored grounding of a phrase in an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub phrase: EntityPhrase,
    pub bbox: BBoxNorm,
    pub score: Scalar,
}

/// One region proposal with its caption phrase, in pixel space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseCaption {
    pub phrase: EntityPhrase,
    pub bbox_px: PixelBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<Scalar>,
    pub model_tag: String,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage], params: &DecodeParams)
        -> Result<String, GatewayError>;
}

pub trait DetectorBackend: Send + Sync {
    fn detect(&self, image: &ImageRef, phrase: &EntityPhrase)
        -> Result<Vec<Detection>, GatewayError>;
}

pub trait DenseCaptionBackend: Send + Sync {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError>;
}

pub trait SegmenterBackend: Send + Sync {
    fn segment(&self, image: &ImageRef, boxes: &[PixelBox])
        -> Result<Vec<PixelMask>, GatewayError>;
}

pub trait DepthBackend: Send + Sync {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed_image(&self, image: &ImageRef, model_tag: &str)
        -> Result<EmbeddingVector, GatewayError>;
}

macro_rules! arc_backend {
    ($trait:ident, $method:ident, ($($arg:ident: $ty:ty),*) -> $out:ty) => {
        impl<T: $trait + ?Sized> $trait for Arc<T> {
            fn $method(&self, $($arg: $ty),*) -> Result<$out, GatewayError> {
                (**self).$method($($arg),*)
            }
        }
    };
}

arc_backend!(ChatBackend, chat, (messages: &[ChatMessage], params: &DecodeParams) -> String);
arc_backend!(DetectorBackend, detect, (image: &ImageRef, phrase: &EntityPhrase) -> Vec<Detection>);
arc_backend!(DenseCaptionBackend, dense_caption, (image: &ImageRef) -> Vec<DenseCaption>);
arc_backend!(SegmenterBackend, segment, (image: &ImageRef, boxes: &[PixelBox]) -> Vec<PixelMask>);
arc_backend!(DepthBackend, estimate_depth, (image: &ImageRef) -> DepthMap);
arc_backend!(EmbedBackend, embed_image, (image: &ImageRef, model_tag: &str) -> EmbeddingVector);

/// Which expert a call went to; index into the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExpertKind {
    ChatMllm,
    ChatLlm,
    Detector,
    DenseCaptioner,
    Segmenter,
    DepthEstimator,
    Embedder,
}

impl ExpertKind {
    pub const ALL: [ExpertKind; 7] = [
        ExpertKind::ChatMllm,
        ExpertKind::ChatLlm,
        ExpertKind::Detector,
        ExpertKind::DenseCaptioner,
        ExpertKind::Segmenter,
        ExpertKind::DepthEstimator,
        ExpertKind::Embedder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExpertKind::ChatMllm => "chat_mllm",
            ExpertKind::ChatLlm => "chat_llm",
            ExpertKind::Detector => "detector",
            ExpertKind::DenseCaptioner => "dense_captioner",
            ExpertKind::Segmenter => "segmenter",
            ExpertKind::DepthEstimator => "depth_estimator",
            ExpertKind::Embedder => "embedder",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// The full backend set the pipeline runs against, plus shared call metrics.
#[derive(Clone)]
pub struct Backends {
    pub chat_mllm: Arc<dyn ChatBackend>,
    pub chat_llm: Arc<dyn ChatBackend>,
    pub detector: Arc<dyn DetectorBackend>,
    pub dense_captioner: Arc<dyn DenseCaptionBackend>,
    pub segmenter: Arc<dyn SegmenterBackend>,
    pub depth_estimator: Arc<dyn DepthBackend>,
    pub embedder: Arc<dyn EmbedBackend>,
    pub metrics: Arc<CallMetrics>,
}

enum Resolved {
    Fixture(std::path::PathBuf),
    Remote(String),
    None,
}

fn resolve_endpoint(endpoint: &str, base: &Path) -> Result<Resolved, GatewayError> {
    if endpoint.is_empty() {
        return Ok(Resolved::None);
    }
    if let Some(dir) = endpoint.strip_prefix("fixture://") {
        let path = Path::new(dir);
        let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
        return Ok(Resolved::Fixture(path));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Resolved::Remote(endpoint.to_string()));
    }
    Err(GatewayError::BadEndpoint { endpoint: endpoint.to_string() })
}

/// A placeholder for an endpoint left empty in config: every call fails with
/// [`GatewayError::NotConfigured`].
pub struct NullBackend {
    backend: &'static str,
}

impl NullBackend {
    fn err<T>(&self) -> Result<T, GatewayError> {
        Err(GatewayError::NotConfigured { backend: self.backend.to_string() })
    }
}

impl ChatBackend for NullBackend {
    fn chat(&self, _: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
        self.err()
    }
}

impl DetectorBackend for NullBackend {
    fn detect(&self, _: &ImageRef, _: &EntityPhrase) -> Result<Vec<Detection>, GatewayError> {
        self.err()
    }
}

impl DenseCaptionBackend for NullBackend {
    fn dense_caption(&self, _: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        self.err()
    }
}

impl SegmenterBackend for NullBackend {
    fn segment(&self, _: &ImageRef, _: &[PixelBox]) -> Result<Vec<PixelMask>, GatewayError> {
        self.err()
    }
}

impl DepthBackend for NullBackend {
    fn estimate_depth(&self, _: &ImageRef) -> Result<DepthMap, GatewayError> {
        self.err()
    }
}

impl EmbedBackend for NullBackend {
    fn embed_image(&self, _: &ImageRef, _: &str) -> Result<EmbeddingVector, GatewayError> {
        self.err()
    }
}

/// Assemble the backend set from config. Relative `fixture://` paths resolve
/// against `base` (typically the config file's directory). Every backend is
/// wrapped with retry, concurrency-cap, metric, and validation layers.
pub fn build_backends(config: &PipelineConfig, base: &Path) -> Result<Backends, GatewayError> {
    let metrics = Arc::new(CallMetrics::default());
    let policy = RetryPolicy::from_config(config);
    let client = remote::shared_client();
    let cap = config.backend_concurrency;

    let wrap_chat = |inner: Arc<dyn ChatBackend>, kind: ExpertKind| -> Arc<dyn ChatBackend> {
        Arc::new(Retrying::new(
            Guarded::new(inner, kind, Limiter::new(cap), Arc::clone(&metrics)),
            policy.clone(),
        ))
    };
    let chat_backend = |endpoint: &str,
                        model: &str,
                        kind: ExpertKind|
     -> Result<Arc<dyn ChatBackend>, GatewayError> {
        let inner: Arc<dyn ChatBackend> = match resolve_endpoint(endpoint, base)? {
            Resolved::Fixture(dir) => {
                Arc::new(FixtureChat::new(FixtureStore::open(dir), model))
            }
            Resolved::Remote(url) => Arc::new(RemoteChat::new(client.clone(), url, model)),
            Resolved::None => Arc::new(NullBackend { backend: kind.name() }),
        };
        Ok(wrap_chat(inner, kind))
    };

    macro_rules! expert_backend {
        ($endpoint:expr, $kind:expr, $trait:ty, $fixture:ident, $remote:ident) => {{
            let inner: Arc<$trait> = match resolve_endpoint($endpoint, base)? {
                Resolved::Fixture(dir) => Arc::new($fixture::new(FixtureStore::open(dir))),
                Resolved::Remote(url) => Arc::new($remote::new(client.clone(), url)),
                Resolved::None => Arc::new(NullBackend { backend: $kind.name() }),
            };
            let guarded =
                Guarded::new(inner, $kind, Limiter::new(cap), Arc::clone(&metrics));
            Arc::new(Retrying::new(guarded, policy.clone()))
        }};
    }

    let b = &config.backends;
    Ok(Backends {
        chat_mllm: chat_backend(&b.chat_mllm, &b.chat_mllm_model, ExpertKind::ChatMllm)?,
        chat_llm: chat_backend(&b.chat_llm, &b.chat_llm_model, ExpertKind::ChatLlm)?,
        detector: expert_backend!(
            &b.detector,
            ExpertKind::Detector,
            dyn DetectorBackend,
            FixtureDetector,
            RemoteDetector
        ),
        dense_captioner: expert_backend!(
            &b.dense_captioner,
            ExpertKind::DenseCaptioner,
            dyn DenseCaptionBackend,
            FixtureDenseCaptioner,
            RemoteDenseCaptioner
        ),
        segmenter: expert_backend!(
            &b.segmenter,
            ExpertKind::Segmenter,
            dyn SegmenterBackend,
            FixtureSegmenter,
            RemoteSegmenter
        ),
        depth_estimator: expert_backend!(
            &b.depth_estimator,
            ExpertKind::DepthEstimator,
            dyn DepthBackend,
            FixtureDepth,
            RemoteDepth
        ),
        embedder: expert_backend!(
            &b.embedder,
            ExpertKind::Embedder,
            dyn EmbedBackend,
            FixtureEmbedder,
            RemoteEmbedder
        ),
        metrics,
    })
}

impl Backends {
    /// Wrap an already-built backend set with validation, metrics, and a
    /// concurrency cap, sharing one metrics table. Used to run the pipeline
    /// against in-process backends (oracles, recorders) under the same
    /// contract enforcement the config-built set gets.
    pub fn guarded(
        chat_mllm: Arc<dyn ChatBackend>,
        chat_llm: Arc<dyn ChatBackend>,
        detector: Arc<dyn DetectorBackend>,
        dense_captioner: Arc<dyn DenseCaptionBackend>,
        segmenter: Arc<dyn SegmenterBackend>,
        depth_estimator: Arc<dyn DepthBackend>,
        embedder: Arc<dyn EmbedBackend>,
        concurrency: usize,
    ) -> Backends {
        let metrics = Arc::new(CallMetrics::default());
        macro_rules! guard {
            ($inner:expr, $kind:expr) => {
                Arc::new(Guarded::new(
                    $inner,
                    $kind,
                    Limiter::new(concurrency),
                    Arc::clone(&metrics),
                ))
            };
        }
        Backends {
            chat_mllm: guard!(chat_mllm, ExpertKind::ChatMllm),
            chat_llm: guard!(chat_llm, ExpertKind::ChatLlm),
            detector: guard!(detector, ExpertKind::Detector),
            dense_captioner: guard!(dense_captioner, ExpertKind::DenseCaptioner),
            segmenter: guard!(segmenter, ExpertKind::Segmenter),
            depth_estimator: guard!(depth_estimator, ExpertKind::DepthEstimator),
            embedder: guard!(embedder, ExpertKind::Embedder),
            metrics,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackendEndpoints;

    #[test]
    fn chat_message_constructors_enforce_image_placement() {
        let image = ImageRef::new("img-1", 4, 4, "mem://none").unwrap();
        let m = ChatMessage::user_with_image("look", image);
        assert_eq!(m.role(), Role::User);
        assert_eq!(m.parts().len(), 2);
        let s = ChatMessage::system("be brief");
        assert!(matches!(s.parts(), [ContentPart::Text(t)] if t == "be brief"));
    }

    #[test]
    fn endpoint_resolution_covers_all_schemes() {
        let base = Path::new("/tmp/conf");
        assert!(matches!(resolve_endpoint("", base), Ok(Resolved::None)));
        match resolve_endpoint("fixture://fx/chat", base) {
            Ok(Resolved::Fixture(p)) => assert_eq!(p, Path::new("/tmp/conf/fx/chat")),
            other => panic!("unexpected: {:?}", other.is_ok()),
        }
        match resolve_endpoint("fixture:///abs/chat", base) {
            Ok(Resolved::Fixture(p)) => assert_eq!(p, Path::new("/abs/chat")),
            other => panic!("unexpected: {:?}", other.is_ok()),
        }
        assert!(matches!(
            resolve_endpoint("http://localhost:9/x", base),
            Ok(Resolved::Remote(_))
        ));
        assert!(matches!(
            resolve_endpoint("ftp://nope", base),
            Err(GatewayError::BadEndpoint { .. })
        ));
    }

    #[test]
    fn null_backend_reports_which_endpoint_is_missing() {
        let config = PipelineConfig { backends: BackendEndpoints::default(), ..Default::default() };
        let backends = build_backends(&config, Path::new(".")).unwrap();
        let err = backends
            .chat_mllm
            .chat(&[ChatMessage::user_text("hi")], &DecodeParams::default())
            .unwrap_err();
        match err {
            GatewayError::NotConfigured { backend } => assert_eq!(backend, "chat_mllm"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn transport_is_the_only_transient_class() {
        assert!(GatewayError::Transport { detail: "reset".into() }.is_transient());
        assert!(!GatewayError::Refusal { status: 400, message: "bad".into() }.is_transient());
        assert!(!GatewayError::EmptyResponse { detail: "none".into() }.is_transient());
    }
}
