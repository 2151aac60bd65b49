//! Expert-grounded image description pipeline.
//!
//! The library turns an image plus a holistic model-written description into a
//! curated record in three phases: a multimodal chat model drafts a reference
//! description, vision experts (open-set detector, dense captioner, segmenter,
//! depth estimator) check the draft for hallucinated objects and measure the
//! real ones, and a text-only chat model rewrites the description with the
//! hallucinations removed and the measured objects woven in.
//!
//! Modules:
//! - [`model`]: domain types, record validation, config + fingerprinting, JSONL.
//! - [`gateway`]: expert backend traits with remote (HTTP) and fixture (replay)
//!   implementations, retries, concurrency caps, and call metrics.
//! - [`prompting`]: versioned prompt templates, value formatting, response parsing.
//! - [`hallucination`]: entity extraction and detector-grounded verification.
//! - [`detail`]: per-object depth/size/bbox measurement from expert outputs.
//! - [`pipeline`]: staged orchestration with content-addressed caching.
//! - [`bench`]: n-gram overlap metrics, readability, embedding similarity, and
//!   yes/no probe scoring over JSONL corpora.

pub mod bench;
pub mod detail;
pub mod gateway;
pub mod hallucination;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod prompting;

/// Concrete scalar used by records, wire formats, and the pipeline.
///
/// The math kernels in [`numeric`] and [`detail`] are generic over
/// [`numeric::Real`]; everything that serializes (records, wire shapes,
/// [`bench`] reports) pins this alias so JSONL round-trips are lossless.
pub type Scalar = f64;

pub use model::{
    AnnotationRecord, BBoxNorm, DepthMap, EntityPhrase, ImageRef, ObjectAnnotation,
    PipelineConfig, PixelMask,
};
