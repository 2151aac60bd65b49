//! Recorded-response backends for hermetic runs.
//!
//! A fixture directory holds one JSON file per call, named
//! `<digest>.json` where the digest canonicalizes the request (see the
//! canonical module). Each file stores both sides:
//! `{"request": <canonical request>, "response": <semantic response>}`.
//! Responses are stored in decoded semantic form (chat text as a JSON
//! string, expert payloads in their wire shapes), so a fixture directory is
//! also a readable transcript of what the pipeline asked and was told.

use super::canonical::{
    canonical_chat_request, canonical_dense_caption_request, canonical_depth_request,
    canonical_detect_request, canonical_digest, canonical_embed_request,
    canonical_segment_request,
};
use super::{
    wire, ChatBackend, ChatMessage, DecodeParams, DenseCaption, DenseCaptionBackend,
    DepthBackend, Detection, DetectorBackend, EmbedBackend, EmbeddingVector, GatewayError,
    SegmenterBackend,
};
use crate::model::{EntityPhrase, PixelBox};
use crate::{DepthMap, ImageRef, PixelMask};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    /// Recorded response for a canonical request; a structured error stored
    /// as the response replays as its error class.
    pub fn lookup(&self, request: &Value) -> Result<Value, GatewayError> {
        let digest = canonical_digest(request);
        let path = self.path_for(&digest);
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(GatewayError::EmptyResponse {
                    detail: format!(
                        "no fixture recorded for request digest {digest} under {}",
                        self.dir.display()
                    ),
                })
            }
            Err(source) => return Err(GatewayError::Io { path, source }),
        };
        let entry: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Decode {
            detail: format!("fixture {}: {e}", path.display()),
        })?;
        let response = entry.get("response").cloned().ok_or_else(|| GatewayError::Decode {
            detail: format!("fixture {} has no \"response\" field", path.display()),
        })?;
        if let Some(err) = wire::structured_error(&response) {
            return Err(err);
        }
        Ok(response)
    }

    /// Record one request/response pair; returns the file path written.
    pub fn save(&self, request: &Value, response: &Value) -> Result<PathBuf, GatewayError> {
        let digest = canonical_digest(request);
        let path = self.path_for(&digest);
        let io_err = |source| GatewayError::Io { path: path.clone(), source };
        std::fs::create_dir_all(&self.dir).map_err(io_err)?;
        let entry = json!({"request": request, "response": response});
        let body = serde_json::to_string_pretty(&entry).expect("fixture entry serializes");
        std::fs::write(&path, body).map_err(io_err)?;
        Ok(path)
    }
}

pub struct FixtureChat {
    store: FixtureStore,
    model: String,
}

impl FixtureChat {
    pub fn new(store: FixtureStore, model: impl Into<String>) -> Self {
        FixtureChat { store, model: model.into() }
    }
}

impl ChatBackend for FixtureChat {
    fn chat(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        let request = canonical_chat_request(&self.model, messages, params)?;
        let response = self.store.lookup(&request)?;
        response
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Decode {
                detail: "chat fixture response is not a string".to_string(),
            })
    }
}

pub struct FixtureDetector {
    store: FixtureStore,
}

impl FixtureDetector {
    pub fn new(store: FixtureStore) -> Self {
        FixtureDetector { store }
    }
}

impl DetectorBackend for FixtureDetector {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        let request = canonical_detect_request(image, phrase.as_str())?;
        wire::decode_detections(&self.store.lookup(&request)?)
    }
}

pub struct FixtureDenseCaptioner {
    store: FixtureStore,
}

impl FixtureDenseCaptioner {
    pub fn new(store: FixtureStore) -> Self {
        FixtureDenseCaptioner { store }
    }
}

impl DenseCaptionBackend for FixtureDenseCaptioner {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        let request = canonical_dense_caption_request(image)?;
        wire::decode_dense_captions(&self.store.lookup(&request)?)
    }
}

pub struct FixtureSegmenter {
    store: FixtureStore,
}

impl FixtureSegmenter {
    pub fn new(store: FixtureStore) -> Self {
        FixtureSegmenter { store }
    }
}

impl SegmenterBackend for FixtureSegmenter {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        let request = canonical_segment_request(image, boxes)?;
        wire::decode_masks(&self.store.lookup(&request)?)
    }
}

pub struct FixtureDepth {
    store: FixtureStore,
}

impl FixtureDepth {
    pub fn new(store: FixtureStore) -> Self {
        FixtureDepth { store }
    }
}

impl DepthBackend for FixtureDepth {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        let request = canonical_depth_request(image)?;
        wire::decode_depth(&self.store.lookup(&request)?)
    }
}

pub struct FixtureEmbedder {
    store: FixtureStore,
}

impl FixtureEmbedder {
    pub fn new(store: FixtureStore) -> Self {
        FixtureEmbedder { store }
    }
}

impl EmbedBackend for FixtureEmbedder {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        let request = canonical_embed_request(image, model_tag)?;
        wire::decode_embedding(&self.store.lookup(&request)?)
    }
}

/// Pass-through wrapper that records every successful call into a fixture
/// store, so a later run can replay the same traffic via the fixture
/// backends. `model` names the chat model for request canonicalization and
/// is ignored by the expert impls.
pub struct Recording<B> {
    inner: B,
    store: FixtureStore,
    model: String,
}

impl<B> Recording<B> {
    pub fn new(inner: B, store: FixtureStore) -> Self {
        Recording { inner, store, model: String::new() }
    }

    pub fn with_model(inner: B, store: FixtureStore, model: impl Into<String>) -> Self {
        Recording { inner, store, model: model.into() }
    }
}

impl<B: ChatBackend> ChatBackend for Recording<B> {
    fn chat(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        let request = canonical_chat_request(&self.model, messages, params)?;
        let text = self.inner.chat(messages, params)?;
        self.store.save(&request, &Value::String(text.clone()))?;
        Ok(text)
    }
}

impl<B: DetectorBackend> DetectorBackend for Recording<B> {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        let request = canonical_detect_request(image, phrase.as_str())?;
        let detections = self.inner.detect(image, phrase)?;
        self.store.save(&request, &wire::encode_detections(&detections))?;
        Ok(detections)
    }
}

impl<B: DenseCaptionBackend> DenseCaptionBackend for Recording<B> {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        let request = canonical_dense_caption_request(image)?;
        let captions = self.inner.dense_caption(image)?;
        self.store.save(&request, &wire::encode_dense_captions(&captions))?;
        Ok(captions)
    }
}

impl<B: SegmenterBackend> SegmenterBackend for Recording<B> {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        let request = canonical_segment_request(image, boxes)?;
        let masks = self.inner.segment(image, boxes)?;
        self.store.save(&request, &wire::encode_masks(&masks))?;
        Ok(masks)
    }
}

impl<B: DepthBackend> DepthBackend for Recording<B> {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        let request = canonical_depth_request(image)?;
        let map = self.inner.estimate_depth(image)?;
        self.store.save(&request, &wire::encode_depth(&map))?;
        Ok(map)
    }
}

impl<B: EmbedBackend> EmbedBackend for Recording<B> {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        let request = canonical_embed_request(image, model_tag)?;
        let vector = self.inner.embed_image(image, model_tag)?;
        self.store.save(&request, &wire::encode_embedding(&vector))?;
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBoxNorm;
    use std::io::Write;

    fn image_in(dir: &Path) -> ImageRef {
        let path = dir.join("scene.pgm");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"P5 2 2 255 abcd").unwrap();
        ImageRef::new("scene-1", 2, 2, path.to_str().unwrap()).unwrap()
    }

    #[test]
    fn missing_fixture_names_the_digest() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path().join("fx"));
        let request = json!({"kind": "detect", "image": "sha256:00", "phrase": "cat"});
        let digest = canonical_digest(&request);
        match store.lookup(&request) {
            Err(GatewayError::EmptyResponse { detail }) => assert!(detail.contains(&digest)),
            other => panic!("unexpected: {:?}", other.is_ok()),
        }
    }

    #[test]
    fn save_then_lookup_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path().join("fx"));
        let request = json!({"kind": "depth", "image": "sha256:11"});
        let response = json!({"width": 1, "height": 1, "values": [2.0]});
        store.save(&request, &response).unwrap();
        assert_eq!(store.lookup(&request).unwrap(), response);
    }

    #[test]
    fn recorded_error_replays_as_its_class() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        let request = json!({"kind": "embed_image", "image": "sha256:22", "model": "zz"});
        store
            .save(&request, &json!({"error": {"type": "unknown_model", "model": "zz"}}))
            .unwrap();
        assert!(matches!(
            store.lookup(&request),
            Err(GatewayError::UnknownModelTag { tag }) if tag == "zz"
        ));
    }

    struct ScriptedDetector;

    impl DetectorBackend for ScriptedDetector {
        fn detect(
            &self,
            _: &ImageRef,
            phrase: &EntityPhrase,
        ) -> Result<Vec<Detection>, GatewayError> {
            Ok(vec![Detection {
                phrase: phrase.clone(),
                bbox: BBoxNorm::new(0.1, 0.1, 0.6, 0.6).unwrap(),
                score: 0.91,
            }])
        }
    }

    #[test]
    fn recording_then_fixture_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let image = image_in(dir.path());
        let store = FixtureStore::open(dir.path().join("fx"));
        let recorder = Recording::new(ScriptedDetector, store.clone());
        let phrase = EntityPhrase::new("black cat").unwrap();
        let live = recorder.detect(&image, &phrase).unwrap();
        let replayed = FixtureDetector::new(store).detect(&image, &phrase).unwrap();
        assert_eq!(live, replayed);
    }

    #[test]
    fn chat_fixture_replays_recorded_text() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path().join("fx"));
        struct OneLiner;
        impl ChatBackend for OneLiner {
            fn chat(&self, _: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
                Ok("A small gray room.".to_string())
            }
        }
        let recorder = Recording::with_model(OneLiner, store.clone(), "llm-1");
        let messages = vec![ChatMessage::user_text("describe")];
        let params = DecodeParams::default();
        assert_eq!(recorder.chat(&messages, &params).unwrap(), "A small gray room.");
        let replay = FixtureChat::new(store, "llm-1");
        assert_eq!(replay.chat(&messages, &params).unwrap(), "A small gray room.");
    }

    #[test]
    fn chat_fixture_distinguishes_models() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path().join("fx"));
        let messages = vec![ChatMessage::user_text("describe")];
        let params = DecodeParams::default();
        let request = canonical_chat_request("llm-1", &messages, &params).unwrap();
        store.save(&request, &Value::String("text".into())).unwrap();
        assert!(FixtureChat::new(store.clone(), "llm-1").chat(&messages, &params).is_ok());
        assert!(matches!(
            FixtureChat::new(store, "llm-2").chat(&messages, &params),
            Err(GatewayError::EmptyResponse { .. })
        ));
    }
}
