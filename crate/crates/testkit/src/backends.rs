//! Scripted in-process backends that answer from scene ground truth.
//!
//! Each backend plays its expert perfectly for a known scene set: the chat
//! model "describes" an image by returning its reference description, the
//! detector grounds exactly the planted phrases, the segmenter returns exact
//! region masks, and depth comes straight from the scene raster. Unknown
//! images or descriptions fail fast, so a pipeline wired to these backends
//! exercises real control flow against inputs with known answers.

use crate::scene::SyntheticScene;
use pictext::gateway::{
    Backends, ChatBackend, ChatMessage, ContentPart, DecodeParams, DenseCaption,
    DenseCaptionBackend, DepthBackend, DetectorBackend, Detection, EmbedBackend, EmbeddingVector,
    FixtureStore, GatewayError, Recording, SegmenterBackend,
};
use pictext::model::{DepthMap, EntityPhrase, ImageRef, PixelBox, PixelMask};
use pictext::prompting::{
    DESCRIPTION_MARKER, EXTRACT_MARKER, ORIGINAL_DESCRIPTION_MARKER, RECAPTION_MARKER,
};
use pictext::model::BBoxNorm;
use std::collections::HashMap;
use std::sync::Arc;

/// Scene lookup shared by every oracle backend.
#[derive(Debug, Default)]
pub struct SceneIndex {
    by_id: HashMap<String, SyntheticScene>,
    by_description: HashMap<String, String>,
}

impl SceneIndex {
    pub fn new(scenes: &[SyntheticScene]) -> Self {
        let mut by_id = HashMap::new();
        let mut by_description = HashMap::new();
        for scene in scenes {
            by_description.insert(scene.reference_description.clone(), scene.id.clone());
            by_id.insert(scene.id.clone(), scene.clone());
        }
        SceneIndex { by_id, by_description }
    }

    pub fn scene(&self, id: &str) -> Result<&SyntheticScene, GatewayError> {
        self.by_id.get(id).ok_or_else(|| GatewayError::Precondition {
            detail: format!("unknown scene id {id:?}"),
        })
    }

    fn scene_for_description(&self, description: &str) -> Option<&SyntheticScene> {
        let id = self.by_description.get(description)?;
        self.by_id.get(id)
    }
}

fn message_text(messages: &[ChatMessage]) -> String {
    let mut text = String::new();
    for message in messages {
        for part in message.parts() {
            if let ContentPart::Text(t) = part {
                text.push_str(t);
            }
        }
    }
    text
}

fn message_image(messages: &[ChatMessage]) -> Option<&ImageRef> {
    messages.iter().flat_map(|m| m.parts()).find_map(|part| match part {
        ContentPart::Image(image) => Some(image),
        ContentPart::Text(_) => None,
    })
}

/// Plays both chat roles. Routing mirrors the prompt constructions: the
/// holistic request is the only one carrying an image, the entity request is
/// the only one ending in the extraction marker, everything else is a
/// rewrite request.
pub struct OracleChat {
    index: Arc<SceneIndex>,
}

impl OracleChat {
    fn describe(&self, image: &ImageRef) -> Result<String, GatewayError> {
        Ok(self.index.scene(&image.id)?.reference_description.clone())
    }

    /// Entity list for a description: every planted phrase plus every
    /// distractor phrase, exactly what a faithful extractor would pull out
    /// of the text.
    fn extract(&self, prompt: &str) -> String {
        let description = prompt
            .rfind(DESCRIPTION_MARKER)
            .map(|at| &prompt[at + DESCRIPTION_MARKER.len()..])
            .and_then(|tail| tail.strip_suffix(EXTRACT_MARKER))
            .map(|tail| tail.trim())
            .unwrap_or("");
        let Some(scene) = self.index.scene_for_description(description) else {
            return EXTRACT_MARKER.to_string();
        };
        let phrases: Vec<String> = scene
            .planted()
            .map(|o| o.phrase.clone())
            .chain(scene.distractor_phrases.iter().cloned())
            .collect();
        format!("{EXTRACT_MARKER} {}", phrases.join(". "))
    }

    /// Rewrite reply built from the object blocks in the prompt: one flat
    /// sentence naming each annotated phrase, dropping everything else.
    fn recaption(&self, prompt: &str) -> String {
        let tail = match prompt.rfind(ORIGINAL_DESCRIPTION_MARKER) {
            Some(at) => &prompt[at..],
            None => prompt,
        };
        let mut phrases = Vec::new();
        for line in tail.lines() {
            let Some(rest) = line.strip_prefix("Object") else { continue };
            let Some((number, phrase)) = rest.split_once(": ") else { continue };
            if number.chars().all(|c| c.is_ascii_digit()) && !number.is_empty() {
                phrases.push(phrase.trim().to_string());
            }
        }
        if phrases.is_empty() {
            format!("{RECAPTION_MARKER} The image shows a plain empty surface.")
        } else {
            format!("{RECAPTION_MARKER} The image shows {}.", phrases.join(", "))
        }
    }
}

impl ChatBackend for OracleChat {
    fn chat(&self, messages: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
        if let Some(image) = message_image(messages) {
            return self.describe(image);
        }
        let text = message_text(messages);
        if text.contains(DESCRIPTION_MARKER) {
            Ok(self.extract(&text))
        } else {
            Ok(self.recaption(&text))
        }
    }
}

/// Grounds a phrase iff some planted object carries it, with a full-score
/// detection at the object's true box. Distractor phrases ground nowhere.
pub struct OracleDetector {
    index: Arc<SceneIndex>,
}

impl DetectorBackend for OracleDetector {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        let scene = self.index.scene(&image.id)?;
        let hits = scene
            .planted()
            .filter(|o| o.phrase == phrase.as_str())
            .map(|o| {
                let bbox = BBoxNorm::new(
                    o.x1 as f64 / scene.width as f64,
                    o.y1 as f64 / scene.height as f64,
                    o.x2 as f64 / scene.width as f64,
                    o.y2 as f64 / scene.height as f64,
                )
                .expect("scene boxes normalize cleanly");
                Detection { phrase: phrase.clone(), bbox, score: 1.0 }
            })
            .collect();
        Ok(hits)
    }
}

/// Proposes exactly the planted objects, phrase and pixel box.
pub struct OracleDenseCaptioner {
    index: Arc<SceneIndex>,
}

impl DenseCaptionBackend for OracleDenseCaptioner {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        let scene = self.index.scene(&image.id)?;
        scene
            .planted()
            .map(|o| {
                let phrase = EntityPhrase::new(o.phrase.clone()).map_err(|e| {
                    GatewayError::Precondition { detail: format!("scene phrase: {e}") }
                })?;
                Ok(DenseCaption { phrase, bbox_px: o.bbox() })
            })
            .collect()
    }
}

/// Returns the exact region mask when a requested box matches an object's
/// bounding box, and an empty mask otherwise.
pub struct OracleSegmenter {
    index: Arc<SceneIndex>,
}

impl SegmenterBackend for OracleSegmenter {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        let scene = self.index.scene(&image.id)?;
        let masks = boxes
            .iter()
            .map(|b| {
                match scene.objects.iter().position(|o| o.bbox() == *b) {
                    Some(i) => scene.mask_for(i),
                    None => PixelMask::empty(scene.width, scene.height),
                }
            })
            .collect();
        Ok(masks)
    }
}

pub struct OracleDepth {
    index: Arc<SceneIndex>,
}

impl DepthBackend for OracleDepth {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        Ok(self.index.scene(&image.id)?.depth_map())
    }
}

/// Deterministic embedding derived from the scene seed; enough structure to
/// exercise the wiring, no pretense of semantics.
pub struct OracleEmbedder {
    index: Arc<SceneIndex>,
}

impl EmbedBackend for OracleEmbedder {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        let scene = self.index.scene(&image.id)?;
        let values = (0..8)
            .map(|k| ((scene.seed as f64 + 1.0) * (k as f64 + 1.0)).sin())
            .collect();
        Ok(EmbeddingVector { values, model_tag: model_tag.to_string() })
    }
}

/// Build a full guarded backend set answering from `scenes`.
pub fn oracle_backends(scenes: &[SyntheticScene], concurrency: usize) -> Backends {
    let index = Arc::new(SceneIndex::new(scenes));
    let chat = Arc::new(OracleChat { index: Arc::clone(&index) });
    Backends::guarded(
        chat.clone(),
        chat,
        Arc::new(OracleDetector { index: Arc::clone(&index) }),
        Arc::new(OracleDenseCaptioner { index: Arc::clone(&index) }),
        Arc::new(OracleSegmenter { index: Arc::clone(&index) }),
        Arc::new(OracleDepth { index: Arc::clone(&index) }),
        Arc::new(OracleEmbedder { index }),
        concurrency,
    )
}

/// Oracle backends with every call recorded into `store`, so a later run can
/// replay the identical traffic through the config-built fixture backends.
/// Requests are content-addressed, so the scenes' `ImageRef`s must point at
/// real pixel files (see [`crate::scene::write_scene_files`]), and the chat
/// model names must match the replaying config.
pub fn recording_backends(
    scenes: &[SyntheticScene],
    store: &FixtureStore,
    chat_mllm_model: &str,
    chat_llm_model: &str,
    concurrency: usize,
) -> Backends {
    let index = Arc::new(SceneIndex::new(scenes));
    Backends::guarded(
        Arc::new(Recording::with_model(
            OracleChat { index: Arc::clone(&index) },
            store.clone(),
            chat_mllm_model,
        )),
        Arc::new(Recording::with_model(
            OracleChat { index: Arc::clone(&index) },
            store.clone(),
            chat_llm_model,
        )),
        Arc::new(Recording::new(OracleDetector { index: Arc::clone(&index) }, store.clone())),
        Arc::new(Recording::new(
            OracleDenseCaptioner { index: Arc::clone(&index) },
            store.clone(),
        )),
        Arc::new(Recording::new(OracleSegmenter { index: Arc::clone(&index) }, store.clone())),
        Arc::new(Recording::new(OracleDepth { index: Arc::clone(&index) }, store.clone())),
        Arc::new(Recording::new(OracleEmbedder { index }, store.clone())),
        concurrency,
    )
}

/// The `ImageRef` the oracle backends expect for a scene. The pixel source
/// is symbolic; the oracles answer from ground truth, not from pixel data.
pub fn scene_image(scene: &SyntheticScene) -> ImageRef {
    ImageRef::new(scene.id.clone(), scene.width, scene.height, format!("mem://{}", scene.id))
        .expect("scene ids and dims are valid")
}
