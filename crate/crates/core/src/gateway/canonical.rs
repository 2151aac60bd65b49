//! Canonical request forms and digests for fixture keying.
//!
//! A fixture file is named by the sha256 of its canonicalized request JSON.
//! Canonical JSON is serde_json's default map encoding (keys sorted), with
//! image references replaced by a content token: `sha256:<hex>` over the
//! pixel file's bytes for local files, `url:<location>` for http(s) sources.
//! Keying on pixel content rather than paths keeps recorded fixtures valid
//! when a dataset directory moves.

use super::{ChatMessage, ContentPart, DecodeParams, GatewayError};
use crate::model::{sha256_hex, PixelBox};
use crate::ImageRef;
use serde_json::{json, Value};
use std::path::Path;

/// Content-addressed stand-in for an image in a canonical request.
pub fn image_token(image: &ImageRef) -> Result<String, GatewayError> {
    let src = image.pixel_source.as_str();
    if src.starts_with("http://") || src.starts_with("https://") {
        return Ok(format!("url:{src}"));
    }
    let bytes = std::fs::read(Path::new(src)).map_err(|source| GatewayError::Io {
        path: Path::new(src).to_path_buf(),
        source,
    })?;
    Ok(format!("sha256:{}", sha256_hex(&bytes)))
}

/// Digest naming the fixture file for a canonical request.
pub fn canonical_digest(request: &Value) -> String {
    let encoded = serde_json::to_string(request).expect("canonical request serializes");
    sha256_hex(encoded.as_bytes())
}

pub fn canonical_chat_request(
    model: &str,
    messages: &[ChatMessage],
    params: &DecodeParams,
) -> Result<Value, GatewayError> {
    let mut wire_messages = Vec::with_capacity(messages.len());
    for message in messages {
        let mut content = Vec::with_capacity(message.parts().len());
        for part in message.parts() {
            content.push(match part {
                ContentPart::Text(text) => json!({"type": "text", "text": text}),
                ContentPart::Image(image) => {
                    json!({"type": "image", "image": image_token(image)?})
                }
            });
        }
        wire_messages.push(json!({"role": message.role().name(), "content": content}));
    }
    Ok(json!({
        "kind": "chat",
        "model": model,
        "messages": wire_messages,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    }))
}

pub fn canonical_detect_request(
    image: &ImageRef,
    phrase: &str,
) -> Result<Value, GatewayError> {
    Ok(json!({"kind": "detect", "image": image_token(image)?, "phrase": phrase}))
}

pub fn canonical_dense_caption_request(image: &ImageRef) -> Result<Value, GatewayError> {
    Ok(json!({"kind": "dense_caption", "image": image_token(image)?}))
}

pub fn canonical_segment_request(
    image: &ImageRef,
    boxes: &[PixelBox],
) -> Result<Value, GatewayError> {
    let boxes: Vec<[u32; 4]> = boxes.iter().map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
    Ok(json!({"kind": "segment", "image": image_token(image)?, "boxes": boxes}))
}

pub fn canonical_depth_request(image: &ImageRef) -> Result<Value, GatewayError> {
    Ok(json!({"kind": "depth", "image": image_token(image)?}))
}

pub fn canonical_embed_request(
    image: &ImageRef,
    model_tag: &str,
) -> Result<Value, GatewayError> {
    Ok(json!({"kind": "embed_image", "image": image_token(image)?, "model": model_tag}))
}
