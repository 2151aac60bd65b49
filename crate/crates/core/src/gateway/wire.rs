//! JSON response shapes shared by the fixture store and the remote protocol.
//!
//! Expert backends answer with kind-specific bodies: detections and dense
//! captions as arrays of scored/plain boxes, masks run-length encoded, depth
//! maps as row-major float arrays, embeddings as float arrays. A body may
//! instead carry a structured `{"error": {...}}` object, which maps onto the
//! non-retryable error classes.

use super::rle;
use super::{Detection, DenseCaption, EmbeddingVector, GatewayError};
use crate::model::{BBoxNorm, EntityPhrase, PixelBox};
use crate::{DepthMap, PixelMask};
use serde_json::{json, Value};

fn decode_err(detail: impl Into<String>) -> GatewayError {
    GatewayError::Decode { detail: detail.into() }
}

/// Map a structured error body onto an error class, if the value is one.
pub fn structured_error(value: &Value) -> Option<GatewayError> {
    let error = value.get("error")?;
    let kind = error.get("type").and_then(Value::as_str).unwrap_or("");
    let message = error
        .get("message")
        .and_then(Value::as_str)
        .unwrap_or("backend returned an error")
        .to_string();
    if kind == "unknown_model" {
        let tag = error
            .get("model")
            .and_then(Value::as_str)
            .unwrap_or(&message)
            .to_string();
        return Some(GatewayError::UnknownModelTag { tag });
    }
    let status = error.get("status").and_then(Value::as_u64).unwrap_or(400) as u16;
    Some(GatewayError::Refusal { status, message })
}

fn phrase_field(value: &Value, what: &str) -> Result<EntityPhrase, GatewayError> {
    let text = value
        .get("phrase")
        .and_then(Value::as_str)
        .ok_or_else(|| decode_err(format!("{what} missing string field \"phrase\"")))?;
    EntityPhrase::new(text).map_err(|e| decode_err(format!("{what}: {e}")))
}

fn f64_quad(value: &Value, what: &str) -> Result<[f64; 4], GatewayError> {
    let arr = value
        .get("box")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .ok_or_else(|| decode_err(format!("{what} missing 4-element \"box\"")))?;
    let mut out = [0.0; 4];
    for (slot, v) in out.iter_mut().zip(arr) {
        *slot = v
            .as_f64()
            .ok_or_else(|| decode_err(format!("{what} box holds a non-number")))?;
    }
    Ok(out)
}

pub fn encode_detections(detections: &[Detection]) -> Value {
    let items: Vec<Value> = detections
        .iter()
        .map(|d| {
            let b: [f64; 4] = d.bbox.into();
            json!({"phrase": d.phrase.as_str(), "box": b, "score": d.score})
        })
        .collect();
    json!({ "detections": items })
}

pub fn decode_detections(value: &Value) -> Result<Vec<Detection>, GatewayError> {
    let items = value
        .get("detections")
        .and_then(Value::as_array)
        .ok_or_else(|| decode_err("missing \"detections\" array"))?;
    items
        .iter()
        .map(|item| {
            let [x1, y1, x2, y2] = f64_quad(item, "detection")?;
            let bbox = BBoxNorm::new(x1, y1, x2, y2)
                .map_err(|e| decode_err(format!("detection: {e}")))?;
            let score = item
                .get("score")
                .and_then(Value::as_f64)
                .ok_or_else(|| decode_err("detection missing numeric \"score\""))?;
            Ok(Detection { phrase: phrase_field(item, "detection")?, bbox, score })
        })
        .collect()
}

pub fn encode_dense_captions(captions: &[DenseCaption]) -> Value {
    let items: Vec<Value> = captions
        .iter()
        .map(|c| {
            let b = &c.bbox_px;
            json!({"phrase": c.phrase.as_str(), "box": [b.x1, b.y1, b.x2, b.y2]})
        })
        .collect();
    json!({ "captions": items })
}

pub fn decode_dense_captions(value: &Value) -> Result<Vec<DenseCaption>, GatewayError> {
    let items = value
        .get("captions")
        .and_then(Value::as_array)
        .ok_or_else(|| decode_err("missing \"captions\" array"))?;
    items
        .iter()
        .map(|item| {
            let quad = f64_quad(item, "caption")?;
            let px: Vec<u32> = quad
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
                        Ok(v as u32)
                    } else {
                        Err(decode_err(format!("caption box holds non-pixel value {v}")))
                    }
                })
                .collect::<Result<_, _>>()?;
            let bbox_px = PixelBox::new(px[0], px[1], px[2], px[3])
                .map_err(|e| decode_err(format!("caption: {e}")))?;
            Ok(DenseCaption { phrase: phrase_field(item, "caption")?, bbox_px })
        })
        .collect()
}

pub fn encode_masks(masks: &[PixelMask]) -> Value {
    let items: Vec<Value> = masks
        .iter()
        .map(|m| json!({"width": m.width, "height": m.height, "counts": rle::encode(m)}))
        .collect();
    json!({ "masks": items })
}

pub fn decode_masks(value: &Value) -> Result<Vec<PixelMask>, GatewayError> {
    let items = value
        .get("masks")
        .and_then(Value::as_array)
        .ok_or_else(|| decode_err("missing \"masks\" array"))?;
    items
        .iter()
        .map(|item| {
            let width = item
                .get("width")
                .and_then(Value::as_u64)
                .ok_or_else(|| decode_err("mask missing \"width\""))? as u32;
            let height = item
                .get("height")
                .and_then(Value::as_u64)
                .ok_or_else(|| decode_err("mask missing \"height\""))? as u32;
            let counts: Vec<u32> = item
                .get("counts")
                .and_then(Value::as_array)
                .ok_or_else(|| decode_err("mask missing \"counts\""))?
                .iter()
                .map(|v| {
                    v.as_u64()
                        .filter(|&c| c <= u64::from(u32::MAX))
                        .map(|c| c as u32)
                        .ok_or_else(|| decode_err("mask counts hold a non-count"))
                })
                .collect::<Result<_, _>>()?;
            rle::decode(width, height, &counts)
        })
        .collect()
}

pub fn encode_depth(map: &DepthMap) -> Value {
    json!({"width": map.width, "height": map.height, "values": map.values})
}

pub fn decode_depth(value: &Value) -> Result<DepthMap, GatewayError> {
    let width = value
        .get("width")
        .and_then(Value::as_u64)
        .ok_or_else(|| decode_err("depth map missing \"width\""))? as u32;
    let height = value
        .get("height")
        .and_then(Value::as_u64)
        .ok_or_else(|| decode_err("depth map missing \"height\""))? as u32;
    let values: Vec<f64> = value
        .get("values")
        .and_then(Value::as_array)
        .ok_or_else(|| decode_err("depth map missing \"values\""))?
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| decode_err("depth values hold a non-number")))
        .collect::<Result<_, _>>()?;
    DepthMap::new(width, height, values).map_err(|e| decode_err(e.to_string()))
}

pub fn encode_embedding(vector: &EmbeddingVector) -> Value {
    json!({"embedding": vector.values, "model": vector.model_tag})
}

pub fn decode_embedding(value: &Value) -> Result<EmbeddingVector, GatewayError> {
    let values: Vec<f64> = value
        .get("embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| decode_err("missing \"embedding\" array"))?
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| decode_err("embedding holds a non-number")))
        .collect::<Result<_, _>>()?;
    let model_tag = value
        .get("model")
        .and_then(Value::as_str)
        .ok_or_else(|| decode_err("embedding missing \"model\""))?
        .to_string();
    Ok(EmbeddingVector { values, model_tag })
}
