//! HTTP implementations of the backend traits.
//!
//! Chat follows the common chat-completions shape: POST a JSON body with
//! model, messages (content parts; images as data URIs or URLs), temperature,
//! and max_tokens; the reply text is `choices[0].message.content`. The expert
//! backends each POST `{"image": <data URI or URL>, ...task fields}` to their
//! endpoint and get the wire shapes from the wire module back. Transport and
//! 5xx failures map to the retryable error class; 4xx bodies are parsed for
//! a structured error first and otherwise become refusals.
//!
//! Proxies are deliberately bypassed: these endpoints are explicit in config
//! and fixture-first runs never touch the network.

use super::{
    wire, ChatBackend, ChatMessage, ContentPart, DecodeParams, DenseCaption,
    DenseCaptionBackend, DepthBackend, Detection, DetectorBackend, EmbedBackend,
    EmbeddingVector, GatewayError, SegmenterBackend,
};
use crate::model::{EntityPhrase, PixelBox};
use crate::{DepthMap, ImageRef, PixelMask};
use base64::Engine;
use reqwest::blocking::Client;
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;

pub(super) fn shared_client() -> Client {
    Client::builder()
        .timeout(Duration::from_secs(30))
        .connect_timeout(Duration::from_secs(10))
        .no_proxy()
        .build()
        .expect("HTTP client builds")
}

fn mime_for(path: &str) -> &'static str {
    let ext = Path::new(path).extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext.to_ascii_lowercase().as_str() {
        "pgm" => "image/x-portable-graymap",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        _ => "application/octet-stream",
    }
}

/// Image as it travels on the wire: http(s) sources pass through, local
/// files are inlined as base64 data URIs.
fn wire_image(image: &ImageRef) -> Result<String, GatewayError> {
    let src = image.pixel_source.as_str();
    if src.starts_with("http://") || src.starts_with("https://") {
        return Ok(src.to_string());
    }
    let bytes = std::fs::read(src).map_err(|source| GatewayError::Io {
        path: Path::new(src).to_path_buf(),
        source,
    })?;
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{};base64,{encoded}", mime_for(src)))
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 200;
    if text.len() <= LIMIT {
        return text.to_string();
    }
    let mut cut = LIMIT;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}...", &text[..cut])
}

fn post_json(client: &Client, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
    let response = client.post(endpoint).json(body).send().map_err(|e| {
        GatewayError::Transport { detail: format!("POST {endpoint}: {e}") }
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| GatewayError::Transport {
        detail: format!("reading response from {endpoint}: {e}"),
    })?;
    if status.is_server_error() {
        return Err(GatewayError::Transport {
            detail: format!("{endpoint} answered {status}: {}", truncate(&text)),
        });
    }
    if !status.is_success() {
        if let Ok(value) = serde_json::from_str::<Value>(&text) {
            if let Some(err) = wire::structured_error(&value) {
                return Err(err);
            }
        }
        return Err(GatewayError::Refusal {
            status: status.as_u16(),
            message: truncate(&text),
        });
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::Decode {
        detail: format!("{endpoint} answered non-JSON: {e}"),
    })
}

pub struct RemoteChat {
    client: Client,
    endpoint: String,
    model: String,
}

impl RemoteChat {
    pub fn new(client: Client, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChat { client, endpoint: endpoint.into(), model: model.into() }
    }
}

impl ChatBackend for RemoteChat {
    fn chat(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        let mut wire_messages = Vec::with_capacity(messages.len());
        for message in messages {
            let mut content = Vec::with_capacity(message.parts().len());
            for part in message.parts() {
                content.push(match part {
                    ContentPart::Text(text) => json!({"type": "text", "text": text}),
                    ContentPart::Image(image) => {
                        json!({"type": "image_url", "image_url": {"url": wire_image(image)?}})
                    }
                });
            }
            wire_messages.push(json!({"role": message.role().name(), "content": content}));
        }
        let body = json!({
            "model": self.model,
            "messages": wire_messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let value = post_json(&self.client, &self.endpoint, &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Decode {
                detail: "chat response lacks choices[0].message.content".to_string(),
            })
    }
}

macro_rules! remote_expert {
    ($name:ident) => {
        pub struct $name {
            client: Client,
            endpoint: String,
        }

        impl $name {
            pub fn new(client: Client, endpoint: impl Into<String>) -> Self {
                $name { client, endpoint: endpoint.into() }
            }
        }
    };
}

remote_expert!(RemoteDetector);
remote_expert!(RemoteDenseCaptioner);
remote_expert!(RemoteSegmenter);
remote_expert!(RemoteDepth);
remote_expert!(RemoteEmbedder);

impl DetectorBackend for RemoteDetector {
    fn detect(
        &self,
        image: &ImageRef,
        phrase: &EntityPhrase,
    ) -> Result<Vec<Detection>, GatewayError> {
        let body = json!({"image": wire_image(image)?, "phrase": phrase.as_str()});
        wire::decode_detections(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

impl DenseCaptionBackend for RemoteDenseCaptioner {
    fn dense_caption(&self, image: &ImageRef) -> Result<Vec<DenseCaption>, GatewayError> {
        let body = json!({"image": wire_image(image)?});
        wire::decode_dense_captions(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

impl SegmenterBackend for RemoteSegmenter {
    fn segment(
        &self,
        image: &ImageRef,
        boxes: &[PixelBox],
    ) -> Result<Vec<PixelMask>, GatewayError> {
        let boxes: Vec<[u32; 4]> = boxes.iter().map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
        let body = json!({"image": wire_image(image)?, "boxes": boxes});
        wire::decode_masks(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

impl DepthBackend for RemoteDepth {
    fn estimate_depth(&self, image: &ImageRef) -> Result<DepthMap, GatewayError> {
        let body = json!({"image": wire_image(image)?});
        wire::decode_depth(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

impl EmbedBackend for RemoteEmbedder {
    fn embed_image(
        &self,
        image: &ImageRef,
        model_tag: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        let body = json!({"image": wire_image(image)?, "model": model_tag});
        wire::decode_embedding(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server: accepts a single request, reads it
    /// fully, answers with the canned status and JSON body.
    fn serve_once(status_line: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut tmp = [0u8; 1024];
            loop {
                let n = stream.read(&mut tmp).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&tmp[..n]);
                if let Some(header_end) =
                    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
                {
                    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
                    let content_length = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + content_length {
                        break;
                    }
                }
            }
            let response = format!(
                "HTTP/1.1 {status_line}\r\nContent-Type: application/json\r\n\
                 Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        format!("http://{addr}/v1")
    }

    fn temp_image() -> (tempfile::TempDir, ImageRef) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        std::fs::write(&path, b"P5 1 1 255 q").unwrap();
        let image = ImageRef::new("img", 1, 1, path.to_str().unwrap()).unwrap();
        (dir, image)
    }

    #[test]
    fn chat_extracts_message_content() {
        let url = serve_once(
            "200 OK",
            r#"{"choices": [{"message": {"role": "assistant", "content": "A quiet street."}}]}"#,
        );
        let chat = RemoteChat::new(shared_client(), url, "mllm-1");
        let text = chat
            .chat(&[ChatMessage::user_text("describe")], &DecodeParams::default())
            .unwrap();
        assert_eq!(text, "A quiet street.");
    }

    #[test]
    fn detector_decodes_wire_detections() {
        let url = serve_once(
            "200 OK",
            r#"{"detections": [{"phrase": "black cat", "box": [0.1, 0.2, 0.5, 0.9], "score": 0.8}]}"#,
        );
        let (_dir, image) = temp_image();
        let detector = RemoteDetector::new(shared_client(), url);
        let detections =
            detector.detect(&image, &EntityPhrase::new("black cat").unwrap()).unwrap();
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].score, 0.8);
    }

    #[test]
    fn server_errors_are_transient() {
        let url = serve_once("503 Service Unavailable", r#"{"error": "overloaded"}"#);
        let (_dir, image) = temp_image();
        let depth = RemoteDepth::new(shared_client(), url);
        let err = depth.estimate_depth(&image).unwrap_err();
        assert!(err.is_transient());
    }

    #[test]
    fn structured_client_errors_map_to_classes() {
        let url = serve_once(
            "404 Not Found",
            r#"{"error": {"type": "unknown_model", "model": "clip-zz"}}"#,
        );
        let (_dir, image) = temp_image();
        let embedder = RemoteEmbedder::new(shared_client(), url);
        assert!(matches!(
            embedder.embed_image(&image, "clip-zz"),
            Err(GatewayError::UnknownModelTag { tag }) if tag == "clip-zz"
        ));
    }

    #[test]
    fn plain_client_errors_are_refusals() {
        let url = serve_once("400 Bad Request", r#"{"detail": "malformed"}"#);
        let (_dir, image) = temp_image();
        let captioner = RemoteDenseCaptioner::new(shared_client(), url);
        assert!(matches!(
            captioner.dense_caption(&image),
            Err(GatewayError::Refusal { status: 400, .. })
        ));
    }

    #[test]
    fn connection_failures_are_transient() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        drop(listener);
        let chat = RemoteChat::new(shared_client(), url, "m");
        let err = chat
            .chat(&[ChatMessage::user_text("hi")], &DecodeParams::default())
            .unwrap_err();
        assert!(err.is_transient(), "got: {err}");
    }

    #[test]
    fn local_pixels_travel_as_data_uris() {
        let (_dir, image) = temp_image();
        let uri = wire_image(&image).unwrap();
        assert!(uri.starts_with("data:image/x-portable-graymap;base64,"));
        let remote = ImageRef::new("r", 1, 1, "https://host/i.png").unwrap();
        assert_eq!(wire_image(&remote).unwrap(), "https://host/i.png");
    }
}
