//! Prompt rendering and response parsing.
//!
//! The templates live as plain-text assets under `assets/prompts/` and are
//! compiled in. Rendering is pure string work: substitute placeholders left to
//! right in a single pass (substituted text is never rescanned, so a
//! description containing a placeholder or marker goes through verbatim, with
//! a warning on the bundle). Numeric values are formatted under one pinned
//! rounding rule so the same annotation always renders the same bytes.
//!
//! Rounding rule (`round2-trim/1`): round half away from zero to two decimal
//! places, then drop a trailing zero in the hundredths place, always keeping
//! at least one decimal. So 1 renders as "1.0", 0.8 as "0.8", 0.96 as "0.96",
//! 5.58 as "5.58", and 0.05 as "0.05".

use crate::model::{EntityPhrase, ObjectAnnotation};
use crate::Scalar;
use thiserror::Error;

/// Version tag for the template assets; bumps on any template edit.
pub const TEMPLATE_VERSION: &str = "it-templates/1";
/// Version tag for the numeric formatting rule used inside prompts.
pub const ROUNDING_RULES_VERSION: &str = "round2-trim/1";

/// Marker the extraction response must start its payload with.
pub const EXTRACT_MARKER: &str = "%%%RESPONSE%%%:";
/// Marker the recaption response payload follows.
pub const RECAPTION_MARKER: &str = "%%%Your Modified Description:%%%";
/// Marker introducing the reference description in the recaption prompt.
pub const ORIGINAL_DESCRIPTION_MARKER: &str = "%%%The Original Description:%%%";
/// Marker introducing the description in the extraction prompt.
pub const DESCRIPTION_MARKER: &str = "%%%DESCRIPTION%%%:";
/// Pseudo-marker for prompts whose entire reply is the payload (phase A).
pub const WHOLE_RESPONSE_MARKER: &str = "<whole-response>";

const EXTRACT_TEMPLATE: &str = include_str!("../assets/prompts/extract.txt");
const EXTRACT_EXAMPLES: &str = include_str!("../assets/prompts/extract_examples.txt");
const RECAPTION_TEMPLATE: &str = include_str!("../assets/prompts/recaption.txt");
const RECAPTION_EXAMPLES: &str = include_str!("../assets/prompts/recaption_examples.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("response contains no {marker:?} marker")]
    MarkerMissing { marker: &'static str },
    #[error("response contains no description text")]
    EmptyDescription,
}

/// One rendered prompt plus what the caller needs to interpret the reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub rendered: String,
    pub expected_response_marker: String,
    pub template_version: String,
    /// Render-time oddities worth surfacing (e.g. the substituted text
    /// already contains the response marker). Never fatal.
    pub warnings: Vec<String>,
}

/// The four prompt lines describing one object, pre-formatted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectBlock {
    /// 1-based position in the prompt.
    pub index: usize,
    pub phrase: EntityPhrase,
    pub positioning_text: String,
    pub distance_text: String,
    pub size_text: String,
}

impl ObjectBlock {
    pub fn prompt_text(&self) -> String {
        format!(
            "Object{}: {}\n{}\n{}\n{}",
            self.index, self.phrase, self.positioning_text, self.distance_text, self.size_text
        )
    }
}

/// Format a value under the pinned prompt rounding rule.
pub fn format_rounded(value: Scalar) -> String {
    let cents = (value * 100.0).round();
    debug_assert!(cents.abs() < 9.2e18, "value out of formatting range: {value}");
    let n = cents as i64;
    let sign = if n < 0 { "-" } else { "" };
    let n = n.unsigned_abs();
    let mut s = format!("{sign}{}.{:02}", n / 100, n % 100);
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// Substitute each `(placeholder, value)` pair in one left-to-right pass.
/// Values are emitted verbatim and never rescanned for other placeholders.
fn substitute(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = pairs
            .iter()
            .filter_map(|(ph, value)| rest.find(ph).map(|at| (at, *ph, *value)))
            .min_by_key(|(at, _, _)| *at);
        match next {
            Some((at, placeholder, value)) => {
                out.push_str(&rest[..at]);
                out.push_str(value);
                rest = &rest[at + placeholder.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

/// Prompt for the holistic captioning phase: the configured instruction,
/// sent together with the image. The whole reply is the description.
pub fn render_phase_a_prompt(instruction: &str, template_version: &str) -> PromptBundle {
    PromptBundle {
        rendered: instruction.to_string(),
        expected_response_marker: WHOLE_RESPONSE_MARKER.to_string(),
        template_version: template_version.to_string(),
        warnings: Vec::new(),
    }
}

/// Prompt asking the text LLM to list the objects a description commits to.
pub fn render_extract_prompt(description: &str, template_version: &str) -> PromptBundle {
    let rendered = substitute(
        EXTRACT_TEMPLATE,
        &[
            ("<In-Context Examples>", EXTRACT_EXAMPLES),
            ("<Description>", description),
        ],
    );
    let mut warnings = Vec::new();
    if description.contains(EXTRACT_MARKER) {
        warnings.push(format!(
            "description itself contains the response marker {EXTRACT_MARKER:?}; substituted verbatim"
        ));
    }
    PromptBundle {
        rendered,
        expected_response_marker: EXTRACT_MARKER.to_string(),
        template_version: template_version.to_string(),
        warnings,
    }
}

/// Parse the extraction reply: everything after the first response marker,
/// split on "." separators, trimmed, empties dropped. Whitespace runs inside
/// a phrase collapse to single spaces so phrases stay single-line.
pub fn parse_entity_response(text: &str) -> Result<Vec<EntityPhrase>, PromptError> {
    let at = text
        .find(EXTRACT_MARKER)
        .ok_or(PromptError::MarkerMissing { marker: EXTRACT_MARKER })?;
    let payload = &text[at + EXTRACT_MARKER.len()..];
    let mut phrases = Vec::new();
    for piece in payload.split('.') {
        let words: Vec<&str> = piece.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let phrase = EntityPhrase::new(words.join(" "))
            .expect("whitespace-normalized nonempty text is a valid phrase");
        phrases.push(phrase);
    }
    Ok(phrases)
}

/// Pre-format one object's annotation lines. `index` is 1-based.
pub fn render_object_block(index: usize, annotation: &ObjectAnnotation) -> ObjectBlock {
    let b = annotation.bbox;
    ObjectBlock {
        index,
        phrase: annotation.phrase.clone(),
        positioning_text: format!(
            "Relative Spatial Positioning: [{}, {}, {}, {}]",
            format_rounded(b.x1),
            format_rounded(b.y1),
            format_rounded(b.x2),
            format_rounded(b.y2)
        ),
        distance_text: format!("Distance from the Lens: {}", format_rounded(annotation.depth_rel)),
        size_text: format!(
            "Relative Size Proportion in Images (Percentage): {}",
            format_rounded(annotation.size_frac * 100.0)
        ),
    }
}

/// Prompt asking the text LLM to rewrite the reference description: drop the
/// hallucinations, weave in the measured objects.
pub fn render_recaption_prompt(
    reference: &str,
    hallucinations: &[EntityPhrase],
    objects: &[ObjectAnnotation],
    template_version: &str,
) -> PromptBundle {
    let mut annotations = String::from("Hallucinations:");
    if !hallucinations.is_empty() {
        annotations.push(' ');
        let joined: Vec<&str> = hallucinations.iter().map(EntityPhrase::as_str).collect();
        annotations.push_str(&joined.join("; "));
    }
    for (i, object) in objects.iter().enumerate() {
        annotations.push_str("\n\n");
        annotations.push_str(&render_object_block(i + 1, object).prompt_text());
    }

    let rendered = substitute(
        RECAPTION_TEMPLATE,
        &[
            ("<In-Context Examples>", RECAPTION_EXAMPLES),
            ("<Description>", reference),
            ("<FINE-GRAINED OBJECTS' ANNOTATIONS>", &annotations),
        ],
    );
    let mut warnings = Vec::new();
    if reference.contains(RECAPTION_MARKER) {
        warnings.push(format!(
            "reference description contains the response marker {RECAPTION_MARKER:?}; substituted verbatim"
        ));
    }
    PromptBundle {
        rendered,
        expected_response_marker: RECAPTION_MARKER.to_string(),
        template_version: template_version.to_string(),
        warnings,
    }
}

/// Remove every balanced `@@@ ... @@@` chain-of-thought span. An unpaired
/// trailing `@@@` is left in place.
fn strip_cot_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("@@@") {
        match rest[start + 3..].find("@@@") {
            Some(end) => {
                out.push_str(&rest[..start]);
                rest = &rest[start + 3 + end + 3..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

/// Parse the recaption reply. Chain-of-thought spans are stripped first; the
/// payload is everything after the last response marker, or the whole reply
/// when the model omitted the marker.
pub fn parse_recaption_response(text: &str) -> Result<String, PromptError> {
    let stripped = strip_cot_spans(text);
    let payload = match stripped.rfind(RECAPTION_MARKER) {
        Some(at) => &stripped[at + RECAPTION_MARKER.len()..],
        None => &stripped[..],
    };
    let payload = payload.trim();
    if payload.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    Ok(payload.to_string())
}
