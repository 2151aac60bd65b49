//! Hallucination detection: extract the object phrases a description commits
//! to, then verify each against the image with the open-set detector. A
//! phrase with no detection scoring at or above the threshold is tagged as a
//! hallucination.

use crate::gateway::{ChatBackend, DecodeParams, DetectorBackend, GatewayError};
use crate::model::{EntityPhrase, PipelineConfig};
use crate::prompting::{parse_entity_response, render_extract_prompt, PromptError};
use crate::{ImageRef, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HallucinationError {
    #[error("description is empty")]
    EmptyDescription,
    /// The chat backend kept answering without the response marker.
    #[error("extraction response carried no response marker after {attempts} attempts")]
    FormatFailure { attempts: u32 },
    #[error("verifying {phrase:?}: {source}")]
    Verification {
        phrase: String,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Outcome of checking one description against one image. `extracted` is
/// partitioned exactly into `verified` (with each phrase's best detector
/// score) and `hallucinated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub extracted: Vec<EntityPhrase>,
    pub verified: Vec<(EntityPhrase, Scalar)>,
    pub hallucinated: Vec<EntityPhrase>,
    /// Oddities that do not invalidate the report, e.g. extracted phrases
    /// that never occur verbatim in the description.
    pub warnings: Vec<String>,
}

/// Ask the chat backend which object phrases the description commits to.
/// A reply without the response marker is retried with the identical prompt
/// up to `retry_limit` extra times. Phrases are deduplicated
/// case-insensitively, keeping the first occurrence's casing.
pub fn extract_entities(
    description: &str,
    chat: &dyn ChatBackend,
    config: &PipelineConfig,
) -> Result<Vec<EntityPhrase>, HallucinationError> {
    if description.trim().is_empty() {
        return Err(HallucinationError::EmptyDescription);
    }
    let bundle = render_extract_prompt(description, &config.prompt_template_version);
    let messages = vec![crate::gateway::ChatMessage::user_text(bundle.rendered)];
    let params = DecodeParams::default();
    let attempts = config.retry_limit.saturating_add(1);
    for _ in 0..attempts {
        let reply = chat.chat(&messages, &params)?;
        match parse_entity_response(&reply) {
            Ok(phrases) => return Ok(dedup_case_insensitive(phrases)),
            Err(PromptError::MarkerMissing { .. }) => continue,
            Err(PromptError::EmptyDescription) => unreachable!("entity parser never emits this"),
        }
    }
    Err(HallucinationError::FormatFailure { attempts })
}

fn dedup_case_insensitive(phrases: Vec<EntityPhrase>) -> Vec<EntityPhrase> {
    let mut seen = HashSet::new();
    phrases
        .into_iter()
        .filter(|p| seen.insert(p.as_str().to_lowercase()))
        .collect()
}

/// Check one phrase against the image. Grounded means some detection scored
/// at or above the threshold (location is irrelevant; existence is the
/// question). Returns the best score seen, 0 when nothing was detected.
/// `threshold` must lie in (0, 1), which config validation guarantees.
pub fn verify_entity(
    image: &ImageRef,
    phrase: &EntityPhrase,
    detector: &dyn DetectorBackend,
    threshold: Scalar,
) -> Result<(bool, Scalar), HallucinationError> {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let detections = detector.detect(image, phrase).map_err(|source| {
        HallucinationError::Verification { phrase: phrase.as_str().to_string(), source }
    })?;
    let best = detections.iter().map(|d| d.score).fold(0.0, Scalar::max);
    Ok((best >= threshold && !detections.is_empty(), best))
}

/// Run the full check: extract phrases, verify each concurrently (the
/// gateway caps actual backend concurrency), and partition them. Output
/// order follows extraction order in both partitions.
pub fn detect_hallucinations(
    image: &ImageRef,
    description: &str,
    chat: &dyn ChatBackend,
    detector: &dyn DetectorBackend,
    config: &PipelineConfig,
) -> Result<HallucinationReport, HallucinationError> {
    let extracted = extract_entities(description, chat, config)?;
    let threshold = config.detector_threshold;

    let outcomes: Vec<Result<(bool, Scalar), HallucinationError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = extracted
                .iter()
                .map(|phrase| {
                    scope.spawn(move || verify_entity(image, phrase, detector, threshold))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("verification thread panicked"))
                .collect()
        });

    let mut verified = Vec::new();
    let mut hallucinated = Vec::new();
    for (phrase, outcome) in extracted.iter().zip(outcomes) {
        let (grounded, best) = outcome?;
        if grounded {
            verified.push((phrase.clone(), best));
        } else {
            hallucinated.push(phrase.clone());
        }
    }

    let lowered = description.to_lowercase();
    let warnings = extracted
        .iter()
        .filter(|p| !lowered.contains(&p.as_str().to_lowercase()))
        .map(|p| format!("extracted phrase {:?} does not occur verbatim in the description", p))
        .collect();

    Ok(HallucinationReport { extracted, verified, hallucinated, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Detection};
    use crate::model::BBoxNorm;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct ScriptedChat<F>(F);

    impl<F> ChatBackend for ScriptedChat<F>
    where
        F: Fn() -> String + Send + Sync,
    {
        fn chat(&self, _: &[ChatMessage], _: &DecodeParams) -> Result<String, GatewayError> {
            Ok((self.0)())
        }
    }

    /// Detector grounding exactly the phrases in its score table.
    struct TableDetector {
        scores: Vec<(&'static str, f64)>,
    }

    impl DetectorBackend for TableDetector {
        fn detect(
            &self,
            _: &ImageRef,
            phrase: &EntityPhrase,
        ) -> Result<Vec<Detection>, GatewayError> {
            Ok(self
                .scores
                .iter()
                .filter(|(p, _)| *p == phrase.as_str())
                .map(|&(p, score)| Detection {
                    phrase: EntityPhrase::new(p).unwrap(),
                    bbox: BBoxNorm::new(0.1, 0.1, 0.5, 0.5).unwrap(),
                    score,
                })
                .collect())
        }
    }

    fn image() -> ImageRef {
        ImageRef::new("scene", 8, 8, "mem://scene").unwrap()
    }

    const BEDROOM_RESPONSE: &str = "%%%RESPONSE%%%: red satin bedspread. gold tassels. \
        gold pillow. red curtains. gold trim. four teddy bears. white cat. \
        red and gold Christmas ornaments. Christmas tree. gold ornaments. \
        two red candlesticks.";

    #[test]
    fn extracts_the_bedroom_example_phrases() {
        let chat = ScriptedChat(|| BEDROOM_RESPONSE.to_string());
        let config = PipelineConfig::default();
        let phrases = extract_entities("A bedroom decorated for Christmas.", &chat, &config)
            .unwrap();
        assert_eq!(phrases.len(), 11);
        assert_eq!(phrases[0].as_str(), "red satin bedspread");
        assert_eq!(phrases[1].as_str(), "gold tassels");
        assert_eq!(phrases[10].as_str(), "two red candlesticks");
    }

    #[test]
    fn empty_response_extracts_nothing() {
        let chat = ScriptedChat(|| "%%%RESPONSE%%%:".to_string());
        let config = PipelineConfig::default();
        assert!(extract_entities("A plain wall.", &chat, &config).unwrap().is_empty());
    }

    #[test]
    fn dedup_is_case_insensitive_and_keeps_first_casing() {
        let chat = ScriptedChat(|| "%%%RESPONSE%%%: white cat. White Cat.".to_string());
        let config = PipelineConfig::default();
        let phrases = extract_entities("A white cat.", &chat, &config).unwrap();
        assert_eq!(phrases.len(), 1);
        assert_eq!(phrases[0].as_str(), "white cat");
    }

    #[test]
    fn empty_description_is_rejected() {
        let chat = ScriptedChat(|| String::new());
        let config = PipelineConfig::default();
        assert!(matches!(
            extract_entities("  ", &chat, &config),
            Err(HallucinationError::EmptyDescription)
        ));
    }

    #[test]
    fn markerless_replies_are_retried_with_the_identical_prompt() {
        let calls = AtomicUsize::new(0);
        let seen = std::sync::Mutex::new(Vec::<String>::new());
        struct CountingChat<'a> {
            calls: &'a AtomicUsize,
            seen: &'a std::sync::Mutex<Vec<String>>,
        }
        impl ChatBackend for CountingChat<'_> {
            fn chat(
                &self,
                messages: &[ChatMessage],
                _: &DecodeParams,
            ) -> Result<String, GatewayError> {
                let rendered = format!("{:?}", messages[0].parts());
                self.seen.lock().unwrap().push(rendered);
                let n = self.calls.fetch_add(1, Ordering::SeqCst);
                if n < 2 {
                    Ok("no marker here".to_string())
                } else {
                    Ok("%%%RESPONSE%%%: lone chair.".to_string())
                }
            }
        }
        let chat = CountingChat { calls: &calls, seen: &seen };
        let config = PipelineConfig::default();
        let phrases = extract_entities("A lone chair.", &chat, &config).unwrap();
        assert_eq!(phrases.len(), 1);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        let prompts = seen.lock().unwrap();
        assert!(prompts.iter().all(|p| p == &prompts[0]));
    }

    #[test]
    fn persistent_format_failure_reports_attempts() {
        let chat = ScriptedChat(|| "still no marker".to_string());
        let config = PipelineConfig { retry_limit: 2, ..Default::default() };
        match extract_entities("A chair.", &chat, &config) {
            Err(HallucinationError::FormatFailure { attempts }) => assert_eq!(attempts, 3),
            other => panic!("unexpected: {:?}", other.is_ok()),
        }
    }

    #[test]
    fn verify_grounds_at_or_above_threshold() {
        let detector = TableDetector { scores: vec![("black cat", 0.9), ("rug", 0.35)] };
        let cat = EntityPhrase::new("black cat").unwrap();
        assert_eq!(verify_entity(&image(), &cat, &detector, 0.35).unwrap(), (true, 0.9));
        let rug = EntityPhrase::new("rug").unwrap();
        assert_eq!(verify_entity(&image(), &rug, &detector, 0.35).unwrap(), (true, 0.35));
        let ghost = EntityPhrase::new("ghost").unwrap();
        assert_eq!(verify_entity(&image(), &ghost, &detector, 0.35).unwrap(), (false, 0.0));
        let weak = TableDetector { scores: vec![("rug", 0.2)] };
        assert_eq!(verify_entity(&image(), &rug, &weak, 0.35).unwrap(), (false, 0.2));
    }

    #[test]
    fn report_partitions_extracted_phrases_in_order() {
        let chat =
            ScriptedChat(|| "%%%RESPONSE%%%: a clock. a traffic light. a bus.".to_string());
        let detector = TableDetector { scores: vec![("a clock", 0.8)] };
        let config = PipelineConfig::default();
        let description = "A clock stands near a traffic light and a bus.";
        let report =
            detect_hallucinations(&image(), description, &chat, &detector, &config).unwrap();
        assert_eq!(report.extracted.len(), 3);
        assert_eq!(report.verified, vec![(EntityPhrase::new("a clock").unwrap(), 0.8)]);
        assert_eq!(
            report.hallucinated,
            vec![
                EntityPhrase::new("a traffic light").unwrap(),
                EntityPhrase::new("a bus").unwrap()
            ]
        );
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn all_grounded_means_no_hallucinations() {
        let chat = ScriptedChat(|| "%%%RESPONSE%%%: red cube. blue sphere.".to_string());
        let detector = TableDetector { scores: vec![("red cube", 1.0), ("blue sphere", 1.0)] };
        let config = PipelineConfig::default();
        let report = detect_hallucinations(
            &image(),
            "A red cube beside a blue sphere.",
            &chat,
            &detector,
            &config,
        )
        .unwrap();
        assert!(report.hallucinated.is_empty());
        assert_eq!(report.verified.len(), 2);
    }

    #[test]
    fn non_verbatim_phrases_are_flagged_not_dropped() {
        let chat = ScriptedChat(|| "%%%RESPONSE%%%: crimson bedspread.".to_string());
        let detector = TableDetector { scores: vec![("crimson bedspread", 0.9)] };
        let config = PipelineConfig::default();
        let report = detect_hallucinations(
            &image(),
            "A red bedspread covers the bed.",
            &chat,
            &detector,
            &config,
        )
        .unwrap();
        assert_eq!(report.verified.len(), 1);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("crimson bedspread"));
    }

    #[test]
    fn raising_the_threshold_never_shrinks_the_hallucinated_set() {
        let chat = ScriptedChat(|| "%%%RESPONSE%%%: a. b. c. d.".to_string());
        let detector = TableDetector {
            scores: vec![("a", 0.9), ("b", 0.5), ("c", 0.2)],
        };
        let hallucinated_at = |threshold: f64| {
            let config = PipelineConfig { detector_threshold: threshold, ..Default::default() };
            detect_hallucinations(&image(), "a b c d", &chat, &detector, &config)
                .unwrap()
                .hallucinated
        };
        let low = hallucinated_at(0.3);
        let high = hallucinated_at(0.6);
        assert!(low.iter().all(|p| high.contains(p)));
        assert_eq!(low.len(), 2);
        assert_eq!(high.len(), 3);
    }

    #[test]
    fn report_survives_serde_round_trip() {
        let report = HallucinationReport {
            extracted: vec![EntityPhrase::new("white cat").unwrap()],
            verified: vec![(EntityPhrase::new("white cat").unwrap(), 0.75)],
            hallucinated: vec![],
            warnings: vec!["note".to_string()],
        };
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<HallucinationReport>(&json).unwrap(), report);
    }

    proptest! {
        /// Partition invariant: every extracted phrase lands in exactly one
        /// of verified/hallucinated, order preserved within each.
        #[test]
        fn partition_invariant(
            entries in proptest::collection::vec(
                ("[a-z]{1,8}", any::<bool>()),
                0..12,
            )
        ) {
            let response = format!(
                "%%%RESPONSE%%%: {}",
                entries.iter().map(|(p, _)| format!("{p}.")).collect::<Vec<_>>().join(" ")
            );
            let chat = ScriptedChat(move || response.clone());
            let scores: Vec<(&str, f64)> = entries
                .iter()
                .filter(|(_, grounded)| *grounded)
                .map(|(p, _)| (p.as_str(), 0.9))
                .collect();
            // leak is confined to the test process; TableDetector wants 'static
            let scores: Vec<(&'static str, f64)> = scores
                .into_iter()
                .map(|(p, s)| (Box::leak(p.to_string().into_boxed_str()) as &'static str, s))
                .collect();
            let detector = TableDetector { scores };
            let config = PipelineConfig::default();
            let report = detect_hallucinations(
                &image(), "arbitrary text", &chat, &detector, &config
            ).unwrap();
            prop_assert_eq!(
                report.extracted.len(),
                report.verified.len() + report.hallucinated.len()
            );
            let verified_set: HashSet<&str> =
                report.verified.iter().map(|(p, _)| p.as_str()).collect();
            for p in &report.hallucinated {
                prop_assert!(!verified_set.contains(p.as_str()));
            }
            let mut rebuilt: Vec<&str> = Vec::new();
            let mut vi = report.verified.iter().peekable();
            let mut hi = report.hallucinated.iter().peekable();
            for p in &report.extracted {
                if vi.peek().map(|(v, _)| v == p).unwrap_or(false) {
                    rebuilt.push(vi.next().unwrap().0.as_str());
                } else {
                    rebuilt.push(hi.next().unwrap().as_str());
                }
            }
            let extracted: Vec<&str> =
                report.extracted.iter().map(|p| p.as_str()).collect();
            prop_assert_eq!(rebuilt, extracted);
        }
    }
}
