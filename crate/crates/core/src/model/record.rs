//! JSONL serialization for [`AnnotationRecord`].
//!
//! One record per line, schema-tagged, floats at full precision so
//! `from_jsonl_line(to_jsonl_line(r)) == r` holds exactly.

use super::{
    AnnotationRecord, EntityPhrase, ImageRef, ModelError, ObjectAnnotation, StageStatus,
};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Schema tag stamped on every record line.
pub const RECORD_SCHEMA: &str = "it-record/1";

#[derive(Serialize, Deserialize)]
struct RecordWire {
    schema: String,
    image_id: String,
    width: u32,
    height: u32,
    pixel_source: String,
    reference_description: String,
    hallucinations: Vec<EntityPhrase>,
    objects: Vec<ObjectAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_description: Option<String>,
    stage_status: StageStatus,
    config_fingerprint: String,
}

impl From<&AnnotationRecord> for RecordWire {
    fn from(r: &AnnotationRecord) -> Self {
        Self {
            schema: RECORD_SCHEMA.to_string(),
            image_id: r.image.id.clone(),
            width: r.image.width,
            height: r.image.height,
            pixel_source: r.image.pixel_source.clone(),
            reference_description: r.reference_description.clone(),
            hallucinations: r.hallucinations.clone(),
            objects: r.objects.clone(),
            final_description: r.final_description.clone(),
            stage_status: r.stage_status.clone(),
            config_fingerprint: r.config_fingerprint.clone(),
        }
    }
}

/// Serialize one record to its JSONL line (no trailing newline).
pub fn to_jsonl_line(record: &AnnotationRecord) -> String {
    serde_json::to_string(&RecordWire::from(record)).expect("record serializes")
}

/// Parse one JSONL line, rejecting unknown schema tags.
pub fn from_jsonl_line(line: &str) -> Result<AnnotationRecord, ModelError> {
    let wire: RecordWire = serde_json::from_str(line)?;
    if wire.schema != RECORD_SCHEMA {
        return Err(ModelError::Schema {
            found: wire.schema,
            expected: RECORD_SCHEMA.to_string(),
        });
    }
    Ok(AnnotationRecord {
        image: ImageRef {
            id: wire.image_id,
            width: wire.width,
            height: wire.height,
            pixel_source: wire.pixel_source,
        },
        reference_description: wire.reference_description,
        hallucinations: wire.hallucinations,
        objects: wire.objects,
        final_description: wire.final_description,
        stage_status: wire.stage_status,
        config_fingerprint: wire.config_fingerprint,
    })
}

/// Read every record from a JSONL file, skipping blank lines.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, ModelError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| ModelError::Image(format!("cannot open {}: {e}", path.as_ref().display())))?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| ModelError::Image(format!("read failure: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(from_jsonl_line(&line)?);
    }
    Ok(records)
}

/// Write records as JSONL, one line each, in the given order.
pub fn write_records<W: Write>(mut out: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for record in records {
        out.write_all(to_jsonl_line(record).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
