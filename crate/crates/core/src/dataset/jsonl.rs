//! JSON-lines annotation files, one record per line:
//!
//! ```text
//! {"video_id":"v1","frame":0,"annotator":"a","valence":0.38,"arousal":0.35,
//!  "aus":{"1":0,"2":0,"4":0,"6":0,"12":1,"15":0,"20":0,"25":1},"expression":null}
//! ```
//!
//! Serialization is canonical: fixed key order, AU keys in ascending order,
//! shortest round-trip float formatting, `\n` line endings.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, AuVector, DatasetError, Expression, VaPair};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    video_id: String,
    frame: i64,
    annotator: String,
    #[serde(default)]
    valence: Option<f64>,
    #[serde(default)]
    arousal: Option<f64>,
    #[serde(default)]
    aus: Option<WireAus>,
    #[serde(default)]
    expression: Option<Expression>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAus {
    #[serde(rename = "1")]
    au1: u8,
    #[serde(rename = "2")]
    au2: u8,
    #[serde(rename = "4")]
    au4: u8,
    #[serde(rename = "6")]
    au6: u8,
    #[serde(rename = "12")]
    au12: u8,
    #[serde(rename = "15")]
    au15: u8,
    #[serde(rename = "20")]
    au20: u8,
    #[serde(rename = "25")]
    au25: u8,
}

impl WireAus {
    fn to_vector(&self) -> Result<AuVector, String> {
        let raw = [
            self.au1, self.au2, self.au4, self.au6, self.au12, self.au15, self.au20, self.au25,
        ];
        let mut bits = [false; 8];
        for (bit, v) in bits.iter_mut().zip(raw) {
            *bit = match v {
                0 => false,
                1 => true,
                other => return Err(format!("AU value must be 0 or 1, got {other}")),
            };
        }
        Ok(AuVector::from_bits(bits))
    }

    fn from_vector(v: &AuVector) -> Self {
        let b = v.bits().map(u8::from);
        Self {
            au1: b[0],
            au2: b[1],
            au4: b[2],
            au6: b[3],
            au12: b[4],
            au15: b[5],
            au20: b[6],
            au25: b[7],
        }
    }
}

fn decode(wire: WireRecord) -> Result<AnnotationRecord, String> {
    let frame_index = u32::try_from(wire.frame)
        .map_err(|_| format!("frame index {} out of range", wire.frame))?;
    let va = match (wire.valence, wire.arousal) {
        (Some(v), Some(a)) => Some(VaPair::new(v, a).map_err(|e| e.to_string())?),
        (None, None) => None,
        _ => return Err("valence and arousal must both be present or both null".into()),
    };
    let aus = wire.aus.as_ref().map(WireAus::to_vector).transpose()?;
    Ok(AnnotationRecord {
        video_id: wire.video_id,
        frame_index,
        annotator_id: wire.annotator,
        va,
        aus,
        expression: wire.expression,
    })
}

/// Parses a JSON-lines annotation stream. Blank lines are ignored; record
/// order is preserved. Duplicate `(video, frame, annotator)` keys are rejected.
pub fn parse_annotations(stream: &[u8]) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let text = std::str::from_utf8(stream).map_err(|e| DatasetError::Parse {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = decode(wire)
            .map_err(|m| DatasetError::Validation(format!("line {line_no}: {m}")))?;
        let key = (
            record.video_id.clone(),
            record.frame_index,
            record.annotator_id.clone(),
        );
        if !seen.insert(key) {
            return Err(DatasetError::Validation(format!(
                "line {line_no}: duplicate record for video {} frame {} annotator {}",
                record.video_id, record.frame_index, record.annotator_id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn serialize_record(record: &AnnotationRecord) -> String {
    let wire = WireRecord {
        video_id: record.video_id.clone(),
        frame: i64::from(record.frame_index),
        annotator: record.annotator_id.clone(),
        valence: record.va.map(|va| va.valence),
        arousal: record.va.map(|va| va.arousal),
        aus: record.aus.as_ref().map(WireAus::from_vector),
        expression: record.expression,
    };
    serde_json::to_string(&wire).expect("annotation records always serialize")
}

/// Canonical JSON-lines rendering, one record per `\n`-terminated line.
pub fn serialize_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serialize_record(r));
        out.push('\n');
    }
    out
}
