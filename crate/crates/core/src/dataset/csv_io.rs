use super::{AuVector, ConsolidatedFrame, DatasetError, Expression, VaPair, NUM_AUS};

pub const CONSOLIDATED_HEADER: [&str; 13] = [
    "video_id", "frame", "valence", "arousal", "au1", "au2", "au4", "au6", "au12", "au15",
    "au20", "au25", "expression",
];

/// Renders consolidated frames as CSV. Absent label families become empty cells.
pub fn write_consolidated_csv(frames: &[ConsolidatedFrame]) -> Result<String, DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CONSOLIDATED_HEADER)?;
    for f in frames {
        let mut row: Vec<String> = Vec::with_capacity(CONSOLIDATED_HEADER.len());
        row.push(f.video_id.clone());
        row.push(f.frame_index.to_string());
        match f.va {
            Some(va) => {
                row.push(va.valence.to_string());
                row.push(va.arousal.to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
        match f.aus {
            Some(aus) => row.extend(aus.bits().iter().map(|&b| u8::from(b).to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), NUM_AUS)),
        }
        row.push(f.expression.map(|e| e.name().to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| DatasetError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_consolidated_csv(text: &str) -> Result<Vec<ConsolidatedFrame>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CONSOLIDATED_HEADER) {
        return Err(DatasetError::Validation(format!(
            "unexpected consolidated header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut frames = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |m: String| DatasetError::Parse { line, message: m };
        let frame_index: u32 = row[1].parse().map_err(|e| bad(format!("frame: {e}")))?;
        let va = match (&row[2], &row[3]) {
            ("", "") => None,
            (v, a) => {
                let v: f64 = v.parse().map_err(|e| bad(format!("valence: {e}")))?;
                let a: f64 = a.parse().map_err(|e| bad(format!("arousal: {e}")))?;
                Some(VaPair::new(v, a)?)
            }
        };
        let au_cells: Vec<&str> = (4..4 + NUM_AUS).map(|c| &row[c]).collect();
        let aus = if au_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let mut bits = [false; NUM_AUS];
            for (b, cell) in bits.iter_mut().zip(&au_cells) {
                *b = match *cell {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("AU cell {other:?}"))),
                };
            }
            Some(AuVector::from_bits(bits))
        };
        let expression = match &row[12] {
            "" => None,
            s => Some(s.parse::<Expression>()?),
        };
        frames.push(ConsolidatedFrame {
            video_id: row[0].to_string(),
            frame_index,
            va,
            aus,
            expression,
        });
    }
    Ok(frames)
}
