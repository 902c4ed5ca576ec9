//! Rater score records and their CSV form.

use std::collections::HashSet;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ColorMode;

/// Exact header line of a scores file.
pub const CSV_HEADER: &str =
    "rater_id,image_id,color_mode,removed_artifacts,added_structures,timestamp_utc";
const COLUMNS: [&str; 6] = [
    "rater_id",
    "image_id",
    "color_mode",
    "removed_artifacts",
    "added_structures",
    "timestamp_utc",
];

pub const MAX_SCORE: u8 = 6;
const MAX_ID_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub rater_id: String,
    pub image_id: String,
    pub color_mode: ColorMode,
    /// 0 (severe structures removed) to 6 (artifacts fully removed).
    pub removed_artifacts: u8,
    /// 0 (misleading structures added) to 6 (hidden structures revealed).
    pub added_structures: u8,
    /// Millisecond precision.
    pub timestamp: DateTime<Utc>,
}

/// Drops sub-millisecond precision, which the CSV form does not carry.
pub fn truncate_to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(t.timestamp_millis())
        .single()
        .expect("millisecond timestamps are unambiguous")
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Checks an identifier: non-empty, at most 256 bytes, no control characters.
pub fn validate_id(row: usize, field: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.len() > MAX_ID_LEN || value.chars().any(char::is_control) {
        return Err(Error::Validation {
            row,
            field: field.into(),
            value: value.into(),
        });
    }
    Ok(())
}

/// Parses a 0-6 score.
pub fn parse_score(row: usize, field: &str, value: &str) -> Result<u8> {
    match value.parse::<u8>() {
        Ok(v) if v <= MAX_SCORE => Ok(v),
        _ => Err(Error::Validation {
            row,
            field: field.into(),
            value: value.into(),
        }),
    }
}

impl ScoreRecord {
    /// Validates all fields; `row` is only used in the error.
    pub fn validate(&self, row: usize) -> Result<()> {
        validate_id(row, "rater_id", &self.rater_id)?;
        validate_id(row, "image_id", &self.image_id)?;
        for (field, v) in [
            ("removed_artifacts", self.removed_artifacts),
            ("added_structures", self.added_structures),
        ] {
            if v > MAX_SCORE {
                return Err(Error::Validation {
                    row,
                    field: field.into(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }

    fn fields(&self) -> [String; 6] {
        [
            self.rater_id.clone(),
            self.image_id.clone(),
            self.color_mode.to_string(),
            self.removed_artifacts.to_string(),
            self.added_structures.to_string(),
            format_timestamp(&self.timestamp),
        ]
    }

    /// One CSV line including the trailing newline.
    pub fn to_csv_row(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(self.fields()).expect("writing to memory");
        w.into_inner().expect("writing to memory")
    }

    fn from_csv(row: usize, rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != COLUMNS.len() {
            return Err(Error::Format(format!(
                "row {row}: expected {} fields, found {}",
                COLUMNS.len(),
                rec.len()
            )));
        }
        let invalid = |field: &str, value: &str| Error::Validation {
            row,
            field: field.into(),
            value: value.into(),
        };
        let record = ScoreRecord {
            rater_id: rec[0].to_string(),
            image_id: rec[1].to_string(),
            color_mode: rec[2].parse().map_err(|_| invalid("color_mode", &rec[2]))?,
            removed_artifacts: parse_score(row, "removed_artifacts", &rec[3])?,
            added_structures: parse_score(row, "added_structures", &rec[4])?,
            timestamp: DateTime::parse_from_rfc3339(&rec[5])
                .map(|t| truncate_to_millis(t.with_timezone(&Utc)))
                .map_err(|_| invalid("timestamp_utc", &rec[5]))?,
        };
        record.validate(row)?;
        Ok(record)
    }
}

/// Parses a scores file. Rows are numbered from 1 after the header. A
/// completely empty input is treated as a file with no records.
pub fn parse_scores(bytes: &[u8]) -> Result<Vec<ScoreRecord>> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.iter().ne(COLUMNS) {
        return Err(Error::Format(format!(
            "expected header {CSV_HEADER:?}, found {:?}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        let record = ScoreRecord::from_csv(row, &rec)?;
        if !seen.insert((record.rater_id.clone(), record.image_id.clone())) {
            return Err(Error::Duplicate {
                row,
                rater_id: record.rater_id,
                image_id: record.image_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Header plus one row per record.
pub fn serialize_scores(records: &[ScoreRecord]) -> Vec<u8> {
    let mut out = format!("{CSV_HEADER}\n").into_bytes();
    for r in records {
        out.extend(r.to_csv_row());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rater: &str, image: &str, removed: u8, added: u8) -> ScoreRecord {
        ScoreRecord {
            rater_id: rater.into(),
            image_id: image.into(),
            color_mode: ColorMode::Green,
            removed_artifacts: removed,
            added_structures: added,
            timestamp: Utc.timestamp_millis_opt(1_700_000_000_123).unwrap(),
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_scores(format!("{CSV_HEADER}\n").as_bytes())
            .unwrap()
            .is_empty());
        assert!(parse_scores(b"").unwrap().is_empty());
    }

    #[test]
    fn out_of_range_score_names_row_and_field() {
        let csv = format!(
            "{CSV_HEADER}\nr1,i1,gray,4,4,2024-01-01T00:00:00.000Z\nr1,i2,gray,7,4,2024-01-01T00:00:00.000Z\n"
        );
        match parse_scores(csv.as_bytes()) {
            Err(Error::Validation { row, field, value }) => {
                assert_eq!(
                    (row, field.as_str(), value.as_str()),
                    (2, "removed_artifacts", "7")
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_rejected() {
        let bytes = serialize_scores(&[record("a", "x", 1, 2), record("a", "x", 3, 3)]);
        assert!(matches!(
            parse_scores(&bytes),
            Err(Error::Duplicate { row: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "rater,image_id,color_mode,removed_artifacts,added_structures,timestamp_utc\n";
        assert!(matches!(
            parse_scores(csv.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn round_trip_with_quoting() {
        let records = vec![
            record("dr, smith", "img \"7\"", 0, 6),
            record("b", "y", 3, 3),
        ];
        let bytes = serialize_scores(&records);
        assert!(bytes.starts_with(CSV_HEADER.as_bytes()));
        assert_eq!(parse_scores(&bytes).unwrap(), records);
    }

    #[test]
    fn timestamp_format() {
        let r = record("a", "b", 1, 1);
        let line = String::from_utf8(r.to_csv_row()).unwrap();
        assert_eq!(line, "a,b,green,1,1,2023-11-14T22:13:20.123Z\n");
    }
}
