//! Dataset manifests: one JSON object per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PersistError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub audio_filepath: String,
    pub text: String,
    pub accent: String,
    pub gender: String,
    pub speaker: String,
    pub duration: f64,
}

/// All-or-nothing parse with line-numbered diagnostics. Blank lines are
/// permitted and skipped.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, PersistError> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| PersistError::ManifestLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !(record.duration > 0.0) {
            return Err(PersistError::ManifestLine {
                line: idx + 1,
                message: format!("duration must be positive, got {}", record.duration),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut file = std::fs::File::create(path.as_ref())?;
    for r in records {
        let line = serde_json::to_string(r).expect("manifest records serialize");
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> ManifestRecord {
        ManifestRecord {
            audio_filepath: format!("clip{i}.wav"),
            text: "we go up".into(),
            accent: "accent00".into(),
            gender: "f".into(),
            speaker: format!("spk{i}"),
            duration: 1.25,
        }
    }

    #[test]
    fn three_lines_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&[record(0), record(1), record(2)], &path).unwrap();
        let records = parse_manifest(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[1], record(1));
    }

    #[test]
    fn missing_field_cites_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let good = serde_json::to_string(&record(0)).unwrap();
        let bad = r#"{"audio_filepath":"x.wav","accent":"a","gender":"m","speaker":"s","duration":1.0}"#;
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match parse_manifest(&path) {
            Err(PersistError::ManifestLine { line: 2, message }) => {
                assert!(message.contains("text"), "{message}");
            }
            other => panic!("expected line-2 error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_duration_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut r = record(0);
        r.duration = 0.0;
        write_manifest(&[r], &path).unwrap();
        assert!(matches!(
            parse_manifest(&path),
            Err(PersistError::ManifestLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(parse_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn parse_serialize_parse_is_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_manifest(&[record(0), record(1)], &p1).unwrap();
        let r1 = parse_manifest(&p1).unwrap();
        write_manifest(&r1, &p2).unwrap();
        let r2 = parse_manifest(&p2).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
