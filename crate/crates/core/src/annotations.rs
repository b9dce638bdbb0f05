//! Annotation files: JSON Lines, one [`FrameAnnotation`] per row.
//!
//! ```text
//! {"video_id": "001-001", "frame_idx": 120, "entity_id": "001-001_1", "bbox": [10, 20, 110, 90]}
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FrameAnnotation;

pub mod realcolon;

/// Reads a JSON Lines annotation file. Blank lines are skipped; every other
/// line must be a complete row with no extra fields.
pub fn load_annotations(path: &Path) -> Result<Vec<FrameAnnotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: FrameAnnotation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[FrameAnnotation]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for a in annotations {
        let line = serde_json::to_string(a).expect("annotation serialises");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write("");
        assert!(load_annotations(f.path()).unwrap().is_empty());
    }

    #[test]
    fn valid_rows_are_all_parsed() {
        let f = write(concat!(
            r#"{"video_id":"v","frame_idx":0,"entity_id":"a","bbox":[0,0,10,10]}"#,
            "\n",
            r#"{"video_id":"v","frame_idx":1,"entity_id":"a","bbox":[1,0,11,10]}"#,
            "\n",
            "\n",
            r#"{"video_id":"v","frame_idx":1,"entity_id":"b","bbox":[50,50,60,70.5]}"#,
            "\n",
        ));
        let rows = load_annotations(f.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].bbox.y_max(), 70.5);
    }

    #[test]
    fn missing_field_reports_line() {
        let f = write(concat!(
            r#"{"video_id":"v","frame_idx":0,"entity_id":"a","bbox":[0,0,10,10]}"#,
            "\n",
            r#"{"video_id":"v","frame_idx":1,"bbox":[0,0,10,10]}"#,
            "\n",
        ));
        match load_annotations(f.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("entity_id"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_field_and_zero_area_rejected() {
        let f =
            write(r#"{"video_id":"v","frame_idx":0,"entity_id":"a","bbox":[0,0,1,1],"score":1}"#);
        assert!(matches!(
            load_annotations(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
        let f = write(r#"{"video_id":"v","frame_idx":0,"entity_id":"a","bbox":[0,0,0,1]}"#);
        assert!(matches!(
            load_annotations(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let f = write(r#"{"video_id":"v","frame_idx":3,"entity_id":"a","bbox":[0.5,0,10,10]}"#);
        let rows = load_annotations(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_annotations(out.path(), &rows).unwrap();
        assert_eq!(load_annotations(out.path()).unwrap(), rows);
    }
}
