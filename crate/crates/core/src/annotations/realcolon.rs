//! Converter from the REAL-Colon release layout to annotation rows.
//!
//! Expected layout (PASCAL VOC, one XML file per annotated frame):
//!
//! ```text
//! <root>/
//!   001-001_annotations/
//!     001-001_00001.xml
//!     001-001_00002.xml
//!     ...
//! ```
//!
//! Mapping, per `<object>` element of each file:
//!
//! | row field   | source                                                         |
//! |-------------|----------------------------------------------------------------|
//! | `video_id`  | directory name without the `_annotations` suffix               |
//! | `frame_idx` | trailing integer of the file stem (`001-001_00042` -> 42)      |
//! | `entity_id` | first present of `<unique_id>`, `<id>`, `<track_id>`, `<name>` |
//! | `bbox`      | `<bndbox>` `xmin`, `ymin`, `xmax`, `ymax`                      |
//!
//! The element names are a best-effort reading of the public release and
//! should be checked against the downloaded data before relying on counts.
//! Frames without `<object>` children produce no rows.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BBox, FrameAnnotation};

const DIR_SUFFIX: &str = "_annotations";
const ENTITY_TAGS: [&str; 4] = ["unique_id", "id", "track_id", "name"];

/// Converts every `*_annotations` directory under `root`. Output is sorted by
/// (video, frame, entity).
pub fn convert_dir(root: &Path) -> Result<Vec<FrameAnnotation>> {
    let mut rows = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let Some(name) = dir.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(video_id) = name.strip_suffix(DIR_SUFFIX) else {
            continue;
        };
        let mut files: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let stem = file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let frame_idx = frame_from_stem(stem).ok_or_else(|| Error::Parse {
                path: file.clone(),
                line: 0,
                message: format!("cannot read a frame index from `{stem}`"),
            })?;
            rows.extend(
                parse_voc(&text, video_id, frame_idx).map_err(|message| Error::Parse {
                    path: file.clone(),
                    line: 0,
                    message,
                })?,
            );
        }
    }
    rows.sort_by(|a, b| {
        (&a.video_id, a.frame_idx, &a.entity_id).cmp(&(&b.video_id, b.frame_idx, &b.entity_id))
    });
    Ok(rows)
}

fn frame_from_stem(stem: &str) -> Option<u64> {
    let digits = stem.rsplit(['_', '-']).next()?;
    digits.parse().ok()
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, tag: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.has_tag_name(tag))
        .and_then(|c| c.text())
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

/// Parses one VOC document into rows for `video_id` at `frame_idx`.
pub fn parse_voc(
    text: &str,
    video_id: &str,
    frame_idx: u64,
) -> std::result::Result<Vec<FrameAnnotation>, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for obj in doc.descendants().filter(|n| n.has_tag_name("object")) {
        let entity = ENTITY_TAGS
            .iter()
            .find_map(|t| child_text(obj, t))
            .ok_or("object without an identity element")?;
        let bnd = obj
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or("object without <bndbox>")?;
        let coord = |tag: &str| -> std::result::Result<f64, String> {
            child_text(bnd, tag)
                .ok_or(format!("<bndbox> without <{tag}>"))?
                .parse::<f64>()
                .map_err(|e| format!("<{tag}>: {e}"))
        };
        let bbox = BBox::new(
            coord("xmin")?,
            coord("ymin")?,
            coord("xmax")?,
            coord("ymax")?,
        )
        .map_err(|e| e.to_string())?;
        rows.push(FrameAnnotation {
            video_id: video_id.to_string(),
            frame_idx,
            entity_id: entity.to_string(),
            bbox,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"<annotation>
  <filename>001-001_00042.jpg</filename>
  <object>
    <name>lesion</name>
    <unique_id>001-001_1</unique_id>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>90</ymax></bndbox>
  </object>
  <object>
    <name>lesion_b</name>
    <bndbox><xmin>0</xmin><ymin>0</ymin><xmax>5</xmax><ymax>5</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn parses_objects() {
        let rows = parse_voc(DOC, "001-001", 42).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].entity_id, "001-001_1");
        assert_eq!(rows[1].entity_id, "lesion_b");
        assert_eq!(rows[0].bbox.x_max(), 110.0);
    }

    #[test]
    fn converts_directory_layout() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("001-001_annotations");
        fs::create_dir(&dir).unwrap();
        fs::write(dir.join("001-001_00042.xml"), DOC).unwrap();
        fs::write(dir.join("001-001_00007.xml"), "<annotation/>").unwrap();
        fs::create_dir(root.path().join("001-001_frames")).unwrap();
        let rows = convert_dir(root.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.video_id == "001-001" && r.frame_idx == 42));
    }

    #[test]
    fn frame_index_from_stem() {
        assert_eq!(frame_from_stem("001-001_00042"), Some(42));
        assert_eq!(frame_from_stem("frame"), None);
    }
}
