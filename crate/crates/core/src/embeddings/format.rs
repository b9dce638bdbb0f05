//! Embedding files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic        4 bytes  "PEM1"
//! granularity  u8       0 = frame, 1 = tracklet
//! dim          u32
//! count        u64
//! count x { key_len u16, key utf-8 [key_len], values f32 [dim] }
//! ```
//!
//! Frame keys are `video_id/frame_idx/entity_id`. The CSV alternative has one
//! row per vector, `key,v0,v1,...`, with an optional header row whose first
//! cell is `key`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingTable, FrameKey, Granularity};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PEM1";

pub fn write_binary(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(&mut w, table).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn encode<W: Write>(w: &mut W, table: &EmbeddingTable) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[table.granularity().to_byte()])?;
    w.write_all(&(table.dim() as u32).to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    for (key, values) in table.iter() {
        let len = u16::try_from(key.len()).map_err(|_| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("key too long: {key}"),
            )
        })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    decode(&mut r).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })
}

fn decode<R: Read>(r: &mut R) -> std::result::Result<EmbeddingTable, String> {
    fn take<const N: usize, R: Read>(
        r: &mut R,
        what: &str,
    ) -> std::result::Result<[u8; N], String> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf)
            .map_err(|e| format!("reading {what}: {e}"))?;
        Ok(buf)
    }

    if &take::<4, _>(r, "magic")? != MAGIC {
        return Err("bad magic, expected PEM1".into());
    }
    let [g] = take::<1, _>(r, "granularity")?;
    let granularity =
        Granularity::from_byte(g).ok_or_else(|| format!("unknown granularity byte {g}"))?;
    let dim = u32::from_le_bytes(take(r, "dim")?) as usize;
    let count = u64::from_le_bytes(take(r, "count")?);
    let mut table = EmbeddingTable::new(dim, granularity).map_err(|e| e.to_string())?;
    for i in 0..count {
        let len = u16::from_le_bytes(take(r, "key length")?) as usize;
        let mut key = vec![0u8; len];
        r.read_exact(&mut key)
            .map_err(|e| format!("record {i}: reading key: {e}"))?;
        let key = String::from_utf8(key).map_err(|e| format!("record {i}: key: {e}"))?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(f32::from_le_bytes(take(r, "value")?));
        }
        if table.get(&key).is_some() {
            return Err(format!("record {i}: duplicate key `{key}`"));
        }
        table
            .insert(key, values)
            .map_err(|e| format!("record {i}: {e}"))?;
    }
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(table),
        Ok(_) => Err(format!("trailing bytes after {count} records")),
        Err(e) => Err(e.to_string()),
    }
}

pub fn write_csv(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Data(e.to_string()))?;
    for (key, values) in table.iter() {
        let mut row = vec![key.to_string()];
        row.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&row)
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the CSV form. When `granularity` is `None` it is inferred: frame
/// granularity if every key parses as a frame key, tracklet otherwise.
pub fn read_csv(path: &Path, granularity: Option<Granularity>) -> Result<EmbeddingTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let mut rows: Vec<(usize, String, Vec<f32>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let Some(key) = record.get(0) else { continue };
        if key.is_empty() || (i == 0 && key == "key") {
            continue;
        }
        let values = record
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f32>()
                    .map_err(|e| parse_err(line, format!("`{c}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, key.to_string(), values));
    }
    let Some(first) = rows.first() else {
        return Err(Error::Empty("embedding csv"));
    };
    let dim = first.2.len();
    let granularity = granularity.unwrap_or_else(|| {
        if rows.iter().all(|(_, k, _)| k.parse::<FrameKey>().is_ok()) {
            Granularity::Frame
        } else {
            Granularity::Tracklet
        }
    });
    let mut table =
        EmbeddingTable::new(dim, granularity).map_err(|e| parse_err(first.0, e.to_string()))?;
    for (line, key, values) in rows {
        if table.get(&key).is_some() {
            return Err(parse_err(line, format!("duplicate key `{key}`")));
        }
        table
            .insert(key, values)
            .map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(table)
}

/// Opens either format, sniffing the binary magic.
pub fn load_embeddings(
    path: &Path,
    csv_granularity: Option<Granularity>,
) -> Result<EmbeddingTable> {
    let mut head = [0u8; 4];
    let is_binary = File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map(|_| &head == MAGIC)
        .unwrap_or(false);
    if is_binary {
        read_binary(path)
    } else if path.exists() {
        read_csv(path, csv_granularity)
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}
