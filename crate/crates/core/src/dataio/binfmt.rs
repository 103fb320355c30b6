//! Compact binary feature files (`.vgfb`).
//!
//! Little-endian layout:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `VGFB`                              |
//! | 4            | `u32` version, currently 1                |
//! | 4            | `u32` N (rows)                            |
//! | 4            | `u32` D (columns)                         |
//! | 4·N·D        | `f32` values, row-major                   |
//! | 8            | `u64` byte length of the trailing block   |
//! | variable     | CSV block `id,label` with one row per item |

use std::path::Path;

use ndarray::Array2;

use super::features::FeatureTable;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VGFB";
pub const VERSION: u32 = 1;

pub fn encode_feature_bin(table: &FeatureTable) -> Result<Vec<u8>> {
    let n = u32::try_from(table.len()).map_err(|_| Error::Format("too many rows".into()))?;
    let d = u32::try_from(table.dim()).map_err(|_| Error::Format("too many columns".into()))?;

    let mut block = String::from("id,label\n");
    for (id, label) in table.ids().iter().zip(table.labels()) {
        block.push_str(id);
        block.push(',');
        block.push_str(&label.to_string());
        block.push('\n');
    }

    let mut out = Vec::with_capacity(16 + 4 * table.len() * table.dim() + 8 + block.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in table.matrix().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(block.len() as u64).to_le_bytes());
    out.extend_from_slice(block.as_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated payload while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_feature_bin(bytes: &[u8]) -> Result<FeatureTable> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let n = cur.u32("row count")? as usize;
    let d = cur.u32("column count")? as usize;
    let nvals = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("row/column count overflow".into()))?;
    let raw = cur.take(
        nvals
            .checked_mul(4)
            .ok_or_else(|| Error::Format("payload size overflow".into()))?,
        "feature values",
    )?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();

    let len_bytes = cur.take(8, "id table length")?;
    let mut lb = [0u8; 8];
    lb.copy_from_slice(len_bytes);
    let block_len = usize::try_from(u64::from_le_bytes(lb))
        .map_err(|_| Error::Format("id table length overflow".into()))?;
    let block = cur.take(block_len, "id table")?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after id table",
            bytes.len() - cur.pos
        )));
    }
    let block = std::str::from_utf8(block).map_err(|e| Error::Format(format!("id table: {e}")))?;

    let mut lines = block.lines();
    if lines.next() != Some("id,label") {
        return Err(Error::Format("id table header must be `id,label`".into()));
    }
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for line in lines {
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("malformed id row {line:?}")))?;
        let label: usize = label
            .parse()
            .map_err(|_| Error::Format(format!("bad label in id row {line:?}")))?;
        ids.push(id.to_string());
        labels.push(label);
    }
    if ids.len() != n {
        return Err(Error::Format(format!(
            "id table has {} rows, header says {n}",
            ids.len()
        )));
    }
    let matrix = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
    FeatureTable::new(ids, labels, matrix)
}

pub fn write_feature_bin(path: &Path, table: &FeatureTable) -> Result<()> {
    let bytes = encode_feature_bin(table)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_bin(path: &Path) -> Result<FeatureTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_bin(&bytes)
}
