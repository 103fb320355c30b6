//! FASTA ingestion.
//!
//! A header line starts with `>`; the record id is the header text up to the
//! first whitespace or `|`. Sequence lines are concatenated with all
//! whitespace removed and upper-cased.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One nucleotide sequence with its identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    /// Upper-case residues, no whitespace.
    pub residues: String,
}

impl SequenceRecord {
    pub fn new(id: impl Into<String>, residues: impl Into<String>) -> Self {
        SequenceRecord {
            id: id.into(),
            residues: residues.into(),
        }
    }
}

fn header_id(header: &str) -> &str {
    header
        .split(|c: char| c.is_whitespace() || c == '|')
        .next()
        .unwrap_or("")
}

/// Parse FASTA text into ordered records.
pub fn parse_fasta(text: &str) -> Result<Vec<SequenceRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    // (id, header line number, residues)
    let mut current: Option<(String, usize, String)> = None;

    let finish = |cur: (String, usize, String), out: &mut Vec<SequenceRecord>| -> Result<()> {
        let (id, line, residues) = cur;
        if residues.is_empty() {
            return Err(Error::Fasta {
                line,
                msg: format!("empty sequence for \"{id}\""),
            });
        }
        out.push(SequenceRecord { id, residues });
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(header) = line.strip_prefix('>') {
            if let Some(cur) = current.take() {
                finish(cur, &mut records)?;
            }
            let id = header_id(header.trim_start());
            if id.is_empty() {
                return Err(Error::Fasta {
                    line: lineno,
                    msg: "empty record id".into(),
                });
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::Fasta {
                    line: lineno,
                    msg: format!("duplicate id \"{id}\""),
                });
            }
            current = Some((id.to_string(), lineno, String::new()));
        } else {
            let chunk: String = line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| c.to_ascii_uppercase())
                .collect();
            if chunk.is_empty() {
                continue;
            }
            match current.as_mut() {
                Some((_, _, residues)) => residues.push_str(&chunk),
                None => {
                    return Err(Error::Fasta {
                        line: lineno,
                        msg: "sequence data before first header".into(),
                    })
                }
            }
        }
    }
    if let Some(cur) = current.take() {
        finish(cur, &mut records)?;
    }
    if records.is_empty() {
        return Err(Error::Fasta {
            line: 0,
            msg: "empty file".into(),
        });
    }
    Ok(records)
}

/// Serialize records as FASTA with sequence lines wrapped at `width` columns.
pub fn write_fasta(records: &[SequenceRecord], width: usize) -> String {
    let width = width.max(1);
    let mut out = String::new();
    for rec in records {
        let _ = writeln!(out, ">{}", rec.id);
        let bytes = rec.residues.as_bytes();
        for chunk in bytes.chunks(width) {
            // residues are ASCII by construction
            out.push_str(std::str::from_utf8(chunk).unwrap_or_default());
            out.push('\n');
        }
    }
    out
}

pub fn read_fasta_file(path: &Path) -> Result<Vec<SequenceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fasta(&text)
}
