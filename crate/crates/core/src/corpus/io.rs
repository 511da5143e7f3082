//! Delimited text IO for interaction logs and split manifests.
//!
//! Rows are `user_id, item_id, rating, timestamp`, separated by tabs or
//! commas. A header line is detected by its timestamp column not parsing as
//! an integer. The rating column may be empty.

use std::fmt::Write as _;
use std::path::Path;

use super::{Interaction, RawRow};
use crate::error::{Error, Result};

pub const HEADER: &str = "user_id\titem_id\trating\ttimestamp";

fn split_fields(line: &str) -> Vec<&str> {
    let sep = if line.contains('\t') { '\t' } else { ',' };
    line.split(sep).map(str::trim).collect()
}

pub fn parse_rows(text: &str, path: &Path) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    let mut first = true;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if first {
            first = false;
            if fields.len() >= 4 && fields[3].parse::<i64>().is_err() {
                continue;
            }
        }
        if fields.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", fields.len())));
        }
        let rating = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad rating {:?}: {e}", fields[2])))?,
            )
        };
        let timestamp = fields[3]
            .parse::<i64>()
            .map_err(|e| err(format!("bad timestamp {:?}: {e}", fields[3])))?;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty id".into()));
        }
        rows.push(RawRow {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(rows)
}

/// Renders already-remapped interactions in the log format, with header.
pub fn format_interactions(interactions: &[Interaction]) -> String {
    let mut out = String::with_capacity(interactions.len() * 24);
    out.push_str(HEADER);
    out.push('\n');
    for x in interactions {
        match x.rating {
            Some(r) => writeln!(out, "{}\t{}\t{}\t{}", x.user, x.item, r, x.timestamp),
            None => writeln!(out, "{}\t{}\t\t{}", x.user, x.item, x.timestamp),
        }
        .expect("write to string");
    }
    out
}

pub fn write_interactions(path: &Path, interactions: &[Interaction]) -> Result<()> {
    std::fs::write(path, format_interactions(interactions))?;
    Ok(())
}

/// Reads a file whose ids are already dense integers (a split manifest).
pub fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_rows(&text, path)?;
    rows.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let id = |s: &str| {
                s.parse::<usize>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 1,
                    message: format!("non-dense id {s:?}: {e}"),
                })
            };
            Ok(Interaction {
                user: id(&r.user)?,
                item: id(&r.item)?,
                timestamp: r.timestamp,
                rating: r.rating,
            })
        })
        .collect()
}
