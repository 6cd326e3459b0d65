//! Reader for popularity-contest `by_inst` listings joined with a size table.
//!
//! A listing line is `rank name inst vote old recent no-files`, optionally
//! followed by a maintainer in parentheses. Lines starting with `#`, dashed
//! separators and the closing `Total` line are skipped. The size table has
//! one `name bytes` pair per line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopconRecord {
    pub rank: u64,
    pub package: String,
    /// Installations; each one is a storage request.
    pub inst: u64,
    pub vote: u64,
    pub old: u64,
    pub recent: u64,
    pub no_files: u64,
    pub size_bytes: u64,
}

const FIELDS: [&str; 7] = ["rank", "name", "inst", "vote", "old", "recent", "no-files"];

fn parse_err(line: usize, what: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Parse { what: format!("line {line}, field {what}"), reason: reason.into() }
}

fn skipped(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#') || t.starts_with('-') || t.starts_with("Total")
}

pub fn parse_sizes(text: &str) -> Result<BTreeMap<String, u64>, HarnessError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if skipped(line) {
            continue;
        }
        let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let (Some(name), Some(bytes)) = (it.next(), it.next()) else {
            return Err(parse_err(i + 1, "bytes", "expected `name bytes`"));
        };
        let bytes: u64 = bytes.parse().map_err(|_| parse_err(i + 1, "bytes", format!("not a count: {bytes}")))?;
        if bytes == 0 {
            return Err(parse_err(i + 1, "bytes", format!("{name} has size 0")));
        }
        out.insert(name.to_string(), bytes);
    }
    Ok(out)
}

/// Parses a listing and joins every package with its size.
pub fn parse_popcon(text: &str, sizes: &BTreeMap<String, u64>) -> Result<Vec<PopconRecord>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if skipped(line) {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().take(FIELDS.len()).collect();
        if tok.len() < FIELDS.len() {
            return Err(parse_err(i + 1, FIELDS[tok.len()], "missing"));
        }
        let num = |k: usize| -> Result<u64, HarnessError> {
            tok[k].parse().map_err(|_| parse_err(i + 1, FIELDS[k], format!("not a count: {}", tok[k])))
        };
        let package = tok[1].to_string();
        let inst = num(2)?;
        if inst == 0 {
            return Err(parse_err(i + 1, "inst", format!("{package} has no installations")));
        }
        let size_bytes = *sizes.get(&package).ok_or_else(|| HarnessError::Parse {
            what: "size table".into(),
            reason: format!("no size for package {package}"),
        })?;
        out.push(PopconRecord {
            rank: num(0)?,
            package,
            inst,
            vote: num(3)?,
            old: num(4)?,
            recent: num(5)?,
            no_files: num(6)?,
            size_bytes,
        });
    }
    Ok(out)
}

/// Renders records back into listing and size-table text.
pub fn render(records: &[PopconRecord]) -> (String, String) {
    let mut listing = String::from("#rank name inst vote old recent no-files\n");
    let mut sizes = String::from("# name bytes\n");
    for r in records {
        listing.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            r.rank, r.package, r.inst, r.vote, r.old, r.recent, r.no_files
        ));
        sizes.push_str(&format!("{} {}\n", r.package, r.size_bytes));
    }
    let total: u64 = records.iter().map(|r| r.inst).sum();
    listing.push_str("--------------------------------------------------\n");
    listing.push_str(&format!("Total {total}\n"));
    (listing, sizes)
}
