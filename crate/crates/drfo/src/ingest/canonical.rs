//! The canonical on-disk dataset format.
//!
//! A dataset file is UTF-8 text:
//!
//! ```text
//! #drfo-dataset v1 users=<n_users> items=<n_items>
//! user	item	rating	status	s
//! 0	12	1	k	0
//! 3	7	0	r
//! ...
//! ```
//!
//! Columns are tab-separated. `status` is `k` (attribute known), `r`
//! (missing, reconstructable) or `b` (missing, reconstruction forbidden);
//! the `s` column holds the group for `k` rows and is empty otherwise.
//! Reading is strict: wrong magic, malformed counts, out-of-range ids, or a
//! group on a masked row all fail with the offending line number.

use std::path::Path;

use crate::data::{AttrStatus, InteractionRecord, PartitionedDataset};
use crate::error::{Error, Result};

const MAGIC: &str = "#drfo-dataset v1";
const HEADER: &str = "user\titem\trating\tstatus\ts";

/// Serializes a dataset to the canonical text format.
pub fn write_canonical(ds: &PartitionedDataset) -> String {
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} users={} items={}\n", ds.n_users(), ds.n_items()));
    out.push_str(HEADER);
    out.push('\n');
    for rec in ds.records() {
        let s = match rec.status {
            AttrStatus::Known(s) => s.to_string(),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rec.user,
            rec.item,
            rec.rating,
            rec.status.tag(),
            s
        ));
    }
    out
}

/// Parses the canonical text format.
pub fn read_canonical(text: &str) -> Result<PartitionedDataset> {
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file (missing magic line)"))?;
    let rest = first
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::parse(1, format!("bad magic line (expected `{MAGIC} ...`)")))?;
    let (n_users, n_items) = parse_counts(rest.trim())?;

    let (_, header) = lines.next().ok_or_else(|| Error::parse(2, "missing column header"))?;
    if header != HEADER {
        return Err(Error::parse(2, format!("bad column header (expected `{HEADER}`)")));
    }

    let mut records = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 columns, got {}", fields.len())));
        }
        let user: u32 = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid user id `{}`", fields[0])))?;
        let item: u32 = fields[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid item id `{}`", fields[1])))?;
        let rating: u8 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid rating `{}`", fields[2])))?;
        let status = match (fields[3], fields[4]) {
            ("k", s) => {
                let s: u8 = s.parse().map_err(|_| {
                    Error::parse(lineno, format!("invalid group `{s}` on a known row"))
                })?;
                if s > 1 {
                    return Err(Error::parse(lineno, format!("group {s} is not 0 or 1")));
                }
                AttrStatus::Known(s)
            }
            ("r", "") => AttrStatus::MissingReconstructable,
            ("b", "") => AttrStatus::MissingForbidden,
            ("r", s) | ("b", s) => {
                return Err(Error::parse(
                    lineno,
                    format!("masked row must leave the group empty, found `{s}`"),
                ));
            }
            (other, _) => {
                return Err(Error::parse(lineno, format!("unknown status `{other}`")));
            }
        };
        records.push(InteractionRecord { user, item, rating, status });
    }

    PartitionedDataset::new(records, n_users, n_items)
        .map_err(|e| Error::Integrity(format!("canonical file inconsistent: {e}")))
}

pub fn write_canonical_file(ds: &PartitionedDataset, path: &Path) -> Result<()> {
    std::fs::write(path, write_canonical(ds))?;
    Ok(())
}

pub fn read_canonical_file(path: &Path) -> Result<PartitionedDataset> {
    let text = std::fs::read_to_string(path)?;
    read_canonical(&text)
}

fn parse_counts(s: &str) -> Result<(u32, u32)> {
    let mut users = None;
    let mut items = None;
    for part in s.split_whitespace() {
        if let Some(v) = part.strip_prefix("users=") {
            users = v.parse::<u32>().ok();
        } else if let Some(v) = part.strip_prefix("items=") {
            items = v.parse::<u32>().ok();
        } else {
            return Err(Error::parse(1, format!("unexpected token `{part}` in magic line")));
        }
    }
    match (users, items) {
        (Some(u), Some(i)) => Ok((u, i)),
        _ => Err(Error::parse(1, "magic line must carry users=<n> items=<n>")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PartitionedDataset {
        PartitionedDataset::new(
            vec![
                InteractionRecord { user: 0, item: 2, rating: 1, status: AttrStatus::Known(1) },
                InteractionRecord {
                    user: 1,
                    item: 0,
                    rating: 0,
                    status: AttrStatus::MissingReconstructable,
                },
                InteractionRecord {
                    user: 2,
                    item: 1,
                    rating: 1,
                    status: AttrStatus::MissingForbidden,
                },
            ],
            3,
            3,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ds = sample();
        let text = write_canonical(&ds);
        let back = read_canonical(&text).unwrap();
        assert_eq!(back.records(), ds.records());
        assert_eq!(back.n_users(), 3);
        assert_eq!(back.n_items(), 3);
        // Byte-identical on a second round trip.
        assert_eq!(write_canonical(&back), text);
    }

    #[test]
    fn rejects_bad_magic_and_header() {
        assert!(matches!(read_canonical(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            read_canonical("#other v1 users=1 items=1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "#drfo-dataset v1 users=1 items=1\nwrong\theader\n";
        assert!(matches!(read_canonical(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_group_on_masked_row() {
        let text = format!(
            "#drfo-dataset v1 users=1 items=1\n{}\n0\t0\t1\tr\t0\n",
            "user\titem\trating\tstatus\ts"
        );
        assert!(matches!(read_canonical(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn rejects_out_of_range_ids_via_integrity() {
        let text = format!(
            "#drfo-dataset v1 users=1 items=1\n{}\n5\t0\t1\tk\t0\n",
            "user\titem\trating\tstatus\ts"
        );
        assert!(matches!(read_canonical(&text), Err(Error::Integrity(_))));
    }

    #[test]
    fn rejects_unknown_status_with_line_number() {
        let text = format!(
            "#drfo-dataset v1 users=1 items=1\n{}\n0\t0\t1\tx\t\n",
            "user\titem\trating\tstatus\ts"
        );
        match read_canonical(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
