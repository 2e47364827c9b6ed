//! Parser for the MovieLens `::`-delimited dump format.
//!
//! `ratings.dat` lines are `UserID::MovieID::Rating::Timestamp`; `users.dat`
//! lines are `UserID::Gender::Age::Occupation::Zip-code`. Gender maps to the
//! binary group as M -> 0, F -> 1 (any fixed coding works, the parity metric
//! is symmetric; this one is pinned so runs are comparable). User and item
//! ids are re-indexed densely in order of first appearance in the ratings
//! file; users without ratings get no index.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One interaction with its raw 1-5 star rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawInteraction {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
}

/// Parsed interactions plus the per-user attribute, before binarization.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub n_users: u32,
    pub n_items: u32,
    /// Group per (dense) user id.
    pub user_attr: Vec<u8>,
    pub interactions: Vec<RawInteraction>,
}

/// Parses in-memory contents of `ratings.dat` and `users.dat`.
pub fn parse_movielens(ratings: &str, users: &str) -> Result<RawDataset> {
    let attr_by_orig = parse_users(users)?;

    let mut user_map: HashMap<u64, u32> = HashMap::new();
    let mut item_map: HashMap<u64, u32> = HashMap::new();
    let mut user_attr = Vec::new();
    let mut interactions = Vec::new();

    for (lineno, line) in ratings.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split("::");
        let orig_user = parse_field::<u64>(fields.next(), lineno, "user id")?;
        let orig_item = parse_field::<u64>(fields.next(), lineno, "item id")?;
        let rating = parse_field::<u8>(fields.next(), lineno, "rating")?;
        if fields.next().is_none() {
            return Err(Error::parse(lineno, "missing timestamp field"));
        }
        if fields.next().is_some() {
            return Err(Error::parse(lineno, "too many fields (expected 4)"));
        }
        if !(1..=5).contains(&rating) {
            return Err(Error::parse(lineno, format!("rating {rating} outside 1-5")));
        }
        let attr = *attr_by_orig.get(&orig_user).ok_or_else(|| {
            Error::Integrity(format!(
                "ratings line {lineno}: user {orig_user} not present in users file"
            ))
        })?;
        let user = *user_map.entry(orig_user).or_insert_with(|| {
            user_attr.push(attr);
            (user_attr.len() - 1) as u32
        });
        let next_item = item_map.len() as u32;
        let item = *item_map.entry(orig_item).or_insert(next_item);
        interactions.push(RawInteraction { user, item, rating });
    }

    Ok(RawDataset {
        n_users: user_map.len() as u32,
        n_items: item_map.len() as u32,
        user_attr,
        interactions,
    })
}

/// Parses `ratings.dat` / `users.dat` from disk.
pub fn parse_movielens_files(ratings: &Path, users: &Path) -> Result<RawDataset> {
    let ratings_text = std::fs::read_to_string(ratings)?;
    let users_text = std::fs::read_to_string(users)?;
    parse_movielens(&ratings_text, &users_text)
}

fn parse_users(users: &str) -> Result<HashMap<u64, u8>> {
    let mut map = HashMap::new();
    for (lineno, line) in users.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                lineno,
                format!("expected 5 fields in users file, got {}", fields.len()),
            ));
        }
        let user = parse_field::<u64>(Some(fields[0]), lineno, "user id")?;
        let attr = match fields[1] {
            "M" => 0u8,
            "F" => 1u8,
            other => {
                return Err(Error::parse(lineno, format!("unknown gender `{other}`")));
            }
        };
        if map.insert(user, attr).is_some() {
            return Err(Error::parse(lineno, format!("duplicate user id {user}")));
        }
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    lineno: usize,
    what: &str,
) -> Result<T> {
    let raw = field.ok_or_else(|| Error::parse(lineno, format!("missing {what}")))?;
    raw.parse::<T>()
        .map_err(|_| Error::parse(lineno, format!("invalid {what} `{raw}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const USERS: &str = "1::F::1::10::48067\n2::M::56::16::70072\n3::M::25::15::55117\n";

    #[test]
    fn parses_and_remaps_densely() {
        let ratings = "1::1193::5::978300760\n2::1193::3::978302109\n1::661::3::978301968\n";
        let raw = parse_movielens(ratings, USERS).unwrap();
        assert_eq!(raw.n_users, 2);
        assert_eq!(raw.n_items, 2);
        // First appearance order: user 1 -> 0, user 2 -> 1; item 1193 -> 0, 661 -> 1.
        assert_eq!(
            raw.interactions,
            vec![
                RawInteraction { user: 0, item: 0, rating: 5 },
                RawInteraction { user: 1, item: 0, rating: 3 },
                RawInteraction { user: 0, item: 1, rating: 3 },
            ]
        );
        // Gender coding: F -> 1, M -> 0.
        assert_eq!(raw.user_attr, vec![1, 0]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let ratings = "1::1193::5::978300760\n1::661::five::978301968\n";
        match parse_movielens(ratings, USERS) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_fields_rejected() {
        assert!(matches!(
            parse_movielens("1::1193::5\n", USERS),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_movielens("1::1193::5::1::extra\n", USERS),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rating_out_of_range_rejected() {
        assert!(matches!(
            parse_movielens("1::1193::6::978300760\n", USERS),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_movielens("1::1193::0::978300760\n", USERS),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_user_is_integrity_error() {
        let ratings = "9::1193::5::978300760\n";
        assert!(matches!(parse_movielens(ratings, USERS), Err(Error::Integrity(_))));
    }

    #[test]
    fn duplicate_user_in_users_file_rejected() {
        let users = "1::F::1::10::48067\n1::M::56::16::70072\n";
        assert!(matches!(
            parse_movielens("", users),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
