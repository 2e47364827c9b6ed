//! Core data model: interaction records with per-user sensitive-attribute
//! status, partitioned datasets, and reconstructed attribute overlays.
//!
//! An attribute is always one of two groups (0 or 1). Every record carries
//! the *availability* of its user's attribute: known, missing but
//! reconstructable, or missing with reconstruction forbidden (user refused).

use crate::error::{Error, Result};

/// Availability of a user's sensitive attribute on a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrStatus {
    /// Attribute observed; payload is the group in {0, 1}.
    Known(u8),
    /// Missing, and the user permits reconstruction.
    MissingReconstructable,
    /// Missing, and reconstruction is forbidden for this user.
    MissingForbidden,
}

impl AttrStatus {
    /// Canonical single-letter tag used by the dataset file format.
    pub fn tag(&self) -> &'static str {
        match self {
            AttrStatus::Known(_) => "k",
            AttrStatus::MissingReconstructable => "r",
            AttrStatus::MissingForbidden => "b",
        }
    }
}

/// One user-item interaction with a binarized rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: u32,
    pub item: u32,
    /// Binary rating in {0, 1}.
    pub rating: u8,
    pub status: AttrStatus,
}

/// Record partitions by attribute availability.
///
/// `Missing` is the union of `Reconstructable` and `Forbidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionTag {
    Known,
    Reconstructable,
    Forbidden,
    Missing,
}

impl PartitionTag {
    /// Parses the single-letter tags used on the command line and in files.
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "known" => Ok(PartitionTag::Known),
            "r" | "reconstructable" => Ok(PartitionTag::Reconstructable),
            "b" | "forbidden" => Ok(PartitionTag::Forbidden),
            "m" | "missing" => Ok(PartitionTag::Missing),
            other => Err(Error::Usage(format!(
                "unknown partition tag `{other}` (expected one of k, r, b, m)"
            ))),
        }
    }
}

/// An immutable set of interaction records with precomputed partition and
/// group indices. Construction validates every structural invariant; all
/// accessors are read-only.
#[derive(Debug, Clone)]
pub struct PartitionedDataset {
    records: Vec<InteractionRecord>,
    n_users: u32,
    n_items: u32,
    index_k: Vec<usize>,
    index_r: Vec<usize>,
    index_b: Vec<usize>,
    // Known-record indices split by true group; parallel to nothing else.
    group_k: [Vec<usize>; 2],
}

impl PartitionedDataset {
    /// Validates ids, ratings, and attribute payloads, and builds the
    /// partition indices (ascending record order).
    pub fn new(records: Vec<InteractionRecord>, n_users: u32, n_items: u32) -> Result<Self> {
        let mut index_k = Vec::new();
        let mut index_r = Vec::new();
        let mut index_b = Vec::new();
        let mut group_k = [Vec::new(), Vec::new()];
        for (i, rec) in records.iter().enumerate() {
            if rec.user >= n_users {
                return Err(Error::Integrity(format!(
                    "record {i}: user id {} out of range (n_users = {n_users})",
                    rec.user
                )));
            }
            if rec.item >= n_items {
                return Err(Error::Integrity(format!(
                    "record {i}: item id {} out of range (n_items = {n_items})",
                    rec.item
                )));
            }
            if rec.rating > 1 {
                return Err(Error::Integrity(format!(
                    "record {i}: rating {} is not binary",
                    rec.rating
                )));
            }
            match rec.status {
                AttrStatus::Known(s) => {
                    if s > 1 {
                        return Err(Error::Integrity(format!(
                            "record {i}: attribute {s} is not a valid group"
                        )));
                    }
                    index_k.push(i);
                    group_k[s as usize].push(i);
                }
                AttrStatus::MissingReconstructable => index_r.push(i),
                AttrStatus::MissingForbidden => index_b.push(i),
            }
        }
        Ok(Self { records, n_users, n_items, index_k, index_r, index_b, group_k })
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_users(&self) -> u32 {
        self.n_users
    }

    pub fn n_items(&self) -> u32 {
        self.n_items
    }

    /// Record indices of one partition, in ascending order.
    pub fn partition(&self, tag: PartitionTag) -> Vec<usize> {
        match tag {
            PartitionTag::Known => self.index_k.clone(),
            PartitionTag::Reconstructable => self.index_r.clone(),
            PartitionTag::Forbidden => self.index_b.clone(),
            PartitionTag::Missing => {
                let mut m = Vec::with_capacity(self.index_r.len() + self.index_b.len());
                m.extend_from_slice(&self.index_r);
                m.extend_from_slice(&self.index_b);
                m.sort_unstable();
                m
            }
        }
    }

    pub fn index_known(&self) -> &[usize] {
        &self.index_k
    }

    pub fn index_reconstructable(&self) -> &[usize] {
        &self.index_r
    }

    pub fn index_forbidden(&self) -> &[usize] {
        &self.index_b
    }

    /// Known-record indices whose true attribute equals `s`.
    pub fn group_known(&self, s: u8) -> Result<&[usize]> {
        check_group(s)?;
        Ok(&self.group_k[s as usize])
    }

    /// True attribute per user, recovered from Known records.
    ///
    /// Fails if any user has no Known record (the truth is unavailable) or
    /// carries conflicting attributes across records.
    pub fn user_attrs(&self) -> Result<Vec<u8>> {
        let mut attrs: Vec<Option<u8>> = vec![None; self.n_users as usize];
        for &i in &self.index_k {
            let rec = &self.records[i];
            let s = match rec.status {
                AttrStatus::Known(s) => s,
                _ => unreachable!(),
            };
            match attrs[rec.user as usize] {
                None => attrs[rec.user as usize] = Some(s),
                Some(prev) if prev != s => {
                    return Err(Error::Integrity(format!(
                        "user {} has conflicting attributes {prev} and {s}",
                        rec.user
                    )));
                }
                _ => {}
            }
        }
        attrs
            .into_iter()
            .enumerate()
            .map(|(u, a)| {
                a.ok_or_else(|| {
                    Error::Integrity(format!("user {u} has no record with a known attribute"))
                })
            })
            .collect()
    }
}

fn check_group(s: u8) -> Result<()> {
    if s > 1 {
        Err(Error::Usage(format!("group must be 0 or 1, got {s}")))
    } else {
        Ok(())
    }
}

/// Reconstructed (or otherwise imputed) attribute for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconAttr {
    pub attr: u8,
    /// Classifier confidence in [0, 1]; 0.5 for coin-flip imputations.
    pub confidence: f64,
}

/// A [`PartitionedDataset`] plus reconstructed attributes covering exactly
/// the missing records. Known records are never altered.
#[derive(Debug, Clone)]
pub struct ReconstructedDataset {
    ds: PartitionedDataset,
    // Aligned with ds.records(): Some exactly on missing indices.
    recon: Vec<Option<ReconAttr>>,
}

impl ReconstructedDataset {
    /// Builds the overlay from a per-user attribute map. Every missing
    /// record's user must be covered; per-user assignment guarantees records
    /// of one user always agree.
    pub fn from_user_attrs(
        ds: PartitionedDataset,
        user_recon: &[Option<ReconAttr>],
    ) -> Result<Self> {
        if user_recon.len() != ds.n_users() as usize {
            return Err(Error::Usage(format!(
                "reconstruction map covers {} users, dataset has {}",
                user_recon.len(),
                ds.n_users()
            )));
        }
        let mut recon = vec![None; ds.len()];
        for idx in ds.partition(PartitionTag::Missing) {
            let user = ds.records()[idx].user as usize;
            let attr = user_recon[user].ok_or_else(|| {
                Error::Integrity(format!("user {user} is missing from the reconstruction map"))
            })?;
            if attr.attr > 1 {
                return Err(Error::Integrity(format!(
                    "reconstructed attribute {} for user {user} is not a valid group",
                    attr.attr
                )));
            }
            if !(0.0..=1.0).contains(&attr.confidence) {
                return Err(Error::Integrity(format!(
                    "confidence {} for user {user} outside [0, 1]",
                    attr.confidence
                )));
            }
            recon[idx] = Some(attr);
        }
        Ok(Self { ds, recon })
    }

    pub fn dataset(&self) -> &PartitionedDataset {
        &self.ds
    }

    /// Reconstructed attribute of a record, if the record is missing.
    pub fn recon_attr(&self, idx: usize) -> Option<ReconAttr> {
        self.recon.get(idx).copied().flatten()
    }

    /// The attribute used for grouping: true where known, reconstructed
    /// where missing.
    pub fn effective_attr(&self, idx: usize) -> u8 {
        match self.ds.records()[idx].status {
            AttrStatus::Known(s) => s,
            _ => self.recon[idx].expect("missing record lacks reconstruction").attr,
        }
    }

    /// Indices of records in `tag`'s partition whose (true or reconstructed)
    /// attribute equals `s`. Pure; ascending record order.
    pub fn group_subset(&self, tag: PartitionTag, s: u8) -> Result<Vec<usize>> {
        check_group(s)?;
        Ok(self
            .ds
            .partition(tag)
            .into_iter()
            .filter(|&i| self.effective_attr(i) == s)
            .collect())
    }

    /// Replaces the reconstructed attribute of every record of `user`.
    /// Known records are untouchable by construction (the overlay only
    /// covers missing indices, and this refuses users with no missing
    /// records).
    pub fn override_user(&mut self, user: u32, attr: ReconAttr) -> Result<()> {
        let mut hit = false;
        for idx in 0..self.ds.len() {
            if self.ds.records()[idx].user == user && self.recon[idx].is_some() {
                self.recon[idx] = Some(attr);
                hit = true;
            }
        }
        if hit {
            Ok(())
        } else {
            Err(Error::Usage(format!("user {user} has no missing records to override")))
        }
    }
}

/// Train/validation/test views over a shared user and item index space.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: PartitionedDataset,
    pub validation: PartitionedDataset,
    pub test: PartitionedDataset,
}

impl SplitDataset {
    pub fn n_users(&self) -> u32 {
        self.train.n_users()
    }

    pub fn n_items(&self) -> u32 {
        self.train.n_items()
    }
}
