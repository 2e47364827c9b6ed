//! Attribute masking: simulates partial knowledge of sensitive attributes.
//!
//! A mask plan keeps an exact-count sample of users "known" and hides the
//! rest, optionally marking a sub-sample of the hidden users as forbidding
//! reconstruction entirely. Assignment is per user, so all of a user's
//! records agree, and it applies to the train and validation partitions
//! only -- at evaluation time every attribute is accessible, so the test
//! partition keeps its ground truth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AttrStatus, InteractionRecord, PartitionedDataset, SplitDataset};
use crate::error::{Error, Result};

/// How much attribute knowledge survives, and who refuses reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskPlan {
    /// Fraction of users whose attribute stays known (exact count, rounded
    /// half away from zero).
    pub retention: f64,
    /// Fraction of the *masked* users that forbid reconstruction.
    pub forbid_fraction: f64,
    pub seed: u64,
}

/// Per-user masking outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserMaskStatus {
    Known,
    Reconstructable,
    Forbidden,
}

/// The user-level assignment behind a masked split; needed downstream for
/// reconstruction (who to predict) and reporting (known/unknown cells).
#[derive(Debug, Clone)]
pub struct UserMask {
    statuses: Vec<UserMaskStatus>,
}

impl UserMask {
    pub fn status(&self, user: u32) -> UserMaskStatus {
        self.statuses[user as usize]
    }

    pub fn statuses(&self) -> &[UserMaskStatus] {
        &self.statuses
    }

    pub fn users_with(&self, status: UserMaskStatus) -> Vec<u32> {
        (0..self.statuses.len() as u32).filter(|&u| self.status(u) == status).collect()
    }
}

fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

/// Applies a mask plan to a fully known split.
///
/// Fails if the split was masked before (masking is not idempotent and
/// stacking plans is almost certainly a mistake) or if the plan's fractions
/// are out of range.
pub fn apply_mask_plan(
    split: &SplitDataset,
    plan: &MaskPlan,
) -> Result<(SplitDataset, UserMask)> {
    for f in [plan.retention, plan.forbid_fraction] {
        if !(0.0..=1.0).contains(&f) || !f.is_finite() {
            return Err(Error::Config(format!("mask fraction {f} outside [0, 1]")));
        }
    }
    for part in [&split.train, &split.validation, &split.test] {
        if part.len() != part.index_known().len() {
            return Err(Error::Usage(
                "mask plan applied to an already masked split".into(),
            ));
        }
    }

    let n_users = split.n_users() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut users: Vec<u32> = (0..n_users as u32).collect();
    users.shuffle(&mut rng);

    let n_keep = round_half_away(plan.retention * n_users as f64);
    let n_masked = n_users - n_keep;
    let n_forbid = round_half_away(plan.forbid_fraction * n_masked as f64);

    let mut statuses = vec![UserMaskStatus::Known; n_users];
    for &u in &users[n_keep..] {
        statuses[u as usize] = UserMaskStatus::Reconstructable;
    }
    // The forbidden sub-sample is drawn from the masked tail of the same
    // shuffle, so it is a sub-sample of the masked users by construction.
    for &u in &users[n_keep..n_keep + n_forbid] {
        statuses[u as usize] = UserMaskStatus::Forbidden;
    }

    let mask_records = |part: &PartitionedDataset| -> Result<PartitionedDataset> {
        let records: Vec<InteractionRecord> = part
            .records()
            .iter()
            .map(|rec| {
                let status = match statuses[rec.user as usize] {
                    UserMaskStatus::Known => rec.status,
                    UserMaskStatus::Reconstructable => AttrStatus::MissingReconstructable,
                    UserMaskStatus::Forbidden => AttrStatus::MissingForbidden,
                };
                InteractionRecord { status, ..*rec }
            })
            .collect();
        PartitionedDataset::new(records, part.n_users(), part.n_items())
    };

    let masked = SplitDataset {
        train: mask_records(&split.train)?,
        validation: mask_records(&split.validation)?,
        test: split.test.clone(),
    };
    Ok((masked, UserMask { statuses }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PartitionTag;
    use crate::ingest::split::{split, SplitRatios};

    fn known_split(n_users: usize) -> SplitDataset {
        let records = (0..n_users * 2)
            .map(|i| InteractionRecord {
                user: (i / 2) as u32,
                item: (i % 2) as u32,
                rating: (i % 2) as u8,
                status: AttrStatus::Known((i / 2 % 2) as u8),
            })
            .collect();
        let ds = PartitionedDataset::new(records, n_users as u32, 2).unwrap();
        split(&ds, &SplitRatios::default(), 11).unwrap()
    }

    #[test]
    fn exact_known_count() {
        let sd = known_split(1000);
        let (_, mask) = apply_mask_plan(
            &sd,
            &MaskPlan { retention: 0.3, forbid_fraction: 0.0, seed: 3 },
        )
        .unwrap();
        let known = mask.users_with(UserMaskStatus::Known);
        assert_eq!(known.len(), 300);
        assert_eq!(mask.users_with(UserMaskStatus::Forbidden).len(), 0);
    }

    #[test]
    fn forbidden_is_subsample_of_masked() {
        let sd = known_split(200);
        let (_, mask) = apply_mask_plan(
            &sd,
            &MaskPlan { retention: 0.5, forbid_fraction: 0.25, seed: 5 },
        )
        .unwrap();
        assert_eq!(mask.users_with(UserMaskStatus::Known).len(), 100);
        assert_eq!(mask.users_with(UserMaskStatus::Forbidden).len(), 25);
        assert_eq!(mask.users_with(UserMaskStatus::Reconstructable).len(), 75);
    }

    #[test]
    fn per_user_consistency_across_partitions() {
        let sd = known_split(100);
        let (masked, mask) = apply_mask_plan(
            &sd,
            &MaskPlan { retention: 0.4, forbid_fraction: 0.5, seed: 9 },
        )
        .unwrap();
        for part in [&masked.train, &masked.validation] {
            for rec in part.records() {
                let expected = match mask.status(rec.user) {
                    UserMaskStatus::Known => matches!(rec.status, AttrStatus::Known(_)),
                    UserMaskStatus::Reconstructable => {
                        rec.status == AttrStatus::MissingReconstructable
                    }
                    UserMaskStatus::Forbidden => rec.status == AttrStatus::MissingForbidden,
                };
                assert!(expected, "record status disagrees with user mask");
            }
        }
    }

    #[test]
    fn test_partition_stays_fully_known() {
        let sd = known_split(100);
        let (masked, _) = apply_mask_plan(
            &sd,
            &MaskPlan { retention: 0.1, forbid_fraction: 1.0, seed: 2 },
        )
        .unwrap();
        assert_eq!(masked.test.partition(PartitionTag::Missing), Vec::<usize>::new());
        assert_eq!(masked.test.len(), masked.test.index_known().len());
    }

    #[test]
    fn remasking_is_a_usage_error() {
        let sd = known_split(50);
        let plan = MaskPlan { retention: 0.5, forbid_fraction: 0.0, seed: 1 };
        let (masked, _) = apply_mask_plan(&sd, &plan).unwrap();
        assert!(matches!(apply_mask_plan(&masked, &plan), Err(Error::Usage(_))));
    }

    #[test]
    fn out_of_range_fractions_are_config_errors() {
        let sd = known_split(10);
        assert!(matches!(
            apply_mask_plan(&sd, &MaskPlan { retention: 1.2, forbid_fraction: 0.0, seed: 0 }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn full_retention_changes_nothing() {
        let sd = known_split(50);
        let (masked, mask) = apply_mask_plan(
            &sd,
            &MaskPlan { retention: 1.0, forbid_fraction: 0.7, seed: 4 },
        )
        .unwrap();
        assert_eq!(mask.users_with(UserMaskStatus::Known).len(), 50);
        assert_eq!(masked.train.index_known().len(), masked.train.len());
    }
}
