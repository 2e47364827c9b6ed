//! Dataset ingestion: raw-file parsing, k-core filtering, binarization,
//! splitting, attribute masking, the canonical on-disk dataset format, and
//! synthetic dataset generation.
//!
//! The standard pipeline is
//! `parse -> k-core -> binarize -> canonical file -> split -> mask`,
//! where masking is an experiment-protocol step (it simulates partial
//! attribute knowledge) rather than a property of the dataset itself, so the
//! canonical file produced by ingestion carries fully known attributes.

mod canonical;
mod kcore;
mod mask;
mod movielens;
mod split;
mod synthetic;

pub use canonical::{read_canonical, read_canonical_file, write_canonical, write_canonical_file};
pub use kcore::k_core_filter;
pub use mask::{apply_mask_plan, MaskPlan, UserMask, UserMaskStatus};
pub use movielens::{parse_movielens, parse_movielens_files, RawDataset, RawInteraction};
pub use split::{split, SplitRatios};
pub use synthetic::{generate_synthetic, synthetic_preset, SyntheticSpec};

use crate::data::{AttrStatus, InteractionRecord, PartitionedDataset};
use crate::error::Result;

/// Binarizes raw 1-5 star ratings: strictly greater than `threshold` becomes
/// a positive interaction, everything else (including the threshold itself)
/// a negative one. Attributes come in fully known at this stage.
pub fn binarize(raw: &RawDataset, threshold: u8) -> Result<PartitionedDataset> {
    let records = raw
        .interactions
        .iter()
        .map(|it| InteractionRecord {
            user: it.user,
            item: it.item,
            rating: u8::from(it.rating > threshold),
            status: AttrStatus::Known(raw.user_attr[it.user as usize]),
        })
        .collect();
    PartitionedDataset::new(records, raw.n_users, raw.n_items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_threshold_is_strict() {
        let raw = RawDataset {
            n_users: 1,
            n_items: 3,
            user_attr: vec![1],
            interactions: vec![
                RawInteraction { user: 0, item: 0, rating: 3 },
                RawInteraction { user: 0, item: 1, rating: 4 },
                RawInteraction { user: 0, item: 2, rating: 1 },
            ],
        };
        let ds = binarize(&raw, 3).unwrap();
        let ratings: Vec<u8> = ds.records().iter().map(|r| r.rating).collect();
        // Rating 3 is *not* above the threshold: it stays a retained negative.
        assert_eq!(ratings, vec![0, 1, 0]);
        assert_eq!(ds.records()[0].status, AttrStatus::Known(1));
    }
}
