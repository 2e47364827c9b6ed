//! Deterministic global record split into train/validation/test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{PartitionedDataset, SplitDataset};
use crate::error::{Error, Result};

/// Target fractions for the three partitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in
            [("train", self.train), ("validation", self.validation), ("test", self.test)]
        {
            if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                return Err(Error::Config(format!("split ratio `{name}` = {r} outside [0, 1]")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, validation: 0.15, test: 0.15 }
    }
}

/// Partition sizes by the largest-remainder rule: each partition gets the
/// floor of its target, and leftover records go to the partitions with the
/// largest fractional parts (ties broken in train, validation, test order).
fn largest_remainder_counts(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let targets = [ratios.train, ratios.validation, ratios.test].map(|r| r * n as f64);
    let mut counts = targets.map(|t| t.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Sort by descending fractional part; stable sort keeps the documented
    // train > validation > test priority on ties.
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap()
    });
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    counts
}

/// Splits records globally (not per user) with a seeded shuffle. Records
/// within each partition keep their original dataset order, so the output is
/// a pure function of `(dataset, ratios, seed)`.
pub fn split(ds: &PartitionedDataset, ratios: &SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    if ds.is_empty() {
        return Err(Error::Degenerate("cannot split an empty dataset".into()));
    }
    let n = ds.len();
    let counts = largest_remainder_counts(n, ratios);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let make_part = |idx: &[usize]| -> Result<PartitionedDataset> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let records = sorted.iter().map(|&i| ds.records()[i]).collect();
        PartitionedDataset::new(records, ds.n_users(), ds.n_items())
    };

    let train = make_part(&order[..counts[0]])?;
    let validation = make_part(&order[counts[0]..counts[0] + counts[1]])?;
    let test = make_part(&order[counts[0] + counts[1]..])?;
    Ok(SplitDataset { train, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrStatus, InteractionRecord};

    fn dataset(n: usize) -> PartitionedDataset {
        let records = (0..n)
            .map(|i| InteractionRecord {
                user: i as u32,
                item: 0,
                rating: (i % 2) as u8,
                status: AttrStatus::Known(0),
            })
            .collect();
        PartitionedDataset::new(records, n as u32, 1).unwrap()
    }

    #[test]
    fn ten_records_split_seven_two_one() {
        // floors are (7, 1, 1); the leftover goes to validation because the
        // validation/test fractional parts tie at 0.5 and validation comes
        // first in the priority order.
        let counts = largest_remainder_counts(10, &SplitRatios::default());
        assert_eq!(counts, [7, 2, 1]);
    }

    #[test]
    fn counts_are_exhaustive_and_proportional() {
        for n in [1usize, 3, 10, 97, 1000] {
            let counts = largest_remainder_counts(n, &SplitRatios::default());
            assert_eq!(counts.iter().sum::<usize>(), n);
            assert!((counts[0] as f64 - 0.7 * n as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = dataset(50);
        let a = split(&ds, &SplitRatios::default(), 7).unwrap();
        let b = split(&ds, &SplitRatios::default(), 7).unwrap();
        let users = |p: &PartitionedDataset| -> Vec<u32> {
            p.records().iter().map(|r| r.user).collect()
        };
        assert_eq!(users(&a.train), users(&b.train));
        assert_eq!(users(&a.test), users(&b.test));

        let mut all: Vec<u32> =
            [&a.train, &a.validation, &a.test].iter().flat_map(|p| users(p)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<u32>>());

        let c = split(&ds, &SplitRatios::default(), 8).unwrap();
        assert_ne!(users(&a.train), users(&c.train), "different seed should reshuffle");
    }

    #[test]
    fn bad_ratios_are_config_errors() {
        let ds = dataset(10);
        let bad = SplitRatios { train: 0.7, validation: 0.2, test: 0.2 };
        assert!(matches!(split(&ds, &bad, 0), Err(Error::Config(_))));
        let neg = SplitRatios { train: 1.2, validation: -0.1, test: -0.1 };
        assert!(matches!(split(&ds, &neg, 0), Err(Error::Config(_))));
    }
}
