//! Fairness and accuracy metrics over model predictions.
//!
//! All functions are pure over prediction/label slices; assembling the right
//! slices (which records, whose attributes) is the caller's job. Demographic
//! parity is measured as the mean absolute difference (MAD) between group
//! prediction averages.

use crate::error::{Error, Result};

/// Mean prediction of the records selected by `indices`.
pub fn group_expectation(preds: &[f64], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Metric("group expectation over an empty group".into()));
    }
    let mut sum = 0.0;
    for &i in indices {
        let p = *preds.get(i).ok_or_else(|| {
            Error::Usage(format!("record index {i} out of range ({} predictions)", preds.len()))
        })?;
        sum += p;
    }
    Ok(sum / indices.len() as f64)
}

/// Demographic parity as mean absolute difference of group averages:
/// `|mean(preds over group 0) - mean(preds over group 1)|`.
pub fn mad(preds: &[f64], group0: &[usize], group1: &[usize]) -> Result<f64> {
    if group0.is_empty() || group1.is_empty() {
        return Err(Error::Metric("demographic parity needs both groups non-empty".into()));
    }
    Ok((group_expectation(preds, group0)? - group_expectation(preds, group1)?).abs())
}

/// Root mean squared error between predictions and binary labels.
pub fn rmse(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Metric("RMSE over an empty set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::Usage(format!(
            "prediction/label length mismatch: {} vs {}",
            preds.len(),
            labels.len()
        )));
    }
    let mut sum = 0.0;
    for (p, y) in preds.iter().zip(labels) {
        let d = p - y;
        sum += d * d;
    }
    Ok((sum / preds.len() as f64).sqrt())
}

/// Record counts of one group across the known / reconstructable / forbidden
/// partitions, with the derived mixture weights.
///
/// Weights are quotients of integer counts over the same integer total, so
/// they sum to 1 up to two ulps at worst; the counts themselves are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupWeights {
    pub n_known: u64,
    pub n_recon: u64,
    pub n_forbidden: u64,
}

impl GroupWeights {
    pub fn new(n_known: u64, n_recon: u64, n_forbidden: u64) -> Result<Self> {
        if n_known + n_recon + n_forbidden == 0 {
            return Err(Error::Degenerate("group has no records in any partition".into()));
        }
        Ok(Self { n_known, n_recon, n_forbidden })
    }

    pub fn total(&self) -> u64 {
        self.n_known + self.n_recon + self.n_forbidden
    }

    pub fn eta_known(&self) -> f64 {
        self.n_known as f64 / self.total() as f64
    }

    pub fn eta_recon(&self) -> f64 {
        self.n_recon as f64 / self.total() as f64
    }

    pub fn eta_forbidden(&self) -> f64 {
        self.n_forbidden as f64 / self.total() as f64
    }
}

/// Per-group deviation of mean prediction from the global mean prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDeviation {
    pub group: u8,
    /// Whether the group's attributes were known during training.
    pub known: bool,
    pub count: usize,
    /// Signed `mean(group) - mean(all)`.
    pub deviation: f64,
}

/// Deviations of each (group, known/unknown) cell from the global mean.
///
/// `cells` maps a label to the record indices of that cell; cells with no
/// records are skipped (they carry no deviation).
pub fn group_deviation_report(
    preds: &[f64],
    cells: &[(u8, bool, Vec<usize>)],
) -> Result<Vec<GroupDeviation>> {
    if preds.is_empty() {
        return Err(Error::Metric("deviation report over an empty prediction set".into()));
    }
    let global = preds.iter().sum::<f64>() / preds.len() as f64;
    let mut out = Vec::new();
    for (group, known, indices) in cells {
        if indices.is_empty() {
            continue;
        }
        let mean = group_expectation(preds, indices)?;
        out.push(GroupDeviation {
            group: *group,
            known: *known,
            count: indices.len(),
            deviation: mean - global,
        });
    }
    Ok(out)
}

/// Evaluation summary for one trained model on one partition.
#[derive(Debug, Clone)]
pub struct FairnessReport {
    pub dp: f64,
    pub rmse: f64,
    pub deviations: Vec<GroupDeviation>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mad_of_group_means() {
        // Two singleton groups carrying the group means directly.
        let preds = [0.5866, 0.5661];
        let dp = mad(&preds, &[0], &[1]).unwrap();
        assert_abs_diff_eq!(dp, 0.0205, epsilon = 1e-12);
    }

    #[test]
    fn mad_is_symmetric_under_relabeling() {
        let preds = [0.3, 0.8, 0.1, 0.9];
        let a = mad(&preds, &[0, 1], &[2, 3]).unwrap();
        let b = mad(&preds, &[2, 3], &[0, 1]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mad_empty_group_is_metric_error() {
        assert!(matches!(mad(&[0.5], &[], &[0]), Err(Error::Metric(_))));
    }

    #[test]
    fn rmse_example() {
        let r = rmse(&[0.2, 0.9], &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(r, 0.15811388300841897, epsilon = 1e-15);
    }

    #[test]
    fn rmse_empty_or_mismatched() {
        assert!(matches!(rmse(&[], &[]), Err(Error::Metric(_))));
        assert!(matches!(rmse(&[0.1], &[0.1, 0.2]), Err(Error::Usage(_))));
    }

    #[test]
    fn group_expectation_union_is_weighted_mean_of_parts() {
        let preds: Vec<f64> = (0..10).map(|i| (i as f64) * 0.07 + 0.1).collect();
        let a: Vec<usize> = vec![0, 2, 3];
        let b: Vec<usize> = vec![1, 4, 5, 6, 7, 8, 9];
        let union: Vec<usize> = (0..10).collect();
        let ea = group_expectation(&preds, &a).unwrap();
        let eb = group_expectation(&preds, &b).unwrap();
        let eu = group_expectation(&preds, &union).unwrap();
        let weighted = (a.len() as f64 * ea + b.len() as f64 * eb) / 10.0;
        assert_abs_diff_eq!(eu, weighted, epsilon = 1e-12);
    }

    #[test]
    fn group_expectation_empty_is_error() {
        assert!(matches!(group_expectation(&[0.1], &[]), Err(Error::Metric(_))));
    }

    #[test]
    fn eta_weights_sum_to_one() {
        let w = GroupWeights::new(3, 5, 2).unwrap();
        assert_eq!(w.total(), 10);
        assert_abs_diff_eq!(
            w.eta_known() + w.eta_recon() + w.eta_forbidden(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(w.eta_known(), 0.3, epsilon = 1e-15);
        // Two-partition case: forbidden empty.
        let w = GroupWeights::new(40, 60, 0).unwrap();
        assert_abs_diff_eq!(w.eta_known(), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(w.eta_recon(), 0.6, epsilon = 1e-15);
        assert_eq!(w.eta_forbidden(), 0.0);
    }

    #[test]
    fn eta_weights_empty_group_is_degenerate() {
        assert!(matches!(GroupWeights::new(0, 0, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn deviation_report_two_groups() {
        let preds = [0.4, 0.6];
        let cells = vec![(0u8, true, vec![0usize]), (1u8, true, vec![1usize])];
        let report = group_deviation_report(&preds, &cells).unwrap();
        assert_eq!(report.len(), 2);
        assert_abs_diff_eq!(report[0].deviation, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(report[1].deviation, 0.1, epsilon = 1e-12);
        assert_eq!(report[0].count, 1);
    }

    #[test]
    fn deviation_report_skips_empty_cells() {
        let preds = [0.4, 0.6];
        let cells = vec![(0u8, true, vec![0usize, 1]), (1u8, false, vec![])];
        let report = group_deviation_report(&preds, &cells).unwrap();
        assert_eq!(report.len(), 1);
        assert_abs_diff_eq!(report[0].deviation, 0.0, epsilon = 1e-15);
    }
}
