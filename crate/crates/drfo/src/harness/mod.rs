//! Experiment orchestration: configuration, deterministic seed derivation,
//! checkpoint selection, sweep drivers and report emission.
//!
//! A *sweep* is a grid of cells.  Each cell is one (method, scenario,
//! replicate) triple: a scenario fixes the disclosure conditions (attribute
//! retention, injected label noise, share of users who forbid inference) and
//! a replicate fixes every random choice made along the way.  All methods
//! inside a scenario see bit-identical data artifacts -- same mask, same
//! reconstruction, same redrawn attributes -- so cross-method comparisons are
//! paired.  Methods whose outcome cannot depend on the disclosure scenario
//! (the plain trainer and the fully-disclosed reference) are computed once
//! per replicate and copied across scenario columns.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{
    DatasetSection, EvaluateSection, ExperimentConfig, GatedSection, MaskSection,
    PretrainSection, ReconSection, SelectSection, SplitSection, SweepKind, SweepSection,
    TrainSection,
};
pub use report::{read_report, write_manifest, write_report, write_wide_report, CellMetrics, CellRow};
pub use sweep::{run_sweep, Scenario, SweepOutcome};

use crate::dro::Snapshot;
use crate::{Error, Result};

/// Training methods the sweep drivers know how to run.
///
/// Names describe the fairness information each variant consumes:
/// * `basic` -- accuracy-only fine-tuning, no fairness term.
/// * `oracle` -- fairness terms from fully disclosed attributes (reference
///   upper bound; only valid when nothing is masked).
/// * `reg-known` -- fairness terms over disclosed users only.
/// * `static` -- disclosed plus reconstructed attributes, trusted as-is.
/// * `gated` -- like `static`, but low-confidence reconstructions are
///   resampled from a confident-neighbour prior before use.
/// * `robust` -- disclosed plus reconstructed attributes with an adversarial
///   reweighting of the reconstructed (and inference-forbidden) portion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Basic,
    Oracle,
    RegKnown,
    Static,
    Gated,
    Robust,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Basic,
        Method::Oracle,
        Method::RegKnown,
        Method::Static,
        Method::Gated,
        Method::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Basic => "basic",
            Method::Oracle => "oracle",
            Method::RegKnown => "reg-known",
            Method::Static => "static",
            Method::Gated => "gated",
            Method::Robust => "robust",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        for m in Method::ALL {
            if m.name() == name {
                return Ok(m);
            }
        }
        Err(Error::Config(format!(
            "unknown method {name:?}; expected one of basic, oracle, reg-known, static, gated, robust"
        )))
    }

    /// Methods that ignore the disclosure scenario entirely.  Their cells are
    /// computed once per replicate and reused across scenario columns.
    pub fn scenario_independent(self) -> bool {
        matches!(self, Method::Basic | Method::Oracle)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// 64-bit FNV-1a over a byte string.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates structured inputs.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a stream seed from a base seed and a purpose label.
///
/// Every random decision in a sweep draws its seed through this function, so
/// two cells agree on an artifact exactly when they agree on the label string
/// that produced it.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    splitmix64(base ^ fnv1a64(label.as_bytes()))
}

/// Outcome of checkpoint selection over a training trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Index into the snapshot list.
    pub index: usize,
    /// Training iteration the snapshot was taken at.
    pub iteration: usize,
    pub val_rmse: f64,
    pub val_dp: f64,
    /// Whether the accuracy budget held.  `false` means no snapshot met the
    /// budget and the most accurate one was returned instead.
    pub qualified: bool,
}

fn check_snapshots(snapshots: &[Snapshot]) -> Result<()> {
    if snapshots.is_empty() {
        return Err(Error::Usage("checkpoint selection over an empty trajectory".into()));
    }
    for s in snapshots {
        if !s.val_rmse.is_finite() || !s.val_dp.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite validation metrics at iteration {}",
                s.iteration
            )));
        }
    }
    Ok(())
}

/// Picks the snapshot with the smallest validation disparity among those whose
/// validation RMSE stays within `baseline_rmse / budget`.
///
/// Ties fall back to lower RMSE, then to the earlier iteration.  When no
/// snapshot meets the budget the most accurate one is returned with
/// `qualified = false` so callers can surface the failure instead of silently
/// reporting an unfair-but-accurate or fair-but-useless model.
pub fn select_model(snapshots: &[Snapshot], baseline_rmse: f64, budget: f64) -> Result<Selection> {
    check_snapshots(snapshots)?;
    if !(baseline_rmse.is_finite() && baseline_rmse > 0.0) {
        return Err(Error::Usage(format!("baseline RMSE must be positive, got {baseline_rmse}")));
    }
    if !(budget.is_finite() && budget > 0.0 && budget <= 1.0) {
        return Err(Error::Config(format!("accuracy budget must lie in (0, 1], got {budget}")));
    }
    let threshold = baseline_rmse / budget;
    let mut best: Option<(usize, &Snapshot)> = None;
    for (i, s) in snapshots.iter().enumerate() {
        if s.val_rmse > threshold {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                (s.val_dp, s.val_rmse, s.iteration) < (b.val_dp, b.val_rmse, b.iteration)
            }
        };
        if better {
            best = Some((i, s));
        }
    }
    if let Some((index, s)) = best {
        return Ok(Selection {
            index,
            iteration: s.iteration,
            val_rmse: s.val_rmse,
            val_dp: s.val_dp,
            qualified: true,
        });
    }
    let fallback = select_min_rmse(snapshots)?;
    Ok(Selection { qualified: false, ..fallback })
}

/// Picks the snapshot with the smallest validation RMSE (earlier iteration on
/// ties).  Used for the accuracy-only method and as the budget fallback.
pub fn select_min_rmse(snapshots: &[Snapshot]) -> Result<Selection> {
    check_snapshots(snapshots)?;
    let mut index = 0;
    for (i, s) in snapshots.iter().enumerate().skip(1) {
        let b = &snapshots[index];
        if (s.val_rmse, s.iteration) < (b.val_rmse, b.iteration) {
            index = i;
        }
    }
    let s = &snapshots[index];
    Ok(Selection {
        index,
        iteration: s.iteration,
        val_rmse: s.val_rmse,
        val_dp: s.val_dp,
        qualified: true,
    })
}
