//! Sensitive-attribute reconstruction from interaction histories.
//!
//! Users who declined to disclose their group still leave an interaction
//! trail. A logistic classifier over item-indicator features (which items a
//! user touched in the training partition) predicts the attribute of every
//! user; a held-out slice of the disclosed users measures how often the
//! classifier is wrong per true group. That per-group error rate is exactly
//! the distribution-shift radius the robust trainer needs: if the classifier
//! mislabels a fraction rho of group `s`, the true group-`s` interaction
//! distribution lies within total-variation distance rho of the one induced
//! by the predicted labels.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AttrStatus, PartitionedDataset, ReconAttr};
use crate::error::{Error, Result};
use crate::mf::squash;

/// Gradient-descent settings for the logistic fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// L2 penalty on the item weights (the intercept is unpenalized),
    /// applied as `reg / (2n) * ||w||^2` alongside the mean log loss.
    pub reg: f64,
    /// Stop when the gradient norm drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { reg: 1.0, tol: 1e-6, max_iters: 5000 }
    }
}

/// L2-regularized logistic regression over item-indicator features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrClassifier {
    weights: Vec<f64>,
    intercept: f64,
}

impl AttrClassifier {
    pub fn from_parts(weights: Vec<f64>, intercept: f64) -> Self {
        Self { weights, intercept }
    }

    /// Fits by plain gradient descent from a zero initialization. The step
    /// size comes from a Frobenius bound on the logistic Hessian (counting
    /// the intercept column), which guarantees monotone descent, so the fit
    /// is fully deterministic. Stops at `tol` on the gradient norm or at
    /// `max_iters`, whichever comes first.
    pub fn fit(
        rows: &[&[u32]],
        labels: &[u8],
        n_items: u32,
        cfg: &ClassifierConfig,
    ) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::Usage(format!(
                "classifier fit needs matching non-empty rows and labels, got {} and {}",
                rows.len(),
                labels.len()
            )));
        }
        if cfg.reg < 0.0 || cfg.tol <= 0.0 || cfg.max_iters == 0 {
            return Err(Error::Config("classifier settings out of range".into()));
        }
        let d = n_items as usize;
        for row in rows {
            if let Some(&v) = row.iter().find(|&&v| v as usize >= d) {
                return Err(Error::Integrity(format!("feature item {v} out of range")));
            }
        }
        for &y in labels {
            if y > 1 {
                return Err(Error::Usage(format!("label {y} is not a binary group")));
            }
        }

        let n = rows.len() as f64;
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let lr = 1.0 / ((nnz as f64 + n) / (4.0 * n) + cfg.reg);

        let mut w = vec![0.0f64; d];
        let mut b = 0.0f64;
        let mut grad = vec![0.0f64; d];
        for iter in 0..cfg.max_iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, &y) in rows.iter().zip(labels) {
                let z: f64 = row.iter().map(|&v| w[v as usize]).sum::<f64>() + b;
                let err = squash(z) - y as f64;
                for &v in *row {
                    grad[v as usize] += err;
                }
                grad_b += err;
            }
            let mut norm_sq = 0.0;
            for (g, &wi) in grad.iter_mut().zip(&w) {
                *g = *g / n + cfg.reg / n * wi;
                norm_sq += *g * *g;
            }
            grad_b /= n;
            norm_sq += grad_b * grad_b;
            if !norm_sq.is_finite() {
                return Err(Error::Numerical(format!(
                    "classifier gradient is non-finite at iteration {iter}"
                )));
            }
            if norm_sq.sqrt() <= cfg.tol {
                break;
            }
            for (wi, &g) in w.iter_mut().zip(&grad) {
                *wi -= lr * g;
            }
            b -= lr * grad_b;
        }
        Ok(Self { weights: w, intercept: b })
    }

    /// Probability that a user with this item set belongs to group 1.
    pub fn predict_proba(&self, items: &[u32]) -> f64 {
        let z: f64 = items.iter().map(|&v| self.weights[v as usize]).sum::<f64>() + self.intercept;
        squash(z)
    }

    /// Hard label plus confidence. Exactly 0.5 resolves to group 0, so an
    /// uninformative classifier degrades to a constant rather than a
    /// platform-dependent tie-break.
    pub fn predict(&self, items: &[u32]) -> ReconAttr {
        let p1 = self.predict_proba(items);
        let attr = u8::from(p1 > 0.5);
        ReconAttr { attr, confidence: p1.max(1.0 - p1) }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}

/// Per-user deduplicated, ascending item lists from a dataset's records.
pub fn user_item_lists(ds: &PartitionedDataset) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); ds.n_users() as usize];
    for rec in ds.records() {
        lists[rec.user as usize].push(rec.item);
    }
    for list in &mut lists {
        list.sort_unstable();
        list.dedup();
    }
    lists
}

/// Per-user status derived from a dataset's records. `None` for users with
/// no records here; conflicting per-record statuses are an integrity error.
pub fn user_statuses(ds: &PartitionedDataset) -> Result<Vec<Option<AttrStatus>>> {
    let mut statuses: Vec<Option<AttrStatus>> = vec![None; ds.n_users() as usize];
    for rec in ds.records() {
        let slot = &mut statuses[rec.user as usize];
        match slot {
            None => *slot = Some(rec.status),
            Some(prev) if *prev != rec.status => {
                return Err(Error::Integrity(format!(
                    "user {} mixes statuses {} and {}",
                    rec.user,
                    prev.tag(),
                    rec.status.tag()
                )));
            }
            _ => {}
        }
    }
    Ok(statuses)
}

/// Reconstruction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// Fraction of disclosed users held out for the error-rate estimate.
    pub holdout_fraction: f64,
    pub seed: u64,
    pub classifier: ClassifierConfig,
    /// Weight each held-out user by their interaction count when estimating
    /// error rates. The robust radius bounds a shift of the *interaction*
    /// distribution, so a heavy user mislabeled moves it further than a
    /// light one.
    pub interaction_weighted: bool,
    /// Added to each estimated rate, then clamped into [0, 1]. Buys slack
    /// against holdout sampling noise at the cost of a looser bound.
    pub safety_margin: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            seed: 0,
            classifier: ClassifierConfig::default(),
            interaction_weighted: false,
            safety_margin: 0.0,
        }
    }
}

/// Everything downstream stages need from a reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconOutcome {
    /// Indexed by user; covers every user in the dataset.
    pub user_attrs: Vec<Option<ReconAttr>>,
    /// Estimated misclassification rate per true group.
    pub rho: [f64; 2],
    /// Plain (unweighted) holdout accuracy, for reporting.
    pub holdout_accuracy: f64,
    pub n_fit: usize,
    pub n_holdout: usize,
}

/// Misclassification rate per true group over held-out `(user, group)`
/// pairs. Errors if either group is absent: a radius for a group nobody in
/// the holdout belongs to would be a guess, not an estimate.
pub fn estimate_rho(
    clf: &AttrClassifier,
    lists: &[Vec<u32>],
    holdout: &[(u32, u8)],
    interaction_weighted: bool,
) -> Result<[f64; 2]> {
    let mut wrong = [0.0f64; 2];
    let mut total = [0.0f64; 2];
    for &(user, s) in holdout {
        let items = &lists[user as usize];
        let weight = if interaction_weighted { items.len() as f64 } else { 1.0 };
        let pred = clf.predict(items);
        total[s as usize] += weight;
        if pred.attr != s {
            wrong[s as usize] += weight;
        }
    }
    for s in 0..2 {
        if total[s] == 0.0 {
            return Err(Error::Degenerate(format!(
                "holdout contains no users of group {s}; cannot estimate its error rate"
            )));
        }
    }
    Ok([wrong[0] / total[0], wrong[1] / total[1]])
}

/// Fits the classifier on disclosed users, estimates per-group error rates
/// on a held-out slice, and predicts an attribute for every user (disclosed
/// ones included, though downstream grouping always prefers a true label).
pub fn reconstruct_attrs(train: &PartitionedDataset, cfg: &ReconConfig) -> Result<ReconOutcome> {
    if !(0.0 < cfg.holdout_fraction && cfg.holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must be in (0, 1), got {}",
            cfg.holdout_fraction
        )));
    }
    if cfg.safety_margin < 0.0 {
        return Err(Error::Config(format!(
            "safety margin must be non-negative, got {}",
            cfg.safety_margin
        )));
    }
    let lists = user_item_lists(train);
    let statuses = user_statuses(train)?;

    let mut known: Vec<(u32, u8)> = statuses
        .iter()
        .enumerate()
        .filter_map(|(u, st)| match st {
            Some(AttrStatus::Known(s)) => Some((u as u32, *s)),
            _ => None,
        })
        .collect();
    if known.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 disclosed users to fit and validate, got {}",
            known.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    known.shuffle(&mut rng);
    let n_holdout =
        ((cfg.holdout_fraction * known.len() as f64).round() as usize).clamp(1, known.len() - 1);
    let (fit, holdout) = known.split_at(known.len() - n_holdout);

    let rows: Vec<&[u32]> = fit.iter().map(|&(u, _)| lists[u as usize].as_slice()).collect();
    let labels: Vec<u8> = fit.iter().map(|&(_, s)| s).collect();
    let clf = AttrClassifier::fit(&rows, &labels, train.n_items(), &cfg.classifier)?;

    let mut rho = estimate_rho(&clf, &lists, holdout, cfg.interaction_weighted)?;
    for r in &mut rho {
        *r = (*r + cfg.safety_margin).clamp(0.0, 1.0);
    }

    let correct = holdout
        .iter()
        .filter(|&&(u, s)| clf.predict(&lists[u as usize]).attr == s)
        .count();
    let holdout_accuracy = correct as f64 / holdout.len() as f64;

    let user_attrs = lists.iter().map(|items| Some(clf.predict(items))).collect();
    Ok(ReconOutcome {
        user_attrs,
        rho,
        holdout_accuracy,
        n_fit: fit.len(),
        n_holdout: holdout.len(),
    })
}

/// Loosened radius when the base rates behind an estimated error rate may
/// themselves be off by `delta_p`. The inflation slope is the ratio of the
/// joint probability of a correct prediction to the product of the
/// marginals: `rho' = min(1, rho + slope * |delta_p|)`.
pub fn relaxed_rho(rho: f64, joint: f64, p_true: f64, p_pred: f64, delta_p: f64) -> Result<f64> {
    for (name, v) in [("rho", rho), ("joint", joint), ("p_true", p_true), ("p_pred", p_pred)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Usage(format!("{name} = {v} is not a probability")));
        }
    }
    if p_true == 0.0 || p_pred == 0.0 {
        return Err(Error::Degenerate(
            "marginal probability of zero leaves the inflation slope undefined".into(),
        ));
    }
    let slope = joint / (p_true * p_pred);
    Ok((rho + slope * delta_p.abs()).min(1.0))
}

/// Uniform coin-flip attributes (confidence 0.5) for users whose attribute
/// may not be inferred at all. Deterministic in the seed; aligned with
/// `users`.
pub fn assign_random_attrs(users: &[u32], seed: u64) -> Vec<ReconAttr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users
        .iter()
        .map(|_| ReconAttr { attr: u8::from(rng.gen_bool(0.5)), confidence: 0.5 })
        .collect()
}

const REPORT_MAGIC: &str = "#drfo-recon v1";

/// Serializes a reconstruction outcome as a small TSV artifact:
///
/// ```text
/// #drfo-recon v1 users=<n> rho0=<f> rho1=<f> acc=<f>
/// user	attr	confidence
/// <u>	<0|1>	<f>
/// ```
///
/// Floats use shortest-round-trip formatting, so read-after-write is exact.
pub fn write_recon_report(outcome: &ReconOutcome) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{REPORT_MAGIC} users={} rho0={} rho1={} acc={}\n",
        outcome.user_attrs.len(),
        outcome.rho[0],
        outcome.rho[1],
        outcome.holdout_accuracy
    ));
    out.push_str("user\tattr\tconfidence\n");
    for (u, attr) in outcome.user_attrs.iter().enumerate() {
        if let Some(a) = attr {
            out.push_str(&format!("{u}\t{}\t{}\n", a.attr, a.confidence));
        }
    }
    out
}

pub fn read_recon_report(text: &str) -> Result<ReconOutcome> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty reconstruction report"))?;
    let rest = header
        .strip_prefix(REPORT_MAGIC)
        .ok_or_else(|| Error::parse(1, format!("expected `{REPORT_MAGIC}` header")))?;
    let mut users: Option<usize> = None;
    let mut rho = [None::<f64>; 2];
    let mut acc: Option<f64> = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field `{field}`")))?;
        let bad = || Error::parse(1, format!("bad value in header field `{field}`"));
        match key {
            "users" => users = Some(value.parse().map_err(|_| bad())?),
            "rho0" => rho[0] = Some(value.parse().map_err(|_| bad())?),
            "rho1" => rho[1] = Some(value.parse().map_err(|_| bad())?),
            "acc" => acc = Some(value.parse().map_err(|_| bad())?),
            _ => return Err(Error::parse(1, format!("unknown header field `{key}`"))),
        }
    }
    let n_users = users.ok_or_else(|| Error::parse(1, "header is missing users="))?;
    let rho = [
        rho[0].ok_or_else(|| Error::parse(1, "header is missing rho0="))?,
        rho[1].ok_or_else(|| Error::parse(1, "header is missing rho1="))?,
    ];
    let holdout_accuracy = acc.ok_or_else(|| Error::parse(1, "header is missing acc="))?;
    for (name, v) in [("rho0", rho[0]), ("rho1", rho[1]), ("acc", holdout_accuracy)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parse(1, format!("{name}={v} is not a probability")));
        }
    }

    let (_, columns) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing column header"))?;
    if columns != "user\tattr\tconfidence" {
        return Err(Error::parse(2, "expected `user\\tattr\\tconfidence` column header"));
    }

    let mut user_attrs: Vec<Option<ReconAttr>> = vec![None; n_users];
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let mut next = |what: &str| {
            cols.next()
                .ok_or_else(|| Error::parse(lineno, format!("missing {what} column")))
        };
        let user: usize = next("user")?
            .parse()
            .map_err(|_| Error::parse(lineno, "bad user id"))?;
        let attr: u8 = next("attr")?
            .parse()
            .map_err(|_| Error::parse(lineno, "bad attribute"))?;
        let confidence: f64 = next("confidence")?
            .parse()
            .map_err(|_| Error::parse(lineno, "bad confidence"))?;
        if cols.next().is_some() {
            return Err(Error::parse(lineno, "too many columns"));
        }
        if user >= n_users {
            return Err(Error::parse(lineno, format!("user {user} outside users={n_users}")));
        }
        if attr > 1 {
            return Err(Error::parse(lineno, format!("attribute {attr} is not a binary group")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(lineno, format!("confidence {confidence} outside [0, 1]")));
        }
        if user_attrs[user].is_some() {
            return Err(Error::parse(lineno, format!("duplicate row for user {user}")));
        }
        user_attrs[user] = Some(ReconAttr { attr, confidence });
    }
    Ok(ReconOutcome { user_attrs, rho, holdout_accuracy, n_fit: 0, n_holdout: 0 })
}

pub fn write_recon_report_file(path: &Path, outcome: &ReconOutcome) -> Result<()> {
    fs::write(path, write_recon_report(outcome))?;
    Ok(())
}

pub fn read_recon_report_file(path: &Path) -> Result<ReconOutcome> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: "reconstruct".into(),
            path: path.display().to_string(),
        });
    }
    read_recon_report(&fs::read_to_string(path)?)
}
