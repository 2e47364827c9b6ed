//! Group fairness terms and the adversarial inner maximization.
//!
//! Each group `s` contributes one term
//!
//! ```text
//! c_s = sum_parts eta_part * <weights_part, preds[support_part]> - mean(preds)
//! L_s = |c_s|
//! ```
//!
//! where each part covers records whose (true or predicted) attribute is
//! `s`, and `eta` mixes the parts by record count. A part backed by reliable
//! labels carries fixed weights; a part backed by reconstructed labels may
//! instead carry an adversarial distribution confined to a total-variation
//! ball around the label-induced center. Every training method in this crate
//! -- from the plain group regularizer to the fully robust objective -- is
//! expressed through this one structure, so their documented coincidences
//! (for example, a zero-radius ball behaving exactly like static weights)
//! hold bit for bit rather than approximately.

use crate::data::{PartitionTag, ReconstructedDataset};
use crate::error::{Error, Result};
use crate::metrics::GroupWeights;

use super::project::project_ambiguity;

/// Total-variation ball the adversary may roam.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub rho: f64,
}

/// One expectation inside a group term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermPart {
    pub eta: f64,
    /// Record indices this part's distribution lives on.
    pub support: Vec<usize>,
    /// Current distribution over `support`.
    pub weights: Vec<f64>,
    /// `None` freezes the weights; `Some` lets the ascent move them.
    pub ball: Option<Ball>,
}

impl TermPart {
    /// Expectation of `preds` under the part's current distribution.
    pub fn expectation(&self, preds: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * preds[i])
            .sum()
    }

    /// Total-variation distance of the current weights from the ball center
    /// (zero for static parts).
    pub fn tv_from_center(&self) -> f64 {
        match &self.ball {
            Some(ball) => {
                self.weights.iter().zip(&ball.center).map(|(w, c)| (w - c).abs()).sum::<f64>()
                    / 2.0
            }
            None => 0.0,
        }
    }
}

/// The fairness term of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTerm {
    pub group: u8,
    pub parts: Vec<TermPart>,
}

impl GroupTerm {
    /// Signed deviation `c_s` of the group's mixed expectation from the
    /// global mean.
    pub fn value(&self, preds: &[f64], global_mean: f64) -> f64 {
        self.parts.iter().map(|p| p.eta * p.expectation(preds)).sum::<f64>() - global_mean
    }
}

/// Total-variation distance between two weight vectors over the same
/// support.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "total-variation distance needs a shared support, got lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0)
}

/// Center distribution induced by predicted labels: uniform over member
/// records, zero elsewhere.
pub fn init_center(members: &[bool]) -> Result<Vec<f64>> {
    let m = members.iter().filter(|&&b| b).count();
    if m == 0 {
        return Err(Error::Degenerate("label-induced center has empty support".into()));
    }
    let w = 1.0 / m as f64;
    Ok(members.iter().map(|&b| if b { w } else { 0.0 }).collect())
}

/// `c_s` for every term under one prediction vector.
pub fn term_values(terms: &[GroupTerm], preds: &[f64], global_mean: f64) -> Vec<f64> {
    terms.iter().map(|t| t.value(preds, global_mean)).collect()
}

/// Pushes the fairness contribution to the per-record score derivatives:
/// `dz_i = lambda * sum_s sign(c_s) * dc_s/dp_i * p_i (1 - p_i)`. A term
/// sitting exactly at `c_s = 0` contributes nothing (the subgradient of the
/// absolute value is taken as zero there).
pub fn fairness_dz(
    terms: &[GroupTerm],
    values: &[f64],
    preds: &[f64],
    lambda: f64,
    coef_buf: &mut Vec<f64>,
    dz_out: &mut Vec<(usize, f64)>,
) {
    let n = preds.len();
    coef_buf.clear();
    coef_buf.resize(n, 0.0);
    let mut sign_sum = 0.0;
    for (term, &c) in terms.iter().zip(values) {
        if c == 0.0 {
            continue;
        }
        let sgn = if c > 0.0 { 1.0 } else { -1.0 };
        sign_sum += sgn;
        for part in &term.parts {
            for (&idx, &w) in part.support.iter().zip(&part.weights) {
                coef_buf[idx] += sgn * part.eta * w;
            }
        }
    }
    let global = -sign_sum / n as f64;
    for idx in 0..n {
        let coef = coef_buf[idx] + global;
        if coef != 0.0 {
            let p = preds[idx];
            dz_out.push((idx, lambda * coef * p * (1.0 - p)));
        }
    }
}

/// One or more projected-subgradient ascent rounds on every adversarial
/// part: `weights += step * lambda * sign(c_s) * eta * preds[support]`,
/// then projection back onto the part's feasible set. Predictions are held
/// fixed, so `c_s` is re-evaluated between rounds as the weights move.
pub fn ascend_terms(
    terms: &mut [GroupTerm],
    preds: &[f64],
    global_mean: f64,
    lambda: f64,
    step: f64,
    rounds: usize,
) -> Result<()> {
    for _ in 0..rounds {
        for term in terms.iter_mut() {
            let c = term.value(preds, global_mean);
            if !c.is_finite() {
                return Err(Error::Numerical(format!(
                    "group {} term is {c} during ascent",
                    term.group
                )));
            }
            if c == 0.0 {
                continue;
            }
            let sgn = if c > 0.0 { 1.0 } else { -1.0 };
            for part in &mut term.parts {
                let Some(ball) = &part.ball else { continue };
                let scale = step * lambda * sgn * part.eta;
                for (w, &idx) in part.weights.iter_mut().zip(&part.support) {
                    *w += scale * preds[idx];
                }
                part.weights = project_ambiguity(&part.weights, &ball.center, ball.rho)?;
            }
        }
    }
    Ok(())
}

/// Endpoints and maximum of `|offset + eta * t|` where `t` ranges over the
/// expectations reachable inside the part's feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    /// Smallest reachable expectation.
    pub t_lo: f64,
    /// Largest reachable expectation.
    pub t_hi: f64,
    /// Whether the maximum is attained at `t_hi` (ties report the high side).
    pub at_hi: bool,
}

/// Closed-form worst case of one group term over a total-variation ball.
///
/// Reachable expectations form the interval `[t_lo, t_hi]` produced by
/// greedy mass transport: to raise the expectation, strip mass from the
/// cheapest predictions first (each coordinate caps at its center mass) and
/// pile it on the single most expensive one; lowering is symmetric. Since
/// `|offset + eta t|` is convex in `t`, the maximum sits at an endpoint.
pub fn worst_case_term(
    offset: f64,
    eta: f64,
    center: &[f64],
    rho: f64,
    support_preds: &[f64],
) -> Result<WorstCase> {
    if center.is_empty() || center.len() != support_preds.len() {
        return Err(Error::Usage(format!(
            "worst case needs matching non-empty center and predictions, got {} and {}",
            center.len(),
            support_preds.len()
        )));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::Config(format!("radius must be finite and non-negative, got {rho}")));
    }
    let t0: f64 = center.iter().zip(support_preds).map(|(&c, &r)| c * r).sum();

    let mut order: Vec<usize> = (0..center.len()).collect();
    order.sort_by(|&a, &b| support_preds[a].total_cmp(&support_preds[b]));

    // Raise: receiver is the largest prediction, donors ascend from the
    // smallest.
    let hi_recv = *order.last().unwrap();
    let mut t_hi = t0;
    let mut budget = rho;
    for &i in &order {
        if budget <= 0.0 {
            break;
        }
        if i == hi_recv {
            continue;
        }
        let take = center[i].min(budget);
        t_hi += take * (support_preds[hi_recv] - support_preds[i]);
        budget -= take;
    }

    // Lower: receiver is the smallest prediction, donors descend from the
    // largest.
    let lo_recv = order[0];
    let mut t_lo = t0;
    budget = rho;
    for &i in order.iter().rev() {
        if budget <= 0.0 {
            break;
        }
        if i == lo_recv {
            continue;
        }
        let take = center[i].min(budget);
        t_lo -= take * (support_preds[i] - support_preds[lo_recv]);
        budget -= take;
    }

    let hi_val = (offset + eta * t_hi).abs();
    let lo_val = (offset + eta * t_lo).abs();
    let at_hi = hi_val >= lo_val;
    Ok(WorstCase { value: hi_val.max(lo_val), t_lo, t_hi, at_hi })
}

/// Builds the fairness terms of the robust objective: for each group, the
/// reliably labeled records enter with fixed uniform weights, records with
/// reconstructed labels enter through an adversarial distribution over the
/// *entire* reconstructed partition (centered on the label-induced
/// distribution, radius `rho[s]`), and -- when present -- records of users
/// whose attribute may not be inferred enter through a second adversarial
/// distribution with radius `forbidden_rho` over their own partition.
///
/// Mixing weights are record counts: reliable count, predicted-in-group
/// count, assigned-in-group count. A group with an empty predicted (or
/// assigned) subset simply omits that part and renormalizes the mix. Passing
/// `forbidden_rho = None` leaves the forbidden partition out of the group
/// terms altogether (it still influences the global mean through the
/// predictions); passing `adversarial = false` freezes every distribution at
/// its center, which is the static-weights training scheme.
pub fn mixture_terms(
    recon: &ReconstructedDataset,
    rho: [f64; 2],
    forbidden_rho: Option<f64>,
    adversarial: bool,
) -> Result<Vec<GroupTerm>> {
    let recon_support = recon.dataset().partition(PartitionTag::Reconstructable);
    let forbidden_support = recon.dataset().partition(PartitionTag::Forbidden);

    let mut terms = Vec::with_capacity(2);
    for s in 0..2u8 {
        let known = recon.group_subset(PartitionTag::Known, s)?;
        let recon_members: Vec<bool> =
            recon_support.iter().map(|&i| recon.effective_attr(i) == s).collect();
        let n_recon_s = recon_members.iter().filter(|&&b| b).count();
        let (forbidden_members, n_forbidden_s) = if forbidden_rho.is_some() {
            let members: Vec<bool> =
                forbidden_support.iter().map(|&i| recon.effective_attr(i) == s).collect();
            let n = members.iter().filter(|&&b| b).count();
            (members, n)
        } else {
            (Vec::new(), 0)
        };

        let weights =
            GroupWeights::new(known.len() as u64, n_recon_s as u64, n_forbidden_s as u64)
                .map_err(|_| {
                    Error::Degenerate(format!("group {s} has no records in any partition"))
                })?;

        let mut parts = Vec::new();
        if !known.is_empty() {
            let uniform = vec![1.0 / known.len() as f64; known.len()];
            parts.push(TermPart {
                eta: weights.eta_known(),
                support: known,
                weights: uniform,
                ball: None,
            });
        }
        if n_recon_s > 0 {
            let center = init_center(&recon_members)?;
            parts.push(TermPart {
                eta: weights.eta_recon(),
                support: recon_support.clone(),
                weights: center.clone(),
                ball: adversarial.then_some(Ball { center, rho: rho[s as usize] }),
            });
        }
        if n_forbidden_s > 0 {
            let center = init_center(&forbidden_members)?;
            parts.push(TermPart {
                eta: weights.eta_forbidden(),
                support: forbidden_support.clone(),
                weights: center.clone(),
                ball: adversarial
                    .then_some(Ball { center, rho: forbidden_rho.expect("checked above") }),
            });
        }
        terms.push(GroupTerm { group: s, parts });
    }
    Ok(terms)
}

/// Robust fairness terms. When the dataset has no forbidden partition this
/// is exactly the base construction regardless of `forbidden_rho`, because
/// an empty partition contributes no part.
pub fn robust_terms(
    recon: &ReconstructedDataset,
    rho: [f64; 2],
    forbidden_rho: Option<f64>,
) -> Result<Vec<GroupTerm>> {
    mixture_terms(recon, rho, forbidden_rho, true)
}

/// Static fairness terms over predicted labels (the non-robust scheme): the
/// same mixture, with every distribution frozen at its center. Records of
/// never-inferable users are left out of the group terms entirely.
pub fn static_terms(recon: &ReconstructedDataset) -> Result<Vec<GroupTerm>> {
    mixture_terms(recon, [0.0, 0.0], None, false)
}
