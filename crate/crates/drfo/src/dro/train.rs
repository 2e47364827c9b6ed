//! Alternating min-max fine-tuning.
//!
//! Each iteration takes one descent step on the model (a minibatch of the
//! recommendation loss plus the full-data fairness terms), refreshes the
//! cached predictions with a single forward pass, and then lets the
//! adversary take its projected ascent step against the fresh model. The
//! cache therefore always reflects the current parameters: the ascent sees
//! them immediately, and the next descent step reuses the same pass.

use crate::data::InteractionRecord;
use crate::error::{Error, Result};
use crate::mf::{Adam, AdamConfig, BatchStream, MFModel};

use super::fairness::{ascend_terms, fairness_dz, term_values, GroupTerm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Weight of every group fairness term. Zero disables the fairness
    /// machinery entirely, which makes the run identical to plain
    /// fine-tuning of the recommendation loss.
    pub lambda: f64,
    /// Ascent step size for the adversarial distributions.
    pub ascent_rate: f64,
    /// Ascent rounds per outer iteration.
    pub ascent_steps: usize,
    /// A model snapshot (with validation metrics) is taken every this many
    /// iterations, plus once at the start and once at the end.
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 1024,
            lambda: 10.0,
            ascent_rate: 1e-3,
            ascent_steps: 1,
            snapshot_every: 25,
            seed: 0,
        }
    }
}

/// State of one group term at the end of an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermLog {
    pub group: u8,
    /// Signed deviation `c_s`.
    pub value: f64,
    /// Largest total-variation displacement among the term's adversarial
    /// parts.
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    /// Full-data recommendation loss (from the prediction cache).
    pub bce: f64,
    pub terms: Vec<TermLog>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iteration: usize,
    pub model: MFModel,
    pub val_rmse: f64,
    pub val_dp: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model after the final iteration (also the last snapshot's model).
    pub model: MFModel,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<LogRow>,
}

fn bce_from_preds(records: &[InteractionRecord], preds: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (rec, &p) in records.iter().zip(preds) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        sum -= if rec.rating == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    sum / records.len() as f64
}

/// Fine-tunes `model` on `records`, balancing the recommendation loss
/// against the supplied fairness terms (possibly adversarial). With an empty
/// term list or `lambda == 0` this is plain minibatch fine-tuning: no
/// fairness arithmetic runs at all, so such runs are bit-identical to a
/// dedicated unconstrained trainer.
///
/// `snapshot_eval` maps a model to `(validation RMSE, validation parity
/// gap)` and is invoked only at snapshot iterations.
pub fn train_minimax(
    model: MFModel,
    records: &[InteractionRecord],
    terms: Vec<GroupTerm>,
    cfg: &TrainConfig,
    mut snapshot_eval: impl FnMut(&MFModel) -> Result<(f64, f64)>,
) -> Result<TrainOutcome> {
    if records.is_empty() {
        return Err(Error::Degenerate("cannot fine-tune on an empty record set".into()));
    }
    if cfg.iterations == 0 || cfg.snapshot_every == 0 {
        return Err(Error::Config("iteration and snapshot counts must be positive".into()));
    }
    for part in terms.iter().flat_map(|t| &t.parts) {
        if let Some(&idx) = part.support.iter().find(|&&i| i >= records.len()) {
            return Err(Error::Usage(format!(
                "fairness term references record {idx} outside the training data"
            )));
        }
    }

    let mut model = model;
    let mut terms = terms;
    let fairness_on = cfg.lambda != 0.0 && !terms.is_empty();

    let mut adam = Adam::new(
        AdamConfig::new(cfg.learning_rate, cfg.weight_decay),
        model.params().len(),
    );
    let mut stream = BatchStream::new(records.len(), cfg.batch_size, cfg.seed);

    let mut preds = Vec::new();
    model.predict_into(records, &mut preds);

    let mut snapshots = Vec::new();
    let mut log = Vec::with_capacity(cfg.iterations);
    let (vr, vd) = snapshot_eval(&model)?;
    snapshots.push(Snapshot { iteration: 0, model: model.clone(), val_rmse: vr, val_dp: vd });

    let mut grad = vec![0.0f64; model.params().len()];
    let mut dz: Vec<(usize, f64)> = Vec::new();
    let mut coef = Vec::new();
    let mut batch = Vec::new();

    for t in 1..=cfg.iterations {
        batch.clear();
        batch.extend_from_slice(stream.next_batch());
        grad.iter_mut().for_each(|g| *g = 0.0);
        dz.clear();
        let scale = 1.0 / batch.len() as f64;
        for &i in &batch {
            dz.push((i, (preds[i] - records[i].rating as f64) * scale));
        }
        if fairness_on {
            let gmean = preds.iter().sum::<f64>() / preds.len() as f64;
            let values = term_values(&terms, &preds, gmean);
            for (term, &c) in terms.iter().zip(&values) {
                if !c.is_finite() {
                    return Err(Error::Numerical(format!(
                        "group {} fairness term is {c} at iteration {t}"
                    , term.group)));
                }
            }
            fairness_dz(&terms, &values, &preds, cfg.lambda, &mut coef, &mut dz);
        }
        model.accumulate_dz(records, &dz, &mut grad);
        adam.step(model.params_mut(), &grad)
            .map_err(|e| Error::Numerical(format!("descent failed at iteration {t}: {e}")))?;

        // The single full forward pass of the iteration: feeds the ascent
        // below and the next iteration's descent step.
        model.predict_into(records, &mut preds);

        let gmean = preds.iter().sum::<f64>() / preds.len() as f64;
        if fairness_on {
            ascend_terms(
                &mut terms,
                &preds,
                gmean,
                cfg.lambda,
                cfg.ascent_rate,
                cfg.ascent_steps,
            )
            .map_err(|e| Error::Numerical(format!("ascent failed at iteration {t}: {e}")))?;
        }

        let bce = bce_from_preds(records, &preds);
        if !bce.is_finite() {
            return Err(Error::Numerical(format!(
                "recommendation loss is {bce} at iteration {t}"
            )));
        }
        let term_log = if fairness_on {
            terms
                .iter()
                .map(|term| TermLog {
                    group: term.group,
                    value: term.value(&preds, gmean),
                    tv: term
                        .parts
                        .iter()
                        .map(|p| p.tv_from_center())
                        .fold(0.0, f64::max),
                })
                .collect()
        } else {
            Vec::new()
        };
        log.push(LogRow { iteration: t, bce, terms: term_log });

        if t % cfg.snapshot_every == 0 || t == cfg.iterations {
            let (vr, vd) = snapshot_eval(&model)?;
            snapshots.push(Snapshot {
                iteration: t,
                model: model.clone(),
                val_rmse: vr,
                val_dp: vd,
            });
        }
    }

    Ok(TrainOutcome { model, snapshots, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttrStatus;
    use crate::dro::fairness::{Ball, TermPart};
    use crate::metrics::mad;

    fn rec(user: u32, item: u32, rating: u8) -> InteractionRecord {
        InteractionRecord { user, item, rating, status: AttrStatus::Known(0) }
    }

    /// Two user blocks with different positive rates (4/6 vs 2/6) produce a
    /// large parity gap when fit without constraints.
    fn gap_dataset() -> Vec<InteractionRecord> {
        let mut records = Vec::new();
        for u in 0..8u32 {
            for v in 0..6u32 {
                let rating = if u < 4 { u8::from(v < 4) } else { u8::from(v < 2) };
                records.push(rec(u, v, rating));
            }
        }
        records
    }

    fn group_indices(records: &[InteractionRecord]) -> (Vec<usize>, Vec<usize>) {
        let g0 = (0..records.len()).filter(|&i| records[i].user < 4).collect();
        let g1 = (0..records.len()).filter(|&i| records[i].user >= 4).collect();
        (g0, g1)
    }

    fn oracle_like_terms(records: &[InteractionRecord]) -> Vec<GroupTerm> {
        let (g0, g1) = group_indices(records);
        [g0, g1]
            .into_iter()
            .enumerate()
            .map(|(s, idx)| GroupTerm {
                group: s as u8,
                parts: vec![TermPart {
                    eta: 1.0,
                    support: idx.clone(),
                    weights: vec![1.0 / idx.len() as f64; idx.len()],
                    ball: None,
                }],
            })
            .collect()
    }

    fn no_eval(_: &MFModel) -> Result<(f64, f64)> {
        Ok((0.0, 0.0))
    }

    #[test]
    fn lambda_zero_matches_empty_terms_bitwise() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 4, 11).unwrap();
        let cfg = TrainConfig {
            iterations: 20,
            batch_size: 16,
            snapshot_every: 10,
            lambda: 0.0,
            ..Default::default()
        };
        let with_terms = train_minimax(
            model.clone(),
            &records,
            oracle_like_terms(&records),
            &cfg,
            no_eval,
        )
        .unwrap();
        let without = train_minimax(model, &records, Vec::new(), &cfg, no_eval).unwrap();
        let a: Vec<u64> = with_terms.model.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = without.model.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_radius_adversary_matches_static_terms_bitwise() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 4, 11).unwrap();
        let cfg = TrainConfig {
            iterations: 25,
            batch_size: 16,
            lambda: 2.0,
            snapshot_every: 25,
            ..Default::default()
        };
        let static_terms = oracle_like_terms(&records);
        let robust_terms: Vec<GroupTerm> = static_terms
            .iter()
            .cloned()
            .map(|mut t| {
                for p in &mut t.parts {
                    p.ball = Some(Ball { center: p.weights.clone(), rho: 0.0 });
                }
                t
            })
            .collect();
        let a = train_minimax(model.clone(), &records, static_terms, &cfg, no_eval).unwrap();
        let b = train_minimax(model, &records, robust_terms, &cfg, no_eval).unwrap();
        let pa: Vec<u64> = a.model.params().iter().map(|p| p.to_bits()).collect();
        let pb: Vec<u64> = b.model.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn fairness_terms_shrink_the_parity_gap() {
        let records = gap_dataset();
        let (g0, g1) = group_indices(&records);
        let base = MFModel::init(8, 6, 4, 3).unwrap();
        let cfg_plain = TrainConfig {
            iterations: 150,
            learning_rate: 5e-2,
            batch_size: 48,
            lambda: 0.0,
            snapshot_every: 150,
            ..Default::default()
        };
        let cfg_fair = TrainConfig { lambda: 5.0, ..cfg_plain };

        let plain =
            train_minimax(base.clone(), &records, Vec::new(), &cfg_plain, no_eval).unwrap();
        let fair =
            train_minimax(base, &records, oracle_like_terms(&records), &cfg_fair, no_eval)
                .unwrap();

        let gap = |m: &MFModel| {
            let mut preds = Vec::new();
            m.predict_into(&records, &mut preds);
            mad(&preds, &g0, &g1).unwrap()
        };
        let plain_gap = gap(&plain.model);
        let fair_gap = gap(&fair.model);
        assert!(
            fair_gap < plain_gap * 0.5,
            "constrained gap {fair_gap} not well below unconstrained {plain_gap}"
        );
    }

    #[test]
    fn snapshots_land_on_schedule_and_log_is_complete() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 2, 1).unwrap();
        let cfg = TrainConfig {
            iterations: 10,
            batch_size: 16,
            snapshot_every: 4,
            lambda: 1.0,
            ..Default::default()
        };
        let mut evals = 0usize;
        let out = train_minimax(model, &records, oracle_like_terms(&records), &cfg, |_| {
            evals += 1;
            Ok((0.25, 0.1))
        })
        .unwrap();
        let iters: Vec<usize> = out.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, vec![0, 4, 8, 10]);
        assert_eq!(evals, 4);
        assert_eq!(out.log.len(), 10);
        assert!(out.log.iter().all(|r| r.bce.is_finite()));
        assert!(out.log.iter().all(|r| r.terms.len() == 2));
    }

    #[test]
    fn adversarial_run_keeps_the_ball_constraint_in_the_log() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 4, 2).unwrap();
        let rho = 0.3;
        let terms: Vec<GroupTerm> = oracle_like_terms(&records)
            .into_iter()
            .map(|mut t| {
                for p in &mut t.parts {
                    p.ball = Some(Ball { center: p.weights.clone(), rho });
                }
                t
            })
            .collect();
        let cfg = TrainConfig {
            iterations: 30,
            batch_size: 16,
            lambda: 3.0,
            ascent_rate: 0.05,
            snapshot_every: 30,
            ..Default::default()
        };
        let out = train_minimax(model, &records, terms, &cfg, no_eval).unwrap();
        let max_tv = out
            .log
            .iter()
            .flat_map(|r| r.terms.iter().map(|t| t.tv))
            .fold(0.0, f64::max);
        assert!(max_tv <= rho + 1e-9, "tv {max_tv} exceeded the radius {rho}");
        assert!(max_tv > 0.0, "adversary never moved");
    }

    #[test]
    fn training_is_deterministic() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 4, 9).unwrap();
        let cfg = TrainConfig {
            iterations: 15,
            batch_size: 16,
            lambda: 2.0,
            snapshot_every: 5,
            ..Default::default()
        };
        let terms = oracle_like_terms(&records);
        let a = train_minimax(model.clone(), &records, terms.clone(), &cfg, no_eval).unwrap();
        let b = train_minimax(model, &records, terms, &cfg, no_eval).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn out_of_range_support_is_rejected() {
        let records = gap_dataset();
        let model = MFModel::init(8, 6, 2, 0).unwrap();
        let terms = vec![GroupTerm {
            group: 0,
            parts: vec![TermPart {
                eta: 1.0,
                support: vec![records.len()],
                weights: vec![1.0],
                ball: None,
            }],
        }];
        let cfg = TrainConfig { iterations: 1, snapshot_every: 1, ..Default::default() };
        assert!(matches!(
            train_minimax(model, &records, terms, &cfg, no_eval),
            Err(Error::Usage(_))
        ));
    }
}
