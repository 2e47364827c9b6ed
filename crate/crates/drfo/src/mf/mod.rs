//! Matrix-factorization recommender with a logistic output.
//!
//! A rating is predicted as `squash(<p_u, q_v> + b_u + b_v + b)`. All
//! parameters live in one flat `f64` vector (embeddings, then biases), which
//! keeps the optimizer, finite-difference checks, and checkpointing trivial.
//! Training minimizes binary cross-entropy with Adam; weight decay is
//! decoupled (applied directly to parameters, never folded into the BCE
//! gradient).

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::InteractionRecord;
use crate::error::{Error, Result};
use crate::metrics::rmse;

/// Numerically stable logistic function.
pub fn squash(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MFModel {
    n_users: u32,
    n_items: u32,
    dim: usize,
    params: Vec<f64>,
}

impl MFModel {
    /// Layout: `[user embeddings | item embeddings | user biases | item biases | global bias]`.
    pub fn init(n_users: u32, n_items: u32, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let n = Self::param_len(n_users, n_items, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid stddev");
        let params = (0..n).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { n_users, n_items, dim, params })
    }

    pub fn from_params(n_users: u32, n_items: u32, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_len(n_users, n_items, dim) {
            return Err(Error::Integrity(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                Self::param_len(n_users, n_items, dim)
            )));
        }
        Ok(Self { n_users, n_items, dim, params })
    }

    fn param_len(n_users: u32, n_items: u32, dim: usize) -> usize {
        (n_users as usize + n_items as usize) * (dim + 1) + 1
    }

    pub fn n_users(&self) -> u32 {
        self.n_users
    }

    pub fn n_items(&self) -> u32 {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    #[inline]
    fn user_off(&self, u: u32) -> usize {
        u as usize * self.dim
    }

    #[inline]
    fn item_off(&self, v: u32) -> usize {
        (self.n_users as usize + v as usize) * self.dim
    }

    #[inline]
    fn user_bias_off(&self, u: u32) -> usize {
        (self.n_users as usize + self.n_items as usize) * self.dim + u as usize
    }

    #[inline]
    fn item_bias_off(&self, v: u32) -> usize {
        (self.n_users as usize + self.n_items as usize) * self.dim
            + self.n_users as usize
            + v as usize
    }

    #[inline]
    fn global_bias_off(&self) -> usize {
        self.params.len() - 1
    }

    /// Raw pre-squash score of a user-item pair.
    pub fn score(&self, user: u32, item: u32) -> f64 {
        let pu = self.user_off(user);
        let qv = self.item_off(item);
        let mut dot = 0.0;
        for d in 0..self.dim {
            dot += self.params[pu + d] * self.params[qv + d];
        }
        dot + self.params[self.user_bias_off(user)]
            + self.params[self.item_bias_off(item)]
            + self.params[self.global_bias_off()]
    }

    /// Predicted positive-rating probability, strictly inside (0, 1).
    pub fn predict(&self, user: u32, item: u32) -> f64 {
        squash(self.score(user, item))
    }

    /// Predictions for every record, into a reusable buffer.
    pub fn predict_into(&self, records: &[InteractionRecord], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(records.len());
        for rec in records {
            out.push(self.predict(rec.user, rec.item));
        }
    }

    /// Accumulates `sum_i dz_i * d score_i / d theta` into `grad` for the
    /// listed records, where `dz` is the loss derivative with respect to the
    /// record's pre-squash score.
    pub fn accumulate_dz(
        &self,
        records: &[InteractionRecord],
        dz: &[(usize, f64)],
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.params.len());
        let gb = self.global_bias_off();
        for &(i, g) in dz {
            let rec = &records[i];
            let pu = self.user_off(rec.user);
            let qv = self.item_off(rec.item);
            for d in 0..self.dim {
                grad[pu + d] += g * self.params[qv + d];
                grad[qv + d] += g * self.params[pu + d];
            }
            grad[self.user_bias_off(rec.user)] += g;
            grad[self.item_bias_off(rec.item)] += g;
            grad[gb] += g;
        }
    }
}

/// Mean binary cross-entropy of the model on `records` (all of them).
///
/// Predictions are clamped to `[1e-12, 1 - 1e-12]` before the logarithm so a
/// saturated score cannot produce an infinite loss on its own; a non-finite
/// result still fails loudly.
pub fn bce_loss(model: &MFModel, records: &[InteractionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Usage("BCE over an empty record set".into()));
    }
    let mut sum = 0.0;
    for rec in records {
        let p = model.predict(rec.user, rec.item).clamp(1e-12, 1.0 - 1e-12);
        sum -= if rec.rating == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let loss = sum / records.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("BCE loss is {loss}")));
    }
    Ok(loss)
}

/// BCE loss over a subset of records given precomputed predictions.
pub fn bce_loss_cached(records: &[InteractionRecord], preds: &[f64], batch: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &i in batch {
        let p = preds[i].clamp(1e-12, 1.0 - 1e-12);
        sum -= if records[i].rating == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    sum / batch.len() as f64
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self { learning_rate, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// One update over the full parameter vector. With zero gradient, zero
    /// weight decay, and fresh moments the parameters are unchanged (the
    /// update is exactly 0/eps); after a non-zero history, moment decay moves
    /// parameters even on a zero gradient, which is inherent to Adam.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Usage("optimizer/parameter size mismatch".into()));
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.cfg.learning_rate;
        let wd = self.cfg.weight_decay;
        for i in 0..params.len() {
            let g = grad[i];
            if !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient component at parameter {i}"
                )));
            }
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
            if wd != 0.0 {
                params[i] -= lr * wd * params[i];
            }
        }
        Ok(())
    }
}

/// One BCE minibatch step: accumulate `(p - r) / |batch|` per record and
/// apply an Adam update.
pub fn grad_step(
    model: &mut MFModel,
    adam: &mut Adam,
    records: &[InteractionRecord],
    batch: &[usize],
    grad_buf: &mut Vec<f64>,
    dz_buf: &mut Vec<(usize, f64)>,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Usage("empty minibatch".into()));
    }
    grad_buf.clear();
    grad_buf.resize(model.params().len(), 0.0);
    dz_buf.clear();
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let rec = &records[i];
        let p = model.predict(rec.user, rec.item);
        dz_buf.push((i, (p - rec.rating as f64) * scale));
    }
    model.accumulate_dz(records, dz_buf, grad_buf);
    adam.step(model.params_mut(), grad_buf)
}

/// Deterministic reshuffled minibatch stream over `n` records.
pub struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: 0,
            batch_size: batch_size.max(1).min(n.max(1)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    /// Next minibatch; reshuffles at each epoch boundary. The final batch of
    /// an epoch may be short.
    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = &self.order[self.pos..end];
        self.pos = end;
        batch
    }
}

/// Search grid and schedule for pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub embedding_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-RMSE improvement before a config stops.
    pub patience: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-2, 1e-3],
            weight_decays: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
            embedding_dim: 32,
            batch_size: 1024,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: MFModel,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub val_rmse: f64,
}

fn val_rmse(model: &MFModel, records: &[InteractionRecord], buf: &mut Vec<f64>) -> Result<f64> {
    model.predict_into(records, buf);
    let labels: Vec<f64> = records.iter().map(|r| r.rating as f64).collect();
    rmse(buf, &labels)
}

/// Grid search over `(learning rate, weight decay)` with per-config early
/// stopping on validation RMSE.
///
/// Each config fine-tunes the *same* seeded initialization with the same
/// batch order, restores its own best epoch, and the config with the lowest
/// validation RMSE wins. Ties keep the earlier grid entry; the grids are
/// iterated in the order given, so listing values smallest-first makes ties
/// resolve to the smallest learning rate, then the smallest decay.
pub fn pretrain(
    train: &[InteractionRecord],
    validation: &[InteractionRecord],
    n_users: u32,
    n_items: u32,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Degenerate("pretraining needs non-empty train and validation".into()));
    }
    if cfg.learning_rates.is_empty() || cfg.weight_decays.is_empty() {
        return Err(Error::Config("pretraining grid is empty".into()));
    }
    let init = MFModel::init(n_users, n_items, cfg.embedding_dim, cfg.seed)?;
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);

    let mut best: Option<PretrainOutcome> = None;
    let mut grad_buf = Vec::new();
    let mut dz_buf = Vec::new();
    let mut pred_buf = Vec::new();

    let mut lrs = cfg.learning_rates.clone();
    let mut wds = cfg.weight_decays.clone();
    lrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    wds.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for &lr in &lrs {
        for &wd in &wds {
            let mut model = init.clone();
            let mut adam = Adam::new(AdamConfig::new(lr, wd), model.params().len());
            let mut stream = BatchStream::new(train.len(), cfg.batch_size, cfg.seed);

            let mut config_best_rmse = f64::INFINITY;
            let mut config_best_model = model.clone();
            let mut stale_epochs = 0usize;

            for _epoch in 0..cfg.max_epochs {
                for _ in 0..steps_per_epoch {
                    let batch = stream.next_batch().to_vec();
                    grad_step(&mut model, &mut adam, train, &batch, &mut grad_buf, &mut dz_buf)
                        .map_err(|e| {
                            Error::Numerical(format!(
                                "pretraining diverged at lr={lr}, weight_decay={wd}: {e}"
                            ))
                        })?;
                }
                let r = val_rmse(&model, validation, &mut pred_buf)?;
                if r < config_best_rmse {
                    config_best_rmse = r;
                    config_best_model = model.clone();
                    stale_epochs = 0;
                } else {
                    stale_epochs += 1;
                    if stale_epochs >= cfg.patience {
                        break;
                    }
                }
            }

            let better = match &best {
                None => true,
                Some(b) => config_best_rmse < b.val_rmse,
            };
            if better {
                best = Some(PretrainOutcome {
                    model: config_best_model,
                    learning_rate: lr,
                    weight_decay: wd,
                    val_rmse: config_best_rmse,
                });
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttrStatus;
    use approx::assert_abs_diff_eq;

    fn rec(user: u32, item: u32, rating: u8) -> InteractionRecord {
        InteractionRecord { user, item, rating, status: AttrStatus::Known(0) }
    }

    #[test]
    fn squash_closed_forms() {
        assert_abs_diff_eq!(squash(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(squash(2.0), 0.8807970779778823, epsilon = 1e-15);
        assert_abs_diff_eq!(squash(-2.0), 1.0 - 0.8807970779778823, epsilon = 1e-15);
        // Stable in the tails and strictly inside (0, 1).
        assert!(squash(-745.0) > 0.0);
        assert!(squash(745.0) < 1.0 + 1e-12);
    }

    #[test]
    fn bce_single_record_closed_form() {
        // Force score = 2 via the global bias on a zero-embedding model.
        let mut model = MFModel::from_params(1, 1, 2, vec![0.0; 7]).unwrap();
        let n = model.params().len();
        model.params_mut()[n - 1] = 2.0;
        let loss = bce_loss(&model, &[rec(0, 0, 1)]).unwrap();
        assert_abs_diff_eq!(loss, 0.1269280110429726, epsilon = 1e-12);
    }

    #[test]
    fn init_is_seeded_and_small() {
        let a = MFModel::init(3, 4, 8, 9).unwrap();
        let b = MFModel::init(3, 4, 8, 9).unwrap();
        assert_eq!(a.params(), b.params());
        let c = MFModel::init(3, 4, 8, 10).unwrap();
        assert_ne!(a.params(), c.params());
        assert!(a.params().iter().all(|p| p.abs() < 0.1));
        assert_eq!(a.params().len(), (3 + 4) * 9 + 1);
    }

    #[test]
    fn score_uses_both_embeddings_and_biases() {
        // dim 1, 1 user, 1 item: params = [p_u, q_v, b_u, b_v, b].
        let model = MFModel::from_params(1, 1, 1, vec![2.0, 3.0, 0.25, 0.5, 1.0]).unwrap();
        assert_abs_diff_eq!(model.score(0, 0), 2.0 * 3.0 + 0.25 + 0.5 + 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(model.predict(0, 0), squash(7.75), epsilon = 1e-15);
    }

    fn fd_gradient(model: &MFModel, records: &[InteractionRecord], h: f64) -> Vec<f64> {
        let mut fd = vec![0.0; model.params().len()];
        let mut m = model.clone();
        for i in 0..fd.len() {
            let orig = m.params()[i];
            m.params_mut()[i] = orig + h;
            let up = bce_loss(&m, records).unwrap();
            m.params_mut()[i] = orig - h;
            let down = bce_loss(&m, records).unwrap();
            m.params_mut()[i] = orig;
            fd[i] = (up - down) / (2.0 * h);
        }
        fd
    }

    #[test]
    fn bce_gradient_matches_central_differences() {
        let records =
            vec![rec(0, 0, 1), rec(0, 1, 0), rec(1, 0, 0), rec(1, 1, 1), rec(0, 0, 1)];
        let mut model = MFModel::init(2, 2, 3, 1234).unwrap();
        // Move away from the tiny init so gradients are O(0.1).
        for (i, p) in model.params_mut().iter_mut().enumerate() {
            *p += ((i % 7) as f64 - 3.0) * 0.13;
        }
        let mut grad = vec![0.0; model.params().len()];
        let scale = 1.0 / records.len() as f64;
        let dz: Vec<(usize, f64)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, (model.predict(r.user, r.item) - r.rating as f64) * scale))
            .collect();
        model.accumulate_dz(&records, &dz, &mut grad);

        let fd = fd_gradient(&model, &records, 1e-5);
        for i in 0..grad.len() {
            let denom = grad[i].abs().max(fd[i].abs()).max(1e-4);
            let rel = (grad[i] - fd[i]).abs() / denom;
            assert!(rel <= 1e-4, "param {i}: analytic {} vs fd {}", grad[i], fd[i]);
        }
    }

    #[test]
    fn adam_descends_on_small_step() {
        let records = vec![rec(0, 0, 1), rec(0, 1, 0), rec(1, 0, 1), rec(1, 1, 0)];
        let mut model = MFModel::init(2, 2, 4, 5).unwrap();
        let before = bce_loss(&model, &records).unwrap();
        let mut adam = Adam::new(AdamConfig::new(1e-4, 0.0), model.params().len());
        let batch: Vec<usize> = (0..records.len()).collect();
        let mut grad_buf = Vec::new();
        let mut dz_buf = Vec::new();
        grad_step(&mut model, &mut adam, &records, &batch, &mut grad_buf, &mut dz_buf).unwrap();
        let after = bce_loss(&model, &records).unwrap();
        assert!(after <= before, "loss rose: {before} -> {after}");
    }

    #[test]
    fn adam_zero_gradient_fresh_state_is_identity() {
        let mut params = vec![0.3, -0.7, 1.5];
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::new(1e-3, 0.0), 3);
        adam.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![0.1];
        let mut adam = Adam::new(AdamConfig::new(1e-3, 0.0), 1);
        assert!(matches!(
            adam.step(&mut params, &[f64::NAN]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn batch_stream_covers_every_record_each_epoch() {
        let mut stream = BatchStream::new(10, 3, 77);
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..4 {
            seen.extend_from_slice(stream.next_batch());
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    fn toy_train_val() -> (Vec<InteractionRecord>, Vec<InteractionRecord>) {
        // 8 users x 6 items, block structure: users 0-3 like items 0-2,
        // users 4-7 like items 3-5.
        let mut train = Vec::new();
        let mut val = Vec::new();
        for u in 0..8u32 {
            for v in 0..6u32 {
                let like = u8::from((u < 4) == (v < 3));
                let r = rec(u, v, like);
                if (u + v) % 5 == 0 {
                    val.push(r);
                } else {
                    train.push(r);
                }
            }
        }
        (train, val)
    }

    #[test]
    fn pretrain_learns_block_structure_and_is_deterministic() {
        let (train, val) = toy_train_val();
        let cfg = PretrainConfig {
            learning_rates: vec![1e-2],
            weight_decays: vec![1e-4, 1e-6],
            embedding_dim: 4,
            batch_size: 8,
            max_epochs: 60,
            patience: 8,
            seed: 3,
        };
        let out = pretrain(&train, &val, 8, 6, &cfg).unwrap();
        assert!(out.val_rmse < 0.4, "val rmse {}", out.val_rmse);
        let again = pretrain(&train, &val, 8, 6, &cfg).unwrap();
        assert_eq!(out.model.params(), again.model.params());
        assert_eq!(out.weight_decay, again.weight_decay);
    }

    #[test]
    fn pretrain_empty_inputs_rejected() {
        let (train, _) = toy_train_val();
        assert!(matches!(
            pretrain(&train, &[], 8, 6, &PretrainConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            pretrain(&[], &train, 8, 6, &PretrainConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
