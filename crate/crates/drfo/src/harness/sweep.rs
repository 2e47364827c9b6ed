//! Sweep execution.
//!
//! A sweep walks `replicates x scenarios x methods`.  Artifacts are shared at
//! the widest level that keeps them identical: the split and the pretrained
//! model per replicate (masking never changes ratings, so every scenario can
//! reuse them), the mask, reconstruction and redrawn attributes per scenario
//! (so methods compare against bit-identical inputs).  Failures below the
//! replicate level turn into `status` text on the affected rows instead of
//! aborting the grid.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{
    cgl_overlay, known_group_indices, make_val_eval, oracle_terms, reg_known_terms,
};
use crate::data::{
    AttrStatus, PartitionedDataset, ReconAttr, ReconstructedDataset, SplitDataset,
};
use crate::dro::{robust_terms, static_terms, train_minimax, TrainConfig, TrainOutcome};
use crate::ingest::{
    apply_mask_plan, binarize, generate_synthetic, k_core_filter, parse_movielens_files,
    read_canonical_file, split, synthetic_preset, MaskPlan, SyntheticSpec, UserMaskStatus,
};
use crate::metrics::{mad, rmse};
use crate::mf::{pretrain, MFModel, PretrainOutcome};
use crate::recon::{assign_random_attrs, reconstruct_attrs};
use crate::{Error, Result};

use super::config::{ExperimentConfig, SweepKind, SweepSection};
use super::report::{sha256_hex, sort_rows, CellMetrics, CellRow};
use super::{derive_seed, select_min_rmse, select_model, Method, Selection};

/// One disclosure scenario: the grid coordinates of a sweep column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub retention: f64,
    pub flip_ratio: f64,
    pub forbid_fraction: f64,
}

impl Scenario {
    /// Canonical seed-derivation label.  Two cells share an artifact exactly
    /// when they agree on this string (plus the replicate), which is why the
    /// scenario-independent methods never mention it.
    fn label(&self) -> String {
        format!(
            "scenario|retention={}|flip={}|forbid={}",
            self.retention, self.flip_ratio, self.forbid_fraction
        )
    }
}

/// What a finished sweep hands back to the caller.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub kind: SweepKind,
    /// All cells in canonical report order.
    pub rows: Vec<CellRow>,
    /// `(path, sha256)` of file inputs; empty for synthetic sources.
    pub inputs: Vec<(String, String)>,
}

fn scenario_grid(sweep: &SweepSection) -> Vec<Scenario> {
    match sweep.kind {
        SweepKind::Retention => sweep
            .retentions
            .iter()
            .map(|&r| Scenario { retention: r, flip_ratio: 0.0, forbid_fraction: 0.0 })
            .collect(),
        SweepKind::Noise => sweep
            .flip_ratios
            .iter()
            .map(|&f| Scenario {
                retention: sweep.fixed_retention,
                flip_ratio: f,
                forbid_fraction: 0.0,
            })
            .collect(),
        SweepKind::Forbidden => sweep
            .forbid_fractions
            .iter()
            .map(|&b| Scenario {
                retention: sweep.fixed_retention,
                flip_ratio: 0.0,
                forbid_fraction: b,
            })
            .collect(),
    }
}

enum SourceData {
    Synthetic(SyntheticSpec),
    /// A whole dataset that gets re-split per replicate.
    Whole(Arc<PartitionedDataset>),
    /// A pre-split triple; replicates then differ only in seeds downstream
    /// of the split.
    PreSplit(Arc<SplitDataset>),
}

fn fingerprint(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = std::fs::read(path)?;
        out.push((path.display().to_string(), sha256_hex(&bytes)));
    }
    Ok(out)
}

fn load_source(cfg: &ExperimentConfig) -> Result<(SourceData, Vec<(String, String)>)> {
    match cfg.dataset.source.as_str() {
        "synthetic" => {
            Ok((SourceData::Synthetic(synthetic_preset(&cfg.dataset.preset)?), Vec::new()))
        }
        "movielens" => {
            let dir = Path::new(&cfg.dataset.path);
            let ratings = dir.join("ratings.dat");
            let users = dir.join("users.dat");
            let raw = parse_movielens_files(&ratings, &users)?;
            let filtered = k_core_filter(
                &raw,
                cfg.dataset.user_k_core as usize,
                cfg.dataset.item_k_core as usize,
            )?;
            let ds = binarize(&filtered, cfg.dataset.rating_threshold)?;
            Ok((SourceData::Whole(Arc::new(ds)), fingerprint(&[ratings, users])?))
        }
        "canonical" => {
            let prefix = &cfg.dataset.path;
            let paths: Vec<PathBuf> = ["train", "validation", "test"]
                .iter()
                .map(|part| PathBuf::from(format!("{prefix}.{part}.tsv")))
                .collect();
            let triple = SplitDataset {
                train: read_canonical_file(&paths[0])?,
                validation: read_canonical_file(&paths[1])?,
                test: read_canonical_file(&paths[2])?,
            };
            for part in [&triple.train, &triple.validation, &triple.test] {
                if part.len() != part.index_known().len() {
                    return Err(Error::Usage(
                        "sweeps mask attributes themselves and need a fully disclosed \
                         dataset; this canonical split is already masked"
                            .into(),
                    ));
                }
            }
            Ok((SourceData::PreSplit(Arc::new(triple)), fingerprint(&paths)?))
        }
        other => Err(Error::Config(format!("unknown dataset source {other:?}"))),
    }
}

/// Per-user true attribute across all three partitions; sweeps need it for
/// noise injection and for the true-attribute evaluation views.
fn split_truth(split: &SplitDataset) -> Result<Vec<u8>> {
    let mut truth: Vec<Option<u8>> = vec![None; split.n_users() as usize];
    for part in [&split.train, &split.validation, &split.test] {
        for rec in part.records() {
            let AttrStatus::Known(s) = rec.status else {
                return Err(Error::Usage(
                    "sweep sources must carry fully disclosed attributes".into(),
                ));
            };
            match &mut truth[rec.user as usize] {
                slot @ None => *slot = Some(s),
                Some(prev) if *prev != s => {
                    return Err(Error::Integrity(format!(
                        "user {} carries both attribute {prev} and {s}",
                        rec.user
                    )))
                }
                _ => {}
            }
        }
    }
    truth
        .into_iter()
        .enumerate()
        .map(|(u, t)| t.ok_or_else(|| Error::Integrity(format!("user {u} has no records"))))
        .collect()
}

/// Everything that is fixed for one replicate regardless of the scenario.
struct ReplicateData {
    master: u64,
    split: SplitDataset,
    user_truth: Vec<u8>,
    pre: PretrainOutcome,
    val_true_groups: [Vec<usize>; 2],
    test_true_groups: [Vec<usize>; 2],
    /// Best validation RMSE of the accuracy-only fine-tune: the anchor for
    /// every budgeted selection in this replicate.
    baseline_rmse: f64,
    basic: CellMetrics,
    /// Present when the roster asks for the full-knowledge reference.
    oracle: Option<std::result::Result<CellMetrics, String>>,
}

fn train_config(cfg: &ExperimentConfig, weight_decay: f64, lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: cfg.train.iterations,
        learning_rate: cfg.train.learning_rate,
        weight_decay,
        batch_size: cfg.train.batch_size,
        lambda,
        ascent_rate: cfg.train.ascent_rate,
        ascent_steps: cfg.train.ascent_steps,
        snapshot_every: cfg.train.snapshot_every,
        seed,
    }
}

/// Test-set RMSE and parity gap (always under true attributes).
fn test_metrics(
    model: &MFModel,
    test: &PartitionedDataset,
    groups: &[Vec<usize>; 2],
) -> Result<(f64, f64)> {
    let mut preds = Vec::new();
    model.predict_into(test.records(), &mut preds);
    let labels: Vec<f64> = test.records().iter().map(|r| r.rating as f64).collect();
    Ok((rmse(&preds, &labels)?, mad(&preds, &groups[0], &groups[1])?))
}

fn metrics_from(
    sel: &Selection,
    out: &TrainOutcome,
    rep: &ReplicateData,
    rho: [f64; 2],
    tau: Option<f64>,
) -> Result<CellMetrics> {
    let model = &out.snapshots[sel.index].model;
    let (test_rmse, test_dp) = test_metrics(model, &rep.split.test, &rep.test_true_groups)?;
    Ok(CellMetrics {
        selected_iteration: sel.iteration,
        rmse_qualified: sel.qualified,
        val_rmse: sel.val_rmse,
        val_dp: sel.val_dp,
        test_rmse,
        test_dp,
        rho,
        tau,
    })
}

fn build_replicate(
    cfg: &ExperimentConfig,
    source: &SourceData,
    methods: &[Method],
    replicate: u64,
    base_seed: u64,
) -> Result<ReplicateData> {
    let master = derive_seed(base_seed, &format!("replicate|{replicate}"));
    let ratios = cfg.split.ratios()?;
    let split_data = match source {
        SourceData::Synthetic(spec) => {
            let ds = generate_synthetic(spec, derive_seed(master, "dataset"))?;
            split(&ds, &ratios, derive_seed(master, "split"))?
        }
        SourceData::Whole(ds) => split(ds, &ratios, derive_seed(master, "split"))?,
        SourceData::PreSplit(triple) => (**triple).clone(),
    };
    let user_truth = split_truth(&split_data)?;
    let val_true_groups = known_group_indices(&split_data.validation)?;
    let test_true_groups = known_group_indices(&split_data.test)?;

    let pre = pretrain(
        split_data.train.records(),
        split_data.validation.records(),
        split_data.n_users(),
        split_data.n_items(),
        &cfg.pretrain.pretrain_config(derive_seed(master, "pretrain")),
    )?;

    // Accuracy-only fine-tune.  Runs even when `basic` is not on the roster:
    // its best validation RMSE anchors the selection budget for everyone.
    let train_seed = derive_seed(master, "train");
    let tc = train_config(cfg, pre.weight_decay, 0.0, train_seed);
    let eval = make_val_eval(split_data.validation.records(), val_true_groups.clone());
    let out = train_minimax(pre.model.clone(), split_data.train.records(), Vec::new(), &tc, eval)?;
    let sel = select_min_rmse(&out.snapshots)?;
    let baseline_rmse = sel.val_rmse;

    let mut rep = ReplicateData {
        master,
        split: split_data,
        user_truth,
        pre,
        val_true_groups,
        test_true_groups,
        baseline_rmse,
        basic: CellMetrics {
            selected_iteration: 0,
            rmse_qualified: true,
            val_rmse: 0.0,
            val_dp: 0.0,
            test_rmse: 0.0,
            test_dp: 0.0,
            rho: [0.0; 2],
            tau: None,
        },
        oracle: None,
    };
    rep.basic = metrics_from(&sel, &out, &rep, [0.0; 2], None)?;

    if methods.contains(&Method::Oracle) {
        let run = || -> Result<CellMetrics> {
            let terms = oracle_terms(&rep.split.train)?;
            let tc = train_config(cfg, rep.pre.weight_decay, cfg.train.lambda, train_seed);
            let eval = make_val_eval(rep.split.validation.records(), rep.val_true_groups.clone());
            let out =
                train_minimax(rep.pre.model.clone(), rep.split.train.records(), terms, &tc, eval)?;
            let sel = select_model(&out.snapshots, rep.baseline_rmse, cfg.select.rmse_budget)?;
            metrics_from(&sel, &out, &rep, [0.0; 2], None)
        };
        rep.oracle = Some(run().map_err(|e| e.to_string()));
    }
    Ok(rep)
}

/// Mask, reconstruction and imputed attributes shared by every method of one
/// (replicate, scenario) pair.
struct ScenarioData {
    scenario_seed: u64,
    masked: SplitDataset,
    recon_train: ReconstructedDataset,
    /// Ambiguity radii for the robust method.
    rho: [f64; 2],
    /// Radius for records of users who forbid inference; `None` when there
    /// are none.
    forbidden_rho: Option<f64>,
}

/// Replaces the labels of `2 * round(ratio * |masked|/2)` masked users with
/// their opposite group, half in each direction, so both predicted group
/// sizes are preserved exactly.  Errors when one group has too few masked
/// users to supply its half.
fn inject_flips(
    truth: &[u8],
    masked_users: &[u32],
    ratio: f64,
    seed: u64,
) -> Result<Vec<Option<ReconAttr>>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("flip ratio {ratio} outside [0, 1]")));
    }
    let k = (ratio * masked_users.len() as f64 / 2.0).round() as usize;
    let mut by_group: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for &u in masked_users {
        by_group[truth[u as usize] as usize].push(u);
    }
    for (s, group) in by_group.iter().enumerate() {
        if k > group.len() {
            return Err(Error::Config(format!(
                "flip ratio {ratio} needs {k} flips in group {s}, \
                 but only {} masked users belong to it",
                group.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs: Vec<Option<ReconAttr>> = truth
        .iter()
        .map(|&s| Some(ReconAttr { attr: s, confidence: 1.0 }))
        .collect();
    for group in &mut by_group {
        group.shuffle(&mut rng);
        for &u in group.iter().take(k) {
            let flipped = 1 - truth[u as usize];
            attrs[u as usize] = Some(ReconAttr { attr: flipped, confidence: 1.0 });
        }
    }
    Ok(attrs)
}

fn build_scenario(
    cfg: &ExperimentConfig,
    rep: &ReplicateData,
    sc: Scenario,
) -> Result<ScenarioData> {
    let scenario_seed = derive_seed(rep.master, &sc.label());
    let plan = MaskPlan {
        retention: sc.retention,
        forbid_fraction: sc.forbid_fraction,
        seed: derive_seed(scenario_seed, "mask"),
    };
    let (masked, mask) = apply_mask_plan(&rep.split, &plan)?;

    let (mut user_attrs, rho) = if cfg.sweep.kind == SweepKind::Noise {
        let masked_users = mask.users_with(UserMaskStatus::Reconstructable);
        let attrs = inject_flips(
            &rep.user_truth,
            &masked_users,
            sc.flip_ratio,
            derive_seed(scenario_seed, "flips"),
        )?;
        (attrs, [sc.flip_ratio, sc.flip_ratio])
    } else {
        let outcome =
            reconstruct_attrs(&masked.train, &cfg.recon.recon_config(derive_seed(scenario_seed, "recon")))?;
        (outcome.user_attrs, outcome.rho)
    };

    let forbidden_users = mask.users_with(UserMaskStatus::Forbidden);
    let forbidden_rho = if forbidden_users.is_empty() {
        None
    } else {
        // Nothing may be inferred for these users, so their labels are fair
        // coins and their distribution gets the maximal radius: the
        // adversary may place them anywhere.
        let coins =
            assign_random_attrs(&forbidden_users, derive_seed(scenario_seed, "forbidden-attrs"));
        for (&u, attr) in forbidden_users.iter().zip(coins) {
            user_attrs[u as usize] = Some(attr);
        }
        Some(1.0)
    };

    let recon_train = ReconstructedDataset::from_user_attrs(masked.train.clone(), &user_attrs)?;
    Ok(ScenarioData { scenario_seed, masked, recon_train, rho, forbidden_rho })
}

/// Outcome of the confidence-gate threshold search.
pub(crate) struct GatedRun {
    pub tau: f64,
    pub selection: Selection,
    pub outcome: TrainOutcome,
}

/// Trains the gated method once per candidate threshold and keeps the one
/// with the lowest selected validation disparity.  Strict improvement over
/// ascending thresholds means ties keep the smallest threshold, i.e. the
/// least intervention.  Shared by the sweep driver and the single-run
/// command, which differ only in where their anchors come from.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_gated(
    cfg: &ExperimentConfig,
    pre_model: &MFModel,
    weight_decay: f64,
    baseline_rmse: f64,
    recon_train: &ReconstructedDataset,
    masked_validation: &PartitionedDataset,
    train_seed: u64,
    gate_seed: u64,
) -> Result<GatedRun> {
    let mut taus = cfg.gated.taus.clone();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<GatedRun> = None;
    let val_groups = known_group_indices(masked_validation)?;
    for tau in taus {
        let gated_train = cgl_overlay(recon_train, tau, gate_seed)?;
        let terms = static_terms(&gated_train)?;
        let tc = train_config(cfg, weight_decay, cfg.train.lambda, train_seed);
        let eval = make_val_eval(masked_validation.records(), val_groups.clone());
        let outcome = train_minimax(
            pre_model.clone(),
            recon_train.dataset().records(),
            terms,
            &tc,
            eval,
        )?;
        let selection = select_model(&outcome.snapshots, baseline_rmse, cfg.select.rmse_budget)?;
        if best.as_ref().map_or(true, |b| selection.val_dp < b.selection.val_dp) {
            best = Some(GatedRun { tau, selection, outcome });
        }
    }
    Ok(best.expect("threshold grid is non-empty by validation"))
}

fn run_masked_cell(
    cfg: &ExperimentConfig,
    rep: &ReplicateData,
    sd: &ScenarioData,
    method: Method,
) -> Result<CellMetrics> {
    // One train seed per scenario cell, shared by all methods, so they see
    // identical batch orders and differ only in their fairness terms.
    let train_seed = derive_seed(sd.scenario_seed, "train");
    if method == Method::Gated {
        let run = run_gated(
            cfg,
            &rep.pre.model,
            rep.pre.weight_decay,
            rep.baseline_rmse,
            &sd.recon_train,
            &sd.masked.validation,
            train_seed,
            derive_seed(sd.scenario_seed, "gate"),
        )?;
        return metrics_from(&run.selection, &run.outcome, rep, [0.0; 2], Some(run.tau));
    }
    let (terms, rho_report) = match method {
        Method::RegKnown => (reg_known_terms(&sd.recon_train)?, [0.0; 2]),
        Method::Static => (static_terms(&sd.recon_train)?, [0.0; 2]),
        Method::Robust => (robust_terms(&sd.recon_train, sd.rho, sd.forbidden_rho)?, sd.rho),
        Method::Basic | Method::Oracle | Method::Gated => {
            unreachable!("handled at the replicate level or above")
        }
    };
    let tc = train_config(cfg, rep.pre.weight_decay, cfg.train.lambda, train_seed);
    // Fairness for selection is measured on disclosed attributes only, so
    // every masked method is judged with the same yardstick regardless of
    // what it asserts about the hidden users.
    let eval = make_val_eval(sd.masked.validation.records(), known_group_indices(&sd.masked.validation)?);
    let out = train_minimax(rep.pre.model.clone(), sd.masked.train.records(), terms, &tc, eval)?;
    let sel = select_model(&out.snapshots, rep.baseline_rmse, cfg.select.rmse_budget)?;
    metrics_from(&sel, &out, rep, rho_report, None)
}

/// Maps `0..n` through `f` on up to `jobs` worker threads.  With one job (or
/// one element) this degrades to a plain sequential loop.
fn run_parallel<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().expect("worker panicked holding a result slot") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner().expect("worker panicked holding a result slot").expect("every index was dispatched")
        })
        .collect()
}

/// Runs the configured sweep.  Dataset problems surface as errors; anything
/// downstream of a loaded dataset degrades to per-row failure status.
pub fn run_sweep(cfg: &ExperimentConfig, base_seed: u64) -> Result<SweepOutcome> {
    cfg.validate()?;
    let methods = cfg.sweep.resolved_methods()?;
    let scenarios = scenario_grid(&cfg.sweep);
    let (source, inputs) = load_source(cfg)?;
    let masked_methods: Vec<Method> =
        methods.iter().copied().filter(|m| !m.scenario_independent()).collect();

    let mut rows: Vec<CellRow> = Vec::new();
    for replicate in 0..cfg.sweep.replicates {
        let rep = match build_replicate(cfg, &source, &methods, replicate, base_seed) {
            Ok(rep) => Arc::new(rep),
            Err(e) => {
                let msg = e.to_string();
                for sc in &scenarios {
                    for &m in &methods {
                        rows.push(CellRow::failed(
                            m,
                            sc.retention,
                            sc.flip_ratio,
                            sc.forbid_fraction,
                            replicate,
                            &msg,
                        ));
                    }
                }
                continue;
            }
        };

        // Scenario-independent methods: one training run, one row per
        // scenario column so downstream plots line up.
        for sc in &scenarios {
            for &m in &methods {
                match m {
                    Method::Basic => rows.push(CellRow::ok(
                        m,
                        sc.retention,
                        sc.flip_ratio,
                        sc.forbid_fraction,
                        replicate,
                        rep.basic.clone(),
                    )),
                    Method::Oracle => {
                        let cell = rep.oracle.as_ref().expect("oracle ran for this roster");
                        rows.push(match cell {
                            Ok(metrics) => CellRow::ok(
                                m,
                                sc.retention,
                                sc.flip_ratio,
                                sc.forbid_fraction,
                                replicate,
                                metrics.clone(),
                            ),
                            Err(msg) => CellRow::failed(
                                m,
                                sc.retention,
                                sc.flip_ratio,
                                sc.forbid_fraction,
                                replicate,
                                msg,
                            ),
                        });
                    }
                    _ => {}
                }
            }
        }
        if masked_methods.is_empty() {
            continue;
        }

        let scenario_datas: Vec<std::result::Result<Arc<ScenarioData>, String>> = scenarios
            .iter()
            .map(|&sc| build_scenario(cfg, &rep, sc).map(Arc::new).map_err(|e| e.to_string()))
            .collect();

        let cells: Vec<(usize, Method)> = (0..scenarios.len())
            .flat_map(|si| masked_methods.iter().map(move |&m| (si, m)))
            .collect();
        let cell_rows = run_parallel(cells.len(), cfg.sweep.jobs, |i| {
            let (si, m) = cells[i];
            let sc = scenarios[si];
            match &scenario_datas[si] {
                Ok(sd) => match run_masked_cell(cfg, &rep, sd, m) {
                    Ok(metrics) => CellRow::ok(
                        m,
                        sc.retention,
                        sc.flip_ratio,
                        sc.forbid_fraction,
                        replicate,
                        metrics,
                    ),
                    Err(e) => CellRow::failed(
                        m,
                        sc.retention,
                        sc.flip_ratio,
                        sc.forbid_fraction,
                        replicate,
                        &e.to_string(),
                    ),
                },
                Err(msg) => CellRow::failed(
                    m,
                    sc.retention,
                    sc.flip_ratio,
                    sc.forbid_fraction,
                    replicate,
                    msg,
                ),
            }
        });
        rows.extend(cell_rows);
    }
    sort_rows(&mut rows);
    Ok(SweepOutcome { kind: cfg.sweep.kind, rows, inputs })
}
