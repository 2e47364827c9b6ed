//! Command-line entry points.
//!
//! Every subcommand reads the same TOML config (with `--set` overrides) and
//! shares one artifact directory (`--out`).  Stages chain through files, not
//! process state: `ingest` writes the canonical split triple, `pretrain` the
//! base checkpoint plus a small summary, `reconstruct` the attribute report,
//! `train` the selected fine-tuned checkpoint, `evaluate` a metric table, and
//! `sweep` the full grid reports.  Rerunning a stage with the same config and
//! `--seed` reproduces its outputs byte for byte, because all randomness is
//! derived from the base seed via per-purpose labels.
//!
//! A missing prerequisite file is reported with the stage that produces it
//! and exits with code 3; config and usage mistakes exit with 2.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{known_group_indices, make_val_eval, oracle_terms, reg_known_terms};
use crate::data::{ReconstructedDataset, SplitDataset};
use crate::dro::{robust_terms, static_terms, train_minimax, LogRow, TrainConfig, TrainOutcome};
use crate::harness::report::{sha256_hex, write_text_file};
use crate::harness::sweep::run_gated;
use crate::harness::{
    derive_seed, run_sweep, select_min_rmse, select_model, write_manifest, write_report,
    write_wide_report, ExperimentConfig, Method, Selection,
};
use crate::ingest::{
    apply_mask_plan, binarize, generate_synthetic, k_core_filter, parse_movielens_files,
    read_canonical_file, split, synthetic_preset, write_canonical_file, MaskPlan, UserMaskStatus,
};
use crate::metrics::{group_expectation, mad, rmse};
use crate::mf::{load_checkpoint_file, save_checkpoint_file, MFModel};
use crate::recon::{
    assign_random_attrs, read_recon_report_file, reconstruct_attrs, write_recon_report_file,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "drfo",
    version,
    about = "Train and audit recommenders that stay fair under partial group disclosure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).  Omitted keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set train.lambda=5`.  Repeatable;
    /// applied in order after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Artifact directory shared by all stages.
    #[arg(long, global = true, value_name = "DIR", default_value = "drfo-out")]
    out: PathBuf,

    /// Base seed.  Each stage derives its own independent stream from it, so
    /// stages can rerun in any order without disturbing each other.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or parse the source dataset, split it, and write the
    /// canonical train/validation/test triple.
    Ingest,
    /// Grid-search a base matrix-factorization model on the triple.
    Pretrain,
    /// Mask attributes per the config, fit the attribute classifier on the
    /// still-disclosed users, and write the reconstruction report.
    Reconstruct,
    /// Fine-tune the pretrained model with the configured method and keep
    /// the best snapshot.
    Train,
    /// Score a trained checkpoint on the validation and test partitions
    /// using true attributes.
    Evaluate,
    /// Run the configured replicate x scenario x method grid and write the
    /// long and wide reports.
    Sweep,
}

/// Parses arguments, runs the chosen stage, and maps errors to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg, &cli.out, cli.seed),
        Command::Pretrain => cmd_pretrain(&cfg, &cli.out, cli.seed),
        Command::Reconstruct => cmd_reconstruct(&cfg, &cli.out, cli.seed),
        Command::Train => cmd_train(&cfg, &cli.out, cli.seed),
        Command::Evaluate => cmd_evaluate(&cfg, &cli.out, cli.seed),
        Command::Sweep => cmd_sweep(&cfg, &cli.out, cli.seed),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    ExperimentConfig::from_toml_with_overrides(&text, &cli.set)
}

// ---------------------------------------------------------------------------
// Shared artifact plumbing
// ---------------------------------------------------------------------------

fn triple_paths(out: &Path) -> [PathBuf; 3] {
    ["train", "validation", "test"].map(|part| out.join(format!("dataset.{part}.tsv")))
}

/// Loads the canonical triple written by `ingest`, naming that stage when a
/// file is missing.
fn load_triple(out: &Path) -> Result<SplitDataset> {
    let paths = triple_paths(out);
    for path in &paths {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: "ingest".into(),
                path: path.display().to_string(),
            });
        }
    }
    Ok(SplitDataset {
        train: read_canonical_file(&paths[0])?,
        validation: read_canonical_file(&paths[1])?,
        test: read_canonical_file(&paths[2])?,
    })
}

fn mask_plan(cfg: &ExperimentConfig, seed: u64) -> MaskPlan {
    MaskPlan {
        retention: cfg.mask.retention,
        forbid_fraction: cfg.mask.forbid_fraction,
        seed: derive_seed(seed, "mask"),
    }
}

fn fingerprint_files(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = std::fs::read(path)?;
        out.push((path.display().to_string(), sha256_hex(&bytes)));
    }
    Ok(out)
}

fn pair_table(pairs: &[(String, String)]) -> toml::Value {
    let mut table = toml::map::Map::new();
    for (key, value) in pairs {
        table.insert(key.clone(), toml::Value::String(value.clone()));
    }
    toml::Value::Table(table)
}

/// Writes `<stage>.manifest.toml`: tool version, seed, input and output
/// fingerprints, stage-specific result numbers, and the fully resolved
/// config, so any artifact can be traced back to what produced it.
fn write_stage_manifest(
    out_dir: &Path,
    stage: &str,
    cfg: &ExperimentConfig,
    seed: u64,
    inputs: &[(String, String)],
    outputs: &[(String, String)],
    result: toml::Table,
) -> Result<()> {
    let mut root = toml::map::Map::new();
    root.insert("version".into(), toml::Value::Integer(1));
    root.insert(
        "tool".into(),
        toml::Value::String(format!("drfo {}", env!("CARGO_PKG_VERSION"))),
    );
    root.insert("stage".into(), toml::Value::String(stage.into()));
    // As a string: TOML integers are signed and the seed space is the full
    // u64 range.
    root.insert("base_seed".into(), toml::Value::String(seed.to_string()));
    if !result.is_empty() {
        root.insert("result".into(), toml::Value::Table(result));
    }
    root.insert("inputs".into(), pair_table(inputs));
    root.insert("outputs".into(), pair_table(outputs));
    let cfg_value = toml::Value::try_from(cfg)
        .map_err(|e| Error::Config(format!("could not serialise config: {e}")))?;
    root.insert("config".into(), cfg_value);
    let text = toml::to_string_pretty(&toml::Value::Table(root))
        .map_err(|e| Error::Config(format!("could not serialise manifest: {e}")))?;
    write_text_file(&out_dir.join(format!("{stage}.manifest.toml")), &text)
}

/// Sidecar describing which pretraining candidate won.  `train` reuses the
/// stored weight decay and anchors snapshot selection at the stored RMSE.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct PretrainInfo {
    learning_rate: f64,
    weight_decay: f64,
    val_rmse: f64,
}

fn read_pretrain_info(path: &Path) -> Result<PretrainInfo> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                stage: "pretrain".into(),
                path: path.display().to_string(),
            }
        } else {
            Error::Io(e)
        }
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::Integrity(format!("pretrain summary {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

fn cmd_ingest(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let (ds, inputs) = match cfg.dataset.source.as_str() {
        "synthetic" => {
            let spec = synthetic_preset(&cfg.dataset.preset)?;
            (generate_synthetic(&spec, derive_seed(seed, "dataset"))?, Vec::new())
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
            let inputs = fingerprint_files(&[ratings, users])?;
            (binarize(&filtered, cfg.dataset.rating_threshold)?, inputs)
        }
        "canonical" => {
            return Err(Error::Usage(
                "dataset.source = \"canonical\" is already ingested; point the sweep at it \
                 directly or copy the triple into the artifact directory"
                    .into(),
            ))
        }
        other => return Err(Error::Config(format!("unknown dataset source {other:?}"))),
    };
    let triple = split(&ds, &cfg.split.ratios()?, derive_seed(seed, "split"))?;
    let paths = triple_paths(out);
    write_canonical_file(&triple.train, &paths[0])?;
    write_canonical_file(&triple.validation, &paths[1])?;
    write_canonical_file(&triple.test, &paths[2])?;
    let outputs = fingerprint_files(&paths)?;

    let mut result = toml::Table::new();
    result.insert("n_users".into(), toml::Value::Integer(triple.n_users() as i64));
    result.insert("n_items".into(), toml::Value::Integer(triple.n_items() as i64));
    for (name, part) in [
        ("train_records", &triple.train),
        ("validation_records", &triple.validation),
        ("test_records", &triple.test),
    ] {
        result.insert(name.into(), toml::Value::Integer(part.len() as i64));
    }
    write_stage_manifest(out, "ingest", cfg, seed, &inputs, &outputs, result)?;
    println!(
        "ingest: {} users, {} items, {}/{}/{} records (train/validation/test) -> {}",
        triple.n_users(),
        triple.n_items(),
        triple.train.len(),
        triple.validation.len(),
        triple.test.len(),
        out.join("dataset.*.tsv").display()
    );
    Ok(())
}

fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let triple = load_triple(out)?;
    let inputs = fingerprint_files(&triple_paths(out))?;
    let pc = cfg.pretrain.pretrain_config(derive_seed(seed, "pretrain"));
    let outcome = crate::mf::pretrain(
        triple.train.records(),
        triple.validation.records(),
        triple.n_users(),
        triple.n_items(),
        &pc,
    )?;
    let ckpt = out.join("pretrained.ckpt");
    save_checkpoint_file(&ckpt, &outcome.model, pc.seed)?;
    let info = PretrainInfo {
        learning_rate: outcome.learning_rate,
        weight_decay: outcome.weight_decay,
        val_rmse: outcome.val_rmse,
    };
    let info_path = out.join("pretrain.toml");
    let info_text = toml::to_string_pretty(&info)
        .map_err(|e| Error::Config(format!("could not serialise pretrain summary: {e}")))?;
    write_text_file(&info_path, &info_text)?;
    let outputs = fingerprint_files(&[ckpt.clone(), info_path])?;

    let mut result = toml::Table::new();
    result.insert("learning_rate".into(), toml::Value::Float(info.learning_rate));
    result.insert("weight_decay".into(), toml::Value::Float(info.weight_decay));
    result.insert("val_rmse".into(), toml::Value::Float(info.val_rmse));
    write_stage_manifest(out, "pretrain", cfg, seed, &inputs, &outputs, result)?;
    println!(
        "pretrain: lr={} wd={} val_rmse={:.6} -> {}",
        info.learning_rate,
        info.weight_decay,
        info.val_rmse,
        ckpt.display()
    );
    Ok(())
}

fn cmd_reconstruct(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let triple = load_triple(out)?;
    let inputs = fingerprint_files(&triple_paths(out))?;
    let (masked, _mask) = apply_mask_plan(&triple, &mask_plan(cfg, seed))?;
    let outcome =
        reconstruct_attrs(&masked.train, &cfg.recon.recon_config(derive_seed(seed, "recon")))?;
    let report = out.join("recon.tsv");
    write_recon_report_file(&report, &outcome)?;
    let outputs = fingerprint_files(&[report.clone()])?;

    let mut result = toml::Table::new();
    result.insert("rho0".into(), toml::Value::Float(outcome.rho[0]));
    result.insert("rho1".into(), toml::Value::Float(outcome.rho[1]));
    result.insert("holdout_accuracy".into(), toml::Value::Float(outcome.holdout_accuracy));
    result.insert("n_fit".into(), toml::Value::Integer(outcome.n_fit as i64));
    result.insert("n_holdout".into(), toml::Value::Integer(outcome.n_holdout as i64));
    write_stage_manifest(out, "reconstruct", cfg, seed, &inputs, &outputs, result)?;
    println!(
        "reconstruct: holdout_accuracy={:.4} rho=[{:.6}, {:.6}] -> {}",
        outcome.holdout_accuracy,
        outcome.rho[0],
        outcome.rho[1],
        report.display()
    );
    Ok(())
}

/// Everything `train` needs to report about the run it kept.
struct TrainRun {
    selection: Selection,
    outcome: TrainOutcome,
    rho: [f64; 2],
    tau: Option<f64>,
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let method = Method::parse(&cfg.train.method)?;
    let triple = load_triple(out)?;
    let ckpt_in = out.join("pretrained.ckpt");
    let (pre_model, _) = load_checkpoint_file(&ckpt_in, "pretrain")?;
    let info_path = out.join("pretrain.toml");
    let info = read_pretrain_info(&info_path)?;
    let mut input_paths = triple_paths(out).to_vec();
    input_paths.push(ckpt_in);
    input_paths.push(info_path);

    let train_seed = derive_seed(seed, "train");
    let run = match method {
        Method::Basic | Method::Oracle => {
            train_disclosed(cfg, &triple, &pre_model, &info, method, train_seed)?
        }
        _ => {
            input_paths.push(out.join("recon.tsv"));
            train_masked(cfg, out, seed, &triple, &pre_model, &info, method, train_seed)?
        }
    };
    let inputs = fingerprint_files(&input_paths)?;

    let selected = &run.outcome.snapshots[run.selection.index];
    let ckpt_out = out.join("model.ckpt");
    save_checkpoint_file(&ckpt_out, &selected.model, train_seed)?;
    let log_path = out.join("train_log.tsv");
    write_train_log(&log_path, method, &run.outcome.log)?;
    let outputs = fingerprint_files(&[ckpt_out.clone(), log_path])?;

    let sel = &run.selection;
    let mut result = toml::Table::new();
    result.insert("method".into(), toml::Value::String(method.to_string()));
    result.insert("iteration".into(), toml::Value::Integer(sel.iteration as i64));
    result.insert("qualified".into(), toml::Value::Boolean(sel.qualified));
    result.insert("val_rmse".into(), toml::Value::Float(sel.val_rmse));
    result.insert("val_dp".into(), toml::Value::Float(sel.val_dp));
    result.insert("rho0".into(), toml::Value::Float(run.rho[0]));
    result.insert("rho1".into(), toml::Value::Float(run.rho[1]));
    if let Some(tau) = run.tau {
        result.insert("tau".into(), toml::Value::Float(tau));
    }
    write_stage_manifest(out, "train", cfg, seed, &inputs, &outputs, result)?;

    let tau_note = run.tau.map(|t| format!(" tau={t}")).unwrap_or_default();
    println!(
        "train[{method}]: iteration={} qualified={} val_rmse={:.6} val_dp={:.6}{} -> {}",
        sel.iteration,
        sel.qualified,
        sel.val_rmse,
        sel.val_dp,
        tau_note,
        ckpt_out.display()
    );
    Ok(())
}

/// The two methods that see every attribute train directly on the unmasked
/// triple.  The accuracy-only method ignores the fairness weight and keeps
/// the most accurate snapshot; the full-knowledge method is selected against
/// the pretraining RMSE anchor like the rest.
fn train_disclosed(
    cfg: &ExperimentConfig,
    triple: &SplitDataset,
    pre_model: &MFModel,
    info: &PretrainInfo,
    method: Method,
    train_seed: u64,
) -> Result<TrainRun> {
    let groups = known_group_indices(&triple.validation)?;
    let (terms, lambda) = if method == Method::Oracle {
        (oracle_terms(&triple.train)?, cfg.train.lambda)
    } else {
        (Vec::new(), 0.0)
    };
    let tc = cli_train_config(cfg, info.weight_decay, lambda, train_seed);
    let eval = make_val_eval(triple.validation.records(), groups);
    let outcome = train_minimax(pre_model.clone(), triple.train.records(), terms, &tc, eval)?;
    let selection = if method == Method::Basic {
        select_min_rmse(&outcome.snapshots)?
    } else {
        select_model(&outcome.snapshots, info.val_rmse, cfg.select.rmse_budget)?
    };
    Ok(TrainRun { selection, outcome, rho: [0.0; 2], tau: None })
}

/// Methods that work from partial disclosure: rebuild the mask from the
/// shared seed, overlay the reconstruction report (and coin-flipped
/// attributes for users who forbade inference), then train with the
/// method's fairness terms.
#[allow(clippy::too_many_arguments)]
fn train_masked(
    cfg: &ExperimentConfig,
    out: &Path,
    seed: u64,
    triple: &SplitDataset,
    pre_model: &MFModel,
    info: &PretrainInfo,
    method: Method,
    train_seed: u64,
) -> Result<TrainRun> {
    let (masked, mask) = apply_mask_plan(triple, &mask_plan(cfg, seed))?;
    let recon = read_recon_report_file(&out.join("recon.tsv"))?;
    let mut user_attrs = recon.user_attrs.clone();
    let forbidden_users = mask.users_with(UserMaskStatus::Forbidden);
    let forbidden_rho = if forbidden_users.is_empty() {
        None
    } else {
        let coins = assign_random_attrs(&forbidden_users, derive_seed(seed, "forbidden-attrs"));
        for (&user, attr) in forbidden_users.iter().zip(coins) {
            user_attrs[user as usize] = Some(attr);
        }
        Some(1.0)
    };
    let recon_train = ReconstructedDataset::from_user_attrs(masked.train.clone(), &user_attrs)?;

    if method == Method::Gated {
        let run = run_gated(
            cfg,
            pre_model,
            info.weight_decay,
            info.val_rmse,
            &recon_train,
            &masked.validation,
            train_seed,
            derive_seed(seed, "gate"),
        )?;
        return Ok(TrainRun {
            selection: run.selection,
            outcome: run.outcome,
            rho: [0.0; 2],
            tau: Some(run.tau),
        });
    }

    let (terms, rho) = match method {
        Method::RegKnown => (reg_known_terms(&recon_train)?, [0.0; 2]),
        Method::Static => (static_terms(&recon_train)?, [0.0; 2]),
        Method::Robust => (robust_terms(&recon_train, recon.rho, forbidden_rho)?, recon.rho),
        Method::Basic | Method::Oracle | Method::Gated => unreachable!("handled above"),
    };
    // Snapshot selection scores fairness only on users whose attribute is
    // actually disclosed: imputed labels are the method's guesses, not
    // measurements, so every method gets the same yardstick.
    let tc = cli_train_config(cfg, info.weight_decay, cfg.train.lambda, train_seed);
    let eval = make_val_eval(masked.validation.records(), known_group_indices(&masked.validation)?);
    let outcome = train_minimax(pre_model.clone(), masked.train.records(), terms, &tc, eval)?;
    let selection = select_model(&outcome.snapshots, info.val_rmse, cfg.select.rmse_budget)?;
    Ok(TrainRun { selection, outcome, rho, tau: None })
}

fn cli_train_config(
    cfg: &ExperimentConfig,
    weight_decay: f64,
    lambda: f64,
    seed: u64,
) -> TrainConfig {
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

/// Long-form iteration log: one line per fairness term per logged iteration,
/// with the term columns left empty when the method has none.
fn write_train_log(path: &Path, method: Method, log: &[LogRow]) -> Result<()> {
    let mut text = format!("#drfo-train-log v1 method={method} iterations={}\n", log.len());
    text.push_str("iteration\tbce\tgroup\tvalue\ttv\n");
    for row in log {
        if row.terms.is_empty() {
            let _ = writeln!(text, "{}\t{}\t\t\t", row.iteration, row.bce);
        } else {
            for term in &row.terms {
                let _ = writeln!(
                    text,
                    "{}\t{}\t{}\t{}\t{}",
                    row.iteration, row.bce, term.group, term.value, term.tv
                );
            }
        }
    }
    write_text_file(path, &text)
}

fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let triple = load_triple(out)?;
    let ckpt = out.join(&cfg.evaluate.checkpoint);
    let (model, _) = load_checkpoint_file(&ckpt, "train")?;
    if model.n_users() < triple.n_users() || model.n_items() < triple.n_items() {
        return Err(Error::Usage(format!(
            "checkpoint covers {} users x {} items but the dataset has {} x {}; \
             evaluate against the triple the model was trained on",
            model.n_users(),
            triple.n_users(),
            model.n_items(),
            triple.n_items()
        )));
    }
    let mut input_paths = triple_paths(out).to_vec();
    input_paths.push(ckpt);
    let inputs = fingerprint_files(&input_paths)?;

    let mut preds = Vec::new();
    let mut rows: Vec<(&str, f64)> = Vec::new();
    for (name, part) in [("val", &triple.validation), ("test", &triple.test)] {
        let groups = known_group_indices(part)?;
        model.predict_into(part.records(), &mut preds);
        let labels: Vec<f64> = part.records().iter().map(|r| r.rating as f64).collect();
        rows.push(match name {
            "val" => ("val_rmse", rmse(&preds, &labels)?),
            _ => ("test_rmse", rmse(&preds, &labels)?),
        });
        rows.push(match name {
            "val" => ("val_dp", mad(&preds, &groups[0], &groups[1])?),
            _ => ("test_dp", mad(&preds, &groups[0], &groups[1])?),
        });
        if name == "test" {
            rows.push(("test_group0_mean", group_expectation(&preds, &groups[0])?));
            rows.push(("test_group1_mean", group_expectation(&preds, &groups[1])?));
        }
    }

    let mut text = String::from("#drfo-eval v1\nmetric\tvalue\n");
    for (metric, value) in &rows {
        if !value.is_finite() {
            return Err(Error::Numerical(format!("{metric} is not finite")));
        }
        let _ = writeln!(text, "{metric}\t{value}");
    }
    let eval_path = out.join("evaluation.tsv");
    write_text_file(&eval_path, &text)?;
    let outputs = fingerprint_files(&[eval_path.clone()])?;

    let mut result = toml::Table::new();
    for (metric, value) in &rows {
        result.insert((*metric).into(), toml::Value::Float(*value));
    }
    write_stage_manifest(out, "evaluate", cfg, seed, &inputs, &outputs, result)?;
    for (metric, value) in &rows {
        println!("  {metric} = {value}");
    }
    println!("evaluate: -> {}", eval_path.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let outcome = run_sweep(cfg, seed)?;
    let kind = outcome.kind.name();
    let report_path = out.join("report.tsv");
    write_text_file(&report_path, &write_report(kind, &outcome.rows)?)?;
    write_text_file(&out.join("report_wide.tsv"), &write_wide_report(kind, &outcome.rows)?)?;
    let manifest = write_manifest(cfg, seed, outcome.rows.len(), &outcome.inputs)?;
    write_text_file(&out.join("sweep.manifest.toml"), &manifest)?;

    let ok = outcome.rows.iter().filter(|r| r.metrics.is_some()).count();
    println!("sweep[{kind}]: {ok}/{} cells ok -> {}", outcome.rows.len(), report_path.display());
    if ok == 0 {
        return Err(Error::Degenerate(
            "every sweep cell failed; see the status column in report.tsv".into(),
        ));
    }
    Ok(())
}
