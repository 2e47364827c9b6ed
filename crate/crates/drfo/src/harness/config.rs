//! Experiment configuration: a versioned TOML document with defaults for
//! every knob, plus `key.path=value` overrides applied before
//! deserialization so the command line can patch any field.

use serde::{Deserialize, Serialize};

use crate::ingest::SplitRatios;
use crate::mf::PretrainConfig;
use crate::recon::{ClassifierConfig, ReconConfig};
use crate::{Error, Result};

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; the only recognised value is 1.
    pub version: u32,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub mask: MaskSection,
    pub recon: ReconSection,
    pub pretrain: PretrainSection,
    pub train: TrainSection,
    pub select: SelectSection,
    pub gated: GatedSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: default_version(),
            dataset: DatasetSection::default(),
            split: SplitSection::default(),
            mask: MaskSection::default(),
            recon: ReconSection::default(),
            pretrain: PretrainSection::default(),
            train: TrainSection::default(),
            select: SelectSection::default(),
            gated: GatedSection::default(),
            evaluate: EvaluateSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Where the interaction data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// `"synthetic"`, `"movielens"` or `"canonical"`.
    pub source: String,
    /// Generator preset when `source = "synthetic"`.
    pub preset: String,
    /// Directory with `ratings.dat`/`users.dat` for `movielens`, or a file
    /// prefix for a pre-split `canonical` triple
    /// (`<path>.train.tsv` / `.validation.tsv` / `.test.tsv`).
    pub path: String,
    /// Ratings strictly above this value count as positive interactions.
    pub rating_threshold: u8,
    pub user_k_core: u32,
    pub item_k_core: u32,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: "synthetic".into(),
            preset: "ml-desk".into(),
            path: String::new(),
            rating_threshold: 3,
            user_k_core: 5,
            item_k_core: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train: 0.7, validation: 0.15, test: 0.15 }
    }
}

impl SplitSection {
    pub fn ratios(&self) -> Result<SplitRatios> {
        let ratios =
            SplitRatios { train: self.train, validation: self.validation, test: self.test };
        ratios.validate()?;
        Ok(ratios)
    }
}

/// Disclosure scenario for single-run commands.  Sweeps override the varying
/// column per scenario and keep the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    /// Fraction of users whose sensitive attribute stays disclosed.
    pub retention: f64,
    /// Fraction of the masked users who additionally forbid reconstruction.
    pub forbid_fraction: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection { retention: 0.3, forbid_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub holdout_fraction: f64,
    pub reg: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Weight holdout error rates by interaction counts instead of users.
    pub interaction_weighted: bool,
    /// Additive slack on the estimated error rates, clamped to [0, 1].
    pub safety_margin: f64,
}

impl Default for ReconSection {
    fn default() -> Self {
        let classifier = ClassifierConfig::default();
        ReconSection {
            holdout_fraction: 0.2,
            reg: classifier.reg,
            tol: classifier.tol,
            max_iters: classifier.max_iters,
            interaction_weighted: false,
            safety_margin: 0.0,
        }
    }
}

impl ReconSection {
    pub fn recon_config(&self, seed: u64) -> ReconConfig {
        ReconConfig {
            holdout_fraction: self.holdout_fraction,
            seed,
            classifier: ClassifierConfig {
                reg: self.reg,
                tol: self.tol,
                max_iters: self.max_iters,
            },
            interaction_weighted: self.interaction_weighted,
            safety_margin: self.safety_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub embedding_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let cfg = PretrainConfig::default();
        PretrainSection {
            learning_rates: cfg.learning_rates,
            weight_decays: cfg.weight_decays,
            embedding_dim: cfg.embedding_dim,
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            patience: cfg.patience,
        }
    }
}

impl PretrainSection {
    pub fn pretrain_config(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            learning_rates: self.learning_rates.clone(),
            weight_decays: self.weight_decays.clone(),
            embedding_dim: self.embedding_dim,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Method trained by the single-run `train` command (sweeps carry their
    /// own roster): basic, oracle, reg-known, static, gated or robust.
    pub method: String,
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fairness weight; 0 disables the fairness terms entirely.
    pub lambda: f64,
    pub ascent_rate: f64,
    pub ascent_steps: usize,
    pub snapshot_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            method: "robust".into(),
            iterations: 500,
            learning_rate: 1e-3,
            batch_size: 1024,
            lambda: 10.0,
            ascent_rate: 1e-3,
            ascent_steps: 1,
            snapshot_every: 25,
        }
    }
}

/// Settings for the single-run `evaluate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Checkpoint file (relative to the artifact directory) to evaluate.
    pub checkpoint: String,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { checkpoint: "model.ckpt".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    /// Checkpoint qualifies while `val_rmse <= baseline_rmse / rmse_budget`.
    pub rmse_budget: f64,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection { rmse_budget: 0.98 }
    }
}

/// Confidence gate for the `gated` method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatedSection {
    /// Candidate confidence thresholds; the one with the lowest selected
    /// validation disparity wins (ties keep the smaller threshold).
    pub taus: Vec<f64>,
}

impl Default for GatedSection {
    fn default() -> Self {
        GatedSection { taus: vec![0.5, 0.6, 0.7, 0.8, 0.9] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Vary the disclosure retention ratio.
    Retention,
    /// Fix retention, replace the reconstructor with truth plus a controlled
    /// rate of injected label flips.
    Noise,
    /// Fix retention, vary the share of masked users who forbid inference.
    Forbidden,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Retention => "retention",
            SweepKind::Noise => "noise",
            SweepKind::Forbidden => "forbidden",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    /// Retention grid for `kind = "retention"`.
    pub retentions: Vec<f64>,
    /// Flip-ratio grid for `kind = "noise"`.
    pub flip_ratios: Vec<f64>,
    /// Forbid-fraction grid for `kind = "forbidden"`.
    pub forbid_fractions: Vec<f64>,
    /// Fixed retention used by the noise and forbidden sweeps.
    pub fixed_retention: f64,
    /// Number of independent replicates.
    pub replicates: u64,
    /// Methods to run; defaults depend on the sweep kind when empty.
    pub methods: Vec<String>,
    /// Worker threads for independent cells.
    pub jobs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kind: SweepKind::Retention,
            retentions: vec![0.1, 0.3, 0.5],
            flip_ratios: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            forbid_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            fixed_retention: 0.3,
            replicates: 5,
            methods: Vec::new(),
            jobs: 1,
        }
    }
}

impl SweepSection {
    /// The methods to run, falling back to the kind's default roster.
    pub fn resolved_methods(&self) -> Result<Vec<super::Method>> {
        use super::Method;
        if self.methods.is_empty() {
            return Ok(match self.kind {
                SweepKind::Retention => vec![
                    Method::Basic,
                    Method::Oracle,
                    Method::RegKnown,
                    Method::Static,
                    Method::Robust,
                ],
                SweepKind::Noise => vec![Method::RegKnown, Method::Static, Method::Robust],
                SweepKind::Forbidden => vec![Method::Static, Method::Robust],
            });
        }
        let mut out = Vec::with_capacity(self.methods.len());
        for name in &self.methods {
            let m = Method::parse(name)?;
            if out.contains(&m) {
                return Err(Error::Config(format!("method {name:?} listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses a TOML document into a config, rejecting unknown fields.
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config is not valid TOML: {e}")))?;
        Self::from_value(value)
    }

    fn from_value(value: toml::Value) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            value.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a TOML document and applies `key.path=value` overrides on the
    /// raw document before deserialization.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config is not valid TOML: {e}")))?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        Self::from_value(value)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("could not serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected 1)",
                self.version
            )));
        }
        match self.dataset.source.as_str() {
            "synthetic" | "movielens" | "canonical" => {}
            other => {
                return Err(Error::Config(format!(
                    "dataset.source must be synthetic, movielens or canonical, got {other:?}"
                )))
            }
        }
        if self.dataset.source != "synthetic" && self.dataset.path.is_empty() {
            return Err(Error::Config(format!(
                "dataset.source = {:?} needs dataset.path",
                self.dataset.source
            )));
        }
        self.split.ratios()?;
        check_unit("mask.retention", self.mask.retention)?;
        check_unit("mask.forbid_fraction", self.mask.forbid_fraction)?;
        check_unit("recon.holdout_fraction", self.recon.holdout_fraction)?;
        if !(self.recon.reg.is_finite() && self.recon.reg >= 0.0) {
            return Err(Error::Config(format!(
                "recon.reg must be non-negative, got {}",
                self.recon.reg
            )));
        }
        check_positive("recon.tol", self.recon.tol)?;
        check_unit("recon.safety_margin", self.recon.safety_margin)?;
        if self.pretrain.learning_rates.is_empty() || self.pretrain.weight_decays.is_empty() {
            return Err(Error::Config("pretrain grids must be non-empty".into()));
        }
        for &lr in &self.pretrain.learning_rates {
            check_positive("pretrain.learning_rates", lr)?;
        }
        for &wd in &self.pretrain.weight_decays {
            if !(wd.is_finite() && wd >= 0.0) {
                return Err(Error::Config(format!(
                    "pretrain.weight_decays must be non-negative, got {wd}"
                )));
            }
        }
        if self.pretrain.embedding_dim == 0 {
            return Err(Error::Config("pretrain.embedding_dim must be at least 1".into()));
        }
        if self.pretrain.batch_size == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.pretrain.max_epochs == 0 {
            return Err(Error::Config("pretrain.max_epochs must be at least 1".into()));
        }
        super::Method::parse(&self.train.method)?;
        check_positive("train.learning_rate", self.train.learning_rate)?;
        if !(self.train.lambda.is_finite() && self.train.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "train.lambda must be non-negative, got {}",
                self.train.lambda
            )));
        }
        check_positive("train.ascent_rate", self.train.ascent_rate)?;
        if self.train.iterations == 0 || self.train.snapshot_every == 0 {
            return Err(Error::Config(
                "train.iterations and train.snapshot_every must be at least 1".into(),
            ));
        }
        if !(self.select.rmse_budget.is_finite()
            && self.select.rmse_budget > 0.0
            && self.select.rmse_budget <= 1.0)
        {
            return Err(Error::Config(format!(
                "select.rmse_budget must lie in (0, 1], got {}",
                self.select.rmse_budget
            )));
        }
        if self.gated.taus.is_empty() {
            return Err(Error::Config("gated.taus must be non-empty".into()));
        }
        if self.evaluate.checkpoint.is_empty() {
            return Err(Error::Config("evaluate.checkpoint must name a file".into()));
        }
        for &tau in &self.gated.taus {
            check_unit("gated.taus", tau)?;
        }
        let sweep = &self.sweep;
        for &r in &sweep.retentions {
            check_unit("sweep.retentions", r)?;
        }
        for &f in &sweep.flip_ratios {
            check_unit("sweep.flip_ratios", f)?;
        }
        for &b in &sweep.forbid_fractions {
            check_unit("sweep.forbid_fractions", b)?;
        }
        check_unit("sweep.fixed_retention", sweep.fixed_retention)?;
        let grid = match sweep.kind {
            SweepKind::Retention => &sweep.retentions,
            SweepKind::Noise => &sweep.flip_ratios,
            SweepKind::Forbidden => &sweep.forbid_fractions,
        };
        if grid.is_empty() {
            return Err(Error::Config(format!(
                "sweep.kind = {:?} has an empty scenario grid",
                sweep.kind.name()
            )));
        }
        if sweep.replicates == 0 {
            return Err(Error::Config("sweep.replicates must be at least 1".into()));
        }
        if sweep.jobs == 0 {
            return Err(Error::Config("sweep.jobs must be at least 1".into()));
        }
        sweep.resolved_methods()?;
        Ok(())
    }
}

/// Applies one `key.path=value` override to a TOML document in place.
///
/// The value side is parsed as a TOML literal (`0.5`, `true`, `[1, 2]`,
/// `"text"`); anything that does not parse is taken as a bare string, so
/// `--set dataset.preset=ml-desk` works without inner quotes.
pub fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override {spec:?} is not of the form key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(Error::Usage(format!("override {spec:?} has an empty key")));
    }
    let value = parse_override_value(raw)?;
    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Usage(format!("override key {path:?} has an empty segment")));
    }
    for seg in &segments[..segments.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::Usage(format!("override key {path:?} walks through a non-table value"))
        })?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let last = segments[segments.len() - 1];
    let table = node.as_table_mut().ok_or_else(|| {
        Error::Usage(format!("override key {path:?} walks through a non-table value"))
    })?;
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> Result<toml::Value> {
    if raw.is_empty() {
        return Ok(toml::Value::String(String::new()));
    }
    let wrapped = format!("x = {raw}");
    if let Ok(table) = wrapped.parse::<toml::Table>() {
        if let Some(v) = table.get("x") {
            return Ok(v.clone());
        }
    }
    Ok(toml::Value::String(raw.to_string()))
}
