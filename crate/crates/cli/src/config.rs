use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rsem::eval::VoteMode;
use rsem::train::CrossEntropyMode;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Every setting of every command. Keys in a JSON config file use the flag
/// names (`batches-per-epoch`, `no-dis-loss`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    // data and split
    pub data: Option<PathBuf>,
    pub format: Option<String>,
    /// `auto`, `group1`..`group5`, `counts:TRAIN,VAL,TEST` or `explicit`.
    pub split: String,
    pub train_classes: Vec<String>,
    pub val_classes: Vec<String>,
    pub test_classes: Vec<String>,

    // files and execution
    pub out: PathBuf,
    pub model: Option<PathBuf>,
    pub init_model: Option<PathBuf>,
    pub threads: usize,
    pub seed: u64,

    // architecture
    /// Falls back to the feature dimension of the data.
    pub input_dim: Option<usize>,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub subspaces: usize,
    pub separate_trunks: bool,
    pub single: bool,

    // loss
    pub alpha: f64,
    pub beta: f64,
    pub no_sup_loss: bool,
    pub no_dis_loss: bool,
    pub leave_one_out: bool,
    pub cross_entropy: CrossEntropyMode,
    pub dis_include_bias: bool,

    // schedule
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub episodes_per_batch: usize,
    pub lr: f64,
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
    pub val_episodes: usize,
    /// Save the checkpoint every this many epochs; 0 saves only at the end.
    pub checkpoint_every: usize,

    // evaluation
    pub episodes: usize,
    pub vote: VoteMode,
    pub support_batches: usize,

    // benchmark
    pub a: Vec<usize>,
    pub b: usize,
    pub rank: usize,
    pub repeats: usize,

    // gradient check
    pub eps: f64,
    pub tolerance: f64,
    pub train_tolerance: f64,

    // synthetic data
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            format: None,
            split: "auto".into(),
            train_classes: Vec::new(),
            val_classes: Vec::new(),
            test_classes: Vec::new(),
            out: PathBuf::from("out"),
            model: None,
            init_model: None,
            threads: 1,
            seed: 0,
            input_dim: None,
            hidden_dim: 512,
            output_dim: 64,
            subspaces: 30,
            separate_trunks: false,
            single: false,
            alpha: 1.0,
            beta: 1.0,
            no_sup_loss: false,
            no_dis_loss: false,
            leave_one_out: false,
            cross_entropy: CrossEntropyMode::MeanProbability,
            dis_include_bias: false,
            epochs: 80,
            batches_per_epoch: 1000,
            episodes_per_batch: 1,
            lr: 1e-3,
            n_way: 3,
            k_shot: 5,
            queries: 15,
            val_episodes: 100,
            checkpoint_every: 0,
            episodes: 600,
            vote: VoteMode::Soft,
            support_batches: 1,
            a: vec![50, 500, 5000],
            b: 64,
            rank: 4,
            repeats: 5,
            eps: 1e-5,
            tolerance: 1e-4,
            train_tolerance: 1e-3,
            classes: 12,
            per_class: 40,
            dim: 64,
            center_scale: 4.0,
            noise_sigma: 1.0,
            output: None,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Command-line overrides; unset flags leave the config file or default
/// value in place.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Feature file (CSV or binary).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Feature file format: csv or binary (default: from the extension).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Class split: auto, group1..group5, counts:TRAIN,VAL,TEST or explicit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_classes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_classes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_classes: Option<Vec<String>>,

    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Checkpoint to evaluate (default: OUT/model.fslm).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_model: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
    /// Number of random subspaces (ν).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspaces: Option<usize>,
    /// Give every subspace its own trunk layer.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub separate_trunks: bool,
    /// No-subspace variant: one head on the shared trunk.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub single: bool,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Drop the support cross-entropy term.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub no_sup_loss: bool,
    /// Drop the cosine penalty (same as --beta 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub no_dis_loss: bool,
    /// Exclude each support point from its own prototype when scoring it.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub leave_one_out: bool,
    /// mean-probability or mean-of-subspaces.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_entropy: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub dis_include_bias: bool,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes_per_batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long = "n-way", short = 'n')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_way: Option<usize>,
    #[arg(long = "k-shot", short = 'k')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_shot: Option<usize>,
    /// Queries per class.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_episodes: Option<usize>,
    /// Save the checkpoint every N epochs (0: only at the end).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    /// hard or soft.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vote: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_batches: Option<usize>,

    /// Data-point counts for the benchmark, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<usize>>,
    /// Feature dimension for the benchmark.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    /// Truncation rank for the benchmark t-SVD.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,

    /// Finite-difference step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Gradient-check tolerance with eval-mode batch norm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Gradient-check tolerance with train-mode batch norm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_tolerance: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_scale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// Output file for `synth`.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Flags {
    /// Defaults, overlaid with the config file, overlaid with the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut merged = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Map::new(),
        };
        let flags = serde_json::to_value(self)
            .map_err(|e| CliError::Usage(format!("flags: {e}")))?;
        if let Value::Object(flags) = flags {
            merged.extend(flags);
        }
        serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Usage(format!("{}: expected a JSON object", path.display()))),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}
