//! `saescope` subcommands. Each returns a [`CommandOutcome`] instead of
//! exiting so the commands can be driven in-process.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::actstore::{self, SynthConfig};
use crate::analysis;
use crate::charts::{self, Series};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::sae::{self, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    /// 0 success, 1 validation, 2 I/O, 3 numeric divergence.
    pub exit_code: i32,
    /// Diagnostic lines meant for standard error.
    pub messages: Vec<String>,
}

impl CommandOutcome {
    fn ok(messages: Vec<String>) -> Self {
        Self {
            exit_code: 0,
            messages,
        }
    }

    fn from_error(err: &Error) -> Self {
        Self {
            exit_code: err.exit_code(),
            messages: vec![format!("error: {err}")],
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "saescope",
    version,
    about = "Sparse autoencoders and layer-wise drift analysis for transformer activations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic sparse-dictionary activation file
    Synth(SynthArgs),
    /// Train a sparse autoencoder on an activation file
    Train(TrainArgs),
    /// Layer-wise cosine similarity between two directories of layer files
    Similarity(SimilarityArgs),
    /// Rank SAE features by variance across samples
    Rank(RankArgs),
    /// Per-token activations of one SAE feature for one sample
    Tokens(TokensArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    atoms: usize,
    #[arg(long)]
    sparsity: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    scale: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    activations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch loss CSV
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 2e-5)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1024)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimilarityArgs {
    /// Directory of `layer_<k>.actv` files from the pre-trained model
    #[arg(long)]
    pre: PathBuf,
    /// Directory of `layer_<k>.actv` files from the fine-tuned model
    #[arg(long)]
    post: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    activations: PathBuf,
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TokensArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    activations: PathBuf,
    #[arg(long)]
    sample: usize,
    #[arg(long)]
    feature: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            return CommandOutcome {
                exit_code: code,
                messages: e.to_string().lines().map(str::to_owned).collect(),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Similarity(a) => cmd_similarity(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Tokens(a) => cmd_tokens(a),
    };
    match result {
        Ok(messages) => CommandOutcome::ok(messages),
        Err(e) => CommandOutcome::from_error(&e),
    }
}

fn wrote(path: &Path) -> String {
    format!("wrote {}", path.display())
}

fn cmd_synth(a: SynthArgs) -> Result<Vec<String>> {
    let cfg = SynthConfig {
        dim: a.dim,
        atom_count: a.atoms,
        sparsity: a.sparsity,
        sample_count: a.samples,
        scale: a.scale,
        seed: a.seed,
    };
    let set = actstore::synth_generate(&cfg)?;
    actstore::write_activation_set(&set, &a.out)?;
    Ok(vec![wrote(&a.out)])
}

fn cmd_train(a: TrainArgs) -> Result<Vec<String>> {
    let data = actstore::read_activation_set(&a.activations)?;
    let cfg = TrainConfig {
        lambda: a.lambda,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        hidden_dim: a.hidden_dim,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (model, history) = sae::train(&data, &cfg)?;
    actstore::write_sae_model(&model, &a.out)?;
    let mut msgs = vec![wrote(&a.out)];
    if let Some(last) = history.epochs.last() {
        msgs.push(format!(
            "final epoch loss: total {:e} (mse {:e}, sparsity {:e})",
            last.total, last.mse, last.sparsity
        ));
    }
    if let Some(path) = &a.history {
        write_atomic(path, sae::history_csv(&history).as_bytes())?;
        msgs.push(wrote(path));
    }
    Ok(msgs)
}

/// Reads every `layer_<k>.actv` in `dir`, ordered by `k`.
pub fn read_layer_dir(dir: &Path) -> Result<Vec<actstore::ActivationSet>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(k) = name
            .to_str()
            .and_then(|n| n.strip_prefix("layer_"))
            .and_then(|n| n.strip_suffix(".actv"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        layers.push((k, entry.path()));
    }
    if layers.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no layer_<k>.actv files",
            dir.display()
        )));
    }
    layers.sort();
    layers
        .into_iter()
        .map(|(k, path)| {
            let set = actstore::read_activation_set(&path)?;
            if set.layer_index() != k {
                return Err(Error::Pairing(format!(
                    "{} holds layer {}",
                    path.display(),
                    set.layer_index()
                )));
            }
            Ok(set)
        })
        .collect()
}

fn cmd_similarity(a: SimilarityArgs) -> Result<Vec<String>> {
    let pre = read_layer_dir(&a.pre)?;
    let post = read_layer_dir(&a.post)?;
    let profile = analysis::similarity_profile(&pre, &post)?;
    write_atomic(&a.out, analysis::profile_csv(&profile).as_bytes())?;
    let mut msgs = vec![wrote(&a.out)];
    if let Some(svg) = &a.svg {
        let title = format!("Cosine similarity by layer: {}", profile.model_tag);
        let series = [Series {
            label: profile.dataset_tag.clone(),
            points: profile.entries.clone(),
        }];
        write_atomic(svg, charts::line_chart(&title, &series).as_bytes())?;
        msgs.push(wrote(svg));
    }
    Ok(msgs)
}

fn cmd_rank(a: RankArgs) -> Result<Vec<String>> {
    let model = actstore::read_sae_model(&a.model)?;
    let set = actstore::read_activation_set(&a.activations)?;
    let variances = analysis::feature_variances(&model, &set)?;
    let ranking = analysis::top_variable_features(&variances, a.top)?;
    write_atomic(&a.out, analysis::ranking_csv(&ranking).as_bytes())?;
    Ok(vec![wrote(&a.out)])
}

fn cmd_tokens(a: TokensArgs) -> Result<Vec<String>> {
    let model = actstore::read_sae_model(&a.model)?;
    let set = actstore::read_activation_set(&a.activations)?;
    let report = analysis::token_feature_activations(&model, &set, a.sample, a.feature)?;
    write_atomic(&a.out, analysis::report_json(&report).as_bytes())?;
    let mut msgs = vec![wrote(&a.out)];
    if let Some(svg) = &a.svg {
        let title = format!(
            "Feature {} on sample {} (layer {})",
            report.feature_index,
            report.sample_index,
            set.layer_index()
        );
        let chart = charts::bar_chart(&title, &report.tokens, &report.activations);
        write_atomic(svg, chart.as_bytes())?;
        msgs.push(wrote(svg));
    }
    Ok(msgs)
}
