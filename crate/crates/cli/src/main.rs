mod commands;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use session_coder::data::RoleFilter;
use session_coder::model::Mode;

#[derive(Debug, Parser)]
#[command(name = "session-coder", version, about = "Session-level quality scoring of therapy transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Provider {
    Hash,
    File,
}

/// Flags shared by every data-driven command. Flags override the config
/// file, which overrides the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// therapist_only or all.
    #[arg(long)]
    pub role: Option<RoleFilter>,
    /// single or multi.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub metadata: Option<Toggle>,
    #[arg(long)]
    pub parallel_folds: Option<usize>,
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Metadata category lists; the built-in lists when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted signal.
    Synth {
        /// Generator settings as JSON; defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write utterance embeddings for a transcript file.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "hash")]
        provider: Provider,
        /// Embedding file to validate and re-key (file provider).
        #[arg(long)]
        source: Option<PathBuf>,
        /// Hash embedding dimension; the config value when absent.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Train one model on all sessions with a grouped validation split.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Grouped k-fold cross-validation.
    Crossval {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validate the tf-idf + linear SVM baseline.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validate all eight toggle combinations.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Attention curves over normalized session time.
    Saliency {
        #[command(flatten)]
        common: Common,
        /// Use a trained model instead of pooling cross-validation folds.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Paired bootstrap comparison of two reports.
    Evaluate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bootstrap_n: Option<usize>,
    },
}

fn run(cli: Cli) -> session_coder::Result<String> {
    match cli.command {
        Command::Synth { spec, seed, out } => commands::synth(spec, seed, out),
        Command::Embed {
            common,
            provider,
            source,
            dim,
        } => commands::embed(&common, provider, source, dim),
        Command::Train { common } => commands::train(&common),
        Command::Crossval { common } => commands::crossval(&common),
        Command::Baseline { common } => commands::baseline(&common),
        Command::Ablate { common } => commands::ablate(&common),
        Command::Saliency { common, model } => commands::saliency(&common, model),
        Command::Evaluate {
            a,
            b,
            common,
            bootstrap_n,
        } => commands::evaluate(&common, &a, &b, bootstrap_n),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    let _ = writeln!(std::io::stderr(), "{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string().trim(), 2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
