use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use feta::pipeline::{evaluate, evaluate_dataset, Ablation, RunConfig, RunReport};
use feta::synthetic::{sinusoid_dataset, SinusoidSpec};
use feta::{AggregateConfig, Backend, DtwConfig, PreprocessConfig, ReasonerConfig, SelectConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Decomposer,
    Retriever,
    Reasoner,
    Aggregator,
}

/// Training-free multivariate time-series classification over a UEA dataset.
#[derive(Debug, Parser)]
#[command(name = "feta", version)]
struct Cli {
    /// Directory holding `<name>/<name>_TRAIN.ts` and `<name>_TEST.ts`.
    #[arg(long, default_value = "data")]
    data_root: PathBuf,
    /// Dataset name, e.g. AtrialFibrillation.
    #[arg(long, required_unless_present = "synthetic")]
    dataset: Option<String>,
    /// Run on the built-in two-class sinusoid set instead of files.
    #[arg(long)]
    synthetic: bool,

    #[arg(long, default_value_t = 128)]
    target_length: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    top_m: usize,
    #[arg(long, default_value_t = 3)]
    k_neighbors: usize,
    #[arg(long, default_value_t = 64)]
    probe_size: usize,
    /// Sakoe-Chiba half-width; unconstrained when omitted.
    #[arg(long)]
    band_radius: Option<usize>,

    #[arg(long, value_enum, default_value_t = Backend::Mock)]
    backend: Backend,
    #[arg(long, default_value = "deepseek-reasoner")]
    model: String,
    /// Full chat-completions URL.
    #[arg(long, default_value = "https://api.deepseek.com/chat/completions")]
    endpoint: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "FETA_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 300.0)]
    timeout_secs: f64,

    #[arg(long, default_value_t = 0.05)]
    clip_lo: f64,
    #[arg(long, default_value_t = 0.95)]
    clip_hi: f64,
    #[arg(long, default_value_t = 0.01)]
    smoothing_eps: f64,

    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = ".feta-cache")]
    cache_dir: PathBuf,
    /// Output directory for predictions.jsonl, summary.json and timing.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable a pipeline stage (repeatable).
    #[arg(long, value_enum)]
    ablate: Vec<Stage>,
}

impl Cli {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            data_root: self.data_root.clone(),
            dataset: self.dataset.clone().unwrap_or_else(|| "SyntheticSinusoid".into()),
            preprocess: PreprocessConfig {
                target_length: self.target_length,
                ..Default::default()
            },
            select: SelectConfig {
                alpha: self.alpha,
                top_m: self.top_m,
                probe_size: self.probe_size,
                seed: self.seed,
                ..Default::default()
            },
            dtw: DtwConfig {
                band_radius: self.band_radius,
            },
            k_neighbors: self.k_neighbors,
            reasoner: ReasonerConfig {
                backend: self.backend,
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                api_key_env: self.api_key_env.clone(),
                temperature: self.temperature,
                top_p: self.top_p,
                max_retries: self.max_retries,
                timeout_secs: self.timeout_secs,
                ..Default::default()
            },
            aggregate: AggregateConfig {
                clip_lo: self.clip_lo,
                clip_hi: self.clip_hi,
                smoothing_eps: self.smoothing_eps,
            },
            ablation: Ablation {
                decomposer: self.ablate.contains(&Stage::Decomposer),
                retriever: self.ablate.contains(&Stage::Retriever),
                reasoner: self.ablate.contains(&Stage::Reasoner),
                aggregator: self.ablate.contains(&Stage::Aggregator),
            },
            concurrency: self.concurrency,
            out_dir: self.out.clone(),
            cache_dir: self.cache_dir.clone(),
            seed: self.seed,
        }
    }
}

fn print_report(report: &RunReport) {
    println!(
        "{}: accuracy {:.4} ({}/{}), null decisions {}, invalid channel decisions {}",
        report.dataset,
        report.accuracy,
        report.correct,
        report.total,
        report.null_decisions,
        report.invalid_channel_decisions
    );
    println!("selected channels: {:?}", report.selected_channels);
    for (class, acc) in &report.per_class {
        println!("  {class}: {:.4} ({}/{})", acc.accuracy, acc.correct, acc.total);
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let cfg = cli.run_config();
    let result = if cli.synthetic {
        let spec = SinusoidSpec {
            seed: cli.seed,
            ..Default::default()
        };
        evaluate_dataset(&sinusoid_dataset(&spec), &cfg)
    } else {
        evaluate(&cfg)
    };
    match result {
        Ok(report) => {
            print_report(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
