//! Command-line front end for the partbench toolkit.
//!
//! Exit codes: 0 success, 1 configuration error, 2 input parse error,
//! 3 generation produced nothing, 4 evaluation mismatch, 5 failed
//! gradient checks. Logs go to stderr; data goes to stdout or `--out`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use partbench::cooc::CoocConfig;
use partbench::gen::GenConfig;
use partbench::losses::LossWeights;

mod commands;
mod config;

use commands::{parse_format, parse_types};
use config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Parse(String),
    Generation(String),
    Evaluation(String),
    GradCheck(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Evaluation(_) => 4,
            CliError::GradCheck(_) => 5,
        }
    }

    fn stage(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse(_) => "parse",
            CliError::Generation(_) => "generate",
            CliError::Evaluation(_) => "evaluate",
            CliError::GradCheck(_) => "gradcheck",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Parse(m)
            | CliError::Generation(m)
            | CliError::Evaluation(m)
            | CliError::GradCheck(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "partbench",
    version,
    about = "Build and score explanatory part-segmentation benchmarks"
)]
struct Cli {
    /// Config file (TOML or JSON) mirroring the flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Deterministic seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, validate it, and write it in the native schema.
    Ingest(IngestCli),
    /// Partition a dataset into train/eval shares by image id.
    Split(SplitCli),
    /// Fit the part co-occurrence regressors.
    TrainCooc(TrainCoocCli),
    /// Generate multiple-choice questions with mutated distractors.
    Generate(GenerateCli),
    /// Score a response file against a question file.
    Evaluate(EvaluateCli),
    /// Print the five headline dataset counts.
    Stats(StatsCli),
    /// Verify every analytic loss gradient against finite differences.
    Gradcheck(GradcheckCli),
    /// Convert between dense masks and run-length encoding.
    Rle(RleCli),
}

#[derive(Args)]
struct IngestCli {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format: native or coco_parts.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Drop (object, part) bindings with fewer annotations than this.
    #[arg(long)]
    prune_min: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitCli {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Train fraction, strictly between 0 and 1.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    out_train: Option<PathBuf>,
    #[arg(long)]
    out_eval: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCoocCli {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Stop when the gradient infinity-norm falls below this.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateCli {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Trained co-occurrence model (from train-cooc).
    #[arg(long)]
    cooc: Option<PathBuf>,
    /// Label embeddings JSONL; required for p2w/w2p question types.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated question types: id,int,diff,p2w,w2p.
    #[arg(long)]
    types: Option<String>,
    /// Ranked candidate parts each mutation draws from.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    retry_budget: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateCli {
    #[arg(long)]
    questions: Option<PathBuf>,
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score choices by summed rather than length-normalized NLL.
    #[arg(long)]
    sum_logprob: bool,
}

#[derive(Args)]
struct StatsCli {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GradcheckCli {
    /// Random instances per checked loss.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Loss-weight config file (TOML or JSON); defaults are baked in.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct RleCli {
    #[command(subcommand)]
    direction: RleDirection,
}

#[derive(Subcommand)]
enum RleDirection {
    /// Dense mask JSON -> RLE JSON.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RLE JSON -> dense mask JSON.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn require<T>(flag: Option<T>, name: &str) -> Result<T, CliError> {
    flag.ok_or_else(|| CliError::Config(format!("--{name} is required")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(42);

    match cli.command {
        Command::Ingest(args) => {
            let format = args.format.or(file.format).unwrap_or_else(|| "native".into());
            commands::cmd_ingest(
                commands::IngestArgs {
                    input: require(args.input.or(file.dataset), "input")?,
                    format: parse_format(&format)?,
                    ontology: args.ontology.or(file.ontology),
                    prune_min: args.prune_min.or(file.prune_min),
                    out: require(args.out.or(file.out), "out")?,
                },
                seed,
            )
        }
        Command::Split(args) => {
            let format = args.format.or(file.format).unwrap_or_else(|| "native".into());
            commands::cmd_split(
                commands::SplitArgs {
                    dataset: require(args.dataset.or(file.dataset), "dataset")?,
                    format: parse_format(&format)?,
                    ratio: args.ratio.or(file.ratio).unwrap_or(0.8),
                    out_train: require(args.out_train.or(file.out_train), "out-train")?,
                    out_eval: require(args.out_eval.or(file.out_eval), "out-eval")?,
                },
                seed,
            )
        }
        Command::TrainCooc(args) => {
            let format = args.format.or(file.format).unwrap_or_else(|| "native".into());
            let defaults = CoocConfig::default();
            commands::cmd_train_cooc(commands::TrainCoocArgs {
                dataset: require(args.dataset.or(file.dataset), "dataset")?,
                format: parse_format(&format)?,
                ontology: args.ontology.or(file.ontology),
                config: CoocConfig {
                    l2: args.l2.or(file.l2).unwrap_or(defaults.l2),
                    learning_rate: args
                        .learning_rate
                        .or(file.learning_rate)
                        .unwrap_or(defaults.learning_rate),
                    tolerance: args
                        .tolerance
                        .or(file.tolerance)
                        .unwrap_or(defaults.tolerance),
                    max_iters: args.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
                    seed,
                    record_loss: false,
                },
                out: require(args.out.or(file.out), "out")?,
            })
        }
        Command::Generate(args) => {
            let format = args.format.or(file.format).unwrap_or_else(|| "native".into());
            let defaults = GenConfig::default();
            let types = match args.types.or(file.types) {
                Some(spec) => parse_types(&spec)?,
                None => defaults.types.clone(),
            };
            commands::cmd_generate(commands::GenerateArgs {
                dataset: require(args.dataset.or(file.dataset), "dataset")?,
                format: parse_format(&format)?,
                ontology: require(args.ontology.or(file.ontology), "ontology")?,
                cooc: require(args.cooc.or(file.cooc), "cooc")?,
                embeddings: args.embeddings.or(file.embeddings),
                config: GenConfig {
                    seed,
                    types,
                    top_k: args.top_k.or(file.top_k).unwrap_or(defaults.top_k),
                    retry_budget: args
                        .retry_budget
                        .or(file.retry_budget)
                        .unwrap_or(defaults.retry_budget),
                    max_mutations: defaults.max_mutations,
                },
                jobs: args.jobs.or(file.jobs),
                out: require(args.out.or(file.out), "out")?,
            })
        }
        Command::Evaluate(args) => commands::cmd_evaluate(commands::EvaluateArgs {
            questions: require(args.questions.or(file.questions), "questions")?,
            responses: require(args.responses.or(file.responses), "responses")?,
            out: args.out.or(file.out),
            sum_logprob: args.sum_logprob || file.sum_logprob.unwrap_or(false),
            seed,
        }),
        Command::Stats(args) => {
            let format = args.format.or(file.format).unwrap_or_else(|| "native".into());
            commands::cmd_stats(commands::StatsArgs {
                dataset: require(args.dataset.or(file.dataset), "dataset")?,
                format: parse_format(&format)?,
                ontology: args.ontology.or(file.ontology),
                json: args.json,
            })
        }
        Command::Gradcheck(args) => {
            let weights = match args.weights {
                Some(path) => {
                    let sub = FileConfig::load(Some(&path))?;
                    sub.weights.ok_or_else(|| {
                        CliError::Config(format!(
                            "{} does not define a [weights] table",
                            path.display()
                        ))
                    })?
                }
                None => file.weights.unwrap_or_default(),
            };
            commands::cmd_gradcheck(commands::GradcheckArgs {
                seeds: args.seeds.or(file.seeds).unwrap_or(100),
                tolerance: args.tolerance.or(file.grad_tolerance).unwrap_or(1e-4),
                weights: LossWeights { ..weights },
            })
        }
        Command::Rle(args) => match args.direction {
            RleDirection::Encode { input, out } => commands::cmd_rle_encode(&input, &out),
            RleDirection::Decode { input, out } => commands::cmd_rle_decode(&input, &out),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(buf, "{} {} {}", record.level(), record.target(), record.args())
        })
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!(target: e.stage(), "{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
