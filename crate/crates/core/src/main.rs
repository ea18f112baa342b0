use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vlm_tts::cli::{self, BenchModes, BenchSettings, PeakAlloc, RunConfig};
use vlm_tts::generator::{Generator, ToyModel};
use vlm_tts::theory;
use vlm_tts::types::{GenerationConfig, Modality, Strength};

#[global_allocator]
static ALLOC: PeakAlloc = PeakAlloc;

#[derive(Parser)]
#[command(name = "vlm-tts", version, about = "Test-time augmentation and adaptation for VLM decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one method on a dataset; prints the aggregate CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closed-form analysis tables as CSV.
    Theory(TheoryArgs),
    /// Wall time and peak memory of parallel and sequential decoding.
    BenchOverhead(BenchArgs),
    /// Dump the augmented prompts and images of one question record.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// Expected maximum of n standard normals.
    #[arg(long, conflicts_with = "chain", required_unless_present = "chain")]
    kn: bool,
    /// Token-level versus answer-level chain probabilities.
    #[arg(long)]
    chain: bool,
    /// Branch counts (for --kn) or the single branch count (for --chain).
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    p: f64,
    #[arg(long, default_value_t = 0.125)]
    delta: f64,
    /// Answer-level selector accuracy.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 30)]
    t_max: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
    n: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Toy model spec; a synthetic model is used when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    vocab: usize,
    #[arg(long, default_value_t = 16)]
    max_tokens: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Parallel,
    Sequential,
    Both,
}

#[derive(Args)]
struct AugmentArgs {
    /// JSON file holding one question record.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    n_aug: usize,
    #[arg(long, default_value = "high")]
    strength: Strength,
    #[arg(long, value_enum, default_value = "both")]
    modality: ModalityArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip appending "In other words," and the original prompt.
    #[arg(long)]
    no_consistency: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModalityArg {
    Text,
    Image,
    Both,
    None,
}

fn run(cli: Cli) -> vlm_tts::Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = cli::run_eval(&cfg)?;
            print!("{}", vlm_tts::evalkit::aggregate_csv(&[report.aggregate_row()]));
            if report.failures > 0 {
                eprintln!("{} of {} records failed", report.failures, report.results.len());
            }
            Ok(report.failures == 0)
        }
        Command::Theory(a) => {
            if a.kn {
                print!("{}", theory::k_n_csv(&a.n));
            } else {
                let &[n] = a.n.as_slice() else {
                    return Err(vlm_tts::Error::InvalidArgument("--chain takes a single --n".into()));
                };
                print!("{}", theory::chain_csv(a.p, a.delta, n, a.s, a.t_max)?);
                match theory::theorem_check(a.p, a.delta, n, a.s, a.t_max) {
                    Ok(t) => eprintln!("token-level overtakes answer-level at T = {t}"),
                    Err(e) => eprintln!("{e}"),
                }
            }
            Ok(true)
        }
        Command::BenchOverhead(a) => {
            let g: Box<dyn Generator> = match &a.model {
                Some(path) => Box::new(ToyModel::from_spec_file(path)?),
                None => Box::new(cli::bench_model(a.vocab, a.max_tokens)?),
            };
            let modes = match a.mode {
                ModeArg::Parallel => BenchModes::Parallel,
                ModeArg::Sequential => BenchModes::Sequential,
                ModeArg::Both => BenchModes::Both,
            };
            let settings = BenchSettings {
                max_tokens: a.max_tokens,
                repeats: a.repeats,
                ..Default::default()
            };
            let reports = cli::bench_overhead(g.as_ref(), &a.n, modes, &settings)?;
            let csv = cli::overhead_csv(&reports);
            match a.out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
        Command::Augment(a) => {
            let rec = cli::read_record(&a.input)?;
            let base = a.input.parent().map(PathBuf::from).unwrap_or_default();
            let cfg = GenerationConfig {
                n_aug: a.n_aug,
                image_strength: a.strength,
                modality: match a.modality {
                    ModalityArg::Text => Modality::Text,
                    ModalityArg::Image => Modality::Image,
                    ModalityArg::Both => Modality::Both,
                    ModalityArg::None => Modality::None,
                },
                consistency_enforcement: !a.no_consistency,
                seed: a.seed,
                ..Default::default()
            };
            cfg.validate()?;
            let dump = cli::augment_dump(&rec, &base, &cfg, None, a.seed, &a.out)?;
            println!("{}", dump.prompts_path.display());
            for p in dump.image_paths {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
