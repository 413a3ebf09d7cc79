//! The `dsc` binary: argument parsing and exit-code mapping around the
//! command implementations. Exit 0 on success, 2 for usage, config, or
//! data problems, 3 when inference diverges numerically.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsc_cli::commands::{
    self, AnalyzeWhat, CorpusSource, InferOptions, SampleRef,
};
use dsc_core::DscResult;

#[derive(Parser)]
#[command(name = "dsc", version, about = "hierarchical multimodal sparse coding")]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores).
    /// Results are bitwise identical at any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn dictionaries from a corpus and write a checkpoint
    Train {
        #[arg(long)]
        config: PathBuf,
        /// corpus cache, or a manifest whose images sit next to it
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// generate the seeded toy corpus in memory instead
        #[arg(long)]
        toy_seed: Option<u64>,
        /// checkpoint output path
        #[arg(long)]
        out: PathBuf,
        /// metrics CSV path (default: checkpoint path with .metrics.csv)
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Solve one sample and report per-layer sparsity and energy
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        toy_seed: Option<u64>,
        /// sample position in the corpus
        #[arg(long)]
        index: Option<usize>,
        /// use the corpus's ambiguous probe sample instead of an index
        #[arg(long)]
        probe: bool,
        /// withhold the image
        #[arg(long)]
        no_image: bool,
        /// withhold the text
        #[arg(long)]
        no_text: bool,
        /// disable top-down feedback for this run
        #[arg(long)]
        no_feedback: bool,
        /// classify the pooled code at this layer against train-split centroids
        #[arg(long)]
        centroids: Option<String>,
        /// write nonzero coefficients to this CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect a trained model against a corpus
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        toy_seed: Option<u64>,
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Decode the missing modality from a single-modality presentation
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        toy_seed: Option<u64>,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        probe: bool,
        /// withhold the image and generate it
        #[arg(long)]
        no_image: bool,
        /// withhold the text and generate it
        #[arg(long)]
        no_text: bool,
        /// output directory for the PNGs
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the seeded two-class toy corpus to a cache file
    ToyGen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic-faces corpus to a cache file
    FacesGen {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// overrepresentation factor for the first class
        #[arg(long, default_value_t = 5)]
        multiplier: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-class average pooled activation at a layer (test split)
    Activations {
        #[arg(long)]
        layer: String,
        /// write the CSV here instead of printing it
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Activity-triggered average inputs for one neuron, as PNGs
    Ata {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        neuron: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint-layer neurons selective for a class in both modalities
    Invariants {
        /// target class (default: the corpus's most frequent class)
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value_t = 2.0)]
        ratio: f64,
    },
    /// Flattened per-sample codes at a layer, as CSV
    Export {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean code density and reconstruction energy per layer (test split)
    Sparsity,
}

fn sample_ref(index: Option<usize>, probe: bool) -> DscResult<SampleRef> {
    match (index, probe) {
        (Some(i), false) => Ok(SampleRef::Index(i)),
        (None, true) => Ok(SampleRef::Probe),
        _ => Err(dsc_core::DscError::Precondition(
            "pick exactly one sample: --index N or --probe".to_string(),
        )),
    }
}

fn dispatch(command: Command) -> DscResult<String> {
    match command {
        Command::Train {
            config,
            corpus,
            toy_seed,
            out,
            metrics,
        } => commands::cmd_train(
            &config,
            &CorpusSource { path: corpus, toy_seed },
            &out,
            metrics.as_deref(),
        ),
        Command::Infer {
            checkpoint,
            corpus,
            toy_seed,
            index,
            probe,
            no_image,
            no_text,
            no_feedback,
            centroids,
            out,
        } => {
            let opts = InferOptions {
                with_vision: !no_image,
                with_text: !no_text,
                no_feedback,
                centroid_layer: centroids,
                codes_out: out,
            };
            commands::cmd_infer(
                &checkpoint,
                &CorpusSource { path: corpus, toy_seed },
                sample_ref(index, probe)?,
                &opts,
            )
        }
        Command::Analyze {
            checkpoint,
            corpus,
            toy_seed,
            what,
        } => {
            let what = match what {
                AnalyzeCommand::Activations { layer, out } => {
                    AnalyzeWhat::Activations { layer, out }
                }
                AnalyzeCommand::Ata { layer, neuron, out } => AnalyzeWhat::Ata {
                    layer,
                    neuron,
                    out_dir: out,
                },
                AnalyzeCommand::Invariants { label, ratio } => {
                    AnalyzeWhat::Invariants { label, ratio }
                }
                AnalyzeCommand::Export { layer, out } => AnalyzeWhat::Export { layer, out },
                AnalyzeCommand::Sparsity => AnalyzeWhat::Sparsity,
            };
            commands::cmd_analyze(&checkpoint, &CorpusSource { path: corpus, toy_seed }, &what)
        }
        Command::Generate {
            checkpoint,
            corpus,
            toy_seed,
            index,
            probe,
            no_image,
            no_text,
            out,
        } => commands::cmd_generate(
            &checkpoint,
            &CorpusSource { path: corpus, toy_seed },
            sample_ref(index, probe)?,
            !no_image,
            !no_text,
            &out,
        ),
        Command::ToyGen { seed, out } => commands::cmd_toy_gen(seed, &out),
        Command::FacesGen {
            classes,
            per_class,
            multiplier,
            seed,
            out,
        } => commands::cmd_faces_gen(classes, per_class, multiplier, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the thread pool: {}", e);
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(report) => {
            print!("{}", report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
