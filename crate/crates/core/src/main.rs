use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use htmask::cli::{self, CliError, CliResult, EvalArgs, FuseArgs, PipelineConfig};

#[derive(Parser)]
#[command(name = "htmask", version, about = "Grayscale-threshold fusion and mask mAP evaluation for building segmentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth and simulated R1/R2 detections.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel one-class detections (R1) using thresholds fit on two-class detections (R2).
    Fuse {
        #[arg(long, required = true)]
        image: Vec<PathBuf>,
        #[arg(long, required = true)]
        r1: Vec<PathBuf>,
        #[arg(long, required = true)]
        r2: Vec<PathBuf>,
        /// R3 file (one image) or directory (several).
        #[arg(long)]
        out: PathBuf,
        /// Threshold report CSV.
        #[arg(long)]
        report: PathBuf,
        /// Fit one threshold across all given images.
        #[arg(long)]
        pool: bool,
    },
    /// Score predictions against VIA ground truth (per-class AP, mAP, PR curves).
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        gt: Vec<PathBuf>,
        #[arg(long, num_args = 0..)]
        pred: Vec<PathBuf>,
        /// Image directory; defaults to each ground-truth file's directory.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write pr.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Run the label-budget sweep comparing R2 and R3 mAP50.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        pool: bool,
    },
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            for path in cli::cmd_synth(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Fuse {
            image,
            r1,
            r2,
            out,
            report,
            pool,
        } => {
            let r3s = cli::cmd_fuse(&FuseArgs {
                images: image,
                r1,
                r2,
                out,
                report,
                pool,
            })?;
            for r3 in r3s {
                println!("{}: {} instances", r3.image_id, r3.instances.len());
            }
        }
        Command::Eval {
            gt,
            pred,
            images,
            iou,
            out,
            svg,
        } => {
            let report = cli::cmd_eval(&EvalArgs {
                gt,
                pred,
                images,
                iou_threshold: iou,
                out,
                svg,
            })?;
            for c in &report.classes {
                println!("{}\tAP {:.4}", c.category, c.ap);
            }
            println!("mAP\t{:.4}", report.map);
        }
        Command::Pipeline {
            config,
            seed,
            out,
            iou,
            pool,
        } => {
            let mut cfg = load_config(&config, seed, out)?;
            if let Some(iou) = iou {
                cfg.iou_threshold = iou;
            }
            cfg.pool |= pool;
            println!("budget\tR2\tR3");
            for row in cli::cmd_pipeline(&cfg)? {
                println!("{}\t{:.4}\t{:.4}", row.budget, row.r2_map, row.r3_map);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
