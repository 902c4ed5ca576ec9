use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use histostyle::evaluation::{aggregate_report, parse_scores, ReportOptions};
use histostyle::image::{
    center_crop, colorize, load_image, partition_modes, save_image, ColorMode,
};
use histostyle::style::{run_style_transfer, InitMode, StyleTransferConfig};
use histostyle::tensor::PoolMode;
use histostyle::vgg::{vgg19_layers_scaled, NetworkWeights};
use histostyle::{Error, Result};

#[derive(Parser)]
#[command(
    name = "histostyle",
    version,
    about = "Stylize CLE images with an H&E appearance and evaluate rater scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize each content image toward the style image.
    Stylize(StylizeArgs),
    /// Apply a color coding (or a seeded four-way split of codings).
    Colorize(ColorizeArgs),
    /// Cut a centered square from each image.
    Crop(CropArgs),
    /// Aggregate a scores CSV into a JSON report.
    Report(ReportArgs),
    /// Rater-facing review service.
    Review {
        #[command(subcommand)]
        command: ReviewCommand,
    },
    /// Create or inspect weight files.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
}

#[derive(Args)]
struct StylizeArgs {
    /// Content image or a directory of PNG/JPEG images.
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1600)]
    iterations: usize,
    #[arg(long, default_value = "content")]
    init: InitMode,
    #[arg(long, default_value = "max")]
    pooling: PoolMode,
    #[arg(long)]
    no_style_normalization: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Channel divisor of the network the weight file was built for.
    #[arg(long, default_value_t = 1)]
    width_divisor: usize,
    /// Images processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ColorizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(
        long,
        required_unless_present = "partition",
        conflicts_with = "partition"
    )]
    mode: Option<ColorMode>,
    /// Split inputs evenly across all four codings.
    #[arg(long, requires = "seed")]
    partition: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CropArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Crop around the center (the only supported placement).
    #[arg(long, required = true)]
    center: bool,
    #[arg(long)]
    size: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also run an unpaired Welch t-test.
    #[arg(long)]
    welch: bool,
}

#[derive(Subcommand)]
enum ReviewCommand {
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Write seeded random weights (for tests and desk runs).
    Random {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        width_divisor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a weight file and print its layers.
    Info {
        path: PathBuf,
        #[arg(long, default_value_t = 1)]
        width_divisor: usize,
    },
}

fn is_image_path(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// A single file, or the PNG/JPEG files of a directory in name order.
fn collect_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::file(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: no PNG or JPEG images",
                path.display()
            )));
        }
        Ok(files)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::InvalidInput(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

/// Runs `job` on every input; failures are logged and skipped. Fails only
/// when every input failed.
fn for_each_isolated<F>(inputs: &[PathBuf], jobs: usize, job: F) -> Result<()>
where
    F: Fn(&Path) -> Result<()> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let failures = pool.install(|| {
        inputs
            .par_iter()
            .filter(|p| match job(p) {
                Ok(()) => false,
                Err(e) => {
                    log::warn!("{}: skipped: {e}", p.display());
                    true
                }
            })
            .count()
    });
    if failures == inputs.len() {
        return Err(Error::InvalidInput(format!("all {failures} inputs failed")));
    }
    if failures > 0 {
        log::warn!("{failures} of {} inputs failed", inputs.len());
    }
    Ok(())
}

fn stylize(args: StylizeArgs) -> Result<()> {
    let spec = vgg19_layers_scaled(args.width_divisor)?;
    let weights = NetworkWeights::load(&args.weights, &spec)?;
    let style = load_image(&args.style)?;
    let config = StyleTransferConfig {
        alpha: args.alpha,
        iterations: args.iterations,
        init_mode: args.init,
        pooling: args.pooling,
        style_normalization: !args.no_style_normalization,
        seed: args.seed,
        ..StyleTransferConfig::default()
    };
    config.validate()?;
    let inputs = collect_inputs(&args.content)?;
    create_dir(&args.out)?;
    for_each_isolated(&inputs, args.jobs, |path| {
        let content = load_image(path)?;
        let output = run_style_transfer(&weights, &content, &style, &config)?;
        let name = stem(path);
        save_image(&output.image, args.out.join(format!("{name}.png")))?;
        let sidecar = args.out.join(format!("{name}.json"));
        let json = serde_json::to_vec_pretty(&output.metadata).expect("metadata serializes");
        std::fs::write(&sidecar, json).map_err(|e| Error::file(&sidecar, e))?;
        log::info!(
            "{}: loss {:.4e} -> {:.4e} in {} iterations ({:.1}s)",
            path.display(),
            output.metadata.initial_loss.total,
            output.metadata.final_loss.total,
            output.metadata.iterations_run,
            output.metadata.wall_time_seconds
        );
        Ok(())
    })
}

fn colorize_cmd(args: ColorizeArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    let modes: Vec<ColorMode> = match (args.mode, args.partition) {
        (Some(mode), _) => vec![mode; inputs.len()],
        (None, Some(parts)) => {
            if parts != ColorMode::ALL.len() {
                return Err(Error::InvalidInput(format!(
                    "--partition must be {} (one group per coding), got {parts}",
                    ColorMode::ALL.len()
                )));
            }
            partition_modes(inputs.len(), args.seed.unwrap_or(0))
        }
        (None, None) => unreachable!("clap requires --mode or --partition"),
    };
    create_dir(&args.out)?;
    let assignment: std::collections::BTreeMap<String, ColorMode> = inputs
        .iter()
        .zip(&modes)
        .map(|(p, &m)| (stem(p), m))
        .collect();
    for_each_isolated(&inputs, 1, |path| {
        let mode = assignment[&stem(path)];
        let target = args.out.join(format!("{}.{mode}.png", stem(path)));
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if mode == ColorMode::Intact && is_png {
            // Keep the exact bytes, after checking the file decodes.
            load_image(path)?;
            std::fs::copy(path, &target).map_err(|e| Error::file(&target, e))?;
            return Ok(());
        }
        save_image(&colorize(&load_image(path)?, mode), &target)
    })?;
    if args.partition.is_some() {
        let path = args.out.join("partition.json");
        let json = serde_json::to_vec_pretty(&assignment).expect("assignment serializes");
        std::fs::write(&path, json).map_err(|e| Error::file(&path, e))?;
    }
    Ok(())
}

fn crop_cmd(args: CropArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    create_dir(&args.out)?;
    for_each_isolated(&inputs, 1, |path| {
        let cropped = center_crop(&load_image(path)?, args.size)?;
        save_image(&cropped, args.out.join(format!("{}.png", stem(path))))
    })
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let bytes = std::fs::read(&args.scores).map_err(|e| Error::file(&args.scores, e))?;
    let records = parse_scores(&bytes)?;
    let report = aggregate_report(&records, ReportOptions { welch: args.welch });
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    std::fs::write(&args.out, json).map_err(|e| Error::file(&args.out, e))?;
    log::info!(
        "{} records over {} images from {} raters",
        report.record_count,
        report.image_count,
        report.rater_count
    );
    Ok(())
}

fn weights_cmd(command: WeightsCommand) -> Result<()> {
    match command {
        WeightsCommand::Random {
            out,
            width_divisor,
            seed,
        } => {
            let weights = NetworkWeights::random(&vgg19_layers_scaled(width_divisor)?, seed);
            weights.save(&out)?;
            println!("{} checksum {:08x}", out.display(), weights.checksum());
        }
        WeightsCommand::Info {
            path,
            width_divisor,
        } => {
            let weights = NetworkWeights::load(&path, &vgg19_layers_scaled(width_divisor)?)?;
            for conv in weights.convs() {
                println!("{:<8} {:?}", conv.name, conv.kernel.dims());
            }
            println!("checksum {:08x}", weights.checksum());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stylize(args) => stylize(args),
        Command::Colorize(args) => colorize_cmd(args),
        Command::Crop(args) => crop_cmd(args),
        Command::Report(args) => report_cmd(args),
        Command::Review {
            command:
                ReviewCommand::Serve {
                    manifest,
                    scores,
                    port,
                },
        } => histostyle::service::run_review_server(manifest, scores, port),
        Command::Weights { command } => weights_cmd(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
