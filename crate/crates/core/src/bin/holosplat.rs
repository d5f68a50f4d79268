use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use holosplat::convert::{convert_random_poh, dpac_encode_with, RandomPohConfig};
use holosplat::oracles::{brute_rasterize, direct_dft_propagate, random_field, random_gaussians};
use holosplat::pipeline::image_io::{load_image, save_image, save_phase_png, LinearImage};
use holosplat::pipeline::persist::{load_field, load_gaussians, save_field, FieldDtype};
use holosplat::pipeline::{
    artifacts, compute_metrics, load_problem, poh_metrics, train, PropagationConfig, RunConfig,
};
use holosplat::raster::rasterize_forward;
use holosplat::{ComplexField, Error, Propagator, PropagationSpec, Reconstruction, Result, TargetStack};

#[derive(Parser)]
#[command(name = "holosplat", version, about = "Complex Gaussian holograms")]
struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured optimization steps.
    #[arg(long, global = true)]
    steps: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertMode {
    Smooth,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Gaussian hologram and write the run's artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a fitted hologram to a phase-only PNG.
    Convert {
        #[arg(long, value_enum)]
        mode: ConvertMode,
        /// A `.cghf` field or a `.cggs` Gaussian set (random mode needs the set).
        #[arg(long)]
        input: PathBuf,
        /// Run config describing the target; required for random mode.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Propagate a stored field by a distance in meters.
    Propagate {
        #[arg(long, allow_hyphen_values = true)]
        distance: f64,
        #[arg(long)]
        input: PathBuf,
        /// `.png` writes the intensity, anything else a `.cghf` field.
        #[arg(long)]
        output: PathBuf,
        /// Run config supplying wavelengths and pixel pitch.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// PSNR/SSIM of a run's reconstructions against a target image.
    Metrics {
        /// Directory containing `recon_plane{l}.png`.
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 3)]
        channels: usize,
    },
    /// Cross-check the kernels against the brute-force references.
    #[command(hide = true)]
    Oracle {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 48)]
        size: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(steps) = cli.steps {
        config.steps = steps;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config } => {
            let config = load_config(cli, config)?;
            let outcome = train(&config)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.report.metrics).expect("metrics serialize")
            );
            Ok(())
        }
        Command::Convert {
            mode,
            input,
            config,
            output,
        } => convert(cli, *mode, input, config.as_deref(), output),
        Command::Propagate {
            distance,
            input,
            output,
            config,
        } => propagate(cli, *distance, input, output, config.as_deref()),
        Command::Metrics {
            recon,
            target,
            channels,
        } => metrics(recon, target, *channels),
        Command::Oracle { count, size } => oracle(cli.seed.unwrap_or(0), *count, *size),
    }
}

fn is_gaussian_set(path: &Path) -> Result<bool> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(bytes.starts_with(b"CGGS"))
}

fn convert(
    cli: &Cli,
    mode: ConvertMode,
    input: &Path,
    config: Option<&Path>,
    output: &Path,
) -> Result<()> {
    let config = config.map(|p| load_config(cli, p)).transpose()?;
    match mode {
        ConvertMode::Smooth => {
            let field = if is_gaussian_set(input)? {
                let config = config.as_ref().ok_or_else(|| {
                    Error::Config("rasterizing a Gaussian set needs --config for the size".into())
                })?;
                let problem = load_problem(config)?;
                rasterize_forward(&load_gaussians(input)?, problem.width(), problem.height())?
            } else {
                load_field(input)?
            };
            let dpac = config.as_ref().map(|c| c.conversion.dpac_mode).unwrap_or_default();
            let holo = dpac_encode_with(&field, dpac)?;
            save_phase_png(output, &holo)?;
            if let Some(config) = &config {
                let m = poh_metrics(&load_problem(config)?, &holo, 1.0)?;
                info!("smooth POH: PSNR {:.2} dB, SSIM {:.4}", m.mean_psnr, m.mean_ssim);
            }
        }
        ConvertMode::Random => {
            let config = config
                .ok_or_else(|| Error::Config("random conversion needs --config".into()))?;
            if !is_gaussian_set(input)? {
                return Err(Error::Config(
                    "random conversion needs a Gaussian set (.cggs) as the guide".into(),
                ));
            }
            let guide = load_gaussians(input)?;
            let problem = load_problem(&config)?;
            let rc = RandomPohConfig {
                seed: config.seed,
                steps: cli.steps.unwrap_or(config.conversion.random.steps),
                ..config.conversion.random
            };
            let result =
                convert_random_poh(&guide, &problem.planes, &problem.target, &problem.spec, &rc)?;
            save_phase_png(output, &result.hologram)?;
            let m = poh_metrics(&problem, &result.hologram, result.illumination)?;
            info!("random POH: PSNR {:.2} dB, SSIM {:.4}", m.mean_psnr, m.mean_ssim);
        }
    }
    info!("wrote {}", output.display());
    Ok(())
}

fn propagate(
    cli: &Cli,
    distance: f64,
    input: &Path,
    output: &Path,
    config: Option<&Path>,
) -> Result<()> {
    let field = load_field(input)?;
    let (c, h, w) = field.dims();
    let prop_config = match config {
        Some(p) => load_config(cli, p)?.propagation,
        None => PropagationConfig::default(),
    };
    let spec = prop_config.resolve(c)?;
    let out = Propagator::new(&spec, h, w, &[distance])?.forward(&field, 0)?;
    if output.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        save_image(
            output,
            &LinearImage {
                channels: c,
                height: h,
                width: w,
                data: out.intensity(),
            },
        )?;
    } else {
        save_field(output, &out, FieldDtype::F64)?;
    }
    info!("wrote {}", output.display());
    Ok(())
}

fn metrics(recon_dir: &Path, target: &Path, channels: usize) -> Result<()> {
    let target = load_image(target, channels)?;
    let mut planes = Vec::new();
    loop {
        let path = recon_dir.join(artifacts::recon_plane(planes.len()));
        if !path.exists() {
            break;
        }
        let img = load_image(&path, channels)?;
        if (img.width, img.height) != (target.width, target.height) {
            return Err(Error::Shape(format!(
                "{} is {}x{}, target is {}x{}",
                path.display(),
                img.width,
                img.height,
                target.width,
                target.height
            )));
        }
        planes.push(img.data);
    }
    if planes.is_empty() {
        return Err(Error::Invalid(format!(
            "no {} in {}",
            artifacts::recon_plane(0),
            recon_dir.display()
        )));
    }
    let count = planes.len();
    let recon = Reconstruction::from_vec(count, channels, target.height, target.width, planes.concat())?;
    let stack = TargetStack::without_depth(channels, target.height, target.width, target.data, count)?;
    let m = compute_metrics(&recon, &stack)?;
    println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    Ok(())
}

fn oracle(seed: u64, count: usize, size: usize) -> Result<()> {
    let (w, h) = (size, size * 3 / 4);
    let set = random_gaussians(count, 3, w, h, seed);
    let raster = rasterize_forward(&set, w, h)?.max_abs_diff(&brute_rasterize(&set, w, h));
    println!("rasterizer  {count} Gaussians {w}x{h}: max |tiled - brute| = {raster:.3e}");

    let side = size.min(holosplat::oracles::DIRECT_DFT_MAX_SIDE);
    let field: ComplexField = random_field(1, side, side, seed);
    let spec = PropagationSpec::mono();
    for d in [0.0, 2e-3, 5e-3] {
        let fast = Propagator::new(&spec, side, side, &[d])?.forward(&field, 0)?;
        let slow = direct_dft_propagate(&field, &spec, d)?;
        println!(
            "propagation {side}x{side} d = {d:.0e} m: max |fft - direct| = {:.3e}",
            fast.max_abs_diff(&slow)
        );
    }
    Ok(())
}
