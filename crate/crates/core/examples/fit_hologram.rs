//! Fits a complex Gaussian hologram to the procedural scene and writes the
//! run's artifacts.
//!
//! ```text
//! cargo run --release --example fit_hologram -- [width] [height] [steps] [ratio] [out_dir]
//! ```

use std::path::PathBuf;

use holosplat::pipeline::{train, PlaneConfig, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());

    let config = RunConfig {
        width: Some(arg(0, "256").parse()?),
        height: Some(arg(1, "160").parse()?),
        steps: arg(2, "2000").parse()?,
        parameter_ratio: Some(arg(3, "2").parse()?),
        output_dir: PathBuf::from(arg(4, "out/fit_hologram")),
        channels: 1,
        planes: PlaneConfig {
            count: 2,
            center_distance: 3e-3,
            spacing: Some(2e-3),
            ..PlaneConfig::default()
        },
        ..RunConfig::default()
    };
    let outcome = train(&config)?;
    let m = &outcome.report.metrics;
    println!(
        "{} Gaussians, mean PSNR {:.2} dB, mean SSIM {:.4}, per-plane PSNR {:?}",
        outcome.report.gaussian_count, m.mean_psnr, m.mean_ssim, m.psnr_per_plane
    );
    println!("artifacts in {}", outcome.output_dir.display());
    Ok(())
}
