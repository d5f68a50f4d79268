//! Fits a small hologram, then encodes it as a smooth phase-only hologram
//! with both checkerboard variants and compares the reconstructions.
//!
//! ```text
//! cargo run --release --example smooth_poh -- [steps] [out_dir]
//! ```

use std::path::PathBuf;

use holosplat::convert::{dpac_encode_with, DpacMode};
use holosplat::pipeline::image_io::save_phase_png;
use holosplat::pipeline::{fit, init_gaussians, load_problem, poh_metrics, FitOptions, PlaneConfig, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(Ok(1000), |s| s.parse())?;
    let out = PathBuf::from(args.get(1).map_or("out/smooth_poh", String::as_str));
    std::fs::create_dir_all(&out)?;

    let config = RunConfig {
        width: Some(128),
        height: Some(80),
        channels: 3,
        parameter_ratio: Some(2.0),
        planes: PlaneConfig {
            count: 2,
            center_distance: 3e-3,
            spacing: Some(2e-3),
            ..PlaneConfig::default()
        },
        ..RunConfig::default()
    };
    let problem = load_problem(&config)?;
    let (w, h, c) = (problem.width(), problem.height(), problem.channels());
    let init = init_gaussians(config.gaussian_count_for(w, h), c, w, h, config.seed);
    let fitted = fit(
        &problem,
        init,
        &FitOptions {
            steps,
            ..FitOptions::default()
        },
    )?;
    println!(
        "complex hologram: PSNR {:.2} dB, SSIM {:.4}",
        fitted.metrics.mean_psnr, fitted.metrics.mean_ssim
    );

    for (name, mode) in [("verbatim", DpacMode::Verbatim), ("classical", DpacMode::Classical)] {
        let holo = dpac_encode_with(&fitted.field, mode)?;
        let m = poh_metrics(&problem, &holo, 1.0)?;
        println!("{name:>9} DPAC: PSNR {:.2} dB, SSIM {:.4}", m.mean_psnr, m.mean_ssim);
        save_phase_png(&out.join(format!("dpac_{name}.png")), &holo)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
