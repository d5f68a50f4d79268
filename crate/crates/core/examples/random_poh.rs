//! Guided random phase-only conversion versus the same optimization without
//! a guide, on a small procedural scene.
//!
//! ```text
//! cargo run --release --example random_poh -- [fit_steps] [conversion_steps] [seed]
//! ```

use holosplat::convert::{convert_random_poh, RandomPohConfig};
use holosplat::pipeline::{fit, init_gaussians, load_problem, poh_metrics, FitOptions, PlaneConfig, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let fit_steps: u64 = arg(0, "2000").parse()?;
    let conversion_steps: u64 = arg(1, "600").parse()?;
    let seed: u64 = arg(2, "0").parse()?;

    let config = RunConfig {
        width: Some(128),
        height: Some(80),
        channels: 1,
        parameter_ratio: Some(2.0),
        planes: PlaneConfig {
            count: 2,
            center_distance: 3e-3,
            spacing: Some(2e-3),
            ..PlaneConfig::default()
        },
        steps: fit_steps,
        seed,
        ..RunConfig::default()
    };
    let problem = load_problem(&config)?;
    let (w, h, c) = (problem.width(), problem.height(), problem.channels());
    let init = init_gaussians(config.gaussian_count_for(w, h), c, w, h, seed);
    let options = FitOptions {
        steps: fit_steps,
        ..FitOptions::default()
    };
    let guide = fit(&problem, init, &options)?;
    println!("guide: PSNR {:.2} dB, SSIM {:.4}", guide.metrics.mean_psnr, guide.metrics.mean_ssim);

    let guided = RandomPohConfig {
        steps: conversion_steps,
        seed,
        ..RandomPohConfig::default()
    };
    for (label, rc) in [("guided", guided), ("unguided", guided.unguided())] {
        let result = convert_random_poh(&guide.set, &problem.planes, &problem.target, &problem.spec, &rc)?;
        let m = poh_metrics(&problem, &result.hologram, result.illumination)?;
        println!(
            "{label:>8}: PSNR {:.2} dB, SSIM {:.4}, illumination {:.4}, objective {:.4e} -> {:.4e}",
            m.mean_psnr,
            m.mean_ssim,
            result.illumination,
            result.losses.first().copied().unwrap_or(f64::NAN),
            result.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
