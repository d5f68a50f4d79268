//! Renders random complex Gaussians with the tile rasterizer, checks the
//! result against the per-pixel reference and writes amplitude and phase
//! previews.
//!
//! ```text
//! cargo run --release --example rasterize -- [primitives] [width] [height] [out_dir]
//! ```

use std::f64::consts::TAU;
use std::path::PathBuf;

use holosplat::oracles::{brute_rasterize, random_gaussians};
use holosplat::pipeline::image_io::{save_image, LinearImage};
use holosplat::raster::{build_tile_index, rasterize_forward};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count: usize = args.first().map_or(Ok(200), |s| s.parse())?;
    let width: usize = args.get(1).map_or(Ok(160), |s| s.parse())?;
    let height: usize = args.get(2).map_or(Ok(96), |s| s.parse())?;
    let out = PathBuf::from(args.get(3).map_or("out/rasterize", String::as_str));
    std::fs::create_dir_all(&out)?;

    let set = random_gaussians(count, 3, width, height, 7);
    let index = build_tile_index(&set, width, height)?;
    let field = rasterize_forward(&set, width, height)?;
    let reference = brute_rasterize(&set, width, height);
    println!(
        "{count} primitives, {} tile entries, max |tiled - reference| = {:.3e}",
        index.keys().len(),
        field.max_abs_diff(&reference)
    );

    let amp: Vec<f64> = field.iter().map(|z| z.norm()).collect();
    let peak = amp.iter().copied().fold(0.0, f64::max).max(1e-12);
    let image = |data: Vec<f64>| LinearImage {
        channels: 3,
        height,
        width,
        data,
    };
    save_image(&out.join("amplitude.png"), &image(amp.iter().map(|a| a / peak).collect()))?;
    save_image(
        &out.join("phase.png"),
        &image(field.iter().map(|z| z.arg().rem_euclid(TAU) / TAU).collect()),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
