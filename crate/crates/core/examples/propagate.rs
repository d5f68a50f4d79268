//! Band-limited angular spectrum propagation of a rasterized hologram to a
//! stack of depth planes, with the energy kept inside the crop at each one.
//!
//! ```text
//! cargo run --release --example propagate -- [out_dir]
//! ```

use std::path::PathBuf;

use holosplat::oracles::random_gaussians;
use holosplat::pipeline::image_io::{save_image, LinearImage};
use holosplat::propagation::bandlimit;
use holosplat::raster::rasterize_forward;
use holosplat::{DepthPlaneSet, PropagationSpec, Propagator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/propagate".into()));
    std::fs::create_dir_all(&out)?;
    let (w, h) = (192, 128);

    let field = rasterize_forward(&random_gaussians(300, 3, w, h, 11), w, h)?;
    let spec = PropagationSpec::default();
    let planes = DepthPlaneSet::new(5, 3e-3, 1e-3)?;
    let prop = Propagator::new(&spec, h, w, &planes.distances())?;
    let (ny, nx) = spec.padded_dims(h, w);
    let e0 = field.energy();
    println!("hologram energy {e0:.4e}, padded grid {nx}x{ny}");

    let spectrum = prop.spectrum(&field)?;
    for (l, d) in planes.distances().iter().enumerate() {
        let u = prop.propagate_spectrum(&spectrum, l);
        let fmax = bandlimit(spec.wavelengths[1], *d, nx as f64 * spec.pixel_pitch);
        println!(
            "plane {l}: d = {:.1} mm, green band limit {:.0} cycles/mm, energy in crop {:.1}%",
            d * 1e3,
            fmax * 1e-3,
            100.0 * u.energy() / e0
        );
        let intensity = u.intensity();
        let peak = intensity.iter().copied().fold(0.0, f64::max).max(1e-12);
        save_image(
            &out.join(format!("plane{l}.png")),
            &LinearImage {
                channels: 3,
                height: h,
                width: w,
                data: intensity.iter().map(|v| v / peak).collect(),
            },
        )?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
