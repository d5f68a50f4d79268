//! Analytic rasterizer gradients against central finite differences.
//!
//! The scalar under test is `Σ wᵣ·Re U + wᵢ·Im U` with random weights, so
//! the upstream gradient is the weight field itself. Coordinates whose
//! perturbation crosses the opacity cutoff or the saturation cap are
//! reported but not compared.
//!
//! ```text
//! cargo run --release --example gradient_check -- [primitives] [channels] [seed]
//! ```

use holosplat::oracles::{
    brute_rasterize, clamp_boundary_coordinates, compare_gradients, finite_diff_grad, flatten,
    group_of, random_field, random_gaussians, unflatten, FiniteDiffSpec,
};
use holosplat::raster::rasterize_backward;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count: usize = args.first().map_or(Ok(12), |s| s.parse())?;
    let channels: usize = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(Ok(1), |s| s.parse())?;
    let (w, h) = (40, 32);

    let set = random_gaussians(count, channels, w, h, seed);
    let weights = random_field(channels, h, w, seed + 1000);
    let analytic = flatten(&rasterize_backward(&set, &weights)?);

    let fd = FiniteDiffSpec::default();
    let numeric = finite_diff_grad(
        |x| {
            let f = brute_rasterize(&unflatten(&set, x), w, h);
            f.real.iter().zip(&weights.real).map(|(a, b)| a * b).sum::<f64>()
                + f.imag.iter().zip(&weights.imag).map(|(a, b)| a * b).sum::<f64>()
        },
        &flatten(&set),
        fd,
    );
    let skip = clamp_boundary_coordinates(&set, w, h, fd.step);

    for (name, _) in set.groups() {
        let idx: Vec<usize> = (0..analytic.len()).filter(|&i| group_of(&set, i) == name).collect();
        let a: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        let n: Vec<f64> = idx.iter().map(|&i| numeric[i]).collect();
        let s: Vec<bool> = idx.iter().map(|&i| skip[i]).collect();
        let r = compare_gradients(&a, &n, &s);
        println!(
            "{name:>12}: max relative error {:.2e} over {} coordinates ({} at a clamp boundary)",
            r.max_relative_error, r.checked, r.skipped
        );
    }
    let total = compare_gradients(&analytic, &numeric, &skip);
    println!(
        "worst: {} [{}] analytic {:.6e} numeric {:.6e}",
        group_of(&set, total.worst),
        total.worst,
        analytic[total.worst],
        numeric[total.worst]
    );
    Ok(())
}
