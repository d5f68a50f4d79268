//! Fixtures shared by the integration suites and the acceptance runner.
#![allow(dead_code)]

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use holosplat::oracles::{
    brute_rasterize, clamp_boundary_coordinates, compare_gradients, finite_diff_grad, flatten,
    random_field, unflatten, FiniteDiffSpec, GradientReport,
};
use holosplat::pipeline::{PlaneConfig, RunConfig};
use holosplat::propagation::transfer_function;
use holosplat::raster::rasterize_backward;
use holosplat::{ComplexField, GaussianSet, PropagationSpec};

/// Grayscale procedural scene, two planes 2 mm apart around 3 mm.
pub fn desk_config(width: usize, height: usize, ratio: f64, steps: u64, seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        width: Some(width),
        height: Some(height),
        channels: 1,
        parameter_ratio: Some(ratio),
        planes: PlaneConfig {
            count: 2,
            center_distance: 3e-3,
            spacing: Some(2e-3),
            ..PlaneConfig::default()
        },
        steps,
        seed,
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

/// `Σ w·U` taken as a real inner product over real and imaginary parts.
pub fn weighted_sum(f: &ComplexField, w: &ComplexField) -> f64 {
    let re: f64 = f.real.iter().zip(&w.real).map(|(a, b)| a * b).sum();
    let im: f64 = f.imag.iter().zip(&w.imag).map(|(a, b)| a * b).sum();
    re + im
}

/// Per-group comparison of the rasterizer backward pass with central
/// differences of the reference rasterizer, for `Σ w·U` with random `w`.
pub fn raster_gradient_check(
    set: &GaussianSet,
    width: usize,
    height: usize,
    seed: u64,
) -> Vec<(&'static str, GradientReport)> {
    let weights = random_field(set.channels(), height, width, seed);
    let analytic = rasterize_backward(set, &weights).unwrap();
    let spec = FiniteDiffSpec::default();
    let numeric = finite_diff_grad(
        |x| weighted_sum(&brute_rasterize(&unflatten(set, x), width, height), &weights),
        &flatten(set),
        spec,
    );
    let skip = clamp_boundary_coordinates(set, width, height, spec.step);
    let mut offset = 0;
    analytic
        .groups()
        .iter()
        .map(|(name, values)| {
            let r = offset..offset + values.len();
            offset += values.len();
            (*name, compare_gradients(values, &numeric[r.clone()], &skip[r]))
        })
        .collect()
}

/// Energy of the part of `field` whose spectrum passes the transfer
/// function for `distance` (no padding).
pub fn in_band_energy(field: &ComplexField, spec: &PropagationSpec, distance: f64) -> f64 {
    assert_eq!(spec.pad_factor, 1);
    let (c_count, h, w) = field.dims();
    let mut planner = FftPlanner::<f64>::new();
    let fx = planner.plan_fft_forward(w);
    let fy = planner.plan_fft_forward(h);
    let mut total = 0.0;
    for c in 0..c_count {
        let mut data: Vec<Complex64> = (0..h * w).map(|p| field.get(c, p / w, p % w)).collect();
        for row in data.chunks_exact_mut(w) {
            fx.process(row);
        }
        for x in 0..w {
            let mut col: Vec<Complex64> = (0..h).map(|y| data[y * w + x]).collect();
            fy.process(&mut col);
            for y in 0..h {
                data[y * w + x] = col[y];
            }
        }
        let grid = transfer_function(spec, distance, c, (h, w)).unwrap();
        for ky in 0..h {
            for kx in 0..w {
                if grid.get((ky + h / 2) % h, (kx + w / 2) % w).passes() {
                    total += data[ky * w + kx].norm_sqr();
                }
            }
        }
    }
    total / (h * w) as f64
}
