//! Band-limited angular spectrum propagation.
//!
//! Each channel is zero-padded (centered) to `pad_factor × (H, W)`,
//! transformed with an unscaled forward DFT, multiplied by
//! `H = e^{j·k_z·d}` on the passband and zero elsewhere, inverse transformed
//! with a `1/(N_x·N_y)` scale and cropped back to `H × W`.
//!
//! Frequencies follow the centered convention: centered index `i` maps to
//! `f = (i − ⌊N/2⌋) / (N·Δx)`. The passband is
//! `|f_x| < f_x^max ∧ |f_y| < f_y^max` with
//! `f^max = 1 / (λ·sqrt((2|d|/L)² + 1))`, intersected with an optional
//! circular aperture of radius `a` grid pixels around the spectrum center.
//!
//! The backward pass (gradient of a real loss with respect to the input
//! field, given its gradient with respect to the output) runs the same
//! pipeline with the conjugate transfer function; it is the exact adjoint of
//! the forward operator.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::complex_field::ComplexField;
use crate::error::{Error, Result};

pub const RGB_WAVELENGTHS: [f64; 3] = [639e-9, 532e-9, 473e-9];
pub const DEFAULT_PIXEL_PITCH: f64 = 3.74e-6;
pub const DEFAULT_PAD_FACTOR: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    /// Meters, one per channel.
    pub wavelengths: Vec<f64>,
    /// Meters.
    pub pixel_pitch: f64,
    pub pad_factor: usize,
    /// Aperture radius in padded-frequency-grid pixels; `0` disables it.
    pub aperture_radius: f64,
}

impl Default for PropagationSpec {
    fn default() -> Self {
        Self::with_wavelengths(RGB_WAVELENGTHS.to_vec())
    }
}

impl PropagationSpec {
    pub fn with_wavelengths(wavelengths: Vec<f64>) -> Self {
        Self {
            wavelengths,
            pixel_pitch: DEFAULT_PIXEL_PITCH,
            pad_factor: DEFAULT_PAD_FACTOR,
            aperture_radius: 0.0,
        }
    }

    /// Single green channel.
    pub fn mono() -> Self {
        Self::with_wavelengths(vec![RGB_WAVELENGTHS[1]])
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths.is_empty() {
            return Err(Error::invalid("no wavelengths given"));
        }
        if self.wavelengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("wavelengths must be positive"));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::invalid("pixel pitch must be positive"));
        }
        if self.pad_factor == 0 {
            return Err(Error::invalid("pad factor must be at least 1"));
        }
        if !(self.aperture_radius >= 0.0) {
            return Err(Error::invalid("aperture radius must be non-negative"));
        }
        Ok(())
    }

    /// Padded grid `(N_y, N_x)` for a `height × width` field.
    pub fn padded_dims(&self, height: usize, width: usize) -> (usize, usize) {
        (height * self.pad_factor, width * self.pad_factor)
    }

    fn check_field(&self, field: &ComplexField) -> Result<()> {
        self.validate()?;
        if field.channels() != self.channels() {
            return Err(Error::shape(format!(
                "field has {} channels but {} wavelengths are configured",
                field.channels(),
                self.channels()
            )));
        }
        if field.height() == 0 || field.width() == 0 {
            return Err(Error::EmptyImage {
                width: field.width(),
                height: field.height(),
            });
        }
        Ok(())
    }
}

/// One frequency sample of the transfer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferFunctionSample {
    /// Cycles per meter.
    pub fx: f64,
    pub fy: f64,
    /// Radians per meter; `0` where `k_z² ≤ 0`.
    pub kz: f64,
    pub inside_bandlimit: bool,
    pub inside_aperture: bool,
}

impl TransferFunctionSample {
    pub fn passes(&self) -> bool {
        self.inside_bandlimit && self.inside_aperture
    }

    /// `H(f_x, f_y)` for propagation over `distance`.
    pub fn value(&self, distance: f64) -> Complex64 {
        if self.passes() {
            Complex64::cis(self.kz * distance)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// Transfer-function samples on a padded grid, centered layout
/// (`samples[iy · nx + ix]`, zero frequency at `(⌊ny/2⌋, ⌊nx/2⌋)`).
#[derive(Debug, Clone)]
pub struct TransferGrid {
    pub ny: usize,
    pub nx: usize,
    pub samples: Vec<TransferFunctionSample>,
}

impl TransferGrid {
    pub fn get(&self, iy: usize, ix: usize) -> &TransferFunctionSample {
        &self.samples[iy * self.nx + ix]
    }
}

/// `f^max` along an axis of physical length `extent`.
pub fn bandlimit(wavelength: f64, distance: f64, extent: f64) -> f64 {
    let r = 2.0 * distance.abs() / extent;
    1.0 / (wavelength * (r * r + 1.0).sqrt())
}

/// Samples of the transfer function for `channel` at `distance` on a padded
/// `(ny, nx)` grid.
pub fn transfer_function(
    spec: &PropagationSpec,
    distance: f64,
    channel: usize,
    padded_dims: (usize, usize),
) -> Result<TransferGrid> {
    transfer_function_with_bandlimit(spec, distance, channel, padded_dims)
}

/// Like [`transfer_function`] but with the passband computed for
/// `bandlimit_distance` (the phase itself does not depend on the distance
/// stored in a sample).
pub fn transfer_function_with_bandlimit(
    spec: &PropagationSpec,
    bandlimit_distance: f64,
    channel: usize,
    (ny, nx): (usize, usize),
) -> Result<TransferGrid> {
    spec.validate()?;
    if ny == 0 || nx == 0 {
        return Err(Error::invalid("padded dimensions must be positive"));
    }
    let lambda = *spec
        .wavelengths
        .get(channel)
        .ok_or_else(|| Error::invalid(format!("no wavelength for channel {channel}")))?;
    let k = 2.0 * PI / lambda;
    let lx = nx as f64 * spec.pixel_pitch;
    let ly = ny as f64 * spec.pixel_pitch;
    let fx_max = bandlimit(lambda, bandlimit_distance, lx);
    let fy_max = bandlimit(lambda, bandlimit_distance, ly);
    let (cx, cy) = ((nx / 2) as f64, (ny / 2) as f64);
    let a2 = spec.aperture_radius * spec.aperture_radius;

    let mut samples = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let fy = (iy as f64 - cy) / ly;
        for ix in 0..nx {
            let fx = (ix as f64 - cx) / lx;
            let kz2 = k * k - 4.0 * PI * PI * (fx * fx + fy * fy);
            let kz = if kz2 > 0.0 { kz2.sqrt() } else { 0.0 };
            let inside_aperture = if spec.aperture_radius > 0.0 {
                let dx = ix as f64 - cx + 0.5;
                let dy = iy as f64 - cy + 0.5;
                dx * dx + dy * dy < a2
            } else {
                true
            };
            samples.push(TransferFunctionSample {
                fx,
                fy,
                kz,
                inside_bandlimit: fx.abs() < fx_max && fy.abs() < fy_max,
                inside_aperture,
            });
        }
    }
    Ok(TransferGrid { ny, nx, samples })
}

/// 2D FFT over a padded grid with centered zero-padding and cropping.
struct Fft2 {
    ny: usize,
    nx: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("ny", &self.ny)
            .field("nx", &self.nx)
            .finish()
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); rows * cols];
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, v) in out.iter_mut().enumerate() {
            *v = src[r * cols + c];
        }
    });
    dst
}

fn fft_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

impl Fft2 {
    fn new(ny: usize, nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            ny,
            nx,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    fn offsets(&self, h: usize, w: usize) -> (usize, usize) {
        ((self.ny - h) / 2, (self.nx - w) / 2)
    }

    /// Unscaled DFT of `input` (`h × w`) zero-padded into the grid.
    fn forward_padded(&self, input: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
        let (oy, ox) = self.offsets(h, w);
        let mut grid = vec![Complex64::new(0.0, 0.0); self.ny * self.nx];
        for y in 0..h {
            let dst = (oy + y) * self.nx + ox;
            grid[dst..dst + w].copy_from_slice(&input[y * w..(y + 1) * w]);
        }
        // Rows outside the padded band are zero and stay zero.
        fft_rows(
            &mut grid[oy * self.nx..(oy + h) * self.nx],
            self.nx,
            &self.row_fwd,
        );
        let mut t = transpose(&grid, self.ny, self.nx);
        fft_rows(&mut t, self.ny, &self.col_fwd);
        transpose(&t, self.nx, self.ny)
    }

    /// Scaled inverse DFT of a grid spectrum, cropped to `h × w`.
    fn inverse_cropped(&self, spectrum: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
        let (oy, ox) = self.offsets(h, w);
        let mut t = transpose(spectrum, self.ny, self.nx);
        fft_rows(&mut t, self.ny, &self.col_inv);
        let grid = transpose(&t, self.nx, self.ny);
        let mut band = grid[oy * self.nx..(oy + h) * self.nx].to_vec();
        fft_rows(&mut band, self.nx, &self.row_inv);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let row = &band[y * self.nx + ox..y * self.nx + ox + w];
            out.extend(row.iter().map(|z| z * scale));
        }
        out
    }
}

/// Transfer kernel in the FFT's natural (unshifted) order.
fn unshifted_kernel(grid: &TransferGrid, distance: f64) -> Vec<Complex64> {
    let (ny, nx) = (grid.ny, grid.nx);
    let mut out = vec![Complex64::new(0.0, 0.0); ny * nx];
    for ky in 0..ny {
        let iy = (ky + ny / 2) % ny;
        for kx in 0..nx {
            let ix = (kx + nx / 2) % nx;
            out[ky * nx + kx] = grid.get(iy, ix).value(distance);
        }
    }
    out
}

/// Per-channel spectra of a padded field, reusable across planes.
#[derive(Debug, Clone)]
pub struct Spectrum {
    channels: Vec<Vec<Complex64>>,
}

/// Precomputed propagation operators from one input plane to a fixed list of
/// distances.
#[derive(Debug)]
pub struct Propagator {
    spec: PropagationSpec,
    height: usize,
    width: usize,
    distances: Vec<f64>,
    fft: Fft2,
    /// `kernels[plane][channel]`, unshifted.
    kernels: Vec<Vec<Vec<Complex64>>>,
}

impl Propagator {
    pub fn new(
        spec: &PropagationSpec,
        height: usize,
        width: usize,
        distances: &[f64],
    ) -> Result<Self> {
        Self::with_bandlimits(spec, height, width, distances, distances)
    }

    /// Each plane's passband is computed at `bandlimit_distances[l]` instead
    /// of its propagation distance.
    pub fn with_bandlimits(
        spec: &PropagationSpec,
        height: usize,
        width: usize,
        distances: &[f64],
        bandlimit_distances: &[f64],
    ) -> Result<Self> {
        spec.validate()?;
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if distances.len() != bandlimit_distances.len() {
            return Err(Error::invalid("one bandlimit distance per plane"));
        }
        if distances.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("propagation distance must be finite"));
        }
        let (ny, nx) = spec.padded_dims(height, width);
        let kernels = distances
            .iter()
            .zip(bandlimit_distances)
            .map(|(&d, &bd)| {
                (0..spec.channels())
                    .map(|c| {
                        let grid = transfer_function_with_bandlimit(spec, bd, c, (ny, nx))?;
                        Ok(unshifted_kernel(&grid, d))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            height,
            width,
            distances: distances.to_vec(),
            fft: Fft2::new(ny, nx),
            kernels,
        })
    }

    pub fn spec(&self) -> &PropagationSpec {
        &self.spec
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn planes(&self) -> usize {
        self.distances.len()
    }

    fn check(&self, field: &ComplexField) -> Result<()> {
        self.spec.check_field(field)?;
        if field.height() != self.height || field.width() != self.width {
            return Err(Error::shape(format!(
                "propagator built for {}x{}, field is {}x{}",
                self.width,
                self.height,
                field.width(),
                field.height()
            )));
        }
        Ok(())
    }

    pub fn spectrum(&self, field: &ComplexField) -> Result<Spectrum> {
        self.check(field)?;
        let channels = (0..field.channels())
            .map(|c| {
                self.fft
                    .forward_padded(&field.channel(c), self.height, self.width)
            })
            .collect();
        Ok(Spectrum { channels })
    }

    fn apply(&self, spectrum: &Spectrum, plane: usize, conjugate: bool) -> ComplexField {
        let c_count = spectrum.channels.len();
        let mut out = ComplexField::zeros(c_count, self.height, self.width);
        for (c, spec_c) in spectrum.channels.iter().enumerate() {
            let kernel = &self.kernels[plane][c];
            let product: Vec<Complex64> = spec_c
                .iter()
                .zip(kernel)
                .map(|(u, h)| if conjugate { u * h.conj() } else { u * h })
                .collect();
            let values = self.fft.inverse_cropped(&product, self.height, self.width);
            out.set_channel(c, &values);
        }
        out
    }

    /// Field at plane `plane` from a precomputed input spectrum.
    pub fn propagate_spectrum(&self, spectrum: &Spectrum, plane: usize) -> ComplexField {
        self.apply(spectrum, plane, false)
    }

    pub fn forward(&self, field: &ComplexField, plane: usize) -> Result<ComplexField> {
        Ok(self.apply(&self.spectrum(field)?, plane, false))
    }

    /// Adjoint of [`Propagator::forward`] for plane `plane`.
    pub fn backward(&self, grad_out: &ComplexField, plane: usize) -> Result<ComplexField> {
        Ok(self.apply(&self.spectrum(grad_out)?, plane, true))
    }

    /// `Σ_l A_lᴴ g_l`, summed in the frequency domain so only one inverse
    /// transform per channel is needed.
    pub fn backward_sum(&self, grads: &[ComplexField]) -> Result<ComplexField> {
        if grads.len() != self.planes() {
            return Err(Error::shape(format!(
                "{} plane gradients for {} planes",
                grads.len(),
                self.planes()
            )));
        }
        let c_count = self.spec.channels();
        let (ny, nx) = (self.fft.ny, self.fft.nx);
        let mut total = vec![vec![Complex64::new(0.0, 0.0); ny * nx]; c_count];
        for (plane, g) in grads.iter().enumerate() {
            let s = self.spectrum(g)?;
            for (c, acc) in total.iter_mut().enumerate() {
                let kernel = &self.kernels[plane][c];
                for ((a, u), h) in acc.iter_mut().zip(&s.channels[c]).zip(kernel) {
                    *a += u * h.conj();
                }
            }
        }
        let mut out = ComplexField::zeros(c_count, self.height, self.width);
        for (c, acc) in total.iter().enumerate() {
            out.set_channel(c, &self.fft.inverse_cropped(acc, self.height, self.width));
        }
        Ok(out)
    }
}

/// Propagates `field` over `distance` meters (negative = backward).
pub fn propagate(
    field: &ComplexField,
    spec: &PropagationSpec,
    distance: f64,
) -> Result<ComplexField> {
    spec.check_field(field)?;
    Propagator::new(spec, field.height(), field.width(), &[distance])?.forward(field, 0)
}

/// Gradient with respect to the input of [`propagate`], given the gradient
/// with respect to its output.
pub fn propagate_backward(
    grad_out: &ComplexField,
    spec: &PropagationSpec,
    distance: f64,
) -> Result<ComplexField> {
    spec.check_field(grad_out)?;
    Propagator::new(spec, grad_out.height(), grad_out.width(), &[distance])?
        .backward(grad_out, 0)
}
