//! Brute-force reference implementations used to check the fast kernels.
//!
//! Nothing here calls into the rasterizer, propagation or loss kernels; the
//! arithmetic is written out again from the defining formulas. Everything
//! is double precision and single-threaded.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex_field::ComplexField;
use crate::convert::DpacMode;
use crate::error::{Error, Result};
use crate::field::GaussianSet;
use crate::loss::{Reconstruction, TargetStack};
use crate::propagation::PropagationSpec;

/// Largest unpadded side accepted by [`direct_dft_propagate`].
pub const DIRECT_DFT_MAX_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffSpec {
    pub step: f64,
}

impl Default for FiniteDiffSpec {
    fn default() -> Self {
        Self { step: 1e-4 }
    }
}

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    spec: FiniteDiffSpec,
) -> Vec<f64> {
    assert!(spec.step > 0.0);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + spec.step;
            let up = f(&probe);
            probe[i] = x[i] - spec.step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * spec.step)
        })
        .collect()
}

/// Below this magnitude a gradient entry is compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, GRADIENT_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR)
}

/// Worst entry of an analytic-versus-numeric gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub max_relative_error: f64,
    /// Flat index of the worst entry.
    pub worst: usize,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares `analytic` with `numeric`, ignoring entries where `skip` is set.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], skip: &[bool]) -> GradientReport {
    assert_eq!(analytic.len(), numeric.len());
    assert_eq!(analytic.len(), skip.len());
    let mut report = GradientReport {
        max_relative_error: 0.0,
        worst: 0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..analytic.len() {
        if skip[i] {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let e = relative_error(analytic[i], numeric[i]);
        if e > report.max_relative_error {
            report.max_relative_error = e;
            report.worst = i;
        }
    }
    report
}

/// Every parameter of `set`, group by group in declaration order.
pub fn flatten(set: &GaussianSet) -> Vec<f64> {
    set.groups().iter().flat_map(|(_, v)| v.iter().copied()).collect()
}

/// Inverse of [`flatten`] for a set shaped like `template`.
pub fn unflatten(template: &GaussianSet, values: &[f64]) -> GaussianSet {
    let mut out = template.clone();
    let mut offset = 0;
    for (_, group) in out.groups_mut() {
        let len = group.len();
        group.copy_from_slice(&values[offset..offset + len]);
        offset += len;
    }
    assert_eq!(offset, values.len(), "value count does not match the template");
    out
}

/// Parameter group name of flat index `i`.
pub fn group_of(set: &GaussianSet, mut i: usize) -> &'static str {
    for (name, values) in set.groups() {
        if i < values.len() {
            return name;
        }
        i -= values.len();
    }
    panic!("index past the end of the parameter vector")
}

/// Flags flat coordinates whose `±step` perturbation changes the
/// [`Activity`] of any `(pixel, primitive)` pair. Finite differences across
/// a cutoff or saturation boundary measure a jump, not a derivative.
pub fn clamp_boundary_coordinates(
    set: &GaussianSet,
    width: usize,
    height: usize,
    step: f64,
) -> Vec<bool> {
    let base = activity_map(set, width, height);
    let x = flatten(set);
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let mut crosses = false;
            for delta in [step, -step] {
                probe[i] = x[i] + delta;
                crosses |= activity_map(&unflatten(set, &probe), width, height) != base;
            }
            probe[i] = x[i];
            crosses
        })
        .collect()
}

/// One primitive's physical parameters, recomputed from scratch.
struct Splat {
    mean: [f64; 2],
    /// Row-major `Σ⁻¹`.
    inv: [[f64; 2]; 2],
    opacity: f64,
    amp: Vec<f64>,
    phase: Vec<f64>,
}

fn splat(set: &GaussianSet, n: usize, width: usize, height: usize) -> Splat {
    let c = set.channels();
    let mean = [
        0.5 * (1.0 + set.pre_position[2 * n].tanh()) * width as f64,
        0.5 * (1.0 + set.pre_position[2 * n + 1].tanh()) * height as f64,
    ];
    let s = [
        set.pre_scale[2 * n].exp() + 0.1,
        set.pre_scale[2 * n + 1].exp() + 0.1,
    ];
    let t = set.rotation[n];
    let r = [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
    // Σ = R · diag(s²) · Rᵀ + 0.1·I
    let mut sigma = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                acc += r[i][k] * s[k] * s[k] * r[j][k];
            }
            sigma[i][j] = acc + if i == j { 0.1 } else { 0.0 };
        }
    }
    let det = (sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0]).max(1e-10);
    let inv = [
        [sigma[1][1] / det, -sigma[0][1] / det],
        [-sigma[1][0] / det, sigma[0][0] / det],
    ];
    Splat {
        mean,
        inv,
        opacity: 1.0 / (1.0 + (-set.pre_opacity[n]).exp()),
        amp: set.amplitude[n * c..(n + 1) * c]
            .iter()
            .map(|a| a.max(0.0).min(1.0))
            .collect(),
        phase: set.phase[n * c..(n + 1) * c].to_vec(),
    }
}

/// Contribution state of one `(pixel, primitive)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Skipped,
    Active,
    /// `α·G ≥ 0.99`.
    Saturated,
    /// Exponent clamped at −50 (still above the cutoff).
    PowerClamped,
}

fn evaluate(sp: &Splat, px: f64, py: f64) -> (f64, Activity) {
    let d = [px - sp.mean[0], py - sp.mean[1]];
    let mut q = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            q += d[i] * sp.inv[i][j] * d[j];
        }
    }
    let power = -0.5 * q;
    let g = if power < -50.0 { (-50.0f64).exp() } else { power.exp() };
    let raw = sp.opacity * g;
    let a = if raw > 0.99 { 0.99 } else { raw };
    if a < 1.0 / 255.0 {
        (0.0, Activity::Skipped)
    } else if raw >= 0.99 {
        (a, Activity::Saturated)
    } else if power <= -50.0 {
        (a, Activity::PowerClamped)
    } else {
        (a, Activity::Active)
    }
}

/// Plain double loop over every pixel and every primitive.
pub fn brute_rasterize(set: &GaussianSet, width: usize, height: usize) -> ComplexField {
    let c = set.channels();
    let splats: Vec<Splat> = (0..set.len())
        .map(|n| splat(set, n, width, height))
        .collect();
    let mut out = ComplexField::zeros(c, height, width);
    for y in 0..height {
        for x in 0..width {
            for sp in &splats {
                let (a, state) = evaluate(sp, x as f64, y as f64);
                if state == Activity::Skipped {
                    continue;
                }
                for ch in 0..c {
                    let v = Complex64::from_polar(sp.amp[ch] * a, sp.phase[ch]);
                    let i = (ch * height + y) * width + x;
                    out.real[i] += v.re;
                    out.imag[i] += v.im;
                }
            }
        }
    }
    out
}

/// [`Activity`] of every `(pixel, primitive)` pair, pixel-major.
pub fn activity_map(set: &GaussianSet, width: usize, height: usize) -> Vec<Activity> {
    let splats: Vec<Splat> = (0..set.len())
        .map(|n| splat(set, n, width, height))
        .collect();
    let mut out = Vec::with_capacity(width * height * splats.len());
    for y in 0..height {
        for x in 0..width {
            for sp in &splats {
                out.push(evaluate(sp, x as f64, y as f64).1);
            }
        }
    }
    out
}

/// Propagation evaluated with explicit DFT sums on the zero-padded grid.
pub fn direct_dft_propagate(
    field: &ComplexField,
    spec: &PropagationSpec,
    distance: f64,
) -> Result<ComplexField> {
    direct_dft_propagate_with_bandlimit(field, spec, distance, distance)
}

pub fn direct_dft_propagate_with_bandlimit(
    field: &ComplexField,
    spec: &PropagationSpec,
    distance: f64,
    bandlimit_distance: f64,
) -> Result<ComplexField> {
    let (c_count, h, w) = field.dims();
    if h > DIRECT_DFT_MAX_SIDE || w > DIRECT_DFT_MAX_SIDE {
        return Err(Error::invalid(format!(
            "direct DFT oracle is limited to {DIRECT_DFT_MAX_SIDE}x{DIRECT_DFT_MAX_SIDE}, got {w}x{h}"
        )));
    }
    if c_count != spec.wavelengths.len() {
        return Err(Error::shape("channel count differs from wavelength count"));
    }
    let ny = h * spec.pad_factor;
    let nx = w * spec.pad_factor;
    let (oy, ox) = ((ny - h) / 2, (nx - w) / 2);
    let (cy, cx) = ((ny / 2) as i64, (nx / 2) as i64);
    let lx = nx as f64 * spec.pixel_pitch;
    let ly = ny as f64 * spec.pixel_pitch;

    // exp(−2πj·m/N) for m = 0..N
    let table = |n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|m| Complex64::cis(-2.0 * PI * m as f64 / n as f64))
            .collect()
    };
    let ty = table(ny);
    let tx = table(nx);
    let wrap = |q: i64, n: usize| q.rem_euclid(n as i64) as usize;

    let mut out = ComplexField::zeros(c_count, h, w);
    for ch in 0..c_count {
        let lambda = spec.wavelengths[ch];
        let k = 2.0 * PI / lambda;
        let bx = 1.0 / (lambda * ((2.0 * bandlimit_distance / lx).powi(2) + 1.0).sqrt());
        let by = 1.0 / (lambda * ((2.0 * bandlimit_distance / ly).powi(2) + 1.0).sqrt());

        // Forward DFT, centered frequency layout. Only the unpadded window
        // is non-zero.
        let mut spectrum = vec![Complex64::new(0.0, 0.0); ny * nx];
        for iy in 0..ny {
            let qy = iy as i64 - cy;
            for ix in 0..nx {
                let qx = ix as i64 - cx;
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    let wy = ty[(wrap(qy, ny) * (y + oy)) % ny];
                    for x in 0..w {
                        let wx = tx[(wrap(qx, nx) * (x + ox)) % nx];
                        acc += field.get(ch, y, x) * wy * wx;
                    }
                }
                spectrum[iy * nx + ix] = acc;
            }
        }

        // Transfer function.
        for iy in 0..ny {
            let fy = (iy as f64 - cy as f64) / ly;
            for ix in 0..nx {
                let fx = (ix as f64 - cx as f64) / lx;
                let mut pass = fx.abs() < bx && fy.abs() < by;
                if spec.aperture_radius > 0.0 {
                    let dx = ix as f64 - cx as f64 + 0.5;
                    let dy = iy as f64 - cy as f64 + 0.5;
                    pass &= dx * dx + dy * dy < spec.aperture_radius * spec.aperture_radius;
                }
                let s = &mut spectrum[iy * nx + ix];
                if pass {
                    let kz2 = k * k - (2.0 * PI).powi(2) * (fx * fx + fy * fy);
                    let kz = if kz2 > 0.0 { kz2.sqrt() } else { 0.0 };
                    let phase = kz * distance;
                    *s *= Complex64::new(phase.cos(), phase.sin());
                } else {
                    *s = Complex64::new(0.0, 0.0);
                }
            }
        }

        // Inverse DFT, evaluated only on the cropped window.
        let norm = 1.0 / (nx * ny) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for iy in 0..ny {
                    let qy = wrap(iy as i64 - cy, ny);
                    let wy = ty[(qy * (y + oy)) % ny].conj();
                    for ix in 0..nx {
                        let qx = wrap(ix as i64 - cx, nx);
                        let wx = tx[(qx * (x + ox)) % nx].conj();
                        acc += spectrum[iy * nx + ix] * wy * wx;
                    }
                }
                out.set(ch, y, x, acc * norm);
            }
        }
    }
    Ok(out)
}

/// `(1/L) Σ_l mean((I_l − Î)²)` by explicit loops.
pub fn loop_mse(recon: &Reconstruction, target: &TargetStack) -> f64 {
    let (l_count, c_count, h, w) = recon.dims();
    let mut total = 0.0;
    for l in 0..l_count {
        let mut sum = 0.0;
        for c in 0..c_count {
            for y in 0..h {
                for x in 0..w {
                    let d = recon.get(l, c, y, x) - target.intensity_at(c, y, x);
                    sum += d * d;
                }
            }
        }
        total += sum / (c_count * h * w) as f64;
    }
    total / l_count as f64
}

/// Three-term reconstruction loss by explicit loops.
pub fn loop_recon(recon: &Reconstruction, target: &TargetStack) -> f64 {
    let (l_count, c_count, h, w) = recon.dims();
    let count = (c_count * h * w) as f64;
    let mut total = 0.0;
    for l in 0..l_count {
        let (mut full, mut masked, mut weighted) = (0.0, 0.0, 0.0);
        for c in 0..c_count {
            for y in 0..h {
                for x in 0..w {
                    let i = recon.get(l, c, y, x);
                    let t = target.intensity_at(c, y, x);
                    let m = if target.mask_at(l, y, x) { 1.0 } else { 0.0 };
                    full += (i - t).powi(2);
                    masked += (i * m - t * m).powi(2);
                    weighted += (i * t - t * t).powi(2);
                }
            }
        }
        total += (full + masked + weighted) / count;
    }
    total / l_count as f64
}

/// Random primitives spread over a `width × height` canvas. Amplitudes stay
/// inside `(0.05, 0.95)` so the clamp is never active.
pub fn random_gaussians(
    count: usize,
    channels: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = GaussianSet::zeros(count, channels);
    let short = width.min(height) as f64;
    for n in 0..count {
        for k in 0..2 {
            set.pre_position[2 * n + k] = rng.gen_range(-1.2..1.2);
            let s: f64 = rng.gen_range(0.6..(0.25 * short).max(0.7));
            set.pre_scale[2 * n + k] = s.ln();
        }
        set.rotation[n] = rng.gen_range(-PI..PI);
        set.pre_opacity[n] = rng.gen_range(-2.5..3.0);
        for c in 0..channels {
            set.amplitude[n * channels + c] = rng.gen_range(0.05..0.95);
            set.phase[n * channels + c] = rng.gen_range(-PI..PI);
        }
    }
    set
}

/// Random complex field with components uniform in `[−1, 1)`.
pub fn random_field(channels: usize, height: usize, width: usize, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ComplexField::zeros(channels, height, width);
    for v in f.real.iter_mut().chain(f.imag.iter_mut()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    f
}

/// Two-branch checkerboard encoding written cell by cell.
pub fn loop_dpac(field: &ComplexField, mode: DpacMode) -> Vec<f64> {
    let (c_count, h, w) = field.dims();
    let wrap = |v: f64| {
        let mut r = v % TAU;
        if r < 0.0 {
            r += TAU;
        }
        if r >= TAU {
            0.0
        } else {
            r
        }
    };
    let mut out = Vec::with_capacity(c_count * h * w);
    for c in 0..c_count {
        let mut max = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let z = field.get(c, y, x);
                max = max.max(z.re.hypot(z.im));
            }
        }
        for y in 0..h {
            for x in 0..w {
                let z = field.get(c, y, x);
                let amp = if max > 0.0 {
                    (z.re.hypot(z.im) / max).min(1.0)
                } else {
                    0.0
                };
                let phi = z.im.atan2(z.re);
                let v = if (x + y) % 2 == 0 {
                    match mode {
                        DpacMode::Verbatim => amp,
                        DpacMode::Classical => phi + amp.acos(),
                    }
                } else {
                    match mode {
                        DpacMode::Verbatim => phi,
                        DpacMode::Classical => phi - amp.acos(),
                    }
                };
                out.push(wrap(v));
            }
        }
    }
    out
}

/// PSNR in dB of clipped intensities with peak 1; `+∞` when identical.
pub fn loop_psnr(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for i in 0..a.len() {
        let d = a[i].clamp(0.0, 1.0) - b[i].clamp(0.0, 1.0);
        sum += d * d;
    }
    let mse = sum / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean SSIM of two `h × w` images with an 11×11, σ = 1.5 Gaussian window,
/// evaluated window by window.
pub fn naive_ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    const WIN: usize = 11;
    if width < WIN || height < WIN {
        return Err(Error::WindowTooLarge {
            width,
            height,
            window: WIN,
        });
    }
    let mut kernel = [[0.0; WIN]; WIN];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let di = i as f64 - 5.0;
            let dj = j as f64 - 5.0;
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            ksum += *v;
        }
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=height - WIN {
        for x0 in 0..=width - WIN {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..WIN {
                for j in 0..WIN {
                    let k = kernel[i][j] / ksum;
                    let p = (y0 + i) * width + x0 + j;
                    ma += k * a[p];
                    mb += k * b[p];
                    saa += k * a[p] * a[p];
                    sbb += k * b[p] * b[p];
                    sab += k * a[p] * b[p];
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_basics() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], FiniteDiffSpec::default());
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0], FiniteDiffSpec::default());
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn brute_empty_and_centered() {
        let f = brute_rasterize(&GaussianSet::empty(2), 8, 6);
        assert!(f.iter().all(|z| z.norm() == 0.0));
        let mut set = GaussianSet::zeros(1, 1);
        set.amplitude[0] = 1.0;
        let f = brute_rasterize(&set, 10, 10);
        assert!((f.get(0, 5, 5).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psnr_of_known_mse() {
        let a = vec![0.5; 100];
        let b = vec![0.6; 100];
        assert!((loop_psnr(&a, &b) - 20.0).abs() < 1e-9);
        assert_eq!(loop_psnr(&a, &a), f64::INFINITY);
    }

    #[test]
    fn fixtures_are_seeded() {
        let a = random_gaussians(5, 3, 32, 24, 1);
        assert_eq!(a, random_gaussians(5, 3, 32, 24, 1));
        assert_ne!(a, random_gaussians(5, 3, 32, 24, 2));
        assert_eq!(random_field(1, 4, 4, 9), random_field(1, 4, 4, 9));
    }

    #[test]
    fn direct_dft_rejects_large_inputs() {
        let f = ComplexField::zeros(1, 65, 8);
        assert!(direct_dft_propagate(&f, &PropagationSpec::mono(), 1e-3).is_err());
    }
}
