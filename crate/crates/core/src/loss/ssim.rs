//! Windowed SSIM with an analytic gradient.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5) over valid
//! positions only. The window is separable, so each statistic is two 1-D
//! passes; the gradient runs the transposed passes.

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// `(0.01·R)²` with `R = 1`.
pub const SSIM_C1: f64 = 1e-4;
/// `(0.03·R)²` with `R = 1`.
pub const SSIM_C2: f64 = 9e-4;

fn kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

struct Filter {
    k: [f64; SSIM_WINDOW],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
}

impl Filter {
    fn new(width: usize, height: usize) -> Result<Self> {
        if width < SSIM_WINDOW || height < SSIM_WINDOW {
            return Err(Error::WindowTooLarge {
                width,
                height,
                window: SSIM_WINDOW,
            });
        }
        Ok(Self {
            k: kernel(),
            width,
            height,
            out_w: width - SSIM_WINDOW + 1,
            out_h: height - SSIM_WINDOW + 1,
        })
    }

    /// Valid correlation, `out_h × out_w`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (w, ow, oh) = (self.width, self.out_w, self.out_h);
        let mut tmp = vec![0.0; self.height * ow];
        for y in 0..self.height {
            let row = &x[y * w..(y + 1) * w];
            for ox in 0..ow {
                let mut acc = 0.0;
                for (j, kj) in self.k.iter().enumerate() {
                    acc += kj * row[ox + j];
                }
                tmp[y * ow + ox] = acc;
            }
        }
        let mut out = vec![0.0; oh * ow];
        for oy in 0..oh {
            for (i, ki) in self.k.iter().enumerate() {
                let src = &tmp[(oy + i) * ow..(oy + i + 1) * ow];
                let dst = &mut out[oy * ow..(oy + 1) * ow];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ki * s;
                }
            }
        }
        out
    }

    /// Transpose of [`Filter::apply`], `height × width`.
    fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let (w, ow, oh) = (self.width, self.out_w, self.out_h);
        let mut tmp = vec![0.0; self.height * ow];
        for oy in 0..oh {
            for (i, ki) in self.k.iter().enumerate() {
                let src = &g[oy * ow..(oy + 1) * ow];
                let dst = &mut tmp[(oy + i) * ow..(oy + i + 1) * ow];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ki * s;
                }
            }
        }
        let mut out = vec![0.0; self.height * w];
        for y in 0..self.height {
            let row = &mut out[y * w..(y + 1) * w];
            for ox in 0..ow {
                let t = tmp[y * ow + ox];
                for (j, kj) in self.k.iter().enumerate() {
                    row[ox + j] += kj * t;
                }
            }
        }
        out
    }
}

/// Mean SSIM of two `height × width` images.
pub fn ssim_image(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    Ok(ssim_core(a, b, width, height, false)?.0)
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_image_with_grad(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
) -> Result<(f64, Vec<f64>)> {
    ssim_core(a, b, width, height, true)
}

fn ssim_core(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let n = width * height;
    if a.len() != n || b.len() != n {
        return Err(Error::shape(format!(
            "SSIM inputs have {} and {} values, expected {n}",
            a.len(),
            b.len()
        )));
    }
    let f = Filter::new(width, height)?;
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = f.apply(a);
    let mu_b = f.apply(b);
    let e_aa = f.apply(&sq(a, a));
    let e_bb = f.apply(&sq(b, b));
    let e_ab = f.apply(&sq(a, b));

    let windows = mu_a.len();
    let mut total = 0.0;
    let (mut g_mu, mut g_aa, mut g_ab) = if with_grad {
        (vec![0.0; windows], vec![0.0; windows], vec![0.0; windows])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let inv = 1.0 / windows as f64;
    for i in 0..windows {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let a1 = 2.0 * ma * mb + SSIM_C1;
        let a2 = 2.0 * cov + SSIM_C2;
        let b1 = ma * ma + mb * mb + SSIM_C1;
        let b2 = va + vb + SSIM_C2;
        let s = (a1 * a2) / (b1 * b2);
        total += s;
        if with_grad {
            g_mu[i] = inv * s * (2.0 * mb / a1 - 2.0 * ma / b1 - 2.0 * mb / a2 + 2.0 * ma / b2);
            g_aa[i] = -inv * s / b2;
            g_ab[i] = inv * 2.0 * s / a2;
        }
    }
    let mean = total * inv;
    if !with_grad {
        return Ok((mean, Vec::new()));
    }
    let d_mu = f.adjoint(&g_mu);
    let d_aa = f.adjoint(&g_aa);
    let d_ab = f.adjoint(&g_ab);
    let grad = (0..n)
        .map(|p| d_mu[p] + 2.0 * a[p] * d_aa[p] + b[p] * d_ab[p])
        .collect();
    Ok((mean, grad))
}
