//! Analytic gradients of a scalar loss through the complex rasterizer.
//!
//! Given `∂L/∂Re U` and `∂L/∂Im U` per pixel and channel, each visited
//! `(pixel, primitive)` pair contributes, with `w = cos φ·g_re + sin φ·g_im`:
//!
//! ```text
//! ∂L/∂c        += α_eff · w
//! ∂L/∂φ        += c · α_eff · (−sin φ·g_re + cos φ·g_im)
//! ∂L/∂α_eff     = Σ_c c · w
//! ∂L/∂α        += G · ∂L/∂α_eff                       (unless saturated)
//! ∂L/∂power     = α · G · ∂L/∂α_eff                   (unless saturated or power ≤ −50)
//! ∂L/∂mean     += ∂L/∂power · Σ⁻¹ d
//! ∂L/∂Σ⁻¹      += ∂L/∂power · (−½dx², −dx·dy, −½dy²)
//! ```
//!
//! Per-primitive sums are then pushed through the covariance inverse, the
//! covariance construction and the activations.

use rayon::prelude::*;

use super::{Prepared, TileIndex};
use crate::complex_field::ComplexField;
use crate::error::{Error, Result};
use crate::field::{
    amplitude_derivative, covariance_vjp, invert_covariance_vjp, opacity_derivative,
    position_derivative, scale_derivative, GaussianSet,
};

/// Gradients with respect to the activated quantities of one primitive.
const MEAN_X: usize = 0;
const MEAN_Y: usize = 1;
const INV00: usize = 2;
const INV01: usize = 3;
const INV11: usize = 4;
const ALPHA: usize = 5;
const FIXED: usize = 6;

struct TilePartial {
    /// Primitive ids in this tile.
    ids: Vec<usize>,
    /// `ids.len() × stride`: the six fixed slots, then `C` amplitude and
    /// `C` phase slots.
    values: Vec<f64>,
}

pub(crate) fn backward(
    p: &Prepared,
    index: &TileIndex,
    set: &GaussianSet,
    grad: &ComplexField,
) -> Result<GaussianSet> {
    let c_count = p.channels;
    if grad.dims() != (c_count, p.height, p.width) {
        return Err(Error::shape(format!(
            "upstream gradient is {:?}, forward output is {:?}",
            grad.dims(),
            (c_count, p.height, p.width)
        )));
    }
    let stride = FIXED + 2 * c_count;

    let partials: Vec<TilePartial> = (0..index.tile_count())
        .into_par_iter()
        .map(|tile| {
            let ids: Vec<usize> = index.gaussians(tile).collect();
            let mut values = vec![0.0; ids.len() * stride];
            if ids.is_empty() {
                return TilePartial { ids, values };
            }
            let (xs, ys) = index.pixels(tile);
            let mut g_re = vec![0.0; c_count];
            let mut g_im = vec![0.0; c_count];
            for (k, &n) in ids.iter().enumerate() {
                let Some((bx, by)) = p.pixel_box(n, &xs, &ys) else {
                    continue;
                };
                let slot = &mut values[k * stride..(k + 1) * stride];
                let row = n * c_count;
                for py in by {
                    for px in bx.clone() {
                        let mut any = false;
                        for c in 0..c_count {
                            let i = grad.index(c, py, px);
                            g_re[c] = grad.real[i];
                            g_im[c] = grad.imag[i];
                            any |= g_re[c] != 0.0 || g_im[c] != 0.0;
                        }
                        if !any {
                            continue;
                        }
                        let Some(s) = p.sample(n, px as f64, py as f64) else {
                            continue;
                        };
                        let mut d_alpha_eff = 0.0;
                        for c in 0..c_count {
                            let (cos, sin) = (p.cos_phase[row + c], p.sin_phase[row + c]);
                            let amp = p.amplitude[row + c];
                            let w = cos * g_re[c] + sin * g_im[c];
                            slot[FIXED + c] += s.alpha_eff * w;
                            slot[FIXED + c_count + c] +=
                                amp * s.alpha_eff * (-sin * g_re[c] + cos * g_im[c]);
                            d_alpha_eff += amp * w;
                        }
                        if s.saturated {
                            continue;
                        }
                        slot[ALPHA] += s.gaussian * d_alpha_eff;
                        if s.power > super::POWER_MIN {
                            let d_power = p.opacity[n] * s.gaussian * d_alpha_eff;
                            let inv = &p.inv[n];
                            slot[MEAN_X] += d_power * (s.dx * inv.inv00 + s.dy * inv.inv01);
                            slot[MEAN_Y] += d_power * (s.dx * inv.inv01 + s.dy * inv.inv11);
                            slot[INV00] += d_power * (-0.5 * s.dx * s.dx);
                            slot[INV01] += d_power * (-s.dx * s.dy);
                            slot[INV11] += d_power * (-0.5 * s.dy * s.dy);
                        }
                    }
                }
            }
            TilePartial { ids, values }
        })
        .collect();

    // Ordered reduction keeps the result independent of the thread count.
    let n = p.len();
    let mut acc = vec![0.0; n * stride];
    for part in &partials {
        for (k, &id) in part.ids.iter().enumerate() {
            let src = &part.values[k * stride..(k + 1) * stride];
            let dst = &mut acc[id * stride..(id + 1) * stride];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    let mut out = GaussianSet::zeros(n, c_count);
    let (w, h) = (p.width as f64, p.height as f64);
    for id in 0..n {
        let a = &acc[id * stride..(id + 1) * stride];
        out.pre_position[2 * id] = a[MEAN_X] * position_derivative(set.pre_position[2 * id], w);
        out.pre_position[2 * id + 1] =
            a[MEAN_Y] * position_derivative(set.pre_position[2 * id + 1], h);

        let d_cov = invert_covariance_vjp(p.cov[id], [a[INV00], a[INV01], a[INV11]]);
        let (d_scale, d_rot) = covariance_vjp(p.scale[id], set.rotation[id], d_cov);
        out.pre_scale[2 * id] = d_scale[0] * scale_derivative(set.pre_scale[2 * id]);
        out.pre_scale[2 * id + 1] = d_scale[1] * scale_derivative(set.pre_scale[2 * id + 1]);
        out.rotation[id] = d_rot;

        out.pre_opacity[id] = a[ALPHA] * opacity_derivative(set.pre_opacity[id]);

        for c in 0..c_count {
            let j = id * c_count + c;
            out.amplitude[j] = a[FIXED + c] * amplitude_derivative(set.amplitude[j]);
            out.phase[j] = a[FIXED + c_count + c];
        }
    }
    Ok(out)
}

/// Gradients of a loss with respect to every parameter of `set`, given the
/// loss gradient with respect to the rendered field (`∂L/∂Re`, `∂L/∂Im`).
pub fn rasterize_backward(set: &GaussianSet, grad: &ComplexField) -> Result<GaussianSet> {
    let p = Prepared::new(set, grad.width(), grad.height())?;
    if grad.channels() != set.channels() {
        return Err(Error::shape(format!(
            "upstream gradient has {} channels, set has {}",
            grad.channels(),
            set.channels()
        )));
    }
    let index = p.tile_index();
    backward(&p, &index, set, grad)
}
