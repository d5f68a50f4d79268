//! Tile-based complex rasterization of a [`GaussianSet`] and its analytic
//! backward pass.
//!
//! Every primitive contributes `c · α_eff · e^{jφ}` per channel, where
//! `α_eff = min(0.99, α · G(p))` and `G(p) = exp(max(-½·mahal, -50))`.
//! Contributions with `α_eff < 1/255` are skipped. Contributions are summed,
//! not composited, so pixel order and primitive order only matter up to
//! floating-point rounding; within a tile primitives are visited by
//! ascending id so a run is reproducible bit for bit.

mod backward;
mod tiles;

use std::ops::Range;

use rayon::prelude::*;

pub use backward::rasterize_backward;
pub use tiles::{TileIndex, TILE_SIZE};

use crate::complex_field::ComplexField;
use crate::error::{Error, Result};
use crate::field::{
    activate_amplitude, activate_opacity, activate_position, activate_scale, covariance,
    invert_covariance, Covariance2, GaussianSet, InverseCovariance2,
};

/// `α_eff` below this is dropped.
pub const ALPHA_CUTOFF: f64 = 1.0 / 255.0;
/// `α_eff` saturates here.
pub const ALPHA_MAX: f64 = 0.99;
/// Lower clamp on the Gaussian exponent.
pub const POWER_MIN: f64 = -50.0;

/// Per-primitive quantities shared by the forward and backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub center: Vec<[f64; 2]>,
    pub scale: Vec<[f64; 2]>,
    pub cov: Vec<Covariance2>,
    pub inv: Vec<InverseCovariance2>,
    pub opacity: Vec<f64>,
    /// `−ln(255α)`: exponents clearly below this fall under the cutoff.
    pub power_cut: Vec<f64>,
    /// Clamped amplitudes, `N × C`.
    pub amplitude: Vec<f64>,
    pub cos_phase: Vec<f64>,
    pub sin_phase: Vec<f64>,
    /// Cull box half-widths, see [`Prepared::cull_extent`].
    pub extent: Vec<Option<[f64; 2]>>,
}

impl Prepared {
    pub fn new(set: &GaussianSet, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        set.validate()?;
        let n = set.len();
        let mut center = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        let mut cov = Vec::with_capacity(n);
        let mut inv = Vec::with_capacity(n);
        let mut opacity = Vec::with_capacity(n);
        for i in 0..n {
            center.push(activate_position(
                [set.pre_position[2 * i], set.pre_position[2 * i + 1]],
                width as f64,
                height as f64,
            )?);
            let s = activate_scale([set.pre_scale[2 * i], set.pre_scale[2 * i + 1]])?;
            let c = covariance(s, set.rotation[i]);
            scale.push(s);
            cov.push(c);
            inv.push(invert_covariance(c).0);
            opacity.push(activate_opacity(set.pre_opacity[i])?);
        }
        let power_cut = opacity.iter().map(|a| -(255.0 * a).ln()).collect();
        let amplitude = set.amplitude.iter().map(|&a| activate_amplitude(a)).collect();
        let (sin_phase, cos_phase) = set.phase.iter().map(|p| p.sin_cos()).unzip();
        let mut prepared = Self {
            width,
            height,
            channels: set.channels(),
            center,
            scale,
            cov,
            inv,
            opacity,
            power_cut,
            amplitude,
            cos_phase,
            sin_phase,
            extent: Vec::new(),
        };
        prepared.extent = (0..n).map(|i| prepared.cull_extent(i)).collect();
        Ok(prepared)
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    /// Half-widths of the axis-aligned box outside which `α · G < 1/255`:
    /// the level set `dᵀΣ⁻¹d = 2·ln(255α)` spans `±sqrt(2·ln(255α)·Σ_ii)`.
    /// `None` when the primitive never passes the cutoff.
    pub fn cull_extent(&self, n: usize) -> Option<[f64; 2]> {
        let reach = 255.0 * self.opacity[n];
        if reach < 1.0 {
            return None;
        }
        let k = 2.0 * reach.ln();
        let cov = &self.cov[n];
        // Slack absorbs rounding in the per-pixel cutoff test.
        let pad = |v: f64| (k * v).sqrt() * (1.0 + 1e-6) + 1e-6;
        Some([pad(cov.sxx), pad(cov.syy)])
    }

    pub fn tile_index(&self) -> TileIndex {
        TileIndex::build(self.width, self.height, &self.center, &self.extent)
    }

    /// Pixels of the tile rectangle `(xs, ys)` inside primitive `n`'s cull box.
    pub fn pixel_box(
        &self,
        n: usize,
        xs: &Range<usize>,
        ys: &Range<usize>,
    ) -> Option<(Range<usize>, Range<usize>)> {
        let [rx, ry] = self.extent[n]?;
        let [cx, cy] = self.center[n];
        let (x0, x1) = tiles::pixel_span(cx, rx, self.width)?;
        let (y0, y1) = tiles::pixel_span(cy, ry, self.height)?;
        let bx = x0.max(xs.start)..(x1 + 1).min(xs.end);
        let by = y0.max(ys.start)..(y1 + 1).min(ys.end);
        (bx.start < bx.end && by.start < by.end).then_some((bx, by))
    }
}

/// Per-pixel evaluation of one primitive, shared by forward and backward.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub dx: f64,
    pub dy: f64,
    pub power: f64,
    pub gaussian: f64,
    pub alpha_eff: f64,
    pub saturated: bool,
}

impl Prepared {
    /// `None` when the contribution falls below the cutoff.
    #[inline]
    pub fn sample(&self, n: usize, px: f64, py: f64) -> Option<Sample> {
        let [cx, cy] = self.center[n];
        let dx = px - cx;
        let dy = py - cy;
        let power = -0.5 * self.inv[n].mahalanobis(dx, dy);
        // Cheap rejection well away from the cutoff; borderline pixels take
        // the exact test below.
        if power.max(POWER_MIN) < self.power_cut[n] - 1e-9 {
            return None;
        }
        let gaussian = power.max(POWER_MIN).exp();
        let raw = self.opacity[n] * gaussian;
        let alpha_eff = raw.min(ALPHA_MAX);
        if alpha_eff < ALPHA_CUTOFF {
            return None;
        }
        Some(Sample {
            dx,
            dy,
            power,
            gaussian,
            alpha_eff,
            saturated: raw >= ALPHA_MAX,
        })
    }
}

/// Holds a prepared set and its tile index so the backward pass can reuse
/// the forward pass's setup.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    prepared: Prepared,
    index: TileIndex,
}

impl Rasterizer {
    pub fn new(set: &GaussianSet, width: usize, height: usize) -> Result<Self> {
        let prepared = Prepared::new(set, width, height)?;
        let index = prepared.tile_index();
        Ok(Self { prepared, index })
    }

    pub fn tile_index(&self) -> &TileIndex {
        &self.index
    }

    pub fn forward(&self) -> ComplexField {
        let p = &self.prepared;
        let c_count = p.channels;
        let tiles: Vec<Vec<f64>> = (0..self.index.tile_count())
            .into_par_iter()
            .map(|tile| {
                let (xs, ys) = self.index.pixels(tile);
                let tw = xs.len();
                // Pixel-major `[re, im] × C` accumulators for the tile.
                let mut acc = vec![0.0; tw * ys.len() * c_count * 2];
                // Primitives ascend, so each pixel sums in id order.
                for n in self.index.gaussians(tile) {
                    let Some((bx, by)) = p.pixel_box(n, &xs, &ys) else {
                        continue;
                    };
                    let row = n * c_count;
                    for py in by {
                        for px in bx.clone() {
                            let Some(s) = p.sample(n, px as f64, py as f64) else {
                                continue;
                            };
                            let base = ((py - ys.start) * tw + (px - xs.start)) * c_count * 2;
                            for c in 0..c_count {
                                let scale = p.amplitude[row + c] * s.alpha_eff;
                                acc[base + 2 * c] += scale * p.cos_phase[row + c];
                                acc[base + 2 * c + 1] += scale * p.sin_phase[row + c];
                            }
                        }
                    }
                }
                acc
            })
            .collect();

        let mut field = ComplexField::zeros(c_count, p.height, p.width);
        for (tile, values) in tiles.iter().enumerate() {
            let (xs, ys) = self.index.pixels(tile);
            let mut k = 0;
            for py in ys {
                for px in xs.clone() {
                    for c in 0..c_count {
                        let i = field.index(c, py, px);
                        field.real[i] = values[k + 2 * c];
                        field.imag[i] = values[k + 2 * c + 1];
                    }
                    k += 2 * c_count;
                }
            }
        }
        field
    }

    pub fn backward(&self, set: &GaussianSet, grad: &ComplexField) -> Result<GaussianSet> {
        backward::backward(&self.prepared, &self.index, set, grad)
    }
}

/// Renders `set` onto a `width × height` canvas.
pub fn rasterize_forward(set: &GaussianSet, width: usize, height: usize) -> Result<ComplexField> {
    Ok(Rasterizer::new(set, width, height)?.forward())
}

pub fn build_tile_index(set: &GaussianSet, width: usize, height: usize) -> Result<TileIndex> {
    Ok(Prepared::new(set, width, height)?.tile_index())
}
