//! Multi-plane reconstruction objectives.
//!
//! A [`Reconstruction`] holds `I_l = |U(d_l)|²` for every plane `l`; a
//! [`TargetStack`] holds the target intensity `Î` (shared by all planes), the
//! depth map and one binary mask per plane. All norms are per-element means,
//! so loss values do not scale with the image size.

mod ssim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex_field::ComplexField;
use crate::error::{Error, Result};

pub use ssim::{ssim_image, ssim_image_with_grad, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

/// `λ₁` in `L = L_recon + λ₁·L_SSIM`.
pub const SSIM_WEIGHT: f64 = 0.005;

/// `L` uniformly spaced parallel planes centred on `d₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPlaneSet {
    pub count: usize,
    /// `d₀`, meters.
    pub center_distance: f64,
    /// `Δz`, meters.
    pub spacing: f64,
}

impl DepthPlaneSet {
    pub fn new(count: usize, center_distance: f64, spacing: f64) -> Result<Self> {
        let set = Self {
            count,
            center_distance,
            spacing,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("at least one depth plane is required"));
        }
        if !self.center_distance.is_finite() || !self.spacing.is_finite() {
            return Err(Error::invalid("plane distances must be finite"));
        }
        Ok(())
    }

    /// `d_l = d₀ + (l − (L+1)/2)·Δz` for `l = 1..=L`.
    pub fn distances(&self) -> Vec<f64> {
        let mid = (self.count as f64 + 1.0) / 2.0;
        (1..=self.count)
            .map(|l| self.center_distance + (l as f64 - mid) * self.spacing)
            .collect()
    }
}

/// Quantizes `depth` (values in `[0, 1]`) into `count` equal-width bins and
/// returns `count × H × W` masks. With `near_is_high`, bin `b` maps to plane
/// `b`; otherwise to plane `count − 1 − b`.
pub fn build_masks(depth: &[f64], count: usize, near_is_high: bool) -> Result<Vec<bool>> {
    if count == 0 {
        return Err(Error::invalid("at least one depth plane is required"));
    }
    if let Some(d) = depth.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::invalid(format!("depth value {d} outside [0, 1]")));
    }
    let len = depth.len();
    let mut masks = vec![false; count * len];
    for (p, &d) in depth.iter().enumerate() {
        let bin = ((d * count as f64).floor() as usize).min(count - 1);
        let plane = if near_is_high { bin } else { count - 1 - bin };
        masks[plane * len + p] = true;
    }
    Ok(masks)
}

/// Target intensity, normalized depth and per-plane masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetStack {
    channels: usize,
    height: usize,
    width: usize,
    planes: usize,
    intensity: Vec<f64>,
    depth: Vec<f64>,
    masks: Vec<bool>,
}

impl TargetStack {
    /// `intensity` is `C × H × W`, `depth` is `H × W`, `masks` is `L × H × W`.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        intensity: Vec<f64>,
        depth: Vec<f64>,
        masks: Vec<bool>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        let plane = height * width;
        if intensity.len() != channels * plane {
            return Err(Error::shape(format!(
                "intensity has {} values, expected {}",
                intensity.len(),
                channels * plane
            )));
        }
        if depth.len() != plane {
            return Err(Error::shape(format!(
                "depth has {} values, expected {plane}",
                depth.len()
            )));
        }
        if masks.is_empty() || masks.len() % plane != 0 {
            return Err(Error::shape("masks must be L × H × W with L ≥ 1"));
        }
        if intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target intensity"));
        }
        if intensity.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("target intensity outside [0, 1]"));
        }
        let planes = masks.len() / plane;
        for p in 0..plane {
            let hits = (0..planes).filter(|&l| masks[l * plane + p]).count();
            if hits != 1 {
                return Err(Error::invalid(format!(
                    "pixel {p} is covered by {hits} plane masks"
                )));
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            planes,
            intensity,
            depth,
            masks,
        })
    }

    /// Builds the masks from `depth` with [`build_masks`].
    pub fn from_depth(
        channels: usize,
        height: usize,
        width: usize,
        intensity: Vec<f64>,
        depth: Vec<f64>,
        planes: usize,
        near_is_high: bool,
    ) -> Result<Self> {
        let masks = build_masks(&depth, planes, near_is_high)?;
        Self::new(channels, height, width, intensity, depth, masks)
    }

    /// Flat depth of 0 (every pixel on one plane).
    pub fn without_depth(
        channels: usize,
        height: usize,
        width: usize,
        intensity: Vec<f64>,
        planes: usize,
    ) -> Result<Self> {
        let depth = vec![0.0; height * width];
        Self::from_depth(channels, height, width, intensity, depth, planes, true)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn masks(&self) -> &[bool] {
        &self.masks
    }

    pub fn intensity_at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.intensity[(c * self.height + y) * self.width + x]
    }

    pub fn mask_at(&self, plane: usize, y: usize, x: usize) -> bool {
        self.masks[(plane * self.height + y) * self.width + x]
    }

    /// Same target on a different number of planes.
    pub fn with_planes(&self, planes: usize, near_is_high: bool) -> Result<Self> {
        Self::from_depth(
            self.channels,
            self.height,
            self.width,
            self.intensity.clone(),
            self.depth.clone(),
            planes,
            near_is_high,
        )
    }
}

/// Reconstructed intensities, `L × C × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    planes: usize,
    channels: usize,
    height: usize,
    width: usize,
    pub data: Vec<f64>,
}

impl Reconstruction {
    pub fn zeros(planes: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            planes,
            channels,
            height,
            width,
            data: vec![0.0; planes * channels * height * width],
        }
    }

    pub fn from_vec(
        planes: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != planes * channels * height * width {
            return Err(Error::shape(format!(
                "{} values for a {planes}×{channels}×{height}×{width} stack",
                data.len()
            )));
        }
        Ok(Self {
            planes,
            channels,
            height,
            width,
            data,
        })
    }

    /// `|U_l|²` for each plane field.
    pub fn from_fields(fields: &[ComplexField]) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::shape("no plane fields"));
        };
        let (c, h, w) = first.dims();
        let mut data = Vec::with_capacity(fields.len() * c * h * w);
        for f in fields {
            first.ensure_same_shape(f, "plane field")?;
            data.extend(f.intensity());
        }
        Self::from_vec(fields.len(), c, h, w, data)
    }

    /// Every plane equal to the target intensity.
    pub fn from_target(target: &TargetStack) -> Self {
        let mut data = Vec::with_capacity(target.planes * target.intensity.len());
        for _ in 0..target.planes {
            data.extend_from_slice(&target.intensity);
        }
        Self {
            planes: target.planes,
            channels: target.channels,
            height: target.height,
            width: target.width,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.planes, self.channels, self.height, self.width)
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, plane: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((plane * self.channels + c) * self.height + y) * self.width + x]
    }

    /// `C × H × W` slice of one plane.
    pub fn plane(&self, plane: usize) -> &[f64] {
        let n = self.channels * self.height * self.width;
        &self.data[plane * n..(plane + 1) * n]
    }

    pub fn plane_mut(&mut self, plane: usize) -> &mut [f64] {
        let n = self.channels * self.height * self.width;
        &mut self.data[plane * n..(plane + 1) * n]
    }

    fn check(&self, target: &TargetStack) -> Result<()> {
        let expected = (target.planes, target.channels, target.height, target.width);
        if self.dims() != expected {
            return Err(Error::shape(format!(
                "reconstruction is {:?}, target is {:?}",
                self.dims(),
                expected
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reconstruction"));
        }
        Ok(())
    }
}

/// Gradient of a loss with respect to each plane field, given its gradient
/// with respect to the intensities: `∂L/∂Re U = 2·Re U·∂L/∂I`, likewise for
/// `Im`.
pub fn intensity_backward(fields: &[ComplexField], grad: &Reconstruction) -> Result<Vec<ComplexField>> {
    if fields.len() != grad.planes {
        return Err(Error::shape("one field per reconstructed plane"));
    }
    fields
        .iter()
        .enumerate()
        .map(|(l, f)| {
            if f.dims() != (grad.channels, grad.height, grad.width) {
                return Err(Error::shape("field and intensity gradient differ in shape"));
            }
            let g = grad.plane(l);
            let mut out = ComplexField::zeros(grad.channels, grad.height, grad.width);
            for i in 0..g.len() {
                out.real[i] = 2.0 * f.real[i] * g[i];
                out.imag[i] = 2.0 * f.imag[i] * g[i];
            }
            Ok(out)
        })
        .collect()
}

/// A loss value and its gradient with respect to the reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Reconstruction,
}

/// `(1/L) Σ_l mean((I_l − Î)²)`.
pub fn loss_mse(recon: &Reconstruction, target: &TargetStack) -> Result<f64> {
    Ok(loss_mse_with_grad(recon, target)?.value)
}

pub fn loss_mse_with_grad(recon: &Reconstruction, target: &TargetStack) -> Result<LossGrad> {
    weighted_squared_error(recon, target, |_, _| 1.0)
}

/// `(1/L) Σ_l [mean((I−Î)²) + mean(((I−Î)·M_l)²) + mean(((I−Î)·Î)²)]`.
pub fn loss_recon(recon: &Reconstruction, target: &TargetStack) -> Result<f64> {
    Ok(loss_recon_with_grad(recon, target)?.value)
}

pub fn loss_recon_with_grad(recon: &Reconstruction, target: &TargetStack) -> Result<LossGrad> {
    // M² = M for a binary mask.
    weighted_squared_error(recon, target, |mask, t| {
        1.0 + if mask { 1.0 } else { 0.0 } + t * t
    })
}

fn weighted_squared_error(
    recon: &Reconstruction,
    target: &TargetStack,
    weight: impl Fn(bool, f64) -> f64 + Sync,
) -> Result<LossGrad> {
    recon.check(target)?;
    let (l_count, c_count, h, w) = recon.dims();
    let hw = h * w;
    let n = (c_count * hw) as f64;
    let mut grad = Reconstruction::zeros(l_count, c_count, h, w);
    let per_plane: Vec<f64> = grad
        .data
        .par_chunks_mut(c_count * hw)
        .enumerate()
        .map(|(l, g)| {
            let r = recon.plane(l);
            let masks = &target.masks[l * hw..(l + 1) * hw];
            let mut sum = 0.0;
            for i in 0..g.len() {
                let t = target.intensity[i];
                let wgt = weight(masks[i % hw], t);
                let d = r[i] - t;
                sum += wgt * d * d;
                g[i] = 2.0 * wgt * d / (n * l_count as f64);
            }
            sum / n
        })
        .collect();
    let value = per_plane.iter().sum::<f64>() / l_count as f64;
    Ok(LossGrad { value, grad })
}

/// `1 − mean SSIM` over planes and channels.
pub fn loss_ssim(recon: &Reconstruction, target: &TargetStack) -> Result<f64> {
    Ok(loss_ssim_with_grad(recon, target)?.value)
}

pub fn loss_ssim_with_grad(recon: &Reconstruction, target: &TargetStack) -> Result<LossGrad> {
    recon.check(target)?;
    let (l_count, c_count, h, w) = recon.dims();
    let hw = h * w;
    let images = (l_count * c_count) as f64;
    let mut grad = Reconstruction::zeros(l_count, c_count, h, w);
    let values: Vec<Result<f64>> = grad
        .data
        .par_chunks_mut(hw)
        .enumerate()
        .map(|(k, g)| {
            let c = k % c_count;
            let a = &recon.data[k * hw..(k + 1) * hw];
            let b = &target.intensity[c * hw..(c + 1) * hw];
            let (s, ds) = ssim_image_with_grad(a, b, w, h)?;
            for (gi, di) in g.iter_mut().zip(ds) {
                *gi = -di / images;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for v in values {
        total += v?;
    }
    Ok(LossGrad {
        value: 1.0 - total / images,
        grad,
    })
}

/// `L_recon + λ₁·L_SSIM`.
pub fn training_loss(recon: &Reconstruction, target: &TargetStack) -> Result<f64> {
    Ok(training_loss_with_grad(recon, target)?.value)
}

pub fn training_loss_with_grad(recon: &Reconstruction, target: &TargetStack) -> Result<LossGrad> {
    let mut total = loss_recon_with_grad(recon, target)?;
    let s = loss_ssim_with_grad(recon, target)?;
    total.value += SSIM_WEIGHT * s.value;
    for (g, d) in total.grad.data.iter_mut().zip(&s.grad.data) {
        *g += SSIM_WEIGHT * d;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_distances() {
        let p = DepthPlaneSet::new(2, 3e-3, 2e-3).unwrap();
        assert_eq!(p.distances(), vec![2e-3, 4e-3]);
        let p = DepthPlaneSet::new(3, 1.0, 0.5).unwrap();
        assert_eq!(p.distances(), vec![0.5, 1.0, 1.5]);
        assert!(DepthPlaneSet::new(0, 1.0, 0.5).is_err());
    }

    #[test]
    fn single_plane_mask_is_all_true() {
        let m = build_masks(&[0.0, 0.3, 1.0], 1, true).unwrap();
        assert_eq!(m, vec![true; 3]);
    }

    #[test]
    fn quarter_depth_goes_to_first_plane() {
        let m = build_masks(&[0.25; 4], 2, true).unwrap();
        assert_eq!(m, vec![true, true, true, true, false, false, false, false]);
        let m = build_masks(&[0.25; 4], 2, false).unwrap();
        assert_eq!(m[4..], [true; 4]);
    }

    #[test]
    fn mask_errors() {
        assert!(build_masks(&[0.5], 0, true).is_err());
        assert!(build_masks(&[1.5], 2, true).is_err());
    }

    #[test]
    fn mse_single_pixel() {
        let t = TargetStack::without_depth(1, 1, 1, vec![0.25], 1).unwrap();
        let r = Reconstruction::from_vec(1, 1, 1, 1, vec![0.5]).unwrap();
        assert_eq!(loss_mse(&r, &t).unwrap(), 0.0625);
    }

    #[test]
    fn target_stack_rejects_overlapping_masks() {
        let r = TargetStack::new(1, 1, 2, vec![0.1, 0.2], vec![0.0; 2], vec![true, true, true, false]);
        assert!(r.is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let t = TargetStack::without_depth(1, 2, 2, vec![0.0; 4], 2).unwrap();
        let r = Reconstruction::zeros(1, 1, 2, 2);
        assert!(loss_mse(&r, &t).is_err());
        assert!(loss_recon(&r, &t).is_err());
    }
}
