//! Complex-valued 2D Gaussian primitives.
//!
//! A [`GaussianSet`] stores every primitive in its unconstrained
//! (pre-activation) parameterization. Activations map those values into
//! physical ranges:
//!
//! | parameter | activation                        | range              |
//! |-----------|-----------------------------------|--------------------|
//! | position  | `(tanh(x̃) + 1) / 2 · [W, H]`      | `(0, W) × (0, H)`  |
//! | scale     | `exp(s̃) + 0.1`                    | `≥ 0.1` pixels     |
//! | opacity   | `sigmoid(α̃)`                      | `(0, 1)`           |
//! | amplitude | clamp to `[0, 1]`                 | `[0, 1]`           |
//!
//! Rotation and phase are used as-is; both only enter through periodic
//! functions.

use crate::error::{Error, Result};

/// Lower bound added to activated scales (pixels).
pub const SCALE_EPS: f64 = 0.1;
/// Diagonal regularizer added to every covariance.
pub const COV_EPS: f64 = 0.1;
/// Floor applied to the covariance determinant before inversion.
pub const DET_EPS: f64 = 1e-10;
/// Scalars per primitive when `C = 3`: 2 position, 2 scale, 1 rotation,
/// 3 amplitude, 3 phase, 1 opacity.
pub const PARAMS_PER_GAUSSIAN_RGB: usize = 12;

/// N primitives over C channels, stored structure-of-arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    channels: usize,
    /// `N × 2`, interleaved `(x̃, ỹ)`.
    pub pre_position: Vec<f64>,
    /// `N × 2`, interleaved `(s̃_x, s̃_y)`.
    pub pre_scale: Vec<f64>,
    pub rotation: Vec<f64>,
    /// `N × C`, row per primitive.
    pub amplitude: Vec<f64>,
    /// `N × C`, row per primitive.
    pub phase: Vec<f64>,
    pub pre_opacity: Vec<f64>,
}

impl GaussianSet {
    /// An empty set with `channels` color channels.
    pub fn empty(channels: usize) -> Self {
        Self::zeros(0, channels)
    }

    /// `count` primitives with every parameter zero.
    pub fn zeros(count: usize, channels: usize) -> Self {
        assert!(channels > 0, "a Gaussian set needs at least one channel");
        Self {
            channels,
            pre_position: vec![0.0; count * 2],
            pre_scale: vec![0.0; count * 2],
            rotation: vec![0.0; count],
            amplitude: vec![0.0; count * channels],
            phase: vec![0.0; count * channels],
            pre_opacity: vec![0.0; count],
        }
    }

    pub fn from_parts(
        channels: usize,
        pre_position: Vec<f64>,
        pre_scale: Vec<f64>,
        rotation: Vec<f64>,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
        pre_opacity: Vec<f64>,
    ) -> Result<Self> {
        let set = Self {
            channels,
            pre_position,
            pre_scale,
            rotation,
            amplitude,
            phase,
            pre_opacity,
        };
        set.validate_shapes()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.rotation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotation.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total trainable scalars: `N · (2 + 2 + 1 + C + C + 1)`.
    pub fn parameter_count(&self) -> usize {
        self.len() * (6 + 2 * self.channels)
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let n = self.rotation.len();
        let c = self.channels;
        if c == 0 {
            return Err(Error::shape("Gaussian set has zero channels"));
        }
        let checks = [
            ("pre_position", self.pre_position.len(), n * 2),
            ("pre_scale", self.pre_scale.len(), n * 2),
            ("amplitude", self.amplitude.len(), n * c),
            ("phase", self.phase.len(), n * c),
            ("pre_opacity", self.pre_opacity.len(), n),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::shape(format!(
                    "{name} has {got} entries, expected {want} for N={n}, C={c}"
                )));
            }
        }
        Ok(())
    }

    /// Shape check plus finiteness of every entry.
    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        for (name, values) in self.groups() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// The six parameter arrays in declaration order.
    pub fn groups(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("pre_position", &self.pre_position),
            ("pre_scale", &self.pre_scale),
            ("rotation", &self.rotation),
            ("amplitude", &self.amplitude),
            ("phase", &self.phase),
            ("pre_opacity", &self.pre_opacity),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("pre_position", &mut self.pre_position),
            ("pre_scale", &mut self.pre_scale),
            ("rotation", &mut self.rotation),
            ("amplitude", &mut self.amplitude),
            ("phase", &mut self.phase),
            ("pre_opacity", &mut self.pre_opacity),
        ]
    }

    /// Appends every primitive of `other` after the primitives of `self`.
    pub fn extend(&mut self, other: &GaussianSet) {
        assert_eq!(self.channels, other.channels, "channel count mismatch");
        self.pre_position.extend_from_slice(&other.pre_position);
        self.pre_scale.extend_from_slice(&other.pre_scale);
        self.rotation.extend_from_slice(&other.rotation);
        self.amplitude.extend_from_slice(&other.amplitude);
        self.phase.extend_from_slice(&other.phase);
        self.pre_opacity.extend_from_slice(&other.pre_opacity);
    }

    /// Activated parameters of primitive `n` on a `width × height` canvas.
    pub fn activate(&self, n: usize, width: usize, height: usize) -> Result<ActivatedGaussian> {
        let c = self.channels;
        let position = activate_position(
            [self.pre_position[2 * n], self.pre_position[2 * n + 1]],
            width as f64,
            height as f64,
        )?;
        let scale = activate_scale([self.pre_scale[2 * n], self.pre_scale[2 * n + 1]])?;
        let rotation = self.rotation[n];
        let opacity = activate_opacity(self.pre_opacity[n])?;
        if !rotation.is_finite() {
            return Err(Error::NonFinite("rotation"));
        }
        let amplitude = self.amplitude[n * c..(n + 1) * c]
            .iter()
            .map(|&a| activate_amplitude(a))
            .collect();
        let phase = self.phase[n * c..(n + 1) * c].to_vec();
        Ok(ActivatedGaussian {
            position,
            scale,
            rotation,
            amplitude,
            phase,
            opacity,
        })
    }
}

/// A primitive in physical parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedGaussian {
    /// Pixel coordinates `(x, y)`.
    pub position: [f64; 2],
    pub scale: [f64; 2],
    pub rotation: f64,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub opacity: f64,
}

impl ActivatedGaussian {
    pub fn covariance(&self) -> Covariance2 {
        covariance(self.scale, self.rotation)
    }
}

/// Symmetric 2×2 covariance `[[sxx, sxy], [sxy, syy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance2 {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl Covariance2 {
    pub fn det(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    /// Larger eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        let mid = 0.5 * (self.sxx + self.syy);
        let half_diff = 0.5 * (self.sxx - self.syy);
        mid + (half_diff * half_diff + self.sxy * self.sxy).sqrt()
    }
}

/// Entries of `Σ⁻¹`, stored as `[inv00, inv01, inv11]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseCovariance2 {
    pub inv00: f64,
    pub inv01: f64,
    pub inv11: f64,
}

impl InverseCovariance2 {
    /// `dᵀ Σ⁻¹ d` for `d = (dx, dy)`.
    #[inline]
    pub fn mahalanobis(&self, dx: f64, dy: f64) -> f64 {
        dx * dx * self.inv00 + 2.0 * dx * dy * self.inv01 + dy * dy * self.inv11
    }
}

fn ensure_finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn activate_position(pre: [f64; 2], width: f64, height: f64) -> Result<[f64; 2]> {
    ensure_finite(pre[0], "pre_position")?;
    ensure_finite(pre[1], "pre_position")?;
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::invalid(format!(
            "canvas must be non-empty, got {width}x{height}"
        )));
    }
    Ok([
        (pre[0].tanh() + 1.0) * 0.5 * width,
        (pre[1].tanh() + 1.0) * 0.5 * height,
    ])
}

/// Inverse of [`activate_position`] along one axis.
pub fn deactivate_position(x: f64, extent: f64) -> f64 {
    (2.0 * x / extent - 1.0).atanh()
}

pub fn activate_scale(pre: [f64; 2]) -> Result<[f64; 2]> {
    ensure_finite(pre[0], "pre_scale")?;
    ensure_finite(pre[1], "pre_scale")?;
    Ok([pre[0].exp() + SCALE_EPS, pre[1].exp() + SCALE_EPS])
}

pub fn activate_opacity(pre: f64) -> Result<f64> {
    ensure_finite(pre, "pre_opacity")?;
    Ok(sigmoid(pre))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn activate_amplitude(raw: f64) -> f64 {
    raw.clamp(0.0, 1.0)
}

/// `∂x/∂x̃` of the tanh position map along an axis of length `extent`.
#[inline]
pub fn position_derivative(pre: f64, extent: f64) -> f64 {
    let t = pre.tanh();
    0.5 * extent * (1.0 - t * t)
}

/// `∂s/∂s̃` of the exponential scale map.
#[inline]
pub fn scale_derivative(pre: f64) -> f64 {
    pre.exp()
}

/// `∂α/∂α̃` of the sigmoid.
#[inline]
pub fn opacity_derivative(pre: f64) -> f64 {
    let a = sigmoid(pre);
    a * (1.0 - a)
}

/// Pass-through gate of the amplitude clamp.
#[inline]
pub fn amplitude_derivative(raw: f64) -> f64 {
    if (0.0..=1.0).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

/// `R(θ) · diag(s)² · R(θ)ᵀ + ε_c · I`.
pub fn covariance(scale: [f64; 2], rotation: f64) -> Covariance2 {
    let (sin, cos) = rotation.sin_cos();
    let sx2 = scale[0] * scale[0];
    let sy2 = scale[1] * scale[1];
    Covariance2 {
        sxx: sx2 * cos * cos + sy2 * sin * sin + COV_EPS,
        sxy: (sx2 - sy2) * cos * sin,
        syy: sx2 * sin * sin + sy2 * cos * cos + COV_EPS,
    }
}

/// Inverse covariance with a clamped determinant, plus a 3σ screen radius.
pub fn invert_covariance(cov: Covariance2) -> (InverseCovariance2, f64) {
    let det_safe = cov.det().max(DET_EPS);
    let inv = InverseCovariance2 {
        inv00: cov.syy / det_safe,
        inv01: -cov.sxy / det_safe,
        inv11: cov.sxx / det_safe,
    };
    let radius = 3.0 * cov.max_eigenvalue().max(0.0).sqrt();
    (inv, radius)
}

/// Vector-Jacobian product of [`invert_covariance`]: maps `∂L/∂Σ⁻¹` (with
/// `inv01` counted once) to `∂L/∂Σ` (with `sxy` counted once).
pub fn invert_covariance_vjp(cov: Covariance2, d_inv: [f64; 3]) -> [f64; 3] {
    let Covariance2 {
        sxx: a,
        sxy: b,
        syy: c,
    } = cov;
    let det = cov.det();
    if det <= DET_EPS {
        // det_safe is the constant floor here, so the map is linear.
        let s = 1.0 / DET_EPS;
        return [d_inv[2] * s, -d_inv[1] * s, d_inv[0] * s];
    }
    let det2 = det * det;
    let [g00, g01, g11] = d_inv;
    // inv00 = c/det, inv01 = -b/det, inv11 = a/det, det = ac - b²
    let da = g00 * (-c * c / det2) + g01 * (b * c / det2) + g11 * (1.0 / det - a * c / det2);
    let db = g00 * (2.0 * b * c / det2) + g01 * (-1.0 / det - 2.0 * b * b / det2)
        + g11 * (2.0 * a * b / det2);
    let dc = g00 * (1.0 / det - a * c / det2) + g01 * (a * b / det2) + g11 * (-a * a / det2);
    [da, db, dc]
}

/// Vector-Jacobian product of [`covariance`]: maps `∂L/∂Σ` to
/// `(∂L/∂s_x, ∂L/∂s_y, ∂L/∂θ)`.
pub fn covariance_vjp(scale: [f64; 2], rotation: f64, d_cov: [f64; 3]) -> ([f64; 2], f64) {
    let (sin, cos) = rotation.sin_cos();
    let [sx, sy] = scale;
    let [g00, g01, g11] = d_cov;
    let cc = cos * cos;
    let ss = sin * sin;
    let cs = cos * sin;
    let d_sx = 2.0 * sx * (cc * g00 + cs * g01 + ss * g11);
    let d_sy = 2.0 * sy * (ss * g00 - cs * g01 + cc * g11);
    let sx2 = sx * sx;
    let sy2 = sy * sy;
    let d_theta = 2.0 * (sy2 - sx2) * cs * g00
        + (sx2 - sy2) * (cc - ss) * g01
        + 2.0 * (sx2 - sy2) * cs * g11;
    ([d_sx, d_sy], d_theta)
}
