//! Phase-only hologram conversion.
//!
//! Two formats are produced from a fitted complex field:
//!
//! * **smooth**: double phase–amplitude coding on a checkerboard;
//! * **random**: a phase raster optimized directly, optionally guided by the
//!   fitted Gaussian field propagated alongside it.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex_field::ComplexField;
use crate::error::{Error, Result};
use crate::field::GaussianSet;
use crate::loss::{intensity_backward, loss_recon_with_grad, DepthPlaneSet, Reconstruction, TargetStack};
use crate::optim::{Adan, AdanConfig};
use crate::propagation::{PropagationSpec, Propagator};
use crate::raster::rasterize_forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PohKind {
    Smooth,
    Random,
}

/// Phase raster `C × H × W` with values in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOnlyHologram {
    channels: usize,
    height: usize,
    width: usize,
    pub phase: Vec<f64>,
    pub kind: PohKind,
}

impl PhaseOnlyHologram {
    /// Canonicalizes `phase` into `[0, 2π)`.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        phase: Vec<f64>,
        kind: PohKind,
    ) -> Result<Self> {
        if phase.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} phase values for {channels}×{height}×{width}",
                phase.len()
            )));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("phase raster"));
        }
        Ok(Self {
            channels,
            height,
            width,
            phase: phase.into_iter().map(canonicalize_phase).collect(),
            kind,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
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

    /// `e^{jφ}`.
    pub fn field(&self) -> ComplexField {
        let (sin, cos): (Vec<f64>, Vec<f64>) = self.phase.iter().map(|p| p.sin_cos()).unzip();
        ComplexField::from_parts(self.channels, self.height, self.width, cos, sin)
            .expect("shape checked at construction")
    }
}

/// `φ mod 2π` in `[0, 2π)`.
pub fn canonicalize_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest distance between two phases on the circle, in `[0, π]`.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpacMode {
    /// Even cells carry the normalized amplitude itself, odd cells the phase.
    #[default]
    Verbatim,
    /// Even cells `φ + acos(A)`, odd cells `φ − acos(A)`.
    Classical,
}

/// Checkerboard encoding with the default [`DpacMode::Verbatim`].
pub fn dpac_encode(field: &ComplexField) -> Result<PhaseOnlyHologram> {
    dpac_encode_with(field, DpacMode::Verbatim)
}

/// Amplitudes are divided by their per-channel maximum first. Cell
/// `(i, j)` with `i + j` even takes the amplitude branch.
pub fn dpac_encode_with(field: &ComplexField, mode: DpacMode) -> Result<PhaseOnlyHologram> {
    if !field.is_finite() {
        return Err(Error::NonFinite("field"));
    }
    let (c_count, h, w) = field.dims();
    let mut phase = vec![0.0; c_count * h * w];
    for c in 0..c_count {
        let max = (0..h * w)
            .map(|p| field.get(c, p / w, p % w).norm())
            .fold(0.0, f64::max);
        for y in 0..h {
            for x in 0..w {
                let z = field.get(c, y, x);
                let a = if max > 0.0 { (z.norm() / max).min(1.0) } else { 0.0 };
                let arg = z.arg();
                let even = (y + x) % 2 == 0;
                phase[field.index(c, y, x)] = match (mode, even) {
                    (DpacMode::Verbatim, true) => a,
                    (DpacMode::Verbatim, false) => arg,
                    (DpacMode::Classical, true) => arg + a.acos(),
                    (DpacMode::Classical, false) => arg - a.acos(),
                };
            }
        }
    }
    PhaseOnlyHologram::new(c_count, h, w, phase, PohKind::Smooth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomPohConfig {
    pub steps: u64,
    pub learning_rate: f64,
    /// Weight of the guide-vs-random intensity agreement term.
    pub lambda_comp: f64,
    /// Weight of the guide-vs-random complex field L1 term.
    pub lambda_field: f64,
    /// Amplitude of the illumination reaching the phase modulator. `None`
    /// matches the RMS amplitude of the guide hologram (1 without a guide).
    pub illumination: Option<f64>,
    pub seed: u64,
    pub adan: AdanConfig,
}

impl Default for RandomPohConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            learning_rate: 2.5e-2,
            lambda_comp: 0.1,
            lambda_field: 0.01,
            illumination: None,
            seed: 0,
            adan: AdanConfig::default(),
        }
    }
}

impl RandomPohConfig {
    /// The same configuration with both guidance weights set to zero.
    pub fn unguided(&self) -> Self {
        Self {
            lambda_comp: 0.0,
            lambda_field: 0.0,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let weights = [self.lambda_comp, self.lambda_field];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("guidance weights must be finite and non-negative"));
        }
        let illumination_ok = self.illumination.is_none_or(|s| s > 0.0 && s.is_finite());
        if !(self.learning_rate > 0.0 && illumination_ok) {
            return Err(Error::invalid("learning rate and illumination must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomPohResult {
    pub hologram: PhaseOnlyHologram,
    /// Objective value before each update.
    pub losses: Vec<f64>,
    /// Illumination amplitude the hologram was optimized for.
    pub illumination: f64,
}

/// Guide planes, frozen for the whole conversion.
struct Guide {
    fields: Vec<ComplexField>,
    intensity: Reconstruction,
    /// RMS amplitude of the guide hologram.
    rms: f64,
}

impl Guide {
    fn new(prop: &Propagator, set: &GaussianSet, target: &TargetStack) -> Result<Self> {
        if set.channels() != target.channels() {
            return Err(Error::shape(format!(
                "guide has {} channels, target has {}",
                set.channels(),
                target.channels()
            )));
        }
        let field = rasterize_forward(set, target.width(), target.height())?;
        let spectrum = prop.spectrum(&field)?;
        let fields: Vec<ComplexField> = (0..prop.planes())
            .map(|l| prop.propagate_spectrum(&spectrum, l))
            .collect();
        let intensity = Reconstruction::from_fields(&fields)?;
        let rms = (field.energy() / field.real.len() as f64).sqrt();
        Ok(Self {
            fields,
            intensity,
            rms,
        })
    }
}

/// Optimizes a random phase-only hologram for `target` with the fitted
/// `guide` propagated in parallel. The guide is frozen; only the phase
/// raster is updated.
pub fn convert_random_poh(
    guide: &GaussianSet,
    planes: &DepthPlaneSet,
    target: &TargetStack,
    spec: &PropagationSpec,
    config: &RandomPohConfig,
) -> Result<RandomPohResult> {
    let prop = setup(planes, target, spec, config)?;
    let guide = Guide::new(&prop, guide, target)?;
    optimize(&prop, target, config, Some(&guide))
}

/// Random phase-only optimization against the target alone.
pub fn optimize_random_poh(
    planes: &DepthPlaneSet,
    target: &TargetStack,
    spec: &PropagationSpec,
    config: &RandomPohConfig,
) -> Result<RandomPohResult> {
    let prop = setup(planes, target, spec, config)?;
    optimize(&prop, target, config, None)
}

fn setup(
    planes: &DepthPlaneSet,
    target: &TargetStack,
    spec: &PropagationSpec,
    config: &RandomPohConfig,
) -> Result<Propagator> {
    planes.validate()?;
    config.validate()?;
    if planes.count != target.planes() {
        return Err(Error::shape(format!(
            "{} planes configured, target has {} masks",
            planes.count,
            target.planes()
        )));
    }
    if spec.channels() != target.channels() {
        return Err(Error::shape(format!(
            "{} wavelengths for a {}-channel target",
            spec.channels(),
            target.channels()
        )));
    }
    Propagator::new(spec, target.height(), target.width(), &planes.distances())
}

/// Uniform phases in `[−π, π)`.
pub fn random_phase(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-PI..PI)).collect()
}

fn optimize(
    prop: &Propagator,
    target: &TargetStack,
    config: &RandomPohConfig,
    guide: Option<&Guide>,
) -> Result<RandomPohResult> {
    let (c_count, h, w) = (target.channels(), target.height(), target.width());
    let n = c_count * h * w;
    let illumination = resolve_illumination(config, guide)?;
    let mut phase = random_phase(n, config.seed);
    let mut adan = Adan::new(n, config.adan);
    let mut losses = Vec::with_capacity(config.steps as usize);

    for _ in 0..config.steps {
        let (value, grad) = extract_loss(prop, target, config, illumination, guide, &phase)?;
        losses.push(value);
        adan.step("phase", &mut phase, &grad, config.learning_rate)?;
    }
    Ok(RandomPohResult {
        hologram: PhaseOnlyHologram::new(c_count, h, w, phase, PohKind::Random)?,
        losses,
        illumination,
    })
}

fn resolve_illumination(config: &RandomPohConfig, guide: Option<&Guide>) -> Result<f64> {
    let s = config
        .illumination
        .unwrap_or_else(|| guide.map_or(1.0, |g| g.rms));
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("illumination must be positive, got {s}")));
    }
    Ok(s)
}

/// Objective and its gradient with respect to the phase raster.
fn extract_loss(
    prop: &Propagator,
    target: &TargetStack,
    config: &RandomPohConfig,
    s: f64,
    guide: Option<&Guide>,
    phase: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (c_count, h, w) = (target.channels(), target.height(), target.width());
    let n = c_count * h * w;
    let l_count = prop.planes();
    let (sin, cos): (Vec<f64>, Vec<f64>) = phase.iter().map(|p| p.sin_cos()).unzip();
    let u0 = ComplexField::from_parts(
        c_count,
        h,
        w,
        cos.iter().map(|c| s * c).collect(),
        sin.iter().map(|v| s * v).collect(),
    )?;
    let spectrum = prop.spectrum(&u0)?;
    let fields: Vec<ComplexField> = (0..l_count)
        .map(|l| prop.propagate_spectrum(&spectrum, l))
        .collect();
    let recon = Reconstruction::from_fields(&fields)?;
    let mut lg = loss_recon_with_grad(&recon, target)?;
    let mut value = lg.value;

    // The guidance norms sum over pixels; every term is averaged over planes.
    let scale = 1.0 / l_count as f64;
    let mut field_grads = Vec::new();
    if let Some(g) = guide {
        value += loss_recon_with_grad(&g.intensity, target)?.value;
        let mut comp = 0.0;
        for (gi, (ig, ir)) in lg
            .grad
            .data
            .iter_mut()
            .zip(g.intensity.data.iter().zip(&recon.data))
        {
            let d = ig - ir;
            comp += d * d;
            *gi -= 2.0 * config.lambda_comp * d * scale;
        }
        value += config.lambda_comp * comp * scale;

        let mut l1 = 0.0;
        for (fg, fr) in g.fields.iter().zip(&fields) {
            let mut out = ComplexField::zeros(c_count, h, w);
            for i in 0..n {
                let dr = fg.real[i] - fr.real[i];
                let di = fg.imag[i] - fr.imag[i];
                l1 += dr.abs() + di.abs();
                out.real[i] = -config.lambda_field * sign(dr) * scale;
                out.imag[i] = -config.lambda_field * sign(di) * scale;
            }
            field_grads.push(out);
        }
        value += config.lambda_field * l1 * scale;
    }

    let mut plane_grads = intensity_backward(&fields, &lg.grad)?;
    for (pg, fg) in plane_grads.iter_mut().zip(&field_grads) {
        pg.add_assign(fg);
    }
    let g0 = prop.backward_sum(&plane_grads)?;
    let grad = (0..n)
        .map(|i| s * (-sin[i] * g0.real[i] + cos[i] * g0.imag[i]))
        .collect();
    Ok((value, grad))
}

/// Sign with a zero subgradient at ties.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Objective value and phase gradient of a random-POH conversion step,
/// exposed for gradient checks.
pub fn random_poh_objective(
    guide: Option<&GaussianSet>,
    planes: &DepthPlaneSet,
    target: &TargetStack,
    spec: &PropagationSpec,
    config: &RandomPohConfig,
    phase: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let prop = setup(planes, target, spec, config)?;
    if phase.len() != target.intensity().len() {
        return Err(Error::shape("phase raster does not match the target"));
    }
    let guide = guide.map(|set| Guide::new(&prop, set, target)).transpose()?;
    let s = resolve_illumination(config, guide.as_ref())?;
    extract_loss(&prop, target, config, s, guide.as_ref(), phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn canonical_phase_examples() {
        assert!((canonicalize_phase(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert_eq!(canonicalize_phase(TAU), 0.0);
        assert!((canonicalize_phase(7.5) - (7.5 - TAU)).abs() < 1e-15);
        assert_eq!(canonicalize_phase(-1e-300), 0.0);
    }

    #[test]
    fn constant_field_dpac() {
        let f = ComplexField::from_complex(1, 2, 2, &[Complex64::new(1.0, 0.0); 4]).unwrap();
        let p = dpac_encode(&f).unwrap();
        assert_eq!(p.phase, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.kind, PohKind::Smooth);
    }

    #[test]
    fn classical_dpac_unit_amplitude_collapses_to_phase() {
        let z = Complex64::from_polar(2.0, 0.5);
        let f = ComplexField::from_complex(1, 1, 2, &[z, z]).unwrap();
        let p = dpac_encode_with(&f, DpacMode::Classical).unwrap();
        assert!((p.phase[0] - 0.5).abs() < 1e-12);
        assert!((p.phase[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phase_hologram_field_is_unit_modulus() {
        let p = PhaseOnlyHologram::new(1, 2, 3, random_phase(6, 4), PohKind::Random).unwrap();
        assert!(p.field().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!(p.phase.iter().all(|&v| (0.0..TAU).contains(&v)));
    }

    #[test]
    fn random_phase_is_seeded_and_in_range() {
        let a = random_phase(100, 7);
        assert_eq!(a, random_phase(100, 7));
        assert_ne!(a, random_phase(100, 8));
        assert!(a.iter().all(|v| (-PI..PI).contains(v)));
    }

    #[test]
    fn sign_has_zero_subgradient_at_ties() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(2.0), 1.0);
    }
}
