use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convert::{DpacMode, RandomPohConfig};
use crate::error::{Error, Result};
use crate::loss::DepthPlaneSet;
use crate::optim::{AdanConfig, LearningRates};
use crate::propagation::{PropagationSpec, DEFAULT_PAD_FACTOR, DEFAULT_PIXEL_PITCH, RGB_WAVELENGTHS};

/// What a training run produces besides the fitted complex hologram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Complex,
    SmoothPoh,
    RandomPoh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneConfig {
    pub count: usize,
    /// `d₀`, meters.
    pub center_distance: f64,
    /// `Δz`, meters. Defaults to `volume_depth / (count − 1)`.
    pub spacing: Option<f64>,
    /// Distance between the first and last plane, meters.
    pub volume_depth: f64,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        Self {
            count: 2,
            center_distance: 3e-3,
            spacing: None,
            volume_depth: 4e-3,
        }
    }
}

impl PlaneConfig {
    pub fn resolve(&self) -> Result<DepthPlaneSet> {
        let spacing = match self.spacing {
            Some(s) => s,
            None if self.count > 1 => self.volume_depth / (self.count - 1) as f64,
            None => 0.0,
        };
        DepthPlaneSet::new(self.count, self.center_distance, spacing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// Meters per channel. Defaults to 639/532/473 nm for three channels and
    /// 532 nm for one.
    pub wavelengths: Option<Vec<f64>>,
    pub pixel_pitch: f64,
    pub pad_factor: usize,
    pub aperture_radius: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            wavelengths: None,
            pixel_pitch: DEFAULT_PIXEL_PITCH,
            pad_factor: DEFAULT_PAD_FACTOR,
            aperture_radius: 0.0,
        }
    }
}

impl PropagationConfig {
    pub fn resolve(&self, channels: usize) -> Result<PropagationSpec> {
        let wavelengths = match (&self.wavelengths, channels) {
            (Some(w), _) => w.clone(),
            (None, 3) => RGB_WAVELENGTHS.to_vec(),
            (None, 1) => vec![RGB_WAVELENGTHS[1]],
            (None, c) => {
                return Err(Error::Config(format!(
                    "no default wavelengths for {c} channels"
                )))
            }
        };
        let spec = PropagationSpec {
            wavelengths,
            pixel_pitch: self.pixel_pitch,
            pad_factor: self.pad_factor,
            aperture_radius: self.aperture_radius,
        };
        spec.validate()?;
        if spec.channels() != channels {
            return Err(Error::Config(format!(
                "{} wavelengths for {channels} channels",
                spec.channels()
            )));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversionConfig {
    pub dpac_mode: DpacMode,
    /// Random phase-only conversion; its `seed` is replaced by the run seed.
    pub random: RandomPohConfig,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            dpac_mode: DpacMode::Verbatim,
            random: RandomPohConfig::default(),
        }
    }
}

/// Everything a training run needs. Paths are resolved relative to the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Target PNG. Without one, a procedural scene of `width × height` is used.
    pub image_path: Option<PathBuf>,
    /// Depth PNG (8- or 16-bit grey).
    pub depth_path: Option<PathBuf>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub channels: usize,
    /// At most one of `gaussian_count` and `parameter_ratio` may be set;
    /// with neither, the ratio defaults to 5:1.
    pub gaussian_count: Option<usize>,
    pub parameter_ratio: Option<f64>,
    pub planes: PlaneConfig,
    pub propagation: PropagationConfig,
    pub steps: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mode: Mode,
    /// Depth 1.0 maps to the last plane when true.
    pub near_is_high: bool,
    pub log_every: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub learning_rates: LearningRates,
    pub adan: AdanConfig,
    pub conversion: ConversionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            image_path: None,
            depth_path: None,
            width: None,
            height: None,
            channels: 3,
            gaussian_count: None,
            parameter_ratio: None,
            planes: PlaneConfig::default(),
            propagation: PropagationConfig::default(),
            steps: 2000,
            seed: 0,
            output_dir: PathBuf::from("out"),
            mode: Mode::Complex,
            near_is_high: true,
            log_every: 50,
            threads: 0,
            learning_rates: LearningRates::default(),
            adan: AdanConfig::default(),
            conversion: ConversionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (self.gaussian_count, self.parameter_ratio) {
            (Some(0), None) => return Err(Error::Config("gaussian_count must be at least 1".into())),
            (Some(_), None) => {}
            (None, None) => {}
            (None, Some(r)) if r > 0.0 && r.is_finite() => {}
            (None, Some(r)) => {
                return Err(Error::Config(format!("parameter_ratio must be positive, got {r}")))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set only one of gaussian_count and parameter_ratio".into(),
                ))
            }
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.image_path.is_none() && (self.width.is_none() || self.height.is_none()) {
            return Err(Error::Config(
                "width and height are required without an image_path".into(),
            ));
        }
        self.planes.resolve()?;
        self.propagation.resolve(self.channels)?;
        Ok(())
    }

    /// `N` for a `width × height` target.
    pub fn gaussian_count_for(&self, width: usize, height: usize) -> usize {
        match (self.gaussian_count, self.parameter_ratio) {
            (Some(n), _) => n,
            (None, r) => gaussians_for_ratio(
                self.channels,
                height,
                width,
                r.unwrap_or(DEFAULT_PARAMETER_RATIO),
            ),
        }
    }
}

pub const DEFAULT_PARAMETER_RATIO: f64 = 5.0;

/// `N = round(2·C·H·W / (12·r))`, at least 1.
pub fn gaussians_for_ratio(channels: usize, height: usize, width: usize, ratio: f64) -> usize {
    let n = (2.0 * (channels * height * width) as f64 / (12.0 * ratio)).round();
    (n as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig {
            width: Some(64),
            height: Some(32),
            ..RunConfig::default()
        };
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn exactly_one_budget() {
        let both = "width = 8\nheight = 8\ngaussian_count = 4\nparameter_ratio = 2.0\n";
        assert!(matches!(RunConfig::from_toml(both), Err(Error::Config(_))));
        let count = RunConfig::from_toml("width = 8\nheight = 8\ngaussian_count = 4\n").unwrap();
        assert_eq!(count.gaussian_count_for(8, 8), 4);
        let neither = RunConfig::from_toml("width = 60\nheight = 10\nchannels = 1\n").unwrap();
        assert_eq!(neither.gaussian_count_for(60, 10), 20);
    }

    #[test]
    fn ratio_to_count() {
        assert_eq!(gaussians_for_ratio(1, 160, 256, 2.0), 3413);
        assert_eq!(gaussians_for_ratio(3, 640, 1024, 5.0), 65536);
    }

    #[test]
    fn default_plane_spacing_spans_volume() {
        let p = PlaneConfig::default().resolve().unwrap();
        let d = p.distances();
        assert!((d[0] - 1e-3).abs() < 1e-15 && (d[1] - 5e-3).abs() < 1e-15);
        let one = PlaneConfig {
            count: 1,
            ..PlaneConfig::default()
        };
        assert_eq!(one.resolve().unwrap().distances(), vec![3e-3]);
    }

    #[test]
    fn mono_default_wavelength() {
        let s = PropagationConfig::default().resolve(1).unwrap();
        assert_eq!(s.wavelengths, vec![532e-9]);
        assert!(PropagationConfig::default().resolve(2).is_err());
    }
}
