use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::image_io::{load_depth, load_image, save_image, save_phase_png, LinearImage};
use super::persist::{save_field, save_gaussians, write_atomic, FieldDtype};
use super::scene::synthetic_scene;
use crate::complex_field::ComplexField;
use crate::convert::{convert_random_poh, dpac_encode_with, PhaseOnlyHologram, RandomPohConfig};
use crate::error::{Error, Result};
use crate::field::{deactivate_position, GaussianSet};
use crate::loss::{
    intensity_backward, ssim_image, training_loss_with_grad, DepthPlaneSet, Reconstruction,
    TargetStack,
};
use crate::optim::{AdanConfig, GaussianOptimizer, LearningRates};
use crate::propagation::{PropagationSpec, Propagator};
use crate::raster::Rasterizer;

/// PSNR and SSIM per plane, plus their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "float_or_inf::vec")]
    pub psnr_per_plane: Vec<f64>,
    pub ssim_per_plane: Vec<f64>,
    #[serde(with = "float_or_inf")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    fn parse<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        parse(Repr::deserialize(d)?)
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        struct One<'a>(&'a f64);

        impl serde::Serialize for One<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::serialize(self.0, s)
            }
        }

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&One(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<super::Repr>::deserialize(d)?
                .into_iter()
                .map(super::parse)
                .collect()
        }
    }
}

/// `10·log10(1/MSE)` on values clipped to `[0, 1]`; `+∞` when identical.
pub fn psnr(recon: &[f64], target: &[f64]) -> f64 {
    let mse = recon
        .iter()
        .zip(target)
        .map(|(r, t)| (r.clamp(0.0, 1.0) - t.clamp(0.0, 1.0)).powi(2))
        .sum::<f64>()
        / recon.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn compute_metrics(recon: &Reconstruction, target: &TargetStack) -> Result<Metrics> {
    let expected = (target.planes(), target.channels(), target.height(), target.width());
    if recon.dims() != expected {
        return Err(Error::shape(format!(
            "reconstruction is {:?}, target is {:?}",
            recon.dims(),
            expected
        )));
    }
    let (l_count, c_count, h, w) = recon.dims();
    let hw = h * w;
    let mut psnr_per_plane = Vec::with_capacity(l_count);
    let mut ssim_per_plane = Vec::with_capacity(l_count);
    for l in 0..l_count {
        let plane: Vec<f64> = recon.plane(l).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        psnr_per_plane.push(psnr(&plane, target.intensity()));
        let mut s = 0.0;
        for c in 0..c_count {
            s += ssim_image(
                &plane[c * hw..(c + 1) * hw],
                &target.intensity()[c * hw..(c + 1) * hw],
                w,
                h,
            )?;
        }
        ssim_per_plane.push(s / c_count as f64);
    }
    Ok(Metrics {
        mean_psnr: psnr_per_plane.iter().sum::<f64>() / l_count as f64,
        mean_ssim: ssim_per_plane.iter().sum::<f64>() / l_count as f64,
        psnr_per_plane,
        ssim_per_plane,
    })
}

/// Initial primitives: positions uniform over the canvas, scales
/// `(1.5, 5.0)` before the `+0.1` offset, amplitudes uniform in `[0, 1]`,
/// zero phase and rotation, opacity `sigmoid(−0.5)`.
pub fn init_gaussians(
    count: usize,
    channels: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = GaussianSet::zeros(count, channels);
    let (w, h) = (width as f64, height as f64);
    let nudge = |x: f64, extent: f64| x.clamp(1e-6 * extent, extent - 1e-6 * extent);
    for n in 0..count {
        let x = nudge(rng.gen::<f64>() * w, w);
        let y = nudge(rng.gen::<f64>() * h, h);
        set.pre_position[2 * n] = deactivate_position(x, w);
        set.pre_position[2 * n + 1] = deactivate_position(y, h);
        set.pre_scale[2 * n] = 1.5f64.ln();
        set.pre_scale[2 * n + 1] = 5.0f64.ln();
        for c in 0..channels {
            set.amplitude[n * channels + c] = rng.gen::<f64>();
        }
        set.pre_opacity[n] = -0.5;
    }
    set
}

/// Target, plane layout and optics of one fitting problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub target: TargetStack,
    pub planes: DepthPlaneSet,
    pub spec: PropagationSpec,
}

impl Problem {
    pub fn width(&self) -> usize {
        self.target.width()
    }

    pub fn height(&self) -> usize {
        self.target.height()
    }

    pub fn channels(&self) -> usize {
        self.target.channels()
    }

    pub fn propagator(&self) -> Result<Propagator> {
        Propagator::new(&self.spec, self.height(), self.width(), &self.planes.distances())
    }

    /// Planes reconstructed from the hologram-plane field `field`.
    pub fn reconstruct(&self, field: &ComplexField) -> Result<(Vec<ComplexField>, Reconstruction)> {
        let prop = self.propagator()?;
        let spectrum = prop.spectrum(field)?;
        let fields: Vec<ComplexField> = (0..prop.planes())
            .map(|l| prop.propagate_spectrum(&spectrum, l))
            .collect();
        let recon = Reconstruction::from_fields(&fields)?;
        Ok((fields, recon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub steps: u64,
    pub learning_rates: LearningRates,
    pub adan: AdanConfig,
    /// Loss is logged and recorded every `log_every` steps (and at the
    /// first and last step).
    pub log_every: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rates: LearningRates::default(),
            adan: AdanConfig::default(),
            log_every: 50,
        }
    }
}

/// Training loss recorded at a 1-based step, before that step's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
}

/// Gradient-descent state for one problem.
pub struct Trainer<'a> {
    problem: &'a Problem,
    propagator: Propagator,
    set: GaussianSet,
    optimizer: GaussianOptimizer,
    steps_done: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: &'a Problem, set: GaussianSet, options: &FitOptions) -> Result<Self> {
        if set.channels() != problem.channels() {
            return Err(Error::shape(format!(
                "set has {} channels, target has {}",
                set.channels(),
                problem.channels()
            )));
        }
        if problem.planes.count != problem.target.planes() {
            return Err(Error::shape("plane count differs from the number of target masks"));
        }
        set.validate()?;
        let optimizer =
            GaussianOptimizer::new(&set, options.learning_rates, options.adan, options.steps);
        Ok(Self {
            problem,
            propagator: problem.propagator()?,
            set,
            optimizer,
            steps_done: 0,
        })
    }

    pub fn set(&self) -> &GaussianSet {
        &self.set
    }

    pub fn into_set(self) -> GaussianSet {
        self.set
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// Training loss and its gradient at the current parameters.
    pub fn loss_and_grad(&self) -> Result<(f64, GaussianSet)> {
        let p = self.problem;
        let raster = Rasterizer::new(&self.set, p.width(), p.height())?;
        let field = raster.forward();
        let spectrum = self.propagator.spectrum(&field)?;
        let fields: Vec<ComplexField> = (0..self.propagator.planes())
            .map(|l| self.propagator.propagate_spectrum(&spectrum, l))
            .collect();
        let recon = Reconstruction::from_fields(&fields)?;
        let lg = training_loss_with_grad(&recon, &p.target)?;
        let plane_grads = intensity_backward(&fields, &lg.grad)?;
        let field_grad = self.propagator.backward_sum(&plane_grads)?;
        let grad = raster.backward(&self.set, &field_grad)?;
        Ok((lg.value, grad))
    }

    /// One Adan update; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad()?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.optimizer.step(&mut self.set, &grad)?;
        self.steps_done += 1;
        Ok(loss)
    }

    pub fn field(&self) -> Result<ComplexField> {
        let p = self.problem;
        Ok(Rasterizer::new(&self.set, p.width(), p.height())?.forward())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub set: GaussianSet,
    pub field: ComplexField,
    pub recon: Reconstruction,
    pub metrics: Metrics,
    pub history: Vec<LossRecord>,
    pub final_loss: f64,
}

/// Runs `options.steps` updates from `init` and evaluates the result.
pub fn fit(problem: &Problem, init: GaussianSet, options: &FitOptions) -> Result<FitOutcome> {
    let mut trainer = Trainer::new(problem, init, options)?;
    let mut history = Vec::new();
    let started = Instant::now();
    for k in 1..=options.steps {
        let loss = trainer.step()?;
        let logged = k == 1 || k == options.steps || (options.log_every > 0 && k % options.log_every == 0);
        if logged {
            history.push(LossRecord { step: k, loss });
            info!(
                "step {k:>5}/{}  loss {loss:.6e}  ({:.1}s)",
                options.steps,
                started.elapsed().as_secs_f64()
            );
        }
    }
    let (final_loss, _) = trainer.loss_and_grad()?;
    let field = trainer.field()?;
    let (_, recon) = problem.reconstruct(&field)?;
    let metrics = compute_metrics(&recon, &problem.target)?;
    Ok(FitOutcome {
        set: trainer.into_set(),
        field,
        recon,
        metrics,
        history,
        final_loss,
    })
}

/// Reads (or synthesizes) the target described by `config`.
pub fn load_problem(config: &RunConfig) -> Result<Problem> {
    config.validate()?;
    let channels = config.channels;
    let (image, scene_depth) = match &config.image_path {
        Some(path) => {
            let img = load_image(path, channels)?;
            let size_ok = config.width.is_none_or(|w| w == img.width)
                && config.height.is_none_or(|h| h == img.height);
            if !size_ok {
                return Err(Error::shape(format!(
                    "{} is {}x{}, config asks for {}x{}",
                    path.display(),
                    img.width,
                    img.height,
                    config.width.unwrap_or(img.width),
                    config.height.unwrap_or(img.height)
                )));
            }
            (img, None)
        }
        None => {
            let (img, depth) = synthetic_scene(
                config.width.expect("validated"),
                config.height.expect("validated"),
                channels,
            );
            (img, Some(depth))
        }
    };
    let depth = match &config.depth_path {
        Some(path) => {
            let (w, h, d) = load_depth(path)?;
            if (w, h) != (image.width, image.height) {
                return Err(Error::shape(format!(
                    "depth map {} is {w}x{h}, image is {}x{}",
                    path.display(),
                    image.width,
                    image.height
                )));
            }
            d
        }
        None => scene_depth.unwrap_or_else(|| vec![0.0; image.width * image.height]),
    };
    let planes = config.planes.resolve()?;
    let target = TargetStack::from_depth(
        channels,
        image.height,
        image.width,
        image.data,
        depth,
        planes.count,
        config.near_is_high,
    )?;
    let spec = config.propagation.resolve(channels)?;
    Ok(Problem {
        target,
        planes,
        spec,
    })
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub gaussian_count: usize,
    /// `N·(6 + 2C)`; `12·N` for RGB.
    pub trainable_scalars: usize,
    pub steps: u64,
    pub seed: u64,
    pub plane_distances: Vec<f64>,
    pub final_loss: f64,
    pub loss_history: Vec<LossRecord>,
    pub metrics: Metrics,
    pub poh: Option<PohReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohReport {
    pub kind: String,
    /// `C·H·W` for a random phase-only hologram, 0 for an encoded one.
    pub trainable_scalars: usize,
    /// Illumination amplitude used for the reconstruction.
    pub illumination: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub fit: FitOutcome,
    pub poh: Option<PhaseOnlyHologram>,
    pub report: RunReport,
    pub output_dir: PathBuf,
}

/// Loads the inputs, fits, converts according to `config.mode` and writes
/// every artifact into `config.output_dir`.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| train_inner(config))
    } else {
        train_inner(config)
    }
}

fn train_inner(config: &RunConfig) -> Result<TrainOutcome> {
    let problem = load_problem(config)?;
    let (w, h, c) = (problem.width(), problem.height(), problem.channels());
    let n = config.gaussian_count_for(w, h);
    info!("{w}x{h}x{c} target, {n} Gaussians, {} planes", problem.planes.count);
    let init = init_gaussians(n, c, w, h, config.seed);
    let options = FitOptions {
        steps: config.steps,
        learning_rates: config.learning_rates,
        adan: config.adan,
        log_every: config.log_every,
    };
    let fit = fit(&problem, init, &options)?;

    let (poh, poh_report) = match config.mode {
        Mode::Complex => (None, None),
        Mode::SmoothPoh => {
            let holo = dpac_encode_with(&fit.field, config.conversion.dpac_mode)?;
            let metrics = poh_metrics(&problem, &holo, 1.0)?;
            (Some(holo), Some(("smooth", 0, 1.0, metrics)))
        }
        Mode::RandomPoh => {
            let rc = RandomPohConfig {
                seed: config.seed,
                ..config.conversion.random
            };
            let result = convert_random_poh(&fit.set, &problem.planes, &problem.target, &problem.spec, &rc)?;
            let metrics = poh_metrics(&problem, &result.hologram, result.illumination)?;
            (
                Some(result.hologram),
                Some(("random", c * w * h, result.illumination, metrics)),
            )
        }
    };

    let report = RunReport {
        width: w,
        height: h,
        channels: c,
        gaussian_count: n,
        trainable_scalars: fit.set.parameter_count(),
        steps: config.steps,
        seed: config.seed,
        plane_distances: problem.planes.distances(),
        final_loss: fit.final_loss,
        loss_history: fit.history.clone(),
        metrics: fit.metrics.clone(),
        poh: poh_report.map(|(kind, scalars, illumination, metrics)| PohReport {
            kind: kind.into(),
            trainable_scalars: scalars,
            illumination,
            metrics,
        }),
    };
    write_artifacts(config, &problem, &fit, poh.as_ref(), &report)?;
    info!(
        "mean PSNR {:.2} dB, mean SSIM {:.4}",
        report.metrics.mean_psnr, report.metrics.mean_ssim
    );
    Ok(TrainOutcome {
        fit,
        poh,
        report,
        output_dir: config.output_dir.clone(),
    })
}

/// Metrics of a phase-only hologram lit with amplitude `illumination`.
pub fn poh_metrics(problem: &Problem, holo: &PhaseOnlyHologram, illumination: f64) -> Result<Metrics> {
    let recon = poh_reconstruction(problem, holo, illumination)?;
    compute_metrics(&recon, &problem.target)
}

pub fn poh_reconstruction(
    problem: &Problem,
    holo: &PhaseOnlyHologram,
    illumination: f64,
) -> Result<Reconstruction> {
    let mut field = holo.field();
    field.real.iter_mut().chain(field.imag.iter_mut()).for_each(|v| *v *= illumination);
    Ok(problem.reconstruct(&field)?.1)
}

fn plane_image(recon: &Reconstruction, plane: usize) -> LinearImage {
    LinearImage {
        channels: recon.channels(),
        height: recon.height(),
        width: recon.width(),
        data: recon.plane(plane).to_vec(),
    }
}

/// File names inside a run's output directory.
pub mod artifacts {
    pub const CONFIG: &str = "config.toml";
    pub const GAUSSIANS: &str = "gaussians.cggs";
    pub const FIELD: &str = "hologram.cghf";
    pub const METRICS: &str = "metrics.json";
    pub const TARGET: &str = "target.png";

    pub fn recon_plane(plane: usize) -> String {
        format!("recon_plane{plane}.png")
    }

    pub fn poh(kind: &str) -> String {
        format!("poh_{kind}.png")
    }

    pub fn poh_recon_plane(kind: &str, plane: usize) -> String {
        format!("poh_{kind}_recon_plane{plane}.png")
    }
}

fn write_artifacts(
    config: &RunConfig,
    problem: &Problem,
    fit: &FitOutcome,
    poh: Option<&PhaseOnlyHologram>,
    report: &RunReport,
) -> Result<()> {
    let dir: &Path = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(artifacts::CONFIG), config.to_toml()?.as_bytes())?;
    save_gaussians(&dir.join(artifacts::GAUSSIANS), &fit.set)?;
    save_field(&dir.join(artifacts::FIELD), &fit.field, FieldDtype::F64)?;
    let t = &problem.target;
    save_image(
        &dir.join(artifacts::TARGET),
        &LinearImage {
            channels: t.channels(),
            height: t.height(),
            width: t.width(),
            data: t.intensity().to_vec(),
        },
    )?;
    for l in 0..fit.recon.planes() {
        save_image(&dir.join(artifacts::recon_plane(l)), &plane_image(&fit.recon, l))?;
    }
    if let (Some(holo), Some(pr)) = (poh, &report.poh) {
        save_phase_png(&dir.join(artifacts::poh(&pr.kind)), holo)?;
        let recon = poh_reconstruction(problem, holo, pr.illumination)?;
        for l in 0..recon.planes() {
            save_image(
                &dir.join(artifacts::poh_recon_plane(&pr.kind, l)),
                &plane_image(&recon, l),
            )?;
        }
    }
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("metrics serialization: {e}")))?;
    write_atomic(&dir.join(artifacts::METRICS), json.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{activate_opacity, activate_position, activate_scale};

    #[test]
    fn init_matches_documented_values() {
        let set = init_gaussians(50, 3, 40, 30, 1);
        for n in 0..50 {
            assert!((activate_opacity(set.pre_opacity[n]).unwrap() - 0.3775406687981454).abs() < 1e-15);
            let s = activate_scale([set.pre_scale[2 * n], set.pre_scale[2 * n + 1]]).unwrap();
            assert!((s[0] - 1.6).abs() < 1e-12 && (s[1] - 5.1).abs() < 1e-12);
            let p = activate_position([set.pre_position[2 * n], set.pre_position[2 * n + 1]], 40.0, 30.0)
                .unwrap();
            assert!(p[0] > 0.0 && p[0] < 40.0 && p[1] > 0.0 && p[1] < 30.0);
        }
        assert!(set.amplitude.iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(set.phase.iter().chain(&set.rotation).all(|&v| v == 0.0));
        assert_eq!(init_gaussians(50, 3, 40, 30, 1), set);
    }

    #[test]
    fn psnr_of_known_mse() {
        let a = vec![0.1; 100];
        let b = vec![0.2; 100];
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a), f64::INFINITY);
    }

    #[test]
    fn infinite_psnr_serializes_as_string() {
        let m = Metrics {
            psnr_per_plane: vec![f64::INFINITY, 30.0],
            ssim_per_plane: vec![1.0, 0.9],
            mean_psnr: f64::INFINITY,
            mean_ssim: 0.95,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"inf\""));
        let back: Metrics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
