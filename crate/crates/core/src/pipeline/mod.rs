//! End-to-end runs: configuration, target ingestion, initialization, the
//! training loop, metrics and artifact persistence.

mod config;
pub mod image_io;
pub mod persist;
mod scene;
mod train;

pub use config::{
    gaussians_for_ratio, ConversionConfig, Mode, PlaneConfig, PropagationConfig, RunConfig,
    DEFAULT_PARAMETER_RATIO,
};
pub use scene::synthetic_scene;
pub use train::{
    artifacts, compute_metrics, fit, init_gaussians, load_problem, poh_metrics,
    poh_reconstruction, psnr, train, FitOptions, FitOutcome, LossRecord, Metrics, PohReport,
    Problem, RunReport, TrainOutcome, Trainer,
};
