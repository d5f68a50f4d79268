mod common;

use holosplat::oracles::{
    clamp_boundary_coordinates, compare_gradients, finite_diff_grad, flatten, loop_psnr, unflatten,
    FiniteDiffSpec,
};
use holosplat::pipeline::{
    artifacts, gaussians_for_ratio, init_gaussians, load_problem, psnr, train, FitOptions, Metrics,
    Mode, RunConfig, RunReport, Trainer,
};
use holosplat::Error;

#[test]
fn psnr_of_a_uniform_error() {
    let target = vec![0.5; 64];
    let recon = vec![0.6; 64];
    assert!((psnr(&recon, &target) - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&target, &target), f64::INFINITY);
    assert!((psnr(&recon, &target) - loop_psnr(&recon, &target)).abs() < 1e-12);
}

#[test]
fn infinite_metrics_serialize_as_strings() {
    let m = Metrics {
        psnr_per_plane: vec![f64::INFINITY, 31.5],
        ssim_per_plane: vec![1.0, 0.9],
        mean_psnr: f64::INFINITY,
        mean_ssim: 0.95,
    };
    let json = serde_json::to_string(&m).unwrap();
    assert!(json.contains("\"inf\""), "{json}");
    let back: Metrics = serde_json::from_str(&json).unwrap();
    assert_eq!(back, m);
}

#[test]
fn ratio_budget_matches_the_dense_count() {
    assert_eq!(gaussians_for_ratio(3, 160, 256, 2.0), 10240);
    assert_eq!(gaussians_for_ratio(1, 160, 256, 2.0), 3413);
    assert_eq!(gaussians_for_ratio(3, 10, 10, 1e9), 1);
}

#[test]
fn trainer_gradient_matches_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::desk_config(24, 16, 2.0, 1, 3, dir.path());
    let problem = load_problem(&config).unwrap();
    let set = init_gaussians(6, 1, 24, 16, 3);
    let options = FitOptions::default();
    let (_, analytic) = Trainer::new(&problem, set.clone(), &options).unwrap().loss_and_grad().unwrap();
    let spec = FiniteDiffSpec::default();
    let numeric = finite_diff_grad(
        |x| {
            Trainer::new(&problem, unflatten(&set, x), &options)
                .unwrap()
                .loss_and_grad()
                .unwrap()
                .0
        },
        &flatten(&set),
        spec,
    );
    let skip = clamp_boundary_coordinates(&set, 24, 16, spec.step);
    let report = compare_gradients(&flatten(&analytic), &numeric, &skip);
    assert!(report.checked > 0);
    assert!(report.max_relative_error <= 1e-4, "{:e} at {}", report.max_relative_error, report.worst);
}

#[test]
fn one_step_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = RunConfig {
        mode: Mode::SmoothPoh,
        ..common::desk_config(32, 24, 5.0, 1, 0, &out)
    };
    let outcome = train(&config).unwrap();
    for name in [
        artifacts::CONFIG,
        artifacts::GAUSSIANS,
        artifacts::FIELD,
        artifacts::METRICS,
        artifacts::TARGET,
    ]
    .into_iter()
    .map(String::from)
    .chain((0..2).map(artifacts::recon_plane))
    .chain([artifacts::poh("smooth"), artifacts::poh_recon_plane("smooth", 1)])
    {
        assert!(out.join(&name).is_file(), "missing {name}");
    }
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(out.join(artifacts::METRICS)).unwrap()).unwrap();
    assert_eq!(report, outcome.report);
    assert_eq!(report.gaussian_count, gaussians_for_ratio(1, 24, 32, 5.0));
    assert_eq!(report.trainable_scalars, 8 * report.gaussian_count);
    assert_eq!(report.poh.as_ref().unwrap().kind, "smooth");
    let saved = RunConfig::load(&out.join(artifacts::CONFIG)).unwrap();
    assert_eq!(saved, config);
}

#[test]
fn short_training_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        log_every: 10,
        ..common::desk_config(48, 32, 2.0, 60, 1, dir.path())
    };
    let report = train(&config).unwrap().report;
    let first = report.loss_history.first().unwrap();
    assert_eq!(first.step, 1);
    assert_eq!(report.loss_history.last().unwrap().step, 60);
    assert!(report.final_loss < 0.8 * first.loss, "{} -> {}", first.loss, report.final_loss);
}

#[test]
fn single_thread_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let config = RunConfig {
            threads: 1,
            ..common::desk_config(40, 24, 2.0, 15, 7, &out)
        };
        train(&config).unwrap();
        std::fs::read(out.join(artifacts::METRICS)).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn invalid_configs_are_rejected() {
    let cases = [
        "steps = 0\nwidth = 8\nheight = 8",
        "gaussian_count = 10\nparameter_ratio = 2.0\nwidth = 8\nheight = 8",
        "width = 8",
        "unknown_key = 1",
        "channels = 2\nwidth = 8\nheight = 8",
    ];
    for text in cases {
        let result = RunConfig::from_toml(text).and_then(|c| c.validate());
        assert!(matches!(result, Err(Error::Config(_))), "{text:?} gave {result:?}");
    }
    let missing = RunConfig {
        image_path: Some("/nonexistent/target.png".into()),
        ..RunConfig::default()
    };
    assert!(load_problem(&missing).is_err());
}
