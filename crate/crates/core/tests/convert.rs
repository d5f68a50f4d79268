use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holosplat::convert::{
    canonicalize_phase, convert_random_poh, dpac_encode_with, optimize_random_poh, phase_distance,
    random_poh_objective, DpacMode, PhaseOnlyHologram, PohKind, RandomPohConfig,
};
use holosplat::oracles::{
    compare_gradients, finite_diff_grad, loop_dpac, random_field, random_gaussians, FiniteDiffSpec,
};
use holosplat::{DepthPlaneSet, GaussianSet, PropagationSpec, TargetStack};

struct Scene {
    planes: DepthPlaneSet,
    target: TargetStack,
    spec: PropagationSpec,
    guide: GaussianSet,
}

fn scene(w: usize, h: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intensity: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    let depth: Vec<f64> = (0..h * w).map(|p| (p / w) as f64 / (h - 1) as f64).collect();
    Scene {
        planes: DepthPlaneSet::new(2, 3e-3, 2e-3).unwrap(),
        target: TargetStack::from_depth(1, h, w, intensity, depth, 2, true).unwrap(),
        spec: PropagationSpec::mono(),
        guide: random_gaussians(12, 1, w, h, seed + 1),
    }
}

#[test]
fn dpac_matches_the_loop_oracle_exactly() {
    for (seed, (c, h, w)) in [(1, 6, 9), (3, 16, 16), (1, 31, 20)].into_iter().enumerate() {
        let field = random_field(c, h, w, seed as u64);
        for mode in [DpacMode::Verbatim, DpacMode::Classical] {
            let holo = dpac_encode_with(&field, mode).unwrap();
            assert_eq!(holo.phase, loop_dpac(&field, mode), "{mode:?} {c}x{h}x{w}");
            assert_eq!(holo.kind, PohKind::Smooth);
            assert!(holo.field().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
            assert!(holo.phase.iter().all(|p| (0.0..TAU).contains(p)));
        }
    }
}

#[test]
fn dpac_rejects_non_finite_fields() {
    let mut field = random_field(1, 4, 4, 0);
    field.imag[3] = f64::NAN;
    assert!(dpac_encode_with(&field, DpacMode::Verbatim).is_err());
}

#[test]
fn phases_are_canonical() {
    assert_eq!(canonicalize_phase(0.0), 0.0);
    assert_eq!(canonicalize_phase(-TAU), 0.0);
    assert!((canonicalize_phase(-PI) - PI).abs() < 1e-15);
    assert!((canonicalize_phase(3.0 * TAU + 1.0) - 1.0).abs() < 1e-12);
    assert!((phase_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
    let holo = PhaseOnlyHologram::new(1, 1, 3, vec![-0.5, 7.0, TAU], PohKind::Random).unwrap();
    assert!(holo.phase.iter().all(|p| (0.0..TAU).contains(p)));
    assert!(PhaseOnlyHologram::new(1, 1, 2, vec![0.0, f64::INFINITY], PohKind::Random).is_err());
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let s = scene(14, 12, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phase: Vec<f64> = (0..14 * 12).map(|_| rng.gen_range(-PI..PI)).collect();
    let config = RandomPohConfig::default();
    for guide in [Some(&s.guide), None] {
        let objective =
            |p: &[f64]| random_poh_objective(guide, &s.planes, &s.target, &s.spec, &config, p).unwrap();
        let (_, analytic) = objective(&phase);
        let numeric = finite_diff_grad(|p| objective(p).0, &phase, FiniteDiffSpec::default());
        let report = compare_gradients(&analytic, &numeric, &vec![false; phase.len()]);
        assert!(
            report.max_relative_error <= 1e-4,
            "guided = {}: {:e} at {}",
            guide.is_some(),
            report.max_relative_error,
            report.worst
        );
    }
}

#[test]
fn unguided_conversion_equals_plain_phase_optimization() {
    let s = scene(24, 16, 2);
    let config = RandomPohConfig {
        steps: 30,
        illumination: Some(0.8),
        seed: 4,
        ..RandomPohConfig::default()
    }
    .unguided();
    let a = convert_random_poh(&s.guide, &s.planes, &s.target, &s.spec, &config).unwrap();
    let b = optimize_random_poh(&s.planes, &s.target, &s.spec, &config).unwrap();
    assert_eq!(a.hologram, b.hologram);
    // The frozen guide adds its own reconstruction loss as a constant.
    let offset = a.losses[0] - b.losses[0];
    assert!(offset > 0.0);
    for (x, y) in a.losses.iter().zip(&b.losses) {
        assert!((x - y - offset).abs() < 1e-12);
    }
    assert_eq!(a.illumination, 0.8);
}

#[test]
fn illumination_defaults_to_the_guide_rms() {
    let s = scene(24, 16, 3);
    let config = RandomPohConfig {
        steps: 2,
        ..RandomPohConfig::default()
    };
    let guided = convert_random_poh(&s.guide, &s.planes, &s.target, &s.spec, &config).unwrap();
    let field = holosplat::raster::rasterize_forward(&s.guide, 24, 16).unwrap();
    let rms = (field.energy() / (24 * 16) as f64).sqrt();
    assert!((guided.illumination - rms).abs() < 1e-12);
    let plain = optimize_random_poh(&s.planes, &s.target, &s.spec, &config).unwrap();
    assert_eq!(plain.illumination, 1.0);
}

#[test]
fn guided_objective_decreases() {
    let s = scene(32, 24, 6);
    let config = RandomPohConfig {
        steps: 50,
        ..RandomPohConfig::default()
    };
    let result = convert_random_poh(&s.guide, &s.planes, &s.target, &s.spec, &config).unwrap();
    assert_eq!(result.losses.len(), 50);
    assert!(result.losses.iter().all(|l| l.is_finite()));
    assert!(result.losses[49] < 0.9 * result.losses[0], "{:?}", result.losses);
    assert_eq!(result.hologram.kind, PohKind::Random);
}

#[test]
fn invalid_conversion_settings_are_rejected() {
    let s = scene(16, 12, 7);
    for bad in [
        RandomPohConfig { learning_rate: 0.0, ..RandomPohConfig::default() },
        RandomPohConfig { lambda_comp: -1.0, ..RandomPohConfig::default() },
        RandomPohConfig { illumination: Some(f64::NAN), ..RandomPohConfig::default() },
    ] {
        assert!(optimize_random_poh(&s.planes, &s.target, &s.spec, &bad).is_err());
    }
    let rgb = random_gaussians(3, 3, 16, 12, 0);
    assert!(convert_random_poh(&rgb, &s.planes, &s.target, &s.spec, &RandomPohConfig::default()).is_err());
}
