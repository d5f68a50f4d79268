//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! ```text
//! cargo test --release --test acceptance            # all criteria
//! cargo test --release --test acceptance -- 1 4 9   # a subset
//! ```

mod common;

use std::f64::consts::TAU;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holosplat::convert::{convert_random_poh, dpac_encode_with, DpacMode, RandomPohConfig};
use holosplat::loss::{
    loss_mse, loss_mse_with_grad, loss_recon, loss_recon_with_grad, loss_ssim,
    loss_ssim_with_grad, LossGrad,
};
use holosplat::oracles::{
    brute_rasterize, compare_gradients, direct_dft_propagate, finite_diff_grad, loop_dpac,
    loop_mse, loop_recon, naive_ssim, random_field, random_gaussians, FiniteDiffSpec,
};
use holosplat::pipeline::{
    artifacts, fit, init_gaussians, load_problem, poh_metrics, train, FitOptions, Metrics,
    RunConfig,
};
use holosplat::propagation::{propagate, propagate_backward};
use holosplat::raster::rasterize_forward;
use holosplat::{PropagationSpec, Propagator, Reconstruction, TargetStack};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rasterizer_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = rng.gen_range(1..=16);
        let channels = if k % 2 == 0 { 1 } else { 3 };
        let (w, h) = (rng.gen_range(8..=64), rng.gen_range(8..=64));
        let set = random_gaussians(n, channels, w, h, 100 + k);
        let err = rasterize_forward(&set, w, h)
            .expect("valid fixture")
            .max_abs_diff(&brute_rasterize(&set, w, h));
        worst = worst.max(err);
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs <= 10.0,
        format!("20 fixtures, max abs error {worst:.2e} (≤ 1e-6), {secs:.2} s (≤ 10 s)"),
    )
}

fn rasterizer_gradients() -> Outcome {
    let started = Instant::now();
    let mut worst = [0.0f64; 6];
    let mut checked = [0usize; 6];
    let mut names = [""; 6];
    for (seed, channels) in [(11, 3), (12, 1), (13, 3), (14, 1)] {
        let set = random_gaussians(10, channels, 36, 28, seed);
        for (k, (name, r)) in common::raster_gradient_check(&set, 36, 28, seed + 50).into_iter().enumerate() {
            names[k] = name;
            worst[k] = worst[k].max(r.max_relative_error);
            checked[k] += r.checked;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let max = worst.iter().copied().fold(0.0, f64::max);
    let groups: Vec<String> = names
        .iter()
        .zip(&worst)
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect();
    outcome(
        max <= 1e-4 && checked.iter().all(|&c| c > 0) && secs <= 60.0,
        format!("max relative error {max:.2e} (≤ 1e-4) [{}], {secs:.1} s (≤ 60 s)", groups.join(", ")),
    )
}

const DISTANCES: [f64; 5] = [0.0, 1e-3, 3e-3, 6.5e-3, 10e-3];

fn propagation_oracle() -> Outcome {
    let spec = PropagationSpec::default();
    let field = random_field(3, 64, 64, 21);
    let prop = Propagator::new(&spec, 64, 64, &DISTANCES).expect("valid propagator");
    let spectrum = prop.spectrum(&field).expect("matching field");
    let mut worst = 0.0f64;
    for (l, &d) in DISTANCES.iter().enumerate() {
        let slow = direct_dft_propagate(&field, &spec, d).expect("oracle input");
        worst = worst.max(prop.propagate_spectrum(&spectrum, l).max_abs_diff(&slow));
    }
    outcome(
        worst <= 1e-5,
        format!("64x64 RGB, 5 distances in [0, 10 mm], max abs error {worst:.2e} (≤ 1e-5)"),
    )
}

fn propagation_unitarity() -> Outcome {
    let unpadded = PropagationSpec {
        pad_factor: 1,
        ..PropagationSpec::default()
    };
    let mut energy = 0.0f64;
    for (k, &d) in DISTANCES.iter().enumerate() {
        let u = random_field(3, 48, 64, 30 + k as u64);
        let out = propagate(&u, &unpadded, d).expect("valid input");
        let expected = common::in_band_energy(&u, &unpadded, d);
        energy = energy.max((out.energy() - expected).abs() / expected);
    }
    let spec = PropagationSpec::default();
    let mut adjoint = 0.0f64;
    for pair in 0..10u64 {
        let d = DISTANCES[pair as usize % 5] + 1e-3;
        let u = random_field(3, 32, 40, 40 + 2 * pair);
        let v = random_field(3, 32, 40, 41 + 2 * pair);
        let lhs = propagate(&u, &spec, d).expect("valid input").inner(&v);
        let rhs = u.inner(&propagate_backward(&v, &spec, d).expect("valid input"));
        adjoint = adjoint.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()));
    }
    outcome(
        energy <= 1e-6 && adjoint <= 1e-6,
        format!("in-band energy {energy:.2e}, adjoint identity on 10 pairs {adjoint:.2e} (both relative, ≤ 1e-6)"),
    )
}

type Loss = fn(&Reconstruction, &TargetStack) -> holosplat::Result<f64>;
type LossWithGrad = fn(&Reconstruction, &TargetStack) -> holosplat::Result<LossGrad>;

fn loss_fixture(h: usize, w: usize, seed: u64) -> (Reconstruction, TargetStack) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intensity: Vec<f64> = (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    let depth: Vec<f64> = (0..h * w).map(|p| (p % w) as f64 / (w - 1) as f64).collect();
    let target = TargetStack::from_depth(3, h, w, intensity, depth, 2, true).expect("valid target");
    let mut recon = Reconstruction::from_target(&target);
    for v in &mut recon.data {
        *v = (*v + rng.gen_range(-0.3..0.3)).max(0.0);
    }
    (recon, target)
}

fn loss_suite() -> Outcome {
    let losses: [(&str, Loss, LossWithGrad); 3] = [
        ("mse", loss_mse, loss_mse_with_grad),
        ("recon", loss_recon, loss_recon_with_grad),
        ("ssim", loss_ssim, loss_ssim_with_grad),
    ];
    let (recon, target) = loss_fixture(18, 23, 51);
    let exact = Reconstruction::from_target(&target);
    let zero = losses
        .iter()
        .map(|(_, f, _)| f(&exact, &target).expect("matching shapes").abs())
        .fold(0.0, f64::max);

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mse = rel(loss_mse(&recon, &target).expect("shapes"), loop_mse(&recon, &target));
    let rec = rel(loss_recon(&recon, &target).expect("shapes"), loop_recon(&recon, &target));
    let (l_count, c_count, h, w) = recon.dims();
    let hw = h * w;
    let mut total = 0.0;
    for l in 0..l_count {
        for c in 0..c_count {
            let a = &recon.plane(l)[c * hw..(c + 1) * hw];
            let b = &target.intensity()[c * hw..(c + 1) * hw];
            total += naive_ssim(a, b, w, h).expect("window fits");
        }
    }
    let ssim = rel(
        loss_ssim(&recon, &target).expect("shapes"),
        1.0 - total / (l_count * c_count) as f64,
    );

    // Richardson-extrapolated central differences on a small fixture.
    let (recon, target) = loss_fixture(12, 13, 52);
    let mut grad = 0.0f64;
    for (_, value, with_grad) in losses {
        let analytic = with_grad(&recon, &target).expect("shapes").grad.data;
        let mut f = |x: &[f64]| {
            let (l, c, h, w) = recon.dims();
            value(&Reconstruction::from_vec(l, c, h, w, x.to_vec()).expect("shape"), &target).expect("shapes")
        };
        let coarse = finite_diff_grad(&mut f, &recon.data, FiniteDiffSpec { step: 2e-3 });
        let fine = finite_diff_grad(&mut f, &recon.data, FiniteDiffSpec { step: 1e-3 });
        let numeric: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
        let r = compare_gradients(&analytic, &numeric, &vec![false; numeric.len()]);
        grad = grad.max(r.max_relative_error);
    }
    outcome(
        zero == 0.0 && mse <= 1e-10 && rec <= 1e-10 && ssim <= 1e-6 && grad <= 1e-5,
        format!(
            "identical inputs {zero:.1e}; oracle mse {mse:.1e}, recon {rec:.1e} (≤ 1e-10), ssim {ssim:.1e} (≤ 1e-6); gradients {grad:.1e} (≤ 1e-5)"
        ),
    )
}

fn desk_run(dir: &Path, ratio: f64) -> Metrics {
    let config = common::desk_config(256, 160, ratio, 2000, 0, &dir.join(format!("ratio{ratio}")));
    train(&config).expect("desk run").report.metrics
}

fn desk_regression(ratio2: &Metrics, secs: f64) -> Outcome {
    outcome(
        ratio2.mean_psnr >= 24.0 && ratio2.mean_ssim >= 0.80,
        format!(
            "256x160, L=2, ratio 2:1, 2000 steps: PSNR {:.2} dB (≥ 24), SSIM {:.4} (≥ 0.80), {secs:.0} s",
            ratio2.mean_psnr, ratio2.mean_ssim
        ),
    )
}

fn ratio_monotonicity(dir: &Path, ratio2: &Metrics) -> Outcome {
    let psnr = [ratio2.mean_psnr, desk_run(dir, 5.0).mean_psnr, desk_run(dir, 10.0).mean_psnr];
    outcome(
        psnr[0] >= psnr[1] && psnr[1] >= psnr[2],
        format!("PSNR at 2:1, 5:1, 10:1 = {:.2} / {:.2} / {:.2} dB", psnr[0], psnr[1], psnr[2]),
    )
}

fn guidance_gain(dir: &Path) -> Outcome {
    let config = common::desk_config(128, 80, 2.0, 2000, 0, dir);
    let problem = load_problem(&config).expect("desk problem");
    let (w, h, c) = (problem.width(), problem.height(), problem.channels());
    let init = init_gaussians(config.gaussian_count_for(w, h), c, w, h, config.seed);
    let options = FitOptions {
        steps: config.steps,
        ..FitOptions::default()
    };
    let guide = fit(&problem, init, &options).expect("guide fit");
    let guided = RandomPohConfig {
        steps: 600,
        seed: config.seed,
        ..RandomPohConfig::default()
    };
    let psnr = |rc: &RandomPohConfig| {
        let r = convert_random_poh(&guide.set, &problem.planes, &problem.target, &problem.spec, rc)
            .expect("conversion");
        poh_metrics(&problem, &r.hologram, r.illumination).expect("metrics").mean_psnr
    };
    let with = psnr(&guided);
    let without = psnr(&guided.unguided());
    outcome(
        with - without >= 2.0,
        format!(
            "128x80, 600 steps: guided {with:.2} dB, unguided {without:.2} dB, gain {:+.2} dB (≥ +2)",
            with - without
        ),
    )
}

fn dpac_structure() -> Outcome {
    let mut exact = true;
    let mut unit = 0.0f64;
    let mut in_range = true;
    for (seed, (c, h, w)) in [(1, 16, 16), (3, 24, 40), (3, 7, 9)].into_iter().enumerate() {
        let field = random_field(c, h, w, 60 + seed as u64);
        for mode in [DpacMode::Verbatim, DpacMode::Classical] {
            let holo = dpac_encode_with(&field, mode).expect("finite field");
            exact &= holo.phase == loop_dpac(&field, mode);
            in_range &= holo.phase.iter().all(|p| (0.0..TAU).contains(p));
            unit = holo.field().iter().map(|z| (z.norm() - 1.0).abs()).fold(unit, f64::max);
        }
    }
    outcome(
        exact && in_range && unit <= 1e-15,
        format!("bit-identical to the loop oracle: {exact}; max ||H| - 1| = {unit:.1e}"),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let run = |name: &str, threads: usize| {
        let out = dir.join(name);
        let config = RunConfig {
            threads,
            ..common::desk_config(96, 64, 2.0, 200, 3, &out)
        };
        let metrics = train(&config).expect("determinism run").report.metrics;
        let bytes = std::fs::read(out.join(artifacts::METRICS)).expect("metrics written");
        (bytes, metrics.mean_psnr)
    };
    let (a, psnr1) = run("single_a", 1);
    let (b, _) = run("single_b", 1);
    let (_, psnr4) = run("four", 4);
    let diff = (psnr1 - psnr4).abs();
    outcome(
        a == b && diff <= 1e-4,
        format!(
            "1-thread metrics.json identical: {}; |PSNR(1) - PSNR(4)| = {diff:.1e} dB (≤ 1e-4)",
            a == b
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let dir = tempfile::tempdir().expect("temporary directory");
    let root = dir.path();

    let mut failed = 0;
    let mut report = |k: usize, name: &str, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{status} criterion {k:>2} {name}: {}", o.detail);
    };

    if wanted(1) {
        report(1, "rasterizer oracle", rasterizer_oracle());
    }
    if wanted(2) {
        report(2, "rasterizer gradients", rasterizer_gradients());
    }
    if wanted(3) {
        report(3, "propagation oracle", propagation_oracle());
    }
    if wanted(4) {
        report(4, "propagation unitarity and adjoint", propagation_unitarity());
    }
    if wanted(5) {
        report(5, "losses", loss_suite());
    }
    if wanted(6) || wanted(7) {
        let started = Instant::now();
        let ratio2 = desk_run(root, 2.0);
        let secs = started.elapsed().as_secs_f64();
        if wanted(6) {
            report(6, "desk regression", desk_regression(&ratio2, secs));
        }
        if wanted(7) {
            report(7, "ratio monotonicity", ratio_monotonicity(root, &ratio2));
        }
    }
    if wanted(8) {
        report(8, "random POH guidance", guidance_gain(&root.join("guidance")));
    }
    if wanted(9) {
        report(9, "DPAC structure", dpac_structure());
    }
    if wanted(10) {
        report(10, "determinism", determinism(root));
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
