//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all nine; `cargo test --test acceptance -- 4 7`
//! runs a subset. Runtime budgets count toward the verdict.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aoreg::aoloop::{Disturbance, PhotonNoise, TelemetryCube};
use aoreg::closedloop::{
    correlation_at, matrix_identity_check, simulate_coupled_pair, split_telemetry,
};
use aoreg::config::LoopConfig;
use aoreg::geometry::{make_annulus_masks, Mask, MisRegistration, SubapertureGrid};
use aoreg::modal::ModalCorrelator;
use aoreg::optics::{wavefront_slopes, PlateScale, SlopeModel};
use aoreg::rng::{fill_normal, RngStream};
use aoreg_harness::experiments::batch_size::{std_exponent, BatchSizeSpec};
use aoreg_harness::experiments::gpao::{converged_error, GpaoSpec};
use aoreg_harness::experiments::modal_noise::{
    add_slope_noise, synthetic_modal_im, ModalNoiseSpec,
};
use aoreg_harness::experiments::sensitivity::{response_fit, SensitivitySpec};
use aoreg_harness::experiments::wind_bias::WindBiasSpec;
use aoreg_harness::SimContext;
use nalgebra::DMatrix;
use rand::Rng;

const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn(&SimContext) -> Outcome;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: Check,
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria = [
        Criterion {
            id: 1,
            name: "modal headline case",
            budget: Duration::from_secs(10),
            check: modal_headline,
        },
        Criterion {
            id: 2,
            name: "modal robustness",
            budget: minutes(10),
            check: modal_robustness,
        },
        Criterion {
            id: 3,
            name: "FFT/oracle equivalence",
            budget: minutes(1),
            check: fft_oracle,
        },
        Criterion {
            id: 4,
            name: "closed-loop sensitivity",
            budget: minutes(20),
            check: sensitivity,
        },
        Criterion {
            id: 5,
            name: "batch-size statistics",
            budget: minutes(15),
            check: batch_size,
        },
        Criterion {
            id: 6,
            name: "wind bias",
            budget: minutes(30),
            check: wind_bias,
        },
        Criterion {
            id: 7,
            name: "GPAO convergence",
            budget: minutes(20),
            check: gpao,
        },
        Criterion {
            id: 8,
            name: "transfer-function self-tests",
            budget: minutes(10),
            check: transfer_self_tests,
        },
        Criterion {
            id: 9,
            name: "property suite",
            budget: minutes(5),
            check: properties,
        },
    ];
    let setup = Instant::now();
    let ctx = match SimContext::shared() {
        Ok(c) => c,
        Err(e) => {
            println!("setup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!(
        "setup (KL basis, reference IM): {:.1} s",
        setup.elapsed().as_secs_f64()
    );
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.check)(ctx)))
            .unwrap_or_else(|p| Outcome::new(false, format!("panicked: {}", panic_text(&p))));
        let took = start.elapsed();
        let in_time = took <= c.budget;
        let pass = outcome.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {} ({}): {} | {} | {:.1} s of {} s{}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { " (over budget)" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn modal_headline(ctx: &SimContext) -> Outcome {
    let modes: Vec<usize> = (4..=50).collect();
    let reference = synthetic_modal_im(ctx, &MisRegistration::default(), &modes).unwrap();
    let measured =
        synthetic_modal_im(ctx, &MisRegistration::from_shift(13.35, 8.65), &modes).unwrap();
    let noisy = add_slope_noise(
        &measured,
        PlateScale::default().px_to_rad(0.25),
        RngStream::new(SEED, 1),
    );
    let corr = ModalCorrelator::from_modal_im(&reference, &ctx.grid.mask_valid, &ctx.grid.mask_wfs)
        .unwrap();
    let est = corr.estimate(&noisy, 8).unwrap();
    let pass = (est.shift[0] - 13.375).abs() <= 0.125 + 1e-9
        && (est.shift[1] - 8.625).abs() <= 0.125 + 1e-9
        && (est.amplitude_um - 4.0).abs() <= 0.02 * 4.0;
    Outcome::new(
        pass,
        format!(
            "δ = ({}, {}) Δ, amplitude {:.3} µm",
            est.shift[0], est.shift[1], est.amplitude_um
        ),
    )
}

fn modal_robustness(ctx: &SimContext) -> Outcome {
    let spec = ModalNoiseSpec {
        sigmas_px: vec![0.1, 0.25, 0.5],
        max_modes: vec![50, 100],
        ..ModalNoiseSpec::preset(SEED, false)
    };
    let table = spec.run(ctx).unwrap();
    let col = |n: &str| table.column(n).unwrap();
    let (bx, by, sx, sy) = (
        col("bias_x_pct"),
        col("bias_y_pct"),
        col("std_x_pct"),
        col("std_y_pct"),
    );
    let worst_bias = bx.iter().chain(&by).fold(0.0f64, |m, v| m.max(v.abs()));
    let worst_std = sx.iter().chain(&sy).fold(0.0f64, |m, v| m.max(*v));
    Outcome::new(
        worst_bias <= 12.5 && worst_std <= 12.5,
        format!(
            "{} runs per cell, worst |bias| {worst_bias:.2} %Δ, worst std {worst_std:.2} %Δ",
            spec.runs
        ),
    )
}

/// `α` at lag `(dx, dy)` by direct summation.
fn brute_alpha(
    measured: &[Vec<f64>],
    reference: &[Vec<f64>],
    d: usize,
    valid: &Mask,
    wfs: &Mask,
    dx: i64,
    dy: i64,
) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for (m, r) in measured.iter().zip(reference) {
        for y in 0..d as i64 {
            for x in 0..d as i64 {
                let (sx, sy) = (x - dx, y - dy);
                if !valid.get(y as usize, x as usize) || !wfs.get_signed(sy as isize, sx as isize) {
                    continue;
                }
                let rv = r[(sy * d as i64 + sx) as usize];
                num += m[(y * d as i64 + x) as usize] * rv;
                den += rv * rv;
            }
        }
    }
    (num, den)
}

fn fft_oracle(_: &SimContext) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut mismatched_validity = 0usize;
    for (case, &(d, n_modes, obs)) in [
        (5, 1, 0.0),
        (9, 3, 0.2),
        (12, 4, 0.3),
        (16, 5, 0.14),
        (16, 5, 0.0),
    ]
    .iter()
    .enumerate()
    {
        let (wfs, valid) = make_annulus_masks(d, obs).unwrap();
        let mut rng = RngStream::new(SEED, 300 + case as u64).rng();
        let mut planes = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let mut p = vec![0.0; d * d];
                    fill_normal(&mut rng, &mut p);
                    p
                })
                .collect()
        };
        let reference = planes(2 * n_modes);
        let measured = planes(2 * n_modes);
        let map = ModalCorrelator::new(&reference, d, &valid, &wfs)
            .unwrap()
            .correlate(&measured)
            .unwrap();
        let r = d as i64 - 1;
        for dy in -r..=r {
            for dx in -r..=r {
                let (num, den) = brute_alpha(&measured, &reference, d, &valid, &wfs, dx, dy);
                match map.at_lag(dx, dy) {
                    Some(a) if den > 0.0 => {
                        let b = num / den;
                        worst = worst.max((a - b).abs() / b.abs().max(1e-300));
                        checked += 1;
                    }
                    None if den == 0.0 => {}
                    _ => mismatched_validity += 1,
                }
            }
        }
    }
    Outcome::new(
        worst <= 1e-9 && mismatched_validity == 0,
        format!("{checked} lags, worst relative error {worst:.1e}, validity mismatches {mismatched_validity}"),
    )
}

fn sensitivity(ctx: &SimContext) -> Outcome {
    let spec = SensitivitySpec {
        amplitudes_pct: (0..=5).map(|i| 5.0 * i as f64).collect(),
        n_mods: vec![250, 500, 800],
        repetitions: 20,
        ..SensitivitySpec::preset(SEED, false)
    };
    let table = spec.run(ctx).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n_mod in [250, 500] {
        let fit = response_fit(&table, n_mod, 15.0)
            .unwrap()
            .expect("enough amplitudes");
        pass &= (fit.slope - 0.70).abs() <= 0.10;
        parts.push(format!("slope(n_mod {n_mod}) {:.3}", fit.slope));
    }
    for n_mod in [250, 500, 800] {
        let fit = response_fit(&table, n_mod, 25.0)
            .unwrap()
            .expect("enough amplitudes");
        pass &= fit.r2 > 0.98;
        parts.push(format!("R²(n_mod {n_mod}, ≤25%) {:.4}", fit.r2));
    }
    parts.push(format!(
        "{} angles × {} reps",
        spec.angles_deg.len(),
        spec.repetitions
    ));
    Outcome::new(pass, parts.join(", "))
}

fn batch_size(ctx: &SimContext) -> Outcome {
    let table = BatchSizeSpec::preset(SEED, false).run(ctx).unwrap();
    let row = table.filter("n_frames", 500.0).unwrap();
    let mean = row.column("mean_x_pct").unwrap()[0];
    let std = row.column("std_x_pct").unwrap()[0];
    let exponent = std_exponent(&table).unwrap().unwrap_or(f64::NAN);
    let pass = (6.4..=7.4).contains(&mean)
        && (0.12..=0.5).contains(&std)
        && (exponent + 0.5).abs() <= 0.15;
    Outcome::new(
        pass,
        format!("500 frames: δ̂x = {mean:.3} ± {std:.3} %Δ, std exponent {exponent:.3}"),
    )
}

fn wind_bias(ctx: &SimContext) -> Outcome {
    let table = WindBiasSpec::preset(SEED, false).run(ctx).unwrap();
    let par = table.column("bias_parallel_pct").unwrap();
    let perp = table.column("bias_perp_pct").unwrap();
    let worst_par = par.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst_perp = perp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Outcome::new(
        worst_par < 10.0 && worst_perp < 3.0,
        format!(
            "{} runs, worst |bias∥| {worst_par:.2} %Δ, worst |bias⊥| {worst_perp:.2} %Δ",
            par.len()
        ),
    )
}

fn gpao(ctx: &SimContext) -> Outcome {
    let spec = GpaoSpec::preset(SEED, false);
    let table = spec.run(ctx).unwrap();
    let err = converged_error(&table, 100.0).unwrap();
    let first = table.column("abs_shift_pct").unwrap();
    Outcome::new(
        err <= 15.0,
        format!(
            "|δ| from {:.1} to {err:.2} %Δ (mean of last updates) after {} updates",
            first[0], spec.updates
        ),
    )
}

fn transfer_self_tests(_: &SimContext) -> Outcome {
    let cfg = LoopConfig::default();
    let mut rng = RngStream::new(SEED, 800).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let f = rng.gen_range(1e-3..500.0);
        worst = worst.max(matrix_identity_check(theta, f, &cfg).unwrap().max());
    }
    let r =
        simulate_coupled_pair(&cfg, 30f64.to_radians(), 256, 200, RngStream::new(SEED, 0)).unwrap();
    let z = r.max_normalized_deviation();
    Outcome::new(
        worst < 1e-10 && z <= 3.0,
        format!(
            "identity residual {worst:.1e} on 1000 samples, finite-θ max |z| {z:.2} over {} bins",
            r.freqs_hz.len()
        ),
    )
}

fn properties(ctx: &SimContext) -> Outcome {
    let checks: [(&str, fn(&SimContext) -> bool); 6] = [
        ("η bounds/antisymmetry", eta_symmetries),
        ("zero-shift null", zero_shift_null),
        ("SH linearity", sh_linearity),
        ("mask inclusion", mask_inclusion),
        ("KL orthonormality", kl_orthonormal),
        ("deterministic replay", deterministic_replay),
    ];
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, f)| !f(ctx))
        .map(|(n, _)| *n)
        .collect();
    let detail = if failed.is_empty() {
        "all 6 checks hold".to_string()
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Outcome::new(failed.is_empty(), detail)
}

fn noise_batch(
    ctx: &SimContext,
    shift: [f64; 2],
    n_frames: usize,
    stream: RngStream,
) -> TelemetryCube {
    ctx.batch(
        250,
        MisRegistration::from_shift(shift[0], shift[1]),
        Disturbance::None,
        PhotonNoise::reference(100.0),
        n_frames,
        stream,
    )
    .unwrap()
}

fn eta_symmetries(ctx: &SimContext) -> bool {
    let cube = noise_batch(ctx, [0.15, -0.05], 300, RngStream::new(SEED, 900));
    let ft = split_telemetry(&cube).unwrap();
    let nt = ft.n_frames;
    let mut ok = true;
    for ky in -20..=20i64 {
        for kx in -20..=20i64 {
            for j in [1, 7, 60, 149] {
                let Some(v) = correlation_at(&ft, [kx, ky], j) else {
                    continue;
                };
                ok &= v.abs() <= 1.0 + 1e-12;
                ok &= correlation_at(&ft, [-kx, -ky], j).is_some_and(|w| (v + w).abs() < 1e-9);
                ok &= correlation_at(&ft, [kx, ky], nt - j).is_some_and(|w| (v + w).abs() < 1e-9);
            }
        }
    }
    ok
}

fn zero_shift_null(ctx: &SimContext) -> bool {
    let n = 20;
    let est: Vec<[f64; 2]> = (0..n)
        .map(|rep| {
            ctx.estimate(
                &noise_batch(ctx, [0.0, 0.0], 500, RngStream::new(SEED, 910 + rep)),
                250,
            )
            .unwrap()
            .shift
        })
        .collect();
    (0..2).all(|axis| {
        let v: Vec<f64> = est.iter().map(|e| e[axis]).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        mean.abs() < 3.0 * std / (n as f64).sqrt()
    })
}

fn sh_linearity(_: &SimContext) -> bool {
    let grid = SubapertureGrid::annular(10, 0.2, 0.2).unwrap();
    let mut rng = RngStream::new(SEED, 920).rng();
    (0..20).all(|_| {
        let (a, b): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let (fx, fy, ph): (f64, f64, f64) = (
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.0..6.0),
        );
        let p1 = |p: [f64; 2]| 1e-7 * (fx * p[0] + fy * p[1] + ph).sin();
        let p2 = |p: [f64; 2]| 1e-7 * (p[0] * p[1] * 0.01 + p[1] * p[1] * 0.02);
        [
            SlopeModel::EdgeDifference { samples: 8 },
            SlopeModel::AveragedGradient { pixels: 8 },
        ]
        .into_iter()
        .all(|model| {
            let s1 = wavefront_slopes(model, &grid, p1).unwrap();
            let s2 = wavefront_slopes(model, &grid, p2).unwrap();
            let s = wavefront_slopes(model, &grid, |p| a * p1(p) + b * p2(p)).unwrap();
            let big = s1.iter().chain(&s2).fold(0.0f64, |m, v| m.max(v.abs()));
            s.iter()
                .zip(s1.iter().zip(&s2))
                .all(|(v, (x, y))| (v - a * x - b * y).abs() <= 1e-11 * big)
        })
    })
}

fn mask_inclusion(_: &SimContext) -> bool {
    (2..48).all(|d| {
        (0..12).all(|i| match make_annulus_masks(d, 0.05 * i as f64) {
            Ok((wfs, valid)) => valid.is_subset_of(&wfs) && wfs.size() == d,
            Err(_) => true,
        })
    })
}

fn kl_orthonormal(ctx: &SimContext) -> bool {
    let k = ctx.kl.matrix();
    let g = k.transpose() * k;
    (g - DMatrix::<f64>::identity(k.ncols(), k.ncols())).amax() < 1e-8
}

fn deterministic_replay(ctx: &SimContext) -> bool {
    let a = noise_batch(ctx, [0.1, 0.05], 200, RngStream::new(SEED, 930));
    let b = noise_batch(ctx, [0.1, 0.05], 200, RngStream::new(SEED, 930));
    let spec = ModalNoiseSpec {
        sigmas_px: vec![0.25],
        max_modes: vec![20],
        runs: 10,
        m_up: 8,
        ..ModalNoiseSpec::preset(SEED, false)
    };
    let t1 = spec.run(ctx).unwrap().to_csv_bytes().unwrap();
    let t2 = spec.run(ctx).unwrap().to_csv_bytes().unwrap();
    a.frames == b.frames && t1 == t2
}
