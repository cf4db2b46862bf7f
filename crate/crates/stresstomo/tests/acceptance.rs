//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so each check reports PASS or FAIL with its
//! measured numbers instead of stopping at the first assertion. The exit code
//! is zero unless `STRESSTOMO_ACCEPTANCE_STRICT` is set and a check failed.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::hint::black_box;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use stresstomo::RayonExecutor;
use stresstomo_core::adjoint::{
    finite_diff_check, Batch, NetParam, Parameterization, Problem, VoxelParam,
};
use stresstomo_core::estimation::{
    ambiguity_classes, estimate_2d, estimate_sixstep, CharacteristicParams,
};
use stresstomo_core::exec::Sequential;
use stresstomo_core::polarization::{
    jones_quarter_wave, jones_retarder, jones_rotator, jones_to_mueller, JonesMat, MuellerMat, C64,
};
use stresstomo_core::renderer::{
    accumulate_elements, accumulate_fast, accumulate_matrices, accumulate_naive, ray_equiv,
    rays_for_pose, render_capture, render_intensity, segment_params, sixstep_configs,
    sixteen_configs, table_2d_configs, CaptureSpec, EquivJones, ForwardModel, MarchSettings,
    Optics, PolariscopeConfig, RotationPose, SegmentParams,
};
use stresstomo_core::rng::SplitMix64;
use stresstomo_core::stress::{
    disk_stress, Disk, FieldKind, Grid, NetArch, ProjectedStress, StressField, StressTensor,
};
use stresstomo_core::tomo::study::{angle_range_study, pose_grid, wrap_sweep_study, StudySetup};
use stresstomo_core::tomo::{
    evaluate_field_mse, reconstruct, NoClock, ParamSpec, ReconConfig, ReconMode,
};
use stresstomo_core::{Mat3, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let checks: [(&str, Check); 11] = [
        (
            "fast accumulation matches the matrix product",
            c1_fast_equivalence,
        ),
        ("fast accumulation throughput", c2_throughput),
        ("closed-form exponential", c3_closed_form),
        ("polariscope tables", c4_tables),
        ("estimator round trips", c5_estimators),
        ("linear model truncation order", c6_truncation_order),
        ("adjoint gradients", c7_gradients),
        ("disk physics", c8_disk),
        ("desk-scale tomography", c9_tomography),
        ("study orderings", c10_studies),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {}: {} ({}; {:.1} s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {} failed",
        checks.len() - failed,
        failed
    );
    if failed > 0 && std::env::var_os("STRESSTOMO_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn random_segments(rng: &mut SplitMix64, n: usize) -> Vec<SegmentParams> {
    (0..n)
        .map(|_| SegmentParams {
            delta: rng.uniform(0.0, 2.0 * PI),
            theta: rng.uniform(0.0, PI),
            dt: 1.0,
        })
        .collect()
}

fn c1_fast_equivalence() -> Outcome {
    let mut rng = SplitMix64::new(1);
    let (mut worst, mut norm_dev) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = 1 + rng.below(512);
        let segs = random_segments(&mut rng, n);
        let q = accumulate_fast(&segs);
        worst = worst.max(q.to_jones().max_abs_diff(&accumulate_naive(&segs)));
        norm_dev = norm_dev.max((q.norm_sq() - 1.0).abs());
    }
    outcome(
        worst <= 1e-12 && norm_dev <= 1e-9,
        format!("max elementwise {worst:.2e}, max |norm-1| {norm_dev:.2e}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c2_throughput() -> Outcome {
    let mut rng = SplitMix64::new(2);
    let segs = random_segments(&mut rng, 1_000_000);
    let time = |f: &dyn Fn()| {
        median(
            (0..5)
                .map(|_| {
                    let t = Instant::now();
                    f();
                    t.elapsed().as_secs_f64()
                })
                .collect(),
        )
    };
    let naive = time(&|| {
        black_box(accumulate_naive(black_box(&segs)));
    });
    let fast = time(&|| {
        black_box(accumulate_fast(black_box(&segs)));
    });
    // the same recurrences on precomputed elements and matrices, without the
    // per-segment trigonometry both entry points share
    let elems: Vec<[f64; 3]> = segs.iter().map(SegmentParams::elements).collect();
    let mats: Vec<JonesMat> = segs
        .iter()
        .map(|s| jones_retarder(s.delta, s.theta))
        .collect();
    let k_naive = time(&|| {
        black_box(accumulate_matrices(black_box(&mats)));
    });
    let k_fast = time(&|| {
        black_box(accumulate_elements(black_box(&elems)));
    });
    let ratio = naive / fast;
    outcome(
        ratio >= 1.5,
        format!(
            "median of 5 over 1e6 segments: naive {:.1} ms, fast {:.1} ms, ratio {ratio:.2}; \
             kernels alone {:.1} ms vs {:.1} ms, ratio {:.2}",
            1e3 * naive,
            1e3 * fast,
            1e3 * k_naive,
            1e3 * k_fast,
            k_naive / k_fast
        ),
    )
}

/// Unscaled Taylor series of `exp(i κ G)`.
fn series_exp(p: &ProjectedStress, kappa: f64) -> JonesMat {
    let (s, t) = (kappa * p.sigma(), kappa * p.tau());
    let a = JonesMat([
        C64::new(0.0, s),
        C64::new(0.0, t),
        C64::new(0.0, t),
        C64::new(0.0, -s),
    ]);
    let mut term = JonesMat::IDENTITY;
    let mut sum = JonesMat::IDENTITY;
    for n in 1..100 {
        term = (term * a).scale(C64::new(1.0 / n as f64, 0.0));
        sum = JonesMat(std::array::from_fn(|i| sum.0[i] + term.0[i]));
    }
    sum
}

fn c3_closed_form() -> Outcome {
    let mut rng = SplitMix64::new(3);
    let (c, lambda) = (1.0, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = ProjectedStress::new(
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
        );
        let dt = rng.uniform(0.01, 0.3);
        let kappa = 2.0 * PI * c * dt / lambda;
        let seg = segment_params(&p, dt, c, lambda);
        let closed = jones_retarder(seg.delta, seg.theta);
        worst = worst.max(closed.max_abs_diff(&series_exp(&p, kappa)));
    }
    outcome(
        worst <= 1e-10,
        format!("max elementwise {worst:.2e} over 1000 stresses"),
    )
}

fn mueller(rows: [[f64; 4]; 4]) -> MuellerMat {
    MuellerMat(rows)
}

fn c4_tables() -> Outcome {
    let mut rng = SplitMix64::new(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (delta, theta) = (rng.uniform(0.0, 2.0 * PI), rng.uniform(0.0, PI));
        let (c, s) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        let (cd, sd) = (delta.cos(), delta.sin());
        let retarder = mueller([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c * c + s * s * cd, (1.0 - cd) * s * c, -s * sd],
            [0.0, (1.0 - cd) * s * c, s * s + c * c * cd, c * sd],
            [0.0, s * sd, -c * sd, cd],
        ]);
        let qwp = mueller([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c * c, c * s, -s],
            [0.0, c * s, s * s, c],
            [0.0, s, -c, 0.0],
        ]);
        let rot = mueller([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]);
        worst = worst
            .max(jones_to_mueller(&jones_retarder(delta, theta)).max_abs_diff(&retarder))
            .max(jones_to_mueller(&jones_quarter_wave(theta)).max_abs_diff(&qwp))
            .max(jones_to_mueller(&jones_rotator(theta)).max_abs_diff(&rot));

        let sh2 = (0.5 * delta).sin().powi(2);
        let s4 = (4.0 * theta).sin();
        let table = [
            sh2 * s * s,
            0.5 * sh2 * (1.0 - s4),
            sh2 * c * c,
            0.5 * sh2 * (1.0 + s4),
            0.5 * (1.0 + cd),
            0.5 * (1.0 - cd),
            0.5 * (1.0 - s * sd),
            0.5 * (1.0 + c * sd),
            0.5 * (1.0 + s * sd),
            0.5 * (1.0 - c * sd),
        ];
        let q = EquivJones::from_params(delta, theta, 0.0);
        for (cfg, want) in table_2d_configs(1.0).iter().zip(table) {
            worst = worst.max((render_intensity(&q, cfg) - want).abs());
        }
        let dark = PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, 0.0);
        let bright = PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, FRAC_PI_2);
        worst = worst
            .max((render_intensity(&q, &dark) - 0.5 * (1.0 - cd)).abs())
            .max((render_intensity(&q, &bright) - 0.5 * (1.0 + cd)).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("max deviation {worst:.2e} over 200 (δ, θ)"),
    )
}

fn angle_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn c5_estimators() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let (mut err_2d, mut err_six, mut err_class) = (0.0f64, 0.0f64, 0.0f64);
    let mut outside_class = 0;
    let table = table_2d_configs(1.0);
    let six = sixstep_configs(1.0);
    for _ in 0..1000 {
        let (d, t) = (rng.uniform(0.1, PI - 0.1), rng.uniform(0.0, FRAC_PI_2));
        let q = EquivJones::from_params(d, t, 0.0);
        let e = estimate_2d(&std::array::from_fn(|k| render_intensity(&q, &table[k])));
        err_2d = err_2d
            .max((e.delta - d).abs())
            .max(angle_gap(e.theta, t, PI));

        let truth = CharacteristicParams::new(
            rng.uniform(0.1, PI - 0.1),
            rng.uniform(0.0, PI),
            rng.uniform(0.0, PI),
        );
        let q = truth.equiv();
        let est =
            estimate_sixstep(&std::array::from_fn(|k| render_intensity(&q, &six[k])), 1.0).params;
        let class = ambiguity_classes(&truth);
        let gap = class
            .iter()
            .map(|m| {
                let m = m.canonical();
                (m.delta - est.delta)
                    .abs()
                    .max(angle_gap(m.theta, est.theta, PI))
                    .max(angle_gap(m.gamma, est.gamma, PI))
            })
            .fold(f64::INFINITY, f64::min);
        if gap > 1e-6 {
            outside_class += 1;
        }
        err_six = err_six.max(gap);
        let abs = |p: &CharacteristicParams| p.equiv().to_array().map(f64::abs);
        for m in &class {
            for (x, y) in abs(m).iter().zip(abs(&truth)) {
                err_class = err_class.max((x - y).abs());
            }
        }
    }
    outcome(
        err_2d <= 1e-6 && outside_class == 0 && err_class <= 1e-12,
        format!("2d10 max error {err_2d:.1e}, six-step max distance to class {err_six:.1e}, class |element| spread {err_class:.1e}"),
    )
}

fn tilted_disk() -> StressField {
    let mut d = Disk::new(0.4, 0.7, 0.3);
    d.frame = Mat3::rot_x(0.3) * Mat3::rot_y(-0.2);
    StressField::disks(vec![d])
}

fn frobenius(a: &JonesMat, b: &JonesMat) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn c6_truncation_order() -> Outcome {
    let field = tilted_disk();
    let march = MarchSettings::midpoint(64);
    let base = 0.1;
    let scales = [1.0, 0.5, 0.25, 0.125];
    let poses = [
        RotationPose::new(0.4, 0.9),
        RotationPose::new(1.0, 0.2),
        RotationPose::new(-0.6, 2.0),
    ];
    let mut pts = Vec::new();
    for s in scales {
        let optics = Optics {
            stress_optic: base * s,
            wavelength: 1.0,
        };
        let (mut sum, mut n) = (0.0, 0);
        for pose in poses {
            for (i, ray) in rays_for_pose(pose, 16, 16, 1.0).iter().enumerate() {
                let g = ray_equiv(
                    &field,
                    ray,
                    &march,
                    &optics,
                    ForwardModel::General,
                    i as u64,
                )
                .to_jones();
                let l = ray_equiv(&field, ray, &march, &optics, ForwardModel::Linear, i as u64)
                    .to_jones();
                sum += frobenius(&g, &l).powi(2);
                n += 1;
            }
        }
        pts.push((s.ln(), (sum / n as f64).sqrt().ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    outcome(
        (slope - 2.0).abs() <= 0.3,
        format!("log-log slope {slope:.3} over scales 1..1/8 at C = {base}"),
    )
}

fn c7_gradients() -> Outcome {
    let field = StressField::disks(vec![Disk::new(0.25, 0.8, 0.4)]);
    let optics = Optics {
        stress_optic: 1.0,
        wavelength: 1.0,
    };
    let poses = vec![
        RotationPose::new(0.3, 0.0),
        RotationPose::new(0.6, 0.8),
        RotationPose::new(-0.4, 1.7),
        RotationPose::new(1.0, 2.6),
    ];
    let configs = sixteen_configs(1.0);
    let march = MarchSettings::midpoint(24);
    let spec = CaptureSpec {
        poses: poses.clone(),
        configs: configs.clone(),
        width: 8,
        height: 8,
        view_extent: 1.0,
        march,
        optics,
        model: ForwardModel::General,
    };
    let cap = render_capture(&field, &spec, &Sequential).unwrap();
    let n_cfg = configs.len();
    let (mut rays, mut ids, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    for (pi, pose) in poses.iter().enumerate() {
        for (px, ray) in rays_for_pose(*pose, 8, 8, 1.0).into_iter().enumerate() {
            if field
                .occupancy
                .clip(ray.origin, ray.dir, ray.t_near, ray.t_far)
                .is_some()
            {
                rays.push(ray);
                ids.push((pi * 64 + px) as u64);
                targets.extend((0..n_cfg).map(|c| cap.records[pi * n_cfg + c].image[px]));
            }
        }
    }
    let batch = Batch {
        rays: &rays,
        ids: &ids,
        targets: &targets,
    };
    let (min, max) = field.occupancy.bounds();

    let voxel = VoxelParam::new([16; 3], min, max).unwrap();
    let mut rng = SplitMix64::new(7);
    let vp: Vec<f64> = voxel
        .sample(|p| field.query(p))
        .into_iter()
        .map(|v| 0.6 * v + 0.05 * rng.normal())
        .collect();
    let pb = Problem::new(&voxel, &field.occupancy, &configs, march, optics);
    let ev = finite_diff_check(&pb, &vp, &batch, 64, 1e-5, 11, &Sequential).unwrap();

    let net = NetParam::new(
        NetArch {
            hidden_layers: 3,
            width: 32,
            freqs: 4,
        },
        min,
        max,
    )
    .unwrap();
    let np: Vec<f64> = net
        .shape
        .init_weights(5)
        .into_iter()
        .map(|w| 3.0 * w)
        .collect();
    let pb = Problem::new(&net, &field.occupancy, &configs, march, optics);
    let en = finite_diff_check(&pb, &np, &batch, 64, 1e-5, 12, &Sequential).unwrap();
    let _ = net.n_params();
    outcome(
        ev <= 1e-4 && en <= 1e-4,
        format!(
            "max relative error over 64 probes: voxel {ev:.2e}, network {en:.2e}; {} rays",
            rays.len()
        ),
    )
}

fn c8_disk() -> Outcome {
    let (load, r, h) = (0.55, 0.8, 0.3);
    let s = disk_stress(0.0, 0.0, load, r, h);
    let unit = load / (PI * h * r);
    let center_err = (s.sxx - unit).abs().max((s.syy + 3.0 * unit).abs());

    let e = 1e-5;
    let (mut resid, mut top) = (0.0f64, 0.0f64);
    for i in -8..=8 {
        for j in -8..=8 {
            let (x, y) = (0.1 * i as f64 * r, 0.1 * j as f64 * r);
            if x * x + y * y > (0.8 * r) * (0.8 * r) {
                continue;
            }
            let f = |x: f64, y: f64| disk_stress(x, y, load, r, h);
            let c = f(x, y);
            top = top.max(c.sxx.abs()).max(c.syy.abs()).max(c.sxy.abs());
            let fx =
                (f(x + e, y).sxx - f(x - e, y).sxx + f(x, y + e).sxy - f(x, y - e).sxy) / (2.0 * e);
            let fy =
                (f(x + e, y).sxy - f(x - e, y).sxy + f(x, y + e).syy - f(x, y - e).syy) / (2.0 * e);
            resid = resid.max(fx.abs()).max(fy.abs());
        }
    }
    let rel = resid / top;

    // dark-field circular polariscope, face-on, one pixel column on the load axis
    let optics = Optics {
        stress_optic: 1.0,
        wavelength: 1.0,
    };
    let field = StressField::disks(vec![Disk::new(load, r, h)]);
    let reach = 0.9 * r;
    let n = 4000;
    let rays = rays_for_pose(RotationPose::default(), 1, n, reach);
    let dark = PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, 0.0);
    let march = MarchSettings::midpoint(4);
    let intensity: Vec<f64> = rays
        .iter()
        .enumerate()
        .map(|(i, ray)| {
            render_intensity(
                &ray_equiv(
                    &field,
                    ray,
                    &march,
                    &optics,
                    ForwardModel::General,
                    i as u64,
                ),
                &dark,
            )
        })
        .collect();
    // textbook stresses on the loaded diameter, independent of the library
    let delta_at = |y: f64| {
        let d = 2.0 * r;
        let sx = 2.0 * load / (PI * d * h);
        let sy = -2.0 * load / (PI * h) * (2.0 / (d - 2.0 * y) + 2.0 / (d + 2.0 * y) - 1.0 / d);
        2.0 * PI * optics.stress_optic * h * (sx - sy) / optics.wavelength
    };
    let ys: Vec<f64> = rays.iter().map(|ray| -ray.origin.y()).collect();
    let max_delta = ys.iter().map(|&y| delta_at(y)).fold(0.0, f64::max);
    let expected = (max_delta / (2.0 * PI)).floor() as usize;
    // dark fringes on each half of the diameter, from the centre outwards
    let half = n / 2;
    let count = |idx: Vec<usize>| {
        idx.windows(3)
            .filter(|w| {
                let (a, b, c) = (intensity[w[0]], intensity[w[1]], intensity[w[2]]);
                b < a && b <= c && b < 0.05
            })
            .count()
    };
    let upper = count((0..half).rev().collect());
    let lower = count((half..n).collect());
    outcome(
        center_err <= 1e-10 && rel <= 1e-4 && upper == expected && lower == expected,
        format!(
            "centre error {center_err:.1e}, equilibrium {rel:.1e}, dark fringes {upper}/{lower} per half vs floor({:.3}) = {expected}",
            max_delta / (2.0 * PI)
        ),
    )
}

/// Two stacked disks, the second turned by 60°, sampled to a 24³ grid of
/// trace-free tensors. Near the load points the closed form diverges, so
/// tensors are capped at Frobenius norm 3.
fn stacked_disks(dims: usize) -> StressField {
    let (r, h) = (0.8, 0.3);
    let load = PI * h * r / 3.0;
    let mut a = Disk::new(load, r, h);
    a.center = Vec3::new(0.0, 0.0, 0.2);
    let mut b = Disk::new(load, r, h);
    b.center = Vec3::new(0.0, 0.0, -0.2);
    b.frame = Mat3::rot_z(PI / 3.0);
    let exact = StressField::disks(vec![a, b]);
    let (min, max) = exact.occupancy.bounds();
    let grid = Grid::from_fn([dims; 3], min, max, |p| {
        let d = exact.query(p).deviatoric();
        let norm = d.norm_sq().sqrt();
        if norm > 3.0 {
            StressTensor::from_array(d.to_array().map(|v| v * 3.0 / norm))
        } else {
            d
        }
    })
    .unwrap();
    StressField::new(FieldKind::RegularGrid(grid), exact.occupancy)
}

fn recon_config(dims: usize, optics: Optics, iterations: usize, samples: usize) -> ReconConfig {
    let mut cfg = ReconConfig::new(ParamSpec::Voxel { dims: [dims; 3] }, 1.0, optics);
    cfg.iterations = iterations;
    cfg.batch_size = 512;
    cfg.lr = 0.01;
    cfg.lr_decay = 0.05;
    cfg.march = MarchSettings::midpoint(samples);
    cfg
}

fn c9_tomography() -> Outcome {
    let exec = RayonExecutor::new(0).unwrap();
    let field = stacked_disks(24);
    let optics = Optics {
        stress_optic: 0.8,
        wavelength: 1.0,
    };
    let spec = CaptureSpec {
        poses: pose_grid(16, 8, PI, FRAC_PI_2),
        configs: sixteen_configs(1.0),
        width: 24,
        height: 24,
        view_extent: 1.0,
        march: MarchSettings::midpoint(32),
        optics,
        model: ForwardModel::General,
    };
    let cap = render_capture(&field, &spec, &exec).unwrap();
    let max_delta = {
        let mut m = 0.0f64;
        for pose in &spec.poses {
            for (i, ray) in rays_for_pose(*pose, 24, 24, 1.0).iter().enumerate() {
                let q = ray_equiv(
                    &field,
                    ray,
                    &spec.march,
                    &optics,
                    ForwardModel::Linear,
                    i as u64,
                );
                m = m.max(2.0 * q.a.clamp(-1.0, 1.0).acos());
            }
        }
        m
    };
    let t = Instant::now();
    let mut cfg = recon_config(24, optics, 8000, 32);
    let (est, general) = match reconstruct(&cap, &field.occupancy, &cfg, &exec, &NoClock) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("general reconstruction failed: {e}")),
    };
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let err = evaluate_field_mse(&est, &field, &field.occupancy, 32).unwrap();
    cfg.mode = ReconMode::Linear;
    let linear = match reconstruct(&cap, &field.occupancy, &cfg, &exec, &NoClock) {
        Ok((_, r)) => r,
        Err(e) => return outcome(false, format!("linear reconstruction failed: {e}")),
    };
    outcome(
        err.normalized_l2 <= 0.2 && general.iterations_run <= 20_000 && minutes <= 30.0 && general.final_loss <= linear.final_loss,
        format!(
            "normalized L2 {:.4} after {} iterations in {minutes:.1} min; final loss general {:.3e} vs linear {:.3e}; \
             linear-model max δ {max_delta:.2}",
            err.normalized_l2, general.iterations_run, general.final_loss, linear.final_loss
        ),
    )
}

fn c10_studies() -> Outcome {
    let exec = RayonExecutor::new(0).unwrap();
    let field = stacked_disks(16);
    let optics = Optics {
        stress_optic: 0.8,
        wavelength: 1.0,
    };
    let setup = StudySetup {
        configs: sixteen_configs(1.0),
        width: 16,
        height: 16,
        view_extent: 1.0,
        march: MarchSettings::midpoint(24),
        optics,
        n_azimuth: 16,
        n_elevation: 8,
        range_deg: 180.0,
        noise_sigma: 0.01,
        noise_seed: 1,
        recon: recon_config(16, optics, 3000, 24),
        eval_samples: 16,
    };
    let angles = angle_range_study(&field, &[45.0, 90.0, 180.0], &setup, &exec, &NoClock);
    let coeffs = [0.1, 0.25, 0.5].map(|s| 4.0 * s);
    let wrap = wrap_sweep_study(&field, &coeffs, &setup, &exec, &NoClock);
    let (Ok(a), Ok(w)) = (angles, wrap) else {
        return outcome(false, "a study run failed".into());
    };
    let angles_ok = a[0].mse > a[1].mse && a[1].mse >= a[2].mse;
    let wrap_ok = w.windows(2).all(|p| p[1].mse >= p[0].mse);
    outcome(
        angles_ok && wrap_ok,
        format!(
            "angle MSE 45°/90°/180° = {:.3e}/{:.3e}/{:.3e}; wrap MSE at C = {:?} = {:.3e}/{:.3e}/{:.3e}",
            a[0].mse, a[1].mse, a[2].mse, coeffs, w[0].mse, w[1].mse, w[2].mse
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_stresstomo"))
        .args(args)
        .env_remove("STRESSTOMO_OUT_DIR")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 11,
  "scene": {"field": {"type": "disks", "disks": [{"load": 0.3, "radius": 0.8, "thickness": 0.3}]}},
  "poses": {"azimuth_count": 4, "elevation_count": 2},
  "image": {"width": 12, "height": 12},
  "march": {"n_samples": 16},
  "noise_sigma": 0.01,
  "recon": {"parameterization": {"type": "voxel", "dims": [8, 8, 8]}, "iterations": 300, "lr": 0.01, "checkpoint_every": 25, "holdout_fraction": 0.2}
}"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let run = |name: &str, threads: &str| -> Option<[Vec<u8>; 3]> {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        let ok = run_cli(&["--threads", threads, "render", "--config", cfg, "--out", o])
            && run_cli(&[
                "--threads",
                threads,
                "reconstruct",
                "--config",
                cfg,
                "--out",
                o,
            ]);
        let read = |f: &str| std::fs::read(Path::new(&out).join(f)).ok();
        ok.then(|| {
            Some([
                read("capture.nstc")?,
                read("field-general.nstf")?,
                read("recon-general.log")?,
            ])
        })
        .flatten()
    };
    let (Some(a), Some(b), Some(c)) = (run("a", "2"), run("b", "2"), run("c", "1")) else {
        return outcome(false, "a command failed".into());
    };
    let d = run("d", "4");
    let reruns = a == b;
    let across = d.is_some_and(|d| d == a) && c == a;
    outcome(
        reruns && across,
        format!("reruns byte-identical: {reruns}; capture, field and loss log identical across 1/2/4 threads: {across}"),
    )
}
