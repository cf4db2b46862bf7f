use stresstomo_core::adjoint::{
    adam_step, finite_diff_check, forward_backward, forward_loss, loss_abs_jones,
    loss_l1_intensity, render_rays, AdamState, Batch, LossKind, NetParam, Parameterization,
    Problem, VoxelParam,
};
use stresstomo_core::estimation::CharacteristicParams;
use stresstomo_core::exec::Sequential;
use stresstomo_core::renderer::{
    rays_for_pose, render_capture, render_intensity, sixteen_configs, CaptureSpec, ForwardModel,
    MarchSettings, Optics, Ray, RotationPose,
};
use stresstomo_core::rng::SplitMix64;
use stresstomo_core::stress::{Disk, NetArch, OccupancyMask, StressField, StressTensor};
use stresstomo_core::Vec3;

const OPTICS: Optics = Optics {
    stress_optic: 1.0,
    wavelength: 1.0,
};

struct Scene {
    field: StressField,
    rays: Vec<Ray>,
    ids: Vec<u64>,
    targets: Vec<f64>,
}

impl Scene {
    fn batch(&self) -> Batch<'_> {
        Batch {
            rays: &self.rays,
            ids: &self.ids,
            targets: &self.targets,
        }
    }
}

/// A disk imaged from four poses at 8×8 pixels, keeping the rays that hit it.
fn disk_scene(model: ForwardModel) -> Scene {
    let field = StressField::disks(vec![Disk::new(0.25, 0.8, 0.4)]);
    let poses = vec![
        RotationPose::new(0.3, 0.0),
        RotationPose::new(0.6, 0.8),
        RotationPose::new(-0.4, 1.7),
        RotationPose::new(1.0, 2.6),
    ];
    let spec = CaptureSpec {
        poses: poses.clone(),
        configs: sixteen_configs(1.0),
        width: 8,
        height: 8,
        view_extent: 1.0,
        march: MarchSettings::midpoint(24),
        optics: OPTICS,
        model,
    };
    let cap = render_capture(&field, &spec, &Sequential).unwrap();
    let n_cfg = spec.configs.len();
    let (mut rays, mut ids, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    for (pi, pose) in poses.iter().enumerate() {
        for (px, ray) in rays_for_pose(*pose, 8, 8, 1.0).into_iter().enumerate() {
            if field
                .occupancy
                .clip(ray.origin, ray.dir, ray.t_near, ray.t_far)
                .is_none()
            {
                continue;
            }
            rays.push(ray);
            ids.push((pi * 64 + px) as u64);
            targets.extend((0..n_cfg).map(|c| cap.records[pi * n_cfg + c].image[px]));
        }
    }
    Scene {
        field,
        rays,
        ids,
        targets,
    }
}

fn voxel_start(p: &VoxelParam, scene: &Scene) -> Vec<f64> {
    // a perturbed, weaker copy of the truth keeps residuals away from zero
    let mut rng = SplitMix64::new(99);
    p.sample(|x| scene.field.query(x))
        .into_iter()
        .map(|v| 0.6 * v + 0.05 * rng.normal())
        .collect()
}

#[test]
fn voxel_gradient_matches_finite_differences() {
    for model in [ForwardModel::General, ForwardModel::Linear] {
        let scene = disk_scene(model);
        let (min, max) = scene.field.occupancy.bounds();
        let p = VoxelParam::new([16; 3], min, max).unwrap();
        let params = voxel_start(&p, &scene);
        for loss in [LossKind::Intensity, LossKind::Canonical] {
            let pb = Problem::new(
                &p,
                &scene.field.occupancy,
                &sixteen_configs(1.0),
                MarchSettings::midpoint(24),
                OPTICS,
            )
            .with_model(model)
            .with_loss(loss);
            let err =
                finite_diff_check(&pb, &params, &scene.batch(), 64, 1e-5, 4, &Sequential).unwrap();
            assert!(err <= 1e-4, "{model:?} {loss:?}: {err}");
        }
    }
}

#[test]
fn network_gradient_matches_finite_differences() {
    let scene = disk_scene(ForwardModel::General);
    let (min, max) = scene.field.occupancy.bounds();
    let arch = NetArch {
        hidden_layers: 3,
        width: 32,
        freqs: 4,
    };
    let p = NetParam::new(arch, min, max).unwrap();
    let params: Vec<f64> = p
        .shape
        .init_weights(5)
        .into_iter()
        .map(|w| 3.0 * w)
        .collect();
    let pb = Problem::new(
        &p,
        &scene.field.occupancy,
        &sixteen_configs(1.0),
        MarchSettings::midpoint(24),
        OPTICS,
    );
    let err = finite_diff_check(&pb, &params, &scene.batch(), 64, 1e-5, 6, &Sequential).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn zero_field_against_free_space_targets() {
    let (min, max) = (Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
    let mask = OccupancyMask::Box { min, max };
    let p = VoxelParam::new([4; 3], min, max).unwrap();
    let configs = sixteen_configs(1.0);
    let rays = rays_for_pose(RotationPose::new(0.2, 0.3), 4, 4, 1.0);
    let ids: Vec<u64> = (0..rays.len() as u64).collect();
    let pb = Problem::new(&p, &mask, &configs, MarchSettings::midpoint(8), OPTICS);
    let params = vec![0.0; p.n_params()];

    let id = CharacteristicParams::new(0.0, 0.0, 0.0).equiv();
    let free: Vec<f64> = rays
        .iter()
        .flat_map(|_| configs.iter().map(|c| render_intensity(&id, c)))
        .collect();
    let rendered = render_rays(&pb, &params, &rays, &ids, &Sequential);
    assert!(rendered
        .iter()
        .zip(&free)
        .all(|(a, b)| (a - b).abs() < 1e-14));

    let (loss, grad) = forward_backward(
        &pb,
        &params,
        &Batch {
            rays: &rays,
            ids: &ids,
            targets: &rendered,
        },
        &Sequential,
    )
    .unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn duplicated_batch_keeps_the_mean() {
    let scene = disk_scene(ForwardModel::General);
    let (min, max) = scene.field.occupancy.bounds();
    let p = VoxelParam::new([8; 3], min, max).unwrap();
    let params = voxel_start(&p, &scene);
    let pb = Problem::new(
        &p,
        &scene.field.occupancy,
        &sixteen_configs(1.0),
        MarchSettings::midpoint(24),
        OPTICS,
    );
    let (l1, g1) = forward_backward(&pb, &params, &scene.batch(), &Sequential).unwrap();
    let rays = [scene.rays.clone(), scene.rays.clone()].concat();
    let ids = [scene.ids.clone(), scene.ids.clone()].concat();
    let targets = [scene.targets.clone(), scene.targets.clone()].concat();
    let (l2, g2) = forward_backward(
        &pb,
        &params,
        &Batch {
            rays: &rays,
            ids: &ids,
            targets: &targets,
        },
        &Sequential,
    )
    .unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    assert!(g1
        .iter()
        .zip(&g2)
        .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
    assert_eq!(
        forward_loss(&pb, &params, &scene.batch(), &Sequential).unwrap(),
        l1
    );
}

#[test]
fn isotropic_voxels_give_finite_gradients() {
    let scene = disk_scene(ForwardModel::General);
    let (min, max) = scene.field.occupancy.bounds();
    let p = VoxelParam::new([6; 3], min, max).unwrap();
    // a pure pressure is trace-only, so its free components vanish
    let params = p.sample(|_| StressTensor::diag(2.0, 2.0, 2.0));
    assert!(params.iter().all(|v| v.abs() < 1e-15));
    let pb = Problem::new(
        &p,
        &scene.field.occupancy,
        &sixteen_configs(1.0),
        MarchSettings::midpoint(24),
        OPTICS,
    );
    let (loss, grad) = forward_backward(&pb, &params, &scene.batch(), &Sequential).unwrap();
    assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
    assert!(grad.iter().any(|g| *g != 0.0));
}

#[test]
fn adam_reference_steps() {
    let mut s = AdamState::with_lr(3, 0.01);
    let mut p = vec![1.0, -2.0, 0.5];
    adam_step(&mut s, &mut p, &[1.0; 3]).unwrap();
    // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
    for (a, b) in p.iter().zip([1.0, -2.0, 0.5]) {
        assert!((a - (b - 0.01)).abs() < 1e-9);
    }
    let before = p.clone();
    let mut z = AdamState::new(3);
    adam_step(&mut z, &mut p, &[0.0; 3]).unwrap();
    assert_eq!(p, before);
    assert!(adam_step(&mut z, &mut p, &[0.0; 2]).is_err());

    let run = || {
        let mut s = AdamState::new(4);
        let mut p = vec![0.1, 0.2, 0.3, 0.4];
        let mut rng = SplitMix64::new(17);
        for _ in 0..50 {
            let g: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            adam_step(&mut s, &mut p, &g).unwrap();
        }
        p
    };
    assert_eq!(
        run().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        run().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn loss_examples() {
    let a = [0.1, 0.5, 0.9, 0.3];
    assert_eq!(loss_l1_intensity(&a, &a).unwrap(), 0.0);
    let shifted: Vec<f64> = a.iter().map(|v| v + 0.25).collect();
    assert!((loss_l1_intensity(&shifted, &a).unwrap() - 0.25).abs() < 1e-15);
    let mut rng = SplitMix64::new(1);
    let x: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
    let y: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
    let mut naive = 0.0;
    for i in 0..1000 {
        naive += (x[i] - y[i]).abs();
    }
    assert!((loss_l1_intensity(&x, &y).unwrap() - naive / 1000.0).abs() < 1e-12);
    assert!(loss_l1_intensity(&x, &y[..10]).is_err());

    let q = [CharacteristicParams::new(0.4, 0.1, 0.2).equiv()];
    assert_eq!(loss_abs_jones(&q, &q).unwrap(), 0.0);
}
