//! Sweeps over acquisition settings: angular coverage and fringe density.

use alloc::vec::Vec;

use super::{evaluate_field_mse, reconstruct, Clock, ReconConfig, ReconFailure};
use crate::error::Result;
use crate::exec::Executor;
use crate::math::sqrt;
use crate::renderer::{
    add_gaussian_noise, march_ray, phase_scale, rays_for_pose, render_capture, CaptureSet,
    CaptureSpec, ForwardModel, MarchSettings, Optics, PolariscopeConfig, RotationPose,
};
use crate::stress::StressField;

/// `n_az` azimuths `k A / n_az` over `[0, A)` times `n_el` elevations evenly
/// spaced over `[0, E]` (just `0` when `n_el == 1`), azimuth fastest.
pub fn pose_grid(
    n_az: usize,
    n_el: usize,
    azimuth_range: f64,
    elevation_range: f64,
) -> Vec<RotationPose> {
    let mut out = Vec::with_capacity(n_az * n_el);
    for j in 0..n_el {
        let el = if n_el > 1 {
            elevation_range * j as f64 / (n_el - 1) as f64
        } else {
            0.0
        };
        for k in 0..n_az {
            out.push(RotationPose::new(
                el,
                azimuth_range * k as f64 / n_az as f64,
            ));
        }
    }
    out
}

/// The angular cone of a study row: azimuth over `[0, R)`, elevation over
/// `[0, R / 2]`.
pub fn cone_poses(n_az: usize, n_el: usize, range_rad: f64) -> Vec<RotationPose> {
    pose_grid(n_az, n_el, range_rad, 0.5 * range_rad)
}

/// Acquisition and reconstruction settings shared by every row of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySetup {
    pub configs: Vec<PolariscopeConfig>,
    pub width: usize,
    pub height: usize,
    pub view_extent: f64,
    pub march: MarchSettings,
    pub optics: Optics,
    pub n_azimuth: usize,
    pub n_elevation: usize,
    /// Full angular range used by the wrap sweep, in degrees.
    pub range_deg: f64,
    /// Standard deviation of the additive noise, in intensity units.
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub recon: ReconConfig,
    /// Lattice resolution of the error evaluation.
    pub eval_samples: usize,
}

impl StudySetup {
    fn capture<E: Executor>(
        &self,
        field: &StressField,
        poses: Vec<RotationPose>,
        optics: Optics,
        exec: &E,
    ) -> Result<CaptureSet> {
        let spec = CaptureSpec {
            poses,
            configs: self.configs.clone(),
            width: self.width,
            height: self.height,
            view_extent: self.view_extent,
            march: self.march,
            optics,
            model: ForwardModel::General,
        };
        let mut cap = render_capture(field, &spec, exec)?;
        if self.noise_sigma > 0.0 {
            add_gaussian_noise(&mut cap, self.noise_sigma, self.noise_seed);
        }
        Ok(cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRow {
    pub range_deg: f64,
    pub mse: f64,
    pub normalized_l2: f64,
}

/// Reconstruct `field` from captures restricted to each angular range.
pub fn angle_range_study<E: Executor>(
    field: &StressField,
    ranges_deg: &[f64],
    setup: &StudySetup,
    exec: &E,
    clock: &dyn Clock,
) -> core::result::Result<Vec<AngleRow>, ReconFailure> {
    if let Some(bad) = ranges_deg.iter().find(|r| !(**r > 0.0 && **r <= 180.0)) {
        return Err(crate::Error::Config(alloc::format!(
            "angular range {bad} outside (0, 180] degrees"
        ))
        .into());
    }
    let mut rows = Vec::with_capacity(ranges_deg.len());
    for &r in ranges_deg {
        let poses = cone_poses(setup.n_azimuth, setup.n_elevation, r.to_radians());
        let cap = setup.capture(field, poses, setup.optics, exec)?;
        let mut cfg = setup.recon.clone();
        cfg.optics = setup.optics;
        let (est, _) = reconstruct(&cap, &field.occupancy, &cfg, exec, clock)?;
        let e = evaluate_field_mse(&est, field, &field.occupancy, setup.eval_samples)?;
        rows.push(AngleRow {
            range_deg: r,
            mse: e.total,
            normalized_l2: e.normalized_l2,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrapRow {
    pub coeff: f64,
    /// Mean unwrapped fringe order `δ_lin / 2π` over rays crossing the
    /// specimen.
    pub fringe_density: f64,
    pub mse: f64,
    pub normalized_l2: f64,
    /// The captures showed no modulation.
    pub degenerate: bool,
}

/// Reconstruct `field` with the stress-optic coefficient set to each of
/// `coeffs` in turn; noise is added per [`StudySetup::noise_sigma`].
pub fn wrap_sweep_study<E: Executor>(
    field: &StressField,
    coeffs: &[f64],
    setup: &StudySetup,
    exec: &E,
    clock: &dyn Clock,
) -> core::result::Result<Vec<WrapRow>, ReconFailure> {
    if let Some(bad) = coeffs.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(
            crate::Error::Config(alloc::format!("coefficient {bad} must be positive")).into(),
        );
    }
    let poses = cone_poses(
        setup.n_azimuth,
        setup.n_elevation,
        setup.range_deg.to_radians(),
    );
    let mut rows = Vec::with_capacity(coeffs.len());
    for &c in coeffs {
        let optics = Optics {
            stress_optic: c,
            wavelength: setup.optics.wavelength,
        };
        let cap = setup.capture(field, poses.clone(), optics, exec)?;
        let mut cfg = setup.recon.clone();
        cfg.optics = optics;
        let (est, report) = reconstruct(&cap, &field.occupancy, &cfg, exec, clock)?;
        let e = evaluate_field_mse(&est, field, &field.occupancy, setup.eval_samples)?;
        rows.push(WrapRow {
            coeff: c,
            fringe_density: mean_fringe_order(field, &poses, setup, optics),
            mse: e.total,
            normalized_l2: e.normalized_l2,
            degenerate: report.degenerate,
        });
    }
    Ok(rows)
}

fn mean_fringe_order(
    field: &StressField,
    poses: &[RotationPose],
    setup: &StudySetup,
    optics: Optics,
) -> f64 {
    let kappa = phase_scale(1.0, optics.stress_optic, optics.wavelength);
    let (mut sum, mut n) = (0.0, 0usize);
    for pose in poses {
        for ray in rays_for_pose(*pose, setup.width, setup.height, setup.view_extent) {
            let segs = march_ray(field, &ray, &setup.march, 0);
            if !segs.is_empty() {
                let s: f64 = segs.iter().map(|(p, dt)| p.sigma() * dt).sum();
                let t: f64 = segs.iter().map(|(p, dt)| p.tau() * dt).sum();
                sum += 2.0 * kappa * sqrt(s * s + t * t) / (2.0 * core::f64::consts::PI);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
