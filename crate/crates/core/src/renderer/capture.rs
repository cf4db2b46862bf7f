use alloc::vec::Vec;

use super::{
    elements_from_xy, phase_scale, rays_for_pose, EquivJones, PolariscopeConfig, Ray, Readout,
    RotationPose,
};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::SplitMix64;
use crate::stress::{project_unchecked, FieldSampler, ProjectedStress};

/// Material constant `C` and wavelength `λ`; only their ratio matters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optics {
    pub stress_optic: f64,
    pub wavelength: f64,
}

impl Optics {
    pub fn validate(&self) -> Result<()> {
        if !(self.stress_optic > 0.0
            && self.wavelength > 0.0
            && (self.stress_optic / self.wavelength).is_finite())
        {
            return Err(Error::Config(
                "stress-optic coefficient and wavelength must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Samples per ray, and optionally a seed for stratified jitter (the
/// midpoint rule is used without one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSettings {
    pub n_samples: usize,
    pub jitter_seed: Option<u64>,
}

impl MarchSettings {
    pub fn midpoint(n_samples: usize) -> Self {
        MarchSettings {
            n_samples,
            jitter_seed: None,
        }
    }

    /// Sample parameters along the clipped interval `[t0, t1]`, in ray order,
    /// and the segment length. `ray_id` keys the jitter stream.
    pub fn samples(&self, t0: f64, t1: f64, ray_id: u64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        let n = self.n_samples;
        let dt = (t1 - t0) / n as f64;
        match self.jitter_seed {
            None => out.extend((0..n).map(|k| t0 + (k as f64 + 0.5) * dt)),
            Some(seed) => {
                let mut rng = SplitMix64::stream(seed, ray_id);
                out.extend((0..n).map(|k| t0 + (k as f64 + rng.next_f64()) * dt));
            }
        }
        dt
    }
}

/// Projected stress at each sample of a ray, in ray order, with the segment
/// length. Rays that miss the specimen give an empty list.
pub fn march_ray<F: FieldSampler + ?Sized>(
    field: &F,
    ray: &Ray,
    march: &MarchSettings,
    ray_id: u64,
) -> Vec<(ProjectedStress, f64)> {
    let Some((t0, t1)) = field.clip(ray.origin, ray.dir, ray.t_near, ray.t_far) else {
        return Vec::new();
    };
    let mut ts = Vec::new();
    let dt = march.samples(t0, t1, ray_id, &mut ts);
    ts.iter()
        .map(|&t| {
            (
                project_unchecked(&field.query(ray.at(t)), &ray.u, &ray.v),
                dt,
            )
        })
        .collect()
}

/// Which propagation model turns a ray's stresses into an equivalent element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardModel {
    /// Product of per-segment retarders.
    #[default]
    General,
    /// Integrate first, convert once.
    Linear,
}

/// Equivalent element of one ray.
pub fn ray_equiv<F: FieldSampler + ?Sized>(
    field: &F,
    ray: &Ray,
    march: &MarchSettings,
    optics: &Optics,
    model: ForwardModel,
    ray_id: u64,
) -> EquivJones {
    let segs = march_ray(field, ray, march, ray_id);
    match model {
        ForwardModel::General => {
            let mut q = EquivJones::IDENTITY;
            for (p, dt) in segs.iter().rev() {
                let k = phase_scale(*dt, optics.stress_optic, optics.wavelength);
                q = q.step(elements_from_xy(k * p.sigma(), k * p.tau()));
            }
            q
        }
        ForwardModel::Linear => super::linear_equiv(&segs, optics.stress_optic, optics.wavelength),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureRecord {
    pub pose: RotationPose,
    pub config: PolariscopeConfig,
    /// Row-major, `width * height` intensities.
    pub image: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSet {
    pub width: usize,
    pub height: usize,
    pub records: Vec<CaptureRecord>,
}

impl CaptureSet {
    /// Distinct poses in order of first appearance, each with the indices
    /// of its records.
    pub fn views(&self) -> Vec<(RotationPose, Vec<usize>)> {
        let mut out: Vec<(RotationPose, Vec<usize>)> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            match out.iter_mut().find(|(p, _)| *p == r.pose) {
                Some((_, idx)) => idx.push(i),
                None => out.push((r.pose, alloc::vec![i])),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        for r in &self.records {
            r.config.validate()?;
            if r.image.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    got: r.image.len(),
                });
            }
        }
        Ok(())
    }
}

/// Rays per work chunk. Fixed so results never depend on the executor.
pub const RAY_CHUNK: usize = 256;

/// Everything needed to image one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSpec {
    pub poses: Vec<RotationPose>,
    pub configs: Vec<PolariscopeConfig>,
    pub width: usize,
    pub height: usize,
    pub view_extent: f64,
    pub march: MarchSettings,
    pub optics: Optics,
    pub model: ForwardModel,
}

impl CaptureSpec {
    pub fn validate_against(&self, bounds: (crate::math::Vec3, crate::math::Vec3)) -> Result<()> {
        if self.march.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if !(self.view_extent > 0.0 && self.view_extent.is_finite()) {
            return Err(Error::Config("view extent must be positive".into()));
        }
        self.optics.validate()?;
        for c in &self.configs {
            c.validate()?;
        }
        let (lo, hi) = bounds;
        let e = self.view_extent;
        if (0..3).any(|i| lo[i] < -e || hi[i] > e) {
            return Err(Error::Config(
                "specimen bounds exceed the view extent".into(),
            ));
        }
        Ok(())
    }
}

/// Image every pose under every configuration. Records are pose-major.
pub fn render_capture<F: FieldSampler + ?Sized, E: Executor>(
    field: &F,
    spec: &CaptureSpec,
    exec: &E,
) -> Result<CaptureSet> {
    spec.validate_against(field.bounds())?;
    let readouts: Vec<Readout> = spec.configs.iter().map(Readout::new).collect();
    let npix = spec.width * spec.height;
    let mut records = Vec::with_capacity(spec.poses.len() * spec.configs.len());
    for (pi, pose) in spec.poses.iter().enumerate() {
        let rays = rays_for_pose(*pose, spec.width, spec.height, spec.view_extent);
        let chunks = npix.div_ceil(RAY_CHUNK);
        let parts = exec.map_indexed(chunks, |c| {
            let lo = c * RAY_CHUNK;
            let hi = (lo + RAY_CHUNK).min(npix);
            (lo..hi)
                .map(|i| {
                    let id = (pi * npix + i) as u64;
                    ray_equiv(field, &rays[i], &spec.march, &spec.optics, spec.model, id)
                })
                .collect::<Vec<_>>()
        });
        let qs: Vec<EquivJones> = parts.into_iter().flatten().collect();
        if let Some(bad) = qs.iter().position(|q| !q.norm_sq().is_finite()) {
            return Err(Error::NonFinite {
                ray: pi * npix + bad,
            });
        }
        for (cfg, ro) in spec.configs.iter().zip(&readouts) {
            let image = qs
                .iter()
                .map(|q| ro.intensity(q).clamp(0.0, cfg.source_intensity))
                .collect();
            records.push(CaptureRecord {
                pose: *pose,
                config: *cfg,
                image,
            });
        }
    }
    Ok(CaptureSet {
        width: spec.width,
        height: spec.height,
        records,
    })
}

/// Additive Gaussian noise of standard deviation `sigma`, clamped back to
/// `[0, source_intensity]`. Each record draws from its own stream.
pub fn add_gaussian_noise(capture: &mut CaptureSet, sigma: f64, seed: u64) {
    for (i, r) in capture.records.iter_mut().enumerate() {
        let mut rng = SplitMix64::stream(seed, i as u64);
        let top = r.config.source_intensity;
        for v in r.image.iter_mut() {
            *v = (*v + sigma * rng.normal()).clamp(0.0, top);
        }
    }
}
