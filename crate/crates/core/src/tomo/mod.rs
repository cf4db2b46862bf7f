//! Reconstruction of a stress field from polariscope captures.
//!
//! [`reconstruct`] fits field parameters to a [`CaptureSet`] in one of three
//! ways: through the full nonlinear model, through the first-order (linear)
//! model, or by estimating per-pixel retardance first and then solving a
//! linear least-squares problem. [`evaluate_field_mse`] scores the result
//! against a reference field and [`study`] holds the two parameter sweeps.

mod metrics;
pub mod study;

pub use metrics::{evaluate_field_mse, FieldErrors};

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::adjoint::{
    forward_backward, forward_loss, render_rays, AdamState, Batch, LossKind, NetParam,
    Parameterization, Problem, VoxelParam,
};
use crate::error::{Error, Result};
use crate::estimation::estimate_sixstep;
use crate::exec::Executor;
use crate::math::{sqrt, wrap};
use crate::renderer::{
    phase_scale, rays_for_pose, sixstep_configs, CaptureSet, ForwardModel, MarchSettings, Optics,
    PolariscopeConfig, Ray, RotationPose,
};
use crate::rng::SplitMix64;
use crate::stress::{NetArch, OccupancyMask, StressField};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpec {
    Voxel { dims: [usize; 3] },
    CoordNet(NetArch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconMode {
    #[default]
    General,
    Linear,
    /// Per-pixel six-step estimation, then a linear least-squares fit.
    TwoStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub param: ParamSpec,
    /// Optimizer steps, or conjugate-gradient iterations in two-step mode.
    pub iterations: usize,
    pub batch_size: usize,
    pub march: MarchSettings,
    pub loss: LossKind,
    pub mode: ReconMode,
    pub seed: u64,
    pub lr: f64,
    /// The learning rate decays geometrically to `lr * lr_decay` at the last
    /// iteration.
    pub lr_decay: f64,
    /// Fraction of poses withheld for early stopping.
    pub holdout_fraction: f64,
    pub patience: usize,
    pub checkpoint_every: usize,
    /// Half-width of the imaged cube, as used when rendering.
    pub view_extent: f64,
    pub optics: Optics,
}

impl ReconConfig {
    pub fn new(param: ParamSpec, view_extent: f64, optics: Optics) -> Self {
        ReconConfig {
            param,
            iterations: 5000,
            batch_size: 512,
            march: MarchSettings::midpoint(64),
            loss: LossKind::Intensity,
            mode: ReconMode::General,
            seed: 0,
            lr: AdamState::DEFAULT_LR,
            lr_decay: 1.0,
            holdout_fraction: 0.05,
            patience: 2000,
            checkpoint_every: 100,
            view_extent,
            optics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "batch_size and checkpoint_every must be at least 1".into(),
            ));
        }
        if self.march.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if !(self.lr > 0.0
            && self.lr.is_finite()
            && self.lr_decay > 0.0
            && self.lr_decay.is_finite())
        {
            return Err(Error::Config("lr and lr_decay must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        if let ParamSpec::Voxel { dims } = self.param {
            if dims.iter().any(|&d| d < 2) {
                return Err(Error::Config(
                    "voxel dims must be at least 2 per axis".into(),
                ));
            }
        }
        if self.mode == ReconMode::TwoStep && !matches!(self.param, ParamSpec::Voxel { .. }) {
            return Err(Error::Config(
                "two-step mode needs a voxel parameterization".into(),
            ));
        }
        if !(self.view_extent > 0.0 && self.view_extent.is_finite()) {
            return Err(Error::Config("view extent must be positive".into()));
        }
        self.optics.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Mean training loss since the previous checkpoint (two-step mode: the
    /// least-squares residual norm).
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconReport {
    pub checkpoints: Vec<Checkpoint>,
    /// Mean L1 loss over all training rays under the mode's forward model.
    pub final_loss: f64,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// The captures carry no modulation at all.
    pub degenerate: bool,
    pub wall_clock_s: f64,
    /// Per pose, the per-pixel mean absolute residual over configurations.
    pub residual_images: Vec<(RotationPose, Vec<f64>)>,
    pub params: Vec<f64>,
}

/// A failed reconstruction, with the last checkpoint whose loss was finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconFailure {
    pub error: Error,
    pub last_checkpoint: Option<(Checkpoint, Vec<f64>)>,
}

impl From<Error> for ReconFailure {
    fn from(error: Error) -> Self {
        ReconFailure {
            error,
            last_checkpoint: None,
        }
    }
}

impl core::fmt::Display for ReconFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.last_checkpoint {
            Some((c, _)) => write!(
                f,
                "{} (last finite checkpoint at iteration {})",
                self.error, c.iteration
            ),
            None => write!(f, "{}", self.error),
        }
    }
}

/// Seconds since some fixed origin.
pub trait Clock {
    fn now_s(&self) -> f64;
}

/// For callers that do not care about timing.
pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

enum AnyParam {
    Voxel(VoxelParam),
    Net(NetParam),
}

impl AnyParam {
    fn as_dyn(&self) -> &dyn Parameterization {
        match self {
            AnyParam::Voxel(p) => p,
            AnyParam::Net(p) => p,
        }
    }
}

/// Rays of a capture set with their targets, `n_cfg` per ray.
struct RaySet {
    rays: Vec<Ray>,
    ids: Vec<u64>,
    targets: Vec<f64>,
}

impl RaySet {
    fn new() -> Self {
        RaySet {
            rays: Vec::new(),
            ids: Vec::new(),
            targets: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.rays.len()
    }

    fn batch(&self) -> Batch<'_> {
        Batch {
            rays: &self.rays,
            ids: &self.ids,
            targets: &self.targets,
        }
    }
}

fn same_config(a: &PolariscopeConfig, b: &PolariscopeConfig) -> bool {
    let ang = |x: f64, y: f64| {
        let d = wrap(x - y, PI);
        d.min(PI - d) < 1e-9
    };
    let opt = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => ang(x, y),
        _ => false,
    };
    ang(a.alpha1, b.alpha1)
        && ang(a.alpha2, b.alpha2)
        && opt(a.qwp1, b.qwp1)
        && opt(a.qwp2, b.qwp2)
        && (a.source_intensity - b.source_intensity).abs() <= 1e-12 * a.source_intensity
}

/// Configurations shared by every pose, in record order.
pub fn common_configs(captures: &CaptureSet) -> Result<Vec<PolariscopeConfig>> {
    let views = captures.views();
    let Some((_, first)) = views.first() else {
        return Err(Error::Config("capture set is empty".into()));
    };
    let configs: Vec<PolariscopeConfig> =
        first.iter().map(|&i| captures.records[i].config).collect();
    for (_, idx) in &views {
        if idx.len() != configs.len()
            || idx
                .iter()
                .zip(&configs)
                .any(|(&i, c)| !same_config(&captures.records[i].config, c))
        {
            return Err(Error::Config(
                "every pose must be imaged under the same configurations".into(),
            ));
        }
    }
    Ok(configs)
}

/// Position in `configs` of each of `wanted`, or an error naming the
/// missing ones in degrees.
pub fn find_configs(
    configs: &[PolariscopeConfig],
    wanted: &[PolariscopeConfig],
    scheme: &str,
) -> Result<Vec<usize>> {
    use core::fmt::Write;
    let mut out = Vec::with_capacity(wanted.len());
    let mut missing = alloc::string::String::new();
    for w in wanted {
        match configs.iter().position(|c| same_config(c, w)) {
            Some(i) => out.push(i),
            None => {
                let deg = |x: Option<f64>| {
                    x.map_or(alloc::string::String::from("none"), |v| {
                        alloc::format!("{}", v.to_degrees())
                    })
                };
                let _ = write!(
                    missing,
                    " (alpha1={}, qwp1={}, qwp2={}, alpha2={})",
                    deg(Some(w.alpha1)),
                    deg(w.qwp1),
                    deg(w.qwp2),
                    deg(Some(w.alpha2))
                );
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(alloc::format!(
            "capture lacks {scheme} configurations, degrees:{missing}"
        )));
    }
    Ok(out)
}

/// Record indices of the six-step configurations within `configs`.
pub fn find_sixstep(configs: &[PolariscopeConfig]) -> Result<[usize; 6]> {
    let src = configs.first().map_or(1.0, |c| c.source_intensity);
    let idx = find_configs(configs, &sixstep_configs(src), "six-step")?;
    Ok(core::array::from_fn(|k| idx[k]))
}

fn build_param(cfg: &ReconConfig, mask: &OccupancyMask) -> Result<(AnyParam, Vec<f64>)> {
    let (min, max) = mask.bounds();
    Ok(match &cfg.param {
        ParamSpec::Voxel { dims } => {
            let p = VoxelParam::new(*dims, min, max)?;
            let init = alloc::vec![0.0; p.n_params()];
            (AnyParam::Voxel(p), init)
        }
        ParamSpec::CoordNet(arch) => {
            let p = NetParam::new(*arch, min, max)?;
            let init = p.shape.init_weights(cfg.seed);
            (AnyParam::Net(p), init)
        }
    })
}

fn is_degenerate(captures: &CaptureSet, n_cfg: usize) -> bool {
    (0..n_cfg).all(|c| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut top = 0.0f64;
        for r in captures.records.iter().skip(c).step_by(n_cfg) {
            top = top.max(r.config.source_intensity);
            for &v in &r.image {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi - lo <= 1e-9 * top
    })
}

/// Fit a trace-free field inside `occupancy` to `captures`.
///
/// Captures must image every pose under the same configurations, as
/// [`crate::renderer::render_capture`] produces. Rays that miss the
/// occupancy carry no information about the field and are left out. A
/// `holdout_fraction` of the poses (rounded down) is withheld; when any are
/// withheld, training stops once their loss has not improved for `patience`
/// iterations and the best checkpoint is returned.
pub fn reconstruct<E: Executor>(
    captures: &CaptureSet,
    occupancy: &OccupancyMask,
    cfg: &ReconConfig,
    exec: &E,
    clock: &dyn Clock,
) -> core::result::Result<(StressField, ReconReport), ReconFailure> {
    let t_start = clock.now_s();
    cfg.validate()?;
    captures.validate()?;
    if captures.records.is_empty() || captures.width * captures.height == 0 {
        return Err(Error::Config("capture set is empty".into()).into());
    }
    let (lo, hi) = occupancy.bounds();
    let e = cfg.view_extent;
    if (0..3).any(|i| !(lo[i] >= -e && hi[i] <= e)) {
        return Err(Error::Config("occupancy bounds exceed the view extent".into()).into());
    }
    let configs = common_configs(captures)?;
    let n_cfg = configs.len();
    let views = captures.views();
    let npix = captures.width * captures.height;

    let mut view_order: Vec<usize> = (0..views.len()).collect();
    let mut rng = SplitMix64::new(cfg.seed);
    rng.shuffle(&mut view_order);
    let n_hold = (cfg.holdout_fraction * views.len() as f64) as usize;
    let mut held = alloc::vec![false; views.len()];
    for &v in &view_order[..n_hold] {
        held[v] = true;
    }

    let mut train = RaySet::new();
    let mut hold = RaySet::new();
    let mut all_rays: Vec<Vec<Ray>> = Vec::with_capacity(views.len());
    for (vi, (pose, idx)) in views.iter().enumerate() {
        let rays = rays_for_pose(*pose, captures.width, captures.height, cfg.view_extent);
        let set = if held[vi] { &mut hold } else { &mut train };
        for (px, ray) in rays.iter().enumerate() {
            if occupancy
                .clip(ray.origin, ray.dir, ray.t_near, ray.t_far)
                .is_none()
            {
                continue;
            }
            set.rays.push(*ray);
            set.ids.push((vi * npix + px) as u64);
            set.targets
                .extend(idx.iter().map(|&r| captures.records[r].image[px]));
        }
        all_rays.push(rays);
    }
    if train.len() == 0 {
        return Err(Error::Config("no training ray intersects the occupancy".into()).into());
    }
    // keep early-stopping evaluation cheap
    const HOLDOUT_CAP: usize = 4096;
    if hold.len() > HOLDOUT_CAP {
        hold.rays.truncate(HOLDOUT_CAP);
        hold.ids.truncate(HOLDOUT_CAP);
        hold.targets.truncate(HOLDOUT_CAP * n_cfg);
    }

    let (param, mut params) = build_param(cfg, occupancy)?;
    let param = param.as_dyn();
    let model = if cfg.mode == ReconMode::General {
        ForwardModel::General
    } else {
        ForwardModel::Linear
    };
    let problem = Problem::new(param, occupancy, &configs, cfg.march, cfg.optics)
        .with_model(model)
        .with_loss(cfg.loss);

    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let iterations_run;
    if cfg.mode == ReconMode::TwoStep {
        let targets = two_step_targets(captures, &views, &configs, &train, npix, cfg)?;
        iterations_run = cgls(
            &problem,
            &mut params,
            &train,
            &targets,
            cfg.iterations,
            exec,
            &mut checkpoints,
        )?;
    } else {
        let mut adam = AdamState::with_lr(params.len(), cfg.lr);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut cursor = 0;
        let bs = cfg.batch_size.min(train.len());
        let mut batch = RaySet::new();
        let mut running = 0.0;
        let mut since = 0usize;
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        let mut last_good: Option<(Checkpoint, Vec<f64>)> = None;
        let mut it = 0;
        while it < cfg.iterations {
            batch.rays.clear();
            batch.ids.clear();
            batch.targets.clear();
            for _ in 0..bs {
                if cursor == order.len() {
                    rng.shuffle(&mut order);
                    cursor = 0;
                }
                let r = order[cursor];
                cursor += 1;
                batch.rays.push(train.rays[r]);
                batch.ids.push(train.ids[r]);
                batch
                    .targets
                    .extend_from_slice(&train.targets[r * n_cfg..(r + 1) * n_cfg]);
            }
            let fail = |error: Error, last: &Option<(Checkpoint, Vec<f64>)>| ReconFailure {
                error,
                last_checkpoint: last.clone(),
            };
            let (loss, grad) = match forward_backward(&problem, &params, &batch.batch(), exec) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, &last_good)),
            };
            if !loss.is_finite() {
                return Err(fail(Error::NonFinite { ray: 0 }, &last_good));
            }
            let frac = it as f64 / cfg.iterations.max(2).saturating_sub(1) as f64;
            adam.lr = cfg.lr * libm::pow(cfg.lr_decay, frac);
            adam.update(&mut params, &grad)?;
            running += loss;
            since += 1;
            it += 1;
            if it % cfg.checkpoint_every == 0 || it == cfg.iterations {
                let holdout_loss = if hold.len() > 0 {
                    Some(
                        forward_loss(&problem, &params, &hold.batch(), exec)
                            .map_err(|e| fail(e, &last_good))?,
                    )
                } else {
                    None
                };
                let cp = Checkpoint {
                    iteration: it,
                    train_loss: running / since as f64,
                    holdout_loss,
                };
                running = 0.0;
                since = 0;
                checkpoints.push(cp);
                if !cp.train_loss.is_finite() || holdout_loss.is_some_and(|h| !h.is_finite()) {
                    return Err(fail(Error::NonFinite { ray: 0 }, &last_good));
                }
                last_good = Some((cp, params.clone()));
                if let Some(h) = holdout_loss {
                    if best.as_ref().map_or(true, |(b, _, _)| h < *b) {
                        best = Some((h, it, params.clone()));
                    } else if it - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
        iterations_run = it;
        if let Some((_, _, p)) = best {
            params = p;
        }
    }

    let final_loss = forward_loss(&problem, &params, &train.batch(), exec)?;
    let mut residual_images = Vec::with_capacity(views.len());
    for (vi, (pose, idx)) in views.iter().enumerate() {
        let ids: Vec<u64> = (0..npix).map(|px| (vi * npix + px) as u64).collect();
        let pred = render_rays(&problem, &params, &all_rays[vi], &ids, exec);
        let img = (0..npix)
            .map(|px| {
                idx.iter()
                    .enumerate()
                    .map(|(c, &r)| (pred[px * n_cfg + c] - captures.records[r].image[px]).abs())
                    .sum::<f64>()
                    / n_cfg as f64
            })
            .collect();
        residual_images.push((*pose, img));
    }
    let field = param.to_field(&params, occupancy.clone())?;
    let report = ReconReport {
        checkpoints,
        final_loss,
        iterations_run,
        stopped_early,
        degenerate: is_degenerate(captures, n_cfg),
        wall_clock_s: clock.now_s() - t_start,
        residual_images,
        params,
    };
    Ok((field, report))
}

/// Per training ray, the integrated `(σ, τ)` implied by the six-step
/// estimate of its pixel.
fn two_step_targets(
    captures: &CaptureSet,
    views: &[(RotationPose, Vec<usize>)],
    configs: &[PolariscopeConfig],
    train: &RaySet,
    npix: usize,
    cfg: &ReconConfig,
) -> Result<Vec<f64>> {
    let six = find_sixstep(configs)?;
    let kappa = phase_scale(1.0, cfg.optics.stress_optic, cfg.optics.wavelength);
    let mut out = Vec::with_capacity(2 * train.len());
    for &id in &train.ids {
        let (vi, px) = (id as usize / npix, id as usize % npix);
        let idx = &views[vi].1;
        let src = configs[0].source_intensity;
        let i: [f64; 6] = core::array::from_fn(|k| captures.records[idx[six[k]]].image[px]);
        let est = estimate_sixstep(&i, src);
        let r = est.params.delta / (2.0 * kappa);
        let (s, c) = crate::math::sin_cos(2.0 * est.params.theta);
        out.push(r * c);
        out.push(r * s);
    }
    Ok(out)
}

/// Integrated `(σ, τ)` of every ray, or its adjoint, for a parameterization
/// that is linear in its parameters.
fn linear_apply<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    rays: &RaySet,
    exec: &E,
) -> Vec<f64> {
    let chunks = rays.len().div_ceil(crate::adjoint::GRAD_CHUNK);
    let parts = exec.map_indexed(chunks, |c| {
        let mut ts = Vec::new();
        let mut scratch = Vec::new();
        let lo = c * crate::adjoint::GRAD_CHUNK;
        let hi = (lo + crate::adjoint::GRAD_CHUNK).min(rays.len());
        let mut out = Vec::with_capacity(2 * (hi - lo));
        for r in lo..hi {
            let ray = &rays.rays[r];
            let (cs, ct) = crate::adjoint::projection_coeffs(&ray.u, &ray.v);
            let (mut s, mut t) = (0.0, 0.0);
            if let Some((t0, t1)) = pb.mask.clip(ray.origin, ray.dir, ray.t_near, ray.t_far) {
                let dt = pb.march.samples(t0, t1, rays.ids[r], &mut ts);
                for &tt in &ts {
                    let p = ray.at(tt);
                    if pb.mask.contains(p) {
                        let v = pb.param.eval(params, p, &mut scratch);
                        s += dt * (0..5).map(|i| cs[i] * v[i]).sum::<f64>();
                        t += dt * (0..5).map(|i| ct[i] * v[i]).sum::<f64>();
                    }
                }
            }
            out.push(s);
            out.push(t);
        }
        out
    });
    parts.into_iter().flatten().collect()
}

fn linear_adjoint<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    rays: &RaySet,
    resid: &[f64],
    exec: &E,
) -> Vec<f64> {
    let n = params.len();
    let chunks = rays.len().div_ceil(crate::adjoint::GRAD_CHUNK);
    let parts = exec.map_indexed(chunks, |c| {
        let mut ts = Vec::new();
        let mut scratch = Vec::new();
        let mut g = alloc::vec![0.0; n];
        let lo = c * crate::adjoint::GRAD_CHUNK;
        let hi = (lo + crate::adjoint::GRAD_CHUNK).min(rays.len());
        for r in lo..hi {
            let ray = &rays.rays[r];
            let (cs, ct) = crate::adjoint::projection_coeffs(&ray.u, &ray.v);
            if let Some((t0, t1)) = pb.mask.clip(ray.origin, ray.dir, ray.t_near, ray.t_far) {
                let dt = pb.march.samples(t0, t1, rays.ids[r], &mut ts);
                let (rs, rt) = (resid[2 * r], resid[2 * r + 1]);
                let gc: [f64; 5] = core::array::from_fn(|i| dt * (rs * cs[i] + rt * ct[i]));
                for &tt in &ts {
                    let p = ray.at(tt);
                    if pb.mask.contains(p) {
                        pb.param.backprop(params, p, gc, &mut g, &mut scratch);
                    }
                }
            }
        }
        g
    });
    let mut g = alloc::vec![0.0; n];
    for part in parts {
        for (a, b) in g.iter_mut().zip(&part) {
            *a += b;
        }
    }
    g
}

/// Conjugate gradients on the normal equations, starting from `params`.
/// Returns the number of iterations run.
fn cgls<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &mut [f64],
    rays: &RaySet,
    targets: &[f64],
    iterations: usize,
    exec: &E,
    checkpoints: &mut Vec<Checkpoint>,
) -> Result<usize> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let ax = linear_apply(pb, params, rays, exec);
    let mut r: Vec<f64> = targets.iter().zip(&ax).map(|(t, a)| t - a).collect();
    let mut s = linear_adjoint(pb, params, rays, &r, exec);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;
    let mut it = 0;
    while it < iterations && gamma > 1e-24 * gamma0.max(1e-300) {
        let q = linear_apply(pb, &p, rays, exec);
        let qq = dot(&q, &q);
        if qq <= 0.0 || !qq.is_finite() {
            break;
        }
        let alpha = gamma / qq;
        for (x, d) in params.iter_mut().zip(&p) {
            *x += alpha * d;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = linear_adjoint(pb, params, rays, &r, exec);
        let g_new = dot(&s, &s);
        let beta = g_new / gamma;
        gamma = g_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        it += 1;
        checkpoints.push(Checkpoint {
            iteration: it,
            train_loss: sqrt(dot(&r, &r)),
            holdout_loss: None,
        });
        if !gamma.is_finite() {
            return Err(Error::NonFinite { ray: 0 });
        }
    }
    Ok(it)
}
