//! Reverse-mode derivatives of the intensity loss with respect to field
//! parameters, written out by hand.
//!
//! The chain for one ray is
//! params → free stress components at each sample → `(σ, τ)` in the ray
//! plane → segment elements `(a, b, c)` → four-scalar recurrence → readout
//! amplitude per configuration → L1 loss. The forward pass keeps the
//! recurrence history of the ray and the backward pass walks it in reverse;
//! field values are recomputed during the backward sweep.

mod params;

pub use params::{NetParam, Parameterization, VoxelParam, FREE_COMPONENTS};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimation::abs_jones_residual;
use crate::exec::Executor;
use crate::math::{sinc, sinc_deriv_over_x, sqrt, Vec3};
use crate::renderer::{
    elements_from_xy, phase_scale, EquivJones, ForwardModel, MarchSettings, Optics,
    PolariscopeConfig, Ray, Readout,
};
use crate::rng::SplitMix64;
use crate::stress::OccupancyMask;

/// What the L1 loss compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Raw intensities.
    #[default]
    Intensity,
    /// Intensities mapped to `2 I / source - 1`, the scale of the canonical
    /// expressions.
    Canonical,
}

/// Rays per gradient chunk; partial results are reduced in chunk order.
pub const GRAD_CHUNK: usize = 64;

/// Everything about the rendering problem except the parameter values.
pub struct Problem<'a, P: Parameterization + ?Sized> {
    pub param: &'a P,
    pub mask: &'a OccupancyMask,
    pub readouts: Vec<Readout>,
    pub march: MarchSettings,
    pub optics: Optics,
    pub model: ForwardModel,
    pub loss: LossKind,
}

impl<'a, P: Parameterization + ?Sized> Problem<'a, P> {
    pub fn new(
        param: &'a P,
        mask: &'a OccupancyMask,
        configs: &[PolariscopeConfig],
        march: MarchSettings,
        optics: Optics,
    ) -> Self {
        Problem {
            param,
            mask,
            readouts: configs.iter().map(Readout::new).collect(),
            march,
            optics,
            model: ForwardModel::General,
            loss: LossKind::Intensity,
        }
    }

    pub fn with_model(mut self, model: ForwardModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    fn loss_scale(&self, c: usize) -> f64 {
        match self.loss {
            LossKind::Intensity => 1.0,
            LossKind::Canonical => 2.0 / self.readouts[c].source,
        }
    }
}

/// Rays together with their ids (which key the jitter streams) and targets,
/// `readouts.len()` values per ray.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'b> {
    pub rays: &'b [Ray],
    pub ids: &'b [u64],
    pub targets: &'b [f64],
}

/// Coefficients of `σ = ½(uᵀSu - vᵀSv)` and `τ = uᵀSv` in the free
/// components `(sxx, syy, sxy, syz, szx)` of a trace-free `S`.
pub fn projection_coeffs(u: &Vec3, v: &Vec3) -> ([f64; 5], [f64; 5]) {
    let quad = |a: &Vec3, b: &Vec3| {
        let [ax, ay, az] = a.0;
        let [bx, by, bz] = b.0;
        [
            ax * bx - az * bz,
            ay * by - az * bz,
            ax * by + ay * bx,
            ay * bz + az * by,
            az * bx + ax * bz,
        ]
    };
    let uu = quad(u, u);
    let vv = quad(v, v);
    let sig = core::array::from_fn(|i| 0.5 * (uu[i] - vv[i]));
    (sig, quad(u, v))
}

#[inline]
fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4]
}

/// Segment elements and their Jacobian `∂(a, b, c) / ∂(x, y)`.
#[inline]
pub fn elements_jacobian(x: f64, y: f64) -> ([f64; 3], [[f64; 2]; 3]) {
    let phi = sqrt(x * x + y * y);
    let e = elements_from_xy(x, y);
    let sc = sinc(phi);
    let h = sinc_deriv_over_x(phi);
    let jac = [
        [-x * sc, -y * sc],
        [x * y * h, sc + y * y * h],
        [sc + x * x * h, x * y * h],
    ];
    (e, jac)
}

/// Gradient of one recurrence step `k' = k.step(e)`: returns `(∂L/∂e, ∂L/∂k)`
/// given `∂L/∂k'`.
#[inline]
pub fn step_backward(k: &EquivJones, e: [f64; 3], g: [f64; 4]) -> ([f64; 3], [f64; 4]) {
    let EquivJones { a, b, c, d } = *k;
    let [ai, bi, ci] = e;
    let [ga, gb, gc, gd] = g;
    let ge = [
        a * ga + b * gb + c * gc + d * gd,
        -b * ga + a * gb - d * gc + c * gd,
        -c * ga + d * gb + a * gc - b * gd,
    ];
    let gk = [
        ai * ga + bi * gb + ci * gc,
        -bi * ga + ai * gb - ci * gd,
        -ci * ga + ai * gc + bi * gd,
        ci * gb - bi * gc + ai * gd,
    ];
    (ge, gk)
}

/// Per-worker buffers reused across rays.
#[derive(Default)]
struct Scratch {
    ts: Vec<f64>,
    xy: Vec<[f64; 2]>,
    inside: Vec<bool>,
    hist: Vec<EquivJones>,
    field: Vec<f64>,
}

/// Equivalent element of one ray under the current parameters, together
/// with what the backward pass needs.
fn ray_forward<P: Parameterization + ?Sized>(
    pb: &Problem<'_, P>,
    params: &[f64],
    ray: &Ray,
    id: u64,
    s: &mut Scratch,
) -> (EquivJones, f64, [f64; 5], [f64; 5], f64) {
    s.ts.clear();
    s.xy.clear();
    s.inside.clear();
    s.hist.clear();
    let (cs, ct) = projection_coeffs(&ray.u, &ray.v);
    let Some((t0, t1)) = pb.mask.clip(ray.origin, ray.dir, ray.t_near, ray.t_far) else {
        s.hist.push(EquivJones::IDENTITY);
        return (EquivJones::IDENTITY, 0.0, cs, ct, 0.0);
    };
    let dt = pb.march.samples(t0, t1, id, &mut s.ts);
    let (kappa, scale) = match pb.model {
        ForwardModel::General => (
            phase_scale(dt, pb.optics.stress_optic, pb.optics.wavelength),
            1.0,
        ),
        ForwardModel::Linear => (
            phase_scale(1.0, pb.optics.stress_optic, pb.optics.wavelength),
            dt,
        ),
    };
    let (mut sig_sum, mut tau_sum) = (0.0, 0.0);
    for i in 0..s.ts.len() {
        let p = ray.at(s.ts[i]);
        let inside = pb.mask.contains(p);
        let (sig, tau) = if inside {
            let c = pb.param.eval(params, p, &mut s.field);
            (dot5(&cs, &c), dot5(&ct, &c))
        } else {
            (0.0, 0.0)
        };
        s.inside.push(inside);
        s.xy.push([kappa * sig, kappa * tau]);
        sig_sum += sig;
        tau_sum += tau;
    }
    let q = match pb.model {
        ForwardModel::General => {
            let mut q = EquivJones::IDENTITY;
            s.hist.push(q);
            for xy in s.xy.iter().rev() {
                q = q.step(elements_from_xy(xy[0], xy[1]));
                s.hist.push(q);
            }
            q
        }
        ForwardModel::Linear => {
            let [a, b, c] = elements_from_xy(kappa * scale * sig_sum, kappa * scale * tau_sum);
            s.xy.push([kappa * scale * sig_sum, kappa * scale * tau_sum]);
            EquivJones { a, b, c, d: 0.0 }
        }
    };
    (q, kappa, cs, ct, scale)
}

/// Loss contribution of one ray; with `grad` present, also its gradient
/// (already divided by `count`).
#[allow(clippy::too_many_arguments)]
fn ray_loss<P: Parameterization + ?Sized>(
    pb: &Problem<'_, P>,
    params: &[f64],
    ray: &Ray,
    id: u64,
    targets: &[f64],
    count: f64,
    grad: Option<&mut [f64]>,
    s: &mut Scratch,
) -> Result<f64> {
    let (q, kappa, cs, ct, scale) = ray_forward(pb, params, ray, id, s);
    let mut loss = 0.0;
    let mut gq = [0.0; 4];
    for (c, (ro, &target)) in pb.readouts.iter().zip(targets).enumerate() {
        let amp = ro.amplitude(&q);
        let r = ro.source * amp.norm_sqr() - target;
        let w = pb.loss_scale(c);
        loss += w * r.abs();
        if r != 0.0 {
            let gi = w * r.signum() / count;
            for (g, d) in gq.iter_mut().zip(ro.intensity_grad(amp)) {
                *g += gi * d;
            }
        }
    }
    if !loss.is_finite() || !q.norm_sq().is_finite() {
        return Err(Error::NonFinite { ray: id as usize });
    }
    let Some(grad) = grad else {
        return Ok(loss);
    };
    if s.ts.is_empty() {
        return Ok(loss);
    }
    let n = s.ts.len();
    match pb.model {
        ForwardModel::General => {
            let mut g = gq;
            // hist[j] is the product after j steps; step j consumed segment n-1-j
            for j in (0..n).rev() {
                let seg = n - 1 - j;
                let [x, y] = s.xy[seg];
                let (e, jac) = elements_jacobian(x, y);
                let (ge, gk) = step_backward(&s.hist[j], e, g);
                g = gk;
                if !s.inside[seg] {
                    continue;
                }
                let gx = ge[0] * jac[0][0] + ge[1] * jac[1][0] + ge[2] * jac[2][0];
                let gy = ge[0] * jac[0][1] + ge[1] * jac[1][1] + ge[2] * jac[2][1];
                let (gs, gt) = (kappa * gx, kappa * gy);
                let gc: [f64; 5] = core::array::from_fn(|i| gs * cs[i] + gt * ct[i]);
                pb.param
                    .backprop(params, ray.at(s.ts[seg]), gc, grad, &mut s.field);
            }
        }
        ForwardModel::Linear => {
            let [x, y] = s.xy[n];
            let (_, jac) = elements_jacobian(x, y);
            let gx = gq[0] * jac[0][0] + gq[1] * jac[1][0] + gq[2] * jac[2][0];
            let gy = gq[0] * jac[0][1] + gq[1] * jac[1][1] + gq[2] * jac[2][1];
            let (gs, gt) = (kappa * scale * gx, kappa * scale * gy);
            let gc: [f64; 5] = core::array::from_fn(|i| gs * cs[i] + gt * ct[i]);
            for i in 0..n {
                if s.inside[i] {
                    pb.param
                        .backprop(params, ray.at(s.ts[i]), gc, grad, &mut s.field);
                }
            }
        }
    }
    Ok(loss)
}

fn check_batch<P: Parameterization + ?Sized>(
    pb: &Problem<'_, P>,
    params: &[f64],
    batch: &Batch<'_>,
) -> Result<()> {
    if batch.rays.is_empty() {
        return Err(Error::Config("empty ray batch".into()));
    }
    if params.len() != pb.param.n_params() {
        return Err(Error::ShapeMismatch {
            expected: pb.param.n_params(),
            got: params.len(),
        });
    }
    if batch.ids.len() != batch.rays.len() {
        return Err(Error::ShapeMismatch {
            expected: batch.rays.len(),
            got: batch.ids.len(),
        });
    }
    let want = batch.rays.len() * pb.readouts.len();
    if batch.targets.len() != want {
        return Err(Error::ShapeMismatch {
            expected: want,
            got: batch.targets.len(),
        });
    }
    Ok(())
}

/// Mean L1 loss over all `(ray, configuration)` pairs and its exact
/// gradient with respect to `params`.
pub fn forward_backward<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    batch: &Batch<'_>,
    exec: &E,
) -> Result<(f64, Vec<f64>)> {
    check_batch(pb, params, batch)?;
    let nc = pb.readouts.len();
    let count = (batch.rays.len() * nc) as f64;
    let chunks = batch.rays.len().div_ceil(GRAD_CHUNK);
    let parts = exec.map_indexed(chunks, |c| -> Result<(f64, Vec<f64>)> {
        let mut grad = alloc::vec![0.0; params.len()];
        let mut s = Scratch::default();
        let mut loss = 0.0;
        let hi = ((c + 1) * GRAD_CHUNK).min(batch.rays.len());
        for r in c * GRAD_CHUNK..hi {
            let t = &batch.targets[r * nc..(r + 1) * nc];
            loss += ray_loss(
                pb,
                params,
                &batch.rays[r],
                batch.ids[r],
                t,
                count,
                Some(&mut grad),
                &mut s,
            )?;
        }
        Ok((loss, grad))
    });
    let mut total = 0.0;
    let mut grad = alloc::vec![0.0; params.len()];
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "non-finite gradient at parameter {i}"
        )));
    }
    Ok((total / count, grad))
}

/// Mean L1 loss only.
pub fn forward_loss<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    batch: &Batch<'_>,
    exec: &E,
) -> Result<f64> {
    check_batch(pb, params, batch)?;
    let nc = pb.readouts.len();
    let count = (batch.rays.len() * nc) as f64;
    let chunks = batch.rays.len().div_ceil(GRAD_CHUNK);
    let parts = exec.map_indexed(chunks, |c| -> Result<f64> {
        let mut s = Scratch::default();
        let mut loss = 0.0;
        let hi = ((c + 1) * GRAD_CHUNK).min(batch.rays.len());
        for r in c * GRAD_CHUNK..hi {
            let t = &batch.targets[r * nc..(r + 1) * nc];
            loss += ray_loss(
                pb,
                params,
                &batch.rays[r],
                batch.ids[r],
                t,
                count,
                None,
                &mut s,
            )?;
        }
        Ok(loss)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / count)
}

/// Rendered intensities, `readouts.len()` per ray.
pub fn render_rays<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    rays: &[Ray],
    ids: &[u64],
    exec: &E,
) -> Vec<f64> {
    let chunks = rays.len().div_ceil(GRAD_CHUNK);
    let parts = exec.map_indexed(chunks, |c| {
        let mut s = Scratch::default();
        let hi = ((c + 1) * GRAD_CHUNK).min(rays.len());
        let mut out = Vec::with_capacity((hi - c * GRAD_CHUNK) * pb.readouts.len());
        for r in c * GRAD_CHUNK..hi {
            let (q, ..) = ray_forward(pb, params, &rays[r], ids[r], &mut s);
            out.extend(pb.readouts.iter().map(|ro| ro.intensity(&q)));
        }
        out
    });
    parts.into_iter().flatten().collect()
}

/// Central differences on `n_probes` randomly chosen parameters; returns
/// the largest relative error against [`forward_backward`].
///
/// The relative error of a probe is `|fd - g| / max(|fd|, |g|)`, or the
/// absolute difference when both are below `1e-10`.
pub fn finite_diff_check<P: Parameterization + ?Sized, E: Executor>(
    pb: &Problem<'_, P>,
    params: &[f64],
    batch: &Batch<'_>,
    n_probes: usize,
    h: f64,
    seed: u64,
    exec: &E,
) -> Result<f64> {
    let (_, grad) = forward_backward(pb, params, batch, exec)?;
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut work = params.to_vec();
    for _ in 0..n_probes {
        let i = rng.below(params.len());
        work[i] = params[i] + h;
        let lp = forward_loss(pb, &work, batch, exec)?;
        work[i] = params[i] - h;
        let lm = forward_loss(pb, &work, batch, exec)?;
        work[i] = params[i];
        let fd = (lp - lm) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs());
        let err = if denom < 1e-10 {
            (fd - grad[i]).abs()
        } else {
            (fd - grad[i]).abs() / denom
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 3e-4;

    pub fn new(n: usize) -> Self {
        Self::with_lr(n, Self::DEFAULT_LR)
    }

    pub fn with_lr(n: usize, lr: f64) -> Self {
        AdamState {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        adam_step(self, params, grads)
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    let n = state.m.len();
    if params.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: params.len(),
        });
    }
    if grads.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - powi(state.beta1, t);
    let bc2 = 1.0 - powi(state.beta2, t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= state.lr * mh / (sqrt(vh) + state.eps);
    }
    Ok(())
}

fn powi(x: f64, n: i32) -> f64 {
    let mut r = 1.0;
    for _ in 0..n.min(100_000) {
        r *= x;
        if r == 0.0 {
            break;
        }
    }
    r
}

/// Mean absolute deviation.
pub fn loss_l1_intensity(rendered: &[f64], target: &[f64]) -> Result<f64> {
    if rendered.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: rendered.len(),
            got: target.len(),
        });
    }
    if rendered.is_empty() {
        return Ok(0.0);
    }
    Ok(rendered
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / rendered.len() as f64)
}

/// Mean of [`abs_jones_residual`] over paired elements.
pub fn loss_abs_jones(q_est: &[EquivJones], q_target: &[EquivJones]) -> Result<f64> {
    if q_est.len() != q_target.len() {
        return Err(Error::ShapeMismatch {
            expected: q_est.len(),
            got: q_target.len(),
        });
    }
    if q_est.is_empty() {
        return Ok(0.0);
    }
    Ok(q_est
        .iter()
        .zip(q_target)
        .map(|(a, b)| abs_jones_residual(a, b))
        .sum::<f64>()
        / q_est.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_backward_matches_finite_differences() {
        let k = EquivJones::from_params(0.9, 0.3, 0.2);
        let e = elements_from_xy(0.4, -0.7);
        let g = [0.3, -0.2, 0.5, 0.9];
        let f = |k: &EquivJones, e: [f64; 3]| {
            let o = k.step(e).to_array();
            (0..4).map(|i| o[i] * g[i]).sum::<f64>()
        };
        let (ge, gk) = step_backward(&k, e, g);
        let h = 1e-6;
        for i in 0..3 {
            let (mut ep, mut em) = (e, e);
            ep[i] += h;
            em[i] -= h;
            assert!(((f(&k, ep) - f(&k, em)) / (2.0 * h) - ge[i]).abs() < 1e-9);
        }
        for i in 0..4 {
            let (mut kp, mut km) = (k.to_array(), k.to_array());
            kp[i] += h;
            km[i] -= h;
            let fd =
                (f(&EquivJones::from_array(kp), e) - f(&EquivJones::from_array(km), e)) / (2.0 * h);
            assert!((fd - gk[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn element_jacobian_matches_finite_differences() {
        for &(x, y) in &[(0.3, -0.8), (1e-3, 2e-3), (0.0, 0.0), (-2.0, 1.5)] {
            let (_, jac) = elements_jacobian(x, y);
            let h = 1e-6;
            for k in 0..3 {
                let dx =
                    (elements_from_xy(x + h, y)[k] - elements_from_xy(x - h, y)[k]) / (2.0 * h);
                let dy =
                    (elements_from_xy(x, y + h)[k] - elements_from_xy(x, y - h)[k]) / (2.0 * h);
                assert!((dx - jac[k][0]).abs() < 1e-8, "({x},{y}) k={k}");
                assert!((dy - jac[k][1]).abs() < 1e-8, "({x},{y}) k={k}");
            }
        }
    }

    #[test]
    fn adam_first_step_and_zero_grad() {
        let mut st = AdamState::new(3);
        let mut p = [1.0, 2.0, 3.0];
        adam_step(&mut st, &mut p, &[1.0; 3]).unwrap();
        for (a, b) in p.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - (b - 3e-4)).abs() < 1e-9);
        }
        let mut st = AdamState::new(2);
        let mut p = [0.5, -0.5];
        adam_step(&mut st, &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, [0.5, -0.5]);
        assert!(adam_step(&mut st, &mut p, &[0.0]).is_err());
    }

    #[test]
    fn projection_coeffs_match_sandwich() {
        let u = Vec3::new(0.6, 0.8, 0.0);
        let v = Vec3::new(0.0, 0.0, 1.0);
        let c = [0.3, -0.2, 0.5, 0.1, -0.4];
        let s = crate::stress::StressTensor::from_trace_free(c);
        let (cs, ct) = projection_coeffs(&u, &v);
        assert!((dot5(&cs, &c) - 0.5 * (s.sandwich(&u, &u) - s.sandwich(&v, &v))).abs() < 1e-15);
        assert!((dot5(&ct, &c) - s.sandwich(&u, &v)).abs() < 1e-15);
    }
}
