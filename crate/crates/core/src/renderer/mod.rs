//! Forward model: rays through the specimen, per-segment retarders, their
//! accumulation into one equivalent element, and the polariscope readout.
//!
//! The equivalent element of a stack of retarders is a unit quaternion-like
//! vector `q = (a, b, c, d)` standing for the Jones matrix
//!
//! ```text
//! [[a + ic, -d + ib],
//!  [d + ib,  a - ic]]
//! ```
//!
//! Along a ray the first segment met acts first on the light, so its matrix
//! is the right-most factor of the product.

mod capture;

pub use capture::{
    add_gaussian_noise, march_ray, ray_equiv, render_capture, CaptureRecord, CaptureSet,
    CaptureSpec, ForwardModel, MarchSettings, Optics, RAY_CHUNK,
};

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::math::{atan2, sin_cos, sinc, sqrt, Mat3, Vec3};
use crate::polarization::{
    intensity_from_jones_vec, jones_linear_polarizer, jones_quarter_wave, jones_retarder, JonesMat,
    JonesVec, C64,
};
use crate::stress::{principal_2d, ProjectedStress};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Camera orientation: pitch `rho1` about x, then yaw `rho2` about z.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotationPose {
    pub rho1: f64,
    pub rho2: f64,
}

impl RotationPose {
    pub fn new(rho1: f64, rho2: f64) -> Self {
        RotationPose { rho1, rho2 }
    }

    pub fn rotation(&self) -> Mat3 {
        Mat3::rot_z(self.rho2) * Mat3::rot_x(self.rho1)
    }
}

/// Orthographic ray bundle for one pose.
///
/// The image plane passes through the world origin and spans
/// `[-view_extent, view_extent]` along `u` (columns) and `v` (rows); each ray
/// covers `t ∈ [-√3 E, √3 E]`, enough to traverse the cube `[-E, E]³`.
/// Pixels are row-major. At pose `(0, 0)` the rays travel along `-z` with
/// `u = x` and `v = -y`, so image row 0 is the top (`+y`) edge.
pub fn rays_for_pose(
    pose: RotationPose,
    width: usize,
    height: usize,
    view_extent: f64,
) -> Vec<Ray> {
    let r = pose.rotation();
    let dir = r.mul_vec(&-Vec3::Z);
    let u = r.mul_vec(&Vec3::X);
    let v = r.mul_vec(&-Vec3::Y);
    let reach = sqrt(3.0) * view_extent;
    let mut out = Vec::with_capacity(width * height);
    for j in 0..height {
        let sv = ((j as f64 + 0.5) / height as f64 * 2.0 - 1.0) * view_extent;
        for i in 0..width {
            let su = ((i as f64 + 0.5) / width as f64 * 2.0 - 1.0) * view_extent;
            out.push(Ray {
                origin: u * su + v * sv,
                dir,
                u,
                v,
                t_near: -reach,
                t_far: reach,
            });
        }
    }
    out
}

/// Optical elements of a polariscope around the specimen, in light order:
/// polarizer `alpha1`, optional quarter-wave plate `qwp1`, specimen,
/// optional quarter-wave plate `qwp2`, analyzer `alpha2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolariscopeConfig {
    pub alpha1: f64,
    pub qwp1: Option<f64>,
    pub qwp2: Option<f64>,
    pub alpha2: f64,
    pub source_intensity: f64,
}

impl PolariscopeConfig {
    pub fn plane(alpha1: f64, alpha2: f64) -> Self {
        PolariscopeConfig {
            alpha1,
            qwp1: None,
            qwp2: None,
            alpha2,
            source_intensity: 1.0,
        }
    }

    pub fn circular(alpha1: f64, beta1: f64, beta2: f64, alpha2: f64) -> Self {
        PolariscopeConfig {
            alpha1,
            qwp1: Some(beta1),
            qwp2: Some(beta2),
            alpha2,
            source_intensity: 1.0,
        }
    }

    pub fn with_source(mut self, source_intensity: f64) -> Self {
        self.source_intensity = source_intensity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let angles = [Some(self.alpha1), self.qwp1, self.qwp2, Some(self.alpha2)];
        if angles.iter().flatten().any(|a| !a.is_finite()) {
            return Err(Error::Config("polariscope angles must be finite".into()));
        }
        if !(self.source_intensity > 0.0 && self.source_intensity.is_finite()) {
            return Err(Error::Config("source intensity must be positive".into()));
        }
        Ok(())
    }

    /// Light entering the specimen.
    pub fn input_field(&self) -> JonesVec {
        let e = JonesVec::linear(self.alpha1);
        match self.qwp1 {
            Some(b) => jones_quarter_wave(b).apply(&e),
            None => e,
        }
    }

    /// Row vector mapping the field leaving the specimen to the amplitude
    /// transmitted by the analyzer.
    pub fn output_row(&self) -> [C64; 2] {
        let (s, c) = sin_cos(self.alpha2);
        let l = [C64::new(c, 0.0), C64::new(s, 0.0)];
        match self.qwp2 {
            Some(b) => {
                let q = jones_quarter_wave(b).0;
                [l[0] * q[0] + l[1] * q[2], l[0] * q[1] + l[1] * q[3]]
            }
            None => l,
        }
    }
}

/// Per-segment retarder description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub delta: f64,
    pub theta: f64,
    pub dt: f64,
}

impl SegmentParams {
    /// `(cos δ/2, sin δ/2 sin 2θ, sin δ/2 cos 2θ)`.
    pub fn elements(&self) -> [f64; 3] {
        let (sh, ch) = sin_cos(0.5 * self.delta);
        let (s2, c2) = sin_cos(2.0 * self.theta);
        [ch, sh * s2, sh * c2]
    }
}

/// `2π C dt / λ`: retardance per unit principal-stress difference over one
/// segment is twice this.
#[inline]
pub fn phase_scale(dt: f64, stress_optic: f64, wavelength: f64) -> f64 {
    2.0 * PI * stress_optic * dt / wavelength
}

/// Retardance and isoclinic angle of one segment.
pub fn segment_params(
    p: &ProjectedStress,
    dt: f64,
    stress_optic: f64,
    wavelength: f64,
) -> SegmentParams {
    let (s1, s2, theta) = principal_2d(p);
    if s1 == s2 {
        return SegmentParams {
            delta: 0.0,
            theta: 0.0,
            dt,
        };
    }
    SegmentParams {
        delta: phase_scale(dt, stress_optic, wavelength) * (s1 - s2),
        theta,
        dt,
    }
}

/// Segment elements `(a, b, c)` from `x = κσ`, `y = κτ` without any angle:
/// `a = cos φ`, `b = y sinc φ`, `c = x sinc φ` with `φ = √(x² + y²)`. Smooth
/// everywhere, including the isotropic point.
#[inline]
pub fn elements_from_xy(x: f64, y: f64) -> [f64; 3] {
    let phi = sqrt(x * x + y * y);
    let (s, c) = crate::math::sin_cos(phi);
    let sc = if phi < 1e-4 { sinc(phi) } else { s / phi };
    [c, y * sc, x * sc]
}

/// Exponential of `i κ G` with `G = [[σ, τ], [τ, -σ]]` by scaling and
/// squaring around a Taylor series. Reference implementation only.
pub fn expm_oracle(p: &ProjectedStress, dt: f64, stress_optic: f64, wavelength: f64) -> JonesMat {
    let k = phase_scale(dt, stress_optic, wavelength);
    let (sg, tu) = (k * p.sigma(), k * p.tau());
    let a = JonesMat::new(
        C64::new(0.0, sg),
        C64::new(0.0, tu),
        C64::new(0.0, tu),
        C64::new(0.0, -sg),
    );
    let norm = sqrt(2.0 * (sg * sg + tu * tu));
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a.scale(C64::new(scale, 0.0));
    let mut term = JonesMat::IDENTITY;
    let mut sum = JonesMat::IDENTITY;
    for n in 1..=24 {
        term = (term * a).scale(C64::new(1.0 / n as f64, 0.0));
        sum = JonesMat(core::array::from_fn(|i| sum.0[i] + term.0[i]));
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Equivalent element of a retarder stack, `a² + b² + c² + d² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivJones {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl EquivJones {
    pub const IDENTITY: EquivJones = EquivJones {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        EquivJones { a, b, c, d }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        EquivJones {
            a: q[0],
            b: q[1],
            c: q[2],
            d: q[3],
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn to_jones(&self) -> JonesMat {
        JonesMat::new(
            C64::new(self.a, self.c),
            C64::new(-self.d, self.b),
            C64::new(self.d, self.b),
            C64::new(self.a, -self.c),
        )
    }

    /// Element of a retarder `(δ, θ)` combined with a rotation by `γ`:
    /// `a = cos(δ/2) cos 2γ`, `b = sin(δ/2) sin 2(θ-γ)`,
    /// `c = sin(δ/2) cos 2(θ-γ)`, `d = cos(δ/2) sin 2γ`.
    pub fn from_params(delta: f64, theta: f64, gamma: f64) -> Self {
        let (sh, ch) = sin_cos(0.5 * delta);
        let (sg, cg) = sin_cos(2.0 * gamma);
        let (st, ct) = sin_cos(2.0 * (theta - gamma));
        EquivJones {
            a: ch * cg,
            b: sh * st,
            c: sh * ct,
            d: ch * sg,
        }
    }

    /// One step of the accumulation: the stack so far followed (on the
    /// input side) by a segment with elements `e`.
    #[inline(always)]
    pub fn step(&self, e: [f64; 3]) -> EquivJones {
        let [ai, bi, ci] = e;
        let EquivJones { a, b, c, d } = *self;
        EquivJones {
            a: ai * a - bi * b - ci * c,
            b: ai * b + bi * a + ci * d,
            c: ai * c + ci * a - bi * d,
            d: ai * d - ci * b + bi * c,
        }
    }
}

/// Plain product of retarder matrices, first segment right-most.
pub fn accumulate_naive(segs: &[SegmentParams]) -> JonesMat {
    segs.iter().fold(JonesMat::IDENTITY, |acc, s| {
        jones_retarder(s.delta, s.theta) * acc
    })
}

/// Four-scalar accumulation of the same product.
pub fn accumulate_fast(segs: &[SegmentParams]) -> EquivJones {
    segs.iter()
        .rev()
        .fold(EquivJones::IDENTITY, |q, s| q.step(s.elements()))
}

/// Accumulation kernel on precomputed segment elements, in ray order.
pub fn accumulate_elements(elems: &[[f64; 3]]) -> EquivJones {
    elems
        .iter()
        .rev()
        .fold(EquivJones::IDENTITY, |q, &e| q.step(e))
}

/// Complex-product kernel on precomputed segment matrices, in ray order.
pub fn accumulate_matrices(mats: &[JonesMat]) -> JonesMat {
    mats.iter().fold(JonesMat::IDENTITY, |acc, m| *m * acc)
}

/// Retarder-plus-rotator parameters `(δ, θ, γ)` of an equivalent element.
pub fn equivalent_params(q: &EquivJones) -> Result<(f64, f64, f64)> {
    if q.norm_sq() == 0.0 || !q.norm_sq().is_finite() {
        return Err(Error::ZeroNorm);
    }
    let gamma = 0.5 * atan2(q.d, q.a);
    let theta_rel = 0.5 * atan2(q.b, q.c);
    let delta = 2.0 * atan2(sqrt(q.b * q.b + q.c * q.c), sqrt(q.a * q.a + q.d * q.d));
    Ok((delta, theta_rel + gamma, gamma))
}

/// First-order model: integrate `(σ, τ)` along the ray, then convert once.
pub fn linear_aggregate(
    segs: &[(ProjectedStress, f64)],
    stress_optic: f64,
    wavelength: f64,
) -> JonesMat {
    linear_equiv(segs, stress_optic, wavelength).to_jones()
}

/// [`linear_aggregate`] as an equivalent element (always `d = 0`).
pub fn linear_equiv(
    segs: &[(ProjectedStress, f64)],
    stress_optic: f64,
    wavelength: f64,
) -> EquivJones {
    let (mut sig, mut tau) = (0.0, 0.0);
    for (p, dt) in segs {
        sig += p.sigma() * dt;
        tau += p.tau() * dt;
    }
    let k = phase_scale(1.0, stress_optic, wavelength);
    let [a, b, c] = elements_from_xy(k * sig, k * tau);
    EquivJones { a, b, c, d: 0.0 }
}

/// Literal polariscope chain `LP · QWP? · J · QWP? · E`.
pub fn render_intensity(q: &EquivJones, cfg: &PolariscopeConfig) -> f64 {
    let mut e = cfg.input_field();
    e = q.to_jones().apply(&e);
    if let Some(b) = cfg.qwp2 {
        e = jones_quarter_wave(b).apply(&e);
    }
    e = jones_linear_polarizer(cfg.alpha2).apply(&e);
    cfg.source_intensity * intensity_from_jones_vec(&e)
}

/// The readout of one configuration reduced to four complex weights:
/// `I = source · |Σ_k q_k w_k|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub w: [C64; 4],
    pub source: f64,
}

impl Readout {
    pub fn new(cfg: &PolariscopeConfig) -> Self {
        let e = cfg.input_field();
        let r = cfg.output_row();
        let i = C64::new(0.0, 1.0);
        // basis matrices for a, b, c, d applied to e
        let basis = [
            [e.e_u, e.e_v],
            [i * e.e_v, i * e.e_u],
            [i * e.e_u, -i * e.e_v],
            [-e.e_v, e.e_u],
        ];
        let w = basis.map(|m| r[0] * m[0] + r[1] * m[1]);
        Readout {
            w,
            source: cfg.source_intensity,
        }
    }

    /// Transmitted amplitude.
    #[inline]
    pub fn amplitude(&self, q: &EquivJones) -> C64 {
        self.w[0] * q.a + self.w[1] * q.b + self.w[2] * q.c + self.w[3] * q.d
    }

    #[inline]
    pub fn intensity(&self, q: &EquivJones) -> f64 {
        self.source * self.amplitude(q).norm_sqr()
    }

    /// `∂I/∂q` given the amplitude from [`Readout::amplitude`].
    #[inline]
    pub fn intensity_grad(&self, amp: C64) -> [f64; 4] {
        let s = 2.0 * self.source;
        self.w.map(|w| s * (amp.conj() * w).re)
    }
}

/// Canonical intensity combinations `Ĩ1..Ĩ6` with `γ' = 2γ - θ`; each of the
/// sixteen standard configurations reads `½ ± ½ Ĩj` for exactly one `j`.
pub fn six_canonical(delta: f64, theta: f64, gamma: f64) -> [f64; 6] {
    let gp = 2.0 * gamma - theta;
    let (sd, cd) = sin_cos(delta);
    let (s2t, c2t) = sin_cos(2.0 * theta);
    let (s2g, c2g) = sin_cos(2.0 * gp);
    [
        cd,
        sd * c2t,
        sd * s2t,
        sd * s2g,
        s2t * c2g + cd * c2t * s2g,
        c2t * c2g - cd * s2t * s2g,
    ]
}

/// The sixteen circular-polariscope configurations: `α1 = π/2`,
/// `β1 ∈ {π/4, π/2}`, `β2 ∈ {0, π/4}`, `α2 ∈ {0, π/4, π/2, 3π/4}`, with `α2`
/// varying fastest.
pub fn sixteen_configs(source_intensity: f64) -> Vec<PolariscopeConfig> {
    let mut out = Vec::with_capacity(16);
    for b1 in [FRAC_PI_4, FRAC_PI_2] {
        for b2 in [0.0, FRAC_PI_4] {
            for k in 0..4 {
                out.push(
                    PolariscopeConfig::circular(FRAC_PI_2, b1, b2, k as f64 * FRAC_PI_4)
                        .with_source(source_intensity),
                );
            }
        }
    }
    out
}

/// For each of the sixteen configurations: the canonical index `j` (0-based)
/// and the sign `s` such that the intensity is `source (1 + s Ĩj) / 2`.
pub const SIXTEEN_CANONICAL_MAP: [(usize, f64); 16] = [
    (2, 1.0),
    (0, -1.0),
    (2, -1.0),
    (0, 1.0),
    (0, 1.0),
    (1, -1.0),
    (0, -1.0),
    (1, 1.0),
    (5, -1.0),
    (3, 1.0),
    (5, 1.0),
    (3, -1.0),
    (3, -1.0),
    (4, -1.0),
    (3, 1.0),
    (4, 1.0),
];

/// Indices into [`sixteen_configs`] of the six-step scheme; configuration
/// `k` of the scheme reads `(1 + Ĩ_{k+1}) / 2`.
pub const SIXSTEP_INDICES: [usize; 6] = [4, 7, 0, 9, 15, 10];

pub fn sixstep_configs(source_intensity: f64) -> Vec<PolariscopeConfig> {
    let all = sixteen_configs(source_intensity);
    SIXSTEP_INDICES.iter().map(|&i| all[i]).collect()
}

/// The ten-measurement scheme for a single retarder: four plane-polariscope
/// and six circular-polariscope settings.
pub fn table_2d_configs(source_intensity: f64) -> Vec<PolariscopeConfig> {
    let p8 = PI / 8.0;
    let rows = [
        PolariscopeConfig::plane(FRAC_PI_2, 0.0),
        PolariscopeConfig::plane(5.0 * p8, p8),
        PolariscopeConfig::plane(3.0 * FRAC_PI_4, FRAC_PI_4),
        PolariscopeConfig::plane(7.0 * p8, 3.0 * p8),
        PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, FRAC_PI_2),
        PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, 0.0),
        PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, 0.0, 0.0),
        PolariscopeConfig::circular(FRAC_PI_2, 3.0 * FRAC_PI_4, FRAC_PI_4, FRAC_PI_4),
        PolariscopeConfig::circular(FRAC_PI_2, FRAC_PI_4, 0.0, 0.0),
        PolariscopeConfig::circular(FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4, FRAC_PI_4),
    ];
    rows.iter()
        .map(|c| c.with_source(source_intensity))
        .collect()
}
