//! Stress tensors, their projection onto a ray's transverse plane, and the
//! field representations that the renderer samples.

mod coordnet;
mod field;
mod knn;

pub use coordnet::{CoordNet, NetArch, NetShape, NET_OUTPUTS};
pub use field::{
    lattice_point, trilinear_stencil, validate_lattice, Disk, FieldKind, FieldSampler, Grid,
    OccupancyMask, Stencil, StressField,
};
pub use knn::ScatteredKnn;

use core::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::math::{atan2, sqrt, Mat3, Vec3};

/// Symmetric Cartesian stress tensor. Component order everywhere in this
/// crate (and in the file formats) is `sxx, syy, szz, sxy, syz, szx`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StressTensor {
    pub sxx: f64,
    pub syy: f64,
    pub szz: f64,
    pub sxy: f64,
    pub syz: f64,
    pub szx: f64,
}

impl StressTensor {
    pub const ZERO: StressTensor = StressTensor {
        sxx: 0.0,
        syy: 0.0,
        szz: 0.0,
        sxy: 0.0,
        syz: 0.0,
        szx: 0.0,
    };

    pub fn from_array(c: [f64; 6]) -> Self {
        StressTensor {
            sxx: c[0],
            syy: c[1],
            szz: c[2],
            sxy: c[3],
            syz: c[4],
            szx: c[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.sxx, self.syy, self.szz, self.sxy, self.syz, self.szx]
    }

    pub fn diag(x: f64, y: f64, z: f64) -> Self {
        StressTensor {
            sxx: x,
            syy: y,
            szz: z,
            ..Self::ZERO
        }
    }

    /// Build from the five free components of a trace-free tensor
    /// `(sxx, syy, sxy, syz, szx)`; `szz = -sxx - syy`.
    pub fn from_trace_free(c: [f64; 5]) -> Self {
        StressTensor {
            sxx: c[0],
            syy: c[1],
            szz: -c[0] - c[1],
            sxy: c[2],
            syz: c[3],
            szx: c[4],
        }
    }

    pub fn to_mat3(&self) -> Mat3 {
        Mat3([
            [self.sxx, self.sxy, self.szx],
            [self.sxy, self.syy, self.syz],
            [self.szx, self.syz, self.szz],
        ])
    }

    /// Symmetric part of `m`.
    pub fn from_mat3(m: &Mat3) -> Self {
        let m = &m.0;
        StressTensor {
            sxx: m[0][0],
            syy: m[1][1],
            szz: m[2][2],
            sxy: 0.5 * (m[0][1] + m[1][0]),
            syz: 0.5 * (m[1][2] + m[2][1]),
            szx: 0.5 * (m[2][0] + m[0][2]),
        }
    }

    pub fn trace(&self) -> f64 {
        self.sxx + self.syy + self.szz
    }

    /// Squared Frobenius norm of the full 3x3 matrix.
    pub fn norm_sq(&self) -> f64 {
        self.sxx * self.sxx
            + self.syy * self.syy
            + self.szz * self.szz
            + 2.0 * (self.sxy * self.sxy + self.syz * self.syz + self.szx * self.szx)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `S - (tr S / 3) I`.
    pub fn deviatoric(&self) -> StressTensor {
        let m = self.trace() / 3.0;
        StressTensor {
            sxx: self.sxx - m,
            syy: self.syy - m,
            szz: self.szz - m,
            ..*self
        }
    }

    /// Apply the quadratic form: `aᵀ S b`.
    #[inline]
    pub fn sandwich(&self, a: &Vec3, b: &Vec3) -> f64 {
        let [ax, ay, az] = a.0;
        let [bx, by, bz] = b.0;
        self.sxx * ax * bx
            + self.syy * ay * by
            + self.szz * az * bz
            + self.sxy * (ax * by + ay * bx)
            + self.syz * (ay * bz + az * by)
            + self.szx * (az * bx + ax * bz)
    }
}

impl Add for StressTensor {
    type Output = StressTensor;
    fn add(self, o: StressTensor) -> StressTensor {
        let (a, b) = (self.to_array(), o.to_array());
        StressTensor::from_array(core::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Sub for StressTensor {
    type Output = StressTensor;
    fn sub(self, o: StressTensor) -> StressTensor {
        let (a, b) = (self.to_array(), o.to_array());
        StressTensor::from_array(core::array::from_fn(|i| a[i] - b[i]))
    }
}

impl Mul<f64> for StressTensor {
    type Output = StressTensor;
    fn mul(self, s: f64) -> StressTensor {
        StressTensor::from_array(self.to_array().map(|v| v * s))
    }
}

/// Restriction of a stress tensor to the plane spanned by `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectedStress {
    pub s_uu: f64,
    pub s_vv: f64,
    pub s_uv: f64,
}

impl ProjectedStress {
    pub fn new(s_uu: f64, s_vv: f64, s_uv: f64) -> Self {
        Self { s_uu, s_vv, s_uv }
    }

    /// Half the normal-stress difference, `(s_uu - s_vv) / 2`.
    #[inline]
    pub fn sigma(&self) -> f64 {
        0.5 * (self.s_uu - self.s_vv)
    }

    /// The in-plane shear `s_uv`.
    #[inline]
    pub fn tau(&self) -> f64 {
        self.s_uv
    }
}

const BASIS_TOL: f64 = 1e-10;

pub fn check_orthonormal(u: &Vec3, v: &Vec3) -> Result<()> {
    if (u.norm() - 1.0).abs() > BASIS_TOL
        || (v.norm() - 1.0).abs() > BASIS_TOL
        || u.dot(v).abs() > BASIS_TOL
    {
        return Err(Error::NonOrthonormalBasis);
    }
    Ok(())
}

/// `(uᵀSu, vᵀSv, uᵀSv)` for an orthonormal pair `(u, v)`.
pub fn project_stress(s: &StressTensor, u: &Vec3, v: &Vec3) -> Result<ProjectedStress> {
    check_orthonormal(u, v)?;
    Ok(project_unchecked(s, u, v))
}

#[inline]
pub fn project_unchecked(s: &StressTensor, u: &Vec3, v: &Vec3) -> ProjectedStress {
    ProjectedStress {
        s_uu: s.sandwich(u, u),
        s_vv: s.sandwich(v, v),
        s_uv: s.sandwich(u, v),
    }
}

/// Principal stresses `σ1 ≥ σ2` of a projected tensor and the angle
/// `θ ∈ (-π/2, π/2]` of the `σ1` eigenvector measured from `u` towards `v`.
///
/// The isotropic case returns `θ = 0`.
pub fn principal_2d(p: &ProjectedStress) -> (f64, f64, f64) {
    let mean = 0.5 * (p.s_uu + p.s_vv);
    let half_diff = p.sigma();
    let r = sqrt(half_diff * half_diff + p.s_uv * p.s_uv);
    if r == 0.0 {
        return (mean, mean, 0.0);
    }
    let mut theta = 0.5 * atan2(2.0 * p.s_uv, p.s_uu - p.s_vv);
    if theta <= -core::f64::consts::FRAC_PI_2 {
        theta += core::f64::consts::PI;
    }
    (mean + r, mean - r, theta)
}

/// `R S Rᵀ`.
pub fn rotate_tensor(s: &StressTensor, rm: &Mat3) -> Result<StressTensor> {
    if !rm.is_rotation(1e-10) {
        return Err(Error::NotARotation);
    }
    Ok(rotate_unchecked(s, rm))
}

pub fn rotate_unchecked(s: &StressTensor, rm: &Mat3) -> StressTensor {
    StressTensor::from_mat3(&(*rm * s.to_mat3() * rm.transpose()))
}

/// Replace `szz` so that the trace vanishes.
pub fn enforce_trace_free(s: &StressTensor) -> StressTensor {
    StressTensor {
        szz: -s.sxx - s.syy,
        ..*s
    }
}

/// Plane stress in a disk of radius `r` and thickness `h` compressed by a
/// load `l` applied at `(0, ±r)`.
///
/// Points outside the disk give the zero tensor. Within `1e-9 r` of a load
/// point the distances are floored so the result stays finite.
pub fn disk_stress(x: f64, y: f64, l: f64, r: f64, h: f64) -> StressTensor {
    if x * x + y * y > r * r {
        return StressTensor::ZERO;
    }
    let floor = (1e-9 * r) * (1e-9 * r);
    let ym = r - y;
    let yp = r + y;
    let r1 = (ym * ym + x * x).max(floor);
    let r2 = (yp * yp + x * x).max(floor);
    let (r1_4, r2_4) = (r1 * r1, r2 * r2);
    let k = 2.0 * l / (core::f64::consts::PI * h);
    let inv_d = 0.5 / r;
    let x2 = x * x;
    let sxx = -k * (x2 * ym / r1_4 + x2 * yp / r2_4 - inv_d);
    let syy = -k * (ym * ym * ym / r1_4 + yp * yp * yp / r2_4 - inv_d);
    let sxy = k * (x * ym * ym / r1_4 - x * yp * yp / r2_4);
    StressTensor {
        sxx,
        syy,
        sxy,
        ..StressTensor::ZERO
    }
}
