//! Jones and Mueller calculus primitives.
//!
//! Angles are measured from the `u` axis of the ray-orthogonal basis towards
//! `v`. Jones matrices carry no normalized global phase; anything observable
//! goes through [`intensity_from_jones_vec`] or a Mueller image, both of
//! which are phase invariant.
//!
//! Phase convention: an element with retardance `δ` and axis `θ` is
//! `cos(δ/2) I + i sin(δ/2) [[cos 2θ, sin 2θ], [sin 2θ, -cos 2θ]]`, and a
//! quarter-wave plate is that same element at `δ = π/2` (up to global phase),
//! i.e. `R(-β) diag(1, -i) R(β)`. With the Stokes transform
//! `A = [[1,0,0,1],[1,0,0,-1],[0,1,1,0],[0,i,-i,0]]` this reproduces the
//! classical Mueller tables of the quarter-wave plate, the linear retarder and
//! the rotator.

use core::ops::Mul;

use num_complex::Complex64;

use crate::math::{sin_cos, sqrt};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Complex field amplitudes on the ray-orthogonal basis `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVec {
    pub e_u: C64,
    pub e_v: C64,
}

impl JonesVec {
    pub fn new(e_u: C64, e_v: C64) -> Self {
        Self { e_u, e_v }
    }

    /// Unit-amplitude linear polarization at angle `alpha`.
    pub fn linear(alpha: f64) -> Self {
        let (s, c) = sin_cos(alpha);
        Self::new(C64::new(c, 0.0), C64::new(s, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.e_u.is_finite() && self.e_v.is_finite()
    }
}

/// Complex 2x2 polarization operator, row-major `[m00, m01, m10, m11]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMat(pub [C64; 4]);

impl JonesMat {
    pub const IDENTITY: JonesMat = JonesMat([ONE, ZERO, ZERO, ONE]);

    pub fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        JonesMat([m00, m01, m10, m11])
    }

    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> JonesMat {
        let m = &self.0;
        JonesMat([m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()])
    }

    pub fn apply(&self, e: &JonesVec) -> JonesVec {
        let m = &self.0;
        JonesVec::new(m[0] * e.e_u + m[1] * e.e_v, m[2] * e.e_u + m[3] * e.e_v)
    }

    pub fn scale(&self, s: C64) -> JonesMat {
        JonesMat(self.0.map(|z| z * s))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &JonesMat) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_diff(&self, other: &JonesMat) -> f64 {
        sqrt(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum(),
        )
    }

    /// `max |(J^H J - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().mul(*self).max_abs_diff(&JonesMat::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }
}

impl Mul for JonesMat {
    type Output = JonesMat;
    #[inline]
    fn mul(self, b: JonesMat) -> JonesMat {
        let a = &self.0;
        let b = &b.0;
        JonesMat([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

/// Real 4x4 Mueller matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMat(pub [[f64; 4]; 4]);

impl MuellerMat {
    pub const IDENTITY: MuellerMat = MuellerMat([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    pub fn apply(&self, s: &StokesVec) -> StokesVec {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.0[i][j] * s.0[j]).sum();
        }
        StokesVec(out)
    }

    pub fn max_abs_diff(&self, other: &MuellerMat) -> f64 {
        let mut m = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> MuellerMat {
        MuellerMat(self.0.map(|row| row.map(|x| x * s)))
    }
}

impl Mul for MuellerMat {
    type Output = MuellerMat;
    fn mul(self, o: MuellerMat) -> MuellerMat {
        let mut r = [[0.0; 4]; 4];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        MuellerMat(r)
    }
}

/// Stokes parameters `(s0, s1, s2, s3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVec(pub [f64; 4]);

impl StokesVec {
    pub fn from_jones(e: &JonesVec) -> Self {
        let uu = e.e_u.norm_sqr();
        let vv = e.e_v.norm_sqr();
        let uv = e.e_u * e.e_v.conj();
        // s3 follows the fourth row of A: i (E_u E_v* - E_v E_u*) = -2 Im(E_u E_v*)
        StokesVec([uu + vv, uu - vv, 2.0 * uv.re, -2.0 * uv.im])
    }

    pub fn degree_excess(&self) -> f64 {
        let [s0, s1, s2, s3] = self.0;
        sqrt(s1 * s1 + s2 * s2 + s3 * s3) - s0
    }
}

/// Ideal linear polarizer (projector) with transmission axis at `alpha`.
pub fn jones_linear_polarizer(alpha: f64) -> JonesMat {
    let (s, c) = sin_cos(alpha);
    let cs = C64::new(c * s, 0.0);
    JonesMat([C64::new(c * c, 0.0), cs, cs, C64::new(s * s, 0.0)])
}

/// Quarter-wave plate with fast axis at `beta`: `R(-β) diag(1, -i) R(β)`.
pub fn jones_quarter_wave(beta: f64) -> JonesMat {
    let (s, c) = sin_cos(beta);
    let off = C64::new(c * s, c * s);
    JonesMat([C64::new(c * c, -s * s), off, off, C64::new(s * s, -c * c)])
}

/// Optical rotator: the real rotation `[[cos γ, -sin γ], [sin γ, cos γ]]`.
pub fn jones_rotator(gamma: f64) -> JonesMat {
    let (s, c) = sin_cos(gamma);
    JonesMat([
        C64::new(c, 0.0),
        C64::new(-s, 0.0),
        C64::new(s, 0.0),
        C64::new(c, 0.0),
    ])
}

/// Linear retarder with retardance `delta` and axis `theta`.
pub fn jones_retarder(delta: f64, theta: f64) -> JonesMat {
    let (sh, ch) = sin_cos(0.5 * delta);
    let (s2, c2) = sin_cos(2.0 * theta);
    JonesMat([
        C64::new(ch, sh * c2),
        C64::new(0.0, sh * s2),
        C64::new(0.0, sh * s2),
        C64::new(ch, -sh * c2),
    ])
}

/// `M = A (J ⊗ J*) A⁻¹`.
pub fn jones_to_mueller(j: &JonesMat) -> MuellerMat {
    let a: [[C64; 4]; 4] = [
        [ONE, ZERO, ZERO, ONE],
        [ONE, ZERO, ZERO, -ONE],
        [ZERO, ONE, ONE, ZERO],
        [ZERO, I, -I, ZERO],
    ];
    let h = C64::new(0.5, 0.0);
    let a_inv: [[C64; 4]; 4] = [
        [h, h, ZERO, ZERO],
        [ZERO, ZERO, h, -I * h],
        [ZERO, ZERO, h, I * h],
        [h, -h, ZERO, ZERO],
    ];
    let m = &j.0;
    let mut kron = [[ZERO; 4]; 4];
    for r1 in 0..2 {
        for c1 in 0..2 {
            for r2 in 0..2 {
                for c2 in 0..2 {
                    kron[2 * r1 + r2][2 * c1 + c2] = m[2 * r1 + c1] * m[2 * r2 + c2].conj();
                }
            }
        }
    }
    let mut tmp = [[ZERO; 4]; 4];
    for i in 0..4 {
        for jj in 0..4 {
            tmp[i][jj] = (0..4).map(|k| a[i][k] * kron[k][jj]).sum();
        }
    }
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for jj in 0..4 {
            let z: C64 = (0..4).map(|k| tmp[i][k] * a_inv[k][jj]).sum();
            out[i][jj] = z.re;
        }
    }
    MuellerMat(out)
}

/// `|E_u|² + |E_v|²`.
pub fn intensity_from_jones_vec(e: &JonesVec) -> f64 {
    e.e_u.norm_sqr() + e.e_v.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn assert_jones(a: &JonesMat, b: &JonesMat, tol: f64) {
        assert!(a.max_abs_diff(b) <= tol, "{a:?} vs {b:?}");
    }

    /// Equal up to a global phase.
    fn same_up_to_phase(a: &JonesMat, b: &JonesMat) -> bool {
        let k = (0..4)
            .max_by(|&i, &j| b.0[i].norm().total_cmp(&b.0[j].norm()))
            .unwrap();
        let phase = a.0[k] / b.0[k];
        (phase.norm() - 1.0).abs() < 1e-12 && a.max_abs_diff(&b.scale(phase)) < 1e-12
    }

    #[test]
    fn polarizer_examples() {
        assert_jones(
            &jones_linear_polarizer(0.0),
            &JonesMat::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)),
            1e-15,
        );
        assert_jones(
            &jones_linear_polarizer(FRAC_PI_2),
            &JonesMat::new(c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)),
            1e-15,
        );
        let half = c(0.5, 0.0);
        assert_jones(
            &jones_linear_polarizer(FRAC_PI_4),
            &JonesMat([half; 4]),
            1e-15,
        );
        let p = jones_linear_polarizer(0.7);
        assert_jones(&(p * p), &p, 1e-15);
    }

    #[test]
    fn quarter_wave_examples() {
        let q0 = jones_quarter_wave(0.0);
        let out = q0.apply(&JonesVec::linear(0.0));
        assert_abs_diff_eq!(out.e_u.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.e_v.norm(), 0.0, epsilon = 1e-15);
        let q = jones_quarter_wave(0.37);
        assert!(q.unitarity_defect() < 1e-14);
        let q4 = q * q * q * q;
        assert!(same_up_to_phase(&q4, &JonesMat::IDENTITY));
        // twice a QWP is a half-wave plate: flips circular handedness
        let m = jones_to_mueller(&(jones_quarter_wave(0.2) * jones_quarter_wave(0.2)));
        let s = m.apply(&StokesVec([1.0, 0.0, 0.0, 1.0]));
        assert_abs_diff_eq!(s.0[3], -1.0, epsilon = 1e-12);
        // QWP is the π/2 retarder up to global phase
        assert!(same_up_to_phase(
            &jones_quarter_wave(0.9),
            &jones_retarder(FRAC_PI_2, 0.9)
        ));
    }

    #[test]
    fn quarter_wave_mueller_at_zero() {
        let m = jones_to_mueller(&jones_quarter_wave(0.0));
        let want = MuellerMat([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0, 0.0],
        ]);
        assert!(m.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn rotator_examples() {
        assert_jones(&jones_rotator(0.0), &JonesMat::IDENTITY, 1e-15);
        assert_jones(
            &jones_rotator(FRAC_PI_2),
            &JonesMat::new(c(0., 0.), c(-1., 0.), c(1., 0.), c(0., 0.)),
            1e-15,
        );
        // Mueller image rotates (s1, s2) by 2γ
        let g = 0.3;
        let s = jones_to_mueller(&jones_rotator(g)).apply(&StokesVec([1.0, 1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(s.0[1], (2.0 * g).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[2], (2.0 * g).sin(), epsilon = 1e-12);
    }

    #[test]
    fn retarder_examples() {
        assert_jones(&jones_retarder(0.0, 1.234), &JonesMat::IDENTITY, 1e-15);
        assert_jones(
            &jones_retarder(PI, 0.0),
            &JonesMat::new(c(0., 1.), c(0., 0.), c(0., 0.), c(0., -1.)),
            1e-15,
        );
        let h = SQRT_2 / 2.0;
        assert_jones(
            &jones_retarder(FRAC_PI_2, FRAC_PI_4),
            &JonesMat::new(c(h, 0.), c(0., h), c(0., h), c(h, 0.)),
            1e-15,
        );
        let r = jones_retarder(2.1, -0.4);
        assert!((r.det() - ONE).norm() < 1e-12);
        assert!(r.unitarity_defect() < 1e-12);
    }

    #[test]
    fn identity_to_mueller() {
        assert!(jones_to_mueller(&JonesMat::IDENTITY).max_abs_diff(&MuellerMat::IDENTITY) < 1e-15);
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_from_jones_vec(&JonesVec::new(ONE, ZERO)), 1.0);
        assert_eq!(intensity_from_jones_vec(&JonesVec::new(ZERO, ZERO)), 0.0);
        let h = 1.0 / SQRT_2;
        assert_abs_diff_eq!(
            intensity_from_jones_vec(&JonesVec::new(c(h, 0.), c(0., h))),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn stokes_from_jones_matches_mueller_action() {
        let e = JonesVec::new(c(0.3, -0.2), c(0.5, 0.4));
        let j = jones_retarder(1.1, 0.3) * jones_quarter_wave(0.8);
        let direct = StokesVec::from_jones(&j.apply(&e));
        let via = jones_to_mueller(&j).apply(&StokesVec::from_jones(&e));
        for k in 0..4 {
            assert_abs_diff_eq!(direct.0[k], via.0[k], epsilon = 1e-12);
        }
        assert!(direct.degree_excess() <= 1e-12);
    }

    #[test]
    fn crossed_polarizers_extinguish() {
        for k in 0..16 {
            let a = k as f64 * 0.2;
            let e = JonesVec::linear(a);
            let out =
                jones_linear_polarizer(a + FRAC_PI_2).apply(&jones_linear_polarizer(a).apply(&e));
            assert!(intensity_from_jones_vec(&out) < 1e-12);
        }
    }
}
