//! Closed-form recovery of retarder parameters from polariscope intensities.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::math::{atan2, sin_cos, sqrt, wrap};
use crate::renderer::EquivJones;

/// Retarder-plus-rotator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicParams {
    pub delta: f64,
    pub theta: f64,
    pub gamma: f64,
}

impl CharacteristicParams {
    pub fn new(delta: f64, theta: f64, gamma: f64) -> Self {
        CharacteristicParams {
            delta,
            theta,
            gamma,
        }
    }

    /// `δ ∈ [0, 2π)`, `θ, γ ∈ [0, π)`.
    pub fn canonical(&self) -> Self {
        CharacteristicParams {
            delta: wrap(self.delta, TAU),
            theta: wrap(self.theta, PI),
            gamma: wrap(self.gamma, PI),
        }
    }

    pub fn equiv(&self) -> EquivJones {
        EquivJones::from_params(self.delta, self.theta, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate2d {
    pub theta: f64,
    pub delta: f64,
    /// No usable modulation: the estimate is `(0, 0)` or θ is arbitrary.
    pub degenerate: bool,
}

/// Isoclinic angle and retardance of a single retarder from the
/// ten-measurement scheme (see [`crate::renderer::table_2d_configs`]).
///
/// Returns `δ ∈ [0, π]` and `θ ∈ [0, π)`.
pub fn estimate_2d(i: &[f64; 10]) -> Estimate2d {
    let top = i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * top;
    let lo = i.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if top == 0.0 || top - lo <= tol {
        return Estimate2d {
            theta: 0.0,
            delta: 0.0,
            degenerate: true,
        };
    }
    let (c4, s4) = (i[2] - i[0], i[3] - i[1]);
    let plane_flat = c4.abs() <= tol && s4.abs() <= tol;
    let mut theta = if plane_flat {
        0.0
    } else {
        0.25 * atan2(s4, c4)
    };
    let (s2, c2) = sin_cos(2.0 * theta);
    let mut delta = atan2((i[8] - i[6]) * s2 + (i[7] - i[9]) * c2, i[4] - i[5]);
    if delta < 0.0 {
        delta = -delta;
        theta += FRAC_PI_2;
    }
    Estimate2d {
        theta: wrap(theta, PI),
        delta,
        degenerate: plane_flat,
    }
}

/// Principal-stress half difference and orientation, returned as
/// `(σ, τ) = r (cos 2θ, sin 2θ)` with `r = δ λ / (4π C h)`, for a specimen
/// of thickness `h`.
pub fn stress_from_retardance(
    delta: f64,
    theta: f64,
    thickness: f64,
    stress_optic: f64,
    wavelength: f64,
) -> (f64, f64) {
    let r = delta * wavelength / (4.0 * PI * stress_optic * thickness);
    let (s, c) = sin_cos(2.0 * theta);
    (r * c, r * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixStepEstimate {
    pub params: CharacteristicParams,
    /// `sin δ` vanished: θ is set to 0 and only `δ` and `2γ - θ` carry
    /// information.
    pub indeterminate: bool,
}

/// Characteristic parameters from the six-step images (see
/// [`crate::renderer::sixstep_configs`]); image `k` reads
/// `source (1 + Ĩ_{k+1}) / 2`.
///
/// Stage one takes `2θ` from `(Ĩ2, Ĩ3)`, stage two `δ ∈ [0, π]` from
/// `(|(Ĩ2, Ĩ3)|, Ĩ1)`, and stage three rotates `(Ĩ5, Ĩ6)` by `2θ` to read
/// `cos δ sin 2γ'` and `cos 2γ'`, which together with `Ĩ4 = sin δ sin 2γ'`
/// fix `γ' = 2γ - θ`.
pub fn estimate_sixstep(i: &[f64; 6], source: f64) -> SixStepEstimate {
    let c: [f64; 6] = core::array::from_fn(|k| (2.0 * i[k] / source - 1.0).clamp(-1.0, 1.0));
    let modulation = sqrt(c[1] * c[1] + c[2] * c[2]);
    let indeterminate = modulation < 1e-9;
    let two_theta = if indeterminate {
        0.0
    } else {
        atan2(c[2], c[1])
    };
    let delta = atan2(modulation, c[0]);
    let (sd, cd) = sin_cos(delta);
    let (s2t, c2t) = sin_cos(two_theta);
    let x = c[4] * c2t - c[5] * s2t;
    let y = c[5] * c2t + c[4] * s2t;
    let two_gp = atan2(sd * c[3] + cd * x, y);
    let theta = 0.5 * two_theta;
    let gamma = 0.5 * (0.5 * two_gp + theta);
    SixStepEstimate {
        params: CharacteristicParams::new(delta, theta, gamma).canonical(),
        indeterminate,
    }
}

const CLASS_TOL: f64 = 1e-9;

/// Parameter triples whose equivalent elements agree with `p`'s up to a sign
/// on `(a, d)` and an independent sign on `(b, c)`.
pub fn ambiguity_classes(p: &CharacteristicParams) -> Vec<CharacteristicParams> {
    let q0 = p.equiv();
    let mut out: Vec<CharacteristicParams> = Vec::new();
    for sd in [1.0, -1.0] {
        for kd in 0..4 {
            for kt in 0..4 {
                for kg in 0..4 {
                    let cand = CharacteristicParams::new(
                        sd * p.delta + kd as f64 * FRAC_PI_2,
                        p.theta + kt as f64 * FRAC_PI_2,
                        p.gamma + kg as f64 * FRAC_PI_2,
                    )
                    .canonical();
                    if !same_up_to_flips(&cand.equiv(), &q0) {
                        continue;
                    }
                    if !out.iter().any(|m| params_close(m, &cand)) {
                        out.push(cand);
                    }
                }
            }
        }
    }
    out
}

fn same_up_to_flips(q: &EquivJones, r: &EquivJones) -> bool {
    let pair = |x: [f64; 2], y: [f64; 2]| {
        [1.0, -1.0]
            .iter()
            .any(|s| (x[0] - s * y[0]).abs() <= CLASS_TOL && (x[1] - s * y[1]).abs() <= CLASS_TOL)
    };
    pair([q.a, q.d], [r.a, r.d]) && pair([q.b, q.c], [r.b, r.c])
}

fn params_close(a: &CharacteristicParams, b: &CharacteristicParams) -> bool {
    let near = |x: f64, y: f64, period: f64| {
        let d = wrap(x - y, period);
        d.min(period - d) <= CLASS_TOL
    };
    near(a.delta, b.delta, TAU) && near(a.theta, b.theta, PI) && near(a.gamma, b.gamma, PI)
}

/// `Σ_k ||q_est,k| - |q_ref,k||`, blind to the sign flips above.
pub fn abs_jones_residual(q_est: &EquivJones, q_ref: &EquivJones) -> f64 {
    q_est
        .to_array()
        .iter()
        .zip(q_ref.to_array())
        .map(|(a, b)| (a.abs() - b.abs()).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_examples() {
        let q = EquivJones::new(0.5, -0.5, 0.5, 0.5);
        assert_eq!(abs_jones_residual(&q, &q), 0.0);
        assert_eq!(
            abs_jones_residual(&EquivJones::new(-0.5, 0.5, -0.5, -0.5), &q),
            0.0
        );
        assert_eq!(
            abs_jones_residual(&EquivJones::IDENTITY, &EquivJones::new(0.0, 1.0, 0.0, 0.0)),
            2.0
        );
    }

    #[test]
    fn identity_class_is_small() {
        let members = ambiguity_classes(&CharacteristicParams::new(0.0, 0.0, 0.0));
        let mut vecs: Vec<[f64; 4]> = Vec::new();
        for m in &members {
            let q = m.equiv().to_array();
            if !vecs
                .iter()
                .any(|v| v.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-12))
            {
                vecs.push(q);
            }
        }
        assert!(vecs.len() <= 2, "{vecs:?}");
    }

    #[test]
    fn stress_inverse() {
        let (s, t) = stress_from_retardance(2.0, 0.0, 1.0, 1.0 / (4.0 * PI), 1.0);
        assert!((s - 2.0).abs() < 1e-15 && t.abs() < 1e-15);
    }
}
