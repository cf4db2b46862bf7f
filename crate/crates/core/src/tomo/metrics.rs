use crate::error::{Error, Result};
use crate::math::{sqrt, Vec3};
use crate::stress::{lattice_point, FieldSampler, OccupancyMask};

/// Errors between two fields after removing the trace from both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    /// Mean squared error per component, `(sxx, syy, szz, sxy, syz, szx)`.
    pub components: [f64; 6],
    /// Mean squared Frobenius norm of the difference.
    pub total: f64,
    /// `√(Σ ‖Δ‖² / Σ ‖ref‖²)`; zero when both sums vanish.
    pub normalized_l2: f64,
    pub n_points: usize,
}

/// Compare `est` with `reference` on the vertices of an `n³` lattice over the
/// bounds of `mask`, keeping the vertices inside it.
///
/// Photoelastic data cannot see the isotropic part of the stress, so both
/// tensors are reduced to their trace-free parts before comparing.
pub fn evaluate_field_mse<A, B>(
    est: &A,
    reference: &B,
    mask: &OccupancyMask,
    n: usize,
) -> Result<FieldErrors>
where
    A: FieldSampler + ?Sized,
    B: FieldSampler + ?Sized,
{
    if n < 2 {
        return Err(Error::Config("need at least 2 samples per axis".into()));
    }
    let (min, max): (Vec3, Vec3) = mask.bounds();
    let mut comp = [0.0; 6];
    let (mut diff_sq, mut ref_sq) = (0.0, 0.0);
    let mut count = 0usize;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = lattice_point([n; 3], min, max, [i, j, k]);
                if !mask.contains(p) {
                    continue;
                }
                let r = reference.query(p).deviatoric();
                let d = est.query(p).deviatoric() - r;
                for (c, v) in comp.iter_mut().zip(d.to_array()) {
                    *c += v * v;
                }
                diff_sq += d.norm_sq();
                ref_sq += r.norm_sq();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Config(
            "mask contains none of the evaluation points".into(),
        ));
    }
    let m = count as f64;
    let normalized_l2 = if ref_sq > 0.0 {
        sqrt(diff_sq / ref_sq)
    } else if diff_sq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(FieldErrors {
        components: comp.map(|c| c / m),
        total: diff_sq / m,
        normalized_l2,
        n_points: count,
    })
}
