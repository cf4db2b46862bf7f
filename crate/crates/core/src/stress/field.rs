use alloc::vec::Vec;

use super::{disk_stress, rotate_unchecked, CoordNet, ScatteredKnn, StressTensor};
use crate::error::{Error, Result};
use crate::math::{floor, sqrt, Mat3, Vec3};

/// Anything the renderer can march through: a tensor lookup plus an exact
/// description of where the specimen is.
pub trait FieldSampler: Sync {
    fn query(&self, p: Vec3) -> StressTensor;

    /// Parameter interval of `origin + t dir` inside the specimen, restricted
    /// to `[t_lo, t_hi]`. `None` when the ray misses.
    fn clip(&self, origin: Vec3, dir: Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)>;

    /// Axis-aligned bounds of the specimen.
    fn bounds(&self) -> (Vec3, Vec3);
}

/// Binary indicator of the specimen interior.
#[derive(Debug, Clone, PartialEq)]
pub enum OccupancyMask {
    Box {
        min: Vec3,
        max: Vec3,
    },
    /// `axis` must be a unit vector.
    Cylinder {
        center: Vec3,
        axis: Vec3,
        radius: f64,
        half_height: f64,
    },
    /// Cell-centred voxels, x fastest.
    BinaryGrid {
        dims: [usize; 3],
        min: Vec3,
        max: Vec3,
        bits: Vec<bool>,
    },
    Union(Vec<OccupancyMask>),
}

impl OccupancyMask {
    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            OccupancyMask::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
            OccupancyMask::Cylinder {
                center,
                axis,
                radius,
                half_height,
            } => {
                let d = p - *center;
                let h = d.dot(axis);
                let w = d - *axis * h;
                h.abs() <= *half_height && w.dot(&w) <= radius * radius
            }
            OccupancyMask::BinaryGrid {
                dims,
                min,
                max,
                bits,
            } => {
                let mut idx = [0usize; 3];
                for i in 0..3 {
                    if p[i] < min[i] || p[i] > max[i] {
                        return false;
                    }
                    let f = (p[i] - min[i]) / (max[i] - min[i]) * dims[i] as f64;
                    idx[i] = (floor(f) as usize).min(dims[i] - 1);
                }
                bits[idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])]
            }
            OccupancyMask::Union(parts) => parts.iter().any(|m| m.contains(p)),
        }
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            OccupancyMask::Box { min, max } | OccupancyMask::BinaryGrid { min, max, .. } => {
                (*min, *max)
            }
            OccupancyMask::Cylinder {
                center,
                axis,
                radius,
                half_height,
            } => {
                let ext = Vec3(core::array::from_fn(|i| {
                    half_height * axis[i].abs() + radius * sqrt((1.0 - axis[i] * axis[i]).max(0.0))
                }));
                (*center - ext, *center + ext)
            }
            OccupancyMask::Union(parts) => {
                let mut lo = Vec3([f64::INFINITY; 3]);
                let mut hi = Vec3([f64::NEG_INFINITY; 3]);
                for m in parts {
                    let (a, b) = m.bounds();
                    for i in 0..3 {
                        lo.0[i] = lo.0[i].min(a[i]);
                        hi.0[i] = hi.0[i].max(b[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn clip(&self, origin: Vec3, dir: Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
        match self {
            OccupancyMask::Box { min, max } | OccupancyMask::BinaryGrid { min, max, .. } => {
                clip_box(*min, *max, origin, dir, t_lo, t_hi)
            }
            OccupancyMask::Cylinder {
                center,
                axis,
                radius,
                half_height,
            } => {
                let d = origin - *center;
                let h0 = d.dot(axis);
                let ha = dir.dot(axis);
                let (mut lo, mut hi) = (t_lo, t_hi);
                if ha.abs() < 1e-300 {
                    if h0.abs() > *half_height {
                        return None;
                    }
                } else {
                    let (a, b) = ((-half_height - h0) / ha, (half_height - h0) / ha);
                    lo = lo.max(a.min(b));
                    hi = hi.min(a.max(b));
                }
                let w0 = d - *axis * h0;
                let w1 = dir - *axis * ha;
                let qa = w1.dot(&w1);
                let qb = w0.dot(&w1);
                let qc = w0.dot(&w0) - radius * radius;
                if qa < 1e-300 {
                    if qc > 0.0 {
                        return None;
                    }
                } else {
                    let disc = qb * qb - qa * qc;
                    if disc < 0.0 {
                        return None;
                    }
                    let s = sqrt(disc);
                    lo = lo.max((-qb - s) / qa);
                    hi = hi.min((-qb + s) / qa);
                }
                (lo < hi).then_some((lo, hi))
            }
            OccupancyMask::Union(parts) => {
                let mut out: Option<(f64, f64)> = None;
                for m in parts {
                    if let Some((a, b)) = m.clip(origin, dir, t_lo, t_hi) {
                        out = Some(match out {
                            None => (a, b),
                            Some((x, y)) => (x.min(a), y.max(b)),
                        });
                    }
                }
                out
            }
        }
    }
}

fn clip_box(min: Vec3, max: Vec3, o: Vec3, d: Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (t_lo, t_hi);
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if o[i] < min[i] || o[i] > max[i] {
                return None;
            }
        } else {
            let inv = 1.0 / d[i];
            let a = (min[i] - o[i]) * inv;
            let b = (max[i] - o[i]) * inv;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// A disk under diametral compression, placed in the world by `center` and
/// the rotation `frame` whose columns are the disk's local x, load axis y and
/// thickness axis z.
#[derive(Debug, Clone, PartialEq)]
pub struct Disk {
    pub load: f64,
    pub radius: f64,
    pub thickness: f64,
    pub center: Vec3,
    pub frame: Mat3,
}

impl Disk {
    pub fn new(load: f64, radius: f64, thickness: f64) -> Self {
        Disk {
            load,
            radius,
            thickness,
            center: Vec3::ZERO,
            frame: Mat3::IDENTITY,
        }
    }

    pub fn occupancy(&self) -> OccupancyMask {
        OccupancyMask::Cylinder {
            center: self.center,
            axis: self.frame.column(2),
            radius: self.radius,
            half_height: 0.5 * self.thickness,
        }
    }

    /// World-frame tensor at `p`, zero outside the disk's cylinder.
    pub fn stress_at(&self, p: Vec3) -> StressTensor {
        let local = self.frame.transpose().mul_vec(&(p - self.center));
        if local.z().abs() > 0.5 * self.thickness {
            return StressTensor::ZERO;
        }
        let s = disk_stress(local.x(), local.y(), self.load, self.radius, self.thickness);
        rotate_unchecked(&s, &self.frame)
    }
}

/// Vertex-centred regular grid of full tensors: node `i` along an axis sits
/// at `min + i (max - min) / (n - 1)`, x fastest, six components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
    pub data: Vec<f64>,
}

/// Eight node indices and trilinear weights.
pub type Stencil = ([usize; 8], [f64; 8]);

impl Grid {
    pub fn new(dims: [usize; 3], min: Vec3, max: Vec3, data: Vec<f64>) -> Result<Self> {
        validate_lattice(dims, min, max)?;
        let n = dims[0] * dims[1] * dims[2] * 6;
        if data.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: data.len(),
            });
        }
        Ok(Grid {
            dims,
            min,
            max,
            data,
        })
    }

    /// Sample `f` at every node.
    pub fn from_fn(
        dims: [usize; 3],
        min: Vec3,
        max: Vec3,
        f: impl Fn(Vec3) -> StressTensor,
    ) -> Result<Self> {
        validate_lattice(dims, min, max)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2] * 6);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.extend_from_slice(&f(lattice_point(dims, min, max, [i, j, k])).to_array());
                }
            }
        }
        Ok(Grid {
            dims,
            min,
            max,
            data,
        })
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn node(&self, n: usize) -> StressTensor {
        let c = &self.data[6 * n..6 * n + 6];
        StressTensor::from_array([c[0], c[1], c[2], c[3], c[4], c[5]])
    }

    pub fn query(&self, p: Vec3) -> StressTensor {
        let (idx, w) = trilinear_stencil(self.dims, self.min, self.max, p);
        let mut acc = [0.0; 6];
        for (n, wk) in idx.iter().zip(w.iter()) {
            let c = &self.data[6 * n..6 * n + 6];
            for (a, v) in acc.iter_mut().zip(c) {
                *a += wk * v;
            }
        }
        StressTensor::from_array(acc)
    }
}

pub fn validate_lattice(dims: [usize; 3], min: Vec3, max: Vec3) -> Result<()> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::Config("grid needs at least 2 nodes per axis".into()));
    }
    if !(0..3).all(|i| min[i].is_finite() && max[i].is_finite() && max[i] > min[i]) {
        return Err(Error::Config(
            "grid bounding box is empty or not finite".into(),
        ));
    }
    Ok(())
}

pub fn lattice_point(dims: [usize; 3], min: Vec3, max: Vec3, ijk: [usize; 3]) -> Vec3 {
    Vec3(core::array::from_fn(|a| {
        min[a] + (max[a] - min[a]) * ijk[a] as f64 / (dims[a] - 1) as f64
    }))
}

/// Trilinear interpolation stencil; points outside the box are clamped onto
/// it.
pub fn trilinear_stencil(dims: [usize; 3], min: Vec3, max: Vec3, p: Vec3) -> Stencil {
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let top = (dims[a] - 1) as f64;
        let f = ((p[a] - min[a]) / (max[a] - min[a]) * top).clamp(0.0, top);
        let i = (floor(f) as usize).min(dims[a] - 2);
        base[a] = i;
        frac[a] = f - i as f64;
    }
    let mut idx = [0usize; 8];
    let mut w = [0.0; 8];
    for corner in 0..8 {
        let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
        idx[corner] = (base[0] + dx) + dims[0] * ((base[1] + dy) + dims[1] * (base[2] + dz));
        let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
        let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
        let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
        w[corner] = wx * wy * wz;
    }
    (idx, w)
}

#[derive(Debug, Clone)]
pub enum FieldKind {
    /// One or more disks; a point takes the tensor of the first disk that
    /// contains it.
    AnalyticDisks(Vec<Disk>),
    RegularGrid(Grid),
    ScatteredKnn(ScatteredKnn),
    CoordNet(CoordNet),
}

/// A stress field together with the specimen's occupancy; queries outside
/// the occupancy return the zero tensor.
#[derive(Debug, Clone)]
pub struct StressField {
    pub kind: FieldKind,
    pub occupancy: OccupancyMask,
}

impl StressField {
    pub fn new(kind: FieldKind, occupancy: OccupancyMask) -> Self {
        StressField { kind, occupancy }
    }

    /// Disks with occupancy equal to the union of their cylinders.
    pub fn disks(disks: Vec<Disk>) -> Self {
        let occupancy = match disks.as_slice() {
            [one] => one.occupancy(),
            many => OccupancyMask::Union(many.iter().map(Disk::occupancy).collect()),
        };
        StressField {
            kind: FieldKind::AnalyticDisks(disks),
            occupancy,
        }
    }

    pub fn zero(occupancy: OccupancyMask) -> Self {
        StressField {
            kind: FieldKind::AnalyticDisks(Vec::new()),
            occupancy,
        }
    }

    pub fn query(&self, p: Vec3) -> StressTensor {
        if !self.occupancy.contains(p) {
            return StressTensor::ZERO;
        }
        match &self.kind {
            FieldKind::AnalyticDisks(disks) => disks
                .iter()
                .find(|d| d.occupancy().contains(p))
                .map_or(StressTensor::ZERO, |d| d.stress_at(p)),
            FieldKind::RegularGrid(g) => g.query(p),
            FieldKind::ScatteredKnn(k) => k.query(p),
            FieldKind::CoordNet(n) => n.query(p),
        }
    }
}

impl FieldSampler for StressField {
    fn query(&self, p: Vec3) -> StressTensor {
        StressField::query(self, p)
    }

    fn clip(&self, origin: Vec3, dir: Vec3, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
        self.occupancy.clip(origin, dir, t_lo, t_hi)
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        self.occupancy.bounds()
    }
}
