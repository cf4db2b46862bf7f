use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::stress::{
    lattice_point, trilinear_stencil, CoordNet, FieldKind, Grid, NetArch, NetShape, OccupancyMask,
    StressField, StressTensor,
};

/// Number of free stress components; `szz` is always `-sxx - syy`.
pub const FREE_COMPONENTS: usize = 5;

/// A differentiable map from a flat parameter vector to a trace-free
/// stress field, described by its free components
/// `(sxx, syy, sxy, syz, szx)`.
pub trait Parameterization: Sync {
    fn n_params(&self) -> usize;

    /// `scratch` is reusable working memory owned by the caller.
    fn eval(&self, params: &[f64], p: Vec3, scratch: &mut Vec<f64>) -> [f64; FREE_COMPONENTS];

    /// Add `∂(g · eval(p)) / ∂params` into `grad`.
    fn backprop(
        &self,
        params: &[f64],
        p: Vec3,
        g: [f64; FREE_COMPONENTS],
        grad: &mut [f64],
        scratch: &mut Vec<f64>,
    );

    /// Freeze `params` into a stress field masked by `occupancy`.
    fn to_field(&self, params: &[f64], occupancy: OccupancyMask) -> Result<StressField>;

    /// Whether `eval` is linear in the parameters.
    fn is_linear(&self) -> bool {
        false
    }
}

/// Trilinear voxel grid with five parameters per node, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelParam {
    pub dims: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
}

impl VoxelParam {
    pub fn new(dims: [usize; 3], min: Vec3, max: Vec3) -> Result<Self> {
        crate::stress::validate_lattice(dims, min, max)?;
        Ok(VoxelParam { dims, min, max })
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn node_position(&self, n: usize) -> Vec3 {
        let i = n % self.dims[0];
        let j = (n / self.dims[0]) % self.dims[1];
        let k = n / (self.dims[0] * self.dims[1]);
        lattice_point(self.dims, self.min, self.max, [i, j, k])
    }

    /// Parameters reproducing the trace-free part of `f` at every node.
    pub fn sample(&self, f: impl Fn(Vec3) -> StressTensor) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for n in 0..self.node_count() {
            let s = f(self.node_position(n)).deviatoric();
            out.extend_from_slice(&[s.sxx, s.syy, s.sxy, s.syz, s.szx]);
        }
        out
    }
}

impl Parameterization for VoxelParam {
    fn n_params(&self) -> usize {
        FREE_COMPONENTS * self.node_count()
    }

    #[inline]
    fn eval(&self, params: &[f64], p: Vec3, _scratch: &mut Vec<f64>) -> [f64; FREE_COMPONENTS] {
        let (idx, w) = trilinear_stencil(self.dims, self.min, self.max, p);
        let mut out = [0.0; FREE_COMPONENTS];
        for (n, wk) in idx.iter().zip(w) {
            let c = &params[FREE_COMPONENTS * n..FREE_COMPONENTS * n + FREE_COMPONENTS];
            for (o, v) in out.iter_mut().zip(c) {
                *o += wk * v;
            }
        }
        out
    }

    #[inline]
    fn backprop(
        &self,
        _params: &[f64],
        p: Vec3,
        g: [f64; FREE_COMPONENTS],
        grad: &mut [f64],
        _scratch: &mut Vec<f64>,
    ) {
        let (idx, w) = trilinear_stencil(self.dims, self.min, self.max, p);
        for (n, wk) in idx.iter().zip(w) {
            let c = &mut grad[FREE_COMPONENTS * n..FREE_COMPONENTS * n + FREE_COMPONENTS];
            for (o, gv) in c.iter_mut().zip(g) {
                *o += wk * gv;
            }
        }
    }

    fn to_field(&self, params: &[f64], occupancy: OccupancyMask) -> Result<StressField> {
        if params.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut data = Vec::with_capacity(6 * self.node_count());
        for c in params.chunks_exact(FREE_COMPONENTS) {
            data.extend_from_slice(
                &StressTensor::from_trace_free([c[0], c[1], c[2], c[3], c[4]]).to_array(),
            );
        }
        let grid = Grid::new(self.dims, self.min, self.max, data)?;
        Ok(StressField::new(FieldKind::RegularGrid(grid), occupancy))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Coordinate network weights as parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParam {
    pub shape: NetShape,
}

impl NetParam {
    pub fn new(arch: NetArch, min: Vec3, max: Vec3) -> Result<Self> {
        Ok(NetParam {
            shape: NetShape::new(arch, min, max)?,
        })
    }
}

impl Parameterization for NetParam {
    fn n_params(&self) -> usize {
        self.shape.arch.n_weights()
    }

    fn eval(&self, params: &[f64], p: Vec3, scratch: &mut Vec<f64>) -> [f64; FREE_COMPONENTS] {
        self.shape.eval(params, p, scratch)
    }

    fn backprop(
        &self,
        params: &[f64],
        p: Vec3,
        g: [f64; FREE_COMPONENTS],
        grad: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        self.shape.backprop(params, p, g, grad, scratch)
    }

    fn to_field(&self, params: &[f64], occupancy: OccupancyMask) -> Result<StressField> {
        let net = CoordNet::new(self.shape.clone(), params.to_vec())?;
        Ok(StressField::new(FieldKind::CoordNet(net), occupancy))
    }
}
