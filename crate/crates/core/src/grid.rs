//! Dual staggered Cartesian grids.
//!
//! The p-grid carries nodes on the physical boundary in the Dirichlet
//! directions (x, y); the q-grid is shifted by half a cell in every direction
//! and is strictly interior in x and y. The z direction is periodic and both
//! grids store one copy of each periodic node.
//!
//! ```text
//!   p:  x_i     = i Δx,        i = 0 .. Npx-1,  Δx = Lx / (Npx - 1)
//!   q:  x_{i+½} = (i + ½) Δx,  i = 0 .. Npx-2
//!   p:  z_k     = k Δz,        k = 0 .. Npz-1,  Δz = Lz / Npz
//!   q:  z_{k+½} = (k + ½) Δz,  k = 0 .. Npz-1
//! ```
//!
//! Every grid function is stored as a flat vector with x running fastest:
//! `index = i + Nx (j + Ny k)`.

use std::f64::consts::PI;

use crate::error::{MfdError, Result};

/// Boundary treatment along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridTag {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Index spaces that operators map between.
///
/// `PInterior` and `PBoundary` partition the p-grid nodes; `QStar` holds the
/// auxiliary q-points placed on the physical x/y boundary that carry
/// Dirichlet data for the parallel Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dofs {
    P,
    PInterior,
    PBoundary,
    Q,
    QStar,
}

impl Dofs {
    pub fn name(self) -> &'static str {
        match self {
            Dofs::P => "p",
            Dofs::PInterior => "p_interior",
            Dofs::PBoundary => "p_boundary",
            Dofs::Q => "q",
            Dofs::QStar => "q_star",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    /// p-grid node counts per direction.
    pub npx: usize,
    pub npy: usize,
    pub npz: usize,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
    pub bc_z: Boundary,
}

pub const DEFAULT_LX: f64 = 30.0;
pub const DEFAULT_LY: f64 = 60.0;
pub const DEFAULT_LZ: f64 = 2.0 * PI;

impl GridSpec {
    pub fn new(lengths: [f64; 3], nodes: [usize; 3]) -> Self {
        GridSpec {
            lx: lengths[0],
            ly: lengths[1],
            lz: lengths[2],
            npx: nodes[0],
            npy: nodes[1],
            npz: nodes[2],
            bc_x: Boundary::Dirichlet,
            bc_y: Boundary::Dirichlet,
            bc_z: Boundary::Periodic,
        }
    }

    /// `n³` p-nodes on the default 30 × 60 × 2π box.
    pub fn cube(n: usize) -> Self {
        Self::new([DEFAULT_LX, DEFAULT_LY, DEFAULT_LZ], [n, n, n])
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in [("Lx", self.lx), ("Ly", self.ly), ("Lz", self.lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(MfdError::InvalidGrid(format!(
                    "{name} must be positive and finite, got {l}"
                )));
            }
        }
        if self.npx < 3 || self.npy < 3 {
            return Err(MfdError::InvalidGrid(format!(
                "Npx and Npy must be at least 3, got ({}, {})",
                self.npx, self.npy
            )));
        }
        if self.npz < 2 {
            return Err(MfdError::InvalidGrid(format!(
                "Npz must be at least 2, got {}",
                self.npz
            )));
        }
        if self.bc_x != Boundary::Dirichlet
            || self.bc_y != Boundary::Dirichlet
            || self.bc_z != Boundary::Periodic
        {
            return Err(MfdError::Unsupported(
                "only Dirichlet x/y with periodic z is implemented".into(),
            ));
        }
        Ok(())
    }
}

/// Which face of the x/y boundary a star point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    XLow,
    XHigh,
    YLow,
    YHigh,
}

#[derive(Debug, Clone)]
pub struct DualGrid {
    spec: GridSpec,
    spacing: [f64; 3],
    p_coords: [Vec<f64>; 3],
    q_coords: [Vec<f64>; 3],
    p_dims: [usize; 3],
    q_dims: [usize; 3],
    interior_to_full: Vec<usize>,
    boundary_to_full: Vec<usize>,
    // usize::MAX marks "not in this partition"
    full_to_interior: Vec<usize>,
    full_to_boundary: Vec<usize>,
}

pub fn build_dual_grid(spec: GridSpec) -> Result<DualGrid> {
    DualGrid::new(spec)
}

impl DualGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let dx = spec.lx / (spec.npx - 1) as f64;
        let dy = spec.ly / (spec.npy - 1) as f64;
        let dz = spec.lz / spec.npz as f64;
        let p_dims = [spec.npx, spec.npy, spec.npz];
        let q_dims = [spec.npx - 1, spec.npy - 1, spec.npz];
        let spacing = [dx, dy, dz];

        let nodes = |n: usize, h: f64, shift: f64| -> Vec<f64> {
            (0..n).map(|i| (i as f64 + shift) * h).collect()
        };
        let mut p_coords = [
            nodes(p_dims[0], dx, 0.0),
            nodes(p_dims[1], dy, 0.0),
            nodes(p_dims[2], dz, 0.0),
        ];
        // pin the far Dirichlet endpoints exactly
        *p_coords[0].last_mut().unwrap() = spec.lx;
        *p_coords[1].last_mut().unwrap() = spec.ly;
        let q_coords = [
            nodes(q_dims[0], dx, 0.5),
            nodes(q_dims[1], dy, 0.5),
            nodes(q_dims[2], dz, 0.5),
        ];

        let np = p_dims.iter().product::<usize>();
        let mut interior_to_full = Vec::new();
        let mut boundary_to_full = Vec::new();
        let mut full_to_interior = vec![usize::MAX; np];
        let mut full_to_boundary = vec![usize::MAX; np];
        for k in 0..p_dims[2] {
            for j in 0..p_dims[1] {
                for i in 0..p_dims[0] {
                    let f = i + p_dims[0] * (j + p_dims[1] * k);
                    let on_boundary = i == 0 || i == p_dims[0] - 1 || j == 0 || j == p_dims[1] - 1;
                    if on_boundary {
                        full_to_boundary[f] = boundary_to_full.len();
                        boundary_to_full.push(f);
                    } else {
                        full_to_interior[f] = interior_to_full.len();
                        interior_to_full.push(f);
                    }
                }
            }
        }

        Ok(DualGrid {
            spec,
            spacing,
            p_coords,
            q_coords,
            p_dims,
            q_dims,
            interior_to_full,
            boundary_to_full,
            full_to_interior,
            full_to_boundary,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// (Δx, Δy, Δz)
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.spec.lx * self.spec.ly * self.spec.lz
    }

    pub fn dims(&self, tag: GridTag) -> [usize; 3] {
        match tag {
            GridTag::P => self.p_dims,
            GridTag::Q => self.q_dims,
        }
    }

    pub fn coords(&self, tag: GridTag, axis: Axis) -> &[f64] {
        match tag {
            GridTag::P => &self.p_coords[axis.index()],
            GridTag::Q => &self.q_coords[axis.index()],
        }
    }

    pub fn len(&self, dofs: Dofs) -> usize {
        match dofs {
            Dofs::P => self.p_dims.iter().product(),
            Dofs::Q => self.q_dims.iter().product(),
            Dofs::PInterior => self.interior_to_full.len(),
            Dofs::PBoundary => self.boundary_to_full.len(),
            Dofs::QStar => 2 * (self.q_dims[0] + self.q_dims[1]) * self.q_dims[2],
        }
    }

    pub fn node_count(&self, tag: GridTag) -> usize {
        self.dims(tag).iter().product()
    }

    pub fn flat_index(&self, tag: GridTag, i: usize, j: usize, k: usize) -> Result<usize> {
        let d = self.dims(tag);
        if i >= d[0] || j >= d[1] || k >= d[2] {
            return Err(MfdError::IndexOutOfRange { i, j, k, dims: d });
        }
        Ok(i + d[0] * (j + d[1] * k))
    }

    pub fn unflatten(&self, tag: GridTag, index: usize) -> Result<(usize, usize, usize)> {
        let d = self.dims(tag);
        let len = d.iter().product();
        if index >= len {
            return Err(MfdError::FlatIndexOutOfRange { index, len });
        }
        Ok((index % d[0], (index / d[0]) % d[1], index / (d[0] * d[1])))
    }

    /// Unchecked flat index for hot loops; callers guarantee the range.
    #[inline]
    pub(crate) fn idx(&self, tag: GridTag, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims(tag);
        debug_assert!(i < d[0] && j < d[1] && k < d[2]);
        i + d[0] * (j + d[1] * k)
    }

    #[inline]
    pub fn node(&self, tag: GridTag, i: usize, j: usize, k: usize) -> [f64; 3] {
        let c = match tag {
            GridTag::P => &self.p_coords,
            GridTag::Q => &self.q_coords,
        };
        [c[0][i], c[1][j], c[2][k]]
    }

    pub fn node_at(&self, tag: GridTag, index: usize) -> [f64; 3] {
        let d = self.dims(tag);
        self.node(
            tag,
            index % d[0],
            (index / d[0]) % d[1],
            index / (d[0] * d[1]),
        )
    }

    pub fn is_p_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.p_dims[0] - 1 || j == self.p_dims[1] - 1
    }

    /// Full p indices of the interior nodes, in lexicographic order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_to_full
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_to_full
    }

    pub fn interior_index(&self, full: usize) -> Option<usize> {
        match self.full_to_interior[full] {
            usize::MAX => None,
            v => Some(v),
        }
    }

    pub fn boundary_index(&self, full: usize) -> Option<usize> {
        match self.full_to_boundary[full] {
            usize::MAX => None,
            v => Some(v),
        }
    }

    /// Coordinates of every node of an index space, in storage order.
    pub fn positions(&self, dofs: Dofs) -> Vec<[f64; 3]> {
        match dofs {
            Dofs::P => (0..self.len(Dofs::P))
                .map(|f| self.node_at(GridTag::P, f))
                .collect(),
            Dofs::Q => (0..self.len(Dofs::Q))
                .map(|f| self.node_at(GridTag::Q, f))
                .collect(),
            Dofs::PInterior => self
                .interior_to_full
                .iter()
                .map(|&f| self.node_at(GridTag::P, f))
                .collect(),
            Dofs::PBoundary => self
                .boundary_to_full
                .iter()
                .map(|&f| self.node_at(GridTag::P, f))
                .collect(),
            Dofs::QStar => (0..self.len(Dofs::QStar))
                .map(|s| self.star_position(s))
                .collect(),
        }
    }

    /// Star point on `face`; `t` is the transverse q index (y for x-faces, x
    /// for y-faces) and `c` the q index in z.
    pub fn star_index(&self, face: Face, t: usize, c: usize) -> usize {
        let [nqx, nqy, nqz] = self.q_dims;
        let xs = nqy * nqz;
        let ys = nqx * nqz;
        match face {
            Face::XLow => t + nqy * c,
            Face::XHigh => xs + t + nqy * c,
            Face::YLow => 2 * xs + t + nqx * c,
            Face::YHigh => 2 * xs + ys + t + nqx * c,
        }
    }

    pub fn star_position(&self, s: usize) -> [f64; 3] {
        let [nqx, nqy, nqz] = self.q_dims;
        let xs = nqy * nqz;
        let ys = nqx * nqz;
        let qc = &self.q_coords;
        if s < 2 * xs {
            let x = if s < xs { 0.0 } else { self.spec.lx };
            let r = s % xs;
            [x, qc[1][r % nqy], qc[2][r / nqy]]
        } else {
            let r = s - 2 * xs;
            let y = if r < ys { 0.0 } else { self.spec.ly };
            let r = r % ys;
            [qc[0][r % nqx], y, qc[2][r / nqx]]
        }
    }
}

/// Grid function tagged with the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredScalar {
    pub tag: GridTag,
    pub values: Vec<f64>,
}

impl StaggeredScalar {
    pub fn zeros(grid: &DualGrid, tag: GridTag) -> Self {
        StaggeredScalar {
            tag,
            values: vec![0.0; grid.node_count(tag)],
        }
    }

    pub fn sample(grid: &DualGrid, tag: GridTag, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let [nx, ny, nz] = grid.dims(tag);
        let mut values = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let [x, y, z] = grid.node(tag, i, j, k);
                    values.push(f(x, y, z));
                }
            }
        }
        StaggeredScalar { tag, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Diagonal of the quadrature matrix `X_p` or `X_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    pub tag: GridTag,
    pub diag: Vec<f64>,
}

impl QuadratureWeights {
    /// Compensated (Neumaier) sum of the weights.
    pub fn total(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &w in &self.diag {
            let t = sum + w;
            comp += if sum.abs() >= w.abs() {
                (sum - t) + w
            } else {
                (w - t) + sum
            };
            sum = t;
        }
        sum + comp
    }

    /// `vᵀ X v`
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        self.diag.iter().zip(v).map(|(w, x)| w * x * x).sum()
    }

    /// Weights restricted to a subset of node indices.
    pub fn select(&self, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&n| self.diag[n]).collect()
    }
}

/// Trapezoidal weights in the Dirichlet directions, unit weights in the
/// periodic one; the q-grid has no boundary nodes so its weights are all
/// `Δx Δy Δz`.
pub fn quadrature_weights(grid: &DualGrid, tag: GridTag) -> QuadratureWeights {
    let vol = grid.cell_volume();
    let diag = match tag {
        GridTag::Q => vec![vol; grid.node_count(GridTag::Q)],
        GridTag::P => {
            let [nx, ny, nz] = grid.dims(GridTag::P);
            let end = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let mut d = Vec::with_capacity(nx * ny * nz);
            for _k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        d.push(vol * end(i, nx) * end(j, ny));
                    }
                }
            }
            d
        }
    };
    QuadratureWeights { tag, diag }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: [usize; 3], l: [f64; 3]) -> DualGrid {
        DualGrid::new(GridSpec::new(l, n)).unwrap()
    }

    #[test]
    fn default_box_spacing_and_counts() {
        let g = DualGrid::new(GridSpec::cube(16)).unwrap();
        let [dx, dy, dz] = g.spacing();
        assert_eq!(dx, 2.0);
        assert_eq!(dy, 4.0);
        assert!((dz - 2.0 * PI / 16.0).abs() < 1e-15);
        assert_eq!(g.dims(GridTag::Q), [15, 15, 16]);
    }

    #[test]
    fn small_grid_coordinates() {
        let g = grid([3, 3, 2], [2.0, 2.0, 2.0]);
        assert_eq!(g.coords(GridTag::P, Axis::X), &[0.0, 1.0, 2.0]);
        assert_eq!(g.coords(GridTag::Q, Axis::X), &[0.5, 1.5]);
    }

    #[test]
    fn periodic_q_nodes_are_half_shifted() {
        let g = grid([3, 3, 4], [1.0, 1.0, 2.0 * PI]);
        let z = g.coords(GridTag::Q, Axis::Z);
        for (got, want) in z.iter().zip([1.0, 3.0, 5.0, 7.0]) {
            assert!((got - want * PI / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_index_examples() {
        let g = grid([4, 5, 6], [1.0, 1.0, 1.0]);
        assert_eq!(g.flat_index(GridTag::P, 0, 0, 0).unwrap(), 0);
        assert_eq!(g.flat_index(GridTag::P, 3, 4, 5).unwrap(), 119);
        assert_eq!(g.flat_index(GridTag::P, 1, 2, 3).unwrap(), 69);
        assert_eq!(g.unflatten(GridTag::P, 69).unwrap(), (1, 2, 3));
        assert!(g.flat_index(GridTag::P, 4, 0, 0).is_err());
        assert!(g.flat_index(GridTag::Q, 0, 4, 0).is_err());
        assert!(g.unflatten(GridTag::P, 120).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(DualGrid::new(GridSpec::new([1.0, 1.0, 1.0], [2, 3, 2])).is_err());
        assert!(DualGrid::new(GridSpec::new([1.0, 1.0, 1.0], [3, 3, 1])).is_err());
        assert!(DualGrid::new(GridSpec::new([0.0, 1.0, 1.0], [3, 3, 2])).is_err());
        assert!(DualGrid::new(GridSpec::new([1.0, -1.0, 1.0], [3, 3, 2])).is_err());
        let mut s = GridSpec::new([1.0, 1.0, 1.0], [3, 3, 2]);
        s.bc_z = Boundary::Dirichlet;
        assert!(matches!(DualGrid::new(s), Err(MfdError::Unsupported(_))));
    }

    #[test]
    fn weights_match_trapezoid_rule() {
        let g = grid([5, 4, 3], [3.0, 2.0, 1.5]);
        let vol = g.cell_volume();
        let wq = quadrature_weights(&g, GridTag::Q);
        assert!(wq.diag.iter().all(|&w| w == vol));
        let wp = quadrature_weights(&g, GridTag::P);
        for k in 0..3 {
            assert_eq!(wp.diag[g.idx(GridTag::P, 0, 0, k)], vol / 4.0);
            assert_eq!(wp.diag[g.idx(GridTag::P, 4, 3, k)], vol / 4.0);
            assert_eq!(wp.diag[g.idx(GridTag::P, 0, 2, k)], vol / 2.0);
            assert_eq!(wp.diag[g.idx(GridTag::P, 2, 2, k)], vol);
        }
        let v = g.volume();
        assert!((wp.total() - v).abs() <= 1e-14 * v);
        assert!((wq.total() - v).abs() <= 1e-14 * v);
    }

    #[test]
    fn q_nodes_are_midpoints_of_p_cells() {
        let g = grid([5, 4, 3], [3.0, 2.0, 1.5]);
        let [nqx, nqy, nqz] = g.dims(GridTag::Q);
        let lz = g.spec().lz;
        for c in 0..nqz {
            for b in 0..nqy {
                for a in 0..nqx {
                    let q = g.node(GridTag::Q, a, b, c);
                    let mut mean = [0.0; 3];
                    for di in 0..2 {
                        for dj in 0..2 {
                            for dk in 0..2 {
                                let k = c + dk;
                                let mut p = g.node(GridTag::P, a + di, b + dj, k % nqz);
                                if k == nqz {
                                    p[2] += lz;
                                }
                                for d in 0..3 {
                                    mean[d] += p[d] / 8.0;
                                }
                            }
                        }
                    }
                    for d in 0..3 {
                        assert!((mean[d] - q[d]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn interior_boundary_partition() {
        let g = grid([4, 5, 2], [1.0, 1.0, 1.0]);
        assert_eq!(g.len(Dofs::PInterior), 2 * 3 * 2);
        assert_eq!(
            g.len(Dofs::PInterior) + g.len(Dofs::PBoundary),
            g.len(Dofs::P)
        );
        for (n, &f) in g.interior_nodes().iter().enumerate() {
            assert_eq!(g.interior_index(f), Some(n));
            assert_eq!(g.boundary_index(f), None);
        }
    }

    #[test]
    fn star_points_lie_on_faces() {
        let g = grid([4, 5, 3], [3.0, 4.0, 1.0]);
        let pos = g.positions(Dofs::QStar);
        assert_eq!(pos.len(), 2 * (3 + 4) * 3);
        for p in &pos {
            let on_x = p[0] == 0.0 || p[0] == 3.0;
            let on_y = p[1] == 0.0 || p[1] == 4.0;
            assert!(on_x ^ on_y);
        }
        let s = g.star_index(Face::YHigh, 2, 1);
        assert_eq!(
            g.star_position(s),
            [2.5, 4.0, g.coords(GridTag::Q, Axis::Z)[1]]
        );
    }
}
