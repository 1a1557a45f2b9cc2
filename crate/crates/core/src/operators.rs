//! Discrete operators on the dual grid.
//!
//! Eight-point staggered stencils connect the two grids:
//!
//! ```text
//! (D_x|pq f)_{i,j,k} = 1/(4Δx) Σ_{b∈{j⁻,j⁺}, c∈{k⁻,k⁺}} f_{i⁺,b,c} - f_{i⁻,b,c}
//! ```
//!
//! and analogously from p to q. Operators whose destination is the p-grid
//! only carry interior rows; boundary p values are Dirichlet data and are
//! eliminated from the unknowns.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{MfdError, Result};
use crate::field::AdvectiveField;
use crate::grid::{quadrature_weights, Axis, Dofs, DualGrid, Face, GridTag};
use crate::sparse::{SparseOperator, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mapping {
    /// q-grid values to interior p nodes.
    QToP,
    /// p-grid values (interior dofs) to q nodes.
    PToQ,
}

/// Weights of the advective part in `C_pq` (`alpha`) and `C_qp` (`beta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPair {
    pub alpha: f64,
    pub beta: f64,
}

impl WeightPair {
    pub const HALF: WeightPair = WeightPair {
        alpha: 0.5,
        beta: 0.5,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MfdError::param(
                    name,
                    format!("must lie in [0, 1], got {v}"),
                ));
            }
        }
        Ok(WeightPair { alpha, beta })
    }

    /// `alpha + beta == 1` up to rounding.
    pub fn is_energy_preserving(&self) -> bool {
        (self.alpha + self.beta - 1.0).abs() <= 4.0 * f64::EPSILON
    }
}

fn axis_spacing(grid: &DualGrid, axis: Axis) -> f64 {
    grid.spacing()[axis.index()]
}

/// Stencil from q to interior p nodes (`PInterior × Q`).
fn d_q2p(grid: &DualGrid, axis: Axis) -> SparseOperator {
    let [_, _, nz] = grid.dims(GridTag::P);
    let h = 0.25 / axis_spacing(grid, axis);
    let interior = grid.interior_nodes();
    let mut t = TripletBuilder::with_capacity(
        Dofs::PInterior,
        interior.len(),
        Dofs::Q,
        grid.len(Dofs::Q),
        8 * interior.len(),
    );
    for (row, &f) in interior.iter().enumerate() {
        let (i, j, k) = grid.unflatten(GridTag::P, f).expect("interior node");
        for d in 0..8usize {
            let off = [d & 1, (d >> 1) & 1, (d >> 2) & 1];
            let a = i + off[0] - 1;
            let b = j + off[1] - 1;
            let c = (k + nz - 1 + off[2]) % nz;
            let s = if off[axis.index()] == 1 { h } else { -h };
            t.push(row, grid.idx(GridTag::Q, a, b, c), s);
        }
    }
    t.build()
}

/// Stencil from the full p-grid to q (`Q × P`).
pub fn derivative_p2q_full(grid: &DualGrid, axis: Axis) -> SparseOperator {
    let [nqx, nqy, nqz] = grid.dims(GridTag::Q);
    let h = 0.25 / axis_spacing(grid, axis);
    let nq = grid.len(Dofs::Q);
    let mut t = TripletBuilder::with_capacity(Dofs::Q, nq, Dofs::P, grid.len(Dofs::P), 8 * nq);
    for c in 0..nqz {
        for b in 0..nqy {
            for a in 0..nqx {
                let row = grid.idx(GridTag::Q, a, b, c);
                for d in 0..8usize {
                    let off = [d & 1, (d >> 1) & 1, (d >> 2) & 1];
                    let col = grid.idx(GridTag::P, a + off[0], b + off[1], (c + off[2]) % nqz);
                    let s = if off[axis.index()] == 1 { h } else { -h };
                    t.push(row, col, s);
                }
            }
        }
    }
    t.build()
}

pub fn derivative_stencil(grid: &DualGrid, axis: Axis, mapping: Mapping) -> SparseOperator {
    match mapping {
        Mapping::QToP => d_q2p(grid, axis),
        Mapping::PToQ => {
            derivative_p2q_full(grid, axis).select_cols(grid.interior_nodes(), Dofs::PInterior)
        }
    }
}

/// Components of `b` on the p-grid restricted to interior nodes, and on q.
fn b_interior(grid: &DualGrid, field: &AdvectiveField) -> Result<[Vec<f64>; 3]> {
    let full = field.sample_b(grid, GridTag::P)?;
    Ok(full.map(|s| grid.interior_nodes().iter().map(|&f| s.values[f]).collect()))
}

fn b_full(grid: &DualGrid, field: &AdvectiveField, tag: GridTag) -> Result<[Vec<f64>; 3]> {
    Ok(field.sample_b(grid, tag)?.map(|s| s.values))
}

fn sum_axes(terms: [SparseOperator; 3]) -> SparseOperator {
    let [x, y, z] = terms;
    let xy = SparseOperator::lin_comb(1.0, &x, 1.0, &y).expect("same layout");
    SparseOperator::lin_comb(1.0, &xy, 1.0, &z).expect("same layout")
}

/// `A = Σ diag(b_d) D_d`, `b` sampled on the destination grid.
pub fn advective_form(
    grid: &DualGrid,
    field: &AdvectiveField,
    mapping: Mapping,
) -> Result<SparseOperator> {
    let b = match mapping {
        Mapping::QToP => b_interior(grid, field)?,
        Mapping::PToQ => b_full(grid, field, GridTag::Q)?,
    };
    Ok(sum_axes(Axis::ALL.map(|ax| {
        derivative_stencil(grid, ax, mapping).scale_rows(&b[ax.index()])
    })))
}

/// `B = Σ D_d diag(b_d)`, `b` sampled on the source grid.
pub fn divergence_form(
    grid: &DualGrid,
    field: &AdvectiveField,
    mapping: Mapping,
) -> Result<SparseOperator> {
    let b = match mapping {
        Mapping::QToP => b_full(grid, field, GridTag::Q)?,
        Mapping::PToQ => b_interior(grid, field)?,
    };
    Ok(sum_axes(Axis::ALL.map(|ax| {
        derivative_stencil(grid, ax, mapping).scale_cols(&b[ax.index()])
    })))
}

/// `C_pq = αA_pq + (1-α)B_pq` or `C_qp = βA_qp + (1-β)B_qp`.
pub fn parallel_gradient(
    grid: &DualGrid,
    field: &AdvectiveField,
    mapping: Mapping,
    weights: WeightPair,
) -> Result<SparseOperator> {
    let w = match mapping {
        Mapping::QToP => weights.alpha,
        Mapping::PToQ => weights.beta,
    };
    let a = advective_form(grid, field, mapping)?;
    let b = divergence_form(grid, field, mapping)?;
    SparseOperator::lin_comb(w, &a, 1.0 - w, &b)
}

/// `C_qp` acting on the full p-grid (`Q × P`), for inhomogeneous boundary
/// data.
pub fn parallel_gradient_qp_full(
    grid: &DualGrid,
    field: &AdvectiveField,
    beta: f64,
) -> Result<SparseOperator> {
    let bq = b_full(grid, field, GridTag::Q)?;
    let bp = b_full(grid, field, GridTag::P)?;
    let terms = Axis::ALL.map(|ax| {
        let d = derivative_p2q_full(grid, ax);
        let a = d.scale_rows(&bq[ax.index()]);
        let b = d.scale_cols(&bp[ax.index()]);
        SparseOperator::lin_comb(beta, &a, 1.0 - beta, &b).expect("same layout")
    });
    Ok(sum_axes(terms))
}

/// An operator split by source columns into unknowns and boundary data.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    pub interior: SparseOperator,
    pub boundary: SparseOperator,
}

/// Five-point `∂xx + ∂yy` on interior p rows (`PInterior × P`).
fn perp_laplacian_full(grid: &DualGrid) -> SparseOperator {
    let [dx, dy, _] = grid.spacing();
    let (cx, cy) = (1.0 / (dx * dx), 1.0 / (dy * dy));
    let interior = grid.interior_nodes();
    let mut t = TripletBuilder::with_capacity(
        Dofs::PInterior,
        interior.len(),
        Dofs::P,
        grid.len(Dofs::P),
        5 * interior.len(),
    );
    for (row, &f) in interior.iter().enumerate() {
        let (i, j, k) = grid.unflatten(GridTag::P, f).expect("interior node");
        t.push(row, f, -2.0 * (cx + cy));
        t.push(row, grid.idx(GridTag::P, i - 1, j, k), cx);
        t.push(row, grid.idx(GridTag::P, i + 1, j, k), cx);
        t.push(row, grid.idx(GridTag::P, i, j - 1, k), cy);
        t.push(row, grid.idx(GridTag::P, i, j + 1, k), cy);
    }
    t.build()
}

/// `∇⊥²` with homogeneous Dirichlet data eliminated (`PInterior × PInterior`).
pub fn perp_laplacian(grid: &DualGrid) -> SparseOperator {
    perp_laplacian_split(grid).interior
}

pub fn perp_laplacian_split(grid: &DualGrid) -> SplitOperator {
    let full = perp_laplacian_full(grid);
    SplitOperator {
        interior: full.select_cols(grid.interior_nodes(), Dofs::PInterior),
        boundary: full.select_cols(grid.boundary_nodes(), Dofs::PBoundary),
    }
}

/// Gradient component from q (plus boundary star points) to every p node.
///
/// Interior rows coincide with `D|pq`. On a boundary p node the missing
/// outer q neighbours are replaced by star points half a cell away, and
/// the transverse average uses the q nodes that exist. With these weights
/// `X_q D|qp = -Gᵀ X_p`, which makes the parallel Laplacian symmetric.
#[derive(Debug, Clone)]
pub struct ExtendedGradient {
    /// `P × Q`
    pub q: SparseOperator,
    /// `P × QStar`
    pub star: SparseOperator,
}

pub fn extended_gradient(grid: &DualGrid, axis: Axis) -> ExtendedGradient {
    let [npx, npy, nz] = grid.dims(GridTag::P);
    let [nqx, nqy, _] = grid.dims(GridTag::Q);
    let h = 0.25 / axis_spacing(grid, axis);
    let np = grid.len(Dofs::P);
    let mut tq = TripletBuilder::with_capacity(Dofs::P, np, Dofs::Q, grid.len(Dofs::Q), 8 * np);
    let mut ts = TripletBuilder::new(Dofs::P, np, Dofs::QStar, grid.len(Dofs::QStar));
    let ax = axis.index();
    for k in 0..nz {
        for j in 0..npy {
            for i in 0..npx {
                let row = grid.idx(GridTag::P, i, j, k);
                let fx = if i == 0 || i == npx - 1 { 2.0 } else { 1.0 };
                let fy = if j == 0 || j == npy - 1 { 2.0 } else { 1.0 };
                let r = fx * fy;
                for d in 0..8usize {
                    let off = [d & 1, (d >> 1) & 1, (d >> 2) & 1];
                    // q index = p index - 1 + off; may fall outside in x or y
                    let a = i as isize - 1 + off[0] as isize;
                    let b = j as isize - 1 + off[1] as isize;
                    let c = (k + nz - 1 + off[2]) % nz;
                    let s = if off[ax] == 1 { r * h } else { -r * h };
                    let a_in = (0..nqx as isize).contains(&a);
                    let b_in = (0..nqy as isize).contains(&b);
                    match (a_in, b_in) {
                        (true, true) => {
                            tq.push(row, grid.idx(GridTag::Q, a as usize, b as usize, c), s)
                        }
                        (false, true) if axis == Axis::X => {
                            let face = if a < 0 { Face::XLow } else { Face::XHigh };
                            ts.push(row, grid.star_index(face, b as usize, c), s);
                        }
                        (true, false) if axis == Axis::Y => {
                            let face = if b < 0 { Face::YLow } else { Face::YHigh };
                            ts.push(row, grid.star_index(face, a as usize, c), s);
                        }
                        // transverse neighbour outside: its weight is carried by r
                        _ => {}
                    }
                }
            }
        }
    }
    ExtendedGradient {
        q: tq.build(),
        star: ts.build(),
    }
}

/// Support-operator `∇∥² = ∇·(b bᵀ ∇)` on the q-grid.
#[derive(Debug, Clone)]
pub struct ParallelLaplacian {
    /// `Q × Q`
    pub q: SparseOperator,
    /// `Q × QStar`, the coupling to Dirichlet data on the boundary.
    pub star: SparseOperator,
}

impl ParallelLaplacian {
    /// `L V + L_star V_star`
    pub fn apply(&self, v: &[f64], star: Option<&[f64]>, out: &mut [f64]) {
        self.q.apply(v, out);
        if let Some(s) = star {
            self.star.apply_add(1.0, s, out);
        }
    }
}

pub fn parallel_laplacian(grid: &DualGrid, field: &AdvectiveField) -> Result<ParallelLaplacian> {
    let b = b_full(grid, field, GridTag::P)?;
    let grads = Axis::ALL.map(|ax| extended_gradient(grid, ax));
    let mut lq: Option<SparseOperator> = None;
    let mut ls: Option<SparseOperator> = None;
    for d in Axis::ALL {
        // flux_d = Σ_e diag(b_d b_e) G_e
        let mut fq = SparseOperator::zeros(Dofs::P, grid.len(Dofs::P), Dofs::Q, grid.len(Dofs::Q));
        let mut fs = SparseOperator::zeros(
            Dofs::P,
            grid.len(Dofs::P),
            Dofs::QStar,
            grid.len(Dofs::QStar),
        );
        for e in Axis::ALL {
            let k: Vec<f64> = b[d.index()]
                .iter()
                .zip(&b[e.index()])
                .map(|(x, y)| x * y)
                .collect();
            let g = &grads[e.index()];
            fq = SparseOperator::lin_comb(1.0, &fq, 1.0, &g.q.scale_rows(&k))?;
            fs = SparseOperator::lin_comb(1.0, &fs, 1.0, &g.star.scale_rows(&k))?;
        }
        let div = derivative_p2q_full(grid, d);
        let tq = div.matmul(&fq)?;
        let ts = div.matmul(&fs)?;
        lq = Some(match lq {
            None => tq,
            Some(acc) => SparseOperator::lin_comb(1.0, &acc, 1.0, &tq)?,
        });
        ls = Some(match ls {
            None => ts,
            Some(acc) => SparseOperator::lin_comb(1.0, &acc, 1.0, &ts)?,
        });
    }
    Ok(ParallelLaplacian {
        q: lq.expect("three axes"),
        star: ls.expect("three axes"),
    })
}

/// q rows whose eight p neighbours are all interior.
pub fn interior_q_rows(grid: &DualGrid) -> Vec<usize> {
    let [nqx, nqy, nqz] = grid.dims(GridTag::Q);
    let mut rows = Vec::new();
    for c in 0..nqz {
        for b in 1..nqy.saturating_sub(1) {
            for a in 1..nqx.saturating_sub(1) {
                rows.push(grid.idx(GridTag::Q, a, b, c));
            }
        }
    }
    rows
}

/// How one composition `C_qp(β) C_pq(α)` compares with `∇∥²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionResidual {
    pub alpha: f64,
    pub beta: f64,
    /// `max |(C_qp C_pq - ∇∥²)_rc|` over interior q rows.
    pub interior_mismatch: f64,
    /// `max |S - Sᵀ|` with `S = X_q C_qp C_pq`.
    pub symmetry: f64,
    /// Largest `vᵀ S v / vᵀ X_q v` over the random probes.
    pub max_rayleigh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemarkReport {
    pub interior_rows: usize,
    /// Largest entry of `∇∥²`, for scale.
    pub max_entry: f64,
    /// `[(α=1, β=0), (α=0, β=1)]`
    pub orderings: [CompositionResidual; 2],
}

impl RemarkReport {
    /// The ordering with the smaller interior mismatch.
    pub fn best(&self) -> &CompositionResidual {
        let [a, b] = &self.orderings;
        if a.interior_mismatch <= b.interior_mismatch {
            a
        } else {
            b
        }
    }
}

const REMARK_PROBES: usize = 20;
const REMARK_SEED: u64 = 0x5eed_0001;

pub fn compose_remark_check(grid: &DualGrid, field: &AdvectiveField) -> Result<RemarkReport> {
    let lap = parallel_laplacian(grid, field)?;
    let rows = interior_q_rows(grid);
    let wq = quadrature_weights(grid, GridTag::Q).diag;
    let mut rng = SplitMix64::seed_from_u64(REMARK_SEED);
    let probes: Vec<Vec<f64>> = (0..REMARK_PROBES)
        .map(|_| (0..wq.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let mut orderings = Vec::with_capacity(2);
    for (alpha, beta) in [(1.0, 0.0), (0.0, 1.0)] {
        let w = WeightPair { alpha, beta };
        let cpq = parallel_gradient(grid, field, Mapping::QToP, w)?;
        let cqp = parallel_gradient(grid, field, Mapping::PToQ, w)?;
        let comp = cqp.matmul(&cpq)?;
        let diff = SparseOperator::lin_comb(1.0, &comp, -1.0, &lap.q)?;
        let mut mismatch = 0.0f64;
        for &r in &rows {
            for (_, v) in diff.row(r) {
                mismatch = mismatch.max(v.abs());
            }
        }
        let s = comp.scale_rows(&wq);
        let symmetry = s.max_abs_diff(&s.transpose())?;
        let mut max_rayleigh = f64::NEG_INFINITY;
        for v in &probes {
            let sv = s.mul_vec(v);
            let num: f64 = v.iter().zip(&sv).map(|(a, b)| a * b).sum();
            let den: f64 = v.iter().zip(&wq).map(|(a, w)| w * a * a).sum();
            max_rayleigh = max_rayleigh.max(num / den);
        }
        orderings.push(CompositionResidual {
            alpha,
            beta,
            interior_mismatch: mismatch,
            symmetry,
            max_rayleigh,
        });
    }
    Ok(RemarkReport {
        interior_rows: rows.len(),
        max_entry: lap.q.max_abs(),
        orderings: [orderings[0], orderings[1]],
    })
}
