//! Wave model and shear-Alfvén-wave system as block operators.
//!
//! Wave model, `p` on interior p nodes and `q` on the q-grid:
//!
//! ```text
//! d/dt [p; q] = T [p; q],   T = [[0, C_pq], [C_qp, 0]]
//! ```
//!
//! SAW system, `φ` on interior p nodes and `V` on the q-grid:
//!
//! ```text
//! M d/dt [φ; V] = D [φ; V] + f(t)
//! M = diag(-∇⊥², I),   D = [[0, C_pq], [ζ C_qp, η ∇∥²]]
//! ```
//!
//! `f` carries manufactured-solution forcing and inhomogeneous boundary
//! data when enabled.

use num_complex::Complex64;

use crate::error::{MfdError, Result};
use crate::field::{
    manufactured_phi_dt, manufactured_solution, mms_sources_with, AdvectiveField, Manufactured,
};
use crate::grid::{quadrature_weights, Dofs, DualGrid, GridTag};
use crate::linalg::PerpMassSolver;
use crate::operators::{
    parallel_gradient, parallel_gradient_qp_full, parallel_laplacian, perp_laplacian_split,
    Mapping, ParallelLaplacian, WeightPair,
};
use crate::sparse::SparseOperator;

pub const DEFAULT_ZETA: f64 = 2500.0;
pub const DEFAULT_ETA: f64 = 4.0 / 3.0;

/// A linear system `M u' = D u + f(t)` with a quadratic energy.
pub trait LinearSystem: Sync {
    fn dim(&self) -> usize;

    /// `out = D u`
    fn apply_d(&self, u: &[f64], out: &mut [f64]);

    /// `out = M u`
    fn apply_m(&self, u: &[f64], out: &mut [f64]);

    /// `out = M⁻¹ r`
    fn solve_m(&self, r: &[f64], out: &mut [f64]) -> Result<()>;

    /// Adds `f(t)` to `out`; systems without forcing leave it untouched.
    fn add_forcing(&self, _t: f64, _out: &mut [f64]) -> Result<()> {
        Ok(())
    }

    fn energy(&self, u: &[f64]) -> f64;

    /// `out = M⁻¹ (D u + f(t))`
    fn rhs(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let mut du = vec![0.0; u.len()];
        self.apply_d(u, &mut du);
        self.add_forcing(t, &mut du)?;
        self.solve_m(&du, out)
    }
}

pub fn discrete_energy(system: &impl LinearSystem, state: &[f64]) -> Result<f64> {
    if state.len() != system.dim() {
        return Err(MfdError::DimensionMismatch(format!(
            "state has {} entries, system has {}",
            state.len(),
            system.dim()
        )));
    }
    Ok(system.energy(state))
}

#[derive(Debug, Clone)]
pub struct WaveSystem {
    pub c_pq: SparseOperator,
    pub c_qp: SparseOperator,
    /// `X_p` restricted to interior nodes.
    pub wp: Vec<f64>,
    pub wq: Vec<f64>,
    pub weights: WeightPair,
    pub dims: [usize; 3],
}

pub fn assemble_wave(
    grid: &DualGrid,
    field: &AdvectiveField,
    weights: WeightPair,
) -> Result<WaveSystem> {
    let c_pq = parallel_gradient(grid, field, Mapping::QToP, weights)?;
    let c_qp = parallel_gradient(grid, field, Mapping::PToQ, weights)?;
    let wp = quadrature_weights(grid, GridTag::P).select(grid.interior_nodes());
    let wq = quadrature_weights(grid, GridTag::Q).diag;
    Ok(WaveSystem {
        c_pq,
        c_qp,
        wp,
        wq,
        weights,
        dims: grid.dims(GridTag::P),
    })
}

impl WaveSystem {
    pub fn np(&self) -> usize {
        self.wp.len()
    }

    pub fn nq(&self) -> usize {
        self.wq.len()
    }

    /// `[[0, C_pq], [C_qp, 0]]`
    pub fn t_matrix(&self) -> Result<SparseOperator> {
        SparseOperator::block(
            &[vec![None, Some(&self.c_pq)], vec![Some(&self.c_qp), None]],
            Dofs::P,
        )
    }

    /// Diagonal of `X = diag(X_p, X_q)`.
    pub fn x_diag(&self) -> Vec<f64> {
        self.wp.iter().chain(&self.wq).copied().collect()
    }
}

impl LinearSystem for WaveSystem {
    fn dim(&self) -> usize {
        self.np() + self.nq()
    }

    fn apply_d(&self, u: &[f64], out: &mut [f64]) {
        let np = self.np();
        let (p, q) = u.split_at(np);
        let (dp, dq) = out.split_at_mut(np);
        self.c_pq.apply(q, dp);
        self.c_qp.apply(p, dq);
    }

    fn apply_m(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }

    fn solve_m(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(r);
        Ok(())
    }

    /// `½ (‖p‖² + ‖q‖²)`
    fn energy(&self, u: &[f64]) -> f64 {
        0.5 * self
            .wp
            .iter()
            .chain(&self.wq)
            .zip(u)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
    }
}

/// Manufactured-solution forcing with the matching boundary data.
#[derive(Debug, Clone)]
pub struct MmsForcing {
    pub field: AdvectiveField,
    p_interior: Vec<[f64; 3]>,
    /// `b` and its Jacobian at interior p nodes and at q nodes.
    p_field: Vec<([f64; 3], [[f64; 3]; 3])>,
    q_field: Vec<([f64; 3], [[f64; 3]; 3])>,
    p_boundary: Vec<[f64; 3]>,
    q_pos: Vec<[f64; 3]>,
    star_pos: Vec<[f64; 3]>,
    /// `C_qp` columns on boundary p nodes.
    c_qp_b: SparseOperator,
    /// `∇⊥²` columns on boundary p nodes.
    l_perp_b: SparseOperator,
}

#[derive(Debug, Clone)]
pub struct SawSystem {
    pub c_pq: SparseOperator,
    pub c_qp: SparseOperator,
    /// `∇⊥²` on interior dofs.
    pub l_perp: SparseOperator,
    pub l_par: ParallelLaplacian,
    pub zeta: f64,
    pub eta: f64,
    pub weights: WeightPair,
    pub wp: Vec<f64>,
    pub wq: Vec<f64>,
    pub dims: [usize; 3],
    pub solver: PerpMassSolver,
    pub forcing: Option<MmsForcing>,
}

pub fn assemble_saws(
    grid: &DualGrid,
    field: &AdvectiveField,
    zeta: f64,
    eta: f64,
    weights: WeightPair,
) -> Result<SawSystem> {
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(MfdError::param(
            "zeta",
            format!("must be positive, got {zeta}"),
        ));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(MfdError::param(
            "eta",
            format!("must be non-negative, got {eta}"),
        ));
    }
    let c_pq = parallel_gradient(grid, field, Mapping::QToP, weights)?;
    let c_qp = parallel_gradient(grid, field, Mapping::PToQ, weights)?;
    let l_perp = perp_laplacian_split(grid).interior;
    let l_par = parallel_laplacian(grid, field)?;
    let wp = quadrature_weights(grid, GridTag::P).select(grid.interior_nodes());
    let wq = quadrature_weights(grid, GridTag::Q).diag;
    let solver = PerpMassSolver::new(grid)?;
    Ok(SawSystem {
        c_pq,
        c_qp,
        l_perp,
        l_par,
        zeta,
        eta,
        weights,
        wp,
        wq,
        dims: grid.dims(GridTag::P),
        solver,
        forcing: None,
    })
}

impl SawSystem {
    pub fn np(&self) -> usize {
        self.wp.len()
    }

    pub fn nq(&self) -> usize {
        self.wq.len()
    }

    /// Enables the manufactured-solution sources and boundary data.
    pub fn with_mms(mut self, grid: &DualGrid, field: &AdvectiveField) -> Result<Self> {
        let c_qp_b = parallel_gradient_qp_full(grid, field, self.weights.beta)?
            .select_cols(grid.boundary_nodes(), Dofs::PBoundary);
        let l_perp_b = perp_laplacian_split(grid).boundary;
        let p_interior = grid.positions(Dofs::PInterior);
        let q_pos = grid.positions(Dofs::Q);
        let sample = |pos: &[[f64; 3]]| -> Result<Vec<_>> {
            pos.iter()
                .map(|p| field.b_with_jacobian(p[0], p[1]))
                .collect()
        };
        self.forcing = Some(MmsForcing {
            field: *field,
            p_field: sample(&p_interior)?,
            q_field: sample(&q_pos)?,
            p_interior,
            p_boundary: grid.positions(Dofs::PBoundary),
            q_pos,
            star_pos: grid.positions(Dofs::QStar),
            c_qp_b,
            l_perp_b,
        });
        Ok(self)
    }

    /// `[φ; V]` sampled from the manufactured solution.
    pub fn manufactured_state(&self, grid: &DualGrid, t: f64) -> Vec<f64> {
        let phi = grid
            .positions(Dofs::PInterior)
            .into_iter()
            .map(|[x, y, z]| manufactured_solution(Manufactured::Phi, x, y, z, t));
        let v = grid
            .positions(Dofs::Q)
            .into_iter()
            .map(|[x, y, z]| manufactured_solution(Manufactured::V, x, y, z, t));
        phi.chain(v).collect()
    }

    /// `diag(-∇⊥², I)`
    pub fn m_matrix(&self) -> Result<SparseOperator> {
        let neg = self.l_perp.scale(-1.0);
        let id = SparseOperator::identity(Dofs::Q, self.nq());
        SparseOperator::block(&[vec![Some(&neg), None], vec![None, Some(&id)]], Dofs::P)
    }

    /// `diag(-∇⊥², I/ζ)`
    pub fn m_tilde(&self) -> Result<SparseOperator> {
        let neg = self.l_perp.scale(-1.0);
        let id = SparseOperator::diagonal(Dofs::Q, &vec![1.0 / self.zeta; self.nq()]);
        SparseOperator::block(&[vec![Some(&neg), None], vec![None, Some(&id)]], Dofs::P)
    }

    /// `[[0, C_pq], [ζ C_qp, η ∇∥²]]`
    pub fn d_matrix(&self) -> Result<SparseOperator> {
        self.d_scaled(self.zeta, self.eta)
    }

    /// `D̃ = diag(I, I/ζ) D`
    pub fn d_tilde(&self) -> Result<SparseOperator> {
        self.d_scaled(1.0, self.eta / self.zeta)
    }

    fn d_scaled(&self, z: f64, e: f64) -> Result<SparseOperator> {
        let zc = self.c_qp.scale(z);
        let el = self.l_par.q.scale(e);
        let lower_right = if e == 0.0 { None } else { Some(&el) };
        SparseOperator::block(
            &[vec![None, Some(&self.c_pq)], vec![Some(&zc), lower_right]],
            Dofs::P,
        )
    }

    /// Diagonal of `X = diag(X_p, X_q)`.
    pub fn x_diag(&self) -> Vec<f64> {
        self.wp.iter().chain(&self.wq).copied().collect()
    }
}

impl LinearSystem for SawSystem {
    fn dim(&self) -> usize {
        self.np() + self.nq()
    }

    fn apply_d(&self, u: &[f64], out: &mut [f64]) {
        let np = self.np();
        let (phi, v) = u.split_at(np);
        let (dphi, dv) = out.split_at_mut(np);
        self.c_pq.apply(v, dphi);
        self.c_qp.apply(phi, dv);
        if self.zeta != 1.0 {
            dv.iter_mut().for_each(|x| *x *= self.zeta);
        }
        if self.eta != 0.0 {
            self.l_par.q.apply_add(self.eta, v, dv);
        }
    }

    fn apply_m(&self, u: &[f64], out: &mut [f64]) {
        let np = self.np();
        let (phi, v) = u.split_at(np);
        let (mphi, mv) = out.split_at_mut(np);
        self.l_perp.apply(phi, mphi);
        mphi.iter_mut().for_each(|x| *x = -*x);
        mv.copy_from_slice(v);
    }

    fn solve_m(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let np = self.np();
        let (rphi, rv) = r.split_at(np);
        let (ophi, ov) = out.split_at_mut(np);
        self.solver.solve(rphi, ophi)?;
        ov.copy_from_slice(rv);
        Ok(())
    }

    fn add_forcing(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let Some(f) = &self.forcing else {
            return Ok(());
        };
        let np = self.np();
        let (fphi, fv) = out.split_at_mut(np);
        // -∇⊥²_ii φ̇_i = C_pq V - S_φ + ∇⊥²_ib φ̇_b
        for ((o, p), (b, jac)) in fphi.iter_mut().zip(&f.p_interior).zip(&f.p_field) {
            *o -= mms_sources_with(b, jac, *p, t, self.zeta, self.eta).0;
        }
        let phi_b: Vec<f64> = f
            .p_boundary
            .iter()
            .map(|&[x, y, z]| manufactured_solution(Manufactured::Phi, x, y, z, t))
            .collect();
        let phi_dt_b: Vec<f64> = f
            .p_boundary
            .iter()
            .map(|&[x, y, z]| manufactured_phi_dt(x, y, z, t))
            .collect();
        f.l_perp_b.apply_add(1.0, &phi_dt_b, fphi);
        // V̇ = ζ(C_qp,i φ_i + C_qp,b φ_b) + η(∇∥² V + ∇∥²_star V_star) + S_V
        for ((o, p), (b, jac)) in fv.iter_mut().zip(&f.q_pos).zip(&f.q_field) {
            *o += mms_sources_with(b, jac, *p, t, self.zeta, self.eta).1;
        }
        f.c_qp_b.apply_add(self.zeta, &phi_b, fv);
        if self.eta != 0.0 {
            let v_star: Vec<f64> = f
                .star_pos
                .iter()
                .map(|&[x, y, z]| manufactured_solution(Manufactured::V, x, y, z, t))
                .collect();
            self.l_par.star.apply_add(self.eta, &v_star, fv);
        }
        Ok(())
    }

    /// `½ [(1/ζ) Vᵀ X_q V + φᵀ X_p (-∇⊥²) φ]`
    fn energy(&self, u: &[f64]) -> f64 {
        let np = self.np();
        let (phi, v) = u.split_at(np);
        let lphi = self.l_perp.mul_vec(phi);
        let ep: f64 = self
            .wp
            .iter()
            .zip(phi)
            .zip(&lphi)
            .map(|((w, a), b)| -w * a * b)
            .sum();
        let ev: f64 = self.wq.iter().zip(v).map(|(w, x)| w * x * x).sum();
        0.5 * (ev / self.zeta + ep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionResult {
    pub omega0: f64,
    pub gamma: f64,
    pub roots: [Complex64; 2],
}

impl DispersionResult {
    /// `ω² + 2iγω - ω₀²`
    pub fn residual(&self, omega: Complex64) -> Complex64 {
        omega * omega + Complex64::new(0.0, 2.0 * self.gamma) * omega - self.omega0 * self.omega0
    }

    /// Both roots on the imaginary axis (pure damping).
    pub fn purely_imaginary(&self) -> bool {
        self.gamma > self.omega0
    }
}

/// Roots of `ω² + 2iγω - ω₀² = 0`, `ω₀ = √ζ |k∥|/|k⊥|`, `γ = η k∥²/2`.
pub fn dispersion_roots(k_par: f64, k_perp: f64, zeta: f64, eta: f64) -> Result<DispersionResult> {
    if k_perp == 0.0 || !k_perp.is_finite() {
        return Err(MfdError::param("k_perp", "must be finite and non-zero"));
    }
    if !(zeta > 0.0) || !(eta >= 0.0) || !k_par.is_finite() {
        return Err(MfdError::param(
            "dispersion",
            "needs zeta > 0, eta >= 0, finite k_par",
        ));
    }
    let omega0 = zeta.sqrt() * k_par.abs() / k_perp.abs();
    let gamma = 0.5 * eta * k_par * k_par;
    let disc = (omega0 - gamma) * (omega0 + gamma);
    let roots = if disc >= 0.0 {
        let re = disc.sqrt();
        [Complex64::new(re, -gamma), Complex64::new(-re, -gamma)]
    } else {
        // ω = i s with s² + 2γ s + ω₀² = 0; avoid cancellation in the small root
        let big = -(gamma + (-disc).sqrt());
        [
            Complex64::new(0.0, big),
            Complex64::new(0.0, omega0 * omega0 / big),
        ]
    };
    Ok(DispersionResult {
        omega0,
        gamma,
        roots,
    })
}
