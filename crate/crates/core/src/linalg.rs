//! Krylov solvers and the plane-wise solve for `-∇⊥²`.

use rayon::prelude::*;

use crate::error::{MfdError, Result};
use crate::grid::{Dofs, DualGrid, GridTag};
use crate::operators::perp_laplacian;
use crate::sparse::{dot, norm2, SparseOperator};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`
    pub residual: f64,
}

/// Conjugate gradients for symmetric positive definite `A`, starting from
/// the contents of `x`.
pub fn cg_solve_into(
    a: &SparseOperator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    if a.rows() != n || a.cols() != n || x.len() != n {
        return Err(MfdError::DimensionMismatch(format!(
            "cg: matrix {}x{}, rhs {}, x {}",
            a.rows(),
            a.cols(),
            n,
            x.len()
        )));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = tol * bnorm;
    for it in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(MfdError::SolverDiverged {
                solver: "cg",
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut()
            .zip(&ap)
            .for_each(|(ri, api)| *ri -= alpha * api);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    let residual = rr.sqrt() / bnorm;
    if residual <= tol {
        return Ok(SolveStats {
            iterations: max_iter,
            residual,
        });
    }
    Err(MfdError::SolverDiverged {
        solver: "cg",
        iterations: max_iter,
        residual,
    })
}

/// `A x = b` from a zero initial guess.
pub fn cg_solve(
    a: &SparseOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut x = vec![0.0; b.len()];
    let stats = cg_solve_into(a, b, &mut x, tol, max_iter)?;
    Ok((x, stats))
}

/// Right-preconditioned BiCGStab for `A x = b`; `x` holds the initial
/// guess. `apply` computes `A v`, `precond` an approximation of `A⁻¹ v`.
pub fn bicgstab<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats>
where
    A: Fn(&[f64], &mut [f64]) -> Result<()>,
    P: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r)?;
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let target = tol * bnorm;
    let mut res = norm2(&r);
    for it in 0..max_iter {
        if res <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: res / bnorm,
            });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(MfdError::SolverDiverged {
                solver: "bicgstab",
                iterations: it,
                residual: res / bnorm,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut p_hat)?;
        apply(&p_hat, &mut v)?;
        alpha = rho / dot(&r_hat, &v);
        // r becomes s
        r.iter_mut().zip(&v).for_each(|(ri, vi)| *ri -= alpha * vi);
        let snorm = norm2(&r);
        if snorm <= target {
            x.iter_mut()
                .zip(&p_hat)
                .for_each(|(xi, pi)| *xi += alpha * pi);
            return Ok(SolveStats {
                iterations: it + 1,
                residual: snorm / bnorm,
            });
        }
        precond(&r, &mut s_hat)?;
        apply(&s_hat, &mut t)?;
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        res = norm2(&r);
        if !res.is_finite() {
            break;
        }
    }
    Err(MfdError::SolverDiverged {
        solver: "bicgstab",
        iterations: max_iter,
        residual: res / bnorm,
    })
}

/// Cholesky factor of a symmetric positive definite band matrix, stored
/// row-wise as `L[i][i-bw..=i]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(MfdError::DimensionMismatch(
                "cholesky needs a square matrix".into(),
            ));
        }
        let bw = a
            .triplets()
            .map(|(r, c, _)| r.abs_diff(c))
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        // row i holds columns i-bw..=i at offsets 0..=bw
        let mut l = vec![0.0; n * w];
        for (r, c, v) in a.triplets() {
            if c <= r {
                l[r * w + (c + bw - r)] = v;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j.saturating_sub(bw).max(j0);
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(MfdError::Singular(format!(
                            "matrix not positive definite at row {i}"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    /// Overwrites `x` (holding the right-hand side) with the solution.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
    }
}

#[derive(Debug, Clone)]
enum PlaneMethod {
    Cholesky(BandedCholesky),
    Cg { tol: f64, max_iter: usize },
}

/// Solves `-∇⊥² x = r` on interior p dofs one z-plane at a time. Every
/// plane carries the same matrix, so it is factored once.
#[derive(Debug, Clone)]
pub struct PerpMassSolver {
    plane: SparseOperator,
    planes: usize,
    method: PlaneMethod,
}

impl PerpMassSolver {
    pub fn new(grid: &DualGrid) -> Result<Self> {
        let plane = Self::plane_operator(grid);
        let chol = BandedCholesky::factor(&plane)?;
        Ok(PerpMassSolver {
            plane,
            planes: grid.dims(GridTag::P)[2],
            method: PlaneMethod::Cholesky(chol),
        })
    }

    /// Plane solves by conjugate gradients instead of the band factorization.
    pub fn with_cg(grid: &DualGrid, tol: f64) -> Self {
        let plane = Self::plane_operator(grid);
        let max_iter = 10 * plane.rows().max(10);
        PerpMassSolver {
            plane,
            planes: grid.dims(GridTag::P)[2],
            method: PlaneMethod::Cg { tol, max_iter },
        }
    }

    fn plane_operator(grid: &DualGrid) -> SparseOperator {
        let [nx, ny, nz] = grid.dims(GridTag::P);
        let m = (nx - 2) * (ny - 2);
        debug_assert_eq!(grid.len(Dofs::PInterior), m * nz);
        // interior dofs are ordered plane by plane; take the first diagonal block
        let rows: Vec<usize> = (0..m).collect();
        perp_laplacian(grid)
            .scale(-1.0)
            .select_rows(&rows, Dofs::PInterior)
            .select_cols(&rows, Dofs::PInterior)
    }

    pub fn plane_matrix(&self) -> &SparseOperator {
        &self.plane
    }

    pub fn solve(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.plane.rows();
        if r.len() != m * self.planes || out.len() != r.len() {
            return Err(MfdError::DimensionMismatch(format!(
                "mass solve: expected {} entries, got {} and {}",
                m * self.planes,
                r.len(),
                out.len()
            )));
        }
        out.par_chunks_mut(m)
            .zip(r.par_chunks(m))
            .try_for_each(|(o, b)| match &self.method {
                PlaneMethod::Cholesky(c) => {
                    o.copy_from_slice(b);
                    c.solve_in_place(o);
                    Ok(())
                }
                PlaneMethod::Cg { tol, max_iter } => {
                    o.iter_mut().for_each(|v| *v = 0.0);
                    cg_solve_into(&self.plane, b, o, *tol, *max_iter).map(|_| ())
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::sparse::TripletBuilder;

    fn laplace_1d(n: usize) -> SparseOperator {
        let mut t = TripletBuilder::new(Dofs::P, n, Dofs::P, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn identity_in_one_step() {
        let a = SparseOperator::identity(Dofs::Q, 4);
        let (x, stats) = cg_solve(&a, &[1.0, -2.0, 3.0, 0.5], 1e-14, 10).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn tridiagonal_against_exact() {
        // x_i = i(n+1-i)/2 solves the n=5 Dirichlet problem with unit load
        let (x, _) = cg_solve(&laplace_1d(5), &[1.0; 5], 1e-14, 20).unwrap();
        for (i, xi) in x.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((xi - k * (6.0 - k) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        match cg_solve(&laplace_1d(50), &[1.0; 50], 1e-14, 3) {
            Err(MfdError::SolverDiverged {
                iterations,
                residual,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bicgstab_nonsymmetric() {
        let n = 30;
        let mut t = TripletBuilder::new(Dofs::P, n, Dofs::P, n);
        for i in 0..n {
            t.push(i, i, 4.0);
            if i + 1 < n {
                t.push(i, i + 1, -1.5);
            }
            if i > 1 {
                t.push(i, i - 2, 0.7);
            }
        }
        let a = t.build();
        let want: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&want);
        let mut x = vec![0.0; n];
        bicgstab(
            |v, o| {
                a.apply(v, o);
                Ok(())
            },
            |v, o| {
                o.copy_from_slice(v);
                Ok(())
            },
            &b,
            &mut x,
            1e-13,
            200,
        )
        .unwrap();
        assert!(x.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn plane_solvers_match_operator() {
        let g = DualGrid::new(GridSpec::new([3.0, 5.0, 1.0], [9, 7, 4])).unwrap();
        let l = perp_laplacian(&g).scale(-1.0);
        let r: Vec<f64> = (0..l.rows())
            .map(|i| ((i * 7919) % 13) as f64 - 6.0)
            .collect();
        for s in [
            PerpMassSolver::new(&g).unwrap(),
            PerpMassSolver::with_cg(&g, 1e-12),
        ] {
            let mut x = vec![0.0; r.len()];
            s.solve(&r, &mut x).unwrap();
            let back = l.mul_vec(&x);
            let err = back
                .iter()
                .zip(&r)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-10 * norm2(&r), "{err}");
        }
    }

    #[test]
    fn plane_cg_on_16_squared_meets_tolerance() {
        let g = DualGrid::new(GridSpec::cube(18)).unwrap();
        let s = PerpMassSolver::new(&g).unwrap();
        let a = s.plane_matrix();
        assert_eq!(a.rows(), 256);
        let b: Vec<f64> = (0..256)
            .map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5)
            .collect();
        let (x, stats) = cg_solve(a, &b, 1e-10, 256).unwrap();
        assert!(stats.iterations <= 256);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let mut t = TripletBuilder::new(Dofs::P, 2, Dofs::P, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        assert!(BandedCholesky::factor(&t.build()).is_err());
    }
}
