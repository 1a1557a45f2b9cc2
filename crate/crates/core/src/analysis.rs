//! Verification harnesses: adjointness residuals, convergence studies,
//! growth rates, spectra and matrix export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{MfdError, Result};
use crate::field::{manufactured_solution, AdvectiveField, Manufactured};
use crate::grid::{quadrature_weights, Dofs, DualGrid, GridSpec, GridTag};
use crate::models::{assemble_saws, LinearSystem, SawSystem, WaveSystem};
use crate::operators::{parallel_gradient, Mapping, WeightPair};
use crate::sparse::{dot, norm2, SparseOperator};
use crate::timeint::{run_simulation, EnergyTrace, Integrator, RunOptions, TraceMeta};

pub const DEFAULT_SEED: u64 = 20_240_917;
pub const DEFAULT_MAX_DENSE_DOFS: usize = 1500;

/// Uniform entries in `[-1, 1)`.
pub fn random_vector(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `max |pᵀX_p C_pq q + qᵀX_q C_qp p| / (‖p‖_X ‖q‖_X)` over random pairs.
pub fn skewness_residual(
    c_pq: &SparseOperator,
    c_qp: &SparseOperator,
    wp: &[f64],
    wq: &[f64],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if c_pq.rows() != wp.len()
        || c_pq.cols() != wq.len()
        || c_qp.rows() != wq.len()
        || c_qp.cols() != wp.len()
    {
        return Err(MfdError::DimensionMismatch(format!(
            "C_pq is {}x{}, C_qp is {}x{}, weights {} and {}",
            c_pq.rows(),
            c_pq.cols(),
            c_qp.rows(),
            c_qp.cols(),
            wp.len(),
            wq.len()
        )));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let p = random_vector(&mut rng, wp.len());
        let q = random_vector(&mut rng, wq.len());
        worst = worst.max(pair_residual(c_pq, c_qp, wp, wq, &p, &q));
    }
    Ok(worst)
}

/// The normalized bilinear-form sum for one pair; zero when either vector is.
pub fn pair_residual(
    c_pq: &SparseOperator,
    c_qp: &SparseOperator,
    wp: &[f64],
    wq: &[f64],
    p: &[f64],
    q: &[f64],
) -> f64 {
    let xp_cpq_q = weighted(wp, p, &c_pq.mul_vec(q));
    let xq_cqp_p = weighted(wq, q, &c_qp.mul_vec(p));
    let norm = weighted(wp, p, p).sqrt() * weighted(wq, q, q).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (xp_cpq_q + xq_cqp_p).abs() / norm
}

fn weighted(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Errors per resolution with a least-squares slope of `log err` against
/// `log h`, where `h = (Δx/Δx₀ · Δy/Δy₀ · Δz/Δz₀)^{1/3}` relative to the
/// coarsest level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub resolutions: Vec<[usize; 3]>,
    pub h: Vec<f64>,
    pub labels: Vec<String>,
    /// `errors[field][level]`
    pub errors: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

impl ConvergenceTable {
    pub fn new(specs: &[GridSpec], labels: &[&str], errors: Vec<Vec<f64>>) -> Result<Self> {
        if specs.len() < 3 {
            return Err(MfdError::param(
                "levels",
                format!("need at least 3 resolutions, got {}", specs.len()),
            ));
        }
        let spacing = |s: &GridSpec| DualGrid::new(s.clone()).map(|g| g.spacing());
        let base = spacing(&specs[0])?;
        let mut h = Vec::with_capacity(specs.len());
        for s in specs {
            let d = spacing(s)?;
            h.push(((d[0] / base[0]) * (d[1] / base[1]) * (d[2] / base[2])).cbrt());
        }
        let mut slopes = Vec::with_capacity(errors.len());
        for e in &errors {
            if e.len() != h.len() || e.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(MfdError::Singular(format!(
                    "convergence errors must be positive and finite: {e:?}"
                )));
            }
            let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
            let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
            slopes.push(ls_slope(&x, &y));
        }
        Ok(ConvergenceTable {
            resolutions: specs.iter().map(|s| [s.npx, s.npy, s.npz]).collect(),
            h,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            errors,
            slopes,
        })
    }

    /// `h,err` for one field, `h,err_<label>,...` otherwise.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h");
        if self.errors.len() == 1 {
            s.push_str(",err");
        } else {
            for l in &self.labels {
                let _ = write!(s, ",err_{l}");
            }
        }
        s.push('\n');
        for (i, h) in self.h.iter().enumerate() {
            let _ = write!(s, "{h:.16e}");
            for e in &self.errors {
                let _ = write!(s, ",{:.16e}", e[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| MfdError::io(path, e))
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Scalar test function with its gradient, given the domain lengths.
pub type TestFunction = dyn Fn([f64; 3], [f64; 3]) -> (f64, [f64; 3]) + Sync;

/// `f = sin(2πx/Lx) sin(2πy/Ly) sin(z)` and its gradient.
pub fn trig_test_function(lengths: [f64; 3], [x, y, z]: [f64; 3]) -> (f64, [f64; 3]) {
    let tau = 2.0 * std::f64::consts::PI;
    let (kx, ky) = (tau / lengths[0], tau / lengths[1]);
    let (sx, cx) = (kx * x).sin_cos();
    let (sy, cy) = (ky * y).sin_cos();
    let (sz, cz) = z.sin_cos();
    (
        sx * sy * sz,
        [kx * cx * sy * sz, ky * sx * cy * sz, sx * sy * cz],
    )
}

/// Discrete L² error of `C f` against `b·∇f` on one grid.
pub fn operator_error(
    grid: &DualGrid,
    field: &AdvectiveField,
    test_fn: &TestFunction,
    mapping: Mapping,
    weights: WeightPair,
) -> Result<f64> {
    let lengths = grid.spec().lengths();
    let f = |p: [f64; 3]| test_fn(lengths, p);
    let c = parallel_gradient(grid, field, mapping, weights)?;
    let (src, dst, w) = match mapping {
        Mapping::QToP => (
            Dofs::Q,
            Dofs::PInterior,
            quadrature_weights(grid, GridTag::P).select(grid.interior_nodes()),
        ),
        Mapping::PToQ => (
            Dofs::PInterior,
            Dofs::Q,
            quadrature_weights(grid, GridTag::Q).diag,
        ),
    };
    let input: Vec<f64> = grid.positions(src).into_iter().map(|p| f(p).0).collect();
    let out = c.mul_vec(&input);
    let mut err = 0.0;
    for ((p, o), wi) in grid.positions(dst).into_iter().zip(&out).zip(&w) {
        let b = field.b(p[0], p[1])?;
        let g = f(p).1;
        let exact = b[0] * g[0] + b[1] * g[1] + b[2] * g[2];
        err += wi * (o - exact).powi(2);
    }
    Ok(err.sqrt())
}

/// [`operator_error`] on every grid of `specs`, with the fitted slope.
pub fn operator_convergence(
    field: &AdvectiveField,
    test_fn: &TestFunction,
    mapping: Mapping,
    weights: WeightPair,
    specs: &[GridSpec],
) -> Result<ConvergenceTable> {
    if specs.len() < 3 {
        return Err(MfdError::param(
            "levels",
            format!("need at least 3 resolutions, got {}", specs.len()),
        ));
    }
    let mut errors = Vec::with_capacity(specs.len());
    for spec in specs {
        let grid = DualGrid::new(spec.clone())?;
        errors.push(operator_error(&grid, field, test_fn, mapping, weights)?);
    }
    ConvergenceTable::new(specs, &["grad"], vec![errors])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsConfig {
    pub zeta: f64,
    pub eta: f64,
    pub weights: WeightPair,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub tol: f64,
    pub field: AdvectiveField,
    pub specs: Vec<GridSpec>,
}

/// Forced SAW runs from the manufactured state at `t = 0`; errors of `φ`
/// (interior p nodes) and `V` (q nodes) at `t_end`.
pub fn mms_convergence(cfg: &MmsConfig) -> Result<ConvergenceTable> {
    let mut err_phi = Vec::with_capacity(cfg.specs.len());
    let mut err_v = Vec::with_capacity(cfg.specs.len());
    for spec in &cfg.specs {
        let grid = DualGrid::new(spec.clone())?;
        let (ep, ev) = mms_errors(&grid, cfg)?;
        err_phi.push(ep);
        err_v.push(ev);
    }
    ConvergenceTable::new(&cfg.specs, &["phi", "v"], vec![err_phi, err_v])
}

/// `(‖φ - φˢ‖, ‖V - Vˢ‖)` at `t_end` on one grid.
pub fn mms_errors(grid: &DualGrid, cfg: &MmsConfig) -> Result<(f64, f64)> {
    let system = assemble_saws(grid, &cfg.field, cfg.zeta, cfg.eta, cfg.weights)?
        .with_mms(grid, &cfg.field)?;
    let u0 = system.manufactured_state(grid, 0.0);
    let mut opts = RunOptions::new(cfg.integrator, cfg.dt, cfg.t_end);
    opts.trace_every = usize::MAX;
    opts.tol = cfg.tol;
    let (_, state) = run_simulation(&system, &opts, u0, TraceMeta::default())?;
    let exact = system.manufactured_state(grid, state.t);
    let np = system.np();
    let err = |w: &[f64], a: &[f64], b: &[f64]| -> f64 {
        w.iter()
            .zip(a)
            .zip(b)
            .map(|((w, x), y)| w * (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok((
        err(&system.wp, &state.u[..np], &exact[..np]),
        err(&system.wq, &state.u[np..], &exact[np..]),
    ))
}

/// Manufactured fields with the sources switched off are not a solution;
/// this is the residual of the forced semi-discrete system at `t`, used to
/// check that the forcing is wired consistently.
pub fn mms_truncation(system: &SawSystem, grid: &DualGrid, t: f64) -> Result<(f64, f64)> {
    let u = system.manufactured_state(grid, t);
    let mut du = vec![0.0; u.len()];
    system.rhs(t, &u, &mut du)?;
    let h = 1e-5;
    let up = system.manufactured_state(grid, t + h);
    let um = system.manufactured_state(grid, t - h);
    let np = system.np();
    let mut rp = 0.0f64;
    let mut rv = 0.0f64;
    for i in 0..u.len() {
        let exact = (up[i] - um[i]) / (2.0 * h);
        let r = (du[i] - exact).abs();
        if i < np {
            rp = rp.max(r);
        } else {
            rv = rv.max(r);
        }
    }
    Ok((rp, rv))
}

/// Least-squares slope of `ln E` against `t`.
pub fn growth_rate(trace: &EnergyTrace) -> Result<f64> {
    if trace.len() < 10 {
        return Err(MfdError::param(
            "trace",
            format!("need at least 10 samples, got {}", trace.len()),
        ));
    }
    if let Some(e) = trace.energies.iter().find(|e| !(**e > 0.0)) {
        return Err(MfdError::param(
            "trace",
            format!("energies must be positive, found {e}"),
        ));
    }
    let y: Vec<f64> = trace.energies.iter().map(|e| e.ln()).collect();
    Ok(ls_slope(&trace.times, &y))
}

/// Smooth initial data vanishing on the Dirichlet boundary:
/// `φ₀ = sin(πx/Lx) sin(πy/Ly) cos z`, `V₀ = sin(πx/Lx) sin(πy/Ly) sin z`.
pub fn default_initial_state(grid: &DualGrid) -> Vec<f64> {
    let [lx, ly, _] = grid.spec().lengths();
    let pi = std::f64::consts::PI;
    let s = move |p: &[f64; 3]| (pi * p[0] / lx).sin() * (pi * p[1] / ly).sin();
    let phi = grid
        .positions(Dofs::PInterior)
        .into_iter()
        .map(|p| s(&p) * p[2].cos());
    let v = grid
        .positions(Dofs::Q)
        .into_iter()
        .map(|p| s(&p) * p[2].sin());
    phi.chain(v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMode {
    Bound,
    Dense,
}

impl std::str::FromStr for SpectrumMode {
    type Err = MfdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bound" => Ok(SpectrumMode::Bound),
            "dense" => Ok(SpectrumMode::Dense),
            other => Err(MfdError::param(
                "mode",
                format!("expected bound or dense, got `{other}`"),
            )),
        }
    }
}

/// System whose spectrum is analysed: `D v = λ M v`.
#[derive(Debug, Clone, Copy)]
pub enum SpectralSystem<'a> {
    Wave(&'a WaveSystem),
    Saw(&'a SawSystem),
}

impl SpectralSystem<'_> {
    fn dim(&self) -> usize {
        match self {
            SpectralSystem::Wave(s) => s.dim(),
            SpectralSystem::Saw(s) => s.dim(),
        }
    }

    /// `X D̃` for the SAW system, `X T` for the wave model.
    pub fn weighted_operator(&self) -> Result<SparseOperator> {
        match self {
            SpectralSystem::Wave(s) => Ok(s.t_matrix()?.scale_rows(&s.x_diag())),
            SpectralSystem::Saw(s) => Ok(s.d_tilde()?.scale_rows(&s.x_diag())),
        }
    }

    /// `vᵀ E v` with `E = X` (wave) or `X M̃` (SAW), the energy norm.
    fn energy_form(&self, v: &[f64]) -> f64 {
        match self {
            SpectralSystem::Wave(s) => 2.0 * s.energy(v),
            SpectralSystem::Saw(s) => 2.0 * s.energy(v),
        }
    }

    /// `E⁻¹ r`
    fn solve_energy(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            SpectralSystem::Wave(s) => {
                for ((o, ri), w) in out.iter_mut().zip(r).zip(s.x_diag()) {
                    *o = ri / w;
                }
                Ok(())
            }
            SpectralSystem::Saw(s) => {
                let np = s.np();
                let scaled: Vec<f64> = r[..np].iter().zip(&s.wp).map(|(a, w)| a / w).collect();
                s.solver.solve(&scaled, &mut out[..np])?;
                for ((o, ri), w) in out[np..].iter_mut().zip(&r[np..]).zip(&s.wq) {
                    *o = s.zeta * ri / w;
                }
                Ok(())
            }
        }
    }

    /// Dense `(D, M)`.
    fn dense_pencil(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let to_dense = |m: &SparseOperator| {
            let mut d = DMatrix::zeros(m.rows(), m.cols());
            for (r, c, v) in m.triplets() {
                d[(r, c)] = v;
            }
            d
        };
        match self {
            SpectralSystem::Wave(s) => Ok((to_dense(&s.t_matrix()?), DMatrix::identity(n, n))),
            SpectralSystem::Saw(s) => Ok((to_dense(&s.d_matrix()?), to_dense(&s.m_matrix()?))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub mode: SpectrumMode,
    /// Computed maximum of `Re λ` (dense mode), or the largest eigenvalue of
    /// the symmetric part relative to the energy norm, which bounds it (bound mode).
    pub max_real_part: f64,
    /// Largest `|Re λ|` (dense mode); the bound otherwise.
    pub max_abs_real_part: f64,
    /// Largest `|Im λ|` (dense mode); a power-iteration estimate of the
    /// spectral radius otherwise.
    pub max_abs_imag_part: f64,
    /// `max |sym(X T)_ij| / max |(X T)_ij|`
    pub symmetric_part: f64,
    pub purely_imaginary: bool,
    pub eigenvalues: Option<Vec<Complex64>>,
    /// Largest relative residual `‖Dv - λMv‖ / ((‖D‖ + |λ|‖M‖)‖v‖)`.
    pub max_residual: Option<f64>,
    pub seed: u64,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im\n");
        if let Some(ev) = &self.eigenvalues {
            for l in ev {
                let _ = writeln!(s, "{:.16e},{:.16e}", l.re, l.im);
            }
        }
        let _ = writeln!(
            s,
            "# mode={} max_re={:.6e} max_abs_re={:.6e} max_abs_im={:.6e} sym_part={:.3e} purely_imaginary={} max_residual={} seed={}",
            match self.mode {
                SpectrumMode::Bound => "bound",
                SpectrumMode::Dense => "dense",
            },
            self.max_real_part,
            self.max_abs_real_part,
            self.max_abs_imag_part,
            self.symmetric_part,
            self.purely_imaginary,
            self.max_residual.map_or("n/a".into(), |r| format!("{r:.3e}")),
            self.seed,
        );
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| MfdError::io(path, e))
    }
}

/// Relative size of the symmetric part below which it counts as zero.
pub const SYMMETRIC_TOL: f64 = 1e-13;
const POWER_ITERS: usize = 300;
const RAYLEIGH_PROBES: usize = 20;

pub fn spectrum_report(
    system: SpectralSystem<'_>,
    mode: SpectrumMode,
    max_dense_dofs: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    let xa = system.weighted_operator()?;
    let sym = SparseOperator::lin_comb(0.5, &xa, 0.5, &xa.transpose())?;
    let scale = xa.max_abs().max(f64::MIN_POSITIVE);
    let symmetric_part = sym.max_abs() / scale;
    match mode {
        SpectrumMode::Bound => {
            let bound = symmetric_bound(system, &sym, seed)?;
            let radius = spectral_radius(system, &xa, seed)?;
            Ok(SpectrumReport {
                mode,
                max_real_part: bound,
                max_abs_real_part: bound.abs(),
                max_abs_imag_part: radius,
                symmetric_part,
                purely_imaginary: symmetric_part <= SYMMETRIC_TOL,
                eigenvalues: None,
                max_residual: None,
                seed,
            })
        }
        SpectrumMode::Dense => {
            let n = system.dim();
            if n > max_dense_dofs {
                return Err(MfdError::param(
                    "mode",
                    format!("dense spectrum needs at most {max_dense_dofs} dofs, system has {n}"),
                ));
            }
            let (d, m) = system.dense_pencil()?;
            let (eig, max_residual) = dense_eigen(&d, &m)?;
            let max_re = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            let max_abs_re = eig.iter().map(|l| l.re.abs()).fold(0.0, f64::max);
            let max_abs_im = eig.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
            let tol = 1e-10 * max_abs_im.max(1.0);
            Ok(SpectrumReport {
                mode,
                max_real_part: max_re,
                max_abs_real_part: max_abs_re,
                max_abs_imag_part: max_abs_im,
                symmetric_part,
                purely_imaginary: max_abs_re <= tol,
                eigenvalues: Some(eig),
                max_residual: Some(max_residual),
                seed,
            })
        }
    }
}

/// Estimate of `max vᵀ S v / vᵀ E v`: the best of random Rayleigh
/// quotients and a (shifted) power iteration on `E⁻¹ S`.
fn symmetric_bound(system: SpectralSystem<'_>, sym: &SparseOperator, seed: u64) -> Result<f64> {
    if sym.nnz() == 0 {
        return Ok(0.0);
    }
    let n = system.dim();
    let mut rng = SplitMix64::seed_from_u64(seed);
    let rayleigh = |v: &[f64]| dot(v, &sym.mul_vec(v)) / system.energy_form(v);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..RAYLEIGH_PROBES {
        best = best.max(rayleigh(&random_vector(&mut rng, n)));
    }
    let power = |shift: f64, rng: &mut SplitMix64| -> Result<f64> {
        let mut v = random_vector(rng, n);
        let mut w = vec![0.0; n];
        for _ in 0..POWER_ITERS {
            let sv = sym.mul_vec(&v);
            system.solve_energy(&sv, &mut w)?;
            w.iter_mut().zip(&v).for_each(|(wi, vi)| *wi -= shift * vi);
            let nn = norm2(&w);
            if nn == 0.0 {
                break;
            }
            v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nn);
        }
        Ok(rayleigh(&v))
    };
    let dominant = power(0.0, &mut rng)?;
    let top = if dominant >= 0.0 {
        dominant
    } else {
        power(dominant, &mut rng)?
    };
    Ok(best.max(top))
}

/// Power-iteration estimate of the spectral radius of `M⁻¹D = E⁻¹(E M⁻¹D)`,
/// iterated on its square so a `±iω` pair does not stall it.
fn spectral_radius(system: SpectralSystem<'_>, xa: &SparseOperator, seed: u64) -> Result<f64> {
    let n = system.dim();
    let mut rng = SplitMix64::seed_from_u64(seed ^ 0x5eed);
    let mut v = random_vector(&mut rng, n);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut radius = 0.0;
    for _ in 0..POWER_ITERS {
        system.solve_energy(&xa.mul_vec(&v), &mut w)?;
        system.solve_energy(&xa.mul_vec(&w), &mut v)?;
        let nn = norm2(&v);
        if nn == 0.0 {
            return Ok(0.0);
        }
        radius = nn.sqrt();
        v.iter_mut().for_each(|x| *x /= nn);
    }
    Ok(radius)
}

/// All eigenvalues of `M⁻¹D` from the real Schur form, each checked by
/// inverse iteration on the Hessenberg form.
fn dense_eigen(d: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<Complex64>, f64)> {
    let minv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| MfdError::Singular("mass matrix is singular".into()))?;
    let a = &minv * d;
    let eig: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    let hess = a.clone().hessenberg();
    let (q, h) = hess.unpack();
    let hc: DMatrix<Complex64> = h.map(|v| Complex64::new(v, 0.0));
    let qc: DMatrix<Complex64> = q.map(|v| Complex64::new(v, 0.0));
    let dc: DMatrix<Complex64> = d.map(|v| Complex64::new(v, 0.0));
    let mc: DMatrix<Complex64> = m.map(|v| Complex64::new(v, 0.0));
    let (dn, mn) = (d.norm(), m.norm());
    let n = a.nrows();
    let mut worst = 0.0f64;
    for &lambda in &eig {
        let mut y = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.3));
        for _ in 0..3 {
            y = hessenberg_shift_solve(&hc, lambda, &y);
            let nn = y.norm();
            if !nn.is_finite() || nn == 0.0 {
                break;
            }
            y /= Complex64::new(nn, 0.0);
        }
        let v = &qc * &y;
        let r = &dc * &v - &mc * &v * lambda;
        let res = r.norm() / ((dn + lambda.norm() * mn) * v.norm());
        worst = worst.max(if res.is_finite() { res } else { f64::INFINITY });
    }
    Ok((eig, worst))
}

/// Solves `(H - λI) x = b` for upper Hessenberg `H` by Gaussian elimination
/// with partial pivoting; exact singularity is nudged to keep inverse
/// iteration going.
fn hessenberg_shift_solve(
    h: &DMatrix<Complex64>,
    lambda: Complex64,
    b: &DVector<Complex64>,
) -> DVector<Complex64> {
    let n = h.nrows();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] -= lambda;
    }
    let mut x = b.clone();
    let tiny = f64::EPSILON * h.norm().max(1.0);
    for k in 0..n.saturating_sub(1) {
        if a[(k + 1, k)].norm() > a[(k, k)].norm() {
            a.swap_rows(k, k + 1);
            x.swap_rows(k, k + 1);
        }
        if a[(k, k)].norm() < tiny {
            a[(k, k)] = Complex64::new(tiny, 0.0);
        }
        let f = a[(k + 1, k)] / a[(k, k)];
        if f != Complex64::new(0.0, 0.0) {
            for j in k..n {
                let akj = a[(k, j)];
                a[(k + 1, j)] -= f * akj;
            }
            let xk = x[k];
            x[k + 1] -= f * xk;
        }
    }
    if a[(n - 1, n - 1)].norm() < tiny {
        a[(n - 1, n - 1)] = Complex64::new(tiny, 0.0);
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= a[(i, j)] * x[j];
        }
        x[i] = s / a[(i, i)];
    }
    x
}

/// Writes every block in Matrix Market format plus `manifest.txt`.
pub fn export_system(
    system: SpectralSystem<'_>,
    dir: &Path,
    grid: &GridSpec,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| MfdError::io(dir, e))?;
    let mut blocks: Vec<(&str, SparseOperator)> = Vec::new();
    let mut manifest = String::new();
    match system {
        SpectralSystem::Wave(s) => {
            let _ = writeln!(manifest, "system wave");
            let _ = writeln!(
                manifest,
                "alpha {:.17e}\nbeta {:.17e}",
                s.weights.alpha, s.weights.beta
            );
            blocks.push(("T_pq", s.c_pq.clone()));
            blocks.push(("T_qp", s.c_qp.clone()));
            blocks.push(("X_p", SparseOperator::diagonal(Dofs::PInterior, &s.wp)));
            blocks.push(("X_q", SparseOperator::diagonal(Dofs::Q, &s.wq)));
        }
        SpectralSystem::Saw(s) => {
            let _ = writeln!(manifest, "system saws");
            let _ = writeln!(
                manifest,
                "alpha {:.17e}\nbeta {:.17e}",
                s.weights.alpha, s.weights.beta
            );
            let _ = writeln!(manifest, "zeta {:.17e}\neta {:.17e}", s.zeta, s.eta);
            blocks.push(("C_pq", s.c_pq.clone()));
            blocks.push(("C_qp", s.c_qp.clone()));
            blocks.push(("L_perp", s.l_perp.clone()));
            blocks.push(("L_par", s.l_par.q.clone()));
            blocks.push(("L_par_star", s.l_par.star.clone()));
            blocks.push(("X_p", SparseOperator::diagonal(Dofs::PInterior, &s.wp)));
            blocks.push(("X_q", SparseOperator::diagonal(Dofs::Q, &s.wq)));
        }
    }
    let _ = writeln!(
        manifest,
        "grid {} {} {}\nlengths {:.17e} {:.17e} {:.17e}",
        grid.npx, grid.npy, grid.npz, grid.lx, grid.ly, grid.lz
    );
    let mut written = Vec::new();
    for (name, m) in &blocks {
        let path = dir.join(format!("{name}.mtx"));
        m.write_matrix_market(&path)?;
        let _ = writeln!(
            manifest,
            "block {name} {}x{} nnz={} {} <- {}",
            m.rows(),
            m.cols(),
            m.nnz(),
            m.dst.name(),
            m.src.name()
        );
        written.push(path);
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| MfdError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Manufactured `φ` on interior p nodes followed by `V` on q nodes at `t`.
pub fn manufactured_vector(grid: &DualGrid, t: f64) -> Vec<f64> {
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
