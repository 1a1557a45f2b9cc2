//! Classical RK4, Crank–Nicolson and energy-trace recording.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MfdError, Result};
use crate::linalg::{bicgstab, DEFAULT_TOL};
use crate::models::LinearSystem;

/// Runs stop once the energy exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    CrankNicolson,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::CrankNicolson => "cn",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = MfdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "cn" | "crank-nicolson" => Ok(Integrator::CrankNicolson),
            other => Err(MfdError::param(
                "integrator",
                format!("expected rk4 or cn, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMeta {
    pub alpha: f64,
    pub beta: f64,
    pub zeta: Option<f64>,
    pub eta: Option<f64>,
    pub dims: [usize; 3],
    pub integrator: String,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub meta: TraceMeta,
}

impl EnergyTrace {
    pub fn push(&mut self, t: f64, e: f64) {
        self.times.push(t);
        self.energies.push(e);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy\n");
        for (t, e) in self.times.iter().zip(&self.energies) {
            let _ = writeln!(s, "{t:.16e},{e:.16e}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| MfdError::io(path, e))
    }
}

/// One classical Runge–Kutta step of `u' = f(t, u)`.
pub fn rk4_step<F>(mut f: F, t: f64, u: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = u.len();
    let mut k = vec![0.0; n];
    let mut acc = u.to_vec();
    let mut stage = vec![0.0; n];

    f(t, u, &mut k)?;
    axpy_into(&mut stage, u, 0.5 * dt, &k);
    axpy(&mut acc, dt / 6.0, &k);

    f(t + 0.5 * dt, &stage, &mut k)?;
    axpy_into(&mut stage, u, 0.5 * dt, &k);
    axpy(&mut acc, dt / 3.0, &k);

    f(t + 0.5 * dt, &stage, &mut k)?;
    axpy_into(&mut stage, u, dt, &k);
    axpy(&mut acc, dt / 3.0, &k);

    f(t + dt, &stage, &mut k)?;
    axpy(&mut acc, dt / 6.0, &k);
    Ok(acc)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn axpy_into(out: &mut [f64], y: &[f64], a: f64, x: &[f64]) {
    for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

/// `(M - Δt/2 D) uⁿ⁺¹ = (M + Δt/2 D) uⁿ + Δt/2 (f(tⁿ) + f(tⁿ⁺¹))`, solved by
/// BiCGStab preconditioned with `M⁻¹`.
pub fn crank_nicolson_step<S: LinearSystem>(
    system: &S,
    t: f64,
    u: &[f64],
    dt: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = u.len();
    let h = 0.5 * dt;
    let mut rhs = vec![0.0; n];
    let mut du = vec![0.0; n];
    system.apply_m(u, &mut rhs);
    system.apply_d(u, &mut du);
    system.add_forcing(t, &mut du)?;
    system.add_forcing(t + dt, &mut du)?;
    axpy(&mut rhs, h, &du);

    let apply = |v: &[f64], out: &mut [f64]| -> Result<()> {
        let mut dv = vec![0.0; v.len()];
        system.apply_m(v, out);
        system.apply_d(v, &mut dv);
        axpy(out, -h, &dv);
        Ok(())
    };
    let precond = |v: &[f64], out: &mut [f64]| system.solve_m(v, out);
    let mut x = u.to_vec();
    bicgstab(apply, precond, &rhs, &mut x, tol, 50 * n.max(20))?;
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub integrator: Integrator,
    pub dt: f64,
    pub t_end: f64,
    /// Record the energy every this many steps (the final state is always
    /// recorded).
    pub trace_every: usize,
    /// Krylov tolerance for implicit steps.
    pub tol: f64,
}

impl RunOptions {
    pub fn new(integrator: Integrator, dt: f64, t_end: f64) -> Self {
        RunOptions {
            integrator,
            dt,
            t_end,
            trace_every: 1,
            tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(MfdError::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(MfdError::param(
                "t_end",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if self.trace_every == 0 {
            return Err(MfdError::param("trace_every", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(MfdError::param("tol", "must be positive"));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        let n = self.t_end / self.dt;
        let r = n.round();
        if (n - r).abs() <= 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

pub fn run_simulation<S: LinearSystem>(
    system: &S,
    opts: &RunOptions,
    initial: Vec<f64>,
    meta: TraceMeta,
) -> Result<(EnergyTrace, SimState)> {
    opts.validate()?;
    if initial.len() != system.dim() {
        return Err(MfdError::DimensionMismatch(format!(
            "initial state has {} entries, system has {}",
            initial.len(),
            system.dim()
        )));
    }
    let mut trace = EnergyTrace {
        meta,
        ..Default::default()
    };
    let mut u = initial;
    let e0 = system.energy(&u);
    trace.push(0.0, e0);
    let limit = DIVERGENCE_FACTOR * e0;
    let steps = opts.steps();
    let mut t = 0.0;
    let mut energy = e0;
    for n in 1..=steps {
        let dt = if n == steps { opts.t_end - t } else { opts.dt };
        u = match opts.integrator {
            Integrator::Rk4 => rk4_step(|s, v, out| system.rhs(s, v, out), t, &u, dt)?,
            Integrator::CrankNicolson => crank_nicolson_step(system, t, &u, dt, opts.tol)?,
        };
        t = if n == steps {
            opts.t_end
        } else {
            n as f64 * opts.dt
        };
        energy = system.energy(&u);
        if !energy.is_finite() || (e0 > 0.0 && energy > limit) {
            return Err(MfdError::EnergyDivergence { t, energy, limit });
        }
        if n % opts.trace_every == 0 || n == steps {
            trace.push(t, energy);
        }
    }
    Ok((trace, SimState { t, u, energy }))
}
