//! Flux function Ψ, the divergence-free advective field built from it, and
//! the manufactured solutions used to verify the SAW discretization.
//!
//! ```text
//! Ψ(x, y) = ½A Ei(-r₁²/a²) - ½A ln r₁² - ½A ln r₂²
//! r₁² = (x - x_mag)² + (y - y_mag1)²,  r₂² = (x - x_mag)² + (y - y_mag2)²
//! b    = (ε ∂yΨ, -ε ∂xΨ, -1)
//! ```
//!
//! The x/y part of `b` is a Hamiltonian vector field and hence
//! divergence-free for any Ψ. `ε` (`perp_scale`) defaults to 1.

use crate::error::{MfdError, Result};
use crate::grid::{DualGrid, GridTag, StaggeredScalar};
use crate::special::{e1, ein, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiParams {
    pub a_mag: f64,
    pub x_mag: f64,
    pub y_mag1: f64,
    pub y_mag2: f64,
    pub a_s: f64,
}

impl PsiParams {
    /// Tokamak-like defaults for an `lx × ly` cross-section with
    /// `y ∈ [0, ly]`.
    pub fn for_domain(lx: f64, ly: f64) -> Self {
        let y_mag1 = 5.0 / 8.0 * ly;
        PsiParams {
            a_mag: 25.0 * lx / 12.0 * ly,
            x_mag: lx / 2.0,
            y_mag1,
            y_mag2: 18.0 * (ly / 40.0) - y_mag1,
            a_s: 5.0 / 40.0 * ly,
        }
    }

    /// Ψ ≡ 0, i.e. `b = (0, 0, -1)`.
    pub fn zero() -> Self {
        PsiParams {
            a_mag: 0.0,
            ..Self::for_domain(1.0, 1.0)
        }
    }

    pub fn validate(&self, lx: f64, ly: f64) -> Result<()> {
        let all = [self.a_mag, self.x_mag, self.y_mag1, self.y_mag2, self.a_s];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(MfdError::param("psi", "parameters must be finite"));
        }
        if !(self.a_s > 0.0) {
            return Err(MfdError::param(
                "a_s",
                format!("must be positive, got {}", self.a_s),
            ));
        }
        let inside = (0.0..=lx).contains(&self.x_mag) && (0.0..=ly).contains(&self.y_mag2);
        if self.a_mag != 0.0 && inside {
            return Err(MfdError::param(
                "y_mag2",
                format!(
                    "(x_mag, y_mag2) = ({}, {}) lies in the closed domain",
                    self.x_mag, self.y_mag2
                ),
            ));
        }
        Ok(())
    }
}

/// First and second partial derivatives of Ψ at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// `h(s) = (e^{-s/a²} - 1)/s` and `h'(s)`, with a series near `s = 0` where
/// the closed forms cancel.
fn core_factor(s: f64, a2: f64) -> (f64, f64) {
    let v = s / a2;
    if v < 0.05 {
        // h  = (1/a²)  Σ_{n≥1} (-1)ⁿ v^{n-1}/n!
        // h' = (1/a⁴)  Σ_{n≥2} (-1)ⁿ (n-1) v^{n-2}/n!
        let (mut h, mut dh) = (0.0, 0.0);
        let mut fact = 1.0;
        let mut vp = 1.0; // v^{n-1}
        let mut vpm = 0.0; // v^{n-2}
        for n in 1..20 {
            fact *= n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            h += sign * vp / fact;
            if n >= 2 {
                dh += sign * (n - 1) as f64 * vpm / fact;
            }
            vpm = vp;
            vp *= v;
        }
        (h / a2, dh / (a2 * a2))
    } else {
        let em1 = (-v).exp_m1();
        let h = em1 / s;
        let dh = (-v * (-v).exp() - em1) / (s * s);
        (h, dh)
    }
}

impl PsiParams {
    pub fn psi(&self, x: f64, y: f64) -> Result<f64> {
        let a = self.a_mag;
        if a == 0.0 {
            return Ok(0.0);
        }
        let dx = x - self.x_mag;
        let r1 = dx * dx + (y - self.y_mag1).powi(2);
        let r2 = dx * dx + (y - self.y_mag2).powi(2);
        if r2 == 0.0 {
            return Err(MfdError::Singular(format!(
                "Ψ at ({x}, {y}) = (x_mag, y_mag2)"
            )));
        }
        let a2 = self.a_s * self.a_s;
        let u = r1 / a2;
        // Ei(-u) - ln r₁², regular at r₁ = 0
        let regular = if u <= 1.0 {
            EULER_GAMMA - a2.ln() - ein(u)
        } else {
            -e1(u)? - r1.ln()
        };
        Ok(0.5 * a * (regular - r2.ln()))
    }

    pub fn derivatives(&self, x: f64, y: f64) -> Result<PsiDerivatives> {
        let a = self.a_mag;
        if a == 0.0 {
            return Ok(PsiDerivatives {
                x: 0.0,
                y: 0.0,
                xx: 0.0,
                xy: 0.0,
                yy: 0.0,
            });
        }
        let dx = x - self.x_mag;
        let dy1 = y - self.y_mag1;
        let dy2 = y - self.y_mag2;
        let s1 = dx * dx + dy1 * dy1;
        let s2 = dx * dx + dy2 * dy2;
        if s2 == 0.0 {
            return Err(MfdError::Singular(format!(
                "∇Ψ at ({x}, {y}) = (x_mag, y_mag2)"
            )));
        }
        let (h, dh) = core_factor(s1, self.a_s * self.a_s);
        let inv2 = 1.0 / s2;
        let inv2sq = inv2 * inv2;
        Ok(PsiDerivatives {
            x: a * dx * h - a * dx * inv2,
            y: a * dy1 * h - a * dy2 * inv2,
            xx: a * h + 2.0 * a * dx * dx * dh - a * inv2 + 2.0 * a * dx * dx * inv2sq,
            xy: 2.0 * a * dx * dy1 * dh + 2.0 * a * dx * dy2 * inv2sq,
            yy: a * h + 2.0 * a * dy1 * dy1 * dh - a * inv2 + 2.0 * a * dy2 * dy2 * inv2sq,
        })
    }

    pub fn grad_psi(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let d = self.derivatives(x, y)?;
        Ok((d.x, d.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// `b = [∂yΨ, -∂xΨ, -1]`.
    WaveModel,
    /// Same components, reached through the scaled SAW operators.
    SawDimensionless,
}

/// Default factor on `b⊥` for SAW runs. `b = -e_z - ε e_z×∇Ψ` with the
/// literal Ψ gives `|b⊥|` of several hundred, far outside the RK4 stability
/// region at `Δt = 1e-3`; `ε = 0.1` keeps the field nearly parallel to `z`.
pub const SAW_PERP_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvectiveField {
    pub params: PsiParams,
    pub kind: FieldKind,
    /// Factor on the perpendicular components of `b`.
    pub perp_scale: f64,
}

impl AdvectiveField {
    pub fn new(params: PsiParams, kind: FieldKind) -> Self {
        AdvectiveField {
            params,
            kind,
            perp_scale: 1.0,
        }
    }

    /// Default field for the given cross-section.
    pub fn for_domain(lx: f64, ly: f64, kind: FieldKind) -> Self {
        Self::new(PsiParams::for_domain(lx, ly), kind)
    }

    /// SAW default: [`for_domain`](Self::for_domain) with `b⊥` scaled by
    /// [`SAW_PERP_SCALE`].
    pub fn saws_default(lx: f64, ly: f64) -> Self {
        Self::for_domain(lx, ly, FieldKind::SawDimensionless).with_perp_scale(SAW_PERP_SCALE)
    }

    /// `b = (0, 0, -1)`.
    pub fn uniform(kind: FieldKind) -> Self {
        Self::new(PsiParams::zero(), kind)
    }

    pub fn with_perp_scale(mut self, eps: f64) -> Self {
        self.perp_scale = eps;
        self
    }

    pub fn validate(&self, lx: f64, ly: f64) -> Result<()> {
        if !(self.perp_scale.is_finite() && self.perp_scale >= 0.0) {
            return Err(MfdError::param(
                "perp_scale",
                "must be finite and non-negative",
            ));
        }
        self.params.validate(lx, ly)
    }

    #[inline]
    pub fn b(&self, x: f64, y: f64) -> Result<[f64; 3]> {
        let (px, py) = self.params.grad_psi(x, y)?;
        let e = self.perp_scale;
        Ok([e * py, -e * px, -1.0])
    }

    /// `b` and its Jacobian `∂_j b_i` (row i, column j).
    pub fn b_with_jacobian(&self, x: f64, y: f64) -> Result<([f64; 3], [[f64; 3]; 3])> {
        let d = self.params.derivatives(x, y)?;
        let e = self.perp_scale;
        let b = [e * d.y, -e * d.x, -1.0];
        let jac = [
            [e * d.xy, e * d.yy, 0.0],
            [-e * d.xx, -e * d.xy, 0.0],
            [0.0, 0.0, 0.0],
        ];
        Ok((b, jac))
    }

    /// Components of `b` at every node of one grid.
    pub fn sample_b(&self, grid: &DualGrid, tag: GridTag) -> Result<[StaggeredScalar; 3]> {
        let [nx, ny, nz] = grid.dims(tag);
        let mut plane = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let [x, y, _] = grid.node(tag, i, j, 0);
                plane.push(self.b(x, y)?);
            }
        }
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(nx * ny * nz));
        for _ in 0..nz {
            for b in &plane {
                for d in 0..3 {
                    out[d].push(b[d]);
                }
            }
        }
        Ok(out.map(|values| StaggeredScalar { tag, values }))
    }
}

/// Which manufactured field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manufactured {
    Phi,
    V,
}

/// `φˢ = 3.1 + 0.8 sin(y+0.1) sin(z) sin(x+t)`,
/// `Vˢ = sin(y+0.2) sin(z+0.2) sin(x+t+0.2)`.
pub fn manufactured_solution(which: Manufactured, x: f64, y: f64, z: f64, t: f64) -> f64 {
    match which {
        Manufactured::Phi => 3.1 + 0.8 * (y + 0.1).sin() * z.sin() * (x + t).sin(),
        Manufactured::V => (y + 0.2).sin() * (z + 0.2).sin() * (x + t + 0.2).sin(),
    }
}

/// `∂t φˢ`, needed for time-dependent Dirichlet data.
pub fn manufactured_phi_dt(x: f64, y: f64, z: f64, t: f64) -> f64 {
    0.8 * (y + 0.1).sin() * z.sin() * (x + t).cos()
}

/// Source terms that make `(φˢ, Vˢ)` an exact solution of
///
/// ```text
/// ∂t(∇⊥²φ) = -∇∥V + S_φ
/// ∂t V     =  ζ∇∥φ + η∇∥²V + S_V
/// ```
pub fn mms_sources(
    x: f64,
    y: f64,
    z: f64,
    t: f64,
    zeta: f64,
    eta: f64,
    field: &AdvectiveField,
) -> Result<(f64, f64)> {
    let (b, jac) = field.b_with_jacobian(x, y)?;
    Ok(mms_sources_with(&b, &jac, [x, y, z], t, zeta, eta))
}

/// [`mms_sources`] with `b` and its Jacobian at `(x, y)` already known.
pub fn mms_sources_with(
    b: &[f64; 3],
    jac: &[[f64; 3]; 3],
    [x, y, z]: [f64; 3],
    t: f64,
    zeta: f64,
    eta: f64,
) -> (f64, f64) {
    let (sy1, cy1) = (y + 0.1).sin_cos();
    let (sz, cz) = z.sin_cos();
    let (sx, cx) = (x + t).sin_cos();
    let grad_phi = [
        0.8 * sy1 * sz * cx,
        0.8 * cy1 * sz * sx,
        0.8 * sy1 * cz * sx,
    ];
    let dt_lap_phi = -1.6 * sy1 * sz * cx;

    let (sy2, cy2) = (y + 0.2).sin_cos();
    let (sz2, cz2) = (z + 0.2).sin_cos();
    let (sx2, cx2) = (x + t + 0.2).sin_cos();
    let v = sy2 * sz2 * sx2;
    let grad_v = [sy2 * sz2 * cx2, cy2 * sz2 * sx2, sy2 * cz2 * sx2];
    let hess_v = [
        [-v, cy2 * sz2 * cx2, sy2 * cz2 * cx2],
        [cy2 * sz2 * cx2, -v, cy2 * cz2 * sx2],
        [sy2 * cz2 * cx2, cy2 * cz2 * sx2, -v],
    ];
    let dt_v = grad_v[0];

    let dot = |a: &[f64; 3], c: &[f64; 3]| a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
    // b·∇(b·∇V) = Σ_ij b_i (∂_i b_j) V_j + b_i b_j V_ij
    let mut par_lap_v = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            par_lap_v += b[i] * (jac[j][i] * grad_v[j] + b[j] * hess_v[i][j]);
        }
    }

    let s_phi = dt_lap_phi + dot(b, &grad_v);
    let s_v = dt_v - zeta * dot(b, &grad_phi) - eta * par_lap_v;
    (s_phi, s_v)
}
