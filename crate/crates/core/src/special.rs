//! Exponential integrals for negative real arguments.

use crate::error::{MfdError, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 500;

/// `Ein(u) = Σ_{n≥1} (-1)^{n+1} uⁿ / (n·n!)`, the entire part of `E₁`.
///
/// Only used for `u ≤ 1`, where the alternating series converges quickly and
/// without cancellation.
pub fn ein(u: f64) -> f64 {
    let mut term = 1.0; // uⁿ/n! with sign
    let mut sum = 0.0;
    for n in 1..MAX_TERMS {
        term *= -u / n as f64;
        let add = -term / n as f64;
        sum += add;
        if add.abs() <= EPS * sum.abs() {
            break;
        }
    }
    sum
}

/// `E₁(u)` for `u > 0`.
pub fn e1(u: f64) -> Result<f64> {
    if !(u > 0.0) || u.is_nan() {
        return Err(MfdError::param("u", format!("E1 needs u > 0, got {u}")));
    }
    if u.is_infinite() {
        return Ok(0.0);
    }
    if u <= 1.0 {
        return Ok(-EULER_GAMMA - u.ln() + ein(u));
    }
    // modified Lentz evaluation of the continued fraction
    //   E₁(u) = e^{-u} / (u + 1 - 1²/(u + 3 - 2²/(u + 5 - ...)))
    let tiny = 1e-300;
    let mut b = u + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            return Ok(h * (-u).exp());
        }
    }
    Err(MfdError::SolverDiverged {
        solver: "E1 continued fraction",
        iterations: MAX_TERMS,
        residual: f64::NAN,
    })
}

/// `Ei(-u)` for `u > 0`; always negative.
pub fn expint_ei_neg(u: f64) -> Result<f64> {
    Ok(-e1(u)?)
}
