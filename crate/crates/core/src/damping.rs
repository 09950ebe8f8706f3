//! Nondecreasing damping nonlinearities g with g(0) = 0, plus the scalar
//! monotone solve used by the implicit midpoint treatment of g(y') in the
//! time stepper.

use serde::Serialize;

use crate::error::{Error, Result};

/// Exponent/constant certificates for the decay-rate formulas: near the
/// origin, c |s|^{p+1} <= g(s) s and |g(s)| <= C |s|^lambda.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DampingExponents {
    pub lambda: f64,
    pub p: f64,
    pub c: f64,
    pub c_upper: f64,
}

/// Damping nonlinearity presets plus a monotone table fallback.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DampingLaw {
    /// g(s) = a s.
    Linear { a: f64 },
    /// g(s) = |s|^{p-1} s.
    Power { p: f64 },
    /// g(s) = s / (1 + |s|).
    Saturating,
    /// Piecewise-linear interpolation of a sampled nondecreasing odd-ish
    /// table; extended with the end slopes outside the lattice.
    Table { s: Vec<f64>, g: Vec<f64> },
}

impl DampingLaw {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            DampingLaw::Linear { a } => a * s,
            // |s|^{p-1} s written as sign(s) |s|^p so p < 1 is finite at 0.
            DampingLaw::Power { p } => {
                if s == 0.0 {
                    0.0
                } else {
                    s.signum() * s.abs().powf(*p)
                }
            }
            DampingLaw::Saturating => s / (1.0 + s.abs()),
            DampingLaw::Table { s: xs, g: gs } => {
                if s <= xs[0] {
                    let slope = (gs[1] - gs[0]) / (xs[1] - xs[0]);
                    return gs[0] + slope * (s - xs[0]);
                }
                let n = xs.len();
                if s >= xs[n - 1] {
                    let slope = (gs[n - 1] - gs[n - 2]) / (xs[n - 1] - xs[n - 2]);
                    return gs[n - 1] + slope * (s - xs[n - 1]);
                }
                let i = xs.partition_point(|&v| v <= s) - 1;
                let t = (s - xs[i]) / (xs[i + 1] - xs[i]);
                gs[i] + t * (gs[i + 1] - gs[i])
            }
        }
    }

    /// Certified exponents where the preset pins them; `None` for tables.
    pub fn exponents(&self) -> Option<DampingExponents> {
        match self {
            DampingLaw::Linear { a } => Some(DampingExponents {
                lambda: 1.0,
                p: 1.0,
                c: *a,
                c_upper: *a,
            }),
            // g(s) s = |s|^{p+1} exactly, so lambda = p and c = C = 1.
            DampingLaw::Power { p } => Some(DampingExponents {
                lambda: *p,
                p: *p,
                c: 1.0,
                c_upper: 1.0,
            }),
            // s^2/(1+|s|) >= s^2/2 on [-1,1]; |g| <= |s|.
            DampingLaw::Saturating => Some(DampingExponents {
                lambda: 1.0,
                p: 1.0,
                c: 0.5,
                c_upper: 1.0,
            }),
            DampingLaw::Table { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DampingLaw::Linear { a } => {
                if *a < 0.0 {
                    return Err(Error::config("linear damping coefficient must be >= 0"));
                }
            }
            DampingLaw::Power { p } => {
                if !(*p > 0.0) {
                    return Err(Error::config("power damping exponent must be > 0"));
                }
            }
            DampingLaw::Saturating => {}
            DampingLaw::Table { s, g } => {
                if s.len() < 2 || s.len() != g.len() {
                    return Err(Error::config("damping table needs matching columns, length >= 2"));
                }
                if !s.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::config("damping table abscissae must increase"));
                }
                if !g.windows(2).all(|w| w[0] <= w[1]) {
                    return Err(Error::config("damping table must be nondecreasing"));
                }
                if self.eval(0.0).abs() > 1e-14 {
                    return Err(Error::config("damping table must satisfy g(0) = 0"));
                }
            }
        }
        Ok(())
    }

    /// True when g(s) = a s; the implicit solve then has a closed form.
    fn linear_slope(&self) -> Option<f64> {
        match self {
            DampingLaw::Linear { a } => Some(*a),
            _ => None,
        }
    }
}

/// Solves c1 u + c2 g(u) = r for the midpoint velocity u, with c1 > 0 and
/// c2 >= 0. Monotonicity of g makes the root unique; a Newton iteration is
/// safeguarded by the bracket [min(0, r/c1), max(0, r/c1)].
pub fn solve_damped_velocity(c1: f64, c2: f64, law: &DampingLaw, r: f64) -> f64 {
    debug_assert!(c1 > 0.0 && c2 >= 0.0);
    if c2 == 0.0 {
        return r / c1;
    }
    if let Some(a) = law.linear_slope() {
        return r / (c1 + c2 * a);
    }
    let mut lo = (r / c1).min(0.0);
    let mut hi = (r / c1).max(0.0);
    let f = |u: f64| c1 * u + c2 * law.eval(u) - r;
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fu = f(u);
        if fu == 0.0 {
            return u;
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        // Newton step from a numerical slope, clipped to the bracket.
        let du = 1e-7 * (1.0 + u.abs());
        let slope = (f(u + du) - f(u - du)) / (2.0 * du);
        let newton = if slope > 0.0 { u - fu / slope } else { f64::NAN };
        u = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-12 * (1.0 + u.abs()) {
            break;
        }
    }
    u
}
