//! Membership in `C_m`, construction of members, and projection onto `C_m`.
//!
//! `u` belongs to `C_m` when `omega_m(u, pi) = m pi`, equivalently when the
//! shooting solution satisfies `v(u, pi) = 0` with exactly `m` sign changes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{bump_beta, ramp_constant, segment, Grid, GridFunction, NormKind};
use crate::nonlinearity::{critical_abscissa, Nonlinearity, TamenessReport};
use crate::pruefer::{angle_end, check_m, d_omega, shoot, Potential};

pub const TOL_ANGLE: f64 = 1e-8;
pub const TOL_V: f64 = 1e-6;
/// Target for `find_in_cm` and `project`.
pub const SOLVE_TOL: f64 = 1e-10;
/// `project` refuses inputs whose residual is at least this large.
pub const BASIN: f64 = 0.5;
/// Support radius of the default corrector direction.
pub const DEFAULT_PHI_DELTA: f64 = PI / 16.0;
const MIN_DERIVATIVE: f64 = 1e-12;
const MAX_SHRINK: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    pub residual: f64,
    pub member: bool,
    pub v_end: f64,
    pub m: u32,
    pub n: usize,
    pub tol_angle: f64,
}

/// `omega_m(u, pi) - m pi`.
pub fn residual(f: &Nonlinearity, u: &GridFunction, m: u32) -> Result<f64> {
    check_m(m)?;
    if !u.is_dirichlet() {
        return Err(Error::InvalidArgument(
            "membership needs a Dirichlet function".into(),
        ));
    }
    let pot = Potential::new(f, u)?;
    Ok(angle_end(&pot, u.grid().spacing(), m, 0.0) - f64::from(m) * PI)
}

pub fn membership(f: &Nonlinearity, u: &GridFunction, m: u32) -> Result<MembershipResult> {
    membership_with(f, u, m, TOL_ANGLE)
}

pub fn membership_with(
    f: &Nonlinearity,
    u: &GridFunction,
    m: u32,
    tol_angle: f64,
) -> Result<MembershipResult> {
    let r = residual(f, u, m)?;
    let sol = shoot(f, u)?;
    let v_end = sol.v_end();
    let member = r.abs() <= tol_angle && v_end.abs() <= TOL_V * sol.v_scale();
    Ok(MembershipResult {
        residual: r,
        member,
        v_end,
        m,
        n: u.n(),
        tol_angle,
    })
}

/// Root of `f'(x) = target` nearest to `start` in direction `dir`, found by
/// geometric bracket expansion and bisection.
pub(crate) fn f1_root_from(
    f: &Nonlinearity,
    target: f64,
    start: f64,
    dir: f64,
) -> Result<Option<f64>> {
    let g = |x: f64| -> Result<f64> { Ok(f.f1(x)? - target) };
    let reach = 1e3 * (1.0 + start.abs());
    let (mut a, mut ga) = (start, g(start)?);
    let mut step = 1e-3 * (1.0 + start.abs());
    while step <= reach {
        let b = start + dir * step;
        let gb = g(b)?;
        if gb == 0.0 {
            return Ok(Some(b));
        }
        if ga * gb < 0.0 {
            let (mut lo, mut hi, mut glo) = (a, b, ga);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let gm = g(mid)?;
                if (gm > 0.0) == (glo > 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        a = b;
        ga = gb;
        step *= 1.5;
    }
    Ok(None)
}

/// A member of `C_m` on `grid`: a point on the segment between two ramped
/// constants whose potentials sit just above and just below `-m^2`.
pub fn find_in_cm(
    f: &Nonlinearity,
    m: u32,
    report: &TamenessReport,
    grid: Grid,
) -> Result<GridFunction> {
    check_m(m)?;
    let x_m = critical_abscissa(f, m, report)?;
    let m2 = f64::from(m * m);
    let up = f.f2(x_m)?.signum();
    let mut last = (f64::NAN, f64::NAN);
    let mut eps = 0.5 * m2;
    while eps >= 1e-6 {
        let x_minus = f1_root_from(f, -m2 + eps, x_m, up)?;
        let x_plus = f1_root_from(f, -m2 - eps, x_m, -up)?;
        if let (Some(xm), Some(xp)) = (x_minus, x_plus) {
            let mut delta = PI / 8.0;
            for _ in 0..=MAX_SHRINK {
                let u_minus = ramp_constant(xm, delta, grid)?;
                let u_plus = ramp_constant(xp, delta, grid)?;
                let r_minus = residual(f, &u_minus, m)?;
                let r_plus = residual(f, &u_plus, m)?;
                last = (r_minus, r_plus);
                if r_minus < 0.0 && r_plus > 0.0 {
                    return bisect_segment(f, m, &u_minus, &u_plus);
                }
                delta *= 0.5;
            }
        }
        eps *= 0.5;
    }
    Err(Error::NoBracket {
        lo: last.0,
        hi: last.1,
    })
}

fn bisect_segment(
    f: &Nonlinearity,
    m: u32,
    u0: &GridFunction,
    u1: &GridFunction,
) -> Result<GridFunction> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best: Option<(f64, GridFunction)> = None;
    for _ in 0..200 {
        let s = 0.5 * (lo + hi);
        let u = segment(u0, u1, s)?;
        let r = residual(f, &u, m)?;
        if best.as_ref().is_none_or(|(b, _)| r.abs() < b.abs()) {
            best = Some((r, u));
        }
        if r.abs() <= SOLVE_TOL || s == lo || s == hi {
            break;
        }
        if r < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
    }
    let (r, u) = best.expect("at least one bisection step");
    if r.abs() > SOLVE_TOL {
        return Err(Error::NoBracket { lo: r, hi: r });
    }
    Ok(u)
}

/// `-beta_delta(t) f''(u(t))`.
pub fn default_direction(f: &Nonlinearity, u: &GridFunction, delta: f64) -> Result<GridFunction> {
    let beta = bump_beta(delta, u.grid())?;
    let values = u
        .values()
        .iter()
        .zip(beta.values())
        .map(|(&x, &b)| Ok(-b * f.f2(x)?))
        .collect::<Result<Vec<_>>>()?;
    GridFunction::from_values(u.grid(), values)
}

pub fn project(
    f: &Nonlinearity,
    u: &GridFunction,
    m: u32,
    phi: Option<&GridFunction>,
) -> Result<GridFunction> {
    project_with_step(f, u, m, phi).map(|(v, _)| v)
}

/// Projects `u` onto `C_m` along `phi` (default [`default_direction`] with
/// `delta = pi/16`) and returns the result together with the step `tau`.
pub fn project_with_step(
    f: &Nonlinearity,
    u: &GridFunction,
    m: u32,
    phi: Option<&GridFunction>,
) -> Result<(GridFunction, f64)> {
    let r0 = residual(f, u, m)?;
    if r0.abs() >= BASIN {
        return Err(Error::OutsideBasin { residual: r0 });
    }
    if r0.abs() <= SOLVE_TOL {
        return Ok((u.clone(), 0.0));
    }
    let owned;
    let phi = match phi {
        Some(p) => {
            u.check_same_grid(p)?;
            p
        }
        None => {
            owned = default_direction(f, u, DEFAULT_PHI_DELTA)?;
            &owned
        }
    };
    let d0 = d_omega(f, u, m, phi, PI)?;
    if d0.abs() < MIN_DERIVATIVE {
        return Err(Error::ZeroDerivative { value: d0 });
    }

    // Sign-tracked bracket: `neg` has residual < 0, `pos` residual > 0.
    let mut neg: Option<f64> = None;
    let mut pos: Option<f64> = None;
    let note = |tau: f64, r: f64, neg: &mut Option<f64>, pos: &mut Option<f64>| {
        if r < 0.0 {
            *neg = Some(tau);
        } else {
            *pos = Some(tau);
        }
    };
    let (mut tau, mut r, mut d) = (0.0_f64, r0, d0);
    note(tau, r, &mut neg, &mut pos);
    for _ in 0..200 {
        let newton = if d.abs() >= MIN_DERIVATIVE {
            tau - r / d
        } else {
            f64::NAN
        };
        let next = match (neg, pos) {
            (Some(a), Some(b)) => {
                let (lo, hi) = (a.min(b), a.max(b));
                if newton.is_finite() && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                }
            }
            _ => {
                if !newton.is_finite() {
                    return Err(Error::ZeroDerivative { value: d });
                }
                let clamped = newton.clamp(-1.0, 1.0);
                if clamped == tau {
                    return Err(Error::NoBracket { lo: -1.0, hi: 1.0 });
                }
                clamped
            }
        };
        if next == tau {
            break;
        }
        tau = next;
        let v = u.axpy(tau, phi)?;
        r = residual(f, &v, m)?;
        if r.abs() <= SOLVE_TOL {
            return Ok((v, tau));
        }
        note(tau, r, &mut neg, &mut pos);
        d = d_omega(f, &v, m, phi, PI)?;
    }
    Err(Error::NoBracket {
        lo: neg.unwrap_or(f64::NAN),
        hi: pos.unwrap_or(f64::NAN),
    })
}

/// C0 size of the correction `tau * phi`.
pub fn correction_norm(tau: f64, phi: &GridFunction) -> f64 {
    tau.abs() * phi.norm(NormKind::C0)
}
