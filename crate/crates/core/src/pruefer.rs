//! Shooting solutions and Prüfer m-arguments.
//!
//! For a potential `q(t) = f'(u(t))` the linearized equation
//! `-v'' + q v = 0` is integrated as a first-order system, and the
//! m-argument `omega_m` (the continuous argument of `(v', m v)`) is
//! integrated directly from its scalar Riccati-type equation
//!
//! ```text
//! omega' = m - (m^2 + q(t)) / m * sin^2(omega)
//! ```
//!
//! Both use classical RK4 with the fixed step `h = pi/n`. Between nodes `u`
//! is interpolated linearly before `f'` is applied, so the half-step stages
//! see `f'((u_i + u_{i+1}) / 2)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::funcspace::{Grid, GridFunction};
use crate::nonlinearity::Nonlinearity;

/// `f'(u)` sampled at nodes and cell midpoints of a run of nodes.
#[derive(Debug, Clone)]
pub struct Potential {
    pub nodes: Vec<f64>,
    pub mids: Vec<f64>,
}

impl Potential {
    pub fn from_values(f: &Nonlinearity, values: &[f64]) -> Result<Self> {
        let nodes = values
            .iter()
            .map(|&u| f.f1(u))
            .collect::<Result<Vec<_>>>()?;
        let mids = values
            .windows(2)
            .map(|w| f.f1(0.5 * (w[0] + w[1])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes, mids })
    }

    pub fn new(f: &Nonlinearity, u: &GridFunction) -> Result<Self> {
        Self::from_values(f, u.values())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Right-hand side of the m-argument equation.
#[inline]
pub fn omega_rhs(m: f64, q: f64, omega: f64) -> f64 {
    let s = omega.sin();
    m - (m * m + q) / m * s * s
}

/// One RK4 step of length `h` (negative to go backwards) with potential
/// `qa`, `qm`, `qb` at the start, middle and end of the cell.
#[inline]
pub fn angle_step(m: f64, w: f64, qa: f64, qm: f64, qb: f64, h: f64) -> f64 {
    let k1 = omega_rhs(m, qa, w);
    let k2 = omega_rhs(m, qm, w + 0.5 * h * k1);
    let k3 = omega_rhs(m, qm, w + 0.5 * h * k2);
    let k4 = omega_rhs(m, qb, w + h * k3);
    w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates the m-argument across a run of nodes, starting at node `0` of
/// the run when `forward`, or at the last node otherwise. The returned values
/// are indexed like the run's nodes.
pub fn angle_sweep(pot: &Potential, h: f64, m: u32, theta0: f64, forward: bool) -> Vec<f64> {
    let m = f64::from(m);
    let len = pot.len();
    let mut out = vec![0.0; len];
    let step = |w: f64, qa: f64, qm: f64, qb: f64, h: f64| angle_step(m, w, qa, qm, qb, h);
    if forward {
        out[0] = theta0;
        for i in 0..len - 1 {
            out[i + 1] = step(out[i], pot.nodes[i], pot.mids[i], pot.nodes[i + 1], h);
        }
    } else {
        out[len - 1] = theta0;
        for i in (1..len).rev() {
            out[i - 1] = step(out[i], pot.nodes[i], pot.mids[i - 1], pot.nodes[i - 1], -h);
        }
    }
    out
}

/// Final value of a forward sweep without storing the trajectory.
pub fn angle_end(pot: &Potential, h: f64, m: u32, theta0: f64) -> f64 {
    let mf = f64::from(m);
    let mut w = theta0;
    for i in 0..pot.len() - 1 {
        w = angle_step(mf, w, pot.nodes[i], pot.mids[i], pot.nodes[i + 1], h);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// `v(u, .)` and `v'(u, .)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingSolution {
    pub v: Vec<f64>,
    pub vp: Vec<f64>,
}

impl ShootingSolution {
    pub fn v_end(&self) -> f64 {
        *self.v.last().unwrap()
    }

    pub fn v_scale(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// An m-argument sampled on a contiguous run of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTrajectory {
    pub m: u32,
    pub grid: Grid,
    /// Anchor node and value.
    pub t0: f64,
    pub theta0: f64,
    /// Index of the first covered node.
    pub first: usize,
    pub omega: Vec<f64>,
}

impl AngleTrajectory {
    pub fn is_global(&self) -> bool {
        self.first == 0
            && self.t0 == 0.0
            && self.theta0 == 0.0
            && self.omega.len() == self.grid.cells() + 1
    }

    /// Value at grid node `i`.
    pub fn at(&self, i: usize) -> f64 {
        self.omega[i - self.first]
    }

    pub fn last(&self) -> f64 {
        *self.omega.last().unwrap()
    }

    pub fn covers(&self, i: usize) -> bool {
        i >= self.first && i < self.first + self.omega.len()
    }

    /// CSV with header `t,omega`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,omega\n");
        for (k, w) in self.omega.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.grid.t(self.first + k), w);
        }
        out
    }
}

const OVERFLOW: f64 = 1e150;

/// RK4 for `(v, v')' = (v', f'(u) v)` with `v(0) = 0, v'(0) = 1`.
pub fn shoot(f: &Nonlinearity, u: &GridFunction) -> Result<ShootingSolution> {
    let pot = Potential::new(f, u)?;
    shoot_potential(&pot, u.grid())
}

pub fn shoot_potential(pot: &Potential, grid: Grid) -> Result<ShootingSolution> {
    let h = grid.spacing();
    let n = grid.cells();
    let mut v = vec![0.0; n + 1];
    let mut vp = vec![0.0; n + 1];
    vp[0] = 1.0;
    for i in 0..n {
        let (qa, qm, qb) = (pot.nodes[i], pot.mids[i], pot.nodes[i + 1]);
        let (y, p) = (v[i], vp[i]);
        let (k1y, k1p) = (p, qa * y);
        let (k2y, k2p) = (p + 0.5 * h * k1p, qm * (y + 0.5 * h * k1y));
        let (k3y, k3p) = (p + 0.5 * h * k2p, qm * (y + 0.5 * h * k2y));
        let (k4y, k4p) = (p + h * k3p, qb * (y + h * k3y));
        v[i + 1] = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        vp[i + 1] = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        let (a, b) = (v[i + 1], vp[i + 1]);
        if !a.is_finite() || !b.is_finite() || a.abs() > OVERFLOW || b.abs() > OVERFLOW {
            return Err(Error::Overflow { t: grid.t(i + 1) });
        }
    }
    Ok(ShootingSolution { v, vp })
}

/// The global m-argument `omega_m(u, .)` with `omega_m(u, 0) = 0`.
pub fn omega_m(f: &Nonlinearity, u: &GridFunction, m: u32) -> Result<AngleTrajectory> {
    omega_local(f, u, m, 0.0, 0.0, Direction::Forward)
}

/// A local m-argument anchored at `(t0, theta0)`, integrated towards `pi`
/// (forward) or towards `0` (backward).
pub fn omega_local(
    f: &Nonlinearity,
    u: &GridFunction,
    m: u32,
    t0: f64,
    theta0: f64,
    direction: Direction,
) -> Result<AngleTrajectory> {
    check_m(m)?;
    let grid = u.grid();
    let i0 = grid.node_index(t0)?;
    let (first, last) = match direction {
        Direction::Forward => (i0, grid.cells()),
        Direction::Backward => (0, i0),
    };
    let pot = Potential::from_values(f, &u.values()[first..=last])?;
    let omega = angle_sweep(
        &pot,
        grid.spacing(),
        m,
        theta0,
        direction == Direction::Forward,
    );
    Ok(AngleTrajectory {
        m,
        grid,
        t0,
        theta0,
        first,
        omega,
    })
}

pub(crate) fn check_m(m: u32) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    Ok(())
}

/// Directional derivative of `omega_m(., t)` at `u` along `phi`:
///
/// ```text
/// -m / ((m v(t))^2 + v'(t)^2) * int_0^t f''(u(s)) phi(s) v(s)^2 ds
/// ```
pub fn d_omega(
    f: &Nonlinearity,
    u: &GridFunction,
    m: u32,
    phi: &GridFunction,
    t: f64,
) -> Result<f64> {
    check_m(m)?;
    u.check_same_grid(phi)?;
    let grid = u.grid();
    let k = grid.node_index(t)?;
    let sol = shoot(f, u)?;
    d_omega_with(f, u, &sol, m, phi, k)
}

pub(crate) fn d_omega_with(
    f: &Nonlinearity,
    u: &GridFunction,
    sol: &ShootingSolution,
    m: u32,
    phi: &GridFunction,
    k: usize,
) -> Result<f64> {
    // Cell-wise Simpson with midpoint values: u and phi are piecewise linear,
    // so the integrand has kinks at nodes. v at midpoints by cubic Hermite.
    let h = u.grid().spacing();
    let g = |x: f64, p: f64, v: f64| -> Result<f64> {
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(f.f2(x)? * p * v * v)
    };
    let mut integral = 0.0;
    let mut left = g(u.at(0), phi.at(0), sol.v[0])?;
    for i in 0..k {
        let right = g(u.at(i + 1), phi.at(i + 1), sol.v[i + 1])?;
        let pm = 0.5 * (phi.at(i) + phi.at(i + 1));
        if pm != 0.0 || left != 0.0 || right != 0.0 {
            let vm = 0.5 * (sol.v[i] + sol.v[i + 1]) + h / 8.0 * (sol.vp[i] - sol.vp[i + 1]);
            let mid = g(0.5 * (u.at(i) + u.at(i + 1)), pm, vm)?;
            integral += h / 6.0 * (left + 4.0 * mid + right);
        }
        left = right;
    }
    if integral == 0.0 {
        return Ok(0.0);
    }
    let mf = f64::from(m);
    let (v, vp) = (sol.v[k], sol.vp[k]);
    Ok(-mf / ((mf * v).powi(2) + vp * vp) * integral)
}

/// `floor(omega(pi) / pi + 1e-9)` for a global trajectory.
pub fn zero_count(traj: &AngleTrajectory) -> Result<u32> {
    if !traj.is_global() {
        return Err(Error::InvalidArgument(
            "zero_count needs the global trajectory".into(),
        ));
    }
    Ok((traj.last() / PI + 1e-9).floor().max(0.0) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{ramp_constant, Grid};
    use crate::nonlinearity::parse;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn free_particle_shooting() {
        let f = parse("0").unwrap();
        let g = grid(2048);
        let u = GridFunction::dirichlet_from_fn(g, |t| t.sin()).unwrap();
        let s = shoot(&f, &u).unwrap();
        for i in 0..=2048 {
            assert!((s.v[i] - g.t(i)).abs() < 1e-10);
            assert!((s.vp[i] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_negative_potential() {
        let f = parse("x^3 - 4*x").unwrap();
        let g = grid(2048);
        let s = shoot(&f, &GridFunction::zeros(g)).unwrap();
        assert!(s.v_end().abs() < 1e-9);
        for i in (0..=2048).step_by(64) {
            assert!((s.v[i] - (2.0 * g.t(i)).sin() / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn step_halving_oracle() {
        let f = parse("x^2/2").unwrap();
        let coarse = ramp_constant(-1.0, 0.1, grid(2048)).unwrap();
        // Same piecewise-linear u, integrated with half the step.
        let mut refined = Vec::with_capacity(4097);
        for w in coarse.values().windows(2) {
            refined.push(w[0]);
            refined.push(0.5 * (w[0] + w[1]));
        }
        refined.push(0.0);
        let fine = GridFunction::new(grid(4096), refined, true).unwrap();
        let a = shoot(&f, &coarse).unwrap().v_end();
        let b = shoot(&f, &fine).unwrap().v_end();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn overflow_is_reported() {
        let f = parse("1e6*x").unwrap();
        let u = GridFunction::zeros(grid(64));
        // f' = 1e6 everywhere: v grows like exp(1000 t), which overflows the
        // 1e150 guard near t = 0.35.
        assert!(matches!(shoot(&f, &u), Err(Error::Overflow { .. })));
    }

    #[test]
    fn free_angle_is_arctan() {
        let f = parse("0").unwrap();
        let g = grid(2048);
        let w = omega_m(&f, &GridFunction::zeros(g), 2).unwrap();
        for i in 0..=2048 {
            assert!((w.at(i) - (2.0 * g.t(i)).atan()).abs() < 1e-8);
        }
        assert_eq!(zero_count(&w).unwrap(), 0);
        let w1 = omega_m(&f, &GridFunction::zeros(g), 1).unwrap();
        assert_eq!(zero_count(&w1).unwrap(), 0);
    }

    #[test]
    fn resonant_constant_potential_is_linear() {
        let f = parse("x^3 - 4*x").unwrap();
        let g = grid(2048);
        let w = omega_m(&f, &GridFunction::zeros(g), 2).unwrap();
        assert!((w.last() - 2.0 * PI).abs() < 1e-8);
        for i in 0..=2048 {
            assert!((w.at(i) - 2.0 * g.t(i)).abs() < 1e-12);
        }
        assert_eq!(zero_count(&w).unwrap(), 2);
    }

    #[test]
    fn local_angle_matches_global_and_reverses() {
        let f = parse("x^2/2").unwrap();
        let g = grid(2048);
        let u = ramp_constant(-1.3, 0.2, g).unwrap();
        let global = omega_m(&f, &u, 1).unwrap();
        let local = omega_local(&f, &u, 1, 0.0, 0.0, Direction::Forward).unwrap();
        assert_eq!(global, local);
        let back = omega_local(&f, &u, 1, PI, global.last(), Direction::Backward).unwrap();
        for i in 0..=2048 {
            assert!((back.at(i) - global.at(i)).abs() < 1e-7);
        }
        assert!(omega_local(&f, &u, 1, 0.1234, 0.0, Direction::Forward).is_err());
    }

    #[test]
    fn local_angle_slope_m_on_resonant_window() {
        // u = -4 on the middle so f'(u) = -4 = -m^2 for m = 2.
        let f = parse("x^2/2").unwrap();
        let g = grid(1024);
        let u = ramp_constant(-4.0, 0.3, g).unwrap();
        let i0 = g.nearest_node(0.7);
        let t0 = g.t(i0);
        let w = omega_local(&f, &u, 2, t0, 2.0 * t0, Direction::Forward).unwrap();
        for i in i0..g.nearest_node(PI - 0.7) {
            assert!((w.at(i) - 2.0 * g.t(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn tan_identity_links_shooting_and_angle() {
        let f = parse("x^2/2").unwrap();
        let g = grid(2048);
        let u = ramp_constant(-2.5, 0.3, g).unwrap();
        let s = shoot(&f, &u).unwrap();
        for m in 1..=3u32 {
            let w = omega_m(&f, &u, m).unwrap();
            let mf = f64::from(m);
            for i in 0..=2048 {
                if s.vp[i].abs() > 1e-8 {
                    let lhs = w.at(i).tan() * s.vp[i] - mf * s.v[i];
                    assert!(lhs.abs() < 1e-6 * (1.0 + s.v[i].abs() + s.vp[i].abs()));
                }
            }
        }
    }

    #[test]
    fn d_omega_closed_form() {
        let f = parse("x^2/2").unwrap();
        let g = grid(2048);
        let u = GridFunction::zeros(g);
        let phi = GridFunction::from_fn(g, |_| 1.0).unwrap();
        let d = d_omega(&f, &u, 1, &phi, PI).unwrap();
        let exact = -(PI.powi(3) / 3.0) / (PI * PI + 1.0);
        assert!((d - exact).abs() < 1e-8, "{d} vs {exact}");
        assert!((exact + 0.9509).abs() < 1e-4);
    }

    #[test]
    fn d_omega_vanishing_cases() {
        let g = grid(256);
        let u = ramp_constant(-1.0, 0.2, g).unwrap();
        let zero = GridFunction::zeros(g);
        let one = GridFunction::from_fn(g, |_| 1.0).unwrap();
        let quad = parse("x^2/2").unwrap();
        assert_eq!(d_omega(&quad, &u, 1, &zero, PI).unwrap(), 0.0);
        let lin = parse("-3*x + 2").unwrap();
        assert_eq!(d_omega(&lin, &u, 1, &one, PI).unwrap(), 0.0);
        let other = GridFunction::zeros(grid(128));
        assert!(d_omega(&quad, &u, 1, &other, PI).is_err());
    }
}
