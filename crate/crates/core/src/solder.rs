//! Potentials from angle profiles, and the solder operator `Xi`.
//!
//! A prescribed m-argument `w` on a window determines the potential through
//!
//! ```text
//! f'(u(t)) = -m^2 + m (m - w'(t)) / sin^2(w(t))
//! ```
//!
//! which is solved for `u` on the monotone branch of `f'` through a chosen
//! anchor. `Xi(h0, h1)` uses `w = m t + h0 + (h1 - h0) xi(t)` with `xi` the
//! quintic smoothstep, so the chunk equals `x_m` at both ends and carries the
//! local angle offset from `h0` to `h1`.

use serde::{Deserialize, Serialize};

use crate::critical::f1_root_from;
use crate::error::{Error, Result};
use crate::funcspace::{smoothstep, smoothstep_d1, Grid, GridFunction};
use crate::nonlinearity::Nonlinearity;
use crate::pruefer::{angle_end, angle_step, check_m, Potential};

/// Nodes closer than this to a zero of `sin(mt)` make a window inadmissible.
pub const SIN_MARGIN: f64 = 1e-3;
const SINGULAR: f64 = 1e-6;
const FOLD: f64 = 1e-10;
const EPS_LADDER_LEN: usize = 18;
const ENDPOINT_TOL: f64 = 1e-13;

/// Values of a function on the nodes `start..start + values.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    pub fn apply(&self, u: &mut GridFunction) -> Result<()> {
        u.splice(self.start, &self.values)
    }
}

/// A prescribed angle `w` on the nodes `start..`, with optional `w'`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleProfile {
    pub grid: Grid,
    pub start: usize,
    pub w: Vec<f64>,
    pub dw: Option<Vec<f64>>,
}

/// Window, offsets and admissible offset bound for one solder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolderSpec {
    #[serde(skip)]
    grid: Option<Grid>,
    pub i0: usize,
    pub i1: usize,
    pub t0: f64,
    pub t1: f64,
    pub h0: f64,
    pub h1: f64,
    pub m: u32,
    pub x_m: f64,
    pub eps: f64,
}

impl SolderSpec {
    /// Snaps `t0`, `t1` to the nearest nodes and picks the largest admissible
    /// `eps` from `0.2, 0.1, 0.05, ...`. Offsets start at zero.
    pub fn new(f: &Nonlinearity, grid: Grid, m: u32, x_m: f64, t0: f64, t1: f64) -> Result<Self> {
        check_m(m)?;
        let (i0, i1) = (grid.nearest_node(t0), grid.nearest_node(t1));
        let (t0, t1) = (grid.t(i0), grid.t(i1));
        let window_err = |reason: &str| Error::SolderWindow {
            t0,
            t1,
            reason: reason.into(),
        };
        if i0 == 0 || i1 >= grid.cells() || i1 < i0 + 2 {
            return Err(window_err(
                "need 0 < t0 < t1 < pi with at least three nodes",
            ));
        }
        let f2 = f.f2(x_m)?;
        if f2.abs() <= FOLD {
            return Err(Error::BranchFold { x: x_m });
        }
        let mf = f64::from(m);
        let mut eps = 0.2;
        for _ in 0..EPS_LADDER_LEN {
            if let Some(min_sin) = sin_margin(grid, mf, t0 - eps / mf, t1 + eps / mf) {
                if min_sin > eps {
                    let radius =
                        2.0 * mf * 2.0 * eps * (15.0 / 8.0) / (t1 - t0) / (min_sin - eps).powi(2);
                    if branch_covers(f, mf * mf, x_m, radius)? {
                        return Ok(Self {
                            grid: Some(grid),
                            i0,
                            i1,
                            t0,
                            t1,
                            h0: 0.0,
                            h1: 0.0,
                            m,
                            x_m,
                            eps,
                        });
                    }
                }
            }
            eps *= 0.5;
        }
        Err(window_err("no admissible offset bound"))
    }

    pub fn with_offsets(mut self, h0: f64, h1: f64) -> Result<Self> {
        for h in [h0, h1] {
            if !(h.abs() < self.eps) {
                return Err(Error::SolderOffset { h, eps: self.eps });
            }
        }
        self.h0 = h0;
        self.h1 = h1;
        Ok(self)
    }

    pub fn grid(&self) -> Grid {
        self.grid.expect("spec built by SolderSpec::new")
    }

    pub fn len(&self) -> usize {
        self.i1 - self.i0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Smallest `|sin(mt)|` over grid nodes in `[lo, hi]`, or `None` when it
/// drops to the margin or the interval leaves `[0, pi]`.
fn sin_margin(grid: Grid, m: f64, lo: f64, hi: f64) -> Option<f64> {
    if lo <= 0.0 || hi >= std::f64::consts::PI {
        return None;
    }
    let min = grid
        .nodes()
        .filter(|&t| t >= lo && t <= hi)
        .map(|t| (m * t).sin().abs())
        .fold(f64::INFINITY, f64::min);
    (min > SIN_MARGIN).then_some(min)
}

/// Whether `f'` reaches `-m2 - r` and `-m2 + r` on the monotone branch
/// through `x_m`.
fn branch_covers(f: &Nonlinearity, m2: f64, x_m: f64, r: f64) -> Result<bool> {
    let up = f.f2(x_m)?.signum();
    for (target, dir) in [(-m2 + r, up), (-m2 - r, -up)] {
        let Some(x) = f1_root_from(f, target, x_m, dir)? else {
            return Ok(false);
        };
        if !monotone_between(f, x_m, x, up)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn monotone_between(f: &Nonlinearity, a: f64, b: f64, sign: f64) -> Result<bool> {
    const PROBES: usize = 64;
    for k in 0..=PROBES {
        let x = a + (b - a) * k as f64 / PROBES as f64;
        let f2 = f.f2(x)?;
        if f2.abs() <= FOLD || f2.signum() != sign {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Five-point derivative, one-sided near the ends.
fn derivative(w: &[f64], h: f64) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| {
            if n < 5 {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                return (w[b] - w[a]) / ((b - a) as f64 * h);
            }
            let c = i.clamp(2, n - 3);
            let s = &w[c - 2..=c + 2];
            let coeffs: [f64; 5] = match i as isize - c as isize {
                -2 => [-25.0, 48.0, -36.0, 16.0, -3.0],
                -1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
                0 => [1.0, -8.0, 0.0, 8.0, -1.0],
                1 => [-1.0, 6.0, -18.0, 10.0, 3.0],
                _ => [3.0, -16.0, 36.0, -48.0, 25.0],
            };
            coeffs.iter().zip(s).map(|(c, v)| c * v).sum::<f64>() / (12.0 * h)
        })
        .collect()
}

/// Right-hand side targets for `f'(u)`; near-singular nodes are filled from
/// their neighbours.
fn targets(m: f64, w: &[f64], dw: &[f64]) -> Vec<f64> {
    let raw: Vec<Option<f64>> = w
        .iter()
        .zip(dw)
        .map(|(&w, &dw)| {
            let s = w.sin();
            (s.abs() >= SINGULAR).then(|| -m * m + m * (m - dw) / (s * s))
        })
        .collect();
    (0..raw.len())
        .map(|i| {
            raw[i].unwrap_or_else(|| {
                let left = raw[..i].iter().rev().flatten().next();
                let right = raw[i + 1..].iter().flatten().next();
                match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => *a,
                    (None, None) => -m * m,
                }
            })
        })
        .collect()
}

/// Solves `f'(x) = target` on the branch whose `f''` has sign `sign`,
/// starting from `seed`.
fn invert_f1(f: &Nonlinearity, target: f64, seed: f64, sign: f64, t: f64) -> Result<f64> {
    let g = |x: f64| -> Result<(f64, f64)> {
        let j = f.eval_jet2(x)?;
        Ok((j.d1 - target, j.d2))
    };
    let (g0, _) = g(seed)?;
    if g0 == 0.0 {
        return Ok(seed);
    }
    // Moving in direction `dir` raises f' when sign > 0.
    let dir = if g0 < 0.0 { sign } else { -sign };
    let reach = 1e3 * (1.0 + seed.abs());
    let mut step = 1e-6 * (1.0 + seed.abs());
    let (mut a, mut ga) = (seed, g0);
    let (lo, hi) = loop {
        if step > reach {
            return Err(Error::BranchRange { target, t });
        }
        let b = seed + dir * step;
        let (gb, f2) = g(b)?;
        if f2 != 0.0 && f2.signum() != sign {
            return Err(Error::BranchFold { x: b });
        }
        if gb == 0.0 {
            return Ok(b);
        }
        if (gb > 0.0) != (ga > 0.0) {
            break if ga < 0.0 { (a, b) } else { (b, a) };
        }
        a = b;
        ga = gb;
        step *= 2.0;
    };
    // rtsafe: g(lo) < 0 < g(hi).
    let (mut lo, mut hi) = (lo, hi);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (gx, f2) = g(x)?;
        if gx == 0.0 {
            break;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - gx / f2;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        let next = if f2 != 0.0 && inside {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || (hi - lo).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    let f2 = f.f2(x)?;
    if f2.abs() <= FOLD || f2.signum() != sign {
        return Err(Error::BranchFold { x });
    }
    Ok(x)
}

/// Node values `u_{i+1}` such that one RK4 angle step from `w[i]` lands on
/// `w[i+1]`, given `u_i`; `guess` seeds the root. `None` when the step is
/// insensitive to `u_{i+1}` (near a zero of `sin w`).
fn step_root(
    f: &Nonlinearity,
    m: f64,
    (w0, w1): (f64, f64),
    h: f64,
    u0: f64,
    guess: f64,
) -> Result<Option<f64>> {
    let qa = f.f1(u0)?;
    let g = |x: f64| -> Result<f64> {
        Ok(angle_step(m, w0, qa, f.f1(0.5 * (u0 + x))?, f.f1(x)?, h) - w1)
    };
    let dx = 1e-7 * (1.0 + guess.abs());
    let (mut a, mut ga) = (guess, g(guess)?);
    let (mut b, mut gb) = (guess + dx, g(guess + dx)?);
    if (gb - ga).abs() <= 1e-14 * dx * h.abs() {
        return Ok(None);
    }
    for _ in 0..50 {
        if ga == 0.0 {
            return Ok(Some(a));
        }
        let c = a - ga * (a - b) / (ga - gb);
        if !c.is_finite() {
            return Ok(None);
        }
        if (c - a).abs() <= 4.0 * f64::EPSILON * (1.0 + c.abs()) {
            return Ok(Some(c));
        }
        (b, gb) = (a, ga);
        (a, ga) = (c, g(c)?);
    }
    Ok(None)
}

/// Marches the discrete inverse from node `c` with `u_c = start`, both ways.
fn march(
    f: &Nonlinearity,
    m: f64,
    w: &[f64],
    h: f64,
    guess: &[f64],
    c: usize,
    start: f64,
) -> Result<Vec<f64>> {
    let mut u = guess.to_vec();
    u[c] = start;
    for i in c..w.len() - 1 {
        u[i + 1] =
            step_root(f, m, (w[i], w[i + 1]), h, u[i], guess[i + 1])?.unwrap_or(guess[i + 1]);
    }
    for i in (1..=c).rev() {
        u[i - 1] =
            step_root(f, m, (w[i], w[i - 1]), -h, u[i], guess[i - 1])?.unwrap_or(guess[i - 1]);
    }
    Ok(u)
}

/// Exact inverse of the discrete angle sweep, up to the one free value at the
/// centre. That value excites an alternating mode, so it is chosen to fit the
/// pointwise estimates `guess` in least squares.
fn invert_steps(
    f: &Nonlinearity,
    m: f64,
    w: &[f64],
    h: f64,
    guess: &[f64],
    sign: f64,
) -> Result<Vec<f64>> {
    let c = w.len() / 2;
    let base = march(f, m, w, h, guess, c, guess[c])?;
    let d = 1e-6 * (1.0 + guess[c].abs());
    let moved = march(f, m, w, h, guess, c, guess[c] + d)?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((b, mv), g) in base.iter().zip(&moved).zip(guess) {
        let mode = (mv - b) / d;
        num += (g - b) * mode;
        den += mode * mode;
    }
    let u = if den > 0.0 {
        march(f, m, w, h, guess, c, guess[c] + num / den)?
    } else {
        base
    };
    for &x in &u {
        let f2 = f.f2(x)?;
        if f2.abs() <= FOLD || f2.signum() != sign {
            return Err(Error::BranchFold { x });
        }
    }
    Ok(u)
}

/// Potential values whose m-argument follows `profile.w`, on the branch of
/// `f'` through `anchor_x`.
pub fn reconstruct_u(
    f: &Nonlinearity,
    m: u32,
    profile: &AngleProfile,
    anchor_x: f64,
) -> Result<Segment> {
    check_m(m)?;
    let w = &profile.w;
    if w.is_empty() || profile.start + w.len() > profile.grid.cells() + 1 {
        return Err(Error::InvalidArgument(
            "angle profile outside the grid".into(),
        ));
    }
    let h = profile.grid.spacing();
    let dw = match &profile.dw {
        Some(d) if d.len() == w.len() => d.clone(),
        Some(_) => return Err(Error::InvalidArgument("w and w' lengths differ".into())),
        None => derivative(w, h),
    };
    let q = targets(f64::from(m), w, &dw);
    let sign = f.f2(anchor_x)?.signum();
    if f.f2(anchor_x)?.abs() <= FOLD {
        return Err(Error::BranchFold { x: anchor_x });
    }
    let mut seed = anchor_x;
    let mut values = Vec::with_capacity(w.len());
    for (k, &target) in q.iter().enumerate() {
        let t = profile.grid.t(profile.start + k);
        let x = invert_f1(f, target, seed, sign, t)?;
        values.push(x);
        seed = x;
    }
    if profile.dw.is_none() && values.len() >= 3 {
        values = invert_steps(f, f64::from(m), w, h, &values, sign)?;
    }
    Ok(Segment {
        start: profile.start,
        values,
    })
}

/// The solder chunk `Xi_{t0,t1}(h0, h1, .)` on nodes `i0..=i1`.
pub fn xi_solder(f: &Nonlinearity, spec: &SolderSpec) -> Result<Segment> {
    let len = spec.len();
    if spec.h0 == spec.h1 {
        return Ok(Segment {
            start: spec.i0,
            values: vec![spec.x_m; len],
        });
    }
    for h in [spec.h0, spec.h1] {
        if !(h.abs() < spec.eps) {
            return Err(Error::SolderOffset { h, eps: spec.eps });
        }
    }
    let grid = spec.grid();
    let mf = f64::from(spec.m);
    let width = spec.t1 - spec.t0;
    let dh = spec.h1 - spec.h0;
    let ts: Vec<f64> = (spec.i0..=spec.i1).map(|i| grid.t(i)).collect();
    let w: Vec<f64> = ts
        .iter()
        .map(|&t| mf * t + spec.h0 + dh * smoothstep((t - spec.t0) / width))
        .collect();
    let xi1: Vec<f64> = ts
        .iter()
        .map(|&t| smoothstep_d1((t - spec.t0) / width) / width)
        .collect();
    let start_angle = mf * spec.t0 + spec.h0;
    let goal = mf * spec.t1 + spec.h1;

    let build = |lambda: f64| -> Result<(Segment, f64)> {
        let profile = AngleProfile {
            grid,
            start: spec.i0,
            w: w.clone(),
            dw: Some(xi1.iter().map(|d| mf + lambda * dh * d).collect()),
        };
        let mut seg = reconstruct_u(f, spec.m, &profile, spec.x_m)?;
        seg.values[0] = spec.x_m;
        seg.values[len - 1] = spec.x_m;
        let pot = Potential::from_values(f, &seg.values)?;
        let miss = angle_end(&pot, grid.spacing(), spec.m, start_angle) - goal;
        Ok((seg, miss))
    };

    // Secant on the amplitude so the discrete angle lands on the goal.
    let (mut l0, (mut best, mut g0)) = (1.0, build(1.0)?);
    if g0.abs() <= ENDPOINT_TOL {
        return Ok(best);
    }
    let mut l1 = 1.0 + 1e-3;
    let (mut seg1, mut g1) = build(l1)?;
    for _ in 0..30 {
        if g1.abs() < g0.abs() {
            best = seg1.clone();
        }
        if g1.abs() <= ENDPOINT_TOL || g1 == g0 {
            break;
        }
        let l2 = l1 - g1 * (l1 - l0) / (g1 - g0);
        l0 = l1;
        g0 = g1;
        l1 = l2;
        (seg1, g1) = build(l1)?;
    }
    if g1.abs() <= g0.abs() {
        best = seg1;
        g0 = g1;
    }
    if g0.abs() > 1e-10 {
        return Err(Error::SolderOffset {
            h: g0,
            eps: spec.eps,
        });
    }
    Ok(best)
}

/// Local angle reached at `t1` when integrating from `m t0 + h0` through
/// `seg`; the endpoint offset is this minus `m t1`.
pub fn carried_offset(f: &Nonlinearity, grid: Grid, m: u32, seg: &Segment, h0: f64) -> Result<f64> {
    let mf = f64::from(m);
    let pot = Potential::from_values(f, &seg.values)?;
    let start = mf * grid.t(seg.start) + h0;
    Ok(angle_end(&pot, grid.spacing(), m, start) - mf * grid.t(seg.end()))
}
