//! Functions on a uniform grid of `[0, pi]`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i*pi/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub const MIN_CELLS: usize = 16;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "n = {n} is below the minimum of {}",
                Self::MIN_CELLS
            )));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n = {n} must be even")));
        }
        Ok(Self { n })
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        PI / self.n as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * PI / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.t(i))
    }

    /// Index of the node nearest to `t`, clamped to the grid.
    pub fn nearest_node(&self, t: f64) -> usize {
        let i = (t / self.spacing()).round();
        i.clamp(0.0, self.n as f64) as usize
    }

    /// Index of node `t` if `t` lies on the grid (to 1e-12).
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let i = self.nearest_node(t);
        if (self.t(i) - t).abs() <= 1e-12 {
            Ok(i)
        } else {
            Err(Error::InvalidArgument(format!(
                "t = {t} is not a grid node"
            )))
        }
    }

    /// Distance from node `i` to the nearer endpoint, computed so that mirrored
    /// nodes `i` and `n - i` get bitwise identical values.
    fn edge_distance(&self, i: usize) -> f64 {
        self.t(i.min(self.n - i))
    }
}

/// Free-function form of [`Grid::new`].
pub fn uniform_grid(n: usize) -> Result<Grid> {
    Grid::new(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    C0,
    L1,
    L2,
}

/// A function sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    dirichlet: bool,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>, dirichlet: bool) -> Result<Self> {
        if values.len() != grid.cells() + 1 {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at node {i}"
            )));
        }
        if dirichlet && (values[0] != 0.0 || values[grid.cells()] != 0.0) {
            return Err(Error::InvalidArgument(
                "Dirichlet function must vanish at both endpoints".into(),
            ));
        }
        Ok(Self {
            grid,
            values,
            dirichlet,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells() + 1],
            dirichlet: true,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect(), false)
    }

    /// Samples `f` and pins both endpoints to exactly zero.
    pub fn dirichlet_from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = grid.nodes().map(f).collect();
        values[0] = 0.0;
        values[grid.cells()] = 0.0;
        Self::new(grid, values, true)
    }

    /// Infers the Dirichlet flag from the endpoint values.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let dirichlet = values.first() == Some(&0.0) && values.last() == Some(&0.0);
        Self::new(grid, values, dirichlet)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.cells()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Overwrites nodes `start..start + seg.len()`.
    pub fn splice(&mut self, start: usize, seg: &[f64]) -> Result<()> {
        let end = start + seg.len();
        if end > self.values.len() {
            return Err(Error::GridMismatch("segment runs past the grid".into()));
        }
        self.values[start..end].copy_from_slice(seg);
        self.dirichlet = self.values[0] == 0.0 && self.values[self.n()] == 0.0;
        Ok(())
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "n = {} vs n = {}",
                self.n(),
                other.n()
            )));
        }
        Ok(())
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::C0 => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            NormKind::L1 => trapezoid(self.grid, self.values.iter().map(|v| v.abs())),
            NormKind::L2 => trapezoid(self.grid, self.values.iter().map(|v| v * v)).sqrt(),
        }
    }

    /// `self - other` as a plain (non-Dirichlet-checked) function.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        GridFunction::from_values(self.grid, values)
    }

    pub fn distance(&self, other: &GridFunction, kind: NormKind) -> Result<f64> {
        Ok(self.sub(other)?.norm(kind))
    }

    /// `self + tau * dir`.
    pub fn axpy(&self, tau: f64, dir: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(dir)?;
        let values = self
            .values
            .iter()
            .zip(&dir.values)
            .map(|(u, d)| u + tau * d)
            .collect();
        GridFunction::from_values(self.grid, values)
    }

    /// CSV with header `t,u` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        write_csv("t,u", self.grid, &self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (grid, values) = read_csv(text, "t,u")?;
        Self::from_values(grid, values)
    }
}

pub fn norm(u: &GridFunction, kind: NormKind) -> f64 {
    u.norm(kind)
}

/// Trapezoid rule over the whole grid.
pub fn trapezoid(grid: Grid, values: impl IntoIterator<Item = f64>) -> f64 {
    let n = grid.cells();
    let mut sum = 0.0;
    for (i, v) in values.into_iter().enumerate() {
        sum += if i == 0 || i == n { 0.5 * v } else { v };
    }
    sum * grid.spacing()
}

/// Composite Simpson rule over nodes `0..=k` (`k` even).
pub fn simpson_prefix(h: f64, values: &[f64]) -> f64 {
    let k = values.len() - 1;
    debug_assert!(k.is_multiple_of(2));
    let mut sum = values[0] + values[k];
    for (i, v) in values.iter().enumerate().take(k).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * h / 3.0
}

/// Quintic smoothstep `x^3 (10 - 15x + 6x^2)` clamped to `[0, 1]`; C2 with
/// vanishing first and second derivatives at both ends.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_d1(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (1.0 - x) * (1.0 - x)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < PI / 4.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "delta = {delta} outside (0, pi/4)"
        )))
    }
}

/// Bump profile as a function of the distance `d` to the nearer endpoint.
fn bump_of_distance(delta: f64, d: f64) -> f64 {
    smoothstep((d - delta) / delta)
}

/// `beta_delta(t)`: 0 on `[0, delta] and [pi - delta, pi]`, 1 on
/// `[2 delta, pi - 2 delta]`, smoothstep in between.
pub fn bump_value(delta: f64, t: f64) -> f64 {
    bump_of_distance(delta, t.min(PI - t))
}

pub fn bump_beta(delta: f64, grid: Grid) -> Result<GridFunction> {
    check_delta(delta)?;
    let values = (0..=grid.cells())
        .map(|i| bump_of_distance(delta, grid.edge_distance(i)))
        .collect();
    GridFunction::new(grid, values, true)
}

/// Dirichlet function equal to `x` on `[delta, pi - delta]` with smoothstep
/// ramps down to zero at both ends.
pub fn ramp_constant(x: f64, delta: f64, grid: Grid) -> Result<GridFunction> {
    check_delta(delta)?;
    let values = (0..=grid.cells())
        .map(|i| x * smoothstep(grid.edge_distance(i) / delta))
        .collect();
    GridFunction::new(grid, values, true)
}

/// `(1 - s) u0 + s u1`.
pub fn segment(u0: &GridFunction, u1: &GridFunction, s: f64) -> Result<GridFunction> {
    u0.check_same_grid(u1)?;
    let values = u0
        .values
        .iter()
        .zip(&u1.values)
        .map(|(a, b)| (1.0 - s) * a + s * b)
        .collect();
    GridFunction::from_values(u0.grid, values)
}

pub(crate) fn write_csv(header: &str, grid: Grid, values: &[f64]) -> String {
    let mut out = String::with_capacity(48 * values.len());
    out.push_str(header);
    out.push('\n');
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e}", grid.t(i), v);
    }
    out
}

/// Parses a two-column CSV on a uniform grid; `n` is inferred from the row count.
pub(crate) fn read_csv(text: &str, header: &str) -> Result<(Grid, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::Malformed(format!(
                "expected header `{header}`, found {other:?}"
            )))
        }
    }
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut cols = line.split(',');
        let parse = |c: Option<&str>| -> Result<f64> {
            c.and_then(|c| c.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Malformed(format!("row {}: `{line}`", row + 1)))
        };
        ts.push(parse(cols.next())?);
        values.push(parse(cols.next())?);
        if cols.next().is_some() {
            return Err(Error::Malformed(format!(
                "row {}: too many columns",
                row + 1
            )));
        }
    }
    if values.len() < 2 {
        return Err(Error::Malformed("too few rows".into()));
    }
    let grid = Grid::new(values.len() - 1).map_err(|e| Error::Malformed(e.to_string()))?;
    for (i, t) in ts.iter().enumerate() {
        if (t - grid.t(i)).abs() > 1e-9 {
            return Err(Error::Malformed(format!(
                "row {}: t = {t} is not the uniform node {}",
                i + 1,
                grid.t(i)
            )));
        }
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Malformed(format!(
            "non-finite value in row {}",
            i + 1
        )));
    }
    Ok((grid, values))
}
