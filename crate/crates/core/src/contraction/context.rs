use std::f64::consts::PI;

use serde::Serialize;

use super::params::{ContractionParams, DerivedRadii};
use crate::error::{Error, Result};
use crate::funcspace::{bump_beta, Grid, GridFunction};
use crate::nonlinearity::Nonlinearity;
use crate::pruefer::{omega_local, Direction};
use crate::solder::{xi_solder, Segment, SolderSpec};

pub const OFFSET_SNAP: f64 = 1e-12;

/// Node indices of the window boundaries, left to right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nodes {
    pub a: usize,
    pub d2p: usize,
    pub d1p: usize,
    pub d1: usize,
    pub r_d1: usize,
    pub r_d0p: usize,
    pub r_d1p: usize,
    pub r_d2p: usize,
    pub r_a: usize,
}

/// Everything the stages share: the nonlinearity, `x_m`, snapped windows
/// and their solder specs, and the stage-2 offset `eta`.
#[derive(Debug, Clone)]
pub struct Context<'a> {
    pub f: &'a Nonlinearity,
    pub m: u32,
    pub grid: Grid,
    pub x_m: f64,
    pub params: ContractionParams,
    pub radii: DerivedRadii,
    pub nodes: Nodes,
    /// Stage-2 windows in the order `[a, d2p]`, `[d1p, d1]`,
    /// `[pi - d1, pi - d0p]`, `[pi - d0p, pi - d1p]`, `[pi - d2p, pi - a]`.
    pub windows: [SolderSpec; 5],
    pub eta: f64,
    pub beta_d1: GridFunction,
    pub beta_d2_half: GridFunction,
    pub beta_d0: GridFunction,
}

impl<'a> Context<'a> {
    pub fn new(
        f: &'a Nonlinearity,
        m: u32,
        x_m: f64,
        grid: Grid,
        params: ContractionParams,
    ) -> Result<Self> {
        params.validate(m)?;
        let r = params.derived();
        let node = |t: f64| grid.nearest_node(t);
        let nodes = Nodes {
            a: node(r.a),
            d2p: node(r.delta2p),
            d1p: node(r.delta1p),
            d1: node(params.delta1),
            r_d1: node(PI - params.delta1),
            r_d0p: node(PI - r.delta0p),
            r_d1p: node(PI - r.delta1p),
            r_d2p: node(PI - r.delta2p),
            r_a: node(PI - r.a),
        };
        let order = [
            node(params.delta2),
            nodes.a,
            nodes.d2p,
            nodes.d1p,
            nodes.d1,
            nodes.r_d1,
            nodes.r_d0p,
            nodes.r_d1p,
            nodes.r_d2p,
            nodes.r_a,
        ];
        if order.windows(2).any(|w| w[1] < w[0] + 3) || order[0] < 3 {
            return Err(Error::Precondition(format!(
                "grid of {} cells too coarse for delta1 = {}",
                grid.cells(),
                params.delta1
            )));
        }
        let spec = |i0: usize, i1: usize| SolderSpec::new(f, grid, m, x_m, grid.t(i0), grid.t(i1));
        let windows = [
            spec(nodes.a, nodes.d2p)?,
            spec(nodes.d1p, nodes.d1)?,
            spec(nodes.r_d1, nodes.r_d0p)?,
            spec(nodes.r_d0p, nodes.r_d1p)?,
            spec(nodes.r_d2p, nodes.r_a)?,
        ];
        let eta = match params.eta {
            Some(eta) => eta,
            None => 0.05 * windows[2].eps.min(windows[3].eps),
        };
        if !(eta < windows[2].eps && eta < windows[3].eps) {
            return Err(Error::SolderOffset {
                h: eta,
                eps: windows[2].eps.min(windows[3].eps),
            });
        }
        Ok(Self {
            f,
            m,
            grid,
            x_m,
            params,
            radii: r,
            nodes,
            windows,
            eta,
            beta_d1: bump_beta(params.delta1, grid)?,
            beta_d2_half: bump_beta(params.delta2 / 2.0, grid)?,
            beta_d0: bump_beta(params.delta0, grid)?,
        })
    }

    pub fn mf(&self) -> f64 {
        f64::from(self.m)
    }

    /// The end-window solder used from stage 3 on.
    pub fn tail_window(&self) -> SolderSpec {
        self.windows[3]
    }

    pub fn solder(&self, k: usize, h0: f64, h1: f64) -> Result<Segment> {
        xi_solder(self.f, &self.windows[k].with_offsets(h0, h1)?)
    }

    /// Forward offset `omega_m(u, t_i) - m t_i`.
    pub fn forward_offset(&self, u: &GridFunction, i: usize) -> Result<f64> {
        let traj = omega_local(self.f, u, self.m, 0.0, 0.0, Direction::Forward)?;
        Ok(traj.at(i) - self.mf() * self.grid.t(i))
    }

    /// Offset at node `i` of the angle integrated backward from `(pi, m pi)`.
    pub fn backward_offset(&self, u: &GridFunction, i: usize) -> Result<f64> {
        let traj = omega_local(self.f, u, self.m, PI, self.mf() * PI, Direction::Backward)?;
        Ok(traj.at(i) - self.mf() * self.grid.t(i))
    }

    /// Re-solders the tail window from the current offset at its left end
    /// down to zero; returns the offset used. Offsets below [`OFFSET_SNAP`]
    /// are rounding noise and leave the window at `x_m`.
    pub fn resolder_tail(&self, u: &mut GridFunction) -> Result<f64> {
        let mut h = self.forward_offset(u, self.nodes.r_d0p)?;
        if h.abs() < OFFSET_SNAP {
            h = 0.0;
        }
        let seg = xi_solder(self.f, &self.tail_window().with_offsets(h, 0.0)?)?;
        seg.apply(u)?;
        Ok(h)
    }

    /// Whether `u` equals `u_star` bitwise on `[0, d2p]` and `[pi - d2p, pi]`.
    pub fn pinned(&self, u: &GridFunction, u_star: &GridFunction) -> bool {
        let (a, b) = (u.values(), u_star.values());
        let n = self.grid.cells();
        (0..=self.nodes.d2p)
            .chain(self.nodes.r_d2p..=n)
            .all(|i| a[i].to_bits() == b[i].to_bits())
    }
}
