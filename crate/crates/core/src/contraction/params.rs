use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radii, tolerances and resolution of the five-stage homotopy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionParams {
    /// Support radius of the stage-1 corrector direction.
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Stage-2 offset; `None` picks `0.05` times the solder bound.
    pub eta: Option<f64>,
    pub tol_wall: f64,
    pub s_steps: usize,
    pub poly_degree: usize,
    pub final_tol: f64,
    pub tol_angle: f64,
}

/// Radii derived from `delta1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRadii {
    /// `delta1 / 4`, where the stage-2 offsets are read.
    pub a: f64,
    pub delta2p: f64,
    pub delta1p: f64,
    pub delta0p: f64,
}

impl ContractionParams {
    pub fn defaults(m: u32) -> Self {
        let delta1 = (PI / (4.0 * f64::from(m.max(1)))).min(0.3);
        Self {
            delta0: 2.5 * delta1,
            delta1,
            delta2: delta1 / 8.0,
            eta: None,
            tol_wall: 0.05,
            s_steps: 32,
            poly_degree: 10,
            final_tol: 1e-6,
            tol_angle: 1e-6,
        }
    }

    /// Overrides `delta1` and rescales `delta0`/`delta2` as in the defaults.
    pub fn with_delta1(mut self, delta1: f64) -> Self {
        self.delta1 = delta1;
        self.delta0 = 2.5 * delta1;
        self.delta2 = delta1 / 8.0;
        self
    }

    pub fn derived(&self) -> DerivedRadii {
        let d1 = self.delta1;
        DerivedRadii {
            a: d1 / 4.0,
            delta2p: d1 / 2.0,
            delta1p: 3.0 * d1 / 4.0,
            delta0p: 7.0 * d1 / 8.0,
        }
    }

    pub fn validate(&self, m: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let mf = f64::from(m);
        if !(self.delta1 > 0.0 && self.delta1 < PI / mf) {
            return bad(format!("delta1 = {} must lie in (0, pi/m)", self.delta1));
        }
        if !(self.delta2 > 0.0 && self.delta2 < self.delta1 / 4.0) {
            return bad(format!(
                "delta2 = {} must lie in (0, delta1/4)",
                self.delta2
            ));
        }
        if !(self.delta0 > self.delta1 && self.delta0 < PI / 4.0) {
            return bad(format!(
                "delta0 = {} must lie in (delta1, pi/4)",
                self.delta0
            ));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return bad(format!("eta = {eta} must be positive"));
            }
        }
        if !(self.tol_wall > 0.0) {
            return bad(format!("tol_wall = {} must be positive", self.tol_wall));
        }
        if self.s_steps == 0 {
            return bad("s_steps must be positive".into());
        }
        if self.poly_degree < 2 {
            return bad("poly_degree must be at least 2".into());
        }
        if !(self.final_tol > 0.0 && self.tol_angle > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}
