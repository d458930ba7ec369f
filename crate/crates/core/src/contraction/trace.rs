use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::context::Nodes;
use super::params::{ContractionParams, DerivedRadii};
use crate::error::Result;
use crate::funcspace::GridFunction;

/// One recorded `(s, theta)` state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub stage: u8,
    pub s: f64,
    pub theta: f64,
    pub residual: f64,
    pub mu_at: f64,
    pub correction_norm: f64,
}

/// Per-stage aggregates over all samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: u8,
    pub max_residual: f64,
    pub max_step: f64,
    pub max_correction: f64,
    /// Stage 1: smallest corrector derivative seen.
    pub min_derivative: Option<f64>,
    /// Stage 2: largest `|h_-|`, `|h_+|`.
    pub max_end_offset: Option<f64>,
    /// Stage 3: largest fit degree used and largest C0 fit error.
    pub max_fit_degree: Option<usize>,
    pub max_fit_error: Option<f64>,
    /// Stages 3-5: largest offset fed to the tail solder.
    pub max_tail_offset: Option<f64>,
    /// Stage 4: largest gap measure at the stage end.
    pub max_mu_at: Option<f64>,
}

/// Closeness of the stage-4 family to `u_star` ahead of stage 5.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Premise {
    /// C0 bound of the stage-3 family.
    pub c: f64,
    pub max_c0: f64,
    pub max_l1: f64,
    /// `(2C + 1)` times the measure where stage 4 may differ from `u_star`.
    pub l1_bound: f64,
    pub c0_ok: bool,
    pub l1_ok: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Certification {
    pub stage0_is_input: bool,
    pub max_residual: f64,
    pub residuals_ok: bool,
    pub final_spread: f64,
    pub spread_ok: bool,
    pub pinned: bool,
    pub anchor_residual: f64,
    pub anchor_spread: f64,
    pub certified: bool,
}

/// Everything recorded along the homotopy. Stages that did not complete are
/// absent from `stages`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyTrace {
    pub m: u32,
    pub n: usize,
    pub x_m: f64,
    pub eta: f64,
    pub params: ContractionParams,
    pub radii: DerivedRadii,
    pub nodes: Nodes,
    pub thetas: Vec<f64>,
    #[serde(skip)]
    pub stages: Vec<Vec<GridFunction>>,
    #[serde(skip)]
    pub records: Vec<Record>,
    pub summaries: Vec<StageSummary>,
    #[serde(skip)]
    pub u_star: Option<GridFunction>,
    pub premise: Option<Premise>,
    pub certification: Option<Certification>,
}

impl HomotopyTrace {
    pub fn max_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0, f64::max)
    }

    /// `max_theta mu(A_T)` at the end of stage 4.
    pub fn final_mu_at(&self) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.stage == 4)
            .and_then(|s| s.max_mu_at)
    }

    pub fn residuals_csv(&self) -> String {
        let mut out = String::from("stage,s,theta,residual,mu_AT,correction_norm\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.stage, r.s, r.theta, r.residual, r.mu_at, r.correction_norm
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes `params.json`, `stage{k}/theta{j}.csv`, `residuals.csv` and
    /// `ustar.csv` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).expect("plain data serializes");
        fs::write(dir.join("params.json"), json + "\n")?;
        for (k, family) in self.stages.iter().enumerate() {
            let sub = dir.join(format!("stage{k}"));
            fs::create_dir_all(&sub)?;
            for (j, u) in family.iter().enumerate() {
                fs::write(sub.join(format!("theta{j}.csv")), u.to_csv())?;
            }
        }
        fs::write(dir.join("residuals.csv"), self.residuals_csv())?;
        if let Some(u) = &self.u_star {
            fs::write(dir.join("ustar.csv"), u.to_csv())?;
        }
        Ok(())
    }
}
