//! The five-stage homotopy contracting a sampled family of members of `C_m`
//! to a single anchor `u_star`, keeping every sample in `C_m` throughout.
//!
//! | stage | `s`     | effect                                                  |
//! |-------|---------|---------------------------------------------------------|
//! | 1     | [0, 1]  | flatten to `x_m` near the ends, corrector restores `C_m` |
//! | 2     | [1, 2]  | solder the end offsets to `0` (and `eta`)               |
//! | 3     | [2, 3]  | middle window becomes a polynomial                      |
//! | 4     | [3, 4]  | squeeze between closing walls around `m t`              |
//! | 5     | [4, 5]  | straight line to `u_star`                               |
//!
//! From stage 3 on, membership is restored by re-soldering the tail window
//! `[pi - delta0', pi - delta1']` from its incoming offset down to zero.

mod context;
mod family;
mod params;
mod stages;
mod trace;

use std::f64::consts::PI;

use rayon::prelude::*;

pub use context::{Context, Nodes, OFFSET_SNAP};
pub use family::{build_loop, LoopError, LoopFamily, LoopOptions};
pub use params::{ContractionParams, DerivedRadii};
pub use stages::{
    classify, fit_polynomial, stage1, stage2, stage3, stage4, stage5, Class, SampleNotes,
    SampleRun, Substep, MIN_STAGE1_DERIVATIVE,
};
pub use trace::{Certification, HomotopyTrace, Premise, Record, StageSummary};

use crate::critical::residual;
use crate::error::{Error, Result};
use crate::funcspace::{GridFunction, NormKind};
use crate::nonlinearity::{critical_abscissa, Nonlinearity, TamenessReport};

/// Largest cross-sample spread tolerated on the windows `u_star` copies.
pub const ANCHOR_SPREAD_TOL: f64 = 1e-9;
pub const ANCHOR_RESIDUAL_TOL: f64 = 1e-8;

/// A failed contraction with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionFailure {
    pub error: Error,
    pub trace: Box<HomotopyTrace>,
}

impl std::fmt::Display for ContractionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for ContractionFailure {}

/// Largest C0 spread across samples on nodes `range`.
fn spread_on(family: &[GridFunction], range: impl Iterator<Item = usize> + Clone) -> f64 {
    let first = &family[0];
    family
        .iter()
        .flat_map(|u| range.clone().map(move |i| (u.at(i) - first.at(i)).abs()))
        .fold(0.0, f64::max)
}

/// `u_star`: the stage-2 state near both ends, `x_m` in between.
pub fn build_anchor(ctx: &Context, stage2: &[GridFunction]) -> Result<(GridFunction, f64)> {
    let n = ctx.grid.cells();
    let (left, right) = (ctx.nodes.d1p, ctx.nodes.r_d1p);
    let spread = spread_on(stage2, (0..=left).chain(ctx.nodes.r_d0p..=n));
    if spread >= ANCHOR_SPREAD_TOL {
        return Err(Error::Precondition(format!(
            "stage-2 ends depend on theta (spread {spread:e})"
        )));
    }
    let src = stage2[0].values();
    let values = (0..=n)
        .map(|i| {
            if i <= left || i >= right {
                src[i]
            } else {
                ctx.x_m
            }
        })
        .collect();
    Ok((GridFunction::from_values(ctx.grid, values)?, spread))
}

fn run_stage<F>(samples: &[GridFunction], body: F) -> Result<Vec<SampleRun>>
where
    F: Fn(usize, &GridFunction) -> Result<SampleRun> + Sync,
{
    let runs: Vec<Result<SampleRun>> = samples
        .par_iter()
        .enumerate()
        .map(|(j, u)| body(j, u))
        .collect();
    runs.into_iter().collect()
}

struct Recorder<'t> {
    trace: &'t mut HomotopyTrace,
}

impl Recorder<'_> {
    fn stage(&mut self, stage: u8, runs: Vec<SampleRun>) -> (Vec<GridFunction>, bool) {
        let mut summary = StageSummary {
            stage,
            ..Default::default()
        };
        let mut pinned = true;
        // Substep-major order: all thetas at each s.
        let steps = runs.first().map_or(0, |r| r.substeps.len());
        for k in 0..steps {
            for (j, run) in runs.iter().enumerate() {
                let sub = run.substeps[k];
                self.trace.records.push(Record {
                    stage,
                    s: sub.s,
                    theta: self.trace.thetas[j],
                    residual: sub.residual,
                    mu_at: sub.mu_at,
                    correction_norm: sub.correction_norm,
                });
                summary.max_residual = summary.max_residual.max(sub.residual.abs());
                summary.max_correction = summary.max_correction.max(sub.correction_norm);
                pinned &= sub.pinned.unwrap_or(true);
            }
        }
        let max_opt = |vals: &mut dyn Iterator<Item = Option<f64>>| -> Option<f64> {
            vals.flatten().fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
        };
        summary.max_step = runs.iter().map(|r| r.max_step).fold(0.0, f64::max);
        summary.min_derivative = runs
            .iter()
            .filter_map(|r| r.notes.min_derivative)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            });
        summary.max_end_offset = max_opt(
            &mut runs
                .iter()
                .flat_map(|r| [r.notes.c_minus.map(f64::abs), r.notes.c_plus.map(f64::abs)]),
        );
        summary.max_fit_degree = runs.iter().filter_map(|r| r.notes.fit_degree).max();
        summary.max_fit_error = max_opt(&mut runs.iter().map(|r| r.notes.fit_error));
        summary.max_tail_offset = max_opt(&mut runs.iter().map(|r| r.notes.max_tail_offset));
        summary.max_mu_at = max_opt(&mut runs.iter().map(|r| r.notes.final_mu_at));
        self.trace.summaries.push(summary);
        let family: Vec<GridFunction> = runs.into_iter().map(|r| r.end).collect();
        self.trace.stages.push(family.clone());
        (family, pinned)
    }
}

/// Runs stages 1-5 on `family` and certifies the result.
pub fn contract(
    f: &Nonlinearity,
    report: &TamenessReport,
    family: &LoopFamily,
    params: &ContractionParams,
) -> std::result::Result<HomotopyTrace, ContractionFailure> {
    let m = family.m;
    let grid = family.grid();
    let bare = |error: Error| ContractionFailure {
        error,
        trace: Box::new(HomotopyTrace {
            m,
            n: grid.cells(),
            x_m: f64::NAN,
            eta: f64::NAN,
            params: *params,
            radii: params.derived(),
            nodes: Nodes {
                a: 0,
                d2p: 0,
                d1p: 0,
                d1: 0,
                r_d1: 0,
                r_d0p: 0,
                r_d1p: 0,
                r_d2p: 0,
                r_a: 0,
            },
            thetas: family.thetas.clone(),
            stages: Vec::new(),
            records: Vec::new(),
            summaries: Vec::new(),
            u_star: None,
            premise: None,
            certification: None,
        }),
    };
    let x_m = critical_abscissa(f, m, report).map_err(bare)?;
    let ctx = Context::new(f, m, x_m, grid, *params).map_err(bare)?;
    let mut trace = HomotopyTrace {
        m,
        n: grid.cells(),
        x_m,
        eta: ctx.eta,
        params: *params,
        radii: ctx.radii,
        nodes: ctx.nodes,
        thetas: family.thetas.clone(),
        stages: Vec::new(),
        records: Vec::new(),
        summaries: Vec::new(),
        u_star: None,
        premise: None,
        certification: None,
    };
    match run_all(&ctx, family, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(ContractionFailure {
            error,
            trace: Box::new(trace),
        }),
    }
}

fn run_all(ctx: &Context, family: &LoopFamily, trace: &mut HomotopyTrace) -> Result<()> {
    let f = ctx.f;
    let m = ctx.m;
    let tol = ctx.params.tol_angle;

    // Stage 0: the input, which must lie in C_m.
    let input = family.samples.clone();
    let res0: Vec<f64> = input
        .par_iter()
        .map(|u| residual(f, u, m))
        .collect::<Result<Vec<_>>>()?;
    for (j, r) in res0.iter().enumerate() {
        trace.records.push(Record {
            stage: 0,
            s: 0.0,
            theta: family.thetas[j],
            residual: *r,
            mu_at: 0.0,
            correction_norm: 0.0,
        });
    }
    trace.stages.push(input.clone());
    trace.summaries.push(StageSummary {
        stage: 0,
        max_residual: res0.iter().map(|r| r.abs()).fold(0.0, f64::max),
        ..Default::default()
    });
    if let Some(j) = family.first_non_member(f, tol)? {
        return Err(Error::Precondition(format!(
            "sample {j} (theta = {}) is not in C_{m}",
            family.thetas[j]
        )));
    }

    let mut rec = Recorder { trace };
    let runs = run_stage(&input, |j, u| stages::stage1(ctx, j, u))?;
    let (s1, _) = rec.stage(1, runs);
    let runs = run_stage(&s1, |j, u| stages::stage2(ctx, j, u))?;
    let (s2, _) = rec.stage(2, runs);

    let (u_star, anchor_spread) = build_anchor(ctx, &s2)?;
    let anchor_residual = residual(f, &u_star, m)?;
    rec.trace.u_star = Some(u_star.clone());
    if anchor_residual.abs() > ANCHOR_RESIDUAL_TOL {
        return Err(Error::Precondition(format!(
            "anchor residual {anchor_residual:e} above {ANCHOR_RESIDUAL_TOL:e}"
        )));
    }
    let mut pinned = s2.iter().all(|u| ctx.pinned(u, &u_star));

    let runs = run_stage(&s2, |j, u| stages::stage3(ctx, j, u, &u_star))?;
    let (s3, p) = rec.stage(3, runs);
    pinned &= p;
    let runs = run_stage(&s3, |j, u| stages::stage4(ctx, j, u, &u_star))?;
    let mu_per_sample: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| {
            (
                r.notes.final_mu_at.unwrap_or(0.0),
                r.notes.mu_ai.unwrap_or(0.0),
            )
        })
        .collect();
    let (s4, p) = rec.stage(4, runs);
    pinned &= p;

    let premise = premise(ctx, &s3, &s4, &u_star, &mu_per_sample)?;
    rec.trace.premise = Some(premise);

    let runs = run_stage(&s4, |j, u| stages::stage5(ctx, j, u, &u_star))?;
    let (s5, p) = rec.stage(5, runs);
    pinned &= p;

    let final_spread = s5
        .iter()
        .map(|u| u.distance(&u_star, NormKind::C0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let max_residual = rec.trace.max_residual();
    let stage0_is_input = rec.trace.stages[0] == family.samples;
    let residuals_ok = max_residual <= tol;
    let spread_ok = final_spread <= ctx.params.final_tol;
    rec.trace.certification = Some(Certification {
        stage0_is_input,
        max_residual,
        residuals_ok,
        final_spread,
        spread_ok,
        pinned,
        anchor_residual,
        anchor_spread,
        certified: stage0_is_input && residuals_ok && spread_ok && pinned,
    });
    Ok(())
}

fn premise(
    ctx: &Context,
    s3: &[GridFunction],
    s4: &[GridFunction],
    u_star: &GridFunction,
    mu: &[(f64, f64)],
) -> Result<Premise> {
    let c = s3.iter().map(|u| u.norm(NormKind::C0)).fold(0.0, f64::max);
    let tail = ctx.grid.t(ctx.nodes.r_d1p) - ctx.grid.t(ctx.nodes.r_d0p);
    let mut out = Premise {
        c,
        ..Default::default()
    };
    out.c0_ok = true;
    out.l1_ok = true;
    for (u, &(mu_t, mu_i)) in s4.iter().zip(mu) {
        let c0 = u.distance(u_star, NormKind::C0)?;
        let l1 = u.distance(u_star, NormKind::L1)?;
        let bound = (2.0 * c + 1.0) * (mu_t + mu_i + tail + 2.0 * ctx.grid.spacing());
        out.max_c0 = out.max_c0.max(c0);
        out.max_l1 = out.max_l1.max(l1);
        out.l1_bound = out.l1_bound.max(bound);
        out.c0_ok &= c0 < 2.0 * c + 1.0;
        out.l1_ok &= l1 <= bound;
    }
    Ok(out)
}

/// Stage-4 wall half-width `(4 - s) m pi` at `s` in `[3, 4]`.
pub fn wall(m: u32, s: f64) -> f64 {
    (4.0 - s) * f64::from(m) * PI
}
