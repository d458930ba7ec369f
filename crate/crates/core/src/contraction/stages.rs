//! One sample's passage through each stage. Every function returns the
//! substep states' diagnostics and the stage-end function.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::context::Context;
use crate::critical::{correction_norm, project_with_step, residual};
use crate::error::{Error, Result};
use crate::funcspace::{GridFunction, NormKind};
use crate::pruefer::{d_omega, omega_m};

/// Corrector derivatives at or below this abort stage 1.
pub const MIN_STAGE1_DERIVATIVE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substep {
    pub s: f64,
    pub residual: f64,
    pub mu_at: f64,
    pub correction_norm: f64,
    /// `s >= 2` only: bitwise agreement with `u_star` near the endpoints.
    pub pinned: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub end: GridFunction,
    pub substeps: Vec<Substep>,
    /// Largest C0 distance between consecutive substep states.
    pub max_step: f64,
    pub notes: SampleNotes,
}

/// Stage-specific per-sample quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleNotes {
    pub min_derivative: Option<f64>,
    pub c_minus: Option<f64>,
    pub c_plus: Option<f64>,
    pub fit_degree: Option<usize>,
    pub fit_error: Option<f64>,
    /// Largest `|h|` fed to the tail solder.
    pub max_tail_offset: Option<f64>,
    /// Gap measure at the last substep.
    pub final_mu_at: Option<f64>,
    pub mu_ai: Option<f64>,
}

fn abort(stage: u8, sample: usize, reason: impl Into<String>) -> Error {
    Error::StageAbort {
        stage: stage.into(),
        sample,
        reason: reason.into(),
    }
}

/// Tags errors from the solver stack with the stage and sample.
fn tag<T>(stage: u8, sample: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::StageAbort { .. } => e,
        other => abort(stage, sample, other.to_string()),
    })
}

/// `x + 0.0` maps `-0.0` to `+0.0` so equal functions have equal bits.
#[inline]
fn clean(x: f64) -> f64 {
    x + 0.0
}

fn fraction(j: usize, steps: usize) -> (f64, f64) {
    (j as f64 / steps as f64, (steps - j) as f64 / steps as f64)
}

struct StepTracker {
    prev: GridFunction,
    max_step: f64,
}

impl StepTracker {
    fn new(u: &GridFunction) -> Self {
        Self {
            prev: u.clone(),
            max_step: 0.0,
        }
    }

    fn push(&mut self, u: &GridFunction) -> Result<()> {
        self.max_step = self.max_step.max(u.distance(&self.prev, NormKind::C0)?);
        self.prev = u.clone();
        Ok(())
    }
}

/// Stage 1: flatten near the endpoints, restoring membership by moving along
/// `phi = -beta_{delta0} f''(U0)`.
pub fn stage1(ctx: &Context, sample: usize, u0: &GridFunction) -> Result<SampleRun> {
    let run = || -> Result<SampleRun> {
        let f = ctx.f;
        let phi_values = u0
            .values()
            .iter()
            .zip(ctx.beta_d0.values())
            .map(|(&x, &b)| Ok(clean(-b * f.f2(x)?)))
            .collect::<Result<Vec<_>>>()?;
        let phi = GridFunction::from_values(ctx.grid, phi_values)?;
        let probe = d_omega(f, u0, ctx.m, &phi, PI)?;
        if probe <= MIN_STAGE1_DERIVATIVE {
            return Err(abort(
                1,
                sample,
                format!("corrector derivative {probe:e} at s = 0"),
            ));
        }
        let (b1, b2) = (ctx.beta_d1.values(), ctx.beta_d2_half.values());
        let steps = ctx.params.s_steps;
        let mut xi = 0.0;
        let mut min_d = probe;
        let mut track = StepTracker::new(u0);
        let mut substeps = Vec::with_capacity(steps);
        for j in 1..=steps {
            let (s, _) = fraction(j, steps);
            let values = (0..u0.values().len())
                .map(|i| {
                    let base = (1.0 - s + s * b1[i]) * u0.at(i) + s * (b2[i] - b1[i]) * ctx.x_m;
                    clean(base + xi * phi.at(i))
                })
                .collect();
            let guess = GridFunction::from_values(ctx.grid, values)?;
            let d = d_omega(f, &guess, ctx.m, &phi, PI)?;
            min_d = min_d.min(d);
            if d <= MIN_STAGE1_DERIVATIVE {
                return Err(abort(
                    1,
                    sample,
                    format!("corrector derivative {d:e} at s = {s}"),
                ));
            }
            let (u, tau) = project_with_step(f, &guess, ctx.m, Some(&phi))?;
            xi += tau;
            track.push(&u)?;
            substeps.push(Substep {
                s,
                residual: residual(f, &u, ctx.m)?,
                mu_at: 0.0,
                correction_norm: correction_norm(tau, &phi),
                pinned: None,
            });
        }
        Ok(SampleRun {
            end: track.prev.clone(),
            substeps,
            max_step: track.max_step,
            notes: SampleNotes {
                min_derivative: Some(min_d),
                ..Default::default()
            },
        })
    };
    tag(1, sample, run())
}

/// Stage 2: solder five chunks so the angle offsets near both ends move to
/// `0` (and to `eta` at `pi - delta0'`).
pub fn stage2(ctx: &Context, sample: usize, u1: &GridFunction) -> Result<SampleRun> {
    let run = || -> Result<SampleRun> {
        let c_minus = ctx.forward_offset(u1, ctx.nodes.a)?;
        let c_plus = ctx.backward_offset(u1, ctx.nodes.r_a)?;
        let eta = ctx.eta;
        let steps = ctx.params.s_steps;
        let mut track = StepTracker::new(u1);
        let mut substeps = Vec::with_capacity(steps);
        for j in 1..=steps {
            let (frac, rest) = fraction(j, steps);
            let hm = rest * c_minus;
            let h0p = eta + rest * (c_plus - eta);
            let h1p = rest * c_plus;
            let mut u = u1.clone();
            for (k, (h0, h1)) in [
                (c_minus, hm),
                (hm, c_minus),
                (c_plus, h0p),
                (h0p, h1p),
                (h1p, c_plus),
            ]
            .into_iter()
            .enumerate()
            {
                ctx.solder(k, h0, h1)?.apply(&mut u)?;
            }
            track.push(&u)?;
            substeps.push(Substep {
                s: 1.0 + frac,
                residual: residual(ctx.f, &u, ctx.m)?,
                mu_at: 0.0,
                correction_norm: 0.0,
                pinned: None,
            });
        }
        Ok(SampleRun {
            end: track.prev.clone(),
            substeps,
            max_step: track.max_step,
            notes: SampleNotes {
                c_minus: Some(c_minus),
                c_plus: Some(c_plus),
                ..Default::default()
            },
        })
    };
    tag(2, sample, run())
}

/// Least-squares `P = x_m + (t - a)(b - t) Q(t)` on nodes `i0..=i1`, with `Q`
/// in the Chebyshev basis of degree `degree - 2`.
pub fn fit_polynomial(
    ctx: &Context,
    u: &GridFunction,
    i0: usize,
    i1: usize,
    degree: usize,
) -> Vec<f64> {
    let (a, b) = (ctx.grid.t(i0), ctx.grid.t(i1));
    let half = 0.5 * (b - a);
    let cols = degree - 1;
    let rows = i1 - i0 + 1;
    let basis = |t: f64| -> Vec<f64> {
        let x = (t - a) / half - 1.0;
        let w = (t - a) * (b - t) / (half * half);
        let mut out = Vec::with_capacity(cols);
        let (mut tm, mut tk) = (1.0, x);
        for k in 0..cols {
            let v = match k {
                0 => 1.0,
                1 => x,
                _ => {
                    let next = 2.0 * x * tk - tm;
                    tm = tk;
                    tk = next;
                    next
                }
            };
            out.push(w * v);
        }
        out
    };
    let mut design = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    for (r, i) in (i0..=i1).enumerate() {
        for (c, v) in basis(ctx.grid.t(i)).into_iter().enumerate() {
            design[(r, c)] = v;
        }
        rhs[r] = u.at(i) - ctx.x_m;
    }
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD computed with both factors");
    (i0..=i1)
        .map(|i| {
            let q: f64 = basis(ctx.grid.t(i))
                .iter()
                .zip(coeffs.iter())
                .map(|(v, c)| v * c)
                .sum();
            if i == i0 || i == i1 {
                ctx.x_m
            } else {
                ctx.x_m + q
            }
        })
        .collect()
}

/// Stage 3: blend the middle window to a polynomial fit and re-solder the
/// tail. The tail offset must stay in `(eta/2, 3 eta/2)`; otherwise the fit
/// degree is raised by two, up to twice the configured degree.
pub fn stage3(
    ctx: &Context,
    sample: usize,
    u2: &GridFunction,
    u_star: &GridFunction,
) -> Result<SampleRun> {
    let (i0, i1) = (ctx.nodes.d1p, ctx.nodes.r_d0p);
    let steps = ctx.params.s_steps;
    let band = (0.5 * ctx.eta, 1.5 * ctx.eta);
    let mut degree = ctx.params.poly_degree;
    loop {
        let attempt = || -> Result<Option<SampleRun>> {
            let p = fit_polynomial(ctx, u2, i0, i1, degree);
            let fit_error = (i0..=i1)
                .map(|i| (p[i - i0] - u2.at(i)).abs())
                .fold(0.0, f64::max);
            let mut track = StepTracker::new(u2);
            let mut substeps = Vec::with_capacity(steps);
            let mut max_h: f64 = 0.0;
            for j in 1..=steps {
                let (frac, rest) = fraction(j, steps);
                let mut values = u_star.values().to_vec();
                for i in i0..=i1 {
                    values[i] = clean(rest * u2.at(i) + frac * p[i - i0]);
                }
                let mut u = GridFunction::from_values(ctx.grid, values)?;
                let h = ctx.forward_offset(&u, i1)?;
                if !(h > band.0 && h < band.1) {
                    return Ok(None);
                }
                ctx.resolder_tail(&mut u)?;
                max_h = max_h.max(h.abs());
                track.push(&u)?;
                substeps.push(Substep {
                    s: 2.0 + frac,
                    residual: residual(ctx.f, &u, ctx.m)?,
                    mu_at: 0.0,
                    correction_norm: 0.0,
                    pinned: Some(ctx.pinned(&u, u_star)),
                });
            }
            Ok(Some(SampleRun {
                end: track.prev.clone(),
                substeps,
                max_step: track.max_step,
                notes: SampleNotes {
                    fit_degree: Some(degree),
                    fit_error: Some(fit_error),
                    max_tail_offset: Some(max_h),
                    ..Default::default()
                },
            }))
        };
        if let Some(run) = tag(3, sample, attempt())? {
            return Ok(run);
        }
        degree += 2;
        if degree > 2 * ctx.params.poly_degree {
            return Err(abort(
                3,
                sample,
                format!(
                    "tail offset left ({}, {}) at every fit degree",
                    band.0, band.1
                ),
            ));
        }
    }
}

/// Node classes of the stage-4 partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Invariant,
    Squeezed,
    Tietze,
}

/// Classifies an offset `g = omega_m - m t` against walls at `+-wall` with
/// tolerance `tol`, returning the class and the weight kept on the stage-3
/// value.
pub fn classify(g: f64, wall: f64, tol: f64) -> (Class, f64) {
    let ag = g.abs();
    if ag <= wall {
        (Class::Invariant, 1.0)
    } else if ag >= wall + tol {
        (Class::Squeezed, 0.0)
    } else {
        (Class::Tietze, ((wall + tol - ag) / tol).clamp(0.0, 1.0))
    }
}

/// Stage 4: squeeze between walls `m t +- (4 - s) m pi`.
pub fn stage4(
    ctx: &Context,
    sample: usize,
    u3: &GridFunction,
    u_star: &GridFunction,
) -> Result<SampleRun> {
    let run = || -> Result<SampleRun> {
        let (i0, i1, i_tail) = (ctx.nodes.d1p, ctx.nodes.r_d1p, ctx.nodes.r_d0p);
        let traj = omega_m(ctx.f, u3, ctx.m)?;
        let g: Vec<f64> = (i0..=i1)
            .map(|i| traj.at(i) - ctx.mf() * ctx.grid.t(i))
            .collect();
        let steps = ctx.params.s_steps;
        let tol = ctx.params.tol_wall;
        let h = ctx.grid.spacing();
        let mut track = StepTracker::new(u3);
        let mut substeps = Vec::with_capacity(steps);
        let mut max_h: f64 = 0.0;
        let (mut mu_t, mut mu_i) = (0.0, 0.0);
        for j in 1..=steps {
            let (frac, rest) = fraction(j, steps);
            let wall = rest * ctx.mf() * PI;
            let mut values = u3.values().to_vec();
            let (mut n_t, mut n_i) = (0usize, 0usize);
            for i in i0..=i1 {
                let (class, lambda) = classify(g[i - i0], wall, tol);
                match class {
                    Class::Tietze => n_t += 1,
                    Class::Invariant => n_i += 1,
                    Class::Squeezed => {}
                }
                if i < i_tail && lambda < 1.0 {
                    values[i] = clean(lambda * u3.at(i) + (1.0 - lambda) * ctx.x_m);
                }
            }
            let mut u = GridFunction::from_values(ctx.grid, values)?;
            let hoff = ctx.resolder_tail(&mut u)?;
            max_h = max_h.max(hoff.abs());
            mu_t = n_t as f64 * h;
            mu_i = n_i as f64 * h;
            track.push(&u)?;
            substeps.push(Substep {
                s: 3.0 + frac,
                residual: residual(ctx.f, &u, ctx.m)?,
                mu_at: mu_t,
                correction_norm: 0.0,
                pinned: Some(ctx.pinned(&u, u_star)),
            });
        }
        Ok(SampleRun {
            end: track.prev.clone(),
            substeps,
            max_step: track.max_step,
            notes: SampleNotes {
                max_tail_offset: Some(max_h),
                final_mu_at: Some(mu_t),
                mu_ai: Some(mu_i),
                ..Default::default()
            },
        })
    };
    tag(4, sample, run())
}

/// Stage 5: straight line to `u_star`, re-soldering the tail.
pub fn stage5(
    ctx: &Context,
    sample: usize,
    u4: &GridFunction,
    u_star: &GridFunction,
) -> Result<SampleRun> {
    let run = || -> Result<SampleRun> {
        let steps = ctx.params.s_steps;
        let mut track = StepTracker::new(u4);
        let mut substeps = Vec::with_capacity(steps);
        let mut max_h: f64 = 0.0;
        for j in 1..=steps {
            let (frac, rest) = fraction(j, steps);
            let values = u4
                .values()
                .iter()
                .zip(u_star.values())
                .map(|(&a, &b)| {
                    if a == b {
                        b
                    } else {
                        clean(rest * a + frac * b)
                    }
                })
                .collect();
            let mut u = GridFunction::from_values(ctx.grid, values)?;
            let hoff = ctx.resolder_tail(&mut u)?;
            max_h = max_h.max(hoff.abs());
            track.push(&u)?;
            substeps.push(Substep {
                s: 4.0 + frac,
                residual: residual(ctx.f, &u, ctx.m)?,
                mu_at: 0.0,
                correction_norm: 0.0,
                pinned: Some(ctx.pinned(&u, u_star)),
            });
        }
        Ok(SampleRun {
            end: track.prev.clone(),
            substeps,
            max_step: track.max_step,
            notes: SampleNotes {
                max_tail_offset: Some(max_h),
                ..Default::default()
            },
        })
    };
    tag(5, sample, run())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_follow_walls() {
        assert_eq!(classify(0.5, 1.0, 0.1), (Class::Invariant, 1.0));
        assert_eq!(classify(-1.2, 1.0, 0.1), (Class::Squeezed, 0.0));
        let (c, l) = classify(1.05, 1.0, 0.1);
        assert_eq!(c, Class::Tietze);
        assert!((l - 0.5).abs() < 1e-12);
        assert_eq!(classify(0.0, 0.0, 0.1).0, Class::Invariant);
    }
}
