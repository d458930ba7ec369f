use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critical::{find_in_cm, membership_with, project};
use crate::error::{Error, Result};
use crate::funcspace::{Grid, GridFunction, NormKind};
use crate::nonlinearity::{Nonlinearity, TamenessReport};

/// Sampled family `theta -> U(0, theta, .)` of members of `C_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopFamily {
    pub m: u32,
    pub thetas: Vec<f64>,
    pub samples: Vec<GridFunction>,
    /// Last sample repeats the first (a sampled circle).
    pub closed: bool,
}

#[derive(Serialize, Deserialize)]
struct LoopFamilyJson {
    m: u32,
    n: usize,
    thetas: Vec<f64>,
    samples: Vec<Vec<f64>>,
    #[serde(default)]
    closed: bool,
}

impl LoopFamily {
    pub fn new(m: u32, thetas: Vec<f64>, samples: Vec<GridFunction>, closed: bool) -> Result<Self> {
        if samples.is_empty() || samples.len() != thetas.len() {
            return Err(Error::Malformed(format!(
                "{} thetas for {} samples",
                thetas.len(),
                samples.len()
            )));
        }
        for (j, u) in samples.iter().enumerate() {
            samples[0].check_same_grid(u)?;
            if !u.is_dirichlet() {
                return Err(Error::Malformed(format!("sample {j} is not Dirichlet")));
            }
        }
        if thetas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Malformed("thetas must increase".into()));
        }
        if closed && samples.first() != samples.last() {
            return Err(Error::Malformed(
                "closed family must repeat its first sample".into(),
            ));
        }
        Ok(Self {
            m,
            thetas,
            samples,
            closed,
        })
    }

    pub fn grid(&self) -> Grid {
        self.samples[0].grid()
    }

    pub fn n(&self) -> usize {
        self.grid().cells()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest C0 distance between consecutive samples.
    pub fn resolution(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].distance(&w[1], NormKind::C0).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Index of the first sample failing membership at `tol_angle`.
    pub fn first_non_member(&self, f: &Nonlinearity, tol_angle: f64) -> Result<Option<usize>> {
        for (j, u) in self.samples.iter().enumerate() {
            if !membership_with(f, u, self.m, tol_angle)?.member {
                return Ok(Some(j));
            }
        }
        Ok(None)
    }

    pub fn to_json(&self) -> String {
        let doc = LoopFamilyJson {
            m: self.m,
            n: self.n(),
            thetas: self.thetas.clone(),
            samples: self.samples.iter().map(|u| u.values().to_vec()).collect(),
            closed: self.closed,
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LoopFamilyJson =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        let grid = Grid::new(doc.n).map_err(|e| Error::Malformed(e.to_string()))?;
        let samples = doc
            .samples
            .into_iter()
            .map(|v| GridFunction::from_values(grid, v))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        Self::new(doc.m, doc.thetas, samples, doc.closed)
    }
}

/// How to sample a test family around a member of `C_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    /// Distinct samples on the circle; `0` builds the two-sample family.
    pub samples: usize,
    pub amplitude: f64,
    pub seed: u64,
}

/// Random combination of `sin(kt)`, `k <= 4`, scaled to unit C0 norm.
fn random_mode(grid: Grid, rng: &mut ChaCha8Rng) -> Result<GridFunction> {
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = GridFunction::dirichlet_from_fn(grid, |t| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * t).sin())
            .sum()
    })?;
    let scale = p.norm(NormKind::C0);
    let values = p.values().iter().map(|v| v / scale + 0.0).collect();
    GridFunction::new(grid, values, true)
}

/// Builds `theta -> project(base + a (cos theta p1 + sin theta p2))` around
/// `base = find_in_cm`. On failure the error names the offending angle.
pub fn build_loop(
    f: &Nonlinearity,
    m: u32,
    report: &TamenessReport,
    grid: Grid,
    opts: LoopOptions,
) -> std::result::Result<LoopFamily, LoopError> {
    let base = find_in_cm(f, m, report, grid).map_err(|e| LoopError {
        theta: None,
        error: e,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let wrap = |theta: Option<f64>| move |e: Error| LoopError { theta, error: e };
    let p1 = random_mode(grid, &mut rng).map_err(wrap(None))?;
    let p2 = random_mode(grid, &mut rng).map_err(wrap(None))?;
    let (thetas, closed): (Vec<f64>, bool) = if opts.samples == 0 {
        (vec![0.0, PI], false)
    } else {
        let n = opts.samples;
        (
            (0..=n).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
            true,
        )
    };
    let distinct = if closed {
        thetas.len() - 1
    } else {
        thetas.len()
    };
    let mut samples = Vec::with_capacity(thetas.len());
    for &theta in &thetas[..distinct] {
        let (c, s) = if closed {
            (theta.cos(), theta.sin())
        } else {
            (theta.cos(), 0.0)
        };
        let u = base
            .axpy(opts.amplitude * c, &p1)
            .and_then(|u| u.axpy(opts.amplitude * s, &p2))
            .map_err(wrap(Some(theta)))?;
        samples.push(project(f, &u, m, None).map_err(wrap(Some(theta)))?);
    }
    if closed {
        samples.push(samples[0].clone());
    }
    LoopFamily::new(m, thetas, samples, closed).map_err(wrap(None))
}

/// A loop construction failure, with the sample angle when known.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopError {
    pub theta: Option<f64>,
    pub error: Error,
}

impl std::fmt::Display for LoopError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.theta {
            Some(t) => write!(f, "at theta = {t}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for LoopError {}
