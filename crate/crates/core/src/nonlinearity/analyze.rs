use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;

/// Number of scan intervals across the analysis window.
pub const SCAN_INTERVALS: usize = 10_000;
/// Half-width of the bracketing band used for the interior-of-image test.
pub const INTERIOR_EPS: f64 = 1e-6;
/// `|f''|` below this counts as zero for the isolated-roots proxy.
pub const F2_ZERO: f64 = 1e-12;
/// `|f''|` at an abscissa must exceed this for tameness.
pub const TAME_F2_MIN: f64 = 1e-10;
/// Required accuracy of every reported abscissa.
pub const ABSCISSA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abscissa {
    pub x: f64,
    /// `f''(x)`.
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbscissaSet {
    pub m: u32,
    pub roots: Vec<Abscissa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamenessReport {
    pub sigma: Vec<u32>,
    pub abscissas: Vec<AbscissaSet>,
    pub appropriate: bool,
    pub appropriate_reason: String,
    pub tame: bool,
    pub tame_reason: String,
    pub scan_window: [f64; 2],
}

impl TamenessReport {
    pub fn roots_for(&self, m: u32) -> Option<&[Abscissa]> {
        self.abscissas
            .iter()
            .find(|s| s.m == m)
            .map(|s| s.roots.as_slice())
    }
}

struct Sample {
    x: f64,
    f1: f64,
    f2: f64,
}

/// Sign changes of `g` along the scan, ignoring exact zeros.
fn changes_sign(samples: &[Sample], g: impl Fn(&Sample) -> f64) -> bool {
    let mut last = 0.0f64;
    for s in samples {
        let v = g(s);
        if v != 0.0 {
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                return true;
            }
            last = v;
        }
    }
    false
}

/// Bisects `f' + m^2` on `[a, b]` (opposite signs) down to adjacent floats.
fn bisect_root(f: &Nonlinearity, target: f64, mut a: f64, mut b: f64) -> Option<f64> {
    let g = |x: f64| f.f1(x).ok().map(|d| d - target);
    let mut ga = g(a)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a.min(b) || mid >= a.max(b) {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Some(mid);
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    let gb = g(b)?;
    Some(if ga.abs() <= gb.abs() { a } else { b })
}

/// Scans `[x_lo, x_hi]` and classifies `f`.
pub fn analyze(f: &Nonlinearity, x_lo: f64, x_hi: f64, m_max: u32) -> Result<TamenessReport> {
    if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "empty scan window [{x_lo}, {x_hi}]"
        )));
    }
    if m_max < 1 {
        return Err(Error::InvalidArgument("m_max must be at least 1".into()));
    }

    let dx = (x_hi - x_lo) / SCAN_INTERVALS as f64;
    // Points where f is undefined (log of a negative, poles) are skipped.
    let samples: Vec<Sample> = (0..=SCAN_INTERVALS)
        .filter_map(|i| {
            let x = if i == SCAN_INTERVALS {
                x_hi
            } else {
                x_lo + i as f64 * dx
            };
            let j = f.eval_jet2(x).ok().filter(|j| j.is_finite())?;
            Some(Sample {
                x,
                f1: j.d1,
                f2: j.d2,
            })
        })
        .collect();

    let mut sigma = Vec::new();
    let mut abscissas = Vec::new();
    for m in 1..=m_max {
        let target = -f64::from(m * m);
        let lower = changes_sign(&samples, |s| s.f1 - target - INTERIOR_EPS);
        let upper = changes_sign(&samples, |s| s.f1 - target + INTERIOR_EPS);
        if !(lower && upper) {
            continue;
        }
        sigma.push(m);
        let mut roots = Vec::new();
        for pair in samples.windows(2) {
            let (ga, gb) = (pair[0].f1 - target, pair[1].f1 - target);
            let root = if ga == 0.0 {
                Some(pair[0].x)
            } else if ga * gb < 0.0 {
                bisect_root(f, target, pair[0].x, pair[1].x)
            } else {
                None
            };
            if let Some(x) = root {
                let j = f.eval_jet2(x)?;
                if (j.d1 - target).abs() < ABSCISSA_TOL {
                    roots.push(Abscissa { x, f2: j.d2 });
                }
            }
        }
        if let Some(last) = samples.last() {
            if last.f1 == target {
                roots.push(Abscissa {
                    x: last.x,
                    f2: last.f2,
                });
            }
        }
        abscissas.push(AbscissaSet { m, roots });
    }

    let (appropriate, appropriate_reason) = appropriateness(f, &samples);

    let (tame, tame_reason) = if !appropriate {
        (false, "f is not appropriate".to_string())
    } else if let Some((m, a)) = abscissas
        .iter()
        .flat_map(|s| s.roots.iter().map(move |a| (s.m, a)))
        .find(|(_, a)| a.f2.abs() <= TAME_F2_MIN)
    {
        (false, format!("f''({}) = {} at f' = -{}^2", a.x, a.f2, m))
    } else if let Some((x, k)) = resonant_inflection(f, &samples) {
        (false, format!("f''({x}) = 0 where f' = -{k}^2"))
    } else if sigma.is_empty() {
        (
            true,
            "vacuous: no m with -m^2 in the interior of f'".to_string(),
        )
    } else {
        (
            true,
            "f'' != 0 at every critical abscissa in the window".to_string(),
        )
    };

    Ok(TamenessReport {
        sigma,
        abscissas,
        appropriate,
        appropriate_reason,
        tame,
        tame_reason,
        scan_window: [x_lo, x_hi],
    })
}

/// A root of `f''` at which `f'` equals `-k^2` for some integer `k >= 0`.
fn resonant_inflection(f: &Nonlinearity, samples: &[Sample]) -> Option<(f64, f64)> {
    let f2 = |x: f64| f.f2(x).ok();
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let x = if a.f2 == 0.0 {
            a.x
        } else if a.f2 * b.f2 < 0.0 {
            let (mut lo, mut hi, mut flo) = (a.x, b.x, a.f2);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f2(mid)?;
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            lo
        } else {
            continue;
        };
        let d1 = f.f1(x).ok()?;
        let k = (-d1).max(0.0).sqrt().round();
        if (d1 + k * k).abs() < 1e-8 {
            return Some((x, k));
        }
    }
    None
}

fn appropriateness(f: &Nonlinearity, samples: &[Sample]) -> (bool, String) {
    let at0 = match f.eval_jet2(0.0) {
        Ok(j) if j.is_finite() => j,
        _ => return (false, "f is undefined at 0".to_string()),
    };
    if at0.d2.abs() > F2_ZERO {
        return (true, "f''(0) != 0".to_string());
    }
    // Isolated roots of f'' are checked only at scan resolution.
    let mut run = 0usize;
    for s in samples {
        if s.f2.abs() < F2_ZERO {
            run += 1;
            if run >= 3 {
                return (
                    false,
                    format!("f''(0) = 0 and f'' vanishes on a scan interval near x = {} (roots not isolated at scan resolution)", s.x),
                );
            }
        } else {
            run = 0;
        }
    }
    let k = (-at0.d1).max(0.0).sqrt().round();
    if (at0.d1 + k * k).abs() < F2_ZERO {
        return (false, format!("f''(0) = 0 and f'(0) = -{k}^2"));
    }
    (
        true,
        "f''(0) = 0, roots of f'' isolated at scan resolution and f'(0) is not -m^2".to_string(),
    )
}

/// The deterministic anchor `x_m`: smallest `|x_m|`, then largest `|f''|`,
/// then the smaller abscissa.
pub fn critical_abscissa(f: &Nonlinearity, m: u32, report: &TamenessReport) -> Result<f64> {
    if !report.sigma.contains(&m) {
        return Err(Error::NotInSigma { m });
    }
    let roots: Vec<Abscissa> = report
        .roots_for(m)
        .unwrap_or(&[])
        .iter()
        .copied()
        .filter(|a| a.f2.abs() > TAME_F2_MIN)
        .collect();
    let min_abs = roots
        .iter()
        .map(|a| a.x.abs())
        .fold(f64::INFINITY, f64::min);
    let best = roots
        .iter()
        .filter(|a| a.x.abs() <= min_abs + 1e-9)
        .min_by(|a, b| {
            b.f2.abs()
                .partial_cmp(&a.f2.abs())
                .unwrap()
                .then(a.x.partial_cmp(&b.x).unwrap())
        })
        .ok_or(Error::NoAbscissa { m })?;
    let target = -f64::from(m * m);
    let residual = (f.f1(best.x)? - target).abs();
    if residual >= ABSCISSA_TOL {
        return Err(Error::NoAbscissa { m });
    }
    Ok(best.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::parse;

    #[test]
    fn half_square() {
        let f = parse("x^2/2").unwrap();
        let r = analyze(&f, -30.0, 30.0, 5).unwrap();
        assert_eq!(r.sigma, vec![1, 2, 3, 4, 5]);
        for set in &r.abscissas {
            assert_eq!(set.roots.len(), 1);
            assert!((set.roots[0].x + f64::from(set.m * set.m)).abs() < 1e-10);
        }
        assert!(r.appropriate && r.tame);
        assert_eq!(critical_abscissa(&f, 2, &r).unwrap(), -4.0);
        assert_eq!(critical_abscissa(&f, 1, &r).unwrap(), -1.0);
    }

    #[test]
    fn exponential_has_empty_sigma() {
        let f = parse("exp(x)").unwrap();
        let r = analyze(&f, -10.0, 10.0, 5).unwrap();
        assert!(r.sigma.is_empty());
        assert!(r.appropriate && r.tame);
        assert!(matches!(
            critical_abscissa(&f, 1, &r),
            Err(Error::NotInSigma { m: 1 })
        ));
    }

    #[test]
    fn linear_with_resonant_slope_is_not_appropriate() {
        let f = parse("-4*x").unwrap();
        let r = analyze(&f, -10.0, 10.0, 5).unwrap();
        assert!(!r.appropriate);
        assert!(!r.tame);
        assert!(r.sigma.is_empty());
    }

    #[test]
    fn cubic_tie_break_is_deterministic() {
        let f = parse("x^3/3 - 2*x").unwrap();
        let r = analyze(&f, -5.0, 5.0, 1).unwrap();
        assert_eq!(r.sigma, vec![1]);
        let x1 = critical_abscissa(&f, 1, &r).unwrap();
        // Independent bisection on f'(x) + 1 = x^2 - 1 over [-2, 0].
        let (mut a, mut b) = (-2.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (mid * mid - 1.0) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        assert!((x1 - a).abs() < 1e-12);
        assert!((f.f1(x1).unwrap() + 1.0).abs() < 1e-10);
        assert_eq!(x1, critical_abscissa(&f, 1, &r).unwrap());
    }

    #[test]
    fn tangential_touch_is_not_tame() {
        // f'(x) = (x - 1)^2 - 1 touches -1 at x = 1 where f'' = 0; f''(0) = -2.
        let f = parse("(x - 1)^3/3 - x").unwrap();
        let r = analyze(&f, -3.0, 3.0, 1).unwrap();
        assert!(r.appropriate);
        assert!(r.sigma.is_empty());
        assert!(!r.tame, "{}", r.tame_reason);
    }

    #[test]
    fn errors() {
        let f = parse("x").unwrap();
        assert!(analyze(&f, 1.0, 1.0, 3).is_err());
        assert!(analyze(&f, -1.0, 1.0, 0).is_err());
    }

    #[test]
    fn json_field_names() {
        let f = parse("x^2/2").unwrap();
        let r = analyze(&f, -3.0, 3.0, 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["sigma", "abscissas", "appropriate", "tame", "scan_window"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
