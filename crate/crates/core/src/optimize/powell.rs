//! Box-constrained Powell conjugate-direction minimization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances, iteration cap and per-coordinate box for [`powell_minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowellConfig {
    pub ftol: f64,
    pub xtol: f64,
    pub max_iterations: usize,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for PowellConfig {
    fn default() -> Self {
        PowellConfig {
            ftol: 1e-3,
            xtol: 1e-2,
            max_iterations: 50,
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
        }
    }
}

impl PowellConfig {
    /// Lists every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.ftol > 0.0 && self.ftol.is_finite()) {
            v.push(format!("ftol must be positive, got {}", self.ftol));
        }
        if !(self.xtol > 0.0 && self.xtol.is_finite()) {
            v.push(format!("xtol must be positive, got {}", self.xtol));
        }
        if self.max_iterations == 0 {
            v.push("max_iterations must be at least 1".into());
        }
        if self.bounds.is_empty() {
            v.push("bounds must cover at least one coordinate".into());
        }
        for (k, (lo, hi)) in self.bounds.iter().enumerate() {
            if lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less) {
                v.push(format!("bounds[{k}]: lower {lo} is not below upper {hi}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(v.join("; ")))
        }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (xi, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowellOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    /// Smallest and largest objective values seen.
    pub f_range: (f64, f64),
}

struct Counted<F> {
    f: F,
    evaluations: usize,
    lo: f64,
    hi: f64,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x)?;
        self.evaluations += 1;
        self.lo = self.lo.min(v);
        self.hi = self.hi.max(v);
        Ok(v)
    }
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's bounded scalar minimization on `[a, b]`, stopping once the
/// bracket shrinks to about `xatol`.
fn brent_bounded(mut phi: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, xatol: f64) -> Result<(f64, f64)> {
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut fulc = a + GOLDEN * (b - a);
    let mut nfc = fulc;
    let mut xf = fulc;
    let (mut rat, mut e) = (0.0f64, 0.0f64);
    let mut fx = phi(xf)?;
    let (mut ffulc, mut fnfc) = (fx, fx);
    let mut xm = 0.5 * (a + b);
    let mut tol1 = sqrt_eps * xf.abs() + xatol / 3.0;
    let mut tol2 = 2.0 * tol1;
    let mut calls = 1;
    while (xf - xm).abs() > tol2 - 0.5 * (b - a) && calls < 500 {
        let mut golden = true;
        if e.abs() > tol1 {
            golden = false;
            let mut r = (xf - nfc) * (fx - ffulc);
            let mut q = (xf - fulc) * (fx - fnfc);
            let mut p = (xf - fulc) * q - (xf - nfc) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            r = e;
            e = rat;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - xf) && p < q * (b - xf) {
                rat = p / q;
                let x = xf + rat;
                if (x - a) < tol2 || (b - x) < tol2 {
                    let si = if xm - xf >= 0.0 { 1.0 } else { -1.0 };
                    rat = tol1 * si;
                }
            } else {
                golden = true;
            }
        }
        if golden {
            e = if xf >= xm { a - xf } else { b - xf };
            rat = GOLDEN * e;
        }
        let si = if rat >= 0.0 { 1.0 } else { -1.0 };
        let x = xf + si * rat.abs().max(tol1);
        let fu = phi(x)?;
        calls += 1;
        if fu <= fx {
            if x >= xf {
                a = xf
            } else {
                b = xf
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if x < xf {
                a = x
            } else {
                b = x
            }
            if fu <= fnfc || nfc == xf {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if fu <= ffulc || fulc == xf || fulc == nfc {
                fulc = x;
                ffulc = fu;
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * xf.abs() + xatol / 3.0;
        tol2 = 2.0 * tol1;
    }
    Ok((xf, fx))
}

/// Feasible step interval `[t_lo, t_hi]` for `x + t·u` inside the box.
fn step_range(x: &[f64], u: &[f64], bounds: &[(f64, f64)]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((xi, ui), (a, b)) in x.iter().zip(u).zip(bounds) {
        if ui.abs() < 1e-15 {
            continue;
        }
        let (t1, t2) = ((a - xi) / ui, (b - xi) / ui);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo.min(0.0), hi.max(0.0))
}

fn line_minimize<F: FnMut(&[f64]) -> Result<f64>>(
    f: &mut Counted<F>,
    x: &mut Vec<f64>,
    fx: &mut f64,
    u: &[f64],
    config: &PowellConfig,
) -> Result<()> {
    let (lo, hi) = step_range(x, u, &config.bounds);
    if hi - lo < 1e-12 {
        return Ok(());
    }
    let base = x.clone();
    let point = |t: f64| {
        let mut p: Vec<f64> = base.iter().zip(u).map(|(b, d)| b + t * d).collect();
        config.clamp(&mut p);
        p
    };
    let (t, ft) = brent_bounded(|t| f.eval(&point(t)), lo, hi, config.xtol)?;
    if ft < *fx {
        *x = point(t);
        *fx = ft;
    }
    Ok(())
}

/// Minimizes `f` over the box in `config`, starting at `start`.
///
/// Each sweep line-minimizes along every direction of the current set, which
/// starts as the coordinate axes. After a sweep the net displacement replaces
/// the direction of largest decrease when the usual extrapolation test
/// allows it. A move is accepted only on strict decrease, so the returned
/// value never exceeds `f(start)`. Stops when a sweep improves the value by
/// less than `ftol` and moves no coordinate by `xtol` or more, or after
/// `max_iterations` sweeps.
pub fn powell_minimize<F>(f: F, start: &[f64], config: &PowellConfig) -> Result<PowellOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    config.validate()?;
    let n = config.bounds.len();
    if start.len() != n {
        return Err(Error::Dimension(format!(
            "start has {} coordinates, box has {n}",
            start.len()
        )));
    }
    for (k, (xi, (lo, hi))) in start.iter().zip(&config.bounds).enumerate() {
        if !(lo <= xi && xi <= hi) {
            return Err(Error::Parameter(format!("start[{k}] = {xi} outside [{lo}, {hi}]")));
        }
    }
    let mut f = Counted {
        f,
        evaluations: 0,
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };
    let mut x = start.to_vec();
    let mut fx = f.eval(&x)?;
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (x0, f0) = (x.clone(), fx);
        let (mut big, mut delta) = (0, 0.0);
        for (i, u) in dirs.iter().enumerate() {
            let before = fx;
            line_minimize(&mut f, &mut x, &mut fx, u, config)?;
            if before - fx > delta {
                delta = before - fx;
                big = i;
            }
        }
        let moved = x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if f0 - fx < config.ftol && moved < config.xtol {
            break;
        }
        let disp: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let norm = disp.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm <= 0.0 {
            continue;
        }
        let mut xe: Vec<f64> = x.iter().zip(&disp).map(|(a, d)| a + d).collect();
        config.clamp(&mut xe);
        let fe = f.eval(&xe)?;
        if fe < f0 {
            let t = 2.0 * (f0 - 2.0 * fx + fe) * (f0 - fx - delta).powi(2) - delta * (f0 - fe).powi(2);
            if t < 0.0 {
                let u: Vec<f64> = disp.iter().map(|d| d / norm).collect();
                line_minimize(&mut f, &mut x, &mut fx, &u, config)?;
                dirs[big] = dirs[n - 1].clone();
                dirs[n - 1] = u;
            }
        }
    }
    Ok(PowellOutcome {
        x,
        f: fx,
        evaluations: f.evaluations,
        iterations,
        f_range: (f.lo, f.hi),
    })
}
