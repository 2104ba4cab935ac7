//! Soft-margin support vector machine trained by sequential minimal
//! optimization with second-order working-set selection.

use super::{Classifier, Kernel, Samples, SvmParams};
use crate::error::Result;

const DEGREE: i32 = 3;
const COEF0: f64 = 0.0;
const TAU: f64 = 1e-12;

/// Stopping tolerance on the maximal KKT violation.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct KernelFn {
    kind: Kernel,
    gamma: f64,
}

impl KernelFn {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
            Kernel::Poly => (self.gamma * dot(a, b) + COEF0).powi(DEGREE),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trained SVM: support vectors with signed dual weights and offset.
#[derive(Debug, Clone)]
pub struct Svm {
    kernel: KernelFn,
    d: usize,
    support: Vec<f64>,
    coef: Vec<f64>,
    rho: f64,
}

impl Svm {
    pub fn train(data: &Samples, params: &SvmParams) -> Result<Self> {
        Self::train_with_tol(data, params, DEFAULT_TOL)
    }

    pub fn train_with_tol(data: &Samples, params: &SvmParams, tol: f64) -> Result<Self> {
        data.require_both_labels()?;
        let kernel = KernelFn {
            kind: params.kernel,
            gamma: params.gamma,
        };
        let n = data.len();
        let c = params.c;
        let y: Vec<f64> = data.labels().iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(data.row(i), data.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let kd: Vec<f64> = (0..n).map(|i| k[i * n + i]).collect();

        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let max_iter = (100 * n).max(100_000);
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;

        for _ in 0..max_iter {
            // first index: maximal violator in I_up
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = usize::MAX;
            for t in 0..n {
                let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
                if in_up && -y[t] * grad[t] >= gmax {
                    gmax = -y[t] * grad[t];
                    i_sel = t;
                }
            }
            if i_sel == usize::MAX {
                break;
            }
            let i = i_sel;
            let ki = &k[i * n..(i + 1) * n];

            // second index: largest second-order decrease in I_low
            let mut gmax2 = f64::NEG_INFINITY;
            let mut obj_min = f64::INFINITY;
            let mut j_sel = usize::MAX;
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let b = gmax + v;
                if b > 0.0 {
                    let a = kd[i] + kd[t] - 2.0 * ki[t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
            if gmax + gmax2 < tol || j_sel == usize::MAX {
                break;
            }
            let j = j_sel;
            let kj = &k[j * n..(j + 1) * n];

            let (ai_old, aj_old) = (alpha[i], alpha[j]);
            let quad = {
                let q = kd[i] + kd[j] - 2.0 * ki[j];
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            if y[i] != y[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let dai = alpha[i] - ai_old;
            let daj = alpha[j] - aj_old;
            for t in 0..n {
                grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
            }
        }

        // offset: mean over free vectors, else midpoint of the feasible range
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if upper(alpha[t]) {
                if y[t] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if lower(alpha[t]) {
                if y[t] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        let rho = if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        };

        let d = data.dim();
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for t in 0..n {
            if alpha[t] > 0.0 {
                support.extend_from_slice(data.row(t));
                coef.push(y[t] * alpha[t]);
            }
        }
        Ok(Svm {
            kernel,
            d,
            support,
            coef,
            rho,
        })
    }

    /// Signed distance proxy; positive means label 1.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.coef
            .iter()
            .zip(self.support.chunks_exact(self.d))
            .map(|(a, sv)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }

    pub fn support_count(&self) -> usize {
        self.coef.len()
    }
}

impl Classifier for Svm {
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}
