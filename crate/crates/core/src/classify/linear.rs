//! Linear models: L2-regularized logistic regression and SGD on hinge or
//! log loss. Both append a constant feature for the intercept.

use rand::seq::SliceRandom;

use super::{Classifier, LogisticParams, Samples, SgdLoss, SgdParams, SgdPenalty};
use crate::error::Result;
use crate::rng::{substream, Purpose};

fn augmented(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    x.iter().copied().chain(std::iter::once(1.0))
}

fn score(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(augmented(x)).map(|(a, b)| a * b).sum()
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `log(1 + exp(-z))` without overflow.
fn log1pexp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, `n × n`).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let v = a[i * n + i] - s;
                if v <= 0.0 {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Minimizes `½‖w‖² + C Σ log(1 + exp(−y wᵀx))` by damped Newton steps.
/// The intercept is part of `w` and is regularized with it.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    w: Vec<f64>,
}

impl LogisticRegression {
    pub fn train(data: &Samples, params: &LogisticParams) -> Result<Self> {
        data.require_both_labels()?;
        let p = data.dim() + 1;
        let c = params.c;
        let ys: Vec<f64> = data.labels().iter().map(|&l| sign(l)).collect();
        let objective = |w: &[f64]| {
            0.5 * w.iter().map(|v| v * v).sum::<f64>()
                + c * (0..data.len())
                    .map(|i| log1pexp_neg(ys[i] * score(w, data.row(i))))
                    .sum::<f64>()
        };
        let mut w = vec![0.0; p];
        let mut f = objective(&w);
        let mut g0 = None;
        for _ in 0..params.max_iter {
            let mut grad = w.clone();
            let mut hess = vec![0.0; p * p];
            for k in 0..p {
                hess[k * p + k] = 1.0;
            }
            for (i, &y) in ys.iter().enumerate() {
                let z = y * score(&w, data.row(i));
                let s = sigmoid(z);
                let xi: Vec<f64> = augmented(data.row(i)).collect();
                let gcoef = c * (s - 1.0) * y;
                let hcoef = c * s * (1.0 - s);
                for a in 0..p {
                    grad[a] += gcoef * xi[a];
                    for b in 0..=a {
                        hess[a * p + b] += hcoef * xi[a] * xi[b];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    hess[b * p + a] = hess[a * p + b];
                }
            }
            let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g0 = *g0.get_or_insert(gnorm);
            if gnorm <= 1e-10 * g0.max(1.0) {
                break;
            }
            let Some(step) = cholesky_solve(&hess, &grad, p) else {
                break;
            };
            let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                let fc = objective(&cand);
                if fc <= f - 1e-4 * t * slope {
                    w = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(LogisticRegression { w })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

impl Classifier for LogisticRegression {
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(score(&self.w, x) > 0.0)
    }
}

const SGD_MAX_EPOCHS: usize = 1000;
const SGD_TOL: f64 = 1e-3;
const SGD_PATIENCE: usize = 5;
const L1_RATIO: f64 = 0.15;

/// Linear classifier fit by plain stochastic gradient descent with the
/// `1 / (α (t + t₀))` step schedule, shuffling rows every epoch.
///
/// Training stops when the epoch loss has not improved by `1e-3` for five
/// consecutive epochs, or after 1000 epochs.
#[derive(Debug, Clone)]
pub struct SgdClassifier {
    w: Vec<f64>,
}

impl SgdClassifier {
    pub fn train(data: &Samples, params: &SgdParams, seed: u64) -> Result<Self> {
        data.require_both_labels()?;
        let d = data.dim();
        let alpha = params.alpha;
        let (l2, l1) = match params.penalty {
            SgdPenalty::L2 => (alpha, 0.0),
            SgdPenalty::ElasticNet => (alpha * (1.0 - L1_RATIO), alpha * L1_RATIO),
        };
        let loss = |z: f64| match params.loss {
            SgdLoss::Hinge => (1.0 - z).max(0.0),
            SgdLoss::Log => log1pexp_neg(z),
        };
        // derivative of the loss in the margin z = y·f
        let dloss = |z: f64| match params.loss {
            SgdLoss::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SgdLoss::Log => -sigmoid(-z),
        };
        let typw = (1.0 / alpha.sqrt()).sqrt();
        let eta0 = typw / dloss(-typw).abs().max(1.0);
        let t0 = 1.0 / (alpha * eta0);

        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = substream(seed, Purpose::Training, 1);
        let mut t = 1.0f64;
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for _ in 0..SGD_MAX_EPOCHS {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for &i in &order {
                let x = data.row(i);
                let y = sign(data.label(i));
                let eta = 1.0 / (alpha * (t0 + t - 1.0));
                let z = y * (w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b);
                epoch_loss += loss(z);
                let g = dloss(z) * y;
                let shrink = (1.0 - eta * l2).max(0.0);
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj = *wj * shrink - eta * g * xj;
                    if l1 > 0.0 {
                        *wj = wj.signum() * (wj.abs() - eta * l1).max(0.0);
                    }
                }
                b -= eta * g;
                t += 1.0;
            }
            if epoch_loss > best - SGD_TOL * data.len() as f64 {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(epoch_loss);
            if stale >= SGD_PATIENCE {
                break;
            }
        }
        w.push(b);
        Ok(SgdClassifier { w })
    }
}

impl Classifier for SgdClassifier {
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(score(&self.w, x) > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testdata::clouds;

    #[test]
    fn cholesky_matches_direct_solution() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky_solve(&[0.0], &[1.0], 1).is_none());
    }

    #[test]
    fn logistic_gradient_vanishes_at_solution() {
        let data = clouds(30, 2, 0.5, 4);
        let c = 1.0;
        let m = LogisticRegression::train(&data, &LogisticParams { c, max_iter: 100 }).unwrap();
        let w = m.weights();
        let mut grad = w.to_vec();
        for i in 0..data.len() {
            let y = sign(data.label(i));
            let s = sigmoid(y * score(w, data.row(i)));
            for (g, x) in grad.iter_mut().zip(augmented(data.row(i))) {
                *g += c * (s - 1.0) * y * x;
            }
        }
        assert!(grad.iter().all(|g| g.abs() < 1e-6), "{grad:?}");
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let data = clouds(30, 2, 1.0, 5);
        let norm = |c| {
            let m = LogisticRegression::train(&data, &LogisticParams { c, max_iter: 100 }).unwrap();
            m.weights().iter().map(|v| v * v).sum::<f64>()
        };
        assert!(norm(0.01) < norm(0.1));
        assert!(norm(0.1) < norm(1.0));
    }

    #[test]
    fn sgd_separates_clouds_and_is_seeded() {
        let data = clouds(40, 2, 3.0, 6);
        for loss in [SgdLoss::Hinge, SgdLoss::Log] {
            for penalty in [SgdPenalty::L2, SgdPenalty::ElasticNet] {
                let p = SgdParams {
                    loss,
                    penalty,
                    alpha: 1e-4,
                };
                let m = SgdClassifier::train(&data, &p, 1).unwrap();
                assert!(m.accuracy(&data) >= 0.97, "{p:?}");
                let again = SgdClassifier::train(&data, &p, 1).unwrap();
                assert_eq!(m.w, again.w);
            }
        }
    }
}
