use super::{Classifier, NbParams, Samples};
use crate::error::Result;

/// Gaussian naive Bayes with class priors from training frequencies.
///
/// Every per-class variance is inflated by `var_smoothing` times the largest
/// feature variance of the whole training set.
#[derive(Debug, Clone)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

fn moments<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0.0;
    let mut mean = vec![0.0; d];
    for r in rows.clone() {
        n += 1.0;
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        var.iter_mut()
            .zip(r.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl GaussianNb {
    pub fn train(data: &Samples, params: &NbParams) -> Result<Self> {
        data.require_both_labels()?;
        let d = data.dim();
        let all = (0..data.len()).map(|i| data.row(i));
        let (_, total_var) = moments(all, d);
        let eps = params.var_smoothing * total_var.iter().copied().fold(0.0, f64::max);
        let fit_class = |label: u8| {
            let rows = (0..data.len())
                .filter(move |&i| data.label(i) == label)
                .map(|i| data.row(i));
            let (mean, mut var) = moments(rows, d);
            var.iter_mut().for_each(|v| *v += eps);
            (mean, var)
        };
        let (m0, v0) = fit_class(0);
        let (m1, v1) = fit_class(1);
        let n = data.len() as f64;
        let n1 = data.count_label(1) as f64;
        Ok(GaussianNb {
            log_prior: [((n - n1) / n).ln(), (n1 / n).ln()],
            mean: [m0, m1],
            var: [v0, v1],
        })
    }

    /// Joint log-likelihood of `x` under each class.
    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let ll = |c: usize| {
            self.log_prior[c]
                + x.iter()
                    .zip(self.mean[c].iter().zip(&self.var[c]))
                    .map(|(v, (m, s))| {
                        if *s > 0.0 {
                            -0.5 * ((std::f64::consts::TAU * s).ln() + (v - m) * (v - m) / s)
                        } else if v == m {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .sum::<f64>()
        };
        [ll(0), ll(1)]
    }
}

impl Classifier for GaussianNb {
    fn predict(&self, x: &[f64]) -> u8 {
        let [a, b] = self.log_joint(x);
        u8::from(b > a)
    }
}
