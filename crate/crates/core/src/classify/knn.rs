use super::{Classifier, KnnParams, KnnWeights, Samples};
use crate::error::Result;

/// Exact k-nearest-neighbor vote under Euclidean distance.
///
/// Squared coordinate differences are summed in ascending order, which makes
/// distances independent of column order. Equal distances are ranked by
/// training index, and a tied vote goes to the nearest neighbor's label.
#[derive(Debug, Clone)]
pub struct KNearest {
    k: usize,
    weights: KnnWeights,
    train: Samples,
}

impl KNearest {
    pub fn train(data: &Samples, params: &KnnParams) -> Result<Self> {
        data.require_both_labels()?;
        Ok(KNearest {
            k: params.n_neighbors.clamp(1, data.len()),
            weights: params.weights,
            train: data.clone(),
        })
    }

    fn sq_distance(a: &[f64], b: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)));
        scratch.sort_by(f64::total_cmp);
        scratch.iter().sum()
    }

    /// The `k` nearest training rows as `(squared distance, index)`, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let mut scratch = Vec::with_capacity(x.len());
        let mut all: Vec<(f64, usize)> = (0..self.train.len())
            .map(|i| (Self::sq_distance(self.train.row(i), x, &mut scratch), i))
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < all.len() {
            all.select_nth_unstable_by(self.k - 1, by_rank);
            all.truncate(self.k);
        }
        all.sort_by(by_rank);
        all
    }
}

impl Classifier for KNearest {
    fn predict(&self, x: &[f64]) -> u8 {
        let nn = self.neighbors(x);
        let exact = nn.iter().any(|&(d, _)| d == 0.0);
        let mut votes = [0.0f64; 2];
        for &(d2, i) in &nn {
            let w = match self.weights {
                KnnWeights::Uniform => 1.0,
                KnnWeights::Distance if exact => f64::from(u8::from(d2 == 0.0)),
                KnnWeights::Distance => 1.0 / d2.sqrt(),
            };
            votes[self.train.label(i) as usize] += w;
        }
        match votes[1].total_cmp(&votes[0]) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.train.label(nn[0].1),
        }
    }
}
