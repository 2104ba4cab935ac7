//! CART decision trees and bootstrap forests.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Classifier, Criterion, ForestParams, Samples, TreeParams};
use crate::error::Result;
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        p1: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

fn impurity(criterion: Criterion, n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (n0 as f64 / n, n1 as f64 / n);
    match criterion {
        Criterion::Gini => 1.0 - a * a - b * b,
        Criterion::Entropy => -[a, b].iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>(),
    }
}

/// Candidate split: weighted child impurity and the rows sent left.
struct Candidate {
    cost: f64,
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
}

struct Builder<'a> {
    data: &'a Samples,
    criterion: Criterion,
    max_depth: Option<usize>,
    min_samples_split: usize,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn column(&self, idx: &[usize], f: usize) -> Vec<f64> {
        idx.iter().map(|&i| self.data.row(i)[f]).collect()
    }

    /// Orders equally good splits by their content, not by column position,
    /// so that reordering features does not change the tree.
    fn better(&self, a: &Candidate, b: &Candidate, idx: &[usize]) -> bool {
        match a.cost.total_cmp(&b.cost) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
        let (mut la, mut lb) = (a.left.clone(), b.left.clone());
        la.sort_unstable();
        lb.sort_unstable();
        match la.cmp(&lb) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
        let (ca, cb) = (self.column(idx, a.feature), self.column(idx, b.feature));
        for (x, y) in ca.iter().zip(&cb) {
            match x.total_cmp(y) {
                Ordering::Less => return true,
                Ordering::Greater => return false,
                Ordering::Equal => {}
            }
        }
        false
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let d = self.data.dim();
        let features: Vec<usize> = match self.rng.as_mut() {
            Some(rng) if self.max_features < d => {
                let mut f = sample(rng, d, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let total1 = idx.iter().filter(|&&i| self.data.label(i) == 1).count();
        let total0 = idx.len() - total1;
        let mut best: Option<Candidate> = None;
        for f in features {
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.data.row(a)[f].total_cmp(&self.data.row(b)[f]).then(a.cmp(&b)));
            let (mut l0, mut l1) = (0usize, 0usize);
            let mut local: Option<(f64, usize)> = None;
            for k in 0..order.len() - 1 {
                if self.data.label(order[k]) == 1 {
                    l1 += 1
                } else {
                    l0 += 1
                }
                let (v, next) = (self.data.row(order[k])[f], self.data.row(order[k + 1])[f]);
                if next <= v {
                    continue;
                }
                let nl = (l0 + l1) as f64;
                let nr = (idx.len() - l0 - l1) as f64;
                let cost =
                    nl * impurity(self.criterion, l0, l1) + nr * impurity(self.criterion, total0 - l0, total1 - l1);
                if local.is_none_or(|(c, _)| cost < c) {
                    local = Some((cost, k));
                }
            }
            let Some((cost, k)) = local else { continue };
            let (v, next) = (self.data.row(order[k])[f], self.data.row(order[k + 1])[f]);
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            let cand = Candidate {
                cost,
                feature: f,
                threshold,
                left: order[..=k].to_vec(),
            };
            if best.as_ref().is_none_or(|b| self.better(&cand, b, idx)) {
                best = Some(cand);
            }
        }
        best
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let n1 = idx.iter().filter(|&&i| self.data.label(i) == 1).count();
        self.nodes.push(Node::Leaf {
            p1: n1 as f64 / idx.len() as f64,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let n1 = idx.iter().filter(|&&i| self.data.label(i) == 1).count();
        let stop = n1 == 0
            || n1 == idx.len()
            || idx.len() < self.min_samples_split
            || self.max_depth.is_some_and(|m| depth >= m);
        if stop {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let right: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| self.data.row(i)[split.feature] > split.threshold)
            .collect();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { p1: 0.0 });
        let left = self.grow(&split.left, depth + 1);
        let right = self.grow(&right, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

/// Binary classification tree grown to purity unless depth or node size
/// limits stop it. Splits are at midpoints between consecutive values.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn train(data: &Samples, params: &TreeParams) -> Result<Self> {
        data.require_both_labels()?;
        let idx: Vec<usize> = (0..data.len()).collect();
        Ok(Self::grow(
            data,
            &idx,
            params.criterion,
            params.max_depth,
            params.min_samples_split,
            None,
        ))
    }

    fn grow(
        data: &Samples,
        idx: &[usize],
        criterion: Criterion,
        max_depth: Option<usize>,
        min_samples_split: usize,
        rng: Option<ChaCha8Rng>,
    ) -> Self {
        let max_features = if rng.is_some() {
            ((data.dim() as f64).sqrt() as usize).max(1)
        } else {
            data.dim()
        };
        let mut b = Builder {
            data,
            criterion,
            max_depth,
            min_samples_split: min_samples_split.max(2),
            max_features,
            rng,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        DecisionTree { nodes: b.nodes }
    }

    /// Fraction of label-1 training rows in the leaf reached by `x`.
    pub fn prob1(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p1 } => return p1,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Classifier for DecisionTree {
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.prob1(x) > 0.5)
    }
}

/// Bagged gini trees, each split drawing `floor(sqrt(d))` candidate features.
/// Predicts by averaging leaf class fractions.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn train(data: &Samples, params: &ForestParams, seed: u64) -> Result<Self> {
        data.require_both_labels()?;
        let n = data.len();
        let trees = (0..params.n_estimators)
            .map(|t| {
                let mut rng = substream(seed, Purpose::Bootstrap, t as u64);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::grow(
                    data,
                    &idx,
                    Criterion::Gini,
                    params.max_depth,
                    params.min_samples_split,
                    Some(rng),
                )
            })
            .collect();
        Ok(RandomForest { trees })
    }

    pub fn prob1(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.prob1(x)).sum::<f64>() / self.trees.len() as f64
    }
}

impl Classifier for RandomForest {
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.prob1(x) > 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testdata::clouds;

    fn tree(criterion: Criterion, max_depth: Option<usize>, min_samples_split: usize) -> TreeParams {
        TreeParams {
            criterion,
            max_depth,
            min_samples_split,
        }
    }

    #[test]
    fn impurity_values() {
        assert_eq!(impurity(Criterion::Gini, 5, 5), 0.5);
        assert_eq!(impurity(Criterion::Entropy, 5, 5), 1.0);
        assert_eq!(impurity(Criterion::Gini, 4, 0), 0.0);
        assert_eq!(impurity(Criterion::Entropy, 0, 4), 0.0);
    }

    #[test]
    fn unlimited_tree_memorizes_distinct_points() {
        let data = clouds(40, 2, 0.2, 3);
        for c in [Criterion::Gini, Criterion::Entropy] {
            let t = DecisionTree::train(&data, &tree(c, None, 2)).unwrap();
            assert_eq!(t.accuracy(&data), 1.0);
        }
    }

    #[test]
    fn depth_limit_is_respected() {
        let data = clouds(40, 2, 0.2, 3);
        let t = DecisionTree::train(&data, &tree(Criterion::Gini, Some(2), 2)).unwrap();
        assert!(t.depth() <= 2);
        let full = DecisionTree::train(&data, &tree(Criterion::Gini, None, 2)).unwrap();
        let coarse = DecisionTree::train(&data, &tree(Criterion::Gini, None, 5)).unwrap();
        assert!(coarse.node_count() <= full.node_count());
    }

    #[test]
    fn threshold_is_a_midpoint() {
        let data = Samples::new(1, vec![0.0, 1.0, 3.0, 4.0], vec![0, 0, 1, 1]).unwrap();
        let t = DecisionTree::train(&data, &tree(Criterion::Gini, None, 2)).unwrap();
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 2.0),
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn forest_is_seeded_and_accurate() {
        let data = clouds(40, 3, 1.5, 4);
        let p = ForestParams {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
        };
        let a = RandomForest::train(&data, &p, 9).unwrap();
        let b = RandomForest::train(&data, &p, 9).unwrap();
        let probe = clouds(30, 3, 1.5, 5);
        for i in 0..probe.len() {
            assert_eq!(a.prob1(probe.row(i)), b.prob1(probe.row(i)));
        }
        assert!(a.accuracy(&probe) > 0.9);
    }
}
