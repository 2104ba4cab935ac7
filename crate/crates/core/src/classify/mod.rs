//! Per-entity binary classifiers separating observed from simulated rows.

mod bayes;
mod knn;
mod linear;
mod params;
mod svm;
mod tree;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Purpose};

pub use bayes::GaussianNb;
pub use knn::KNearest;
pub use linear::{LogisticRegression, SgdClassifier};
pub use params::{
    ClassifierKind, ClassifierSpec, Criterion, ForestParams, Kernel, KnnAlgorithm, KnnParams, KnnWeights,
    LogisticParams, NbParams, ParamGrid, ParamMap, ParamValue, SgdLoss, SgdParams, SgdPenalty, SvmParams, TreeParams,
};
pub use svm::Svm;
pub use tree::{DecisionTree, RandomForest};

/// Default fraction of each label's rows used for training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.6;

/// Fewest rows per label accepted by [`entity_accuracy`].
pub const MIN_ROWS_PER_LABEL: usize = 5;

/// Labelled rows with `d` features each, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    d: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Samples {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<u8>) -> Result<Self> {
        if d == 0 || x.len() != d * y.len() {
            return Err(Error::Dimension(format!(
                "{} values do not form {} rows of width {d}",
                x.len(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::Parameter(format!("label {bad} is not binary")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite feature value".into()));
        }
        Ok(Samples { d, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Samples {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Samples { d: self.d, x, y }
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.y.iter().filter(|&&l| l == label).count()
    }

    fn require_both_labels(&self) -> Result<()> {
        let ones = self.count_label(1);
        if self.len() < 2 || ones == 0 || ones == self.len() {
            return Err(Error::DegenerateData(format!(
                "{} rows with {ones} positives; need both labels",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Per-column affine map to zero mean and unit variance, fit on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Samples) -> Self {
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(
            row.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    pub fn transform(&self, data: &Samples) -> Samples {
        let mut x = Vec::with_capacity(data.x.len());
        for i in 0..data.len() {
            self.apply_row(data.row(i), &mut x);
        }
        Samples {
            d: data.d,
            x,
            y: data.y.clone(),
        }
    }
}

/// A trained binary predictor. Immutable after fitting.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &[f64]) -> u8;

    /// Fraction of rows predicted correctly.
    fn accuracy(&self, data: &Samples) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len())
            .filter(|&i| self.predict(data.row(i)) == data.label(i))
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Wraps a model trained on standardized inputs.
struct Scaled<C> {
    scaler: Standardizer,
    inner: C,
}

impl<C: Classifier> Classifier for Scaled<C> {
    fn predict(&self, x: &[f64]) -> u8 {
        let mut z = Vec::with_capacity(x.len());
        self.scaler.apply_row(x, &mut z);
        self.inner.predict(&z)
    }
}

fn scaled<C: Classifier + 'static>(
    data: &Samples,
    train: impl FnOnce(&Samples) -> Result<C>,
) -> Result<Box<dyn Classifier>> {
    let scaler = Standardizer::fit(data);
    let inner = train(&scaler.transform(data))?;
    Ok(Box::new(Scaled { scaler, inner }))
}

/// Trains the classifier described by `spec`.
///
/// Kernel, linear and distance-based learners see features standardized
/// with the training rows' mean and variance. Randomized learners draw
/// from `seed` only.
pub fn fit(spec: &ClassifierSpec, data: &Samples, seed: u64) -> Result<Box<dyn Classifier>> {
    data.require_both_labels()?;
    match spec {
        ClassifierSpec::Svm(p) => scaled(data, |d| Svm::train(d, p)),
        ClassifierSpec::LogisticRegression(p) => scaled(data, |d| LogisticRegression::train(d, p)),
        ClassifierSpec::SgdLinear(p) => scaled(data, |d| SgdClassifier::train(d, p, seed)),
        ClassifierSpec::Knn(p) => scaled(data, |d| KNearest::train(d, p)),
        ClassifierSpec::NaiveBayes(p) => Ok(Box::new(GaussianNb::train(data, p)?)),
        ClassifierSpec::DecisionTree(p) => Ok(Box::new(DecisionTree::train(data, p)?)),
        ClassifierSpec::RandomForest(p) => Ok(Box::new(RandomForest::train(data, p, seed)?)),
    }
}

/// Stratified train/test partition of a two-class dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each label's indices and sends the first `floor(fraction·count)`
/// of them to training.
///
/// Both labels are shuffled by the same seeded permutation, so exchanging
/// the labels exchanges the roles of the two groups and nothing else.
pub fn stratified_split(labels: &[u8], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {fraction} outside (0,1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        let k = (fraction * idx.len() as f64).floor() as usize;
        if k == 0 || k == idx.len() {
            return Err(Error::Split(format!(
                "label {label}: {} rows leave an empty side at fraction {fraction}",
                idx.len()
            )));
        }
        idx.shuffle(&mut substream(seed, Purpose::Split, 0));
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    Ok(Split { train, test })
}

/// Stacks observed rows (label 0) over simulated rows (label 1).
pub fn entity_dataset(real: &[f64], sim: &[f64], d: usize) -> Result<Samples> {
    if real.len() != sim.len() || d == 0 || !real.len().is_multiple_of(d) {
        return Err(Error::Dimension(format!(
            "{} observed and {} simulated values with width {d}",
            real.len(),
            sim.len()
        )));
    }
    let m = real.len() / d;
    let mut x = Vec::with_capacity(2 * real.len());
    x.extend_from_slice(real);
    x.extend_from_slice(sim);
    let mut y = vec![0u8; m];
    y.resize(2 * m, 1);
    Samples::new(d, x, y)
}

/// Held-out accuracy of a classifier separating `real` rows from `sim` rows.
///
/// Both inputs are flattened `M × d` blocks. The split depends on `seed` only,
/// so repeated calls with different simulated rows use the same partition.
pub fn entity_accuracy(
    real: &[f64],
    sim: &[f64],
    d: usize,
    spec: &ClassifierSpec,
    train_fraction: f64,
    seed: u64,
) -> Result<f64> {
    let data = entity_dataset(real, sim, d)?;
    let m = data.len() / 2;
    if m < MIN_ROWS_PER_LABEL {
        return Err(Error::InsufficientData(format!(
            "{m} rows per label, need at least {MIN_ROWS_PER_LABEL}"
        )));
    }
    let split = stratified_split(data.labels(), train_fraction, seed)?;
    held_out_accuracy(spec, &data, &split, seed)
}

fn held_out_accuracy(spec: &ClassifierSpec, data: &Samples, split: &Split, seed: u64) -> Result<f64> {
    train_test_accuracy(spec, &data.subset(&split.train), &data.subset(&split.test), seed)
}

/// Fits on `train` and scores on `test`.
pub fn train_test_accuracy(spec: &ClassifierSpec, train: &Samples, test: &Samples, seed: u64) -> Result<f64> {
    let model = fit(spec, train, derive_seed(seed, &[Purpose::Training as u64]))?;
    Ok(model.accuracy(test))
}

/// Per-entity accuracies and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_entity: BTreeMap<usize, f64>,
    pub global: f64,
}

/// Averages per-entity accuracies.
pub fn global_accuracy(per_entity: BTreeMap<usize, f64>) -> Result<AccuracyReport> {
    if per_entity.is_empty() {
        return Err(Error::InsufficientData("no entity accuracies to average".into()));
    }
    let global = per_entity.values().sum::<f64>() / per_entity.len() as f64;
    Ok(AccuracyReport { per_entity, global })
}

/// Evaluates every point of `grid` and keeps the most accurate one.
///
/// Ties go to the point enumerated first.
pub fn grid_search(
    grid: &ParamGrid,
    real: &[f64],
    sim: &[f64],
    d: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(ClassifierSpec, f64)> {
    let data = entity_dataset(real, sim, d)?;
    if data.len() / 2 < MIN_ROWS_PER_LABEL {
        return Err(Error::InsufficientData(format!(
            "{} rows per label, need at least {MIN_ROWS_PER_LABEL}",
            data.len() / 2
        )));
    }
    let split = stratified_split(data.labels(), train_fraction, seed)?;
    grid_search_split(grid, &data.subset(&split.train), &data.subset(&split.test), seed)
}

/// [`grid_search`] over an explicit train/test pair.
pub fn grid_search_split(
    grid: &ParamGrid,
    train: &Samples,
    test: &Samples,
    seed: u64,
) -> Result<(ClassifierSpec, f64)> {
    let mut best: Option<(ClassifierSpec, f64)> = None;
    let mut seen: Vec<(ClassifierSpec, f64)> = Vec::new();
    for spec in grid.specs()? {
        let eff = spec.effective();
        let acc = match seen.iter().find(|(s, _)| *s == eff) {
            Some(&(_, acc)) => acc,
            None => {
                let acc = train_test_accuracy(&eff, train, test, seed)?;
                seen.push((eff, acc));
                acc
            }
        };
        if best.as_ref().is_none_or(|(_, b)| acc > *b) {
            best = Some((spec, acc));
        }
    }
    best.ok_or_else(|| Error::Parameter("empty hyperparameter grid".into()))
}


#[cfg(test)]
mod tests {
    use super::testdata::clouds;
    use super::*;
    use proptest::prelude::*;

    fn every_default() -> Vec<ClassifierSpec> {
        ClassifierKind::ALL.iter().map(|k| k.default_spec()).collect()
    }

    #[test]
    fn single_class_training_is_degenerate() {
        let data = Samples::new(1, vec![0.0, 1.0, 2.0], vec![1, 1, 1]).unwrap();
        for spec in every_default() {
            assert!(
                matches!(fit(&spec, &data, 0), Err(Error::DegenerateData(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn separated_copies_give_perfect_accuracy() {
        let real: Vec<f64> = [1.0, 0.0, 0.0].repeat(20);
        let sim: Vec<f64> = [0.0, 0.0, 1.0].repeat(20);
        for spec in every_default() {
            let ca = entity_accuracy(&real, &sim, 3, &spec, 0.6, 4).unwrap();
            assert_eq!(ca, 1.0, "{spec:?}");
        }
    }

    #[test]
    fn too_few_rows_is_insufficient() {
        let real: Vec<f64> = vec![0.0; 4];
        let sim: Vec<f64> = vec![1.0; 4];
        let spec = ClassifierKind::Svm.default_spec();
        assert!(matches!(
            entity_accuracy(&real, &sim, 1, &spec, 0.6, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn same_distribution_is_near_chance() {
        // permutation null: both labels drawn from one cloud
        for spec in every_default() {
            let mut total = 0.0;
            let reps = 40;
            for r in 0..reps {
                let pool = clouds(50, 3, 0.0, 1000 + r);
                let ca = entity_accuracy(&pool.values()[..150], &pool.values()[150..], 3, &spec, 0.6, r).unwrap();
                total += ca;
            }
            let mean = total / reps as f64;
            assert!((mean - 0.5).abs() <= 0.05, "{spec:?}: {mean}");
        }
    }

    #[test]
    fn split_is_stratified_and_reproducible() {
        let labels: Vec<u8> = [0u8; 50].iter().chain(&[1u8; 50]).copied().collect();
        let a = stratified_split(&labels, 0.6, 9).unwrap();
        assert_eq!(a, stratified_split(&labels, 0.6, 9).unwrap());
        assert_eq!(a.train.len(), 60);
        assert_eq!(a.train.iter().filter(|&&i| labels[i] == 1).count(), 30);
        assert_eq!(a.test.iter().filter(|&&i| labels[i] == 1).count(), 20);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(stratified_split(&labels, 1.0, 0).is_err());
    }

    #[test]
    fn global_accuracy_is_the_mean() {
        let r = global_accuracy(BTreeMap::from([(0, 0.4), (1, 0.6)])).unwrap();
        assert!((r.global - 0.5).abs() < 1e-15);
        assert_eq!(global_accuracy(BTreeMap::from([(3, 0.43)])).unwrap().global, 0.43);
        let ones: BTreeMap<usize, f64> = (0..10).map(|i| (i, 1.0)).collect();
        assert_eq!(global_accuracy(ones).unwrap().global, 1.0);
        assert!(global_accuracy(BTreeMap::new()).is_err());
    }

    #[test]
    fn grid_of_one_point_returns_it() {
        let data = clouds(20, 2, 1.0, 3);
        let spec = ClassifierSpec::Svm(SvmParams {
            c: 10.0,
            kernel: Kernel::Poly,
            gamma: 0.01,
        });
        let grid = ParamGrid::single(&spec);
        let (best, _) = grid_search(&grid, &data.values()[..40], &data.values()[40..], 2, 0.6, 1).unwrap();
        assert_eq!(best, spec);
    }

    #[test]
    fn grid_search_finds_a_separating_spec() {
        let data = clouds(20, 2, 6.0, 5);
        for kind in ClassifierKind::ALL {
            if kind == ClassifierKind::RandomForest {
                continue;
            }
            let (_, acc) = grid_search(
                &ParamGrid::full(kind),
                &data.values()[..40],
                &data.values()[40..],
                2,
                0.6,
                2,
            )
            .unwrap();
            assert_eq!(acc, 1.0, "{kind:?}");
        }
    }

    #[test]
    fn grid_search_is_deterministic() {
        let data = clouds(25, 3, 0.4, 8);
        let grid = ParamGrid::full(ClassifierKind::Svm);
        let run = || grid_search(&grid, &data.values()[..75], &data.values()[75..], 3, 0.6, 11).unwrap();
        assert_eq!(run(), run());
    }

    fn swap_labels(data: &Samples) -> Samples {
        Samples::new(
            data.dim(),
            data.values().to_vec(),
            data.labels().iter().map(|l| 1 - l).collect(),
        )
        .unwrap()
    }

    fn permute_columns(data: &Samples, perm: &[usize]) -> Samples {
        let mut x = Vec::with_capacity(data.values().len());
        for i in 0..data.len() {
            let r = data.row(i);
            x.extend(perm.iter().map(|&j| r[j]));
        }
        Samples::new(data.dim(), x, data.labels().to_vec()).unwrap()
    }

    fn held_out(spec: &ClassifierSpec, data: &Samples, seed: u64) -> f64 {
        let split = stratified_split(data.labels(), 0.6, seed).unwrap();
        held_out_accuracy(spec, data, &split, seed).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn accuracy_is_a_fraction(seed in 0u64..1000, shift in 0.0f64..2.0) {
            let data = clouds(12, 3, shift, seed);
            for spec in every_default() {
                let ca = held_out(&spec, &data, seed);
                prop_assert!((0.0..=1.0).contains(&ca));
            }
        }

        #[test]
        fn global_ignores_enumeration_order(vals in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            let fwd: BTreeMap<usize, f64> = vals.iter().copied().enumerate().collect();
            let n = vals.len();
            let rev: BTreeMap<usize, f64> = vals.iter().rev().copied().enumerate().map(|(i, v)| (n - 1 - i, v)).collect();
            prop_assert_eq!(global_accuracy(fwd).unwrap().global, global_accuracy(rev).unwrap().global);
        }

        #[test]
        fn label_swap_leaves_accuracy(seed in 0u64..1000, shift in 0.0f64..1.5) {
            let data = clouds(15, 3, shift, seed);
            let swapped = swap_labels(&data);
            let specs = [
                ClassifierKind::Svm.default_spec(),
                ClassifierSpec::Svm(SvmParams { c: 10.0, kernel: Kernel::Linear, gamma: 0.1 }),
                ClassifierKind::Knn.default_spec(),
                ClassifierSpec::Knn(KnnParams { n_neighbors: 10, weights: KnnWeights::Distance, algorithm: KnnAlgorithm::Auto }),
                ClassifierKind::LogisticRegression.default_spec(),
            ];
            for spec in specs {
                prop_assert_eq!(held_out(&spec, &data, seed), held_out(&spec, &swapped, seed), "{:?}", spec);
            }
        }

        #[test]
        fn column_permutation_leaves_accuracy(seed in 0u64..1000, shift in 0.0f64..1.5, perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
            let data = clouds(15, 3, shift, seed);
            let permuted = permute_columns(&data, &perm);
            let specs = [
                ClassifierKind::Knn.default_spec(),
                ClassifierSpec::Knn(KnnParams { n_neighbors: 10, weights: KnnWeights::Distance, algorithm: KnnAlgorithm::BallTree }),
                ClassifierKind::DecisionTree.default_spec(),
                ClassifierSpec::DecisionTree(TreeParams { criterion: Criterion::Entropy, max_depth: Some(10), min_samples_split: 5 }),
            ];
            for spec in specs {
                prop_assert_eq!(held_out(&spec, &data, seed), held_out(&spec, &permuted, seed), "{:?}", spec);
            }
        }
    }
}
