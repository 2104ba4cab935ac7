use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single hyperparameter value as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
    None,
}

impl ParamValue {
    fn text(s: &str) -> Self {
        ParamValue::Text(s.to_string())
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    fn is_none_like(&self) -> bool {
        match self {
            ParamValue::None => true,
            ParamValue::Text(s) => s.eq_ignore_ascii_case("none"),
            _ => false,
        }
    }

    /// Whether `self` names the same grid point as the canonical value `c`.
    fn matches(&self, c: &ParamValue) -> bool {
        match c {
            ParamValue::None => self.is_none_like(),
            ParamValue::Text(t) => match self {
                ParamValue::Text(s) => s.eq_ignore_ascii_case(t) || (t == "log" && s.eq_ignore_ascii_case("log_loss")),
                _ => false,
            },
            ParamValue::Int(_) | ParamValue::Float(_) => match (self.as_f64(), c.as_f64()) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1e-300),
                _ => false,
            },
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
            ParamValue::None => f.write_str("none"),
        }
    }
}

/// Hyperparameter assignment keyed by parameter name.
pub type ParamMap = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    LogisticRegression,
    NaiveBayes,
    DecisionTree,
    Knn,
    RandomForest,
    SgdLinear,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 7] = [
        ClassifierKind::Svm,
        ClassifierKind::LogisticRegression,
        ClassifierKind::NaiveBayes,
        ClassifierKind::DecisionTree,
        ClassifierKind::Knn,
        ClassifierKind::RandomForest,
        ClassifierKind::SgdLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::NaiveBayes => "naive_bayes",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::Knn => "knn",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::SgdLinear => "sgd_linear",
        }
    }

    /// Declared search space: `(key, domain, default index)` in enumeration order.
    fn axes(self) -> Vec<(&'static str, Vec<ParamValue>, usize)> {
        use ParamValue::{Float, Int};
        let t = ParamValue::text;
        let depth = vec![ParamValue::None, Int(10), Int(20)];
        match self {
            ClassifierKind::Svm => vec![
                ("C", vec![Float(1.0), Float(10.0), Float(100.0), Float(1000.0)], 0),
                ("kernel", vec![t("linear"), t("rbf"), t("poly")], 1),
                ("gamma", vec![Float(0.01), Float(0.1), Float(1.0)], 1),
            ],
            ClassifierKind::RandomForest => vec![
                ("n_estimators", vec![Int(100), Int(200)], 0),
                ("max_depth", depth, 0),
                ("min_samples_split", vec![Int(2), Int(5)], 0),
            ],
            ClassifierKind::NaiveBayes => vec![(
                "var_smoothing",
                vec![Float(1e-9), Float(1e-8), Float(1e-7), Float(1e-6)],
                0,
            )],
            ClassifierKind::SgdLinear => vec![
                ("loss", vec![t("hinge"), t("log")], 0),
                ("penalty", vec![t("l2"), t("elasticnet")], 0),
                ("alpha", vec![Float(1e-4), Float(1e-3)], 0),
            ],
            ClassifierKind::DecisionTree => vec![
                ("criterion", vec![t("gini"), t("entropy")], 0),
                ("max_depth", depth, 0),
                ("min_samples_split", vec![Int(2), Int(5)], 0),
            ],
            ClassifierKind::Knn => vec![
                ("n_neighbors", vec![Int(5), Int(10)], 0),
                ("weights", vec![t("uniform"), t("distance")], 0),
                ("algorithm", vec![t("auto"), t("ball_tree")], 0),
            ],
            ClassifierKind::LogisticRegression => vec![
                ("penalty", vec![t("l2")], 0),
                ("C", vec![Float(0.01), Float(0.1), Float(1.0)], 2),
                ("solver", vec![t("liblinear")], 0),
                ("max_iter", vec![Int(100), Int(200)], 0),
            ],
        }
    }

    pub fn default_spec(self) -> ClassifierSpec {
        ClassifierSpec::from_map(self, &ParamMap::new()).expect("defaults lie in the grid")
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ClassifierKind::ALL.iter().map(|k| k.name()).collect();
            Error::Parameter(format!(
                "unknown classifier `{s}`; expected one of {}",
                names.join(", ")
            ))
        })
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Linear,
    Rbf,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub c: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbParams {
    pub var_smoothing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnWeights {
    Uniform,
    Distance,
}

/// Neighbor search strategy. Both variants return exact neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnAlgorithm {
    Auto,
    BallTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnParams {
    pub n_neighbors: usize,
    pub weights: KnnWeights,
    pub algorithm: KnnAlgorithm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgdLoss {
    Hinge,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgdPenalty {
    L2,
    ElasticNet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub loss: SgdLoss,
    pub penalty: SgdPenalty,
    pub alpha: f64,
}

/// A classifier family with one point of its hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub enum ClassifierSpec {
    Svm(SvmParams),
    LogisticRegression(LogisticParams),
    NaiveBayes(NbParams),
    DecisionTree(TreeParams),
    Knn(KnnParams),
    RandomForest(ForestParams),
    SgdLinear(SgdParams),
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    kind: ClassifierKind,
    #[serde(default)]
    params: ParamMap,
}

impl TryFrom<SpecRepr> for ClassifierSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        ClassifierSpec::from_map(r.kind, &r.params)
    }
}

impl From<ClassifierSpec> for SpecRepr {
    fn from(s: ClassifierSpec) -> Self {
        SpecRepr {
            kind: s.kind(),
            params: s.to_map(),
        }
    }
}

fn canonical<'a>(key: &str, domain: &'a [ParamValue], v: &ParamValue) -> Result<&'a ParamValue> {
    domain.iter().find(|c| v.matches(c)).ok_or_else(|| {
        let allowed: Vec<String> = domain.iter().map(ToString::to_string).collect();
        Error::Parameter(format!("{key} = {v} is outside the grid {{{}}}", allowed.join(", ")))
    })
}

fn num(v: &ParamValue) -> f64 {
    v.as_f64().expect("numeric grid value")
}

fn count(v: &ParamValue) -> usize {
    num(v) as usize
}

fn depth(v: &ParamValue) -> Option<usize> {
    match v {
        ParamValue::None => None,
        other => Some(count(other)),
    }
}

fn word(v: &ParamValue) -> &str {
    match v {
        ParamValue::Text(s) => s,
        _ => "",
    }
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Svm(_) => ClassifierKind::Svm,
            ClassifierSpec::LogisticRegression(_) => ClassifierKind::LogisticRegression,
            ClassifierSpec::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            ClassifierSpec::DecisionTree(_) => ClassifierKind::DecisionTree,
            ClassifierSpec::Knn(_) => ClassifierKind::Knn,
            ClassifierSpec::RandomForest(_) => ClassifierKind::RandomForest,
            ClassifierSpec::SgdLinear(_) => ClassifierKind::SgdLinear,
        }
    }

    /// The same model with hyperparameters that cannot affect it reset, so
    /// that equivalent grid points compare equal.
    pub fn effective(&self) -> ClassifierSpec {
        match *self {
            ClassifierSpec::Svm(p) if p.kernel == Kernel::Linear => ClassifierSpec::Svm(SvmParams { gamma: 0.0, ..p }),
            ClassifierSpec::Knn(p) => ClassifierSpec::Knn(KnnParams {
                algorithm: KnnAlgorithm::Auto,
                ..p
            }),
            other => other,
        }
    }

    /// Builds a spec from a partial assignment; missing keys take defaults.
    ///
    /// Unknown keys and values outside the kind's grid are rejected.
    pub fn from_map(kind: ClassifierKind, map: &ParamMap) -> Result<Self> {
        let axes = kind.axes();
        if let Some(k) = map.keys().find(|k| !axes.iter().any(|(a, _, _)| a == k)) {
            return Err(Error::Parameter(format!("{kind} has no hyperparameter `{k}`")));
        }
        let mut vals: BTreeMap<&str, &ParamValue> = BTreeMap::new();
        for (key, domain, default) in &axes {
            let v = match map.get(*key) {
                Some(v) => canonical(key, domain, v)?,
                None => &domain[*default],
            };
            vals.insert(key, v);
        }
        let v = |k: &str| vals[k];
        Ok(match kind {
            ClassifierKind::Svm => ClassifierSpec::Svm(SvmParams {
                c: num(v("C")),
                kernel: match word(v("kernel")) {
                    "linear" => Kernel::Linear,
                    "rbf" => Kernel::Rbf,
                    _ => Kernel::Poly,
                },
                gamma: num(v("gamma")),
            }),
            ClassifierKind::LogisticRegression => ClassifierSpec::LogisticRegression(LogisticParams {
                c: num(v("C")),
                max_iter: count(v("max_iter")),
            }),
            ClassifierKind::NaiveBayes => ClassifierSpec::NaiveBayes(NbParams {
                var_smoothing: num(v("var_smoothing")),
            }),
            ClassifierKind::DecisionTree => ClassifierSpec::DecisionTree(TreeParams {
                criterion: if word(v("criterion")) == "gini" {
                    Criterion::Gini
                } else {
                    Criterion::Entropy
                },
                max_depth: depth(v("max_depth")),
                min_samples_split: count(v("min_samples_split")),
            }),
            ClassifierKind::Knn => ClassifierSpec::Knn(KnnParams {
                n_neighbors: count(v("n_neighbors")),
                weights: if word(v("weights")) == "uniform" {
                    KnnWeights::Uniform
                } else {
                    KnnWeights::Distance
                },
                algorithm: if word(v("algorithm")) == "auto" {
                    KnnAlgorithm::Auto
                } else {
                    KnnAlgorithm::BallTree
                },
            }),
            ClassifierKind::RandomForest => ClassifierSpec::RandomForest(ForestParams {
                n_estimators: count(v("n_estimators")),
                max_depth: depth(v("max_depth")),
                min_samples_split: count(v("min_samples_split")),
            }),
            ClassifierKind::SgdLinear => ClassifierSpec::SgdLinear(SgdParams {
                loss: if word(v("loss")) == "hinge" {
                    SgdLoss::Hinge
                } else {
                    SgdLoss::Log
                },
                penalty: if word(v("penalty")) == "l2" {
                    SgdPenalty::L2
                } else {
                    SgdPenalty::ElasticNet
                },
                alpha: num(v("alpha")),
            }),
        })
    }

    /// The full assignment, every key present.
    pub fn to_map(&self) -> ParamMap {
        use ParamValue::{Float, Int};
        let t = |s: &str| ParamValue::text(s);
        let d = |x: Option<usize>| x.map_or(ParamValue::None, |v| Int(v as i64));
        let pairs: Vec<(&str, ParamValue)> = match *self {
            ClassifierSpec::Svm(p) => vec![
                ("C", Float(p.c)),
                (
                    "kernel",
                    t(match p.kernel {
                        Kernel::Linear => "linear",
                        Kernel::Rbf => "rbf",
                        Kernel::Poly => "poly",
                    }),
                ),
                ("gamma", Float(p.gamma)),
            ],
            ClassifierSpec::LogisticRegression(p) => vec![
                ("penalty", t("l2")),
                ("C", Float(p.c)),
                ("solver", t("liblinear")),
                ("max_iter", Int(p.max_iter as i64)),
            ],
            ClassifierSpec::NaiveBayes(p) => vec![("var_smoothing", Float(p.var_smoothing))],
            ClassifierSpec::DecisionTree(p) => vec![
                (
                    "criterion",
                    t(if p.criterion == Criterion::Gini {
                        "gini"
                    } else {
                        "entropy"
                    }),
                ),
                ("max_depth", d(p.max_depth)),
                ("min_samples_split", Int(p.min_samples_split as i64)),
            ],
            ClassifierSpec::Knn(p) => vec![
                ("n_neighbors", Int(p.n_neighbors as i64)),
                (
                    "weights",
                    t(if p.weights == KnnWeights::Uniform {
                        "uniform"
                    } else {
                        "distance"
                    }),
                ),
                (
                    "algorithm",
                    t(if p.algorithm == KnnAlgorithm::Auto {
                        "auto"
                    } else {
                        "ball_tree"
                    }),
                ),
            ],
            ClassifierSpec::RandomForest(p) => vec![
                ("n_estimators", Int(p.n_estimators as i64)),
                ("max_depth", d(p.max_depth)),
                ("min_samples_split", Int(p.min_samples_split as i64)),
            ],
            ClassifierSpec::SgdLinear(p) => vec![
                ("loss", t(if p.loss == SgdLoss::Hinge { "hinge" } else { "log" })),
                (
                    "penalty",
                    t(if p.penalty == SgdPenalty::L2 {
                        "l2"
                    } else {
                        "elasticnet"
                    }),
                ),
                ("alpha", Float(p.alpha)),
            ],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_map().iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.kind(), parts.join(", "))
    }
}

/// A rectangular subset of one kind's search space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    kind: ClassifierKind,
    axes: Vec<(String, Vec<ParamValue>)>,
}

impl ParamGrid {
    /// The whole declared grid.
    pub fn full(kind: ClassifierKind) -> Self {
        ParamGrid {
            kind,
            axes: kind.axes().into_iter().map(|(k, d, _)| (k.to_string(), d)).collect(),
        }
    }

    /// The grid holding `spec` alone.
    pub fn single(spec: &ClassifierSpec) -> Self {
        let map = spec.to_map();
        ParamGrid {
            kind: spec.kind(),
            axes: spec
                .kind()
                .axes()
                .into_iter()
                .map(|(k, _, _)| (k.to_string(), vec![map[k].clone()]))
                .collect(),
        }
    }

    /// The full grid with some axes narrowed to the listed values.
    pub fn restricted(kind: ClassifierKind, overrides: &BTreeMap<String, Vec<ParamValue>>) -> Result<Self> {
        let mut grid = ParamGrid::full(kind);
        for (key, values) in overrides {
            let (_, domain) = grid
                .axes
                .iter_mut()
                .find(|(k, _)| k == key)
                .ok_or_else(|| Error::Parameter(format!("{kind} has no hyperparameter `{key}`")))?;
            if values.is_empty() {
                return Err(Error::Parameter(format!("empty value list for `{key}`")));
            }
            let narrowed = values
                .iter()
                .map(|v| canonical(key, domain, v).cloned())
                .collect::<Result<Vec<_>>>()?;
            *domain = narrowed;
        }
        Ok(grid)
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, d)| d.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every point, first axis outermost.
    pub fn specs(&self) -> Result<Vec<ClassifierSpec>> {
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; self.axes.len()];
        if self.is_empty() {
            return Ok(out);
        }
        loop {
            let map: ParamMap = self
                .axes
                .iter()
                .zip(&idx)
                .map(|((k, d), &i)| (k.clone(), d[i].clone()))
                .collect();
            out.push(ClassifierSpec::from_map(self.kind, &map)?);
            let mut pos = self.axes.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < self.axes[pos].1.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_sizes() {
        let sizes: Vec<usize> = ClassifierKind::ALL.iter().map(|&k| ParamGrid::full(k).len()).collect();
        assert_eq!(sizes, vec![36, 6, 4, 12, 8, 12, 8]);
        for k in ClassifierKind::ALL {
            let specs = ParamGrid::full(k).specs().unwrap();
            assert_eq!(specs.len(), ParamGrid::full(k).len());
            assert!(specs.contains(&k.default_spec()));
        }
    }

    #[test]
    fn enumeration_order_is_first_axis_outermost() {
        let specs = ParamGrid::full(ClassifierKind::Svm).specs().unwrap();
        assert_eq!(
            specs[0],
            ClassifierSpec::Svm(SvmParams {
                c: 1.0,
                kernel: Kernel::Linear,
                gamma: 0.01
            })
        );
        assert_eq!(
            specs[1],
            ClassifierSpec::Svm(SvmParams {
                c: 1.0,
                kernel: Kernel::Linear,
                gamma: 0.1
            })
        );
        assert_eq!(
            specs[35],
            ClassifierSpec::Svm(SvmParams {
                c: 1000.0,
                kernel: Kernel::Poly,
                gamma: 1.0
            })
        );
    }

    #[test]
    fn map_round_trip() {
        for k in ClassifierKind::ALL {
            for spec in ParamGrid::full(k).specs().unwrap() {
                assert_eq!(ClassifierSpec::from_map(k, &spec.to_map()).unwrap(), spec);
            }
        }
    }

    #[test]
    fn values_outside_the_grid_are_rejected() {
        let mut m = ParamMap::new();
        m.insert("C".into(), ParamValue::Float(5.0));
        assert!(ClassifierSpec::from_map(ClassifierKind::Svm, &m).is_err());
        let mut m = ParamMap::new();
        m.insert("depth".into(), ParamValue::Int(3));
        assert!(ClassifierSpec::from_map(ClassifierKind::DecisionTree, &m).is_err());
        let mut m = ParamMap::new();
        m.insert("max_depth".into(), ParamValue::Text("None".into()));
        m.insert("min_samples_split".into(), ParamValue::Float(5.0));
        let spec = ClassifierSpec::from_map(ClassifierKind::DecisionTree, &m).unwrap();
        assert_eq!(
            spec,
            ClassifierSpec::DecisionTree(TreeParams {
                criterion: Criterion::Gini,
                max_depth: None,
                min_samples_split: 5
            })
        );
    }

    #[test]
    fn restricted_grid() {
        let o = BTreeMap::from([("kernel".to_string(), vec![ParamValue::text("linear")])]);
        let g = ParamGrid::restricted(ClassifierKind::Svm, &o).unwrap();
        assert_eq!(g.len(), 12);
        let bad = BTreeMap::from([("kernel".to_string(), vec![ParamValue::text("sigmoid")])]);
        assert!(ParamGrid::restricted(ClassifierKind::Svm, &bad).is_err());
        let spec = ClassifierKind::Knn.default_spec();
        assert_eq!(ParamGrid::single(&spec).specs().unwrap(), vec![spec]);
    }

    #[test]
    fn effective_specs_merge_inert_parameters() {
        let count = |k: ClassifierKind| {
            let mut e: Vec<String> = ParamGrid::full(k)
                .specs()
                .unwrap()
                .iter()
                .map(|s| format!("{:?}", s.effective()))
                .collect();
            e.sort();
            e.dedup();
            e.len()
        };
        assert_eq!(count(ClassifierKind::Svm), 28);
        assert_eq!(count(ClassifierKind::Knn), 4);
        assert_eq!(count(ClassifierKind::DecisionTree), 12);
    }

    #[test]
    fn kind_names_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("mlp".parse::<ClassifierKind>().is_err());
    }
}
