//! Fixtures shared by the benchmarks.

use dcinfer::graph::gen_barabasi_albert;
use dcinfer::{BaselineModel, ClassifierKind, FeatureSpec, SeedSchedule, SyntheticSetup};

/// The 200-node preferential-attachment setup with SVM classifiers.
pub fn loopy_setup() -> SyntheticSetup {
    SyntheticSetup {
        graph: gen_barabasi_albert(200, 2, 2024).expect("valid generator parameters"),
        seeds: SeedSchedule::single(0),
        baseline: BaselineModel::uniform(200, 0.5, 0.25, 0.25).expect("valid baseline"),
        features: FeatureSpec::default(),
        classifier: ClassifierKind::Svm.default_spec(),
    }
}
