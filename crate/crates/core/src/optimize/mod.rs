//! Classification-accuracy objective, its minimization, classifier tuning
//! with restarts, and replicated inference.

mod powell;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{BaselineModel, SpreadParams};
use crate::classify::{
    entity_dataset, global_accuracy, grid_search_split, stratified_split, train_test_accuracy, AccuracyReport,
    ClassifierKind, ClassifierSpec, ParamGrid, Samples, DEFAULT_TRAIN_FRACTION, MIN_ROWS_PER_LABEL,
};
use crate::error::{Error, Result};
use crate::features::{generate_feature_set, FeatureSet, FeatureSpec};
use crate::graph::{Graph, SeedSchedule};
use crate::rng::{derive_seed, Purpose};

pub use powell::{powell_minimize, PowellConfig, PowellOutcome};

/// Objective spread below which a run is flagged as flat.
pub const FLAT_SPREAD: f64 = 0.05;

const TAG_GROUND_TRUTH: u64 = 0x47;
const TAG_SIMULATION: u64 = 0x53;
const TAG_TUNING: u64 = 0x54;

/// Seed of the observed feature set for a run with base seed `base`.
pub fn ground_truth_seed(base: u64) -> u64 {
    derive_seed(base, &[TAG_GROUND_TRUTH])
}

fn simulation_seed(base: u64) -> u64 {
    derive_seed(base, &[TAG_SIMULATION])
}

fn tuning_seed(base: u64) -> u64 {
    derive_seed(base, &[TAG_TUNING])
}

fn entity_seed(base: u64, entity: usize) -> u64 {
    derive_seed(base, &[Purpose::Split as u64, entity as u64])
}

/// Observed features, either pooled and split per evaluation, or already
/// divided into training and test rows.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Pooled(FeatureSet),
    Split { train: FeatureSet, test: FeatureSet },
}

impl GroundTruth {
    /// The pooled set, or the training part of a split.
    pub fn reference(&self) -> &FeatureSet {
        match self {
            GroundTruth::Pooled(f) => f,
            GroundTruth::Split { train, .. } => train,
        }
    }

    pub fn entities(&self) -> usize {
        self.reference().entities()
    }

    /// Simulated rows needed per entity to match the observed rows.
    fn simulated_samples(&self) -> usize {
        match self {
            GroundTruth::Pooled(f) => f.samples(),
            GroundTruth::Split { train, test } => train.samples() + test.samples(),
        }
    }
}

/// Everything the objective needs besides the candidate parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub graph: Graph,
    pub seeds: SeedSchedule,
    pub baseline: BaselineModel,
    pub ground_truth: GroundTruth,
    /// Sizes and statistic of the simulated sets; `samples` is derived from
    /// the observed rows.
    pub features: FeatureSpec,
    pub classifiers: Vec<ClassifierSpec>,
    pub base_seed: u64,
    pub train_fraction: f64,
}

impl ObjectiveContext {
    /// Checks that observed and simulated sets will line up.
    pub fn new(
        graph: Graph,
        seeds: SeedSchedule,
        baseline: BaselineModel,
        ground_truth: GroundTruth,
        cascades: usize,
        classifier: ClassifierSpec,
        base_seed: u64,
    ) -> Result<Self> {
        let e = graph.node_count();
        let gt = ground_truth.reference();
        if gt.entities() != e || baseline.len() != e {
            return Err(Error::Dimension(format!(
                "graph has {e} nodes, observed features {} entities, baseline {}",
                gt.entities(),
                baseline.len()
            )));
        }
        if let GroundTruth::Split { train, test } = &ground_truth {
            if train.entities() != test.entities() || train.kind() != test.kind() {
                return Err(Error::Dimension("train and test feature sets disagree".into()));
            }
        }
        if ground_truth.reference().label() != 0 {
            return Err(Error::Parameter("observed features must carry label 0".into()));
        }
        seeds.validate_for(&graph)?;
        Ok(ObjectiveContext {
            features: FeatureSpec {
                samples: ground_truth.simulated_samples(),
                cascades,
                kind: gt.kind(),
            },
            classifiers: vec![classifier; e],
            graph,
            seeds,
            baseline,
            ground_truth,
            base_seed,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        })
    }

    pub fn entities(&self) -> usize {
        self.graph.node_count()
    }

    /// Simulated features at `theta` drawn from the stream keyed by `seed`.
    pub fn simulate(&self, theta: SpreadParams, seed: u64) -> Result<FeatureSet> {
        generate_feature_set(1, theta, &self.graph, &self.seeds, &self.baseline, &self.features, seed)
    }

    /// Training and test rows for one entity against a simulated set.
    fn entity_split(&self, entity: usize, sim: &FeatureSet) -> Result<(Samples, Samples)> {
        let d = sim.dim();
        match &self.ground_truth {
            GroundTruth::Pooled(gt) => {
                let data = entity_dataset(gt.entity_rows(entity), sim.entity_rows(entity), d)?;
                if data.len() / 2 < MIN_ROWS_PER_LABEL {
                    return Err(Error::InsufficientData(format!(
                        "{} rows per label, need at least {MIN_ROWS_PER_LABEL}",
                        data.len() / 2
                    )));
                }
                let split = stratified_split(data.labels(), self.train_fraction, entity_seed(self.base_seed, entity))?;
                Ok((data.subset(&split.train), data.subset(&split.test)))
            }
            GroundTruth::Split { train, test } => {
                let rows = sim.entity_rows(entity);
                let cut = train.samples() * d;
                Ok((
                    entity_dataset(train.entity_rows(entity), &rows[..cut], d)?,
                    entity_dataset(test.entity_rows(entity), &rows[cut..], d)?,
                ))
            }
        }
    }

    /// Global accuracy at `theta` with the given per-entity classifiers.
    pub fn accuracy_with(&self, theta: SpreadParams, classifiers: &[ClassifierSpec]) -> Result<AccuracyReport> {
        if classifiers.len() != self.entities() {
            return Err(Error::Dimension(format!(
                "{} classifier specs for {} entities",
                classifiers.len(),
                self.entities()
            )));
        }
        let sim = self.simulate(theta, simulation_seed(self.base_seed))?;
        let per_entity = (0..self.entities())
            .into_par_iter()
            .map(|e| {
                let (train, test) = self.entity_split(e, &sim)?;
                let acc = train_test_accuracy(&classifiers[e], &train, &test, entity_seed(self.base_seed, e))?;
                Ok((e, acc))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        global_accuracy(per_entity)
    }

    /// Per-entity best grid points against features simulated at `theta`
    /// on a stream independent of the objective's.
    pub fn tune(&self, theta: SpreadParams, grids: &[ParamGrid]) -> Result<Vec<ClassifierSpec>> {
        let sim = self.simulate(theta, tuning_seed(self.base_seed))?;
        (0..self.entities())
            .into_par_iter()
            .map(|e| {
                let (train, test) = self.entity_split(e, &sim)?;
                let seed = entity_seed(self.base_seed, e);
                let mut best: Option<(ClassifierSpec, f64)> = None;
                for grid in grids {
                    let (spec, acc) = grid_search_split(grid, &train, &test, seed)?;
                    if best.as_ref().is_none_or(|(_, b)| acc > *b) {
                        best = Some((spec, acc));
                    }
                }
                best.map(|b| b.0)
                    .ok_or_else(|| Error::Parameter("no grids to search".into()))
            })
            .collect()
    }
}

/// Mean held-out accuracy at `theta_hat` using the context's classifiers.
///
/// Simulated features come from the same substreams on every call, so the
/// value is a deterministic function of `theta_hat`.
pub fn dc_objective(theta_hat: SpreadParams, ctx: &ObjectiveContext) -> Result<AccuracyReport> {
    ctx.accuracy_with(theta_hat, &ctx.classifiers)
}

/// Converged point of a single minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub theta: SpreadParams,
    pub global_ca: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub objective_range: (f64, f64),
}

fn theta_of(x: &[f64]) -> SpreadParams {
    SpreadParams {
        p: x[0].clamp(0.0, 1.0),
        q: x[1].clamp(0.0, 1.0),
    }
}

/// Minimizes the objective over the configured box, clamping every probe.
pub fn learn_params(ctx: &ObjectiveContext, start: SpreadParams, config: &PowellConfig) -> Result<LearnOutcome> {
    learn_with(ctx, start, config, &ctx.classifiers)
}

fn learn_with(
    ctx: &ObjectiveContext,
    start: SpreadParams,
    config: &PowellConfig,
    classifiers: &[ClassifierSpec],
) -> Result<LearnOutcome> {
    if config.bounds.len() != 2 {
        return Err(Error::Dimension("parameter box must have two coordinates".into()));
    }
    let mut start = vec![start.p, start.q];
    config.clamp(&mut start);
    let out = powell_minimize(
        |x| {
            let mut x = x.to_vec();
            config.clamp(&mut x);
            Ok(ctx.accuracy_with(theta_of(&x), classifiers)?.global)
        },
        &start,
        config,
    )?;
    Ok(LearnOutcome {
        theta: theta_of(&out.x),
        global_ca: out.f,
        evaluations: out.evaluations,
        iterations: out.iterations,
        objective_range: out.f_range,
    })
}

/// Outcome of the tune-and-restart loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome<S> {
    pub theta: SpreadParams,
    pub global_ca: f64,
    pub specs: S,
    pub restarts: usize,
    pub evaluations: usize,
    pub objective_range: (f64, f64),
}

/// Tunes classifiers at the converged point and restarts the search from
/// there while tuning raises accuracy at that point by more than `ftol`.
///
/// `tune` proposes new specs at a point, `evaluate` scores specs at a point
/// and `learn` minimizes from a point with fixed specs.
pub fn restart_loop<S, T, V, L>(
    first: LearnOutcome,
    specs: S,
    restart_cap: usize,
    ftol: f64,
    mut tune: T,
    mut evaluate: V,
    mut learn: L,
) -> Result<RestartOutcome<S>>
where
    T: FnMut(SpreadParams, &S) -> Result<S>,
    V: FnMut(SpreadParams, &S) -> Result<f64>,
    L: FnMut(SpreadParams, &S) -> Result<LearnOutcome>,
{
    let mut state = RestartOutcome {
        theta: first.theta,
        global_ca: first.global_ca,
        specs,
        restarts: 0,
        evaluations: first.evaluations,
        objective_range: first.objective_range,
    };
    while state.restarts < restart_cap {
        let tuned = tune(state.theta, &state.specs)?;
        let tuned_ca = evaluate(state.theta, &tuned)?;
        state.evaluations += 1;
        if tuned_ca <= state.global_ca + ftol {
            break;
        }
        let next = learn(state.theta, &tuned)?;
        state.restarts += 1;
        state.evaluations += next.evaluations;
        state.objective_range = (
            state.objective_range.0.min(next.objective_range.0),
            state.objective_range.1.max(next.objective_range.1),
        );
        state.theta = next.theta;
        state.global_ca = next.global_ca;
        state.specs = tuned;
    }
    Ok(state)
}

/// Settings for one inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub start: SpreadParams,
    pub powell: PowellConfig,
    pub tune: bool,
    pub restart_cap: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            start: SpreadParams { p: 0.5, q: 0.5 },
            powell: PowellConfig::default(),
            tune: true,
            restart_cap: 3,
        }
    }
}

/// Estimated parameters with their diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub theta_hat: SpreadParams,
    pub final_global_ca: f64,
    pub objective_evaluations: usize,
    pub restarts: usize,
    pub per_entity_ca: BTreeMap<usize, f64>,
    pub mse_vs_truth: Option<f64>,
    pub objective_range: (f64, f64),
    /// Set when every evaluated objective value fell within [`FLAT_SPREAD`].
    pub flat_objective: bool,
    /// Classifier used per entity at the end, as `kind(params)` strings with counts.
    pub classifier_summary: BTreeMap<String, usize>,
}

/// Full pipeline on a prepared context: minimize, then tune and restart.
pub fn infer(ctx: &ObjectiveContext, config: &InferenceConfig, truth: Option<SpreadParams>) -> Result<InferenceResult> {
    let first = learn_params(ctx, config.start, &config.powell)?;
    let grids: Vec<ParamGrid> = {
        let mut kinds: Vec<ClassifierKind> = ctx.classifiers.iter().map(ClassifierSpec::kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds.into_iter().map(ParamGrid::full).collect()
    };
    let cap = if config.tune { config.restart_cap } else { 0 };
    let outcome = restart_loop(
        first,
        ctx.classifiers.clone(),
        cap,
        config.powell.ftol,
        |theta, _| ctx.tune(theta, &grids),
        |theta, specs| Ok(ctx.accuracy_with(theta, specs)?.global),
        |theta, specs| learn_with(ctx, theta, &config.powell, specs),
    )?;
    let report = ctx.accuracy_with(outcome.theta, &outcome.specs)?;
    let mut classifier_summary = BTreeMap::new();
    for s in &outcome.specs {
        *classifier_summary.entry(s.to_string()).or_insert(0) += 1;
    }
    let (lo, hi) = outcome.objective_range;
    Ok(InferenceResult {
        theta_hat: outcome.theta,
        final_global_ca: report.global,
        objective_evaluations: outcome.evaluations,
        restarts: outcome.restarts,
        per_entity_ca: report.per_entity,
        mse_vs_truth: truth.map(|t| outcome.theta.mse(&t)),
        objective_range: (lo, hi),
        flat_objective: hi - lo < FLAT_SPREAD,
        classifier_summary,
    })
}

/// Synthetic experiment: generate observed features at `truth`, then infer.
#[derive(Debug, Clone)]
pub struct SyntheticSetup {
    pub graph: Graph,
    pub seeds: SeedSchedule,
    pub baseline: BaselineModel,
    pub features: FeatureSpec,
    pub classifier: ClassifierSpec,
}

impl SyntheticSetup {
    pub fn context(&self, truth: SpreadParams, base_seed: u64) -> Result<ObjectiveContext> {
        let gt = generate_feature_set(
            0,
            truth,
            &self.graph,
            &self.seeds,
            &self.baseline,
            &self.features,
            ground_truth_seed(base_seed),
        )?;
        ObjectiveContext::new(
            self.graph.clone(),
            self.seeds.clone(),
            self.baseline.clone(),
            GroundTruth::Pooled(gt),
            self.features.cascades,
            self.classifier,
            base_seed,
        )
    }

    pub fn run(&self, truth: SpreadParams, config: &InferenceConfig, base_seed: u64) -> Result<InferenceResult> {
        infer(&self.context(truth, base_seed)?, config, Some(truth))
    }
}

/// Aggregate of repeated inferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<InferenceResult>,
    pub p_hat_mean: f64,
    pub p_hat_std: f64,
    pub q_hat_mean: f64,
    pub q_hat_std: f64,
    pub mse_mean: Option<f64>,
    pub ca_mean: f64,
    pub evaluations: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Base seed of repeat `r` under `base`.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, &[Purpose::Replicate as u64, r as u64])
}

/// Runs `run` for `repeats` distinct seeds and summarizes the estimates.
/// Standard deviations are population values.
pub fn replicate<F>(base_seed: u64, repeats: usize, mut run: F) -> Result<ReplicateSummary>
where
    F: FnMut(u64) -> Result<InferenceResult>,
{
    if repeats == 0 {
        return Err(Error::Parameter("repeat count must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..repeats).map(|r| replicate_seed(base_seed, r)).collect();
    let runs = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(seeds, runs))
}

/// Summary statistics over finished runs.
pub fn summarize(seeds: Vec<u64>, runs: Vec<InferenceResult>) -> ReplicateSummary {
    let ps: Vec<f64> = runs.iter().map(|r| r.theta_hat.p).collect();
    let qs: Vec<f64> = runs.iter().map(|r| r.theta_hat.q).collect();
    let cas: Vec<f64> = runs.iter().map(|r| r.final_global_ca).collect();
    let mses: Option<Vec<f64>> = runs.iter().map(|r| r.mse_vs_truth).collect();
    let (p_hat_mean, p_hat_std) = mean_std(&ps);
    let (q_hat_mean, q_hat_std) = mean_std(&qs);
    ReplicateSummary {
        p_hat_mean,
        p_hat_std,
        q_hat_mean,
        q_hat_std,
        mse_mean: mses.map(|m| mean_std(&m).0),
        ca_mean: mean_std(&cas).0,
        evaluations: runs.iter().map(|r| r.objective_evaluations).sum(),
        seeds,
        runs,
    }
}
