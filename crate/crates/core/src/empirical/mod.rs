//! Inference on trading data: trade matrices around announcements,
//! investor baselines, bootstrap features and a synthetic surrogate.

mod market;
mod matrix;
mod synth;

use serde::{Deserialize, Serialize};

use crate::cascade::{BaselineModel, SpreadParams};
use crate::classify::{ClassifierKind, ClassifierSpec};
use crate::error::{Error, Result};
use crate::features::StatisticKind;
use crate::graph::{Graph, SeedSchedule};
use crate::optimize::{infer, GroundTruth, InferenceConfig, InferenceResult, ObjectiveContext};
use crate::rng::{derive_seed, Purpose};

pub use market::{
    baselines_to_csv, read_baselines, read_trades, trades_to_csv, CalendarDay, MarketCalendar, TradeRecord, DELTA_NON,
    DELTA_PRE, PRE_WINDOW,
};
pub use matrix::{
    build_trade_matrix, estimate_baselines, gt_features_from_trades, train_columns, BootstrapSpec, ColumnSampling,
    InvestorBaseline, TradeMatrix, WindowMode,
};
pub use synth::{sparse_baselines, synth_trades, CalendarLayout, SyntheticMarket};

/// Settings shared by both windows of a company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompanyConfig {
    /// Bootstrap samples per part (B).
    pub bootstrap_samples: usize,
    /// Columns per sample (m); `None` picks `min(20, n1)` per window.
    pub width: Option<usize>,
    pub sampling: ColumnSampling,
    pub kind: StatisticKind,
    pub classifier: ClassifierSpec,
    pub inference: InferenceConfig,
    pub base_seed: u64,
}

impl Default for CompanyConfig {
    fn default() -> Self {
        CompanyConfig {
            bootstrap_samples: 50,
            width: None,
            sampling: ColumnSampling::Replacement,
            kind: StatisticKind::Reduced,
            classifier: ClassifierKind::Svm.default_spec(),
            inference: InferenceConfig::default(),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub mode: WindowMode,
    pub columns: usize,
    pub dropped_columns: usize,
    pub width: usize,
    pub result: InferenceResult,
}

/// Where the non-carrier law of each investor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSource {
    /// Counted from the non-announcement trades.
    Estimated,
    /// Provided by the caller.
    Supplied,
}

/// Both windows of one company and the announcement-to-regular ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyResult {
    pub baseline_source: BaselineSource,
    /// Mean `(b0, b1, b2)` over investors of the law used.
    pub baseline_mean: [f64; 3],
    pub announcement: WindowResult,
    pub non_announcement: WindowResult,
    /// `None` when the regular-period estimate is zero.
    pub p_ratio: Option<f64>,
    pub q_ratio: Option<f64>,
}

impl CompanyResult {
    pub fn theta_ann(&self) -> SpreadParams {
        self.announcement.result.theta_hat
    }

    pub fn theta_non(&self) -> SpreadParams {
        self.non_announcement.result.theta_hat
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

/// Infers `(p, q)` from one window's trade matrix.
pub fn infer_window(
    matrix: &TradeMatrix,
    graph: &Graph,
    seeds: &SeedSchedule,
    baseline: &BaselineModel,
    config: &CompanyConfig,
) -> Result<WindowResult> {
    if matrix.investors() != graph.node_count() {
        return Err(Error::Dimension(format!(
            "trade matrix has {} investors, graph {} nodes",
            matrix.investors(),
            graph.node_count()
        )));
    }
    let mut spec = BootstrapSpec::for_columns(matrix.columns(), config.bootstrap_samples);
    spec.sampling = config.sampling;
    if let Some(w) = config.width {
        spec.width = w;
    }
    let boot_seed = derive_seed(config.base_seed, &[Purpose::Bootstrap as u64, matrix.mode as u64]);
    let (train, test) = gt_features_from_trades(matrix, &spec, config.kind, boot_seed)?;
    let ctx = ObjectiveContext::new(
        graph.clone(),
        seeds.clone(),
        baseline.clone(),
        GroundTruth::Split { train, test },
        spec.width,
        config.classifier,
        config.base_seed,
    )?;
    Ok(WindowResult {
        mode: matrix.mode,
        columns: matrix.columns(),
        dropped_columns: matrix.dropped,
        width: spec.width,
        result: infer(&ctx, &config.inference, None)?,
    })
}

/// Runs inference separately on the pre-announcement and non-announcement
/// windows, with baselines estimated from the non-announcement trades.
pub fn infer_company(
    trades: &[TradeRecord],
    calendar: &MarketCalendar,
    graph: &Graph,
    seeds: &SeedSchedule,
    config: &CompanyConfig,
) -> Result<CompanyResult> {
    let model = estimate_baselines(trades, calendar, graph.node_count())?.to_model()?;
    run_company(
        trades,
        calendar,
        graph,
        seeds,
        &model,
        BaselineSource::Estimated,
        config,
    )
}

/// [`infer_company`] with a given non-carrier law in place of the estimate.
pub fn infer_company_with_baselines(
    trades: &[TradeRecord],
    calendar: &MarketCalendar,
    graph: &Graph,
    seeds: &SeedSchedule,
    baselines: &BaselineModel,
    config: &CompanyConfig,
) -> Result<CompanyResult> {
    run_company(
        trades,
        calendar,
        graph,
        seeds,
        baselines,
        BaselineSource::Supplied,
        config,
    )
}

fn run_company(
    trades: &[TradeRecord],
    calendar: &MarketCalendar,
    graph: &Graph,
    seeds: &SeedSchedule,
    model: &BaselineModel,
    baseline_source: BaselineSource,
    config: &CompanyConfig,
) -> Result<CompanyResult> {
    let investors = graph.node_count();
    if model.len() != investors {
        return Err(Error::Dimension(format!(
            "{} baselines for {investors} investors",
            model.len()
        )));
    }
    let run = |mode| -> Result<WindowResult> {
        let m = build_trade_matrix(trades, calendar, investors, mode)?;
        if m.columns() == 0 {
            return Err(Error::Calendar(format!("the {mode} window has no usable days")));
        }
        infer_window(&m, graph, seeds, model, config)
    };
    let announcement = run(WindowMode::PreAnnouncement)?;
    let non_announcement = run(WindowMode::NonAnnouncement)?;
    let (a, n) = (announcement.result.theta_hat, non_announcement.result.theta_hat);
    let mut baseline_mean = [0.0; 3];
    for t in model.triples() {
        (0..3).for_each(|k| baseline_mean[k] += t[k] / investors as f64);
    }
    Ok(CompanyResult {
        baseline_source,
        baseline_mean,
        p_ratio: ratio(a.p, n.p),
        q_ratio: ratio(a.q, n.q),
        announcement,
        non_announcement,
    })
}

/// Seed schedule for a board: members activated one step apart in id order.
pub fn board_schedule(members: &[usize]) -> Result<SeedSchedule> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    SeedSchedule::staggered(&sorted)
}
