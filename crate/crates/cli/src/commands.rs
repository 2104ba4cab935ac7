//! One function per subcommand. Each reads the resolved configuration and
//! writes its outputs under `cfg.out`.

use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use dcinfer::cascade::{CascadeRng, CascadeSimulator};
use dcinfer::empirical::{
    baselines_to_csv, board_schedule, infer_company, infer_company_with_baselines, read_trades, sparse_baselines,
    synth_trades, trades_to_csv, CalendarLayout, CompanyConfig, CompanyResult, MarketCalendar,
};
use dcinfer::features::{generate_feature_set, SymptomMatrix};
use dcinfer::graph::hop_distances;
use dcinfer::optimize::{ground_truth_seed, infer, replicate, GroundTruth, ObjectiveContext, ReplicateSummary};
use dcinfer::report::symptom_distribution_report;
use dcinfer::rng::derive_seed;
use dcinfer::{BaselineModel, FeatureSet, Graph, SeedSchedule, SpreadParams, SyntheticSetup};

use crate::config::{read_baselines_file, ConfigError, RunConfig};
use crate::output::{write_atomic, write_json, Document};

const TAG_REPORT: u64 = 0x52;

fn require(ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError {
            violations: vec![message.to_string()],
        }
        .into())
    }
}

struct Model {
    graph: Graph,
    seeds: SeedSchedule,
    baseline: BaselineModel,
}

fn model(cfg: &RunConfig) -> Result<Model> {
    let graph = cfg.graph.build()?;
    let seeds = cfg.seeds.build()?;
    seeds.validate_for(&graph)?;
    let baseline = cfg.baseline.build(graph.node_count())?;
    Ok(Model { graph, seeds, baseline })
}

fn read_file<T>(
    path: &std::path::Path,
    parse: impl FnOnce(std::io::BufReader<std::fs::File>) -> dcinfer::Result<T>,
) -> Result<T> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    arcs: usize,
    symmetric: bool,
}

pub fn graph_gen(cfg: &RunConfig) -> Result<()> {
    let g = cfg.graph.build()?;
    write_atomic(&cfg.out, "graph.edges", g.to_edge_list().as_bytes())?;
    let summary = GraphSummary {
        nodes: g.node_count(),
        arcs: g.arc_count(),
        symmetric: g.is_symmetric(),
    };
    write_json(
        &cfg.out,
        "graph.json",
        &Document {
            command: "graph-gen",
            seed: cfg.seed,
            config: cfg,
            result: summary,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    theta: SpreadParams,
    cascades: usize,
    /// Entities with each symptom, summed over cascades: `[-1, 0, +1]`.
    symptom_totals: [usize; 3],
}

/// One symptom matrix at `truth`, one column per cascade.
pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let theta = cfg.truth.context("simulate needs `truth`")?;
    let m = model(cfg)?;
    let e = m.graph.node_count();
    let n = cfg.features.cascades;
    let mut sim = CascadeSimulator::new(&m.graph, &m.seeds)?;
    let mut matrix = SymptomMatrix::zeros(e, n);
    let mut column = vec![0; e];
    let mut totals = [0usize; 3];
    let base = ground_truth_seed(cfg.seed);
    for j in 0..n {
        let mut rng = CascadeRng::new(base, j as u64);
        sim.simulate_into(theta, &m.baseline, &mut rng, &mut column);
        column.iter().for_each(|&z| totals[(z + 1) as usize] += 1);
        matrix.set_column(j, &column);
    }
    write_atomic(&cfg.out, "symptoms.txt", matrix.to_text().as_bytes())?;
    let summary = SimulateSummary {
        theta,
        cascades: n,
        symptom_totals: totals,
    };
    write_json(
        &cfg.out,
        "simulate.json",
        &Document {
            command: "simulate",
            seed: cfg.seed,
            config: cfg,
            result: summary,
        },
    )?;
    Ok(())
}

fn setup(cfg: &RunConfig, m: Model) -> Result<SyntheticSetup> {
    Ok(SyntheticSetup {
        graph: m.graph,
        seeds: m.seeds,
        baseline: m.baseline,
        features: cfg.features.spec(),
        classifier: cfg.classifier.spec()?,
    })
}

/// Repeated inference at one truth, or on a fixed observed feature file.
fn run_point(
    cfg: &RunConfig,
    setup: &SyntheticSetup,
    truth: Option<SpreadParams>,
    observed: Option<&FeatureSet>,
) -> Result<ReplicateSummary> {
    let inference = cfg.inference();
    Ok(replicate(cfg.seed, cfg.repeats, |seed| match observed {
        Some(gt) => {
            let ctx = ObjectiveContext::new(
                setup.graph.clone(),
                setup.seeds.clone(),
                setup.baseline.clone(),
                GroundTruth::Pooled(gt.clone()),
                setup.features.cascades,
                setup.classifier,
                seed,
            )?;
            infer(&ctx, &inference, truth)
        }
        None => setup.run(truth.expect("checked by caller"), &inference, seed),
    })?)
}

pub fn infer_cmd(cfg: &RunConfig) -> Result<()> {
    require(
        cfg.truth.is_some() || cfg.features.ground_truth.is_some(),
        "infer needs `truth` or `features.ground_truth`",
    )?;
    let setup = setup(cfg, model(cfg)?)?;
    let observed = match &cfg.features.ground_truth {
        Some(p) => Some(read_file(p, FeatureSet::read_csv)?),
        None => None,
    };
    if observed.is_none() {
        let truth = cfg.truth.expect("checked above");
        let ctx = setup.context(truth, dcinfer::optimize::replicate_seed(cfg.seed, 0))?;
        let mut csv = Vec::new();
        ctx.ground_truth.reference().write_csv(&mut csv)?;
        write_atomic(&cfg.out, "ground_truth.csv", &csv)?;
    }
    let summary = run_point(cfg, &setup, cfg.truth, observed.as_ref())?;
    write_json(
        &cfg.out,
        "infer.json",
        &Document {
            command: "infer",
            seed: cfg.seed,
            config: cfg,
            result: summary,
        },
    )?;
    Ok(())
}

pub const GRID_HEADER: &str = "p,q,p_hat_mean,p_hat_std,q_hat_mean,q_hat_std,mse_mean,ca_mean,evals,wall_seconds";

#[derive(Serialize)]
struct GridPoint {
    truth: SpreadParams,
    summary: ReplicateSummary,
}

pub fn grid(cfg: &RunConfig) -> Result<()> {
    require(
        !cfg.grid.points.is_empty(),
        "grid.points: at least one point is required",
    )?;
    let setup = setup(cfg, model(cfg)?)?;
    let mut csv = format!("{GRID_HEADER}\n");
    let mut points = Vec::new();
    for &[p, q] in &cfg.grid.points {
        let truth = SpreadParams::new(p, q)?;
        let start = Instant::now();
        let s = run_point(cfg, &setup, Some(truth), None)?;
        let wall = start.elapsed().as_secs_f64();
        csv.push_str(&format!(
            "{p},{q},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{wall:.3}\n",
            s.p_hat_mean,
            s.p_hat_std,
            s.q_hat_mean,
            s.q_hat_std,
            s.mse_mean.unwrap_or(f64::NAN),
            s.ca_mean,
            s.evaluations
        ));
        write_atomic(&cfg.out, "grid.csv", csv.as_bytes())?;
        points.push(GridPoint { truth, summary: s });
    }
    write_json(
        &cfg.out,
        "grid.json",
        &Document {
            command: "grid",
            seed: cfg.seed,
            config: cfg,
            result: points,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    investors: usize,
    trades: usize,
    announcements: usize,
    announcement_columns: usize,
    non_announcement_columns: usize,
    theta_ann: SpreadParams,
    theta_non: SpreadParams,
}

/// Surrogate market: trades, calendar and the planted non-carrier laws.
pub fn empirical_synth(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.empirical.synth;
    let graph = cfg.graph.build()?;
    let board = board_schedule(&s.board)?;
    let baselines = match &cfg.baseline.path {
        Some(p) => read_baselines_file(p)?,
        None => sparse_baselines(graph.node_count(), cfg.seed)?,
    };
    let layout = CalendarLayout::evenly_spaced(s.days, s.announcements)?;
    let market = synth_trades(&graph, &board, s.theta_ann, s.theta_non, &layout, &baselines, cfg.seed)?;
    write_atomic(&cfg.out, "trades.csv", trades_to_csv(&market.trades).as_bytes())?;
    write_atomic(&cfg.out, "calendar.csv", market.calendar.to_csv().as_bytes())?;
    write_atomic(&cfg.out, "baselines.csv", baselines_to_csv(&baselines).as_bytes())?;
    write_atomic(&cfg.out, "graph.edges", graph.to_edge_list().as_bytes())?;
    let summary = SynthSummary {
        investors: graph.node_count(),
        trades: market.trades.len(),
        announcements: s.announcements,
        announcement_columns: market.planted_pre.columns(),
        non_announcement_columns: market.planted_non.columns(),
        theta_ann: s.theta_ann,
        theta_non: s.theta_non,
    };
    write_json(
        &cfg.out,
        "synth.json",
        &Document {
            command: "empirical-synth",
            seed: cfg.seed,
            config: cfg,
            result: summary,
        },
    )?;
    Ok(())
}

pub const COMPANY_HEADER: &str =
    "company,baseline_source,columns_ann,columns_non,p_hat_ann,q_hat_ann,p_hat_non,q_hat_non,p_ratio,q_ratio,ca_ann,ca_non";

#[derive(Serialize)]
struct CompanyRecord {
    name: String,
    result: CompanyResult,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Both windows for every configured company.
pub fn empirical_infer(cfg: &RunConfig) -> Result<()> {
    require(
        !cfg.empirical.companies.is_empty(),
        "empirical.companies: at least one company is required",
    )?;
    let graph = cfg.graph.build()?;
    let company_cfg = CompanyConfig {
        bootstrap_samples: cfg.bootstrap_samples(),
        width: cfg.empirical.width,
        sampling: cfg.empirical.sampling,
        kind: cfg.features.kind,
        classifier: cfg.classifier.spec()?,
        inference: cfg.inference(),
        base_seed: cfg.seed,
    };
    let mut csv = format!("{COMPANY_HEADER}\n");
    let mut records = Vec::new();
    for c in &cfg.empirical.companies {
        let trades = read_file(&c.trades, read_trades)?;
        let calendar = read_file(&c.calendar, MarketCalendar::read_csv)?;
        let board = board_schedule(&c.board)?;
        let r = match &c.baselines {
            Some(p) => infer_company_with_baselines(
                &trades,
                &calendar,
                &graph,
                &board,
                &read_baselines_file(p)?,
                &company_cfg,
            ),
            None => infer_company(&trades, &calendar, &graph, &board, &company_cfg),
        }
        .with_context(|| format!("company {}", c.name))?;
        let (a, n) = (r.theta_ann(), r.theta_non());
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{:.6},{:.6}\n",
            c.name,
            serde_json::to_value(r.baseline_source)?.as_str().unwrap_or_default(),
            r.announcement.columns,
            r.non_announcement.columns,
            a.p,
            a.q,
            n.p,
            n.q,
            opt(r.p_ratio),
            opt(r.q_ratio),
            r.announcement.result.final_global_ca,
            r.non_announcement.result.final_global_ca,
        ));
        records.push(CompanyRecord {
            name: c.name.clone(),
            result: r,
        });
    }
    write_atomic(&cfg.out, "empirical.csv", csv.as_bytes())?;
    write_json(
        &cfg.out,
        "empirical.json",
        &Document {
            command: "empirical-infer",
            seed: cfg.seed,
            config: cfg,
            result: records,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ReportSummary {
    truth: SpreadParams,
    theta: SpreadParams,
    inferred: bool,
    max_ks: Option<f64>,
    report: dcinfer::report::DistributionReport,
}

/// Observed symptom distributions against those simulated at the estimate.
pub fn report(cfg: &RunConfig) -> Result<()> {
    let truth = cfg.truth.context("report needs `truth`")?;
    let m = model(cfg)?;
    let distances = hop_distances(&m.graph, &m.seeds)?;
    let degrees: Vec<usize> = if m.graph.is_symmetric() {
        m.graph.out_degrees()
    } else {
        m.graph
            .out_degrees()
            .iter()
            .zip(m.graph.in_degrees())
            .map(|(o, i)| o + i)
            .collect()
    };
    let (theta, inferred) = match cfg.report.theta {
        Some(t) => (t, false),
        None => {
            let setup = setup(
                cfg,
                Model {
                    graph: m.graph.clone(),
                    seeds: m.seeds.clone(),
                    baseline: m.baseline.clone(),
                },
            )?;
            (setup.run(truth, &cfg.inference(), cfg.seed)?.theta_hat, true)
        }
    };
    let mut spec = cfg.features.spec();
    spec.samples = cfg.report.samples;
    let observed = generate_feature_set(
        0,
        truth,
        &m.graph,
        &m.seeds,
        &m.baseline,
        &spec,
        derive_seed(cfg.seed, &[TAG_REPORT, 0]),
    )?;
    let simulated = generate_feature_set(
        1,
        theta,
        &m.graph,
        &m.seeds,
        &m.baseline,
        &spec,
        derive_seed(cfg.seed, &[TAG_REPORT, 1]),
    )?;
    let report = symptom_distribution_report(&observed, Some(&simulated), &distances, &degrees, &cfg.report.bucketing)?;
    write_atomic(&cfg.out, "report.csv", report.to_csv().as_bytes())?;
    let summary = ReportSummary {
        truth,
        theta,
        inferred,
        max_ks: report.max_ks(),
        report,
    };
    write_json(
        &cfg.out,
        "report.json",
        &Document {
            command: "report",
            seed: cfg.seed,
            config: cfg,
            result: summary,
        },
    )?;
    Ok(())
}
