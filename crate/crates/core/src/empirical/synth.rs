//! Synthetic trading data with planted cascades and known parameters.

use serde::{Deserialize, Serialize};

use super::market::{CalendarDay, MarketCalendar, TradeRecord, DELTA_NON, DELTA_PRE, PRE_WINDOW};
use super::matrix::{TradeMatrix, WindowMode};
use crate::cascade::{BaselineModel, CascadeRng, CascadeSimulator, SpreadParams, Symptom};
use crate::error::{Error, Result};
use crate::features::SymptomMatrix;
use crate::graph::{Graph, SeedSchedule};
use crate::rng::{derive_seed, substream, unit, Purpose};

const TAG_PRE: u64 = 0x41;
const TAG_NON: u64 = 0x4e;

/// Trading days and the positions of announcements among them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarLayout {
    pub days: usize,
    pub announcements: Vec<usize>,
}

impl CalendarLayout {
    /// `count` announcements spread evenly, each with a full window before
    /// it and a lookahead day after it.
    pub fn evenly_spaced(days: usize, count: usize) -> Result<Self> {
        let usable = days.saturating_sub(PRE_WINDOW + DELTA_PRE);
        if count == 0 || usable < count {
            return Err(Error::Parameter(format!(
                "cannot place {count} announcements in {days} days"
            )));
        }
        let step = usable as f64 / count as f64;
        let announcements = (0..count).map(|k| PRE_WINDOW + (k as f64 * step) as usize).collect();
        let layout = CalendarLayout { days, announcements };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        let mut prev: Option<usize> = None;
        for &a in &self.announcements {
            if a < PRE_WINDOW || a + DELTA_PRE >= self.days {
                return Err(Error::Parameter(format!(
                    "announcement at {a} lacks a full window or lookahead"
                )));
            }
            if prev.is_some_and(|p| a <= p + PRE_WINDOW) {
                return Err(Error::Parameter(format!(
                    "announcement at {a} overlaps the previous window"
                )));
            }
            prev = Some(a);
        }
        Ok(())
    }
}

/// Surrogate output: trades and calendar, plus the symptoms that were planted.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub trades: Vec<TradeRecord>,
    pub calendar: MarketCalendar,
    pub planted_pre: TradeMatrix,
    pub planted_non: TradeMatrix,
}

/// Generates trades whose profitability encoding reproduces planted hidden
/// cascades: one per announcement at `theta_ann`, one per non-announcement
/// day at `theta_non`, with `baselines` as the non-carrier law.
///
/// A planted `+1` becomes a buy below the later market price, `-1` a buy at
/// or above it, `0` no trade. Pre-announcement trades sit on the last day of
/// the window.
#[allow(clippy::too_many_arguments)]
pub fn synth_trades(
    graph: &Graph,
    seeds: &SeedSchedule,
    theta_ann: SpreadParams,
    theta_non: SpreadParams,
    layout: &CalendarLayout,
    baselines: &BaselineModel,
    seed: u64,
) -> Result<SyntheticMarket> {
    SpreadParams::new(theta_ann.p, theta_ann.q)?;
    SpreadParams::new(theta_non.p, theta_non.q)?;
    layout.validate()?;
    let e = graph.node_count();
    if baselines.len() != e {
        return Err(Error::Dimension(format!(
            "{} baselines for {e} investors",
            baselines.len()
        )));
    }

    let mut market = substream(seed, Purpose::Market, 0);
    let mut price = 100.0;
    let days: Vec<CalendarDay> = (0..layout.days)
        .map(|i| {
            let d = CalendarDay {
                day: i as i64,
                price,
                announcement: layout.announcements.contains(&i),
            };
            price *= (0.02 * (unit(&mut market) - 0.5)).exp();
            d
        })
        .collect();
    let calendar = MarketCalendar::new(days)?;

    let mut sim = CascadeSimulator::new(graph, seeds)?;
    let mut column = vec![0 as Symptom; e];
    let mut trades = Vec::new();
    let mut plant =
        |theta: SpreadParams, tag: u64, k: usize, trade_pos: usize, later: f64, trades: &mut Vec<TradeRecord>| {
            let mut rng = CascadeRng::new(derive_seed(seed, &[tag]), k as u64);
            sim.simulate_into(theta, baselines, &mut rng, &mut column);
            let mut prices = substream(seed, Purpose::Market, derive_seed(tag, &[k as u64]));
            for (u, &z) in column.iter().enumerate() {
                if z == 0 {
                    continue;
                }
                let count = if unit(&mut prices) < 0.3 { 2 } else { 1 };
                for _ in 0..count {
                    let margin = 0.02 * unit(&mut prices);
                    let p = if z > 0 {
                        later * (0.998 - margin)
                    } else {
                        later * (1.0 + margin)
                    };
                    trades.push(TradeRecord {
                        investor: u,
                        day: trade_pos as i64,
                        price: p,
                    });
                }
            }
            column.clone()
        };

    let mut pre_cols = Vec::new();
    let mut pre_days = Vec::new();
    for (k, &a) in layout.announcements.iter().enumerate() {
        let later = calendar.price(a + DELTA_PRE);
        pre_cols.push(plant(theta_ann, TAG_PRE, k, a - 1, later, &mut trades));
        pre_days.push(a as i64);
    }
    let mut non_cols = Vec::new();
    let mut non_days = Vec::new();
    for (k, t) in calendar.non_announcement_positions().into_iter().enumerate() {
        let Some(later) = calendar.lookahead(t, DELTA_NON) else {
            continue;
        };
        non_cols.push(plant(theta_non, TAG_NON, k, t, later, &mut trades));
        non_days.push(t as i64);
    }

    let to_matrix = |mode, days: Vec<i64>, cols: Vec<Vec<Symptom>>| -> TradeMatrix {
        let mut m = SymptomMatrix::zeros(e, cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j, c);
        }
        TradeMatrix {
            mode,
            days,
            symptoms: m,
            dropped: 0,
        }
    };
    let dropped = calendar.non_announcement_positions().len() - non_cols.len();
    let mut planted_non = to_matrix(WindowMode::NonAnnouncement, non_days, non_cols);
    planted_non.dropped = dropped;
    Ok(SyntheticMarket {
        trades,
        planted_pre: to_matrix(WindowMode::PreAnnouncement, pre_days, pre_cols),
        planted_non,
        calendar,
    })
}

/// Non-carrier laws in the sparse-trading regime: each investor trades on a
/// small fraction of days, split evenly between profits and losses.
pub fn sparse_baselines(investors: usize, seed: u64) -> Result<BaselineModel> {
    let mut rng = substream(seed, Purpose::Market, u64::MAX);
    BaselineModel::from_triples(
        (0..investors)
            .map(|_| {
                let b1 = 0.003 + 0.004 * unit(&mut rng);
                let b2 = 0.003 + 0.004 * unit(&mut rng);
                [1.0 - b1 - b2, b1, b2]
            })
            .collect(),
    )
}
