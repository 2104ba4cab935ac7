//! Profitability encoding of trades, investor baselines and bootstrap
//! ground-truth features.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::market::{MarketCalendar, TradeIndex, TradeRecord, DELTA_NON, DELTA_PRE};
use crate::cascade::{BaselineModel, Symptom};
use crate::error::{Error, Result};
use crate::features::{FeatureSet, StatisticKind, SymptomMatrix};
use crate::rng::{cascade_index, substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    PreAnnouncement,
    NonAnnouncement,
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::PreAnnouncement => "pre_announcement",
            WindowMode::NonAnnouncement => "non_announcement",
        })
    }
}

/// Investors by event days, entries in `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeMatrix {
    pub mode: WindowMode,
    /// Calendar day of each column.
    pub days: Vec<i64>,
    pub symptoms: SymptomMatrix,
    /// Event days left out because the calendar ends before their lookahead.
    pub dropped: usize,
}

impl TradeMatrix {
    pub fn columns(&self) -> usize {
        self.days.len()
    }

    pub fn investors(&self) -> usize {
        self.symptoms.entities()
    }
}

fn encode(mean_price: Option<f64>, later: f64) -> Symptom {
    match mean_price {
        Some(p) if p < later => 1,
        Some(_) => -1,
        None => 0,
    }
}

/// Encodes every event day of `mode` as a column of profitability symptoms.
///
/// Pre-announcement columns use the mean price on the investor's last trading
/// day inside the window, compared with the market one day after the
/// announcement. Non-announcement columns use the mean price on the day
/// itself, compared five days later.
pub fn build_trade_matrix(
    trades: &[TradeRecord],
    calendar: &MarketCalendar,
    investors: usize,
    mode: WindowMode,
) -> Result<TradeMatrix> {
    let index = TradeIndex::build(trades, calendar, investors)?;
    let (events, delta) = match mode {
        WindowMode::PreAnnouncement => (calendar.announcement_positions(), DELTA_PRE),
        WindowMode::NonAnnouncement => (calendar.non_announcement_positions(), DELTA_NON),
    };
    let mut rows = vec![Vec::new(); investors];
    let mut days = Vec::new();
    let mut dropped = 0;
    for t in events {
        let Some(later) = calendar.lookahead(t, delta) else {
            dropped += 1;
            continue;
        };
        days.push(calendar.day(t));
        for (u, row) in rows.iter_mut().enumerate() {
            let p = match mode {
                WindowMode::PreAnnouncement => index.last_in(u, calendar.window(t)),
                WindowMode::NonAnnouncement => index.mean_price(u, t),
            };
            row.push(encode(p, later));
        }
    }
    let symptoms = if investors == 0 {
        SymptomMatrix::zeros(0, days.len())
    } else {
        SymptomMatrix::from_rows(rows)?
    };
    Ok(TradeMatrix {
        mode,
        days,
        symptoms,
        dropped,
    })
}

/// Per-investor counts of no-trade, profitable and losing non-announcement days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvestorBaseline {
    /// Non-announcement days counted (n_x).
    pub days: usize,
    /// `[none, profitable, losing]` per investor.
    pub counts: Vec<[usize; 3]>,
}

impl InvestorBaseline {
    pub fn triple(&self, investor: usize) -> [f64; 3] {
        let n = self.days as f64;
        let c = self.counts[investor];
        [c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n]
    }

    pub fn to_model(&self) -> Result<BaselineModel> {
        BaselineModel::from_triples((0..self.counts.len()).map(|u| self.triple(u)).collect())
    }

    /// Average triple over investors.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for u in 0..self.counts.len() {
            let t = self.triple(u);
            (0..3).for_each(|k| m[k] += t[k]);
        }
        m.map(|x| x / self.counts.len() as f64)
    }
}

/// Baseline symptom law of each investor from the non-announcement days.
pub fn estimate_baselines(
    trades: &[TradeRecord],
    calendar: &MarketCalendar,
    investors: usize,
) -> Result<InvestorBaseline> {
    let m = build_trade_matrix(trades, calendar, investors, WindowMode::NonAnnouncement)?;
    if m.columns() == 0 {
        return Err(Error::Calendar("no non-announcement day has a lookahead price".into()));
    }
    let counts = (0..investors)
        .map(|u| {
            let mut c = [0usize; 3];
            for &z in m.symptoms.row(u) {
                c[match z {
                    1 => 1,
                    -1 => 2,
                    _ => 0,
                }] += 1;
            }
            c
        })
        .collect();
    Ok(InvestorBaseline {
        days: m.columns(),
        counts,
    })
}

/// How the columns of one bootstrap sample are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSampling {
    /// Independent draws with replacement.
    #[default]
    Replacement,
    /// A run of consecutive columns at a random offset, wrapping around
    /// when the part is shorter than the sample.
    Contiguous,
}

impl FromStr for ColumnSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replacement" => Ok(ColumnSampling::Replacement),
            "contiguous" => Ok(ColumnSampling::Contiguous),
            _ => Err(Error::Parameter(format!("unknown column sampling `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    /// Samples drawn for each of the train and test parts (B).
    pub samples: usize,
    /// Columns per sample (m).
    pub width: usize,
    pub sampling: ColumnSampling,
}

impl BootstrapSpec {
    /// `samples` per part and width `min(20, n1)` for a matrix of `columns` columns.
    pub fn for_columns(columns: usize, samples: usize) -> Self {
        BootstrapSpec {
            samples,
            width: train_columns(columns).min(20),
            sampling: ColumnSampling::Replacement,
        }
    }
}

/// Number of leading columns reserved for training, `floor(0.6 n)`.
pub fn train_columns(n: usize) -> usize {
    n * 3 / 5
}

fn sample_part(
    matrix: &SymptomMatrix,
    cols: std::ops::Range<usize>,
    spec: &BootstrapSpec,
    kind: StatisticKind,
    seed: u64,
    part: usize,
) -> Result<FeatureSet> {
    let len = cols.len();
    let e = matrix.entities();
    let mut blocks = Vec::with_capacity(spec.samples);
    let mut picked = vec![0usize; spec.width];
    let mut row = vec![0 as Symptom; spec.width];
    for j in 0..spec.samples {
        let mut rng = substream(seed, Purpose::Bootstrap, cascade_index(part, j));
        match spec.sampling {
            ColumnSampling::Replacement => {
                picked
                    .iter_mut()
                    .for_each(|c| *c = cols.start + rng.random_range(0..len));
            }
            ColumnSampling::Contiguous => {
                let start = if spec.width <= len {
                    rng.random_range(0..=len - spec.width)
                } else {
                    rng.random_range(0..len)
                };
                picked
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, c)| *c = cols.start + (start + k) % len);
            }
        }
        let mut block = Vec::with_capacity(e * kind.dim());
        for u in 0..e {
            for (dst, &c) in row.iter_mut().zip(&picked) {
                *dst = matrix.get(u, c);
            }
            kind.summarize_into(&row, &mut block)?;
        }
        blocks.push(block);
    }
    FeatureSet::from_sample_blocks(e, kind, 0, None, spec.width, &blocks)
}

/// Observed training and test features from disjoint column ranges.
///
/// Training samples draw from the first `floor(0.6 n)` columns, test samples
/// from the rest. Both sets carry label 0.
pub fn gt_features_from_trades(
    matrix: &TradeMatrix,
    spec: &BootstrapSpec,
    kind: StatisticKind,
    seed: u64,
) -> Result<(FeatureSet, FeatureSet)> {
    let n = matrix.columns();
    let n1 = train_columns(n);
    if n1 == 0 || n1 == n {
        return Err(Error::Split(format!("{n} columns leave an empty train or test part")));
    }
    if spec.samples == 0 {
        return Err(Error::Parameter("bootstrap sample count must be at least 1".into()));
    }
    if spec.width < kind.min_cascades() || spec.width > n {
        return Err(Error::Parameter(format!(
            "sample width {} must lie in {}..={n}",
            spec.width,
            kind.min_cascades()
        )));
    }
    let train = sample_part(&matrix.symptoms, 0..n1, spec, kind, seed, 0)?;
    let test = sample_part(&matrix.symptoms, n1..n, spec, kind, seed, 1)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::market::CalendarDay;
    use crate::features::reduced_summary;
    use proptest::prelude::*;

    fn calendar(len: usize, announcements: &[usize], price: impl Fn(usize) -> f64) -> MarketCalendar {
        MarketCalendar::new(
            (0..len)
                .map(|i| CalendarDay {
                    day: i as i64,
                    price: price(i),
                    announcement: announcements.contains(&i),
                })
                .collect(),
        )
        .unwrap()
    }

    fn trade(u: usize, day: i64, p: f64) -> TradeRecord {
        TradeRecord::new(u, day, p).unwrap()
    }

    #[test]
    fn profitability_encoding() {
        // price 12 from day 6 on; announcement on day 5 compares with day 6
        let c = calendar(8, &[5], |i| if i >= 6 { 12.0 } else { 10.0 });
        let m = build_trade_matrix(
            &[trade(0, 4, 10.0), trade(1, 4, 12.0), trade(2, 0, 1.0)],
            &c,
            3,
            WindowMode::PreAnnouncement,
        )
        .unwrap();
        assert_eq!(m.days, vec![5]);
        assert_eq!(m.symptoms.get(0, 0), 1);
        assert_eq!(m.symptoms.get(1, 0), -1);
        // day 0 lies outside the four-day window before day 5
        assert_eq!(m.symptoms.get(2, 0), 0);
    }

    #[test]
    fn window_uses_last_trading_day() {
        let c = calendar(8, &[5], |i| if i == 6 { 10.0 } else { 5.0 });
        // profitable early trade, losing later trade: the later one counts
        let m = build_trade_matrix(
            &[trade(0, 2, 9.0), trade(0, 3, 11.0), trade(0, 3, 10.0)],
            &c,
            1,
            WindowMode::PreAnnouncement,
        )
        .unwrap();
        assert_eq!(m.symptoms.get(0, 0), -1);
    }

    #[test]
    fn missing_lookahead_drops_column() {
        let c = calendar(6, &[5], |_| 1.0);
        let m = build_trade_matrix(&[], &c, 2, WindowMode::PreAnnouncement).unwrap();
        assert_eq!((m.columns(), m.dropped), (0, 1));
        let c = calendar(4, &[], |_| 1.0);
        let m = build_trade_matrix(&[], &c, 2, WindowMode::NonAnnouncement).unwrap();
        assert_eq!((m.columns(), m.dropped), (0, 4));
    }

    #[test]
    fn announcement_day_trades_are_ignored() {
        let c = calendar(20, &[8], |i| i as f64 + 1.0);
        for mode in [WindowMode::PreAnnouncement, WindowMode::NonAnnouncement] {
            let m = build_trade_matrix(&[trade(0, 8, 0.5)], &c, 1, mode).unwrap();
            assert!(m.symptoms.row(0).iter().all(|&z| z == 0), "{mode}");
        }
    }

    #[test]
    fn baseline_counts() {
        // 105 days without announcements: the last five lack a lookahead
        let c = calendar(105, &[], |_| 10.0);
        let mut trades: Vec<TradeRecord> = (0..2).map(|d| trade(0, d, 9.0)).collect();
        trades.extend((2..5).map(|d| trade(0, d, 11.0)));
        let b = estimate_baselines(&trades, &c, 2).unwrap();
        assert_eq!(b.days, 100);
        assert_eq!(b.triple(0), [0.95, 0.02, 0.03]);
        assert_eq!(b.triple(1), [1.0, 0.0, 0.0]);
        assert!(b.to_model().is_ok());
        let empty = calendar(3, &[], |_| 1.0);
        assert!(matches!(estimate_baselines(&[], &empty, 1), Err(Error::Calendar(_))));
    }

    fn matrix_of(rows: Vec<Vec<Symptom>>) -> TradeMatrix {
        let n = rows[0].len();
        TradeMatrix {
            mode: WindowMode::PreAnnouncement,
            days: (0..n as i64).collect(),
            symptoms: SymptomMatrix::from_rows(rows).unwrap(),
            dropped: 0,
        }
    }

    #[test]
    fn zero_matrix_gives_no_symptom_rows() {
        let m = matrix_of(vec![vec![0; 10]; 3]);
        let (train, test) =
            gt_features_from_trades(&m, &BootstrapSpec::for_columns(10, 4), StatisticKind::Reduced, 1).unwrap();
        for set in [&train, &test] {
            assert_eq!(set.samples(), 4);
            assert_eq!(set.label(), 0);
            for u in 0..3 {
                assert!(set.entity_rows(u).chunks(3).all(|r| r == [0.0, 0.0, 1.0]));
            }
        }
    }

    #[test]
    fn exhaustive_sample_equals_direct_summary() {
        let row: Vec<Symptom> = vec![1, 0, -1, 1, 1, 0, 0, 0, -1, 1];
        let m = matrix_of(vec![row.clone()]);
        let spec = BootstrapSpec {
            samples: 1,
            width: 6,
            sampling: ColumnSampling::Contiguous,
        };
        let (train, _) = gt_features_from_trades(&m, &spec, StatisticKind::Reduced, 5).unwrap();
        assert_eq!(train.row(0, 0), reduced_summary(&row[..6]).unwrap());
    }

    #[test]
    fn split_needs_both_parts() {
        let m = matrix_of(vec![vec![0; 1]]);
        let spec = BootstrapSpec {
            samples: 1,
            width: 1,
            sampling: ColumnSampling::Replacement,
        };
        assert!(matches!(
            gt_features_from_trades(&m, &spec, StatisticKind::Reduced, 0),
            Err(Error::Split(_))
        ));
    }

    proptest! {
        #[test]
        fn parts_draw_from_disjoint_columns(n in 4usize..40, seed in any::<u64>()) {
            // column c holds +1 only in row c, so a nonzero f_pos reveals which columns were drawn
            let rows: Vec<Vec<Symptom>> = (0..n).map(|r| (0..n).map(|c| Symptom::from(r == c)).collect()).collect();
            let m = matrix_of(rows);
            let spec = BootstrapSpec { samples: 6, width: 2, sampling: ColumnSampling::Replacement };
            let (train, test) = gt_features_from_trades(&m, &spec, StatisticKind::Reduced, seed).unwrap();
            let n1 = train_columns(n);
            for u in 0..n {
                let hit = |s: &FeatureSet| s.entity_rows(u).chunks(3).any(|r| r[0] > 0.0);
                if u < n1 { prop_assert!(!hit(&test)); } else { prop_assert!(!hit(&train)); }
            }
        }

        #[test]
        fn baselines_ignore_trade_order(perm_seed in any::<u64>()) {
            let c = calendar(40, &[10, 25], |i| 10.0 + (i % 7) as f64);
            let mut trades: Vec<TradeRecord> = (0..60).map(|k| trade(k % 4, (k * 7 % 40) as i64, 8.0 + (k % 5) as f64)).collect();
            let a = estimate_baselines(&trades, &c, 4).unwrap();
            let mut rng = substream(perm_seed, Purpose::Training, 0);
            for i in (1..trades.len()).rev() {
                trades.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
            }
            prop_assert_eq!(estimate_baselines(&trades, &c, 4).unwrap(), a);
        }
    }
}
