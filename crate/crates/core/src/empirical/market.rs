//! Trade records and the trading calendar, with their text formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::cascade::BaselineModel;
use crate::error::{Error, Result};

/// Trading days before an announcement that form its window.
pub const PRE_WINDOW: usize = 4;
/// Lookahead for pre-announcement columns, counted from the announcement day.
pub const DELTA_PRE: usize = 1;
/// Lookahead for non-announcement columns.
pub const DELTA_NON: usize = 5;

/// One executed trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub investor: usize,
    pub day: i64,
    pub price: f64,
}

impl TradeRecord {
    pub fn new(investor: usize, day: i64, price: f64) -> Result<Self> {
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Parameter(format!("trade price must be positive, got {price}")));
        }
        Ok(TradeRecord { investor, day, price })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarDay {
    pub day: i64,
    pub price: f64,
    pub announcement: bool,
}

/// Ordered trading days with the market price of each and the announcement flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCalendar {
    days: Vec<CalendarDay>,
}

impl MarketCalendar {
    pub fn new(days: Vec<CalendarDay>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Calendar("calendar has no trading days".into()));
        }
        for w in days.windows(2) {
            if w[1].day <= w[0].day {
                return Err(Error::Calendar(format!(
                    "day {} does not follow day {}",
                    w[1].day, w[0].day
                )));
            }
        }
        if let Some(d) = days.iter().find(|d| !(d.price.is_finite() && d.price > 0.0)) {
            return Err(Error::Calendar(format!(
                "market price on day {} must be positive",
                d.day
            )));
        }
        Ok(MarketCalendar { days })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[CalendarDay] {
        &self.days
    }

    pub fn day(&self, pos: usize) -> i64 {
        self.days[pos].day
    }

    pub fn price(&self, pos: usize) -> f64 {
        self.days[pos].price
    }

    /// Position of a calendar day in trading order.
    pub fn position(&self, day: i64) -> Option<usize> {
        self.days.binary_search_by_key(&day, |d| d.day).ok()
    }

    pub fn announcement_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.days[i].announcement).collect()
    }

    /// Positions of the trading days preceding announcement position `a`.
    pub fn window(&self, a: usize) -> std::ops::Range<usize> {
        a.saturating_sub(PRE_WINDOW)..a
    }

    /// Trading days outside announcements and their windows.
    pub fn non_announcement_positions(&self) -> Vec<usize> {
        let mut excluded = vec![false; self.len()];
        for a in self.announcement_positions() {
            excluded[a] = true;
            for w in self.window(a) {
                excluded[w] = true;
            }
        }
        (0..self.len()).filter(|&i| !excluded[i]).collect()
    }

    /// Price `delta` trading days after position `pos`, if the calendar reaches it.
    pub fn lookahead(&self, pos: usize, delta: usize) -> Option<f64> {
        self.days.get(pos + delta).map(|d| d.price)
    }

    /// Reads `day,market_price,is_announcement` rows after a header line.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut days = Vec::new();
        for (line, fields) in data_rows(input, 3)? {
            let day = parse_field::<i64>(&fields[0], line, "day")?;
            let price = parse_field::<f64>(&fields[1], line, "market_price")?;
            let announcement = match fields[2].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("is_announcement must be 0 or 1, got `{other}`"),
                    })
                }
            };
            days.push(CalendarDay {
                day,
                price,
                announcement,
            });
        }
        Self::new(days)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("day,market_price,is_announcement\n");
        for d in &self.days {
            let _ = writeln!(s, "{},{},{}", d.day, d.price, u8::from(d.announcement));
        }
        s
    }
}

/// Reads `investor_id,day,price` rows after a header line.
pub fn read_trades<R: BufRead>(input: R) -> Result<Vec<TradeRecord>> {
    data_rows(input, 3)?
        .into_iter()
        .map(|(line, f)| {
            let investor = parse_field::<usize>(&f[0], line, "investor_id")?;
            let day = parse_field::<i64>(&f[1], line, "day")?;
            let price = parse_field::<f64>(&f[2], line, "price")?;
            TradeRecord::new(investor, day, price).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn trades_to_csv(trades: &[TradeRecord]) -> String {
    let mut s = String::from("investor_id,day,price\n");
    for t in trades {
        let _ = writeln!(s, "{},{},{}", t.investor, t.day, t.price);
    }
    s
}

/// Reads `investor_id,b0,b1,b2` rows covering investors `0..n` exactly once.
pub fn read_baselines<R: BufRead>(input: R) -> Result<BaselineModel> {
    let rows = data_rows(input, 4)?;
    let mut triples: Vec<Option<[f64; 3]>> = vec![None; rows.len()];
    for (line, f) in rows {
        let u = parse_field::<usize>(&f[0], line, "investor_id")?;
        let mut t = [0.0; 3];
        for k in 0..3 {
            t[k] = parse_field::<f64>(&f[k + 1], line, "probability")?;
        }
        match triples.get_mut(u) {
            Some(slot @ None) => *slot = Some(t),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("investor {u} is repeated or out of range"),
                })
            }
        }
    }
    BaselineModel::from_triples(triples.into_iter().map(|t| t.expect("every slot filled")).collect())
}

pub fn baselines_to_csv(model: &BaselineModel) -> String {
    let mut s = String::from("investor_id,b0,b1,b2\n");
    for (u, t) in model.triples().iter().enumerate() {
        let _ = writeln!(s, "{u},{},{},{}", t[0], t[1], t[2]);
    }
    s
}

fn data_rows<R: BufRead>(input: R, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let fields: Vec<String> = t.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push((line_no, fields));
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {name} `{s}`"),
    })
}

/// Mean trade price per (investor, calendar position).
#[derive(Debug, Default)]
pub(crate) struct TradeIndex {
    mean: BTreeMap<(usize, usize), f64>,
}

impl TradeIndex {
    pub(crate) fn build(trades: &[TradeRecord], calendar: &MarketCalendar, investors: usize) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for t in trades {
            if t.investor >= investors {
                return Err(Error::Dimension(format!(
                    "trade by investor {} but only {investors} investors",
                    t.investor
                )));
            }
            let pos = calendar
                .position(t.day)
                .ok_or_else(|| Error::Calendar(format!("trade on day {} outside the calendar", t.day)))?;
            acc.entry((t.investor, pos)).or_default().push(t.price);
        }
        // sorted before summing so the mean does not depend on record order
        let mean = acc
            .into_iter()
            .map(|(k, mut prices)| {
                prices.sort_by(f64::total_cmp);
                (k, prices.iter().sum::<f64>() / prices.len() as f64)
            })
            .collect();
        Ok(TradeIndex { mean })
    }

    pub(crate) fn mean_price(&self, investor: usize, pos: usize) -> Option<f64> {
        self.mean.get(&(investor, pos)).copied()
    }

    /// Mean price on the latest position in `range` where the investor traded.
    pub(crate) fn last_in(&self, investor: usize, range: std::ops::Range<usize>) -> Option<f64> {
        self.mean
            .range((investor, range.start)..(investor, range.end))
            .next_back()
            .map(|(_, &p)| p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn calendar(flags: &[bool]) -> MarketCalendar {
        MarketCalendar::new(
            flags
                .iter()
                .enumerate()
                .map(|(i, &a)| CalendarDay {
                    day: 10 + i as i64,
                    price: 100.0 + i as f64,
                    announcement: a,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn windows_and_non_announcement_days() {
        let mut flags = vec![false; 12];
        flags[6] = true;
        let c = calendar(&flags);
        assert_eq!(c.window(6), 2..6);
        assert_eq!(c.window(2), 0..2);
        assert_eq!(c.non_announcement_positions(), vec![0, 1, 7, 8, 9, 10, 11]);
        assert_eq!(c.lookahead(6, 1), Some(107.0));
        assert_eq!(c.lookahead(9, 5), None);
    }

    #[test]
    fn calendar_rejects_disorder_and_bad_prices() {
        let d = |day, price| CalendarDay {
            day,
            price,
            announcement: false,
        };
        assert!(MarketCalendar::new(vec![d(2, 1.0), d(1, 1.0)]).is_err());
        assert!(MarketCalendar::new(vec![d(1, 0.0)]).is_err());
        assert!(MarketCalendar::new(vec![]).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let c = calendar(&[false, true, false]);
        assert_eq!(MarketCalendar::read_csv(Cursor::new(c.to_csv())).unwrap(), c);
        let trades = vec![
            TradeRecord::new(3, 11, 9.5).unwrap(),
            TradeRecord::new(0, 12, 101.25).unwrap(),
        ];
        assert_eq!(read_trades(Cursor::new(trades_to_csv(&trades))).unwrap(), trades);
    }

    #[test]
    fn baselines_round_trip() {
        let b = BaselineModel::from_triples(vec![[0.9, 0.05, 0.05], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(read_baselines(Cursor::new(baselines_to_csv(&b))).unwrap(), b);
        assert!(read_baselines(Cursor::new("investor_id,b0,b1,b2\n1,1,0,0\n1,1,0,0\n")).is_err());
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "investor_id,day,price\n1,2,3\n1,x,3\n";
        match read_trades(Cursor::new(bad)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_trades(Cursor::new("investor_id,day,price\n1,2,-3\n")).is_err());
        assert!(MarketCalendar::read_csv(Cursor::new("day,market_price,is_announcement\n1,5,2\n")).is_err());
    }

    #[test]
    fn trade_index_averages_and_finds_last_day() {
        let c = calendar(&[false; 6]);
        let t = |u, day, p| TradeRecord::new(u, day, p).unwrap();
        let idx = TradeIndex::build(&[t(0, 11, 4.0), t(0, 11, 6.0), t(0, 13, 1.0), t(1, 14, 2.0)], &c, 2).unwrap();
        assert_eq!(idx.mean_price(0, 1), Some(5.0));
        assert_eq!(idx.last_in(0, 0..3), Some(5.0));
        assert_eq!(idx.last_in(0, 0..4), Some(1.0));
        assert_eq!(idx.last_in(1, 0..4), None);
        assert!(TradeIndex::build(&[t(2, 11, 1.0)], &c, 2).is_err());
        assert!(TradeIndex::build(&[t(0, 99, 1.0)], &c, 2).is_err());
    }
}
