//! Distribution of the positive-symptom frequency grouped by distance from
//! the seeds and by node degree.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;

/// How entities are grouped and how finely `f_pos` is binned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bucketing {
    /// Distances at or beyond this value share one bucket.
    pub max_distance: usize,
    /// Degrees up to this value are "low", above it "high".
    pub degree_split: usize,
    pub bins: usize,
}

impl Default for Bucketing {
    fn default() -> Self {
        Bucketing {
            max_distance: 4,
            degree_split: 3,
            bins: 10,
        }
    }
}

impl Bucketing {
    fn distance_label(&self, d: Option<usize>) -> String {
        match d {
            None => "unreachable".into(),
            Some(d) if d >= self.max_distance => format!("{}+", self.max_distance),
            Some(d) => d.to_string(),
        }
    }

    fn distance_rank(&self, d: Option<usize>) -> usize {
        d.map_or(usize::MAX, |d| d.min(self.max_distance))
    }

    fn degree_label(&self, k: usize) -> String {
        if k <= self.degree_split {
            format!("<={}", self.degree_split)
        } else {
            format!(">{}", self.degree_split)
        }
    }

    fn bin(&self, x: f64) -> usize {
        ((x * self.bins as f64) as usize).min(self.bins - 1)
    }
}

/// One non-empty (distance, degree) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub distance: String,
    pub degree: String,
    pub entities: Vec<usize>,
    /// Probability mass per bin over all rows of the group's entities.
    pub observed: Vec<f64>,
    pub observed_mean: f64,
    pub simulated: Option<Vec<f64>>,
    pub simulated_mean: Option<f64>,
    /// Two-sample Kolmogorov-Smirnov statistic between observed and simulated.
    pub ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub bucketing: Bucketing,
    pub rows: Vec<BucketRow>,
}

/// Largest gap between the empirical distribution functions of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

fn positive_frequencies(set: &FeatureSet, entities: &[usize]) -> Vec<f64> {
    let d = set.dim();
    entities
        .iter()
        .flat_map(|&e| set.entity_rows(e).chunks_exact(d).map(|r| r[0]))
        .collect()
}

fn histogram(values: &[f64], b: &Bucketing) -> Vec<f64> {
    let mut h = vec![0.0; b.bins];
    for &x in values {
        h[b.bin(x)] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Groups entities by distance and degree and histograms `f_pos` per group.
/// Groups without entities produce no row.
pub fn symptom_distribution_report(
    observed: &FeatureSet,
    simulated: Option<&FeatureSet>,
    distances: &[Option<usize>],
    degrees: &[usize],
    bucketing: &Bucketing,
) -> Result<DistributionReport> {
    let e = observed.entities();
    if distances.len() != e || degrees.len() != e {
        return Err(Error::Dimension(format!(
            "{e} entities but {} distances and {} degrees",
            distances.len(),
            degrees.len()
        )));
    }
    if let Some(sim) = simulated {
        if sim.entities() != e || sim.kind() != observed.kind() {
            return Err(Error::Dimension("observed and simulated sets disagree".into()));
        }
    }
    if bucketing.bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let mut groups: Vec<((usize, bool), Vec<usize>)> = Vec::new();
    for v in 0..e {
        let key = (
            bucketing.distance_rank(distances[v]),
            degrees[v] > bucketing.degree_split,
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(v),
            None => groups.push((key, vec![v])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    let rows = groups
        .into_iter()
        .map(|(_, members)| {
            let first = members[0];
            let obs = positive_frequencies(observed, &members);
            let sim = simulated.map(|s| positive_frequencies(s, &members));
            BucketRow {
                distance: bucketing.distance_label(distances[first]),
                degree: bucketing.degree_label(degrees[first]),
                observed: histogram(&obs, bucketing),
                observed_mean: mean(&obs),
                simulated: sim.as_ref().map(|s| histogram(s, bucketing)),
                simulated_mean: sim.as_ref().map(|s| mean(s)),
                ks: sim.as_ref().map(|s| ks_statistic(&obs, s)),
                entities: members,
            }
        })
        .collect();
    Ok(DistributionReport {
        bucketing: *bucketing,
        rows,
    })
}

impl DistributionReport {
    /// Long format, one line per (group, bin).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "distance,degree,entities,bin_lo,bin_hi,observed_mass,simulated_mass,observed_mean,simulated_mean,ks\n",
        );
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let bins = self.bucketing.bins;
        for r in &self.rows {
            for k in 0..bins {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.distance,
                    r.degree,
                    r.entities.len(),
                    k as f64 / bins as f64,
                    (k + 1) as f64 / bins as f64,
                    r.observed[k],
                    opt(r.simulated.as_ref().map(|h| h[k])),
                    r.observed_mean,
                    opt(r.simulated_mean),
                    opt(r.ks),
                );
            }
        }
        s
    }

    /// Mean observed `f_pos` over all groups at exactly distance `d`,
    /// weighted by entity count.
    pub fn mean_at_distance(&self, d: usize) -> Option<f64> {
        let label = d.to_string();
        let (mut sum, mut n) = (0.0, 0usize);
        for r in self.rows.iter().filter(|r| r.distance == label) {
            sum += r.observed_mean * r.entities.len() as f64;
            n += r.entities.len();
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn max_ks(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ks).reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::StatisticKind;
    use proptest::prelude::*;

    fn set(entities: usize, f_pos: &[f64]) -> FeatureSet {
        let samples = f_pos.len() / entities;
        let values = f_pos.iter().flat_map(|&f| [f, 0.0, 1.0 - f]).collect();
        FeatureSet::from_values(entities, samples, StatisticKind::Reduced, 0, None, 10, values).unwrap()
    }

    /// Direct definition: maximum over every sample point of |F_a - F_b|.
    fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_bucket_has_unit_mass() {
        let obs = set(3, &[0.1, 0.2, 0.5, 0.5, 0.9, 1.0]);
        let r = symptom_distribution_report(&obs, None, &[Some(1); 3], &[2; 3], &Bucketing::default()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!((r.rows[0].observed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.rows[0].observed[9], 2.0 / 6.0);
    }

    #[test]
    fn empty_buckets_are_omitted() {
        let obs = set(3, &[0.1, 0.2, 0.3]);
        let dist = [Some(0), Some(1), Some(7)];
        let r = symptom_distribution_report(&obs, None, &dist, &[5, 1, 1], &Bucketing::default()).unwrap();
        let keys: Vec<(&str, &str)> = r
            .rows
            .iter()
            .map(|r| (r.distance.as_str(), r.degree.as_str()))
            .collect();
        assert_eq!(keys, vec![("0", ">3"), ("1", "<=3"), ("4+", "<=3")]);
        assert_eq!(r.mean_at_distance(1), Some(0.2));
        assert_eq!(r.mean_at_distance(2), None);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 10);
    }

    #[test]
    fn identical_sets_have_zero_ks() {
        let obs = set(2, &[0.1, 0.4, 0.4, 0.8]);
        let r =
            symptom_distribution_report(&obs, Some(&obs), &[Some(1), None], &[1, 1], &Bucketing::default()).unwrap();
        assert_eq!(r.max_ks(), Some(0.0));
        assert_eq!(r.rows[1].distance, "unreachable");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let obs = set(2, &[0.1, 0.4]);
        assert!(symptom_distribution_report(&obs, None, &[Some(1)], &[1, 1], &Bucketing::default()).is_err());
    }

    proptest! {
        #[test]
        fn ks_matches_definition(
            a in prop::collection::vec(0u8..12, 1..40),
            b in prop::collection::vec(0u8..12, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(|k| k as f64 / 11.0).collect();
            let b: Vec<f64> = b.into_iter().map(|k| k as f64 / 11.0).collect();
            prop_assert!((ks_statistic(&a, &b) - ks_brute(&a, &b)).abs() < 1e-12);
        }
    }
}
