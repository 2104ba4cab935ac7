//! Per-entity summary statistics over batches of hidden cascades.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{BaselineModel, CascadeRng, CascadeSimulator, SpreadParams, Symptom};
use crate::error::{Error, Result};
use crate::graph::{Graph, SeedSchedule};
use crate::rng::cascade_index;

/// Which summary statistic a feature row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    #[default]
    Reduced,
    Extended,
}

const REDUCED_NAMES: [&str; 3] = ["f_pos", "f_neg", "f_none"];
const EXTENDED_NAMES: [&str; 9] = [
    "f_pos",
    "f_neg",
    "f_none",
    "mean",
    "variance",
    "entropy",
    "delta_pos",
    "delta_neg",
    "delta_none",
];

impl StatisticKind {
    pub fn dim(self) -> usize {
        self.names().len()
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            StatisticKind::Reduced => &REDUCED_NAMES,
            StatisticKind::Extended => &EXTENDED_NAMES,
        }
    }

    /// Fewest cascades the statistic is defined for.
    pub fn min_cascades(self) -> usize {
        match self {
            StatisticKind::Reduced => 1,
            StatisticKind::Extended => 2,
        }
    }

    /// Appends the statistic of `row` to `out`.
    pub fn summarize_into(self, row: &[Symptom], out: &mut Vec<f64>) -> Result<()> {
        match self {
            StatisticKind::Reduced => out.extend_from_slice(&reduced_summary(row)?),
            StatisticKind::Extended => out.extend_from_slice(&extended_summary(row)?),
        }
        Ok(())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(StatisticKind::Reduced),
            "extended" => Ok(StatisticKind::Extended),
            other => Err(Error::Parameter(format!("unknown statistic `{other}`"))),
        }
    }
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::Reduced => "reduced",
            StatisticKind::Extended => "extended",
        })
    }
}

fn counts(row: &[Symptom]) -> [usize; 3] {
    let mut c = [0usize; 3];
    for &z in row {
        match z {
            1 => c[0] += 1,
            -1 => c[1] += 1,
            _ => c[2] += 1,
        }
    }
    c
}

/// Symptom frequencies `(f_pos, f_neg, f_none)`.
pub fn reduced_summary(row: &[Symptom]) -> Result<[f64; 3]> {
    if row.is_empty() {
        return Err(Error::Dimension("summary of an empty symptom row".into()));
    }
    let n = row.len() as f64;
    let c = counts(row);
    Ok([c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n])
}

/// Reduced frequencies followed by mean, population variance, entropy (nats)
/// and the half-to-half count changes per symbol.
///
/// The first half holds the first `ceil(N/2)` cascades; deltas are
/// `(second − first) / ceil(N/2)`.
pub fn extended_summary(row: &[Symptom]) -> Result<[f64; 9]> {
    if row.len() < 2 {
        return Err(Error::Dimension(format!(
            "extended summary needs at least 2 cascades, got {}",
            row.len()
        )));
    }
    let n = row.len() as f64;
    let f = reduced_summary(row)?;
    let mean = row.iter().map(|&z| z as i64).sum::<i64>() as f64 / n;
    let variance = row.iter().map(|&z| (z as f64 - mean).powi(2)).sum::<f64>() / n;
    let entropy = -f.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    let half = row.len().div_ceil(2);
    let first = counts(&row[..half]);
    let second = counts(&row[half..]);
    let delta = |k: usize| (second[k] as f64 - first[k] as f64) / half as f64;
    Ok([f[0], f[1], f[2], mean, variance, entropy, delta(0), delta(1), delta(2)])
}

/// `E × N` symptoms; column `j` is cascade `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomMatrix {
    entities: usize,
    cascades: usize,
    data: Vec<Symptom>,
}

impl SymptomMatrix {
    pub fn zeros(entities: usize, cascades: usize) -> Self {
        SymptomMatrix {
            entities,
            cascades,
            data: vec![0; entities * cascades],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Symptom>>) -> Result<Self> {
        let cascades = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cascades) {
            return Err(Error::Dimension("ragged symptom rows".into()));
        }
        Ok(SymptomMatrix {
            entities: rows.len(),
            cascades,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn entities(&self) -> usize {
        self.entities
    }

    pub fn cascades(&self) -> usize {
        self.cascades
    }

    pub fn row(&self, entity: usize) -> &[Symptom] {
        &self.data[entity * self.cascades..(entity + 1) * self.cascades]
    }

    pub fn get(&self, entity: usize, cascade: usize) -> Symptom {
        self.data[entity * self.cascades + cascade]
    }

    pub fn set_column(&mut self, cascade: usize, column: &[Symptom]) {
        debug_assert_eq!(column.len(), self.entities);
        for (e, &z) in column.iter().enumerate() {
            self.data[e * self.cascades + cascade] = z;
        }
    }

    /// Per-entity statistic rows, entity-major.
    pub fn summarize(&self, kind: StatisticKind) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.entities * kind.dim());
        for e in 0..self.entities {
            kind.summarize_into(self.row(e), &mut out)?;
        }
        Ok(out)
    }

    /// Text form: one line per entity, space-separated symptoms.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in 0..self.entities {
            let line: Vec<String> = self.row(e).iter().map(|z| z.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

/// Monte Carlo sizes and statistic for feature generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Feature vectors per entity (M).
    pub samples: usize,
    /// Cascades per feature vector (N).
    pub cascades: usize,
    pub kind: StatisticKind,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            samples: 50,
            cascades: 100,
            kind: StatisticKind::Reduced,
        }
    }
}

/// `M` labelled statistic rows for each of `E` entities.
///
/// Storage is entity-major: the rows of entity `e` are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    entities: usize,
    samples: usize,
    kind: StatisticKind,
    label: u8,
    theta: Option<SpreadParams>,
    cascades: usize,
    values: Vec<f64>,
}

impl FeatureSet {
    /// Assembles a set from entity-major values.
    pub fn from_values(
        entities: usize,
        samples: usize,
        kind: StatisticKind,
        label: u8,
        theta: Option<SpreadParams>,
        cascades: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if label > 1 {
            return Err(Error::Parameter(format!("label must be 0 or 1, got {label}")));
        }
        if values.len() != entities * samples * kind.dim() {
            return Err(Error::Dimension(format!(
                "{} values for {entities} entities x {samples} samples x {} dims",
                values.len(),
                kind.dim()
            )));
        }
        Ok(FeatureSet {
            entities,
            samples,
            kind,
            label,
            theta,
            cascades,
            values,
        })
    }

    /// Builds a set from per-sample blocks, each holding `E × d` values.
    pub fn from_sample_blocks(
        entities: usize,
        kind: StatisticKind,
        label: u8,
        theta: Option<SpreadParams>,
        cascades: usize,
        blocks: &[Vec<f64>],
    ) -> Result<Self> {
        let d = kind.dim();
        let samples = blocks.len();
        let mut values = vec![0.0; entities * samples * d];
        for (m, block) in blocks.iter().enumerate() {
            if block.len() != entities * d {
                return Err(Error::Dimension("sample block has the wrong size".into()));
            }
            for e in 0..entities {
                let dst = (e * samples + m) * d;
                values[dst..dst + d].copy_from_slice(&block[e * d..(e + 1) * d]);
            }
        }
        Self::from_values(entities, samples, kind, label, theta, cascades, values)
    }

    pub fn entities(&self) -> usize {
        self.entities
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn theta(&self) -> Option<SpreadParams> {
        self.theta
    }

    pub fn cascades(&self) -> usize {
        self.cascades
    }

    /// All `M` rows of one entity, flattened.
    pub fn entity_rows(&self, entity: usize) -> &[f64] {
        let width = self.samples * self.dim();
        &self.values[entity * width..(entity + 1) * width]
    }

    pub fn row(&self, entity: usize, sample: usize) -> &[f64] {
        let d = self.dim();
        let start = (entity * self.samples + sample) * d;
        &self.values[start..start + d]
    }

    /// Writes the delimited text form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let theta = self
            .theta
            .map_or_else(|| "none".to_string(), |t| format!("{},{}", t.p, t.q));
        writeln!(out, "# kind={} cascades={} theta={}", self.kind, self.cascades, theta)?;
        writeln!(out, "entity,sample,{},label", self.kind.names().join(","))?;
        for e in 0..self.entities {
            for m in 0..self.samples {
                let vals: Vec<String> = self.row(e, m).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{e},{m},{},{}", vals.join(","), self.label)?;
            }
        }
        Ok(())
    }

    /// Reads the form written by [`FeatureSet::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut kind = None;
        let mut cascades = 0;
        let mut theta = None;
        let mut rows: Vec<(usize, usize, Vec<f64>, u8)> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let perr = |message: String| Error::Parse { line: lineno, message };
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("kind", v)) => kind = Some(v.parse::<StatisticKind>()?),
                        Some(("cascades", v)) => {
                            cascades = v.parse().map_err(|_| perr(format!("bad cascades `{v}`")))?
                        }
                        Some(("theta", "none")) => theta = None,
                        Some(("theta", v)) => {
                            let (p, q) = v.split_once(',').ok_or_else(|| perr("bad theta".into()))?;
                            let parse = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad theta `{v}`")));
                            theta = Some(SpreadParams::new(parse(p)?, parse(q)?)?);
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with("entity,") {
                if let Some(header) = line.strip_prefix("entity,sample,") {
                    let names: Vec<&str> = header.split(',').collect();
                    let inferred = if names.len() == 10 {
                        StatisticKind::Extended
                    } else {
                        StatisticKind::Reduced
                    };
                    kind.get_or_insert(inferred);
                }
                continue;
            }
            let toks: Vec<&str> = line.split(',').collect();
            if toks.len() < 4 {
                return Err(perr("too few columns".into()));
            }
            let int = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| perr(format!("bad integer `{s}`")))
            };
            let e = int(toks[0])?;
            let m = int(toks[1])?;
            let label = int(toks[toks.len() - 1])? as u8;
            let vals = toks[2..toks.len() - 1]
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| perr(format!("bad value `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push((e, m, vals, label));
        }
        let kind = kind.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let entities = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let samples = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != entities * samples {
            return Err(Error::Dimension(format!(
                "{} rows do not form a full {entities} x {samples} grid",
                rows.len()
            )));
        }
        let label = rows.first().map_or(0, |r| r.3);
        if rows.iter().any(|r| r.3 != label) {
            return Err(Error::Parameter("feature set mixes labels".into()));
        }
        let d = kind.dim();
        let mut values = vec![f64::NAN; entities * samples * d];
        for (e, m, vals, _) in rows {
            if vals.len() != d {
                return Err(Error::Dimension(format!("row has {} values, expected {d}", vals.len())));
            }
            let start = (e * samples + m) * d;
            values[start..start + d].copy_from_slice(&vals);
        }
        Self::from_values(entities, samples, kind, label, theta, cascades, values)
    }
}

/// Simulates `M × N` hidden cascades and summarizes them per entity.
///
/// Cascade `n` of sample `m` draws from the substreams keyed by
/// `(base_seed, m, n)`, so the result does not depend on scheduling and two
/// calls with different `theta` share their random numbers.
#[allow(clippy::too_many_arguments)]
pub fn generate_feature_set(
    label: u8,
    theta: SpreadParams,
    graph: &Graph,
    seeds: &SeedSchedule,
    baseline: &BaselineModel,
    spec: &FeatureSpec,
    base_seed: u64,
) -> Result<FeatureSet> {
    if spec.samples == 0 || spec.cascades < spec.kind.min_cascades() {
        return Err(Error::Parameter(format!(
            "need at least one sample and {} cascades, got M={} N={}",
            spec.kind.min_cascades(),
            spec.samples,
            spec.cascades
        )));
    }
    if baseline.len() != graph.node_count() {
        return Err(Error::Dimension(format!(
            "baseline has {} entities, graph has {} nodes",
            baseline.len(),
            graph.node_count()
        )));
    }
    seeds.validate_for(graph)?;
    let entities = graph.node_count();
    let blocks = (0..spec.samples)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let mut sim = CascadeSimulator::new(graph, seeds)?;
            let mut matrix = SymptomMatrix::zeros(entities, spec.cascades);
            let mut column = vec![0 as Symptom; entities];
            for n in 0..spec.cascades {
                let mut rng = CascadeRng::new(base_seed, cascade_index(m, n));
                sim.simulate_into(theta, baseline, &mut rng, &mut column);
                matrix.set_column(n, &column);
            }
            matrix.summarize(spec.kind)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::from_sample_blocks(entities, spec.kind, label, Some(theta), spec.cascades, &blocks)
}
