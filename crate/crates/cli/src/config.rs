//! Run configuration: TOML file, `DCINFER__SECTION__KEY` environment
//! overrides, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dcinfer::classify::{ClassifierKind, ClassifierSpec, ParamMap};
use dcinfer::empirical::ColumnSampling;
use dcinfer::graph::{gen_balanced_tree, gen_barabasi_albert, gen_star, load_edge_list};
use dcinfer::optimize::{InferenceConfig, PowellConfig};
use dcinfer::report::Bucketing;
use dcinfer::{BaselineModel, FeatureSpec, Graph, SeedSchedule, SpreadParams, StatisticKind};

pub const ENV_PREFIX: &str = "DCINFER__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub parallelism: Option<usize>,
    /// Independent inferences per parameter point (R).
    pub repeats: usize,
    pub graph: GraphConfig,
    pub seeds: SeedsConfig,
    pub truth: Option<SpreadParams>,
    pub baseline: BaselineConfig,
    pub features: FeaturesConfig,
    pub classifier: ClassifierConfig,
    pub powell: PowellConfig,
    pub inference: InferenceSection,
    pub grid: GridConfig,
    pub empirical: EmpiricalConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            parallelism: None,
            repeats: 3,
            graph: GraphConfig::default(),
            seeds: SeedsConfig::default(),
            truth: None,
            baseline: BaselineConfig::default(),
            features: FeaturesConfig::default(),
            classifier: ClassifierConfig::default(),
            powell: PowellConfig::default(),
            inference: InferenceSection::default(),
            grid: GridConfig::default(),
            empirical: EmpiricalConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    BarabasiAlbert { n: usize, m: usize, seed: u64 },
    BalancedTree { branching: usize, height: usize },
    Star { leaves: usize },
    EdgeList { path: PathBuf },
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig::BarabasiAlbert {
            n: 200,
            m: 2,
            seed: 2024,
        }
    }
}

impl GraphConfig {
    pub fn build(&self) -> Result<Graph> {
        Ok(match self {
            GraphConfig::BarabasiAlbert { n, m, seed } => gen_barabasi_albert(*n, *m, *seed)?,
            GraphConfig::BalancedTree { branching, height } => gen_balanced_tree(*branching, *height)?,
            GraphConfig::Star { leaves } => gen_star(*leaves)?,
            GraphConfig::EdgeList { path } => {
                let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                load_edge_list(std::io::BufReader::new(f))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsConfig {
    pub nodes: Vec<usize>,
    /// Activation offsets; one step apart in list order when absent.
    pub offsets: Option<Vec<usize>>,
}

impl Default for SeedsConfig {
    fn default() -> Self {
        SeedsConfig {
            nodes: vec![0],
            offsets: None,
        }
    }
}

impl SeedsConfig {
    pub fn build(&self) -> Result<SeedSchedule> {
        Ok(match &self.offsets {
            None => SeedSchedule::staggered(&self.nodes)?,
            Some(off) => {
                anyhow::ensure!(
                    off.len() == self.nodes.len(),
                    "seeds.offsets must match seeds.nodes in length"
                );
                SeedSchedule::new(self.nodes.iter().copied().zip(off.iter().copied()).collect())?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// Per-entity `investor_id,b0,b1,b2` file; overrides the shared triple.
    pub path: Option<PathBuf>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            b0: 0.5,
            b1: 0.25,
            b2: 0.25,
            path: None,
        }
    }
}

impl BaselineConfig {
    pub fn build(&self, entities: usize) -> Result<BaselineModel> {
        let model = match &self.path {
            Some(p) => read_baselines_file(p)?,
            None => BaselineModel::uniform(entities, self.b0, self.b1, self.b2)?,
        };
        anyhow::ensure!(
            model.len() == entities,
            "baseline covers {} entities, graph has {entities}",
            model.len()
        );
        Ok(model)
    }
}

pub fn read_baselines_file(path: &Path) -> Result<BaselineModel> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(dcinfer::empirical::read_baselines(std::io::BufReader::new(f))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub samples: usize,
    pub cascades: usize,
    pub kind: StatisticKind,
    /// Observed features to use instead of simulating them at `truth`.
    pub ground_truth: Option<PathBuf>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let d = FeatureSpec::default();
        FeaturesConfig {
            samples: d.samples,
            cascades: d.cascades,
            kind: d.kind,
            ground_truth: None,
        }
    }
}

impl FeaturesConfig {
    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            samples: self.samples,
            cascades: self.cascades,
            kind: self.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    /// Grid values fixed for the initial classifier; the rest take defaults.
    pub params: ParamMap,
    /// Search the grid per entity after convergence and restart if it helps.
    pub tune: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::Svm,
            params: ParamMap::new(),
            tune: true,
        }
    }
}

impl ClassifierConfig {
    pub fn spec(&self) -> Result<ClassifierSpec> {
        Ok(ClassifierSpec::from_map(self.kind, &self.params)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub start: SpreadParams,
    pub restart_cap: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let d = InferenceConfig::default();
        InferenceSection {
            start: d.start,
            restart_cap: d.restart_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// `(p, q)` pairs to sweep.
    pub points: Vec<[f64; 2]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points: vec![[0.1, 0.1], [0.5, 0.5], [0.9, 0.9], [0.3, 0.7], [0.7, 0.3]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanyEntry {
    pub name: String,
    pub trades: PathBuf,
    pub calendar: PathBuf,
    /// Board members, activated one step apart in id order.
    pub board: Vec<usize>,
    /// Non-carrier laws to use instead of estimating them from the trades.
    #[serde(default)]
    pub baselines: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: usize,
    pub announcements: usize,
    pub theta_ann: SpreadParams,
    pub theta_non: SpreadParams,
    pub board: Vec<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 600,
            announcements: 60,
            theta_ann: SpreadParams { p: 0.5, q: 0.6 },
            theta_non: SpreadParams { p: 0.25, q: 0.6 },
            board: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpiricalConfig {
    /// Bootstrap samples per part; defaults to `features.samples`.
    pub bootstrap_samples: Option<usize>,
    /// Columns per bootstrap sample; defaults to `min(20, n1)`.
    pub width: Option<usize>,
    pub sampling: ColumnSampling,
    pub companies: Vec<CompanyEntry>,
    pub synth: SynthConfig,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        EmpiricalConfig {
            bootstrap_samples: None,
            width: None,
            sampling: ColumnSampling::Replacement,
            companies: Vec::new(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Feature vectors per entity for each of the two sets.
    pub samples: usize,
    /// Parameters of the simulated set; inferred first when absent.
    pub theta: Option<SpreadParams>,
    pub bucketing: Bucketing,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            samples: 200,
            theta: None,
            bucketing: Bucketing::default(),
        }
    }
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub stat: Option<StatisticKind>,
    pub classifier: Option<ClassifierKind>,
}

/// Configuration problems, one message per offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

fn invalid(violations: Vec<String>) -> anyhow::Error {
    ConfigError { violations }.into()
}

/// Parses an environment value as a TOML value, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_env(table: &mut toml::Table, vars: impl Iterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars.filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(invalid(vec![format!("{key}: malformed override key")]));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node
                .entry(part.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = match entry {
                toml::Value::Table(t) => t,
                _ => return Err(invalid(vec![format!("{key}: `{part}` is not a section")])),
            };
        }
        node.insert(path[path.len() - 1].clone(), env_value(&raw));
    }
    Ok(())
}

/// Relative paths in the file are taken from the file's directory.
fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let GraphConfig::EdgeList { path } = &mut cfg.graph {
        fix(path);
    }
    if let Some(p) = &mut cfg.baseline.path {
        fix(p);
    }
    if let Some(p) = &mut cfg.features.ground_truth {
        fix(p);
    }
    for c in &mut cfg.empirical.companies {
        fix(&mut c.trades);
        fix(&mut c.calendar);
        if let Some(p) = &mut c.baselines {
            fix(p);
        }
    }
}

/// Loads, overrides and validates a configuration.
/// Company input files are checked only when `companies` is set.
pub fn load(
    path: Option<&Path>,
    env: impl Iterator<Item = (String, String)>,
    overrides: &Overrides,
    companies: bool,
) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| invalid(vec![format!("{}: {e}", p.display())]))?
        }
        None => toml::Table::new(),
    };
    apply_env(&mut table, env)?;
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| invalid(vec![e.message().to_string()]))?;
    if let Some(dir) = path.and_then(Path::parent) {
        resolve_paths(&mut cfg, dir);
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(o) = &overrides.out {
        cfg.out = o.clone();
    }
    if let Some(n) = overrides.parallelism {
        cfg.parallelism = Some(n);
    }
    if let Some(k) = overrides.stat {
        cfg.features.kind = k;
    }
    if let Some(k) = overrides.classifier {
        if k != cfg.classifier.kind {
            cfg.classifier.kind = k;
            cfg.classifier.params.clear();
        }
    }
    let violations = cfg.violations(companies);
    if !violations.is_empty() {
        return Err(invalid(violations));
    }
    Ok(cfg)
}

fn check_theta(out: &mut Vec<String>, name: &str, t: &SpreadParams) {
    for (k, v) in [("p", t.p), ("q", t.q)] {
        if !(0.0..=1.0).contains(&v) {
            out.push(format!("{name}.{k}: {v} is not a probability"));
        }
    }
}

fn check_file(out: &mut Vec<String>, name: &str, p: &Path) {
    if !p.is_file() {
        out.push(format!("{name}: {} does not exist", p.display()));
    }
}

impl RunConfig {
    /// Every invalid field, in a fixed order.
    pub fn violations(&self, companies: bool) -> Vec<String> {
        let mut v = Vec::new();
        if self.repeats == 0 {
            v.push("repeats: must be at least 1".into());
        }
        if self.parallelism == Some(0) {
            v.push("parallelism: must be at least 1".into());
        }
        match &self.graph {
            GraphConfig::BarabasiAlbert { n, m, .. } if *m == 0 || n <= m => {
                v.push(format!("graph: barabasi_albert needs n > m >= 1, got n={n} m={m}"))
            }
            GraphConfig::BalancedTree { branching: 0, .. } => v.push("graph.branching: must be at least 1".into()),
            GraphConfig::EdgeList { path } => check_file(&mut v, "graph.path", path),
            _ => {}
        }
        if self.seeds.nodes.is_empty() {
            v.push("seeds.nodes: at least one seed is required".into());
        }
        if let Some(off) = &self.seeds.offsets {
            if off.len() != self.seeds.nodes.len() {
                v.push("seeds.offsets: length differs from seeds.nodes".into());
            }
        }
        if let Some(t) = &self.truth {
            check_theta(&mut v, "truth", t);
        }
        let b = &self.baseline;
        match &b.path {
            Some(p) => check_file(&mut v, "baseline.path", p),
            None => {
                if [b.b0, b.b1, b.b2].iter().any(|x| !(0.0..=1.0).contains(x))
                    || (b.b0 + b.b1 + b.b2 - 1.0).abs() > 1e-12
                {
                    v.push(format!(
                        "baseline: ({}, {}, {}) is not a probability vector",
                        b.b0, b.b1, b.b2
                    ));
                }
            }
        }
        if self.features.samples < 5 {
            v.push(format!(
                "features.samples: need at least 5, got {}",
                self.features.samples
            ));
        }
        if self.features.cascades < self.features.kind.min_cascades() {
            v.push(format!(
                "features.cascades: {} statistics need at least {}",
                self.features.kind,
                self.features.kind.min_cascades()
            ));
        }
        if let Some(p) = &self.features.ground_truth {
            check_file(&mut v, "features.ground_truth", p);
        }
        if let Err(e) = self.classifier.spec() {
            v.push(format!("classifier.params: {e}"));
        }
        v.extend(self.powell.violations().into_iter().map(|s| format!("powell.{s}")));
        check_theta(&mut v, "inference.start", &self.inference.start);
        for (i, pt) in self.grid.points.iter().enumerate() {
            check_theta(
                &mut v,
                &format!("grid.points[{i}]"),
                &SpreadParams { p: pt[0], q: pt[1] },
            );
        }
        let e = &self.empirical;
        if e.bootstrap_samples == Some(0) {
            v.push("empirical.bootstrap_samples: must be at least 1".into());
        }
        for (i, c) in e.companies.iter().enumerate().filter(|_| companies) {
            check_file(&mut v, &format!("empirical.companies[{i}].trades"), &c.trades);
            check_file(&mut v, &format!("empirical.companies[{i}].calendar"), &c.calendar);
            if let Some(p) = &c.baselines {
                check_file(&mut v, &format!("empirical.companies[{i}].baselines"), p);
            }
            if c.board.is_empty() {
                v.push(format!(
                    "empirical.companies[{i}].board: at least one member is required"
                ));
            }
        }
        check_theta(&mut v, "empirical.synth.theta_ann", &e.synth.theta_ann);
        check_theta(&mut v, "empirical.synth.theta_non", &e.synth.theta_non);
        if e.synth.board.is_empty() {
            v.push("empirical.synth.board: at least one member is required".into());
        }
        if self.report.samples < 1 {
            v.push("report.samples: must be at least 1".into());
        }
        if self.report.bucketing.bins == 0 {
            v.push("report.bucketing.bins: must be at least 1".into());
        }
        if let Some(t) = &self.report.theta {
            check_theta(&mut v, "report.theta", t);
        }
        v
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            start: self.inference.start,
            powell: self.powell.clone(),
            tune: self.classifier.tune,
            restart_cap: self.inference.restart_cap,
        }
    }

    pub fn bootstrap_samples(&self) -> usize {
        self.empirical.bootstrap_samples.unwrap_or(self.features.samples)
    }
}

/// Environment variables of the current process, for [`load`].
pub fn process_env() -> impl Iterator<Item = (String, String)> {
    std::env::vars()
}

#[cfg(test)]
fn env_key(path: &[&str]) -> String {
    let parts: Vec<String> = path.iter().map(|p| p.to_ascii_uppercase()).collect();
    format!("{ENV_PREFIX}{}", parts.join("__"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> std::vec::IntoIter<(String, String)> {
        Vec::new().into_iter()
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = load(None, no_env(), &Overrides::default(), true).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn env_overrides_nested_keys() {
        let env = vec![
            (env_key(&["features", "samples"]), "20".to_string()),
            (env_key(&["classifier", "kind"]), "knn".to_string()),
            (env_key(&["truth"]), "{ p = 0.3, q = 0.7 }".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = load(None, env.into_iter(), &Overrides::default(), true).unwrap();
        assert_eq!(cfg.features.samples, 20);
        assert_eq!(cfg.classifier.kind, ClassifierKind::Knn);
        assert_eq!(cfg.truth, Some(SpreadParams { p: 0.3, q: 0.7 }));
    }

    #[test]
    fn flags_beat_file_and_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\n[features]\nkind = \"reduced\"\n").unwrap();
        let env = vec![(env_key(&["seed"]), "4".to_string())];
        let cfg = load(Some(&path), env.clone().into_iter(), &Overrides::default(), true).unwrap();
        assert_eq!(cfg.seed, 4);
        let o = Overrides {
            seed: Some(9),
            stat: Some(StatisticKind::Extended),
            ..Default::default()
        };
        let cfg = load(Some(&path), env.into_iter(), &o, true).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.features.kind, StatisticKind::Extended);
    }

    #[test]
    fn every_violation_is_reported() {
        let env = vec![
            (env_key(&["repeats"]), "0".to_string()),
            (env_key(&["truth"]), "{ p = 1.5, q = -0.1 }".to_string()),
            (env_key(&["features", "samples"]), "2".to_string()),
            (env_key(&["powell", "ftol"]), "0".to_string()),
        ];
        let err = load(None, env.into_iter(), &Overrides::default(), true).unwrap_err();
        let v = &err.downcast_ref::<ConfigError>().unwrap().violations;
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("truth.p")));
        assert!(v.iter().any(|s| s.starts_with("truth.q")));
        assert!(v.iter().any(|s| s.starts_with("powell.")));
    }

    #[test]
    fn unknown_keys_and_missing_files_are_rejected() {
        let env = vec![(env_key(&["feature", "samples"]), "2".to_string())];
        assert!(load(None, env.into_iter(), &Overrides::default(), true).is_err());
        let env = vec![(
            env_key(&["graph"]),
            "{ kind = \"edge_list\", path = \"/nonexistent/g.txt\" }".to_string(),
        )];
        let err = load(None, env.into_iter(), &Overrides::default(), true).unwrap_err();
        assert!(err.to_string().contains("graph.path"));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.txt"), "0 1\n").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[graph]\nkind = \"edge_list\"\npath = \"g.txt\"\n").unwrap();
        let cfg = load(Some(&path), no_env(), &Overrides::default(), true).unwrap();
        assert_eq!(cfg.graph.build().unwrap().node_count(), 2);
    }

    #[test]
    fn switching_classifier_drops_params() {
        let env = vec![(env_key(&["classifier", "params"]), "{ C = 10 }".to_string())];
        let o = Overrides {
            classifier: Some(ClassifierKind::NaiveBayes),
            ..Default::default()
        };
        let cfg = load(None, env.into_iter(), &o, true).unwrap();
        assert!(cfg.classifier.params.is_empty());
    }
}
