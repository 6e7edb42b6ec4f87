//! Expert × learner × method × seed sweeps.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::train::{metrics_from_csv, train, write_outputs, MetricsRow, TrainError};
use crate::expert::{generate_dataset, ExpertSource};
use crate::gridworld::MoveStyle;
use crate::imitation::RewardStrategy;

/// How the learner's displacement set relates to the expert's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Same,
    Disjoint,
    /// The learner can do everything the expert can, and more.
    LearnerSuperset,
    /// The expert can do everything the learner can, and more.
    ExpertSuperset,
    /// Shared and private moves on both sides.
    Overlap,
}

impl Relation {
    pub fn of(expert: MoveStyle, learner: MoveStyle) -> Self {
        let e = expert.displacements();
        let l = learner.displacements();
        let shared = e.iter().filter(|d| l.contains(d)).count();
        match (shared == e.len(), shared == l.len(), shared) {
            (true, true, _) => Relation::Same,
            (_, _, 0) => Relation::Disjoint,
            (true, false, _) => Relation::LearnerSuperset,
            (false, true, _) => Relation::ExpertSuperset,
            (false, false, _) => Relation::Overlap,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Relation::Same => "=",
            Relation::Disjoint => "D",
            Relation::LearnerSuperset => "L",
            Relation::ExpertSuperset => "E",
            Relation::Overlap => "O",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A reward strategy with or without the self-exploration gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub strategy: RewardStrategy,
    pub self_exploration: bool,
}

impl Method {
    pub fn new(strategy: RewardStrategy, self_exploration: bool) -> Self {
        Method {
            strategy,
            self_exploration,
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.strategy = self.strategy;
        cfg.self_exploration = self.self_exploration;
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy {
            RewardStrategy::Rtgd { min_gap } if min_gap != 3 => write!(f, "RTGD{min_gap}")?,
            s => write!(f, "{s}")?,
        }
        if self.self_exploration {
            f.write_str("-SE")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    /// `atd`, `ATD-SE`, `rtgd5-se`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let (name, se) = match lower.strip_suffix("-se") {
            Some(n) => (n, true),
            None => (lower.as_str(), false),
        };
        Ok(Method::new(name.parse()?, se))
    }
}

/// One cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub expert: MoveStyle,
    pub learner: MoveStyle,
    pub method: Method,
    pub seed: u64,
}

impl RunSpec {
    pub fn relation(&self) -> Relation {
        Relation::of(self.expert, self.learner)
    }

    /// Directory name of the run.
    pub fn slug(&self) -> String {
        format!(
            "{}__{}__{}__s{}",
            self.expert.name(),
            self.learner.name(),
            self.method.to_string().to_ascii_lowercase(),
            self.seed
        )
    }

    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.expert_style = self.expert;
        cfg.learner_style = self.learner;
        cfg.seed = self.seed;
        self.method.apply(&mut cfg);
        cfg
    }
}

/// Outcome of one run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub spec: RunSpec,
    pub relation: Relation,
    pub success: f64,
    pub mean_steps: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

pub const SUMMARY_HEADER: &str = "expert,learner,relation,method,seed,success,mean_steps,iterations,error";

impl RunResult {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.spec.expert.name(),
            self.spec.learner.name(),
            self.relation,
            self.spec.method,
            self.spec.seed,
            self.success,
            self.mean_steps,
            self.iterations,
            self.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        )
    }

    pub fn from_csv(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim_end().splitn(9, ',').collect();
        if f.len() != 9 {
            return Err(format!("expected 9 fields, found {}", f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
        let spec = RunSpec {
            expert: f[0].parse()?,
            learner: f[1].parse()?,
            method: f[3].parse()?,
            seed: f[4].parse().map_err(|_| format!("bad seed `{}`", f[4]))?,
        };
        Ok(RunResult {
            relation: spec.relation(),
            spec,
            success: num(f[5])?,
            mean_steps: num(f[6])?,
            iterations: f[7].parse().map_err(|_| format!("bad iteration count `{}`", f[7]))?,
            error: (!f[8].is_empty()).then(|| f[8].to_string()),
        })
    }
}

pub fn summary_to_csv(results: &[RunResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in results {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn summary_from_csv(text: &str) -> Result<Vec<RunResult>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(SUMMARY_HEADER) {
        return Err("missing summary header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(RunResult::from_csv)
        .collect()
}

/// The grid of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub experts: Vec<MoveStyle>,
    pub learners: Vec<MoveStyle>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Matrix {
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &expert in &self.experts {
            for &learner in &self.learners {
                for &method in &self.methods {
                    for &seed in &self.seeds {
                        out.push(RunSpec {
                            expert,
                            learner,
                            method,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Runs every cell of `matrix` on top of `base`, writing each run into its
/// own directory under `out_dir` plus `summary.csv`. When `base` names no
/// dataset, one planner dataset per expert style is generated from the base
/// seed and stored under `out_dir/datasets`. Failed runs are recorded and
/// the sweep continues.
pub fn run_matrix(
    base: &ExperimentConfig,
    matrix: &Matrix,
    out_dir: &Path,
    mut progress: impl FnMut(&RunResult),
) -> Result<Vec<RunResult>, TrainError> {
    base.validate()?;
    std::fs::create_dir_all(out_dir).map_err(crate::expert::DatasetError::from)?;
    let mut datasets: Vec<(MoveStyle, PathBuf)> = Vec::new();
    if base.dataset.is_none() && base.lambda > 0.0 {
        let dir = out_dir.join("datasets");
        std::fs::create_dir_all(&dir).map_err(crate::expert::DatasetError::from)?;
        for &style in &matrix.experts {
            let salt = MoveStyle::ALL.iter().position(|&s| s == style).unwrap() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(base.seed ^ (0xda7a << 8) ^ salt);
            let ds = generate_dataset(base.dataset_size, &base.env, style, ExpertSource::Planner, &mut rng)?;
            let path = dir.join(format!("{}.txt", style.name()));
            ds.save(&path)?;
            datasets.push((style, path));
        }
    }
    let mut results = Vec::new();
    for spec in matrix.runs() {
        let mut cfg = spec.config(base);
        if let Some((_, path)) = datasets.iter().find(|(s, _)| *s == spec.expert) {
            cfg.dataset = Some(path.clone());
        }
        let dir = out_dir.join(spec.slug());
        let result = match train(&cfg) {
            Ok(out) => {
                let error = write_outputs(&dir, &cfg, &out).err().map(|e| e.to_string());
                let last = out.metrics.last();
                RunResult {
                    relation: spec.relation(),
                    success: last.map_or(f64::NAN, |m| m.success),
                    mean_steps: last.map_or(f64::NAN, |m| m.mean_steps),
                    iterations: last.map_or(0, |m| m.iteration),
                    spec,
                    error,
                }
            }
            Err(e) => RunResult {
                relation: spec.relation(),
                success: f64::NAN,
                mean_steps: f64::NAN,
                iterations: 0,
                spec,
                error: Some(e.to_string()),
            },
        };
        progress(&result);
        results.push(result);
        std::fs::write(out_dir.join("summary.csv"), summary_to_csv(&results))
            .map_err(crate::expert::DatasetError::from)?;
    }
    Ok(results)
}

/// Reads the metrics of every successful run listed in a sweep summary.
pub fn load_matrix_metrics(out_dir: &Path) -> Result<Vec<(RunResult, Vec<MetricsRow>)>, String> {
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for r in summary_from_csv(&summary)? {
        if r.error.is_some() {
            continue;
        }
        let path = out_dir.join(r.spec.slug()).join("metrics.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        out.push((r, metrics_from_csv(&text)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_codes_match_set_algebra() {
        use MoveStyle::*;
        assert_eq!(Relation::of(FourWay, King), Relation::LearnerSuperset);
        assert_eq!(Relation::of(King, FourWay), Relation::ExpertSuperset);
        assert_eq!(Relation::of(King, Knight), Relation::Disjoint);
        assert_eq!(Relation::of(Knight, Knight), Relation::Same);
        for e in MoveStyle::ALL {
            for l in MoveStyle::ALL {
                let es: Vec<_> = e.displacements().to_vec();
                let ls: Vec<_> = l.displacements().to_vec();
                let inter = es.iter().filter(|d| ls.contains(d)).count();
                let expected = if es.len() == ls.len() && inter == es.len() {
                    "="
                } else if inter == 0 {
                    "D"
                } else if inter == es.len() {
                    "L"
                } else if inter == ls.len() {
                    "E"
                } else {
                    "O"
                };
                assert_eq!(Relation::of(e, l).code(), expected, "{e} {l}");
                assert_ne!(expected, "O");
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["CSD", "SSD-SE", "RTGD", "ATD-SE", "RTGD5-SE"] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("XYZ".parse::<Method>().is_err());
    }

    #[test]
    fn summary_round_trip() {
        let r = RunResult {
            spec: RunSpec {
                expert: MoveStyle::FourWay,
                learner: MoveStyle::Knight,
                method: Method::new(RewardStrategy::Atd, true),
                seed: 3,
            },
            relation: Relation::Disjoint,
            success: 0.625,
            mean_steps: f64::NAN,
            iterations: 100,
            error: Some("boom, again".into()),
        };
        let back = summary_from_csv(&summary_to_csv(std::slice::from_ref(&r))).unwrap();
        assert_eq!(back[0].to_csv(), r.to_csv());
        assert_eq!(back[0].relation, Relation::Disjoint);
    }
}
