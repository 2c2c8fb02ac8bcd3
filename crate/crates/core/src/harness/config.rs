use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::competing::PermutationPolicy;
use crate::copula::CopulaSpec;
use crate::critical::LimitSettings;
use crate::error::{invalid, CvmError, Result};
use crate::weights::{ANDERSON_DARLING, OPTIMAL_NORMAL, UNIFORM};

pub const DEFAULT_MASTER_SEED: u64 = 42;
pub const DEFAULT_RANGE_FRACTION: f64 = 0.05;
pub const T_COPULA_DOF: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Size,
    Power,
    Weaker,
    Bandwidth,
    Comparison,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Size,
        ExperimentKind::Power,
        ExperimentKind::Weaker,
        ExperimentKind::Bandwidth,
        ExperimentKind::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Size => "size",
            ExperimentKind::Power => "power",
            ExperimentKind::Weaker => "weaker",
            ExperimentKind::Bandwidth => "bandwidth",
            ExperimentKind::Comparison => "comparison",
        }
    }

    /// Fixed child index of the master seed for this experiment.
    pub(crate) fn seed_index(self) -> u64 {
        match self {
            ExperimentKind::Size => 1,
            ExperimentKind::Power => 2,
            ExperimentKind::Weaker => 3,
            ExperimentKind::Bandwidth => 4,
            ExperimentKind::Comparison => 5,
        }
    }
}

/// Replication budget: desk (`B = 500`, `M = 200`) or full (`B = 2000`, `M = 1000`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl Scale {
    pub fn size_replications(self) -> usize {
        match self {
            Scale::Desk => 500,
            Scale::Full => 2000,
        }
    }

    pub fn power_replications(self) -> usize {
        match self {
            Scale::Desk => 200,
            Scale::Full => 1000,
        }
    }
}

/// Tests available in the comparison experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonTest {
    CvmAd,
    CvmUniform,
    Mantel,
    CrossK,
    Dcov,
}

impl ComparisonTest {
    pub fn label(self) -> &'static str {
        match self {
            ComparisonTest::CvmAd => "cvm_ad",
            ComparisonTest::CvmUniform => "cvm_uniform",
            ComparisonTest::Mantel => "mantel",
            ComparisonTest::CrossK => "cross_k",
            ComparisonTest::Dcov => "dcov",
        }
    }
}

/// A group of alternatives sharing one set of tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPanel {
    pub name: String,
    pub alternatives: Vec<CopulaSpec>,
    pub tests: Vec<ComparisonTest>,
}

/// Everything one experiment needs. `n = m²` for every grid side `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid_sizes: Vec<usize>,
    pub thetas: Vec<f64>,
    pub weights: Vec<String>,
    pub alternatives: Vec<CopulaSpec>,
    /// Effective range as a fraction of the grid side; the bandwidth
    /// experiment reads each value as the range in grid units.
    pub range_fractions: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `B`: replications under the null.
    pub size_replications: usize,
    /// `M`: replications under each alternative.
    pub power_replications: usize,
    pub panels: Vec<ComparisonPanel>,
    pub policy: PermutationPolicy,
    pub limit: LimitSettings,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

fn gaussians(rhos: &[f64]) -> Vec<CopulaSpec> {
    rhos.iter()
        .map(|&rho| CopulaSpec::Gaussian { rho })
        .collect()
}

fn ts(taus: &[f64]) -> Vec<CopulaSpec> {
    taus.iter()
        .map(|&tau| CopulaSpec::T {
            tau,
            nu_t: T_COPULA_DOF,
        })
        .collect()
}

fn names(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    /// The published grid for `kind`, with replication counts from `scale`.
    pub fn defaults(kind: ExperimentKind, scale: Scale) -> Self {
        let mut cfg = Self {
            kind,
            grid_sizes: vec![20],
            thetas: vec![4.0],
            weights: names(&[ANDERSON_DARLING]),
            alternatives: Vec::new(),
            range_fractions: vec![DEFAULT_RANGE_FRACTION],
            alphas: vec![0.05],
            size_replications: scale.size_replications(),
            power_replications: scale.power_replications(),
            panels: Vec::new(),
            policy: PermutationPolicy::default(),
            limit: LimitSettings::default(),
            seed: DEFAULT_MASTER_SEED,
            out_dir: PathBuf::from("results"),
            workers: None,
        };
        match kind {
            ExperimentKind::Size => {
                cfg.grid_sizes = vec![10, 20];
                cfg.thetas = vec![3.0, 4.0, 6.0];
                cfg.weights = names(&[UNIFORM, ANDERSON_DARLING]);
                cfg.alphas = vec![0.10, 0.05, 0.01];
            }
            ExperimentKind::Power => {
                cfg.weights = names(&[UNIFORM, OPTIMAL_NORMAL, ANDERSON_DARLING]);
                cfg.alternatives = [gaussians(&[0.1, 0.3, 0.5]), ts(&[0.1, 0.3, 0.5])].concat();
            }
            ExperimentKind::Weaker => {
                let grid = [0.05, 0.10, 0.15, 0.20, 0.25];
                cfg.weights = names(&[UNIFORM, ANDERSON_DARLING]);
                cfg.alternatives = [gaussians(&grid), ts(&grid)].concat();
            }
            ExperimentKind::Bandwidth => {
                cfg.range_fractions = vec![0.02, 0.05, 0.10, 0.20];
                cfg.alternatives = [gaussians(&[0.3]), ts(&[0.3])].concat();
            }
            ExperimentKind::Comparison => {
                cfg.panels = vec![
                    ComparisonPanel {
                        name: "spatial".into(),
                        alternatives: [gaussians(&[0.3, 0.5]), ts(&[0.3, 0.5])].concat(),
                        tests: vec![
                            ComparisonTest::CvmAd,
                            ComparisonTest::Mantel,
                            ComparisonTest::CrossK,
                        ],
                    },
                    ComparisonPanel {
                        name: "dcov".into(),
                        alternatives: [gaussians(&[0.1, 0.2, 0.3]), ts(&[0.1, 0.2, 0.3])].concat(),
                        tests: vec![
                            ComparisonTest::CvmAd,
                            ComparisonTest::CvmUniform,
                            ComparisonTest::Dcov,
                        ],
                    },
                ];
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_sizes.is_empty() || self.grid_sizes.iter().any(|&m| m < 2) {
            return Err(invalid("grid sizes must be at least 2"));
        }
        if self.size_replications == 0 || self.power_replications == 0 {
            return Err(invalid("replication counts must be at least 1"));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(invalid("alphas must lie in (0, 1)"));
        }
        if self.range_fractions.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return Err(invalid("range fractions must be positive"));
        }
        for a in self
            .alternatives
            .iter()
            .chain(self.panels.iter().flat_map(|p| &p.alternatives))
        {
            a.validate()?;
        }
        self.policy.validate()?;
        self.limit.validate()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir
            .join("checkpoints")
            .join(format!("{}.jsonl", self.kind.name()))
    }
}

/// Optional per-experiment overrides read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentOverrides {
    pub grid_sizes: Option<Vec<usize>>,
    pub thetas: Option<Vec<f64>>,
    pub weights: Option<Vec<String>>,
    pub alternatives: Option<Vec<CopulaSpec>>,
    pub range_fractions: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub size_replications: Option<usize>,
    pub power_replications: Option<usize>,
    pub panels: Option<Vec<ComparisonPanel>>,
    pub policy: Option<PermutationPolicy>,
}

/// Top-level configuration file.
///
/// ```toml
/// seed = 7
/// scale = "desk"
///
/// [limit]
/// j = 200
/// n_mc = 200000
/// chunk = 5000
/// seed = 20240101
///
/// [power]
/// power_replications = 50
/// alternatives = [{ kind = "gaussian", rho = 0.3 }]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub scale: Option<Scale>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub limit: Option<LimitSettings>,
    pub size: Option<ExperimentOverrides>,
    pub power: Option<ExperimentOverrides>,
    pub weaker: Option<ExperimentOverrides>,
    pub bandwidth: Option<ExperimentOverrides>,
    pub comparison: Option<ExperimentOverrides>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CvmError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CvmError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn overrides(&self, kind: ExperimentKind) -> Option<&ExperimentOverrides> {
        match kind {
            ExperimentKind::Size => self.size.as_ref(),
            ExperimentKind::Power => self.power.as_ref(),
            ExperimentKind::Weaker => self.weaker.as_ref(),
            ExperimentKind::Bandwidth => self.bandwidth.as_ref(),
            ExperimentKind::Comparison => self.comparison.as_ref(),
        }
    }

    /// Defaults for `kind` at `scale`, with this file's values laid on top.
    pub fn resolve(&self, kind: ExperimentKind, scale: Scale) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(kind, self.scale.unwrap_or(scale));
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.workers = self.workers.or(cfg.workers);
        if let Some(l) = self.limit {
            cfg.limit = l;
        }
        if let Some(o) = self.overrides(kind) {
            macro_rules! take {
                ($($f:ident),*) => {$(if let Some(v) = &o.$f { cfg.$f = v.clone(); })*};
            }
            take!(
                grid_sizes,
                thetas,
                weights,
                alternatives,
                range_fractions,
                alphas,
                size_replications,
                power_replications,
                panels,
                policy
            );
        }
        cfg
    }
}
