//! TOML experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::development::SchemeChoice;
use crate::error::{Error, Result};
use crate::functional::PathFunctional;
use crate::limit::RefinementChain;
use crate::manifold::{Manifold, Point};
use crate::partition::Partition;
use crate::stratonovich::{AmbientField, ScalarFn};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "WIENERPATH_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// `n` equal segments.
    Uniform { n: usize },
    /// Chain `n = 2, 4, …, 2^levels`.
    Dyadic { levels: u32 },
    /// Explicit times from 0 to 1.
    Times { times: Vec<f64> },
    /// Chain of uniform partitions with the given segment counts.
    Chain { counts: Vec<usize> },
}

impl PartitionSpec {
    pub fn chain(&self) -> Result<RefinementChain> {
        match self {
            PartitionSpec::Uniform { n } => RefinementChain::uniform(&[*n]),
            PartitionSpec::Dyadic { levels } => RefinementChain::dyadic(*levels),
            PartitionSpec::Times { times } => RefinementChain::new(vec![Partition::new(times.clone())?]),
            PartitionSpec::Chain { counts } => RefinementChain::uniform(counts),
        }
    }

    /// The finest partition described here.
    pub fn single(&self) -> Result<Arc<Partition>> {
        Ok(self.chain()?.finest().clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Mc,
    Quadrature,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// File stem; defaults to the subcommand name.
    pub stem: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub plot: bool,
}

/// Settings for the `kernel` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Times at which the normalization residual is reported.
    pub times: Vec<f64>,
    /// Semigroup check `p_{s+t}` against `∫ p_s p_t`.
    pub s: Option<f64>,
    pub t: Option<f64>,
    /// Second point for kernel values and the semigroup check.
    pub target: Option<Vec<f64>>,
}

/// Settings for the `develop` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevelopConfig {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: Manifold,
    /// Base point coordinates; the manifold default when absent.
    pub base_point: Option<Vec<f64>>,
    pub partition: Option<PartitionSpec>,
    pub functional: Option<PathFunctional>,
    /// `converge`: root partition (segment count) of an embedded family.
    pub embed_root: Option<usize>,
    pub field: Option<AmbientField>,
    /// `stratonovich`: scalar whose gradient gives the exact-form residual.
    pub scalar: Option<ScalarFn>,
    pub samples: Option<usize>,
    /// Per-level sample counts along a chain.
    pub budgets: Option<Vec<usize>>,
    #[serde(default)]
    pub method: MethodChoice,
    /// Quadrature nodes per circle factor.
    pub grid: Option<usize>,
    pub scheme: Option<SchemeChoice>,
    /// Norm exponent for diagnostics, 1 or 2.
    pub p: Option<f64>,
    /// Known exact value, drawn as a dashed line in plots.
    pub reference: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    pub kernel: Option<KernelConfig>,
    pub develop: Option<DevelopConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    /// Schema checks that do not need a subcommand.
    pub fn validate(&self) -> Result<()> {
        let m = self.manifold.clone().validated().map_err(|e| Error::Config(e.to_string()))?;
        self.base(&m)?;
        if let Some(p) = &self.partition {
            p.chain().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(f) = &self.functional {
            f.validate(&m).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(f) = &self.field {
            f.validate(&m).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(g) = &self.scalar {
            g.validate(&m).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(p) = self.p {
            if p != 1.0 && p != 2.0 {
                return Err(Error::Config(format!("p must be 1 or 2, got {p}")));
            }
        }
        if self.samples == Some(0) || self.budgets.as_ref().is_some_and(|b| b.contains(&0)) {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn base(&self, manifold: &Manifold) -> Result<Point> {
        match &self.base_point {
            Some(c) => manifold.point(c).map_err(|e| Error::Config(format!("base_point: {e}"))),
            None => Ok(manifold.default_base()),
        }
    }

    pub fn require_partition(&self) -> Result<&PartitionSpec> {
        self.partition.as_ref().ok_or_else(|| Error::Config("missing [partition]".into()))
    }

    pub fn require_functional(&self) -> Result<&PathFunctional> {
        self.functional.as_ref().ok_or_else(|| Error::Config("missing [functional]".into()))
    }

    /// Samples for each of `levels` chain levels.
    pub fn level_samples(&self, levels: usize) -> Result<Vec<usize>> {
        match (&self.budgets, self.samples) {
            (Some(b), _) if b.len() == levels => Ok(b.clone()),
            (Some(b), _) => Err(Error::Config(format!("budgets has {} entries for {levels} levels", b.len()))),
            (None, Some(s)) => Ok(vec![s; levels]),
            (None, None) => Err(Error::Config("missing samples".into())),
        }
    }
}
