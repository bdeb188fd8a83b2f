//! Experiment configuration: a TOML file, then flag overrides.

use std::path::{Path, PathBuf};

use isosand_core::isograph::GraphSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the root that relative output paths live under.
pub const OUT_ROOT_VAR: &str = "ISOSAND_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Grain counts: a number, a list, or a geometric sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GrainSpec {
    Geometric { start: f64, ratio: f64, count: usize },
    List(OneOrMany),
}

impl GrainSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GrainSpec::Geometric { start, ratio, count } => {
                (0..*count).map(|i| start * ratio.powi(i as i32)).collect()
            }
            GrainSpec::List(l) => l.values(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative stopping tolerance of the Green solvers.
    pub solver: f64,
    /// `‖Δ^m Gr − δ‖∞` accepted after a solve.
    pub residual: f64,
    /// Relative CG/Neumann disagreement accepted.
    pub cross_validation: f64,
    /// Odometer-identity residual, relative to `N`.
    pub identity: f64,
    /// Mass-balance error, relative to `N`.
    pub mass_balance: f64,
    /// Agreement between stabilizers run in different orders.
    pub order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver: 1e-14,
            residual: 1e-9,
            cross_validation: 1e-9,
            identity: 1e-8,
            mass_balance: 1e-9,
            order: 1e-9,
        }
    }
}

/// The file form: every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub graph: Option<GraphSpec>,
    pub k: Option<OneOrMany>,
    pub n: Option<GrainSpec>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub bins: Option<usize>,
    pub margin: Option<u32>,
    /// Solve the Green function and check the threshold sandwich in `simulate`.
    pub green: Option<bool>,
    #[serde(default)]
    pub emit: Emit,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub k: Vec<f64>,
    pub n: Vec<f64>,
    pub seed: u64,
    pub output: PathBuf,
    pub workers: Option<usize>,
    pub bins: usize,
    pub margin: u32,
    pub green: bool,
    pub emit: Emit,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn resolve(file: FileConfig, default_output: &str) -> Result<Self, CliError> {
        let graph = file
            .graph
            .ok_or_else(|| CliError::Usage("no graph given (use --graph or a config file)".into()))?;
        let output = file.output.unwrap_or_else(|| PathBuf::from(default_output));
        let output = if output.is_absolute() {
            output
        } else {
            match std::env::var_os(OUT_ROOT_VAR) {
                Some(root) => PathBuf::from(root).join(output),
                None => output,
            }
        };
        let cfg = ExperimentConfig {
            graph,
            k: file.k.map(|k| k.values()).unwrap_or_default(),
            n: file.n.map(|n| n.values()).unwrap_or_default(),
            seed: file.seed.unwrap_or(0),
            output,
            workers: file.workers,
            bins: file.bins.unwrap_or(32),
            margin: file.margin.unwrap_or(isosand_core::sandpile::DEFAULT_MARGIN),
            green: file.green.unwrap_or(false),
            emit: file.emit,
            tolerances: file.tolerances,
        };
        cfg.check_basic()?;
        Ok(cfg)
    }

    fn check_basic(&self) -> Result<(), CliError> {
        for &k in &self.k {
            if !(0.0..1.0).contains(&k) {
                return Err(CliError::Usage(format!("k = {k} is outside [0, 1)")));
            }
        }
        for &n in &self.n {
            if !(n >= 1.0) || !n.is_finite() {
                return Err(CliError::Usage(format!("N = {n} must be a finite number ≥ 1")));
            }
        }
        if self.bins < 4 {
            return Err(CliError::Usage("bins must be at least 4".into()));
        }
        Ok(())
    }

    pub fn require_k(&self) -> Result<(), CliError> {
        if self.k.is_empty() {
            return Err(CliError::Usage("no modulus given (use --k or `k` in the config)".into()));
        }
        Ok(())
    }

    /// Sandpile and threshold experiments need a massive walk.
    pub fn require_massive(&self) -> Result<(), CliError> {
        self.require_k()?;
        if let Some(k) = self.k.iter().find(|&&k| k <= 0.0) {
            return Err(CliError::Usage(format!("k = {k}: sandpile experiments need k > 0")));
        }
        Ok(())
    }

    pub fn require_grains(&self) -> Result<(), CliError> {
        if self.n.is_empty() {
            return Err(CliError::Usage("no grain count given (use --n or `n` in the config)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scenario_shapes() {
        let f: FileConfig = toml::from_str(
            r#"
            k = [0.3, 0.1]
            n = { start = 1e3, ratio = 10.0, count = 3 }
            [graph]
            builder = "multigrid"
            d = 5
            offsets = [0.1, 0.2, 0.3, 0.4, 0.15]
            radius = 30.0
            [tolerances]
            identity = 1e-9
            "#,
        )
        .unwrap();
        assert_eq!(f.n.unwrap().values(), vec![1e3, 1e4, 1e5]);
        assert_eq!(f.k.unwrap().values(), vec![0.3, 0.1]);
        assert_eq!(f.tolerances.identity, 1e-9);
        assert_eq!(f.tolerances.order, 1e-9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<FileConfig>("colour = 3").is_err());
        let f: FileConfig = toml::from_str("k = 1.5\n[graph]\nbuilder = \"square\"\nradius = 4").unwrap();
        assert!(ExperimentConfig::resolve(f, "out").is_err());
    }
}
