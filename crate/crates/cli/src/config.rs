//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema = 1
//! seed = 42
//! workers = 0            # 0: all cores
//! output = "runs/a"      # else $TREEWALK_OUT, else ./treewalk-out
//!
//! [model]
//! kind = "calibrated"    # calibrated | lambda_biased | two_point_marks | tabulated
//! kappa = 1.5
//! offspring = 2
//! ```
//!
//! Each command reads its own section (`[walk]`, `[reduce]`, `[heights]`,
//! `[spine]`, `[eigen]`, `[verify]`, `[tails]`, `[scaling]`,
//! `[check_env]`); every field has a default. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use treewalk::env::Atom;
use treewalk::stats::experiments::{IdentityBudget, ScalingConfig};
use treewalk::{calibrate_two_point, EnvironmentModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default, deserialize_with = "seed_value")]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default)]
    pub check_env: CheckEnvSection,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub reduce: ReduceSection,
    #[serde(default)]
    pub heights: HeightsSection,
    #[serde(default)]
    pub spine: SpineSection,
    #[serde(default)]
    pub eigen: EigenSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub tails: TailsSection,
    #[serde(default)]
    pub scaling: ScalingSection,
}

/// Seeds may be written as integers or, above `i64::MAX`, as strings.
fn seed_value<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Text(s) => s.trim().parse().map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Two-point marks tuned to a target `κ`.
    Calibrated {
        kappa: f64,
        #[serde(default = "two")]
        offspring: u32,
    },
    LambdaBiased {
        m: u32,
        lambda: f64,
    },
    TwoPointMarks {
        offspring: u32,
        mark_low: f64,
        mark_high: f64,
        prob_low: f64,
    },
    Tabulated {
        atoms: Vec<Atom>,
    },
}

fn two() -> u32 {
    2
}

impl ModelSpec {
    pub fn resolve(&self) -> treewalk::Result<EnvironmentModel> {
        let model = match self {
            ModelSpec::Calibrated { kappa, offspring } => calibrate_two_point(*kappa, *offspring)?,
            ModelSpec::LambdaBiased { m, lambda } => EnvironmentModel::LambdaBiased { m: *m, lambda: *lambda },
            ModelSpec::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => EnvironmentModel::TwoPointMarks {
                offspring: *offspring,
                mark_low: *mark_low,
                mark_high: *mark_high,
                prob_low: *prob_low,
            },
            ModelSpec::Tabulated { atoms } => EnvironmentModel::Tabulated { atoms: atoms.clone() },
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckEnvSection {
    /// Right end of the `ψ` grid; defaults to `max(3, κ + 1)`.
    pub psi_max: Option<f64>,
    pub psi_points: usize,
    pub tolerance: f64,
}

impl Default for CheckEnvSection {
    fn default() -> Self {
        CheckEnvSection {
            psi_max: None,
            psi_points: 201,
            tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    Forest,
    Reflected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub mode: WalkKind,
    /// Step count of a forest walk, step cap of a reflected one.
    pub steps: usize,
    /// Returns to the artificial parent before a reflected walk stops.
    pub excursions: usize,
    pub vertex_budget: usize,
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection {
            mode: WalkKind::Forest,
            steps: 10_000,
            excursions: 1,
            vertex_budget: 50_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSection {
    pub walks: usize,
    pub steps: usize,
}

impl Default for ReduceSection {
    fn default() -> Self {
        ReduceSection { walks: 1000, steps: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeightsSection {
    pub steps: usize,
    pub replicates: usize,
    /// Keep every `stride`-th height in the CSV.
    pub stride: usize,
    /// Normalizing `κ`; defaults to the model's.
    pub kappa: Option<f64>,
}

impl Default for HeightsSection {
    fn default() -> Self {
        HeightsSection {
            steps: 100_000,
            replicates: 1,
            stride: 1,
            kappa: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpineWalkKind {
    Full,
    Collapsed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpineSection {
    pub samples: usize,
    /// Fixed depth; when absent each sample stops at its first return.
    pub depth: Option<usize>,
    pub max_depth: usize,
    pub walks: SpineWalkKind,
    pub walk_budget: usize,
    pub line_budget: Option<usize>,
}

impl Default for SpineSection {
    fn default() -> Self {
        SpineSection {
            samples: 1000,
            depth: None,
            max_depth: 100_000,
            walks: SpineWalkKind::Collapsed,
            walk_budget: 10_000_000,
            line_budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub i_max: usize,
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for EigenSection {
    fn default() -> Self {
        EigenSection {
            i_max: 10,
            samples: 100_000,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identity,
    Distribution,
    Martingale,
    Reductions,
    Appendix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub suites: Vec<Suite>,
    pub excursions: usize,
    pub spine_samples: usize,
    pub chain_samples: usize,
    pub eigen_samples: usize,
    pub eigen_max_steps: usize,
    pub walk_steps: usize,
    pub walk_replicates: usize,
    pub vertex_budget: usize,
    pub walk_budget: usize,
    pub distribution_samples: usize,
    pub root_beta: u64,
    pub z_excursions: usize,
    pub z_depth: u32,
    pub w_trees: usize,
    pub w_depth: usize,
    pub reduction_walks: usize,
    pub reduction_steps: usize,
    pub lyapunov_alpha: f64,
    pub lyapunov_range: (u64, u64),
    pub lyapunov_truncation: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suites: vec![
                Suite::Identity,
                Suite::Distribution,
                Suite::Martingale,
                Suite::Reductions,
                Suite::Appendix,
            ],
            excursions: 100_000,
            spine_samples: 100_000,
            chain_samples: 100_000,
            eigen_samples: 100_000,
            eigen_max_steps: 1_000_000,
            walk_steps: 1_000_000,
            walk_replicates: 16,
            vertex_budget: 10_000_000,
            walk_budget: 10_000_000,
            distribution_samples: 100_000,
            root_beta: 3,
            z_excursions: 100_000,
            z_depth: 3,
            w_trees: 100_000,
            w_depth: 10,
            reduction_walks: 1000,
            reduction_steps: 1000,
            lyapunov_alpha: 0.3,
            lyapunov_range: (20, 60),
            lyapunov_truncation: 100_000,
        }
    }
}

impl VerifySection {
    pub fn identity_budget(&self) -> IdentityBudget {
        IdentityBudget {
            excursions: self.excursions,
            spine_samples: self.spine_samples,
            chain_samples: self.chain_samples,
            eigen_samples: self.eigen_samples,
            eigen_max_steps: self.eigen_max_steps,
            walk_steps: self.walk_steps,
            walk_replicates: self.walk_replicates,
            vertex_budget: self.vertex_budget,
            walk_budget: self.walk_budget,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsSection {
    pub line_samples: usize,
    /// Exponents `e` of the Hill sweep, at `k = ⌈n^e⌉`.
    pub hill_exponents: Vec<f64>,
    pub w_samples: usize,
    pub w_depth: u32,
    pub w_eps: f64,
    /// `n` values for the convergence of `L^1/n`; empty to skip.
    pub convergence_n: Vec<u64>,
    pub convergence_samples: usize,
    pub convergence_alpha: f64,
}

impl Default for TailsSection {
    fn default() -> Self {
        TailsSection {
            line_samples: 1_000_000,
            hill_exponents: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            w_samples: 100_000,
            w_depth: 60,
            w_eps: 1e-2,
            convergence_n: Vec::new(),
            convergence_samples: 2000,
            convergence_alpha: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub times: Vec<f64>,
    pub kappa: Option<f64>,
    pub gamma_m: f64,
    pub gamma_n: u64,
    pub vertex_budget: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let c = ScalingConfig::default();
        ScalingSection {
            n_grid: c.n_grid,
            replicates: c.replicates,
            times: c.times,
            kappa: c.kappa,
            gamma_m: c.gamma_m,
            gamma_n: c.gamma_n,
            vertex_budget: c.vertex_budget,
        }
    }
}

impl ScalingSection {
    pub fn to_config(&self) -> ScalingConfig {
        ScalingConfig {
            n_grid: self.n_grid.clone(),
            replicates: self.replicates,
            times: self.times.clone(),
            kappa: self.kappa,
            gamma_m: self.gamma_m,
            gamma_n: self.gamma_n,
            vertex_budget: self.vertex_budget,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if c.schema != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                c.schema
            )));
        }
        c.model.resolve().map_err(|e| ConfigError(e.to_string()))?;
        Ok(c)
    }

    /// SHA-256 of the canonical JSON form, leaving out `output` and
    /// `workers`, which do not change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.workers = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
