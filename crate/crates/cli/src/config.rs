//! Experiment configuration: JSON schema structs and the builders that turn
//! specs into spaces, weights, kernels and symbol sets.
//!
//! Relative file paths resolve against OSL_DATA_DIR when set, else the
//! current directory. Validation errors carry the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use osl_core::grid::{build_euclidean_grids, build_hk_system, DyadicSystem, GridSpace, GridSpaceJson};
use osl_core::orlicz::YoungFn;
use osl_core::symbols::{log_symbol, split_symbol, SymbolSet};
use osl_core::verify::{ConstantsConfig, TheoremTag};
use osl_core::{KernelOp, Weight};

/// A validation failure with the offending field path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(path: &str, message: impl ToString) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSpec {
    Euclidean { n: usize, depth: u32, #[serde(default = "default_shifts")] shifts: usize },
    Hk { file: String, delta: f64, #[serde(default)] seed: u64 },
    Random1d { n: usize, seed: u64 },
    Random2d { n: usize, seed: u64 },
}

fn default_shifts() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Constant { c: f64 },
    Power { a: f64, x0: f64, #[serde(default)] floor: Option<f64> },
    Step { split: usize, hi: f64, lo: f64 },
    Lognormal { seed: u64, sigma: f64 },
    File { file: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Zero,
    Averaging,
    Hilbert,
    LogRegularized,
    RandomAntisymmetric { seed: u64 },
    Table { file: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolSpec {
    None,
    Log { m: usize, r: f64 },
    Split { m: usize, r: f64, at: usize },
    Random { m: usize, r: f64, seed: u64 },
    File { file: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaGridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    #[serde(default)]
    pub u: Option<WeightSpec>,
    #[serde(default)]
    pub v: Option<WeightSpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub symbols: Option<SymbolSpec>,
    #[serde(default)]
    pub theorem: Option<TheoremTag>,
    #[serde(default)]
    pub young: Option<YoungFn>,
    #[serde(default)]
    pub lambda: Option<LambdaGridSpec>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_eps() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-10
}

fn default_budget() -> f64 {
    1.0
}

/// Resolve a config-relative path against OSL_DATA_DIR.
pub fn resolve_path(file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os("OSL_DATA_DIR") {
        Some(dir) => Path::new(&dir).join(p),
        None => p.to_path_buf(),
    }
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(ConfigError::new("<root>", "empty config"));
    }
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError::new("<root>", format!("parse error: {e}")))?;
    validate(&cfg)?;
    Ok((cfg, text))
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    match &cfg.space {
        SpaceSpec::Euclidean { n, depth, shifts } => {
            if !n.is_power_of_two() {
                return Err(ConfigError::new("space.euclidean.n", "must be a power of two"));
            }
            if (1u128 << depth) > *n as u128 {
                return Err(ConfigError::new("space.euclidean.depth", "2^depth exceeds n"));
            }
            if *shifts != 1 && *shifts != 3 {
                return Err(ConfigError::new("space.euclidean.shifts", "must be 1 or 3"));
            }
        }
        SpaceSpec::Hk { delta, .. } => {
            if !(*delta > 0.0 && *delta < 1.0) {
                return Err(ConfigError::new("space.hk.delta", "must lie in (0,1)"));
            }
        }
        SpaceSpec::Random1d { n, .. } | SpaceSpec::Random2d { n, .. } => {
            if *n == 0 {
                return Err(ConfigError::new("space.n", "must be positive"));
            }
        }
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(ConfigError::new("eps", "must lie in (0,1)"));
    }
    if let Some(tag) = &cfg.theorem {
        let (p, e) = match tag {
            TheoremTag::Thm1 { p, r, .. } | TheoremTag::HomT { p, r, .. } => (*p, *r),
            TheoremTag::Thm2 { p, s, .. }
            | TheoremTag::Thm3 { p, s, .. }
            | TheoremTag::HomTb { p, s, .. } => (*p, *s),
        };
        if p < 1.0 {
            return Err(ConfigError::new("theorem.p", "must be >= 1"));
        }
        if e < 1.0 {
            return Err(ConfigError::new("theorem.r", "must be >= 1"));
        }
    }
    if let Some(l) = &cfg.lambda {
        if l.n == 0 || !(l.hi > l.lo) || l.lo <= 0.0 {
            return Err(ConfigError::new("lambda", "needs 0 < lo < hi and n > 0"));
        }
    }
    Ok(())
}

pub struct BuiltSpace {
    pub space: GridSpace,
    pub systems: Vec<DyadicSystem>,
}

pub fn build_space(spec: &SpaceSpec) -> anyhow::Result<BuiltSpace> {
    match spec {
        SpaceSpec::Euclidean { n, depth, shifts } => {
            let (space, systems) = build_euclidean_grids(*n, *depth, *shifts)?;
            Ok(BuiltSpace { space, systems })
        }
        SpaceSpec::Hk { file, delta, seed } => {
            let text = std::fs::read_to_string(resolve_path(file))?;
            let j: GridSpaceJson = serde_json::from_str(&text)?;
            let space = GridSpace::from_json(&j)?;
            let sys = build_hk_system(&space, *delta, *seed)?;
            Ok(BuiltSpace { space, systems: vec![sys] })
        }
        SpaceSpec::Random1d { n, seed } => {
            let space = GridSpace::random_1d(*n, *seed)?;
            let sys = build_hk_system(&space, 0.5, *seed)?;
            Ok(BuiltSpace { space, systems: vec![sys] })
        }
        SpaceSpec::Random2d { n, seed } => {
            let space = GridSpace::random_2d(*n, *seed)?;
            let sys = build_hk_system(&space, 0.5, *seed)?;
            Ok(BuiltSpace { space, systems: vec![sys] })
        }
    }
}

pub fn build_weight(spec: &WeightSpec, space: &GridSpace) -> anyhow::Result<Weight> {
    let n = space.len();
    Ok(match spec {
        WeightSpec::Constant { c } => Weight::constant(n, *c)?,
        WeightSpec::Power { a, x0, floor } => {
            let h = floor.unwrap_or(1.0 / (2.0 * n as f64));
            Weight::power(space, *a, *x0, h)?
        }
        WeightSpec::Step { split, hi, lo } => Weight::step(n, *split, *hi, *lo)?,
        WeightSpec::Lognormal { seed, sigma } => Weight::lognormal(n, *seed, *sigma)?,
        WeightSpec::File { file } => {
            let text = std::fs::read_to_string(resolve_path(file))?;
            let values: Vec<f64> = serde_json::from_str(&text)?;
            Weight::new(values)?
        }
    })
}

pub fn build_kernel(spec: &KernelSpec, space: &GridSpace) -> anyhow::Result<KernelOp> {
    Ok(match spec {
        KernelSpec::Zero => KernelOp::zero(space.len()),
        KernelSpec::Averaging => KernelOp::averaging(space),
        KernelSpec::Hilbert => KernelOp::hilbert(space)?,
        KernelSpec::LogRegularized => KernelOp::log_regularized(space)?,
        KernelSpec::RandomAntisymmetric { seed } => {
            KernelOp::random_antisymmetric(space.len(), *seed)
        }
        KernelSpec::Table { file } => {
            let text = std::fs::read_to_string(resolve_path(file))?;
            let table: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            KernelOp::from_table(table, "table")?
        }
    })
}

pub fn build_symbols(spec: &SymbolSpec, space: &GridSpace) -> anyhow::Result<SymbolSet> {
    Ok(match spec {
        SymbolSpec::None => SymbolSet::empty(),
        SymbolSpec::Log { m, r } => SymbolSet::repeated(log_symbol(space)?, *m, *r)?,
        SymbolSpec::Split { m, r, at } => {
            SymbolSet::repeated(split_symbol(space.len(), *at), *m, *r)?
        }
        SymbolSpec::Random { m, r, seed } => {
            let mut rng = osl_core::rng::SplitMix64::new(*seed);
            let symbols: Vec<Vec<f64>> = (0..*m)
                .map(|_| (0..space.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
                .collect();
            SymbolSet::new(symbols, vec![*r; *m])?
        }
        SymbolSpec::File { file } => {
            let text = std::fs::read_to_string(resolve_path(file))?;
            serde_json::from_str(&text)?
        }
    })
}

/// FNV-1a 64 over the raw config bytes; embedded in every artifact.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
