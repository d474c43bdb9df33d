//! Run configuration: one TOML file drives every subcommand.
//!
//! Each section corresponds to an experiment family and carries desk-scale
//! defaults, so an absent file (or empty sections) still produces a full run.
//! Unknown keys are hard errors — sweeps must stay auditable and diffable —
//! and the TOML parser reports them with line/column diagnostics.

use serde::Deserialize;

use rrr::kernels::KernelSpec;

use crate::synth::SyntheticLinearConfig;

/// Default master seed for cell fan-out (overridable via `--seed`).
pub const DEFAULT_MASTER_SEED: u64 = 7777;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Seed hashed with (experiment id, cell index) to give every cell its
    /// own RNG stream.
    pub master_seed: u64,
    pub synthetic: SyntheticLinearConfig,
    pub fig1: Fig1Config,
    pub fig2: Fig2Config,
    pub monotonicity: MonotonicityConfig,
    pub koopman: KoopmanConfig,
    pub bench: BenchConfig,
    pub risk: RiskConfig,
    pub bounds: BoundsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            master_seed: DEFAULT_MASTER_SEED,
            synthetic: SyntheticLinearConfig::default(),
            fig1: Fig1Config::default(),
            fig2: Fig2Config::default(),
            monotonicity: MonotonicityConfig::default(),
            koopman: KoopmanConfig::default(),
            bench: BenchConfig::default(),
            risk: RiskConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

impl Config {
    /// Parses a TOML document; parse errors keep the parser's line/column
    /// diagnostics so config typos point at themselves.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| format!("config error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.synthetic.validate().map_err(|e| format!("[synthetic] {e}"))?;
        self.fig1.validate().map_err(|e| format!("[fig1] {e}"))?;
        self.fig2.validate().map_err(|e| format!("[fig2] {e}"))?;
        self.monotonicity.validate().map_err(|e| format!("[monotonicity] {e}"))?;
        self.koopman.validate().map_err(|e| format!("[koopman] {e}"))?;
        self.bench.validate().map_err(|e| format!("[bench] {e}"))?;
        self.risk.validate().map_err(|e| format!("[risk] {e}"))?;
        self.bounds.validate().map_err(|e| format!("[bounds] {e}"))?;
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<(), String> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(format!("gamma must be a positive finite number, got {gamma}"));
    }
    Ok(())
}

fn check_seeds(seeds: usize) -> Result<(), String> {
    if seeds == 0 {
        return Err("seeds must be at least 1 (an empty seed list runs nothing)".into());
    }
    Ok(())
}

fn check_sketch(s: usize, p: usize) -> Result<(), String> {
    if s < 2 {
        return Err(format!("oversampling must be at least 2, got {s}"));
    }
    if p == 0 {
        return Err("power must be at least 1".into());
    }
    Ok(())
}

/// Gap-bound sweeps over rank (at fixed oversampling) and oversampling (at
/// fixed rank), both sketch distributions, many seeds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Config {
    pub gamma: f64,
    pub power: usize,
    pub rank_sweep: Vec<usize>,
    pub rank_sweep_oversampling: usize,
    pub oversampling_sweep: Vec<usize>,
    pub oversampling_sweep_rank: usize,
    pub seeds: usize,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            power: 1,
            rank_sweep: (1..=15).collect(),
            rank_sweep_oversampling: 5,
            oversampling_sweep: (2..=25).collect(),
            oversampling_sweep_rank: 5,
            seeds: 200,
        }
    }
}

impl Fig1Config {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_seeds(self.seeds)?;
        if self.rank_sweep.is_empty() || self.oversampling_sweep.is_empty() {
            return Err("rank_sweep and oversampling_sweep must be non-empty".into());
        }
        for &r in &self.rank_sweep {
            if r == 0 {
                return Err("rank_sweep entries must be at least 1".into());
            }
            check_sketch(self.rank_sweep_oversampling, self.power)?;
        }
        for &s in &self.oversampling_sweep {
            check_sketch(s, self.power)?;
        }
        if self.oversampling_sweep_rank == 0 {
            return Err("oversampling_sweep_rank must be at least 1".into());
        }
        Ok(())
    }
}

/// Risk-parity n-sweep: exact vs randomized dual on nested training subsets.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Config {
    pub gamma: f64,
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
    pub n_sweep: Vec<usize>,
    pub seeds: usize,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            rank: 15,
            oversampling: 20,
            power: 1,
            n_sweep: vec![250, 500, 1000, 2000],
            seeds: 10,
        }
    }
}

impl Fig2Config {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_seeds(self.seeds)?;
        check_sketch(self.oversampling, self.power)?;
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        if self.n_sweep.is_empty() {
            return Err("n_sweep must be non-empty".into());
        }
        if self.n_sweep.iter().any(|&n| n < 2) {
            return Err("n_sweep entries must be at least 2".into());
        }
        Ok(())
    }
}

/// Gap monotonicity grid over power × oversampling at fixed rank.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotonicityConfig {
    pub gamma: f64,
    pub rank: usize,
    pub powers: Vec<usize>,
    pub oversamplings: Vec<usize>,
    pub seeds: usize,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        Self { gamma: 1e-6, rank: 5, powers: vec![1, 2, 3], oversamplings: vec![2, 5, 10, 20], seeds: 200 }
    }
}

impl MonotonicityConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_seeds(self.seeds)?;
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        if self.powers.is_empty() || self.oversamplings.is_empty() {
            return Err("powers and oversamplings must be non-empty".into());
        }
        for &p in &self.powers {
            for &s in &self.oversamplings {
                check_sketch(s, p)?;
            }
        }
        Ok(())
    }
}

/// Kernel selection as it appears in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub lengthscale: Option<f64>,
}

impl KernelConfig {
    pub fn to_spec(&self) -> Result<KernelSpec, String> {
        let spec = match self.family.as_str() {
            "linear" => {
                if self.lengthscale.is_some() {
                    return Err("the linear kernel takes no lengthscale".into());
                }
                KernelSpec::linear()
            }
            "gaussian" => KernelSpec::gaussian(
                self.lengthscale.ok_or("the gaussian kernel needs a lengthscale")?,
            ),
            "matern12" => KernelSpec::matern12(
                self.lengthscale.ok_or("the matern12 kernel needs a lengthscale")?,
            ),
            other => {
                return Err(format!(
                    "unknown kernel family {other:?}; expected linear, gaussian, or matern12"
                ))
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// Transfer-operator eigenvalue study on the noisy logistic map.
///
/// The default kernel is a wide Gaussian on the raw [0,1] coordinate: at
/// γ = 1e-7 only a handful of its modes survive regularization, which is
/// what makes the rank-3 fit's eigenvalues track the operator's (rough
/// kernels land in a truncated-SVD regime whose eigenvalues do not).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoopmanConfig {
    pub noise_order: usize,
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
    pub gamma: f64,
    pub kernel: KernelConfig,
    pub n_sweep: Vec<usize>,
    pub seeds_per_n: Vec<usize>,
    pub x0: f64,
    pub basis_size: usize,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        Self {
            noise_order: 20,
            rank: 3,
            oversampling: 20,
            power: 1,
            gamma: 1e-7,
            kernel: KernelConfig { family: "gaussian".into(), lengthscale: Some(0.8) },
            n_sweep: vec![500, 1000, 2000, 5000, 10000],
            seeds_per_n: vec![8, 8, 6, 4, 3],
            x0: 0.6,
            basis_size: 128,
        }
    }
}

impl KoopmanConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_sketch(self.oversampling, self.power)?;
        if self.noise_order == 0 {
            return Err("noise_order must be at least 1".into());
        }
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        self.kernel.to_spec()?;
        if self.n_sweep.is_empty() {
            return Err("n_sweep must be non-empty".into());
        }
        if self.n_sweep.iter().any(|&n| n < 8) {
            return Err("n_sweep entries must be at least 8".into());
        }
        if self.seeds_per_n.len() != self.n_sweep.len() {
            return Err(format!(
                "seeds_per_n has {} entries but n_sweep has {}",
                self.seeds_per_n.len(),
                self.n_sweep.len()
            ));
        }
        if self.seeds_per_n.iter().any(|&s| s == 0) {
            return Err("seeds_per_n entries must be at least 1".into());
        }
        if !(self.x0.is_finite() && (0.0..=1.0).contains(&self.x0)) {
            return Err(format!("x0 must lie in [0, 1], got {}", self.x0));
        }
        if self.basis_size < 3 * self.noise_order {
            return Err(format!(
                "basis_size = {} is too small for noise_order = {}; need at least {}",
                self.basis_size,
                self.noise_order,
                3 * self.noise_order
            ));
        }
        Ok(())
    }
}

/// Wall-time comparison of exact vs randomized dual fits over an n-sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub gamma: f64,
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
    pub n_sweep: Vec<usize>,
    /// Timed repeats per point (median reported); one extra warmup run per
    /// point is excluded.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            rank: 15,
            oversampling: 20,
            power: 1,
            n_sweep: vec![250, 500, 1000, 2000],
            repeats: 5,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_sketch(self.oversampling, self.power)?;
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        if self.n_sweep.is_empty() {
            return Err("n_sweep must be non-empty".into());
        }
        if self.repeats < 5 {
            return Err(format!("repeats must be at least 5, got {}", self.repeats));
        }
        Ok(())
    }
}

/// One-off risk report across all four algorithms.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskConfig {
    pub gamma: f64,
    pub rank: usize,
    pub oversampling: usize,
    pub power: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { gamma: 1e-6, rank: 5, oversampling: 5, power: 1 }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        check_sketch(self.oversampling, self.power)?;
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        Ok(())
    }
}

/// Expected-gap bound tables over a (rank, oversampling, power) grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub gamma: f64,
    pub ranks: Vec<usize>,
    pub oversamplings: Vec<usize>,
    pub powers: Vec<usize>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { gamma: 1e-6, ranks: (1..=15).collect(), oversamplings: vec![5], powers: vec![1, 2, 3] }
    }
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_gamma(self.gamma)?;
        if self.ranks.is_empty() || self.oversamplings.is_empty() || self.powers.is_empty() {
            return Err("ranks, oversamplings, and powers must be non-empty".into());
        }
        if self.ranks.iter().any(|&r| r == 0) {
            return Err("ranks entries must be at least 1".into());
        }
        for &p in &self.powers {
            for &s in &self.oversamplings {
                check_sketch(s, p)?;
            }
        }
        Ok(())
    }
}
