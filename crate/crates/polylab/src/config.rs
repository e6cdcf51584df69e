//! Experiment configuration: a single JSON document per run.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. Each command declares which fields it consumes; supplying a
//! field the command ignores is an error for the same reason.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelTable,
    Bound,
    Phase,
    Clt,
    Mgf,
    HermiteCheck,
    YnDecay,
    SecondMoment,
    Collision,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelTable => "kernel-table",
            Command::Bound => "bound",
            Command::Phase => "phase",
            Command::Clt => "clt",
            Command::Mgf => "mgf",
            Command::HermiteCheck => "hermite-check",
            Command::YnDecay => "yn-decay",
            Command::SecondMoment => "second-moment",
            Command::Collision => "collision",
        }
    }
}

fn default_d() -> usize {
    3
}
fn default_k() -> f64 {
    1.0
}
fn default_h() -> f64 {
    0.25
}
fn default_dt() -> f64 {
    0.05
}
fn default_chunk() -> usize {
    256
}
fn default_n_paths() -> usize {
    10_000
}
fn default_n_noise_seeds() -> usize {
    32
}
fn default_n_radii() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "T_list", default, skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    /// Inverse temperature as a fraction of the diffusive threshold
    /// `g^{-1/2}` computed from the run's own kernel table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_frac: Option<f64>,
    /// Inverse temperature given directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_frac_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_abs_list: Option<Vec<f64>>,
    /// Paths per estimate; pair-based commands read it as the pair count.
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_n_noise_seeds")]
    pub n_noise_seeds: usize,
    /// Base seed of the quenched environment (and of auxiliary Monte
    /// Carlo streams in commands without an environment). Overridable by
    /// `--noise-seed` and `POLYLAB_NOISE_SEED`.
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub path_seed_start: u64,
    #[serde(default = "default_n_radii")]
    pub n_radii: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_index: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_norms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BetaMode {
    Forbidden,
    /// Exactly one of `beta_frac` / `beta_abs`.
    Scalar,
    /// Exactly one of the four beta fields; lists allowed.
    AnyOne,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum HorizonMode {
    Forbidden,
    Scalar,
    OptionalScalar,
    ScalarOrList,
}

struct Shape {
    beta: BetaMode,
    horizon: HorizonMode,
    needs_n_index: bool,
    allows_n_index: bool,
    allows_lambda: bool,
}

fn shape(cmd: Command) -> Shape {
    use BetaMode as B;
    use HorizonMode as H;
    match cmd {
        Command::KernelTable => Shape {
            beta: B::Forbidden,
            horizon: H::Forbidden,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
        Command::Bound => Shape {
            beta: B::Scalar,
            horizon: H::OptionalScalar,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
        Command::Phase => Shape {
            beta: B::AnyOne,
            horizon: H::Scalar,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
        Command::Clt => Shape {
            beta: B::Scalar,
            horizon: H::ScalarOrList,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
        Command::Mgf => Shape {
            beta: B::Scalar,
            horizon: H::ScalarOrList,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: true,
        },
        Command::HermiteCheck => Shape {
            beta: B::Forbidden,
            horizon: H::Forbidden,
            needs_n_index: true,
            allows_n_index: true,
            allows_lambda: false,
        },
        Command::YnDecay => Shape {
            beta: B::Scalar,
            horizon: H::ScalarOrList,
            needs_n_index: true,
            allows_n_index: true,
            allows_lambda: false,
        },
        Command::SecondMoment => Shape {
            beta: B::Scalar,
            horizon: H::ScalarOrList,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
        Command::Collision => Shape {
            beta: B::Forbidden,
            horizon: H::ScalarOrList,
            needs_n_index: false,
            allows_n_index: false,
            allows_lambda: false,
        },
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Horizons requested by the run, in order: `T_list` or `[T]`.
    pub fn horizons(&self) -> Vec<f64> {
        match (&self.t_list, self.t) {
            (Some(list), _) => list.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cmd = self.command.name();
        let fail = |msg: String| Err(Error::Config(format!("{cmd}: {msg}")));

        if self.d < 1 || self.d > MAX_DIM {
            return fail(format!("d must be in 1..={MAX_DIM}, got {}", self.d));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return fail(format!("K must be positive and finite, got {}", self.k));
        }
        if !(self.h > 0.0) || self.h > self.k / 2.0 {
            return fail(format!("h must satisfy 0 < h <= K/2, got h = {} at K = {}", self.h, self.k));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return fail(format!("dt must be positive and finite, got {}", self.dt));
        }
        if self.chunk_size == 0 {
            return fail("chunk_size must be positive".to_string());
        }
        if self.n_radii < 32 {
            return fail(format!("n_radii must be at least 32, got {}", self.n_radii));
        }
        if self.n_paths == 0 {
            return fail("n_paths must be positive".to_string());
        }
        if self.n_noise_seeds == 0 {
            return fail("n_noise_seeds must be positive".to_string());
        }

        let sh = shape(self.command);

        let scalar_betas =
            [self.beta_frac.is_some(), self.beta_abs.is_some()].iter().filter(|&&b| b).count();
        let list_betas = [self.beta_frac_list.is_some(), self.beta_abs_list.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        match sh.beta {
            BetaMode::Forbidden => {
                if scalar_betas + list_betas > 0 {
                    return fail("does not take beta fields".to_string());
                }
            }
            BetaMode::Scalar => {
                if list_betas > 0 {
                    return fail("takes a single beta, not a list".to_string());
                }
                if scalar_betas != 1 {
                    return fail("needs exactly one of beta_frac / beta_abs".to_string());
                }
            }
            BetaMode::AnyOne => {
                if scalar_betas + list_betas != 1 {
                    return fail(
                        "needs exactly one of beta_frac / beta_abs / beta_frac_list / beta_abs_list"
                            .to_string(),
                    );
                }
            }
        }
        for (name, val) in [("beta_frac", self.beta_frac), ("beta_abs", self.beta_abs)] {
            if let Some(v) = val {
                if !(v >= 0.0) || !v.is_finite() {
                    return fail(format!("{name} must be nonnegative and finite, got {v}"));
                }
            }
        }
        for (name, list) in
            [("beta_frac_list", &self.beta_frac_list), ("beta_abs_list", &self.beta_abs_list)]
        {
            if let Some(vs) = list {
                if vs.is_empty() {
                    return fail(format!("{name} must not be empty"));
                }
                if vs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return fail(format!("{name} entries must be nonnegative and finite"));
                }
            }
        }

        match sh.horizon {
            HorizonMode::Forbidden => {
                if self.t.is_some() || self.t_list.is_some() {
                    return fail("does not take T or T_list".to_string());
                }
            }
            HorizonMode::Scalar => {
                if self.t_list.is_some() {
                    return fail("takes a single T, not T_list".to_string());
                }
                if self.t.is_none() {
                    return fail("needs T".to_string());
                }
            }
            HorizonMode::OptionalScalar => {
                if self.t_list.is_some() {
                    return fail("takes a single T, not T_list".to_string());
                }
            }
            HorizonMode::ScalarOrList => {
                if self.t.is_some() && self.t_list.is_some() {
                    return fail("takes T or T_list, not both".to_string());
                }
                if self.t.is_none() && self.t_list.is_none() {
                    return fail("needs T or T_list".to_string());
                }
            }
        }
        let horizons = self.horizons();
        if horizons.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return fail("horizons must be positive and finite".to_string());
        }
        if horizons.windows(2).any(|w| w[0] >= w[1]) {
            return fail("T_list must be strictly increasing".to_string());
        }

        match &self.n_index {
            Some(n) => {
                if !sh.allows_n_index {
                    return fail("does not take n_index".to_string());
                }
                if n.len() != self.d {
                    return fail(format!("n_index needs {} components, got {}", self.d, n.len()));
                }
            }
            None => {
                if sh.needs_n_index {
                    return fail("needs n_index".to_string());
                }
            }
        }

        if let Some(ls) = &self.lambda_norms {
            if !sh.allows_lambda {
                return fail("does not take lambda_norms".to_string());
            }
            if ls.is_empty() {
                return fail("lambda_norms must not be empty".to_string());
            }
            if ls.iter().any(|l| !l.is_finite()) {
                return fail("lambda_norms entries must be finite".to_string());
            }
        }

        Ok(())
    }
}

/// Where the effective noise seed came from, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Env,
    Config,
}

/// Precedence: `--noise-seed` flag, then `POLYLAB_NOISE_SEED`, then the
/// config value.
pub fn resolve_noise_seed(flag: Option<u64>, env: Option<u64>, config: u64) -> (u64, SeedSource) {
    if let Some(s) = flag {
        (s, SeedSource::Flag)
    } else if let Some(s) = env {
        (s, SeedSource::Env)
    } else {
        (config, SeedSource::Config)
    }
}

/// Note text when `t` does not sit on the step grid; the run proceeds with
/// the rounded horizon.
pub fn horizon_note(t: f64, dt: f64) -> Option<String> {
    let n = (t / dt).round().max(1.0);
    let t_eff = n * dt;
    if (t_eff - t).abs() > 1e-9 * t.abs().max(dt) {
        Some(format!("T = {t} is off the step grid; using {n} steps of {dt} (T = {t_eff})"))
    } else {
        None
    }
}
