//! Scenario configuration: a flat `key = value` file with `#` comments,
//! overridden by `QSMOOTH_SEED` and then by command-line flags.

use std::fmt;
use std::path::Path;

use crate::error::CliError;

/// Every key accepted in a config file or as a `--key=value` flag.
pub const KEYS: &[&str] = &[
    "r", "alphaA", "betaA", "gammaA", "deltaA", "alphaB", "betaB", "gammaB", "deltaB", "Theta1", "Theta2", "dt",
    "t_end", "n_traj", "seed", "stride", "sweep_min", "sweep_max", "sweep_n", "qnd_var0",
];

pub const SEED_ENV: &str = "QSMOOTH_SEED";

/// Largest record the discrete oracle is asked to condition on.
pub const ORACLE_MAX_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub r: f64,
    /// Alice's coupling `(alpha, beta, gamma, delta)`, i.e. the matrix
    /// `[[alpha, gamma], [beta, delta]]`.
    pub alice: [f64; 4],
    /// Bob's coupling, same order.
    pub bob: [f64; 4],
    pub theta1: f64,
    pub theta2: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Emit every `stride`-th grid point.
    pub stride: usize,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_n: usize,
    /// Initial variance of the QND coordinate.
    pub qnd_var0: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            alice: [1.0, 0.0, 0.0, 1.0],
            bob: [1.0, 0.0, 0.0, 1.0],
            theta1: 1.0,
            theta2: 1.0,
            dt: 1e-3,
            t_end: 5.0,
            n_traj: 10_000,
            seed: 42,
            stride: 10,
            sweep_min: 0.1,
            sweep_max: 2.0,
            sweep_n: 20,
            qnd_var0: 1.0,
        }
    }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Env,
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Env => write!(f, "environment variable {SEED_ENV}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

fn bad_value(origin: Origin, key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("{origin}: key `{key}`: cannot parse `{value}` as {what}"))
}

fn parse_f64(origin: Origin, key: &str, value: &str) -> Result<f64, CliError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad_value(origin, key, value, "a finite number")),
    }
}

fn parse_usize(origin: Origin, key: &str, value: &str) -> Result<usize, CliError> {
    value.parse().map_err(|_| bad_value(origin, key, value, "a non-negative integer"))
}

impl ScenarioConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        let value = value.trim();
        let f = |v: &str| parse_f64(origin, key, v);
        match key {
            "r" => self.r = f(value)?,
            "alphaA" => self.alice[0] = f(value)?,
            "betaA" => self.alice[1] = f(value)?,
            "gammaA" => self.alice[2] = f(value)?,
            "deltaA" => self.alice[3] = f(value)?,
            "alphaB" => self.bob[0] = f(value)?,
            "betaB" => self.bob[1] = f(value)?,
            "gammaB" => self.bob[2] = f(value)?,
            "deltaB" => self.bob[3] = f(value)?,
            "Theta1" => self.theta1 = f(value)?,
            "Theta2" => self.theta2 = f(value)?,
            "dt" => self.dt = f(value)?,
            "t_end" => self.t_end = f(value)?,
            "n_traj" => self.n_traj = parse_usize(origin, key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad_value(origin, key, value, "a 64-bit unsigned integer"))?,
            "stride" => self.stride = parse_usize(origin, key, value)?,
            "sweep_min" => self.sweep_min = f(value)?,
            "sweep_max" => self.sweep_max = f(value)?,
            "sweep_n" => self.sweep_n = parse_usize(origin, key, value)?,
            "qnd_var0" => self.qnd_var0 = f(value)?,
            _ => return Err(CliError::Config(format!("{origin}: unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a config file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}: expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Config(format!("{origin}: key `{key}` given twice")));
            }
            self.set(key, value, origin)?;
            seen.push(key);
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the file, then `env_seed`, then `flags`; validated.
    pub fn load(path: Option<&Path>, env_seed: Option<&str>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        if let Some(seed) = env_seed {
            cfg.set("seed", seed, Origin::Env)?;
        }
        for (key, value) in flags {
            cfg.set(key, value, Origin::Flag)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.r < 0.0 {
            return fail(format!("r must be non-negative, got {}", self.r));
        }
        if self.theta1 < 0.0 || self.theta2 < 0.0 {
            return fail("Theta1 and Theta2 must be non-negative".into());
        }
        if self.dt <= 0.0 {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.t_end < self.dt {
            return fail(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt));
        }
        if self.n_traj == 0 {
            return fail("n_traj must be at least 1".into());
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.sweep_n == 0 || self.sweep_min > self.sweep_max {
            return fail("sweep needs sweep_n >= 1 and sweep_min <= sweep_max".into());
        }
        if self.qnd_var0 <= 0.0 {
            return fail(format!("qnd_var0 must be positive, got {}", self.qnd_var0));
        }
        Ok(())
    }

    /// Number of grid steps, `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    /// Grid points `0, stride, 2·stride, …` plus the last one.
    pub fn sample_indices(&self, steps: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..=steps).step_by(self.stride).collect();
        if idx.last() != Some(&steps) {
            idx.push(steps);
        }
        idx
    }

    /// `sweep_n` evenly spaced values in `[sweep_min, sweep_max]`.
    pub fn sweep_grid(&self) -> Vec<f64> {
        if self.sweep_n == 1 {
            return vec![self.sweep_min];
        }
        let step = (self.sweep_max - self.sweep_min) / (self.sweep_n - 1) as f64;
        (0..self.sweep_n).map(|i| self.sweep_min + step * i as f64).collect()
    }
}
