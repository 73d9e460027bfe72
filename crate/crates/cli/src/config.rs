//! Experiment configuration: a flat `key = value` file, overridden by flags.

use std::path::PathBuf;

use preqcode::lab::{default_grid, pow2_grid, DEFAULT_BURN_IN};
use preqcode::params::split_top_level;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathChoice {
    Direct,
    KlSum,
    Both,
}

impl PathChoice {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.trim() {
            "direct" => Ok(PathChoice::Direct),
            "klsum" => Ok(PathChoice::KlSum),
            "both" => Ok(PathChoice::Both),
            other => Err(CliError::Config(format!(
                "path must be direct, klsum or both, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Rule strings for `simulate`, estimator strings for the probe; empty
    /// selects the command's defaults.
    pub rules: Vec<String>,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub seed: u64,
    pub path: PathChoice,
    pub burn_in: u64,
    pub out: PathBuf,
    pub x0: Option<f64>,
    pub n0: Option<f64>,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: String::new(),
            rules: Vec::new(),
            n_grid: default_grid(),
            reps: 2000,
            seed: 1,
            path: PathChoice::Direct,
            burn_in: DEFAULT_BURN_IN,
            out: PathBuf::from("out"),
            x0: None,
            n0: None,
            workers: None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 11] = [
    "scenario", "rules", "n_grid", "reps", "seed", "path", "burn_in", "out", "x0", "n0", "workers",
];

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
    /// keys are errors.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected key = value",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            seen.push(key);
            cfg.set(key, value.trim()).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "scenario" => self.scenario = value.to_string(),
            "rules" => self.rules = parse_list(value)?,
            "n_grid" => self.n_grid = parse_grid(value)?,
            "reps" => self.reps = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "path" => self.path = PathChoice::parse(value)?,
            "burn_in" => self.burn_in = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "x0" => self.x0 = Some(parse_num(key, value)?),
            "n0" => self.n0 = Some(parse_num(key, value)?),
            "workers" => self.workers = Some(parse_num(key, value)?),
            other => {
                return Err(CliError::Config(format!(
                    "unknown key `{other}` (expected one of {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.scenario.is_empty() {
            return Err(CliError::Config("no scenario given".into()));
        }
        if self.reps < 2 {
            return Err(CliError::Config(format!(
                "reps must be at least 2, got {}",
                self.reps
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}` cannot take the value `{value}`")))
}

/// Comma-separated list; commas inside parentheses do not split.
pub fn parse_list(value: &str) -> Result<Vec<String>, CliError> {
    let parts = split_top_level(value)
        .ok_or_else(|| CliError::Config(format!("unbalanced parentheses in `{value}`")))?;
    Ok(parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect())
}

/// `pow2(lo,hi)` or an explicit comma-separated list of sample sizes.
pub fn parse_grid(value: &str) -> Result<Vec<u64>, CliError> {
    let v = value.trim();
    let bad = || CliError::Config(format!("invalid n grid `{value}`"));
    if let Some(inner) = v.strip_prefix("pow2(").and_then(|r| r.strip_suffix(')')) {
        let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi || hi > 40 {
            return Err(bad());
        }
        return Ok(pow2_grid(lo, hi));
    }
    let grid = v
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "n grid `{value}` must be positive and strictly increasing"
        )));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let cfg = ExperimentConfig::from_text(
            "# experiment\nscenario = negbin1_vs_poisson\nrules = ml_plugin, plugin(clamped=1.5,6)\n\
             n_grid = pow2(6,8)\nreps = 50 # few\npath = both\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, "negbin1_vs_poisson");
        assert_eq!(cfg.rules, vec!["ml_plugin", "plugin(clamped=1.5,6)"]);
        assert_eq!(cfg.n_grid, vec![64, 128, 256]);
        assert_eq!(cfg.reps, 50);
        assert_eq!(cfg.path, PathChoice::Both);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ExperimentConfig::from_text("scenaro = x").is_err());
        assert!(ExperimentConfig::from_text("reps = 3\nreps = 4").is_err());
        assert!(ExperimentConfig::from_text("reps").is_err());
        assert!(ExperimentConfig::from_text("reps = many").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("10, 100,1000").unwrap(), vec![10, 100, 1000]);
        assert!(parse_grid("10,10").is_err());
        assert!(parse_grid("0,4").is_err());
        assert!(parse_grid("pow2(5,2)").is_err());
    }

    #[test]
    fn zero_reps_rejected() {
        let cfg = ExperimentConfig {
            scenario: "x".into(),
            reps: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
