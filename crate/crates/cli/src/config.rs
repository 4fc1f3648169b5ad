//! Experiment configuration: a plain `key = value` file with `#` comments,
//! overridable by command-line flags.
//!
//! Community mode keys: `mode`, `f`, `m`, `kf`, `km`, `rho_t`, `lambda`,
//! `zeta`, `seed`, `trials`, `stage2` (`on`/`off`), `c_in`, and optionally
//! `sweep_var` + `sweep_values` (comma-separated). Dilution mode replaces the
//! population keys with `n`, `k`, `alpha`; `rho_t` may be `inf` there and in
//! `bounds` runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use commgt::design::DilutionParams;
use commgt::params::Parameters;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(message.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Community,
    Dilution,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BudgetSpec {
    Finite(u32),
    Unbounded,
}

/// Parsed and merged experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub families: u32,
    pub family_size: u32,
    pub infected_families: u32,
    pub infected_per_family: u32,
    pub budget: BudgetSpec,
    pub items: u32,
    pub defectives: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub zeta: Option<f64>,
    pub seed: u64,
    pub trials: u32,
    pub stage2: bool,
    pub c_in: f64,
    pub sweep: Option<(String, Vec<f64>)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Community,
            families: 0,
            family_size: 0,
            infected_families: 0,
            infected_per_family: 0,
            budget: BudgetSpec::Finite(0),
            items: 0,
            defectives: 0,
            alpha: 1.0,
            lambda: 0.5,
            zeta: None,
            seed: 0,
            trials: 100,
            stage2: true,
            c_in: commgt::stage2::DEFAULT_C_IN,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut raw: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let stripped = line.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return err(format!(
                    "{source}:{line_no}: expected `key = value`, got `{stripped}`"
                ));
            };
            let key = key.trim().to_lowercase();
            let value = value.trim().to_string();
            if value.is_empty() {
                return err(format!("{source}:{line_no}: empty value for `{key}`"));
            }
            if raw.insert(key.clone(), (line_no, value)).is_some() {
                return err(format!("{source}:{line_no}: duplicate key `{key}`"));
            }
        }

        let mut cfg = ExperimentConfig::default();
        let mut get = |key: &str| raw.remove(key);

        if let Some((line, value)) = get("mode") {
            cfg.mode = match value.as_str() {
                "community" => Mode::Community,
                "dilution" => Mode::Dilution,
                other => {
                    return err(format!(
                        "{source}:{line}: mode must be `community` or `dilution`, got `{other}`"
                    ))
                }
            };
        }

        fn parse_field<T: std::str::FromStr>(
            source: &str,
            key: &str,
            entry: Option<(usize, String)>,
            target: &mut T,
        ) -> Result<(), ConfigError> {
            if let Some((line, value)) = entry {
                *target = value.parse().map_err(|_| {
                    ConfigError(format!("{source}:{line}: cannot parse `{key} = {value}`"))
                })?;
            }
            Ok(())
        }

        parse_field(source, "f", get("f"), &mut cfg.families)?;
        parse_field(source, "m", get("m"), &mut cfg.family_size)?;
        parse_field(source, "kf", get("kf"), &mut cfg.infected_families)?;
        parse_field(source, "km", get("km"), &mut cfg.infected_per_family)?;
        parse_field(source, "n", get("n"), &mut cfg.items)?;
        parse_field(source, "k", get("k"), &mut cfg.defectives)?;
        parse_field(source, "alpha", get("alpha"), &mut cfg.alpha)?;
        parse_field(source, "lambda", get("lambda"), &mut cfg.lambda)?;
        parse_field(source, "seed", get("seed"), &mut cfg.seed)?;
        parse_field(source, "trials", get("trials"), &mut cfg.trials)?;
        parse_field(source, "c_in", get("c_in"), &mut cfg.c_in)?;

        if let Some((line, value)) = get("zeta") {
            let z: f64 = value.parse().map_err(|_| {
                ConfigError(format!("{source}:{line}: cannot parse `zeta = {value}`"))
            })?;
            cfg.zeta = Some(z);
        }
        if let Some((line, value)) = get("rho_t") {
            cfg.budget = if value == "inf" {
                BudgetSpec::Unbounded
            } else {
                BudgetSpec::Finite(value.parse().map_err(|_| {
                    ConfigError(format!(
                        "{source}:{line}: rho_t must be a positive integer or `inf`"
                    ))
                })?)
            };
        }
        if let Some((line, value)) = get("stage2") {
            cfg.stage2 = match value.as_str() {
                "on" => true,
                "off" => false,
                other => {
                    return err(format!(
                        "{source}:{line}: stage2 must be `on` or `off`, got `{other}`"
                    ))
                }
            };
        }

        let sweep_var = get("sweep_var");
        let sweep_values = get("sweep_values");
        match (sweep_var, sweep_values) {
            (None, None) => {}
            (Some((line, _)), None) | (None, Some((line, _))) => {
                return err(format!(
                    "{source}:{line}: sweep needs both `sweep_var` and `sweep_values`"
                ));
            }
            (Some((_, var)), Some((line, values))) => {
                let parsed: Result<Vec<f64>, _> =
                    values.split(',').map(|v| v.trim().parse::<f64>()).collect();
                let list = parsed.map_err(|_| {
                    ConfigError(format!(
                        "{source}:{line}: sweep_values must be a comma-separated number list"
                    ))
                })?;
                if list.is_empty() {
                    return err(format!("{source}:{line}: sweep_values is empty"));
                }
                cfg.sweep = Some((var, list));
            }
        }

        if let Some((key, (line, _))) = raw.into_iter().next() {
            return err(format!("{source}:{line}: unknown key `{key}`"));
        }
        Ok(cfg)
    }

    /// Community-mode parameters; requires a finite budget.
    pub fn parameters(&self) -> Result<Parameters, ConfigError> {
        let BudgetSpec::Finite(budget) = self.budget else {
            return err("rho_t = inf is accepted by `bounds` only; simulation needs a finite budget");
        };
        let p = Parameters {
            families: self.families,
            family_size: self.family_size,
            infected_families: self.infected_families,
            infected_per_family: self.infected_per_family,
            pool_budget: budget,
            lambda: self.lambda,
            zeta_override: self.zeta,
            seed: self.seed,
        };
        p.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(p)
    }

    /// Community-mode parameters for formula evaluation, tolerating `inf`.
    pub fn bound_parameters(&self) -> Result<(Parameters, commgt::PoolBudget), ConfigError> {
        let (stored, budget) = match self.budget {
            BudgetSpec::Finite(b) => (b, commgt::PoolBudget::Finite(b)),
            // Parameters itself wants a number; the evaluators get the
            // sentinel alongside.
            BudgetSpec::Unbounded => (u32::MAX, commgt::PoolBudget::Unbounded),
        };
        let p = Parameters {
            families: self.families,
            family_size: self.family_size,
            infected_families: self.infected_families,
            infected_per_family: self.infected_per_family,
            pool_budget: stored,
            lambda: self.lambda,
            zeta_override: self.zeta,
            seed: self.seed,
        };
        p.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok((p, budget))
    }

    /// Dilution-mode parameters.
    pub fn dilution(&self) -> Result<DilutionParams, ConfigError> {
        let pool_budget = match self.budget {
            BudgetSpec::Finite(0) | BudgetSpec::Unbounded => None,
            BudgetSpec::Finite(b) => Some(b),
        };
        Ok(DilutionParams {
            items: self.items,
            defectives: self.defectives,
            alpha: self.alpha,
            pool_budget,
            lambda: self.lambda,
            zeta_override: self.zeta,
            seed: self.seed,
        })
    }

    /// Apply one swept value to a copy of the config.
    pub fn with_swept(&self, var: &str, value: f64) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        let as_u32 = |value: f64| -> Result<u32, ConfigError> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                err(format!("swept value {value} is not a valid integer for `{var}`"))
            }
        };
        match var {
            "rho_t" => cfg.budget = BudgetSpec::Finite(as_u32(value)?),
            "zeta" => cfg.zeta = Some(value),
            "lambda" => cfg.lambda = value,
            "f" => cfg.families = as_u32(value)?,
            "m" => cfg.family_size = as_u32(value)?,
            "kf" => cfg.infected_families = as_u32(value)?,
            "km" => cfg.infected_per_family = as_u32(value)?,
            "n" => cfg.items = as_u32(value)?,
            "k" => cfg.defectives = as_u32(value)?,
            "alpha" => cfg.alpha = value,
            other => return err(format!("unknown sweep variable `{other}`")),
        }
        Ok(cfg)
    }
}

/// Grid sizes for the `verify` command, overridable from a config file so
/// the verification grids are versioned data rather than hard-coded numbers.
#[derive(Clone, Debug)]
pub struct VerifyGrids {
    pub outcome_trials: u32,
    pub regime_points: u32,
    pub prop1_f_max: u32,
    pub prop2_u_max: u32,
    pub prop2_budget_max: u32,
    pub seed: u64,
}

impl Default for VerifyGrids {
    fn default() -> Self {
        Self {
            outcome_trials: 10_000,
            regime_points: 1000,
            prop1_f_max: 64,
            prop2_u_max: 64,
            prop2_budget_max: 256,
            seed: 0x5eed,
        }
    }
}

impl VerifyGrids {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let source = path.display().to_string();
        let mut grids = VerifyGrids::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let stripped = line.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return err(format!(
                    "{source}:{line_no}: expected `key = value`, got `{stripped}`"
                ));
            };
            let key = key.trim().to_lowercase();
            let value = value.trim();
            let bad = |what: &str| {
                ConfigError(format!("{source}:{line_no}: cannot parse `{key} = {what}`"))
            };
            match key.as_str() {
                "outcome_trials" => grids.outcome_trials = value.parse().map_err(|_| bad(value))?,
                "regime_points" => grids.regime_points = value.parse().map_err(|_| bad(value))?,
                "prop1_f_max" => grids.prop1_f_max = value.parse().map_err(|_| bad(value))?,
                "prop2_u_max" => grids.prop2_u_max = value.parse().map_err(|_| bad(value))?,
                "prop2_budget_max" => {
                    grids.prop2_budget_max = value.parse().map_err(|_| bad(value))?
                }
                "seed" => grids.seed = value.parse().map_err(|_| bad(value))?,
                other => return err(format!("{source}:{line_no}: unknown key `{other}`")),
            }
        }
        Ok(grids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_community_config() {
        let text = "\
# community example
mode = community
f = 40
m = 8
kf = 2
km = 4
rho_t = 8
lambda = 0.5
zeta = 16
seed = 7
trials = 50
stage2 = off
sweep_var = rho_t
sweep_values = 1, 2, 4, 8
";
        let cfg = ExperimentConfig::parse(text, "test").unwrap();
        assert_eq!(cfg.mode, Mode::Community);
        assert_eq!(cfg.families, 40);
        assert_eq!(cfg.budget, BudgetSpec::Finite(8));
        assert_eq!(cfg.zeta, Some(16.0));
        assert!(!cfg.stage2);
        assert_eq!(
            cfg.sweep,
            Some(("rho_t".to_string(), vec![1.0, 2.0, 4.0, 8.0]))
        );
        let p = cfg.parameters().unwrap();
        assert_eq!(p.families, 40);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ExperimentConfig::parse("f = 40\nbogus line\n", "cfg").unwrap_err();
        assert!(e.0.contains("cfg:2"), "{e}");
        let e = ExperimentConfig::parse("f = \n", "cfg").unwrap_err();
        assert!(e.0.contains("cfg:1"), "{e}");
        let e = ExperimentConfig::parse("mystery = 1\n", "cfg").unwrap_err();
        assert!(e.0.contains("unknown key `mystery`"), "{e}");
        let e = ExperimentConfig::parse("kf = maybe\n", "cfg").unwrap_err();
        assert!(e.0.contains("cannot parse"), "{e}");
    }

    #[test]
    fn sweep_requires_both_keys_and_values() {
        let e = ExperimentConfig::parse("sweep_var = rho_t\n", "cfg").unwrap_err();
        assert!(e.0.contains("sweep"), "{e}");
        let e = ExperimentConfig::parse("sweep_var = rho_t\nsweep_values = \n", "cfg").unwrap_err();
        assert!(e.0.contains("empty value"), "{e}");
    }

    #[test]
    fn unbounded_budget_is_bounds_only() {
        let mut cfg = ExperimentConfig::parse(
            "f = 40\nm = 8\nkf = 2\nkm = 4\nrho_t = inf\n",
            "cfg",
        )
        .unwrap();
        assert!(cfg.parameters().is_err());
        assert!(cfg.bound_parameters().is_ok());
        cfg.budget = BudgetSpec::Finite(8);
        assert!(cfg.parameters().is_ok());
    }

    #[test]
    fn swept_values_validate_integrality() {
        let cfg = ExperimentConfig::parse("f = 40\nm = 8\nkf = 2\nkm = 4\nrho_t = 8\n", "cfg")
            .unwrap();
        assert!(cfg.with_swept("rho_t", 4.0).is_ok());
        assert!(cfg.with_swept("rho_t", 2.5).is_err());
        assert!(cfg.with_swept("starfish", 1.0).is_err());
    }
}
