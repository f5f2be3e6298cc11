use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProblemChoice {
    /// Convection-diffusion with a weak outflow penalty.
    #[default]
    Cd,
    /// Transport with a constant source and zero inflow data.
    Transport,
    /// Transport with zero source and inflow data jumping at the midpoint.
    TransportJump,
    /// Random dense saddle problem driven by the two-space greedy.
    SyntheticSaddle,
}

impl ProblemChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemChoice::Cd => "cd",
            ProblemChoice::Transport => "transport",
            ProblemChoice::TransportJump => "transport_jump",
            ProblemChoice::SyntheticSaddle => "synthetic_saddle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(ProblemChoice::Cd),
            "transport" => Ok(ProblemChoice::Transport),
            "transport_jump" => Ok(ProblemChoice::TransportJump),
            "synthetic_saddle" => Ok(ProblemChoice::SyntheticSaddle),
            other => Err(Error::config(
                "problem",
                format!("unknown problem `{other}` (expected cd, transport, transport_jump or synthetic_saddle)"),
            )),
        }
    }
}

/// Settings of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemChoice,
    /// Diffusion `ε` (convection-diffusion only).
    pub epsilon: f64,
    /// Outflow penalty weight `ω` (convection-diffusion only).
    pub omega: f64,
    pub trial_level: u32,
    pub test_level: u32,
    pub sample_count: usize,
    pub parameter_interval: [f64; 2],
    pub zeta: f64,
    pub delta: f64,
    pub tol: f64,
    pub n_max: usize,
    /// Iterative tightening cycles after the first run (transport only).
    pub cycles: usize,
    pub output_dir: PathBuf,
    /// Seed of the synthetic problem.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemChoice::Cd,
            epsilon: 1.0 / 32.0,
            omega: 1e-2,
            trial_level: 5,
            test_level: 6,
            sample_count: 100,
            parameter_interval: [0.2, PI - 0.2],
            zeta: 0.5,
            delta: 0.5,
            tol: 1e-3,
            n_max: 20,
            cycles: 0,
            output_dir: PathBuf::from("out"),
            seed: 7,
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::config(
            key,
            format!("expected a number, found {}", other.type_str()),
        )),
    }
}

fn as_uint(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::Integer(i) => Err(Error::config(key, format!("{i} must be nonnegative"))),
        other => Err(Error::config(
            key,
            format!("expected an integer, found {}", other.type_str()),
        )),
    }
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::config(key, format!("expected a string, found {}", v.type_str())))
}

impl ExperimentConfig {
    /// Parses TOML text; missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        let mut cfg = ExperimentConfig::default();
        for (key, v) in &table {
            cfg.set_value(key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn set_value(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        match key {
            "problem" => self.problem = ProblemChoice::parse(as_str(key, v)?)?,
            "epsilon" => self.epsilon = as_f64(key, v)?,
            "omega" => self.omega = as_f64(key, v)?,
            "trial_level" => self.trial_level = level(key, as_uint(key, v)?)?,
            "test_level" => self.test_level = level(key, as_uint(key, v)?)?,
            "sample_count" => self.sample_count = as_uint(key, v)? as usize,
            "parameter_interval" => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::config(key, "expected an array [lo, hi]"))?;
                if arr.len() != 2 {
                    return Err(Error::config(
                        key,
                        format!("expected 2 entries, found {}", arr.len()),
                    ));
                }
                self.parameter_interval = [as_f64(key, &arr[0])?, as_f64(key, &arr[1])?];
            }
            "zeta" => self.zeta = as_f64(key, v)?,
            "delta" => self.delta = as_f64(key, v)?,
            "tol" => self.tol = as_f64(key, v)?,
            "n_max" => self.n_max = as_uint(key, v)? as usize,
            "cycles" => self.cycles = as_uint(key, v)? as usize,
            "output_dir" => self.output_dir = PathBuf::from(as_str(key, v)?),
            "seed" => self.seed = as_uint(key, v)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("{x} must be positive")))
            }
        };
        finite_pos("epsilon", self.epsilon)?;
        finite_pos("omega", self.omega)?;
        if self.problem != ProblemChoice::SyntheticSaddle && self.test_level <= self.trial_level {
            return Err(Error::config(
                "test_level",
                format!(
                    "{} must exceed trial_level {}",
                    self.test_level, self.trial_level
                ),
            ));
        }
        if self.sample_count < 2 {
            return Err(Error::config(
                "sample_count",
                format!("{} must be at least 2", self.sample_count),
            ));
        }
        let [lo, hi] = self.parameter_interval;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi < PI && lo < hi) {
            return Err(Error::config(
                "parameter_interval",
                format!("[{lo}, {hi}] must satisfy 0 < lo < hi < pi"),
            ));
        }
        for (name, x) in [("zeta", self.zeta), ("delta", self.delta)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::config(name, format!("{x} not in (0, 1)")));
            }
        }
        finite_pos("tol", self.tol)?;
        if self.n_max == 0 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::config(
                "seed",
                format!("{} does not fit a TOML integer", self.seed),
            ));
        }
        Ok(())
    }

    /// TOML text with every key; floats carry 17 significant digits.
    pub fn to_toml_string(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let mut s = String::new();
        let _ = writeln!(s, "problem = \"{}\"", self.problem.as_str());
        let _ = writeln!(s, "epsilon = {}", f(self.epsilon));
        let _ = writeln!(s, "omega = {}", f(self.omega));
        let _ = writeln!(s, "trial_level = {}", self.trial_level);
        let _ = writeln!(s, "test_level = {}", self.test_level);
        let _ = writeln!(s, "sample_count = {}", self.sample_count);
        let _ = writeln!(
            s,
            "parameter_interval = [{}, {}]",
            f(self.parameter_interval[0]),
            f(self.parameter_interval[1])
        );
        let _ = writeln!(s, "zeta = {}", f(self.zeta));
        let _ = writeln!(s, "delta = {}", f(self.delta));
        let _ = writeln!(s, "tol = {}", f(self.tol));
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "cycles = {}", self.cycles);
        let _ = writeln!(
            s,
            "output_dir = {}",
            toml::Value::String(self.output_dir.to_string_lossy().into_owned())
        );
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn level(key: &str, v: u64) -> Result<u32> {
    if v > 12 {
        return Err(Error::config(
            key,
            format!("{v} exceeds the supported maximum 12"),
        ));
    }
    Ok(v as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_defaults() {
        assert_eq!(
            ExperimentConfig::from_toml_str("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn negative_epsilon_names_field() {
        let err = ExperimentConfig::from_toml_str("epsilon = -1").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "epsilon"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml_str("colour = 3").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "colour"));
    }

    #[test]
    fn wrong_type_names_field() {
        let err = ExperimentConfig::from_toml_str("n_max = \"many\"").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "n_max"));
    }

    #[test]
    fn levels_must_increase() {
        let err = ExperimentConfig::from_toml_str("trial_level = 4\ntest_level = 4").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "test_level"));
    }

    #[test]
    fn interval_outside_half_turn_is_rejected() {
        let err = ExperimentConfig::from_toml_str("parameter_interval = [0.0, 1.0]").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "parameter_interval"));
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = ExperimentConfig {
            problem: ProblemChoice::TransportJump,
            epsilon: 1.0 / 3.0,
            omega: 0.1 + 0.2,
            parameter_interval: [0.2, PI - 0.2],
            tol: 1e-7 / 3.0,
            output_dir: PathBuf::from("runs/a \"quoted\" dir"),
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
