use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use cvrelay::AttackKind;

use crate::error::{CliError, Result};
use crate::grid::parse_grid;
use crate::output::Format;

/// Keys a config file may set. Each matches the long flag of the same name
/// with `-` written as `_`.
pub const KEYS: &[&str] = &[
    "attack",
    "beta",
    "distance",
    "eta",
    "etap",
    "format",
    "g",
    "gp",
    "grid",
    "mu",
    "mu_grid",
    "omega",
    "omega_max",
    "rounds",
    "scan_points",
    "seed",
    "tau",
];

/// Values loaded from a `key = value` file. An empty config means the
/// built-in defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (String, usize)>,
}

fn unit_interval(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

fn check_value(key: &str, value: &str) -> std::result::Result<(), String> {
    let num = || {
        value
            .parse::<f64>()
            .map_err(|_| format!("'{value}' is not a number"))
    };
    let in_unit = |what: &str| {
        let x = num()?;
        if unit_interval(x) {
            Ok(())
        } else {
            Err(format!("{what} must lie in (0, 1], got {x}"))
        }
    };
    match key {
        "beta" => in_unit("beta"),
        "eta" | "etap" => in_unit(key),
        "g" | "gp" | "omega_max" => num().map(drop),
        "tau" | "distance" | "omega" | "mu" | "mu_grid" => parse_grid(value).map(drop),
        "attack" => value
            .split(',')
            .try_for_each(|a| AttackKind::from_str(a).map(drop).map_err(|e| e.to_string())),
        "format" => Format::from_str(value).map(drop),
        "grid" | "scan_points" | "rounds" | "seed" => value
            .parse::<u64>()
            .map(drop)
            .map_err(|_| format!("'{value}' is not a non-negative integer")),
        _ => Err(format!("unknown key '{key}'")),
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Usage(format!("{origin}:{line_no}: {msg}"));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim().trim_matches('"').to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key '{key}'")));
            }
            check_value(&key, &value).map_err(err)?;
            values.insert(key, (value, line_no));
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// Value of `key` parsed as `T`, if the file set it.
    pub fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config line {line}: {key}: {e}"))),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Config::parse(&text, &path.display().to_string())
}
