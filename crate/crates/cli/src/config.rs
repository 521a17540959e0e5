//! Run configuration: defaults, overridden by a flat `key=value` file,
//! overridden by command-line flags. The resolved config is echoed into
//! `manifest.json`, from which a run can be replayed.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, value: &str, what: &str) -> ConfigError {
    ConfigError(format!("invalid value {value:?} for {key}: expected {what}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub op: String,
    pub density: String,
    /// Observation values (scalar observations).
    pub y: Vec<f64>,
    /// Seed guesses for fiber tracing, one per component; empty means `e_1`.
    pub x0: Vec<Vec<f64>>,
    pub step: f64,
    pub corrector_tol: f64,
    pub max_nodes: usize,
    pub truncation_nats: f64,
    pub variant: String,
    pub p: String,
    pub p_list: Vec<String>,
    pub base: String,
    pub recenter: bool,
    /// Extra optimizer starts, added to the default compass starts.
    pub starts: Vec<Vec<f64>>,
    pub default_starts: bool,
    pub opt_tol: f64,
    pub check: String,
    pub samples: usize,
    pub seed: u64,
    pub figure: String,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            op: "ellipse:1,0.5".into(),
            density: "gauss".into(),
            y: vec![1.01],
            x0: Vec::new(),
            step: 1e-3,
            corrector_tol: 1e-10,
            max_nodes: 1_000_000,
            truncation_nats: 40.0,
            variant: "disintegration".into(),
            p: "2".into(),
            p_list: ["1", "1.5", "2", "4", "inf"].map(String::from).to_vec(),
            base: "disintegration".into(),
            recenter: false,
            starts: Vec::new(),
            default_starts: true,
            opt_tol: 1e-6,
            check: "all".into(),
            samples: 2000,
            seed: 0,
            figure: String::new(),
        }
    }

    /// Sets one key from its text form; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let float = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(key, v, "a finite number"));
        let uint = |v: &str| v.parse::<u64>().map_err(|_| bad(key, v, "a non-negative integer"));
        let boolean = |v: &str| match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad(key, v, "true or false")),
        };
        let points = |v: &str| -> Result<Vec<Vec<f64>>, ConfigError> {
            v.split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|pt| pt.split(',').map(|c| float(c.trim())).collect())
                .collect()
        };
        match key {
            "command" => self.command = value.into(),
            "op" => self.op = value.into(),
            "density" => self.density = value.into(),
            "y" => self.y = parse_y(value).map_err(|what| bad(key, value, &what))?,
            "x0" => self.x0 = points(value)?,
            "step" => self.step = float(value)?,
            "corrector_tol" => self.corrector_tol = float(value)?,
            "max_nodes" => self.max_nodes = uint(value)? as usize,
            "truncation_nats" => self.truncation_nats = float(value)?,
            "variant" => self.variant = value.into(),
            "p" => self.p = value.into(),
            "p_list" => self.p_list = value.split(',').map(|s| s.trim().to_string()).collect(),
            "base" => self.base = value.into(),
            "recenter" => self.recenter = boolean(value)?,
            "starts" => self.starts = points(value)?,
            "default_starts" => self.default_starts = boolean(value)?,
            "opt_tol" => self.opt_tol = float(value)?,
            "check" => self.check = value.into(),
            "samples" => self.samples = uint(value)? as usize,
            "seed" => self.seed = uint(value)?,
            "figure" => self.figure = value.into(),
            other => return Err(ConfigError(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(())
    }
}

/// `a,b,c` or an inclusive grid `start:stop:count`.
fn parse_y(value: &str) -> Result<Vec<f64>, String> {
    let what = "a comma list or start:stop:count".to_string();
    if let Some((start, rest)) = value.split_once(':') {
        let (stop, count) = rest.split_once(':').ok_or(what.clone())?;
        let (start, stop) = (start.trim().parse::<f64>(), stop.trim().parse::<f64>());
        let count = count.trim().parse::<usize>();
        let (Ok(start), Ok(stop), Ok(count)) = (start, stop, count) else {
            return Err(what);
        };
        if count == 0 {
            return Err(what);
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        return Ok((0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect());
    }
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or(what.clone()))
        .collect()
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}
