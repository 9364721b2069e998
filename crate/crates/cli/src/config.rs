//! Run configuration: defaults, flat key-value config files, and flag
//! overrides.
//!
//! Precedence is defaults < config file < command-line flags. The config
//! file holds exactly the keys of [`RunConfig`]; unknown keys are errors so
//! a misspelled penalty name cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use trmf_core::Hyperparams;

use crate::error::{CliError, CliResult};

/// A forecasting method the backtest can run.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    /// The factorization model with the configured hyperparameters.
    Trmf,
    /// Per-series autoregressive baseline of the given order.
    ArBaseline {
        /// Autoregression order.
        order: usize,
    },
}

impl MethodSpec {
    /// Parses `trmf`, `ar` (order 2), or `ar:<order>`.
    pub fn parse(text: &str) -> CliResult<Self> {
        let text = text.trim();
        if text == "trmf" {
            return Ok(MethodSpec::Trmf);
        }
        if text == "ar" {
            return Ok(MethodSpec::ArBaseline { order: 2 });
        }
        if let Some(order) = text.strip_prefix("ar:") {
            let order: usize = order
                .parse()
                .map_err(|_| CliError::validation(format!("invalid AR order in method '{text}'")))?;
            return Ok(MethodSpec::ArBaseline { order });
        }
        Err(CliError::validation(format!(
            "unknown method '{text}' (expected 'trmf', 'ar', or 'ar:<order>')"
        )))
    }

    fn to_config_string(&self) -> String {
        match self {
            MethodSpec::Trmf => "trmf".into(),
            MethodSpec::ArBaseline { order } => format!("ar:{order}"),
        }
    }
}

/// Everything a run needs: hyperparameters, protocol settings, and paths.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Solver hyperparameters.
    pub hyper: Hyperparams,
    /// Forecast horizon.
    pub horizon: usize,
    /// Backtest fold count.
    pub folds: usize,
    /// Season cycle length for the seasonal indices.
    pub season_length: Option<usize>,
    /// Methods the backtest compares.
    pub methods: Vec<MethodSpec>,
    /// Long-format observations CSV.
    pub input: Option<PathBuf>,
    /// Hierarchy edge-list CSV.
    pub hierarchy: Option<PathBuf>,
    /// Output directory.
    pub out: PathBuf,
    /// Clamp emitted forecasts at zero.
    pub clamp_nonnegative: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            horizon: 1,
            folds: 1,
            season_length: None,
            methods: vec![MethodSpec::Trmf, MethodSpec::ArBaseline { order: 2 }],
            input: None,
            hierarchy: None,
            out: PathBuf::from("out"),
            clamp_nonnegative: false,
        }
    }
}

impl RunConfig {
    /// Applies a flat `key = value` config file on top of the current state.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config '{}': {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::validation(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                )));
            };
            self.apply_key(key.trim(), value.trim()).map_err(|e| {
                CliError::validation(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> CliResult<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
            value
                .parse()
                .map_err(|_| CliError::validation(format!("invalid value '{value}' for key '{key}'")))
        }
        match key {
            "d" => self.hyper.d = parse(key, value)?,
            "p" => self.hyper.p = parse(key, value)?,
            "lambda_f" => self.hyper.lambda_f = parse(key, value)?,
            "lambda_x" => self.hyper.lambda_x = parse(key, value)?,
            "lambda_theta" => self.hyper.lambda_theta = parse(key, value)?,
            "eta_x" => self.hyper.eta_x = parse(key, value)?,
            "eta_f" => self.hyper.eta_f = parse(key, value)?,
            "max_sweeps" => self.hyper.max_sweeps = parse(key, value)?,
            "tol" => self.hyper.tol = parse(key, value)?,
            "seed" => self.hyper.seed = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "season_length" => self.season_length = Some(parse(key, value)?),
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(MethodSpec::parse)
                    .collect::<CliResult<_>>()?;
            }
            "input" => self.input = Some(PathBuf::from(value)),
            "hierarchy" => self.hierarchy = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "clamp_nonnegative" => self.clamp_nonnegative = parse(key, value)?,
            _ => {
                return Err(CliError::validation(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }

    /// The input path, or a validation error telling the user how to set it.
    pub fn require_input(&self) -> CliResult<&Path> {
        self.input.as_deref().ok_or_else(|| {
            CliError::validation("missing input path: pass --input <csv> or set 'input' in the config")
        })
    }

    /// Echo of every setting actually used, keyed for `summary.json`.
    pub fn echo(&self) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        map.insert("d".into(), json!(self.hyper.d));
        map.insert("p".into(), json!(self.hyper.p));
        map.insert("lambda_f".into(), json!(self.hyper.lambda_f));
        map.insert("lambda_x".into(), json!(self.hyper.lambda_x));
        map.insert("lambda_theta".into(), json!(self.hyper.lambda_theta));
        map.insert("eta_x".into(), json!(self.hyper.eta_x));
        map.insert("eta_f".into(), json!(self.hyper.eta_f));
        map.insert("max_sweeps".into(), json!(self.hyper.max_sweeps));
        map.insert("tol".into(), json!(self.hyper.tol));
        map.insert("seed".into(), json!(self.hyper.seed));
        map.insert("horizon".into(), json!(self.horizon));
        map.insert("folds".into(), json!(self.folds));
        map.insert("season_length".into(), json!(self.season_length));
        map.insert(
            "methods".into(),
            json!(self
                .methods
                .iter()
                .map(MethodSpec::to_config_string)
                .collect::<Vec<_>>()),
        );
        map.insert("input".into(), json!(self.input));
        map.insert("hierarchy".into(), json!(self.hierarchy));
        map.insert("out".into(), json!(self.out));
        map.insert("clamp_nonnegative".into(), json!(self.clamp_nonnegative));
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_known_keys() {
        let file = write_config(
            "# comment\nd = 4\nlambda_f = 0.25\nmethods = trmf,ar:3\nseed = 11\nclamp_nonnegative = true\n",
        );
        let mut cfg = RunConfig::default();
        cfg.apply_file(file.path()).unwrap();
        assert_eq!(cfg.hyper.d, 4);
        assert_eq!(cfg.hyper.lambda_f, 0.25);
        assert_eq!(cfg.hyper.seed, 11);
        assert!(cfg.clamp_nonnegative);
        assert_eq!(
            cfg.methods,
            vec![MethodSpec::Trmf, MethodSpec::ArBaseline { order: 3 }]
        );
    }

    #[test]
    fn rejects_unknown_key() {
        let file = write_config("lambda_q = 1\n");
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file(file.path()).unwrap_err();
        assert!(err.to_string().contains("unknown config key 'lambda_q'"));
    }

    #[test]
    fn rejects_bad_value() {
        let file = write_config("d = lots\n");
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file(file.path()).unwrap_err();
        assert!(err.to_string().contains("invalid value"));
    }

    #[test]
    fn method_parsing() {
        assert_eq!(MethodSpec::parse("trmf").unwrap(), MethodSpec::Trmf);
        assert_eq!(
            MethodSpec::parse("ar").unwrap(),
            MethodSpec::ArBaseline { order: 2 }
        );
        assert_eq!(
            MethodSpec::parse("ar:5").unwrap(),
            MethodSpec::ArBaseline { order: 5 }
        );
        assert!(MethodSpec::parse("gbm").is_err());
    }
}
