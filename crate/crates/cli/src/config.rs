//! Experiment configuration from flags, a flat `key = value` file, and defaults.
//!
//! Precedence is flag, then file, then [`ExperimentConfig::default`]. Values
//! from both sources go through the same parser so errors always name the
//! offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser};
use tcem::{Error as CoreError, ExperimentConfig, Scheme, SubordinatorSpec, MODEL_NAMES};

/// Failure classes with distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A flag or file entry has an invalid value.
    #[error("invalid `{key}`: {message}")]
    Usage { key: String, message: String },
    /// The configuration is well-formed but cannot be run (unreadable
    /// file, step size too coarse for the truncation policy, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// The run itself failed.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn usage(key: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::ParameterDomain { name, .. } => CliError::usage(name, e.to_string()),
            CoreError::Configuration(_) | CoreError::Model { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Experiment flags shared by `converge`, `moments` and `path`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` file; flags take precedence over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One of example1, example2, linear-test, zero.
    #[arg(long)]
    pub model: Option<String>,
    /// Subordinator family: stable, drift or stable_with_drift.
    #[arg(long)]
    pub subordinator: Option<String>,
    /// Stability index in (0, 1).
    #[arg(long)]
    pub beta: Option<String>,
    /// Drift coefficient of the subordinator.
    #[arg(long)]
    pub theta: Option<String>,
    /// Truncation exponent in (0, 0.25].
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Error exponent, at least 2.
    #[arg(long)]
    pub pbar: Option<String>,
    /// Reference step size.
    #[arg(long = "delta-fine")]
    pub delta_fine: Option<String>,
    /// Comma-separated coarse step sizes.
    #[arg(long)]
    pub deltas: Option<String>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<String>,
    /// Operational horizon T.
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// truncated or plain.
    #[arg(long)]
    pub scheme: Option<String>,
}

const KEYS: [&str; 12] = [
    "model",
    "subordinator",
    "beta",
    "theta",
    "epsilon",
    "pbar",
    "delta_fine",
    "deltas",
    "paths",
    "horizon",
    "seed",
    "scheme",
];

impl ConfigArgs {
    fn entries(&self) -> BTreeMap<&'static str, String> {
        let fields = [
            &self.model,
            &self.subordinator,
            &self.beta,
            &self.theta,
            &self.epsilon,
            &self.pbar,
            &self.delta_fine,
            &self.deltas,
            &self.paths,
            &self.horizon,
            &self.seed,
            &self.scheme,
        ];
        KEYS.iter()
            .zip(fields)
            .filter_map(|(k, v)| v.clone().map(|v| (*k, v)))
            .collect()
    }
}

/// Parse a flat `key = value` file. Blank lines and `#` comments are ignored;
/// `-` in keys is read as `_`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<&'static str, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().replace('-', "_");
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| CliError::usage(&key, "unknown configuration key"))?;
        out.insert(*known, value.trim().to_string());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(key, format!("cannot parse `{value}` as a number")))
}

/// Merge flags over file entries over defaults and validate the result.
pub fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let mut merged = match &args.config {
        Some(path) => parse_config_file(&read_file(path)?)?,
        None => BTreeMap::new(),
    };
    merged.extend(args.entries());
    build(&merged)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn build(entries: &BTreeMap<&'static str, String>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    let get = |k: &str| entries.get(k).map(String::as_str);

    if let Some(model) = get("model") {
        if !MODEL_NAMES.contains(&model) {
            return Err(CliError::usage(
                "model",
                format!(
                    "unknown model `{model}`; expected one of {}",
                    MODEL_NAMES.join(", ")
                ),
            ));
        }
        cfg.model = model.to_string();
    }

    let beta = get("beta")
        .map(|v| parse_num::<f64>("beta", v))
        .transpose()?;
    let theta = get("theta")
        .map(|v| parse_num::<f64>("theta", v))
        .transpose()?;
    let kind = get("subordinator").unwrap_or("stable");
    cfg.subordinator = match kind {
        "stable" => SubordinatorSpec::Stable {
            beta: beta.unwrap_or(0.9),
        },
        "drift" | "drift_only" => SubordinatorSpec::DriftOnly {
            theta: theta.unwrap_or(1.0),
        },
        "stable_with_drift" => SubordinatorSpec::StableWithDrift {
            beta: beta.unwrap_or(0.9),
            theta: theta.unwrap_or(1.0),
        },
        other => {
            return Err(CliError::usage(
                "subordinator",
                format!("unknown family `{other}`; expected stable, drift or stable_with_drift"),
            ))
        }
    };
    cfg.subordinator.validate()?;

    if let Some(v) = get("epsilon") {
        let eps: f64 = parse_num("epsilon", v)?;
        if !(eps > 0.0 && eps <= 0.25) {
            return Err(CliError::usage(
                "epsilon",
                format!(
                    "{eps} is outside (0, 0.25]; the strong convergence rate requires ε ∈ (0, 1/4]"
                ),
            ));
        }
        cfg.epsilon = eps;
    }
    if let Some(v) = get("pbar") {
        cfg.pbar = parse_num("pbar", v)?;
    }
    if let Some(v) = get("delta_fine") {
        cfg.delta_fine = parse_num("delta_fine", v)?;
    }
    if let Some(v) = get("deltas") {
        cfg.deltas = v
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_num("deltas", s))
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = get("paths") {
        cfg.n_paths = parse_num("paths", v)?;
    }
    if let Some(v) = get("horizon") {
        cfg.horizon = parse_num("horizon", v)?;
    }
    if let Some(v) = get("seed") {
        cfg.seed = parse_num("seed", v)?;
    }
    if let Some(v) = get("scheme") {
        cfg.scheme = v
            .parse::<Scheme>()
            .map_err(|m| CliError::usage("scheme", m))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Parser)]
struct Standalone {
    #[command(flatten)]
    args: ConfigArgs,
}

/// Parse an argument list (without the program name) into a configuration.
pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("tcem")).chain(args.into_iter().map(Into::into));
    let parsed = Standalone::try_parse_from(argv)
        .map_err(|e| CliError::usage("arguments", e.to_string()))?;
    resolve(&parsed.args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<ExperimentConfig, CliError> {
        parse_config(args.iter().copied())
    }

    fn key_of(e: CliError) -> String {
        match e {
            CliError::Usage { key, .. } => key,
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn empty_args_give_defaults() {
        let cfg = parse(&[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.model, "example1");
        assert_eq!(cfg.subordinator, SubordinatorSpec::Stable { beta: 0.9 });
        assert_eq!((cfg.epsilon, cfg.pbar, cfg.delta_fine), (0.25, 2.0, 1e-5));
        assert_eq!(cfg.deltas, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!((cfg.n_paths, cfg.seed), (100, 42));
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = parse(&["--model", "example2", "--paths", "50"]).unwrap();
        assert_eq!(
            cfg,
            ExperimentConfig {
                model: "example2".into(),
                n_paths: 50,
                ..ExperimentConfig::default()
            }
        );
    }

    #[test]
    fn epsilon_above_quarter_is_rejected() {
        let err = parse(&["--epsilon", "0.3"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("epsilon") && msg.contains("(0, 1/4]"), "{msg}");
        assert_eq!(key_of(parse(&["--epsilon", "0"]).unwrap_err()), "epsilon");
    }

    #[test]
    fn offending_keys_are_named() {
        assert_eq!(key_of(parse(&["--model", "cubic"]).unwrap_err()), "model");
        assert_eq!(
            key_of(parse(&["--deltas", "1.5e-5"]).unwrap_err()),
            "deltas"
        );
        assert_eq!(key_of(parse(&["--paths", "many"]).unwrap_err()), "paths");
        assert_eq!(key_of(parse(&["--scheme", "rk4"]).unwrap_err()), "scheme");
        assert_eq!(key_of(parse(&["--beta", "1.5"]).unwrap_err()), "beta");
        assert_eq!(key_of(parse(&["--bogus", "1"]).unwrap_err()), "arguments");
    }

    #[test]
    fn file_values_sit_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# convergence run\nmodel = example2\npaths=7\ndelta-fine = 1e-4 # reference\n\ndeltas = 1e-2, 1e-3\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["--config", p, "--paths", "9"]).unwrap();
        assert_eq!(cfg.model, "example2");
        assert_eq!(cfg.n_paths, 9);
        assert_eq!(cfg.delta_fine, 1e-4);
        assert_eq!(cfg.deltas, vec![1e-2, 1e-3]);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn bad_files() {
        assert!(matches!(
            parse(&["--config", "/nonexistent/tcem.conf"]).unwrap_err(),
            CliError::Config(_)
        ));
        assert!(matches!(
            parse_config_file("model example1").unwrap_err(),
            CliError::Config(_)
        ));
        assert_eq!(
            key_of(parse_config_file("colour = red").unwrap_err()),
            "colour"
        );
    }

    #[test]
    fn drift_subordinator() {
        let cfg = parse(&["--subordinator", "drift", "--theta", "2"]).unwrap();
        assert_eq!(cfg.subordinator, SubordinatorSpec::DriftOnly { theta: 2.0 });
    }
}
