//! Training configuration file and flag overrides.
//!
//! The file is one JSON object: any `TrainConfig` field, plus the path keys
//! below. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use otrank::TrainConfig;
use serde_json::{Map, Value};

use crate::args::TrainArgs;
use crate::error::{CliError, Result};

const PATH_KEYS: [&str; 4] = ["train", "dev", "embeddings", "output_dir"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub paths: ConfigPaths,
    pub train: TrainConfig,
}

/// Fully resolved inputs of the `train` command.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub embeddings: PathBuf,
    pub output_dir: PathBuf,
    pub config: TrainConfig,
}

pub fn load(path: &Path) -> Result<CliConfig> {
    let bad = |m: String| CliError::Validation(format!("--config {}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut obj: Map<String, Value> =
        match serde_json::from_str(&text).map_err(|e| bad(e.to_string()))? {
            Value::Object(m) => m,
            _ => return Err(bad("expected a JSON object".into())),
        };
    let base = path.parent().unwrap_or(Path::new(""));
    let mut take = |key: &str| -> Result<Option<PathBuf>> {
        match obj.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(base.join(s))),
            Some(_) => Err(bad(format!("{key:?} must be a path string"))),
        }
    };
    let paths = ConfigPaths {
        train: take(PATH_KEYS[0])?,
        dev: take(PATH_KEYS[1])?,
        embeddings: take(PATH_KEYS[2])?,
        output_dir: take(PATH_KEYS[3])?,
    };
    let train = serde_json::from_value(Value::Object(obj)).map_err(|e| bad(e.to_string()))?;
    Ok(CliConfig { paths, train })
}

/// A config object with the given paths, for writing next to generated data.
pub fn to_json(cfg: &CliConfig) -> Value {
    let mut obj = match serde_json::to_value(&cfg.train).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("TrainConfig is a struct"),
    };
    let p = &cfg.paths;
    for (key, v) in PATH_KEYS
        .iter()
        .zip([&p.train, &p.dev, &p.embeddings, &p.output_dir])
    {
        if let Some(path) = v {
            obj.insert(key.to_string(), Value::String(path.display().to_string()));
        }
    }
    Value::Object(obj)
}

/// Layer flags over the config file over the defaults.
pub fn resolve(args: &TrainArgs) -> Result<TrainPlan> {
    let file = match &args.config {
        Some(p) => load(p)?,
        None => CliConfig {
            paths: ConfigPaths::default(),
            train: TrainConfig::default(),
        },
    };
    let mut config = file.train;
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.gamma {
        config.gamma = v;
    }
    if let Some(v) = args.hidden {
        config.hidden = v;
    }
    if let Some(v) = args.gcn_layers {
        config.gcn_layers = v;
    }
    let need = |flag: Option<&PathBuf>, file: Option<PathBuf>, name: &str| {
        flag.cloned().or(file).ok_or_else(|| {
            CliError::Validation(format!("--{name} is required (or set it in --config)"))
        })
    };
    Ok(TrainPlan {
        train: need(args.train.as_ref(), file.paths.train, "train")?,
        dev: args.dev.clone().or(file.paths.dev),
        embeddings: need(
            args.embeddings.as_ref(),
            file.paths.embeddings,
            "embeddings",
        )?,
        output_dir: need(
            args.output_dir.as_ref(),
            file.paths.output_dir,
            "output-dir",
        )?,
        config,
    })
}
