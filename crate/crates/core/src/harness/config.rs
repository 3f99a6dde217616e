//! Flat dotted-key experiment configuration.
//!
//! A config file is TOML; nested tables are flattened, so `[noise]\nmean = 0.3` and
//! `noise.mean = 0.3` are the same key. Command-line overrides take the form `--key=value`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::baselines::BaselineKind;
use crate::data::StreamConfig;
use crate::error::{Error, Result};
use crate::frameworks::{LimitMode, OracleBudget, Variant};
use crate::models::{ClassifierSpec, ModelKind};
use crate::noise::{NoiseSpec, StdDevMode};

/// A framework variant or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Framework(Variant),
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Framework(Variant::Rad),
        Method::Framework(Variant::Voting),
        Method::Framework(Variant::Active),
        Method::Framework(Variant::Slimmed),
        Method::Baseline(BaselineKind::NoSel),
        Method::Baseline(BaselineKind::OptSel),
        Method::Baseline(BaselineKind::FullClean),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Framework(v) => v.name(),
            Method::Baseline(b) => b.name(),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{s}' (expected one of {})",
                    Method::ALL.map(Method::name).join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic { separation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DatasetSource,
    pub stream: StreamConfig,
    pub noise: NoiseSpec,
    pub label_model: ClassifierSpec,
    pub classifier: ClassifierSpec,
    pub method: Method,
    pub budget: OracleBudget,
    pub repetitions: usize,
    pub output_dir: Option<PathBuf>,
    /// Deliver a noiseless initial batch instead of injecting noise into it.
    pub initial_clean: bool,
    /// Also run No-Sel, Opt-Sel and Full-Clean on the same streams for comparison.
    pub paired_baselines: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DatasetSource::Synthetic { separation: 3.0 },
            stream: StreamConfig::default(),
            noise: NoiseSpec::default(),
            label_model: ClassifierSpec::label_model_default(),
            classifier: ClassifierSpec::classifier_default(),
            method: Method::Framework(Variant::Rad),
            budget: OracleBudget::unlimited(),
            repetitions: 3,
            output_dir: None,
            initial_clean: false,
            paired_baselines: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.noise.validate()?;
        self.label_model.validate()?;
        self.classifier.validate()?;
        self.budget.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("experiment.repetitions must be at least 1".into()));
        }
        if let DatasetSource::Synthetic { separation } = self.source {
            if separation.is_nan() || separation <= 0.0 {
                return Err(Error::Config("dataset.separation must be positive".into()));
            }
        }
        Ok(())
    }

    /// Everything that identifies the run except the seed derivation and output location.
    pub fn key(&self) -> String {
        // baselines ignore the label model and the oracle
        let (label_model, budget) = match self.method {
            Method::Baseline(_) => (ClassifierSpec::label_model_default(), OracleBudget::unlimited()),
            Method::Framework(_) => (self.label_model.clone(), self.budget),
        };
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{}|{:?}|{}",
            self.source,
            StreamConfig {
                seed: 0,
                ..self.stream.clone()
            },
            NoiseSpec {
                seed: 0,
                ..self.noise.clone()
            },
            label_model,
            self.classifier,
            self.method,
            budget,
            self.initial_clean
        )
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let mut map = load_flat(path)?;
        apply_overrides(&mut map, overrides)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &FlatConfig) -> Result<Self> {
        let mut r = Reader {
            map,
            used: Vec::new(),
        };
        let d = ExperimentConfig::default();

        let source = match r.string("dataset.source")?.as_deref().unwrap_or("synthetic") {
            "synthetic" => DatasetSource::Synthetic {
                separation: r.float("dataset.separation")?.unwrap_or(3.0),
            },
            "csv" => DatasetSource::Csv(
                r.string("dataset.path")?
                    .ok_or_else(|| Error::Config("dataset.source = csv needs dataset.path".into()))?
                    .into(),
            ),
            other => {
                return Err(Error::Config(format!(
                    "dataset.source must be 'synthetic' or 'csv', got '{other}'"
                )))
            }
        };

        let ds = &d.stream;
        let stream = StreamConfig {
            num_classes: r.usize("stream.num_classes")?.unwrap_or(ds.num_classes),
            num_features: r.usize("stream.num_features")?.unwrap_or(ds.num_features),
            initial_batch_size: r
                .usize("stream.initial_batch_size")?
                .unwrap_or(ds.initial_batch_size),
            batch_size: r.usize("stream.batch_size")?.unwrap_or(ds.batch_size),
            num_batches: r.usize("stream.num_batches")?.unwrap_or(ds.num_batches),
            test_size: r.usize("stream.test_size")?.unwrap_or(ds.test_size),
            seed: r.u64("stream.seed")?.unwrap_or(ds.seed),
            stratify: r.bool("stream.stratify")?.unwrap_or(ds.stratify),
            scale: r.bool("stream.scale")?.unwrap_or(ds.scale),
        };

        let noise = NoiseSpec {
            mean_level: r.float("noise.mean")?.unwrap_or(d.noise.mean_level),
            std_dev_mode: match r.string("noise.std_mode")?.as_deref() {
                None | Some("relative") => StdDevMode::Relative,
                Some("absolute") => StdDevMode::Absolute,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "noise.std_mode must be 'relative' or 'absolute', got '{other}'"
                    )))
                }
            },
            std_dev: r.float("noise.std")?.unwrap_or(d.noise.std_dev),
            seed: r.u64("noise.seed")?.unwrap_or(d.noise.seed),
        };

        let label_model = r.classifier("label_model", &d.label_model)?;
        let classifier = r.classifier("classifier", &d.classifier)?;

        let method = match r.string("framework.variant")? {
            Some(s) => s.parse()?,
            None => d.method,
        };

        let budget = match r.string("oracle.limit_mode")?.as_deref() {
            None | Some("unlimited") => {
                r.float("oracle.fraction")?;
                OracleBudget::unlimited()
            }
            Some("per_batch_fraction") => OracleBudget {
                limit_mode: LimitMode::PerBatchFraction,
                fraction: r.float("oracle.fraction")?.ok_or_else(|| {
                    Error::Config("oracle.limit_mode = per_batch_fraction needs oracle.fraction".into())
                })?,
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "oracle.limit_mode must be 'unlimited' or 'per_batch_fraction', got '{other}'"
                )))
            }
        };

        let config = ExperimentConfig {
            source,
            stream,
            noise,
            label_model,
            classifier,
            method,
            budget,
            repetitions: r.usize("experiment.repetitions")?.unwrap_or(d.repetitions),
            output_dir: r.string("experiment.output_dir")?.map(PathBuf::from),
            initial_clean: r.bool("initial.clean")?.unwrap_or(d.initial_clean),
            paired_baselines: r
                .bool("experiment.paired_baselines")?
                .unwrap_or(d.paired_baselines),
        };

        // matrix.* keys belong to the matrix expansion
        for key in map.keys() {
            if !key.starts_with("matrix.") && !r.used.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
        }
        config.validate()?;
        Ok(config)
    }
}

pub type FlatConfig = BTreeMap<String, Value>;

pub fn load_flat(path: impl AsRef<Path>) -> Result<FlatConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_flat(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_flat(text: &str) -> Result<FlatConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let mut out = FlatConfig::new();
    flatten("", table, &mut out);
    Ok(out)
}

fn flatten(prefix: &str, table: toml::Table, out: &mut FlatConfig) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Apply `--key=value` (or `key=value`) overrides. Values are read as TOML when they parse,
/// otherwise as bare strings.
pub fn apply_overrides(map: &mut FlatConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let body = o.strip_prefix("--").unwrap_or(o);
        let (key, raw) = body
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{o}' is not of the form --key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        map.insert(key.trim().to_string(), value);
    }
    Ok(())
}

struct Reader<'a> {
    map: &'a FlatConfig,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn get(&mut self, key: &str) -> Option<&'a Value> {
        let (k, v) = self.map.get_key_value(key)?;
        self.used.push(k.as_str());
        Some(v)
    }

    fn wrong(key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("{key}: expected {want}, got {v}"))
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::wrong(key, "a string", v)),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::wrong(key, "a number", v)),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Self::wrong(key, "a non-negative integer", v)),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Self::wrong(key, "true or false", v)),
        }
    }

    fn widths(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        let parse = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{key}: bad width '{t}'")))
                })
                .collect()
        };
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    other => Err(Self::wrong(key, "positive integers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::String(s)) => parse(s).map(Some),
            Some(Value::Integer(i)) if *i > 0 => Ok(Some(vec![*i as usize])),
            Some(v) => Err(Self::wrong(key, "a list of widths", v)),
        }
    }

    fn classifier(&mut self, prefix: &str, d: &ClassifierSpec) -> Result<ClassifierSpec> {
        let kind: ModelKind = match self.string(&format!("{prefix}.kind"))? {
            Some(s) => s.parse()?,
            None => d.kind,
        };
        Ok(ClassifierSpec {
            kind,
            knn_k: self.usize(&format!("{prefix}.knn_k"))?.unwrap_or(d.knn_k),
            mlp_hidden: self
                .widths(&format!("{prefix}.mlp_hidden"))?
                .unwrap_or_else(|| d.mlp_hidden.clone()),
            mlp_epochs: self.usize(&format!("{prefix}.mlp_epochs"))?.unwrap_or(d.mlp_epochs),
            mlp_learning_rate: self
                .float(&format!("{prefix}.mlp_learning_rate"))?
                .unwrap_or(d.mlp_learning_rate),
            mlp_batch_size: self
                .usize(&format!("{prefix}.mlp_batch_size"))?
                .unwrap_or(d.mlp_batch_size),
            seed: self.u64(&format!("{prefix}.seed"))?.unwrap_or(d.seed),
        })
    }
}

/// Expand `matrix.variants` and `matrix.noise_levels` into one config per combination.
pub fn expand_matrix(map: &FlatConfig) -> Result<Vec<ExperimentConfig>> {
    let list = |key: &str| -> Result<Option<Vec<Value>>> {
        match map.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a.clone())),
            Some(Value::String(s)) => Ok(Some(
                s.split(',')
                    .map(|t| {
                        let t = t.trim();
                        t.parse::<f64>()
                            .map(Value::Float)
                            .unwrap_or_else(|_| Value::String(t.to_string()))
                    })
                    .collect(),
            )),
            Some(v) => Err(Error::Config(format!("{key}: expected a list, got {v}"))),
        }
    };
    let variants = list("matrix.variants")?
        .unwrap_or_else(|| vec![map.get("framework.variant").cloned().unwrap_or(Value::String("rad".into()))]);
    let levels = list("matrix.noise_levels")?.unwrap_or_else(|| {
        vec![map.get("noise.mean").cloned().unwrap_or(Value::Float(NoiseSpec::default().mean_level))]
    });

    let mut configs = Vec::with_capacity(variants.len() * levels.len());
    for v in &variants {
        for level in &levels {
            let mut m = map.clone();
            m.insert("framework.variant".into(), v.clone());
            m.insert("noise.mean".into(), level.clone());
            configs.push(ExperimentConfig::from_map(&m)?);
        }
    }
    Ok(configs)
}
