//! Experiment driver: build the stream, inject noise, run a method arrival by arrival,
//! evaluate on the clean test set after every arrival and write the reports.
//!
//! Test accuracy is measured on the end-of-arrival state, i.e. after retraining and, for
//! voting, after history reprocessing.

mod config;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    apply_overrides, expand_matrix, load_flat, parse_flat, DatasetSource, ExperimentConfig,
    FlatConfig, Method,
};
pub use report::{comparison_table, write_batches_csv, write_summary, ComparisonRow};

use crate::baselines::{BaselineKind, BaselineState};
use crate::data::{generate_synthetic, load_csv, split_stream, Batch, Dataset, LabeledInstance};
use crate::error::{Error, Result};
use crate::frameworks::{ArrivalLog, FrameworkState, OracleBudget, TruthOracle};
use crate::metrics::{aggregate_runs, ReportAccumulator, RunResult, RunSummary};
use crate::models::{evaluate_accuracy, ClassifierModel};
use crate::noise::apply_noise;

/// Independent random stream `stream` of a seed.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SPLIT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;
const ORACLE_STREAM: u64 = 3;

/// A framework or a baseline, driven through the same loop.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Learner {
    Framework(FrameworkState),
    Baseline(BaselineState),
}

impl Learner {
    pub fn initialize(
        config: &ExperimentConfig,
        method: Method,
        initial: &Batch,
        num_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(match method {
            Method::Framework(v) => Learner::Framework(FrameworkState::initialize(
                v,
                initial,
                &config.label_model,
                &config.classifier,
                num_classes,
                rng,
            )?),
            Method::Baseline(b) => Learner::Baseline(BaselineState::initialize(
                b,
                initial,
                &config.classifier,
                num_classes,
                rng,
            )?),
        })
    }

    pub fn step(
        &mut self,
        batch: Batch,
        oracle: &mut TruthOracle,
        budget: &OracleBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<ArrivalLog> {
        match self {
            Learner::Framework(s) => s.step(batch, oracle, budget, rng),
            Learner::Baseline(s) => s.step(batch),
        }
    }

    pub fn classifier(&self) -> &ClassifierModel {
        match self {
            Learner::Framework(s) => &s.classifier,
            Learner::Baseline(s) => &s.classifier,
        }
    }

    /// Every instance that has entered a training set.
    pub fn training_pool(&self) -> &[LabeledInstance] {
        match self {
            Learner::Framework(s) => &s.clean_pool,
            Learner::Baseline(s) => &s.pool,
        }
    }
}

/// Load or generate the ground-truth dataset of a config.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.source {
        DatasetSource::Synthetic { separation } => generate_synthetic(&config.stream, *separation),
        DatasetSource::Csv(path) => {
            let d = load_csv(path, config.stream.num_classes)?;
            if d.num_features != config.stream.num_features {
                return Err(Error::Config(format!(
                    "{}: {} feature columns, stream.num_features = {}",
                    path.display(),
                    d.num_features,
                    config.stream.num_features
                )));
            }
            Ok(d)
        }
    }
}

/// The noisy stream seen by every method in one repetition.
#[derive(Debug, Clone)]
pub struct NoisyStream {
    pub initial: Batch,
    pub arrivals: Vec<Batch>,
    pub test: Vec<LabeledInstance>,
}

pub fn repetition_seed(config: &ExperimentConfig, repetition: usize) -> u64 {
    config.stream.seed ^ repetition as u64
}

/// Split and corrupt the dataset for one repetition. Test instances are never corrupted.
pub fn prepare_stream(
    config: &ExperimentConfig,
    dataset: &Dataset,
    repetition: usize,
) -> Result<NoisyStream> {
    let seed = repetition_seed(config, repetition);
    let split = split_stream(dataset, &config.stream, &mut derive_rng(seed, SPLIT_STREAM))?;
    let mut noise_rng = derive_rng(config.noise.seed ^ repetition as u64, NOISE_STREAM);
    let k = config.stream.num_classes;
    let initial = if config.initial_clean {
        split.initial
    } else {
        apply_noise(split.initial, &config.noise, k, &mut noise_rng).map_err(|e| e.at(0, "noise"))?
    };
    let arrivals = split
        .arrivals
        .into_iter()
        .map(|b| {
            let i = b.index;
            apply_noise(b, &config.noise, k, &mut noise_rng).map_err(|e| e.at(i, "noise"))
        })
        .collect::<Result<_>>()?;
    Ok(NoisyStream {
        initial,
        arrivals,
        test: split.test,
    })
}

/// One repetition of one method: the metrics rows and the raw per-arrival selection logs.
#[derive(Debug, Clone)]
pub struct RepetitionOutput {
    pub result: RunResult,
    pub logs: Vec<ArrivalLog>,
}

pub fn run_repetition(
    config: &ExperimentConfig,
    method: Method,
    stream: &NoisyStream,
    repetition: usize,
) -> Result<RepetitionOutput> {
    let seed = repetition_seed(config, repetition);
    let k = config.stream.num_classes;
    let mut model_rng = derive_rng(seed, MODEL_STREAM);
    let mut oracle_rng = derive_rng(seed, ORACLE_STREAM);
    let mut learner = Learner::initialize(config, method, &stream.initial, k, &mut model_rng)
        .map_err(|e| e.at(0, "initialize"))?;
    let initial_accuracy =
        evaluate_accuracy(learner.classifier(), &stream.test).map_err(|e| e.at(0, "evaluate"))?;

    let mut oracle = TruthOracle::default();
    let mut acc = ReportAccumulator::new();
    let mut reports = Vec::with_capacity(stream.arrivals.len());
    let mut logs = Vec::with_capacity(stream.arrivals.len());
    for batch in &stream.arrivals {
        let i = batch.index;
        let log = learner
            .step(batch.clone(), &mut oracle, &config.budget, &mut oracle_rng)
            .map_err(|e| e.at(i, "step"))?;
        let accuracy = evaluate_accuracy(learner.classifier(), &stream.test)
            .map_err(|e| e.at(i, "evaluate"))?;
        reports.push(acc.push(&log, accuracy));
        logs.push(log);
    }

    let test_ids: HashSet<usize> = stream.test.iter().map(LabeledInstance::id).collect();
    if let Some(x) = learner.training_pool().iter().find(|x| test_ids.contains(&x.id())) {
        return Err(Error::validation(format!(
            "test instance {} leaked into the training pool",
            x.id()
        )));
    }

    Ok(RepetitionOutput {
        result: RunResult {
            method: method.name().to_string(),
            noise_level: config.noise.mean_level,
            repetition,
            seed,
            config_key: ExperimentConfig {
                method,
                ..config.clone()
            }
            .key(),
            initial_accuracy,
            reports,
        },
        logs,
    })
}

/// Aggregated result of one config: the method itself plus its paired baselines.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: RunSummary,
    pub baselines: Vec<RunSummary>,
    pub runs: Vec<RunResult>,
    pub failures: Vec<String>,
}

impl ExperimentOutcome {
    pub fn row(&self) -> ComparisonRow {
        ComparisonRow::from_summary(&self.summary)
    }
}

/// Caches runs by (method, config key, repetition) so a matrix never repeats a baseline.
#[derive(Debug, Default)]
pub struct Runner {
    cache: BTreeMap<(String, usize), RunResult>,
    datasets: BTreeMap<String, Dataset>,
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    fn dataset(&mut self, config: &ExperimentConfig) -> Result<&Dataset> {
        let key = format!("{:?}|{:?}", config.source, config.stream);
        if !self.datasets.contains_key(&key) {
            let d = load_dataset(config)?;
            self.datasets.insert(key.clone(), d);
        }
        Ok(&self.datasets[&key])
    }

    /// Run every repetition of `method` (and write its per-batch CSVs).
    fn runs_for(
        &mut self,
        config: &ExperimentConfig,
        method: Method,
        failures: &mut Vec<String>,
    ) -> Result<Vec<RunResult>> {
        let cfg = ExperimentConfig {
            method,
            ..config.clone()
        };
        let key = cfg.key();
        let mut out = Vec::with_capacity(config.repetitions);
        for rep in 0..config.repetitions {
            let cache_key = (key.clone(), rep);
            if let Some(r) = self.cache.get(&cache_key) {
                out.push(r.clone());
                continue;
            }
            let dataset = self.dataset(&cfg)?.clone();
            let outcome = prepare_stream(&cfg, &dataset, rep)
                .and_then(|s| run_repetition(&cfg, method, &s, rep));
            match outcome {
                Ok(o) => {
                    if let Some(dir) = &config.output_dir {
                        let path = dir
                            .join(method.name())
                            .join(format!("{:.2}", config.noise.mean_level))
                            .join(rep.to_string())
                            .join("batches.csv");
                        write_batches_csv(&path, &o.result.reports)?;
                    }
                    info!(
                        "{} noise {:.2} rep {rep}: final accuracy {:.4}",
                        method,
                        config.noise.mean_level,
                        o.result.final_accuracy()
                    );
                    self.cache.insert(cache_key, o.result.clone());
                    out.push(o.result);
                }
                Err(e) => {
                    let msg = format!("{method} noise {:.2} repetition {rep}: {e}", config.noise.mean_level);
                    warn!("{msg}");
                    failures.push(msg);
                }
            }
        }
        Ok(out)
    }

    pub fn run_experiment(&mut self, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
        config.validate()?;
        let mut failures = Vec::new();
        let runs = self.runs_for(config, config.method, &mut failures)?;
        if runs.is_empty() {
            return Err(Error::validation(format!(
                "every repetition of {} failed: {}",
                config.method,
                failures.join("; ")
            )));
        }
        let mut summary = aggregate_runs(&runs)?;

        let mut baselines = Vec::new();
        if config.paired_baselines {
            let mut finals: BTreeMap<BaselineKind, f64> = BTreeMap::new();
            for kind in [BaselineKind::NoSel, BaselineKind::OptSel, BaselineKind::FullClean] {
                let m = Method::Baseline(kind);
                let b_runs = if m == config.method {
                    runs.clone()
                } else {
                    self.runs_for(config, m, &mut failures)?
                };
                if b_runs.is_empty() {
                    continue;
                }
                let s = aggregate_runs(&b_runs)?;
                finals.insert(kind, s.final_accuracy);
                baselines.push(s);
            }
            let get = |k| finals.get(&k).copied();
            summary = summary.with_baselines(
                get(BaselineKind::NoSel),
                get(BaselineKind::OptSel),
                get(BaselineKind::FullClean),
            );
            baselines = baselines
                .into_iter()
                .map(|b| {
                    b.with_baselines(
                        get(BaselineKind::NoSel),
                        get(BaselineKind::OptSel),
                        get(BaselineKind::FullClean),
                    )
                })
                .collect();
        }

        let outcome = ExperimentOutcome {
            summary,
            baselines,
            runs,
            failures,
        };
        Ok(outcome)
    }
}

/// Run one config and write `<out>/summary.txt` when an output directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = Runner::new().run_experiment(config)?;
    if let Some(dir) = &config.output_dir {
        write_summary(&dir.join("summary.txt"), std::slice::from_ref(&outcome))?;
    }
    Ok(outcome)
}

/// Run independent configs; a failing config is reported and does not stop the others.
pub fn run_matrix(
    configs: &[ExperimentConfig],
    output_dir: Option<&Path>,
) -> (Vec<ExperimentOutcome>, Vec<String>) {
    let mut runner = Runner::new();
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for c in configs {
        match runner.run_experiment(c) {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                let msg = format!("{} noise {:.2}: {e}", c.method, c.noise.mean_level);
                warn!("{msg}");
                errors.push(msg);
            }
        }
    }
    if let Some(dir) = output_dir {
        if let Err(e) = write_summary(&dir.join("summary.txt"), &outcomes) {
            errors.push(format!("writing summary: {e}"));
        }
    }
    (outcomes, errors)
}
