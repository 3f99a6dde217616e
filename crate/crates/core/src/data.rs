//! Labeled instances, batches, dataset loading, synthetic streams and stream splitting.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One record of the stream.
///
/// The ground-truth class travels with the instance so that the noise injector, the oracle,
/// the omniscient baselines and the metrics can see it. Learners only ever read
/// [`given_label`](Self::given_label). Cleanliness is derived from the two labels, so it stays
/// correct through any number of relabelings.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    id: usize,
    features: Arc<[f64]>,
    given_label: usize,
    true_label: usize,
}

impl LabeledInstance {
    /// A ground-truth instance: given label equals true label.
    pub fn new(id: usize, features: impl Into<Arc<[f64]>>, label: usize) -> Self {
        LabeledInstance {
            id,
            features: features.into(),
            given_label: label,
            true_label: label,
        }
    }

    /// An instance whose given label may already differ from the truth.
    pub fn with_labels(
        id: usize,
        features: impl Into<Arc<[f64]>>,
        given_label: usize,
        true_label: usize,
    ) -> Self {
        LabeledInstance {
            id,
            features: features.into(),
            given_label,
            true_label,
        }
    }

    /// Stable identity within a dataset (row index for loaded and generated data).
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn given_label(&self) -> usize {
        self.given_label
    }

    pub fn true_label(&self) -> usize {
        self.true_label
    }

    pub fn is_clean(&self) -> bool {
        self.given_label == self.true_label
    }

    pub fn set_given_label(&mut self, label: usize) {
        self.given_label = label;
    }

    pub(crate) fn with_features(&self, features: Vec<f64>) -> Self {
        LabeledInstance {
            features: features.into(),
            ..self.clone()
        }
    }
}

/// Instances arriving at one time step. Index 0 is the initial batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: usize,
    pub instances: Vec<LabeledInstance>,
    /// Noise level realized by the injector for this batch (0 until injected).
    pub drawn_noise_level: f64,
}

impl Batch {
    pub fn new(index: usize, instances: Vec<LabeledInstance>) -> Self {
        Batch {
            index,
            instances,
            drawn_noise_level: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn clean_count(&self) -> usize {
        self.instances.iter().filter(|x| x.is_clean()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub num_classes: usize,
    pub num_features: usize,
    pub initial_batch_size: usize,
    pub batch_size: usize,
    pub num_batches: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Split per class so that rare classes stay represented in every partition.
    pub stratify: bool,
    /// Min-max scale features, fitted on the initial batch.
    pub scale: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            num_classes: 4,
            num_features: 20,
            initial_batch_size: 1000,
            batch_size: 300,
            num_batches: 20,
            test_size: 2000,
            seed: 0,
            stratify: false,
            scale: false,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        for (name, v) in [
            ("num_features", self.num_features),
            ("initial_batch_size", self.initial_batch_size),
            ("batch_size", self.batch_size),
            ("test_size", self.test_size),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Instances consumed by one split.
    pub fn required_instances(&self) -> usize {
        self.initial_batch_size + self.num_batches * self.batch_size + self.test_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub num_features: usize,
    pub instances: Vec<LabeledInstance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for x in &self.instances {
            counts[x.true_label()] += 1;
        }
        counts
    }
}

/// Load a ground-truth dataset from `f0,f1,...,f{n-1},label` CSV.
pub fn load_csv(path: impl AsRef<Path>, num_classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    if num_classes < 2 {
        return Err(Error::validation("num_classes must be at least 2"));
    }
    let file = BufReader::new(File::open(path)?);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers()?.clone();
    let num_features = check_header(path, &header)?;

    let mut instances = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(row + 2);
        if record.len() != num_features + 1 {
            return Err(Error::validation(format!(
                "{}: line {line}: expected {} columns, found {}",
                path.display(),
                num_features + 1,
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(num_features);
        for (col, cell) in record.iter().take(num_features).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column f{col}: '{cell}' is not a number"),
            })?;
            features.push(v);
        }
        let cell = &record[num_features];
        let label: usize = cell.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("label '{cell}' is not a non-negative integer"),
        })?;
        if label >= num_classes {
            return Err(Error::validation(format!(
                "{}: line {line}: label {label} outside 0..{num_classes}",
                path.display()
            )));
        }
        instances.push(LabeledInstance::new(row, features, label));
    }

    Ok(Dataset {
        num_classes,
        num_features,
        instances,
    })
}

fn check_header(path: &Path, header: &csv::StringRecord) -> Result<usize> {
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    if header.len() < 2 {
        return Err(bad("header needs at least one feature column and a label".into()));
    }
    let num_features = header.len() - 1;
    for (i, name) in header.iter().take(num_features).enumerate() {
        if name != format!("f{i}") {
            return Err(bad(format!("expected column 'f{i}', found '{name}'")));
        }
    }
    if &header[num_features] != "label" {
        return Err(bad(format!(
            "expected last column 'label', found '{}'",
            &header[num_features]
        )));
    }
    Ok(num_features)
}

/// Write a dataset in the same CSV format [`load_csv`] reads. Labels written are the true labels.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_path(path)?;
    let mut header: Vec<String> = (0..dataset.num_features).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for x in &dataset.instances {
        let mut row: Vec<String> = x.features().iter().map(|v| v.to_string()).collect();
        row.push(x.true_label().to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Class means for the synthetic generator.
///
/// With `K <= f` the means sit on scaled basis vectors, all pairwise distances equal to
/// `separation`. Otherwise directions are random and the whole set is scaled so that the closest
/// pair is exactly `separation` apart.
fn class_means(
    num_classes: usize,
    num_features: usize,
    separation: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    if num_classes <= num_features {
        let r = separation / std::f64::consts::SQRT_2;
        return (0..num_classes)
            .map(|k| {
                let mut m = vec![0.0; num_features];
                m[k] = r;
                m
            })
            .collect();
    }
    loop {
        let means: Vec<Vec<f64>> = (0..num_classes)
            .map(|_| {
                (0..num_features)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..num_classes {
            for b in a + 1..num_classes {
                min_dist = min_dist.min(euclidean(&means[a], &means[b]));
            }
        }
        if min_dist > 1e-9 {
            let s = separation / min_dist;
            return means
                .into_iter()
                .map(|m| m.into_iter().map(|v| v * s).collect())
                .collect();
        }
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Isotropic unit-variance Gaussian blobs, one per class, sized to exactly one stream split.
pub fn generate_synthetic(config: &StreamConfig, separation: f64) -> Result<Dataset> {
    generate_synthetic_n(config, separation, config.required_instances())
}

/// Like [`generate_synthetic`] with an explicit instance count.
pub fn generate_synthetic_n(
    config: &StreamConfig,
    separation: f64,
    count: usize,
) -> Result<Dataset> {
    config.validate()?;
    if !separation.is_finite() || separation <= 0.0 {
        return Err(Error::validation(format!(
            "separation must be positive and finite, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = class_means(config.num_classes, config.num_features, separation, &mut rng);
    let instances = (0..count)
        .map(|id| {
            let label = id % config.num_classes;
            let features: Vec<f64> = means[label]
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            LabeledInstance::new(id, features, label)
        })
        .collect();
    Ok(Dataset {
        num_classes: config.num_classes,
        num_features: config.num_features,
        instances,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSplit {
    pub initial: Batch,
    pub arrivals: Vec<Batch>,
    pub test: Vec<LabeledInstance>,
}

/// Partition a dataset into the initial batch, the arriving batches and the held-out test set.
pub fn split_stream<R: Rng + ?Sized>(
    dataset: &Dataset,
    config: &StreamConfig,
    rng: &mut R,
) -> Result<StreamSplit> {
    config.validate()?;
    let required = config.required_instances();
    if dataset.len() < required {
        return Err(Error::Sizing {
            required,
            available: dataset.len(),
        });
    }
    if dataset.num_features != config.num_features {
        return Err(Error::validation(format!(
            "dataset has {} features, config declares {}",
            dataset.num_features, config.num_features
        )));
    }

    let order = if config.stratify {
        stratified_order(dataset, rng)
    } else {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(rng);
        order
    };

    let mut next = order.into_iter().map(|i| dataset.instances[i].clone());
    let mut take = |n: usize| -> Vec<LabeledInstance> { next.by_ref().take(n).collect() };

    let initial = Batch::new(0, take(config.initial_batch_size));
    let test = take(config.test_size);
    let arrivals = (1..=config.num_batches)
        .map(|i| Batch::new(i, take(config.batch_size)))
        .collect();

    let mut split = StreamSplit {
        initial,
        arrivals,
        test,
    };
    if config.scale {
        let scaler = MinMaxScaler::fit(&split.initial.instances);
        scaler.apply_all(&mut split.initial.instances);
        scaler.apply_all(&mut split.test);
        for b in &mut split.arrivals {
            scaler.apply_all(&mut b.instances);
        }
    }
    Ok(split)
}

/// Interleave classes proportionally: the j-th shuffled member of a class with n members gets
/// key (j + 0.5) / n, so every contiguous chunk of the order is close to the class mix.
fn stratified_order<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, x) in dataset.instances.iter().enumerate() {
        per_class[x.true_label()].push(i);
    }
    let mut keyed = Vec::with_capacity(dataset.len());
    for (class, members) in per_class.iter_mut().enumerate() {
        members.shuffle(rng);
        let n = members.len() as f64;
        for (j, &i) in members.iter().enumerate() {
            let jitter: f64 = rng.random();
            keyed.push(((j as f64 + jitter) / n, class, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Per-feature min-max scaling to [0, 1]. Constant features map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(instances: &[LabeledInstance]) -> Self {
        let f = instances.first().map_or(0, |x| x.features().len());
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        for x in instances {
            for (j, &v) in x.features().iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        MinMaxScaler { min, range }
    }

    pub fn transform(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.range[j] > 0.0 {
                    (v - self.min[j]) / self.range[j]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn apply_all(&self, instances: &mut [LabeledInstance]) {
        for x in instances.iter_mut() {
            *x = x.with_features(self.transform(x.features()));
        }
    }
}
