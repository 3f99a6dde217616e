//! Multi-class classifiers behind one train/predict interface.
//!
//! Three implementations ship: k-nearest neighbors, nearest centroid and a multilayer
//! perceptron. The frameworks use them both as label quality model and as task classifier.

mod centroid;
mod knn;
mod mlp;

use rand::Rng;

pub use centroid::CentroidModel;
pub use knn::KnnModel;
pub use mlp::Mlp;

use crate::data::LabeledInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Knn,
    Centroid,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "centroid" => Ok(ModelKind::Centroid),
            "mlp" => Ok(ModelKind::Mlp),
            _ => Err(Error::Config(format!(
                "unknown model kind '{s}' (expected knn, centroid or mlp)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Knn => "knn",
            ModelKind::Centroid => "centroid",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ModelKind,
    pub knn_k: usize,
    pub mlp_hidden: Vec<usize>,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub mlp_batch_size: usize,
    pub seed: u64,
}

impl ClassifierSpec {
    /// Two hidden layers of 28 units.
    pub fn label_model_default() -> Self {
        ClassifierSpec {
            kind: ModelKind::Mlp,
            ..Self::classifier_default()
        }
    }

    /// k-NN with five neighbors.
    pub fn classifier_default() -> Self {
        ClassifierSpec {
            kind: ModelKind::Knn,
            knn_k: 5,
            mlp_hidden: vec![28, 28],
            mlp_epochs: 50,
            mlp_learning_rate: 0.01,
            mlp_batch_size: 32,
            seed: 0,
        }
    }

    pub fn knn(k: usize) -> Self {
        ClassifierSpec {
            kind: ModelKind::Knn,
            knn_k: k,
            ..Self::classifier_default()
        }
    }

    pub fn centroid() -> Self {
        ClassifierSpec {
            kind: ModelKind::Centroid,
            ..Self::classifier_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::validation("knn_k must be at least 1"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::validation("every hidden layer width must be at least 1"));
        }
        if !self.mlp_learning_rate.is_finite() || self.mlp_learning_rate <= 0.0 {
            return Err(Error::validation("mlp learning rate must be positive"));
        }
        if self.mlp_epochs == 0 || self.mlp_batch_size == 0 {
            return Err(Error::validation("mlp epochs and batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Anything that maps a feature vector to a class index.
pub trait Classifier {
    fn num_features(&self) -> usize;

    fn predict(&self, features: &[f64]) -> Result<usize>;

    fn predict_batch(&self, instances: &[LabeledInstance]) -> Result<Vec<usize>> {
        instances.iter().map(|x| self.predict(x.features())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learned {
    Knn(KnnModel),
    Centroid(CentroidModel),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub spec: ClassifierSpec,
    pub learned: Learned,
    pub num_classes: usize,
    pub trained_on_count: usize,
}

impl ClassifierModel {
    /// Fit a fresh model on `instances`, reading their given labels.
    pub fn train<R: Rng + ?Sized>(
        spec: &ClassifierSpec,
        instances: &[LabeledInstance],
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let first = instances
            .first()
            .ok_or_else(|| Error::Training("empty training set".into()))?;
        let f = first.features().len();
        check_labels(instances, num_classes, f)?;

        let learned = match spec.kind {
            ModelKind::Knn => Learned::Knn(KnnModel::new(spec.knn_k, num_classes, f)),
            ModelKind::Centroid => Learned::Centroid(CentroidModel::new(num_classes, f)),
            ModelKind::Mlp => Learned::Mlp(Mlp::new(f, &spec.mlp_hidden, num_classes, rng)),
        };
        let mut model = ClassifierModel {
            spec: spec.clone(),
            learned,
            num_classes,
            trained_on_count: 0,
        };
        model.update(instances, rng)?;
        Ok(model)
    }

    /// Continue training on `instances` without resetting.
    ///
    /// k-NN adds the instances to its memory, nearest centroid folds them into its running
    /// means and the MLP runs another `mlp_epochs` of SGD from its current weights.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        instances: &[LabeledInstance],
        rng: &mut R,
    ) -> Result<()> {
        if instances.is_empty() {
            return Ok(());
        }
        check_labels(instances, self.num_classes, self.num_features())?;
        match &mut self.learned {
            Learned::Knn(m) => m.extend(instances),
            Learned::Centroid(m) => m.extend(instances),
            Learned::Mlp(m) => {
                let samples: Vec<(&[f64], usize)> = instances
                    .iter()
                    .map(|x| (x.features(), x.given_label()))
                    .collect();
                m.fit(
                    &samples,
                    self.spec.mlp_epochs,
                    self.spec.mlp_learning_rate,
                    self.spec.mlp_batch_size,
                    rng,
                );
            }
        }
        self.trained_on_count += instances.len();
        Ok(())
    }
}

fn check_labels(instances: &[LabeledInstance], num_classes: usize, f: usize) -> Result<()> {
    for x in instances {
        if x.given_label() >= num_classes {
            return Err(Error::validation(format!(
                "label {} outside 0..{num_classes}",
                x.given_label()
            )));
        }
        if x.features().len() != f {
            return Err(Error::validation(format!(
                "instance {} has {} features, expected {f}",
                x.id(),
                x.features().len()
            )));
        }
    }
    Ok(())
}

impl Classifier for ClassifierModel {
    fn num_features(&self) -> usize {
        match &self.learned {
            Learned::Knn(m) => m.num_features(),
            Learned::Centroid(m) => m.num_features(),
            Learned::Mlp(m) => m.num_inputs(),
        }
    }

    fn predict(&self, features: &[f64]) -> Result<usize> {
        if features.len() != self.num_features() {
            return Err(Error::validation(format!(
                "query has {} features, model expects {}",
                features.len(),
                self.num_features()
            )));
        }
        Ok(match &self.learned {
            Learned::Knn(m) => m.predict(features),
            Learned::Centroid(m) => m.predict(features),
            Learned::Mlp(m) => m.predict(features),
        })
    }
}

/// Fraction of `test` whose true label the model predicts.
pub fn evaluate_accuracy<C: Classifier + ?Sized>(
    model: &C,
    test: &[LabeledInstance],
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty test set"));
    }
    let predictions = model.predict_batch(test)?;
    let correct = predictions
        .iter()
        .zip(test)
        .filter(|(p, x)| **p == x.true_label())
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::{generate_synthetic_n, StreamConfig};

    fn inst(id: usize, f: &[f64], label: usize) -> LabeledInstance {
        LabeledInstance::new(id, f.to_vec(), label)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn centroid_single_point_classes() {
        let train = [inst(0, &[0.0, 0.0], 0), inst(1, &[2.0, 2.0], 1)];
        let m = ClassifierModel::train(&ClassifierSpec::centroid(), &train, 2, &mut rng()).unwrap();
        let Learned::Centroid(c) = &m.learned else { unreachable!() };
        assert_eq!(c.mean(0), Some(&[0.0, 0.0][..]));
        assert_eq!(c.mean(1), Some(&[2.0, 2.0][..]));
        assert_eq!(m.predict(&[0.1, 0.0]).unwrap(), 0);
    }

    #[test]
    fn centroid_never_predicts_absent_class() {
        let train = [inst(0, &[0.0], 2), inst(1, &[5.0], 2)];
        let m = ClassifierModel::train(&ClassifierSpec::centroid(), &train, 3, &mut rng()).unwrap();
        for q in [-100.0, 0.0, 100.0] {
            assert_eq!(m.predict(&[q]).unwrap(), 2);
        }
    }

    #[test]
    fn knn_with_fewer_points_than_k_uses_all() {
        let train = [
            inst(0, &[0.0], 0),
            inst(1, &[1.0], 1),
            inst(2, &[2.0], 1),
            inst(3, &[100.0], 1),
        ];
        let m = ClassifierModel::train(&ClassifierSpec::knn(5), &train, 2, &mut rng()).unwrap();
        let Learned::Knn(k) = &m.learned else { unreachable!() };
        assert_eq!(k.neighbors(&[0.0]).len(), 4);
        // three of four vote 1 even though the query sits on the class-0 point
        assert_eq!(m.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn knn_midpoint_query_matches_sorted_distances() {
        let train = [
            inst(0, &[0.0, 0.0], 0),
            inst(1, &[0.0, 1.0], 0),
            inst(2, &[3.0, 0.0], 1),
            inst(3, &[3.0, 1.0], 1),
            inst(4, &[1.4, 0.5], 1),
            inst(5, &[1.6, 0.5], 0),
        ];
        let m = ClassifierModel::train(&ClassifierSpec::knn(3), &train, 2, &mut rng()).unwrap();
        // query (1.5, 0.5): nearest are 4 and 5 (tie at 0.1, index order), then 0/1 at ~1.58
        // vs 2/3 at ~1.58 -> squared 2.5 for all four, index 0 wins
        let Learned::Knn(k) = &m.learned else { unreachable!() };
        assert_eq!(k.neighbors(&[1.5, 0.5]), vec![4, 5, 0]);
        assert_eq!(m.predict(&[1.5, 0.5]).unwrap(), 0);
    }

    #[test]
    fn knn_vote_tie_goes_to_lowest_class() {
        let train = [inst(0, &[1.0], 1), inst(1, &[-1.0], 0)];
        let m = ClassifierModel::train(&ClassifierSpec::knn(2), &train, 2, &mut rng()).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(matches!(
            ClassifierModel::train(&ClassifierSpec::knn(5), &[], 2, &mut rng()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn feature_length_mismatch_is_an_error() {
        let m = ClassifierModel::train(&ClassifierSpec::centroid(), &[inst(0, &[0.0, 1.0], 0)], 2, &mut rng())
            .unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn predict_batch_matches_predict() {
        let cfg = StreamConfig {
            num_classes: 3,
            num_features: 4,
            ..Default::default()
        };
        let d = generate_synthetic_n(&cfg, 2.0, 150).unwrap();
        let (train, test) = d.instances.split_at(50);
        let m = ClassifierModel::train(&ClassifierSpec::knn(5), train, 3, &mut rng()).unwrap();
        assert!(m.predict_batch(&[]).unwrap().is_empty());
        assert_eq!(m.predict_batch(&test[..1]).unwrap(), vec![m.predict(test[0].features()).unwrap()]);
        let batch = m.predict_batch(test).unwrap();
        let single: Vec<usize> = test.iter().map(|x| m.predict(x.features()).unwrap()).collect();
        assert_eq!(batch, single);
    }

    #[test]
    fn accuracy_of_constant_predictor_on_balanced_set() {
        // centroid fit on one class predicts it everywhere
        let m = ClassifierModel::train(&ClassifierSpec::centroid(), &[inst(0, &[0.0], 2)], 4, &mut rng()).unwrap();
        let test: Vec<_> = (0..40).map(|i| inst(i, &[i as f64], i % 4)).collect();
        assert_eq!(evaluate_accuracy(&m, &test).unwrap(), 0.25);
        assert!(evaluate_accuracy(&m, &[]).is_err());
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let train: Vec<_> = (0..4).map(|c| inst(c, &[10.0 * c as f64], c)).collect();
        let m = ClassifierModel::train(&ClassifierSpec::centroid(), &train, 4, &mut rng()).unwrap();
        let test: Vec<_> = (0..20).map(|i| inst(i, &[10.0 * (i % 4) as f64 + 0.5], i % 4)).collect();
        assert_eq!(evaluate_accuracy(&m, &test).unwrap(), 1.0);
    }

    #[test]
    fn mlp_learns_separated_blobs() {
        let cfg = StreamConfig {
            num_classes: 3,
            num_features: 5,
            seed: 4,
            ..Default::default()
        };
        let d = generate_synthetic_n(&cfg, 6.0, 100).unwrap();
        let spec = ClassifierSpec::label_model_default();
        let m = ClassifierModel::train(&spec, &d.instances, 3, &mut rng()).unwrap();
        let acc = evaluate_accuracy(&m, &d.instances).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn mlp_output_is_a_distribution_and_pure() {
        let mut r = rng();
        let net = Mlp::new(3, &[5, 4], 3, &mut r);
        for q in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [50.0, 50.0, -80.0]] {
            let p = net.predict_proba(&q);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert_eq!(net.predict(&q), net.predict(&q));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = StreamConfig {
            num_classes: 3,
            num_features: 4,
            ..Default::default()
        };
        let d = generate_synthetic_n(&cfg, 2.0, 80).unwrap();
        let spec = ClassifierSpec {
            mlp_epochs: 5,
            ..ClassifierSpec::label_model_default()
        };
        let a = ClassifierModel::train(&spec, &d.instances, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ClassifierModel::train(&spec, &d.instances, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warm_start_continues_from_current_weights() {
        let cfg = StreamConfig {
            num_classes: 2,
            num_features: 3,
            ..Default::default()
        };
        let d = generate_synthetic_n(&cfg, 4.0, 60).unwrap();
        let spec = ClassifierSpec {
            mlp_epochs: 3,
            ..ClassifierSpec::label_model_default()
        };
        let mut r = rng();
        let mut m = ClassifierModel::train(&spec, &d.instances[..30], 2, &mut r).unwrap();
        let before = m.clone();
        m.update(&d.instances[30..], &mut r).unwrap();
        assert_eq!(m.trained_on_count, 60);
        assert_ne!(m, before);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_k = ClassifierSpec::knn(0);
        assert!(bad_k.validate().is_err());
        let bad_width = ClassifierSpec {
            mlp_hidden: vec![3, 0],
            ..ClassifierSpec::label_model_default()
        };
        assert!(bad_width.validate().is_err());
        let bad_lr = ClassifierSpec {
            mlp_learning_rate: 0.0,
            ..ClassifierSpec::label_model_default()
        };
        assert!(bad_lr.validate().is_err());
    }
}
