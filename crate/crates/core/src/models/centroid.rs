use crate::data::LabeledInstance;

/// Nearest class mean. Classes never seen in training are never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    num_features: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    means: Vec<Option<Vec<f64>>>,
}

impl CentroidModel {
    pub fn new(num_classes: usize, num_features: usize) -> Self {
        CentroidModel {
            num_features,
            sums: vec![vec![0.0; num_features]; num_classes],
            counts: vec![0; num_classes],
            means: vec![None; num_classes],
        }
    }

    pub fn extend(&mut self, instances: &[LabeledInstance]) {
        for x in instances {
            let c = x.given_label();
            for (s, v) in self.sums[c].iter_mut().zip(x.features()) {
                *s += v;
            }
            self.counts[c] += 1;
        }
        for (c, mean) in self.means.iter_mut().enumerate() {
            if self.counts[c] > 0 {
                let n = self.counts[c] as f64;
                *mean = Some(self.sums[c].iter().map(|s| s / n).collect());
            }
        }
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn mean(&self, class: usize) -> Option<&[f64]> {
        self.means.get(class)?.as_deref()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        debug_assert_eq!(features.len(), self.num_features);
        let mut best = (f64::INFINITY, 0);
        for (c, mean) in self.means.iter().enumerate() {
            let Some(mean) = mean else { continue };
            let d: f64 = mean
                .iter()
                .zip(features)
                .map(|(m, x)| (m - x) * (m - x))
                .sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }
}
