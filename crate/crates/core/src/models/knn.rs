use crate::data::LabeledInstance;

/// Memorizes its training set; predicts the majority class of the k nearest points.
///
/// Neighbors are ordered by (squared Euclidean distance, insertion index). Vote ties go to the
/// lowest class index. With fewer than k stored points every point votes.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    num_classes: usize,
    num_features: usize,
    points: Vec<f64>,
    labels: Vec<usize>,
}

impl KnnModel {
    pub fn new(k: usize, num_classes: usize, num_features: usize) -> Self {
        KnnModel {
            k,
            num_classes,
            num_features,
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn extend(&mut self, instances: &[LabeledInstance]) {
        self.points.reserve(instances.len() * self.num_features);
        for x in instances {
            self.points.extend_from_slice(x.features());
            self.labels.push(x.given_label());
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the neighbors that vote for `features`, nearest first.
    pub fn neighbors(&self, features: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.len());
        // sorted ascending by (distance, index); small k so insertion is cheap
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, p) in self.points.chunks_exact(self.num_features).enumerate() {
            let mut d = 0.0;
            for (a, b) in p.iter().zip(features) {
                let t = a - b;
                d += t * t;
            }
            if best.len() == k {
                if d >= best[k - 1].0 {
                    continue;
                }
                best.pop();
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        let mut votes = vec![0usize; self.num_classes];
        for i in self.neighbors(features) {
            votes[self.labels[i]] += 1;
        }
        let mut winner = 0;
        for (class, &v) in votes.iter().enumerate() {
            if v > votes[winner] {
                winner = class;
            }
        }
        winner
    }
}
