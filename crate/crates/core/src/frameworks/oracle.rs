use rand::seq::index;
use rand::Rng;

use crate::data::LabeledInstance;
use crate::error::{Error, Result};

/// Source of ground-truth labels for instances the models cannot settle.
pub trait Oracle {
    fn answer(&mut self, instance: &LabeledInstance) -> Result<usize>;
}

/// Simulated expert: reveals the hidden true label and counts the questions.
#[derive(Debug, Default, Clone)]
pub struct TruthOracle {
    pub queries: usize,
}

impl Oracle for TruthOracle {
    fn answer(&mut self, instance: &LabeledInstance) -> Result<usize> {
        self.queries += 1;
        Ok(instance.true_label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMode {
    Unlimited,
    PerBatchFraction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBudget {
    pub limit_mode: LimitMode,
    pub fraction: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget::unlimited()
    }
}

impl OracleBudget {
    pub fn unlimited() -> Self {
        OracleBudget {
            limit_mode: LimitMode::Unlimited,
            fraction: 1.0,
        }
    }

    pub fn per_batch(fraction: f64) -> Self {
        OracleBudget {
            limit_mode: LimitMode::PerBatchFraction,
            fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::validation(format!(
                "oracle fraction must lie in [0, 1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }

    /// Maximum queries for a batch of `batch_len` instances; `None` when unlimited.
    pub fn limit(&self, batch_len: usize) -> Option<usize> {
        match self.limit_mode {
            LimitMode::Unlimited => None,
            LimitMode::PerBatchFraction => Some((self.fraction * batch_len as f64).floor() as usize),
        }
    }

    /// Pick which candidates go to the oracle: all of them when they fit, otherwise a uniform
    /// random sample of the limit. Returned positions are ascending.
    pub fn select<R: Rng + ?Sized>(
        &self,
        candidates: usize,
        batch_len: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        match self.limit(batch_len) {
            Some(limit) if limit < candidates => {
                let mut picked = index::sample(rng, candidates, limit).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..candidates).collect(),
        }
    }
}

/// Send the selected candidates to the oracle and overwrite their labels with its answers.
/// Returns `(answered, unqueried)`.
pub(crate) fn consult<R: Rng + ?Sized>(
    candidates: Vec<LabeledInstance>,
    batch_len: usize,
    oracle: &mut dyn Oracle,
    budget: &OracleBudget,
    rng: &mut R,
) -> Result<(Vec<LabeledInstance>, Vec<LabeledInstance>)> {
    let picked = budget.select(candidates.len(), batch_len, rng);
    let mut answered = Vec::with_capacity(picked.len());
    let mut skipped = Vec::with_capacity(candidates.len() - picked.len());
    let mut next = picked.into_iter().peekable();
    for (i, mut x) in candidates.into_iter().enumerate() {
        if next.peek() == Some(&i) {
            next.next();
            let label = oracle.answer(&x)?;
            x.set_given_label(label);
            answered.push(x);
        } else {
            skipped.push(x);
        }
    }
    Ok((answered, skipped))
}
