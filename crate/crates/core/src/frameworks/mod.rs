//! The cleanse-then-classify frameworks as arrival-by-arrival step functions.
//!
//! * [`Variant::Rad`]: a label quality model keeps the instances whose given label it
//!   reproduces; everything else is dropped.
//! * [`Variant::Voting`]: the classifier gets a second opinion on the label model's rejects and
//!   may accept or relabel them. What it still rejects is kept as inactive history and
//!   re-examined once the classifier improves.
//! * [`Variant::Active`]: rejects that both models disagree on go to an oracle, optionally under
//!   a per-batch query budget.
//! * [`Variant::Slimmed`]: no label model. The classifier screens arrivals itself, disagreements
//!   go to the oracle, and the model is warm-started on the new batch only, seeing oracle answers
//!   twice.

mod oracle;
#[cfg(test)]
mod tests;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use oracle::{LimitMode, Oracle, OracleBudget, TruthOracle};

use crate::data::{Batch, LabeledInstance};
use crate::error::{Error, Result};
use crate::models::{Classifier, ClassifierModel, ClassifierSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Rad,
    Voting,
    Active,
    Slimmed,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Rad => "rad",
            Variant::Voting => "voting",
            Variant::Active => "active",
            Variant::Slimmed => "slimmed",
        }
    }

    pub fn uses_label_model(self) -> bool {
        !matches!(self, Variant::Slimmed)
    }
}

/// What happened to one arriving batch. Every selected instance is recorded with the label it
/// was accepted under, which is all the metrics need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArrivalLog {
    pub batch_index: usize,
    pub batch_size: usize,
    pub drawn_noise_level: f64,
    /// Agreed with the label model (or with the classifier, for slimmed).
    pub label_clean: Vec<LabeledInstance>,
    /// Rescued by the classifier vote, possibly relabeled.
    pub vote_accepted: Vec<LabeledInstance>,
    /// Relabeled by the oracle.
    pub oracle_answered: Vec<LabeledInstance>,
    /// How many of `vote_accepted` had their label replaced.
    pub relabeled: usize,
    /// Instances of this batch parked as inactive history.
    pub newly_inactive: usize,
    /// Instances of this batch dropped for good.
    pub discarded: usize,
    /// Older inactive instances accepted by history reprocessing during this arrival.
    pub history_recovered: Vec<LabeledInstance>,
    pub oracle_queries: usize,
    /// Inactive instances held after this arrival.
    pub inactive_total: usize,
    /// Whether the models were refit during this arrival.
    pub retrained: bool,
    /// Exact training multiset of a warm-start update (slimmed only).
    pub warm_start_set: Vec<LabeledInstance>,
}

impl ArrivalLog {
    pub(crate) fn new(batch: &Batch) -> Self {
        ArrivalLog {
            batch_index: batch.index,
            batch_size: batch.len(),
            drawn_noise_level: batch.drawn_noise_level,
            ..Default::default()
        }
    }

    /// Instances of this batch taken into training.
    pub fn selected(&self) -> impl Iterator<Item = &LabeledInstance> {
        self.label_clean
            .iter()
            .chain(&self.vote_accepted)
            .chain(&self.oracle_answered)
    }

    pub fn selected_count(&self) -> usize {
        self.label_clean.len() + self.vote_accepted.len() + self.oracle_answered.len()
    }

    /// Selected instances whose label (after any replacement) is the true one.
    pub fn selected_true_clean_count(&self) -> usize {
        self.selected().filter(|x| x.is_clean()).count()
    }
}

/// Partition of a batch by agreement with the label quality model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanseResult {
    pub predicted_clean: Vec<LabeledInstance>,
    pub predicted_dirty: Vec<LabeledInstance>,
    /// Label model prediction for each `predicted_clean` instance (equal to its given label).
    pub clean_predictions: Vec<usize>,
    /// Label model prediction for each `predicted_dirty` instance.
    pub dirty_predictions: Vec<usize>,
}

/// Keep an instance when the label model predicts its given label.
pub fn cleanse_with_label_model<C: Classifier + ?Sized>(
    label_model: &C,
    instances: Vec<LabeledInstance>,
) -> Result<CleanseResult> {
    let predictions = label_model.predict_batch(&instances)?;
    let mut out = CleanseResult::default();
    for (x, k) in instances.into_iter().zip(predictions) {
        if k == x.given_label() {
            out.predicted_clean.push(x);
            out.clean_predictions.push(k);
        } else {
            out.predicted_dirty.push(x);
            out.dirty_predictions.push(k);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoteOutcome {
    pub accepted: Vec<LabeledInstance>,
    pub rejected: Vec<LabeledInstance>,
    pub relabeled: usize,
}

/// Second opinion on uncertain instances.
///
/// With given label `k`, label model prediction `kl` and classifier prediction `kc`:
/// accept as-is when `kc == k`; accept relabeled to `kc` when `kc == kl`; reject otherwise.
pub fn voting_filter<C: Classifier + ?Sized>(
    classifier: &C,
    uncertain: Vec<LabeledInstance>,
    label_predictions: &[usize],
) -> Result<VoteOutcome> {
    if uncertain.len() != label_predictions.len() {
        return Err(Error::validation(format!(
            "{} uncertain instances but {} label model predictions",
            uncertain.len(),
            label_predictions.len()
        )));
    }
    let votes = classifier.predict_batch(&uncertain)?;
    let mut out = VoteOutcome::default();
    for ((mut x, &kl), kc) in uncertain.into_iter().zip(label_predictions).zip(votes) {
        if kc == x.given_label() {
            out.accepted.push(x);
        } else if kc == kl {
            x.set_given_label(kc);
            out.relabeled += 1;
            out.accepted.push(x);
        } else {
            out.rejected.push(x);
        }
    }
    Ok(out)
}

/// A group of inactive instances, remembered with the batch it was parked from.
#[derive(Debug, Clone, PartialEq)]
pub struct InactiveGroup {
    pub origin: usize,
    pub instances: Vec<LabeledInstance>,
}

/// Mutable per-run state of one framework.
#[derive(Debug, Clone)]
pub struct FrameworkState {
    pub variant: Variant,
    pub num_classes: usize,
    pub label_spec: ClassifierSpec,
    pub classifier_spec: ClassifierSpec,
    /// Absent for slimmed.
    pub label_model: Option<ClassifierModel>,
    pub classifier: ClassifierModel,
    /// Everything accepted so far, with the labels it was accepted under.
    pub clean_pool: Vec<LabeledInstance>,
    /// Voting history, largest group first.
    pub inactive: Vec<InactiveGroup>,
    /// Oracle answers of the previous arrival (slimmed).
    pub prev_oracle_batch: Vec<LabeledInstance>,
    /// Oracle answers of the arrival before that (slimmed).
    pub prev2_oracle_batch: Vec<LabeledInstance>,
    pub oracle_queries_total: usize,
    /// Pool additions the models have not been trained on yet.
    pending: usize,
    model_rng: ChaCha8Rng,
}

impl FrameworkState {
    /// Seed the framework from the truly clean part of the initial batch.
    pub fn initialize<R: Rng + ?Sized>(
        variant: Variant,
        initial: &Batch,
        label_spec: &ClassifierSpec,
        classifier_spec: &ClassifierSpec,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let clean_pool: Vec<LabeledInstance> = initial
            .instances
            .iter()
            .filter(|x| x.is_clean())
            .cloned()
            .collect();
        if clean_pool.is_empty() {
            return Err(Error::Initialization(format!(
                "initial batch of {} instances has no clean instance",
                initial.len()
            )));
        }
        let spec_seed = label_spec.seed ^ classifier_spec.seed.rotate_left(32);
        let mut model_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>() ^ spec_seed);
        let classifier =
            ClassifierModel::train(classifier_spec, &clean_pool, num_classes, &mut model_rng)?;
        let label_model = if variant.uses_label_model() {
            Some(ClassifierModel::train(
                label_spec,
                &clean_pool,
                num_classes,
                &mut model_rng,
            )?)
        } else {
            None
        };
        Ok(FrameworkState {
            variant,
            num_classes,
            label_spec: label_spec.clone(),
            classifier_spec: classifier_spec.clone(),
            label_model,
            classifier,
            clean_pool,
            inactive: Vec::new(),
            prev_oracle_batch: Vec::new(),
            prev2_oracle_batch: Vec::new(),
            oracle_queries_total: 0,
            pending: 0,
            model_rng,
        })
    }

    pub fn inactive_total(&self) -> usize {
        self.inactive.iter().map(|g| g.instances.len()).sum()
    }

    /// Process one arrival with whichever variant this state runs.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        batch: Batch,
        oracle: &mut dyn Oracle,
        budget: &OracleBudget,
        rng: &mut R,
    ) -> Result<ArrivalLog> {
        match self.variant {
            Variant::Rad => self.rad_step(batch),
            Variant::Voting => self.voting_step(batch),
            Variant::Active => self.active_step(batch, oracle, budget, rng),
            Variant::Slimmed => self.slimmed_step(batch, oracle, budget, rng),
        }
    }

    fn label_model(&self) -> Result<&ClassifierModel> {
        self.label_model
            .as_ref()
            .ok_or_else(|| Error::validation(format!("{} has no label model", self.variant.name())))
    }

    fn expect_variant(&self, v: Variant) -> Result<()> {
        if self.variant != v {
            return Err(Error::validation(format!(
                "{} step called on {} state",
                v.name(),
                self.variant.name()
            )));
        }
        Ok(())
    }

    fn accept(&mut self, instances: &[LabeledInstance]) {
        self.clean_pool.extend_from_slice(instances);
        self.pending += instances.len();
    }

    /// Refit classifier and label model from scratch on the whole pool, unless nothing was
    /// added since the last fit.
    fn retrain(&mut self) -> Result<bool> {
        if self.pending == 0 {
            return Ok(false);
        }
        self.classifier = ClassifierModel::train(
            &self.classifier_spec,
            &self.clean_pool,
            self.num_classes,
            &mut self.model_rng,
        )?;
        if self.variant.uses_label_model() {
            self.label_model = Some(ClassifierModel::train(
                &self.label_spec,
                &self.clean_pool,
                self.num_classes,
                &mut self.model_rng,
            )?);
        }
        self.pending = 0;
        Ok(true)
    }

    pub fn rad_step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        self.expect_variant(Variant::Rad)?;
        let mut log = ArrivalLog::new(&batch);
        let cleansed = cleanse_with_label_model(self.label_model()?, batch.instances)?;
        log.discarded = cleansed.predicted_dirty.len();
        self.accept(&cleansed.predicted_clean);
        log.label_clean = cleansed.predicted_clean;
        log.retrained = self.retrain()?;
        Ok(log)
    }

    pub fn voting_step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        self.expect_variant(Variant::Voting)?;
        let mut log = ArrivalLog::new(&batch);
        let cleansed = cleanse_with_label_model(self.label_model()?, batch.instances)?;
        let vote = voting_filter(
            &self.classifier,
            cleansed.predicted_dirty,
            &cleansed.dirty_predictions,
        )?;
        self.accept(&cleansed.predicted_clean);
        self.accept(&vote.accepted);
        log.newly_inactive = vote.rejected.len();
        self.park(batch.index, vote.rejected);
        log.label_clean = cleansed.predicted_clean;
        log.vote_accepted = vote.accepted;
        log.relabeled = vote.relabeled;
        log.retrained = self.retrain()?;
        log.history_recovered = self.reprocess_history()?;
        log.inactive_total = self.inactive_total();
        Ok(log)
    }

    fn park(&mut self, origin: usize, instances: Vec<LabeledInstance>) {
        if instances.is_empty() {
            return;
        }
        self.inactive.push(InactiveGroup { origin, instances });
        // stable: equal sizes keep arrival order
        self.inactive
            .sort_by_key(|g| std::cmp::Reverse(g.instances.len()));
    }

    /// Re-run the vote on the two largest inactive groups with the current models. Accepted
    /// instances join the pool (and are trained on at the next refit); the rest go back.
    pub fn reprocess_history(&mut self) -> Result<Vec<LabeledInstance>> {
        let take = self.inactive.len().min(2);
        let groups: Vec<InactiveGroup> = self.inactive.drain(..take).collect();
        let mut recovered = Vec::new();
        for group in groups {
            let label_predictions = self.label_model()?.predict_batch(&group.instances)?;
            let vote = voting_filter(&self.classifier, group.instances, &label_predictions)?;
            self.accept(&vote.accepted);
            recovered.extend(vote.accepted);
            self.park(group.origin, vote.rejected);
        }
        Ok(recovered)
    }

    pub fn active_step<R: Rng + ?Sized>(
        &mut self,
        batch: Batch,
        oracle: &mut dyn Oracle,
        budget: &OracleBudget,
        rng: &mut R,
    ) -> Result<ArrivalLog> {
        self.expect_variant(Variant::Active)?;
        budget.validate()?;
        let mut log = ArrivalLog::new(&batch);
        let batch_len = batch.len();
        let cleansed = cleanse_with_label_model(self.label_model()?, batch.instances)?;
        let vote = voting_filter(
            &self.classifier,
            cleansed.predicted_dirty,
            &cleansed.dirty_predictions,
        )?;
        let (answered, skipped) = oracle::consult(vote.rejected, batch_len, oracle, budget, rng)?;
        self.accept(&cleansed.predicted_clean);
        self.accept(&vote.accepted);
        self.accept(&answered);
        log.oracle_queries = answered.len();
        self.oracle_queries_total += answered.len();
        log.discarded = skipped.len();
        log.label_clean = cleansed.predicted_clean;
        log.vote_accepted = vote.accepted;
        log.relabeled = vote.relabeled;
        log.oracle_answered = answered;
        log.retrained = self.retrain()?;
        Ok(log)
    }

    pub fn slimmed_step<R: Rng + ?Sized>(
        &mut self,
        batch: Batch,
        oracle: &mut dyn Oracle,
        budget: &OracleBudget,
        rng: &mut R,
    ) -> Result<ArrivalLog> {
        self.expect_variant(Variant::Slimmed)?;
        budget.validate()?;
        let mut log = ArrivalLog::new(&batch);
        let batch_len = batch.len();
        let predictions = self.classifier.predict_batch(&batch.instances)?;
        let mut agreed = Vec::new();
        let mut disagreed = Vec::new();
        for (x, k) in batch.instances.into_iter().zip(predictions) {
            if k == x.given_label() {
                agreed.push(x);
            } else {
                disagreed.push(x);
            }
        }
        let (answered, skipped) = oracle::consult(disagreed, batch_len, oracle, budget, rng)?;
        log.oracle_queries = answered.len();
        self.oracle_queries_total += answered.len();
        log.discarded = skipped.len();

        let mut window = Vec::with_capacity(agreed.len() + answered.len() + self.prev_oracle_batch.len());
        window.extend_from_slice(&agreed);
        window.extend_from_slice(&answered);
        window.extend_from_slice(&self.prev_oracle_batch);
        if !window.is_empty() {
            self.classifier.update(&window, &mut self.model_rng)?;
            log.retrained = true;
        }
        self.clean_pool.extend_from_slice(&agreed);
        self.clean_pool.extend_from_slice(&answered);
        self.prev2_oracle_batch = std::mem::replace(&mut self.prev_oracle_batch, answered.clone());

        log.label_clean = agreed;
        log.oracle_answered = answered;
        log.warm_start_set = window;
        Ok(log)
    }
}
