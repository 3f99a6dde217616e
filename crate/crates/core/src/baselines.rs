//! Reference selection strategies: take everything, take only the truly clean part, or take
//! everything with the labels restored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Batch, LabeledInstance};
use crate::error::{Error, Result};
use crate::frameworks::ArrivalLog;
use crate::models::{ClassifierModel, ClassifierSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    NoSel,
    OptSel,
    FullClean,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::NoSel => "no_sel",
            BaselineKind::OptSel => "opt_sel",
            BaselineKind::FullClean => "full_clean",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineState {
    pub kind: BaselineKind,
    pub num_classes: usize,
    pub spec: ClassifierSpec,
    pub classifier: ClassifierModel,
    pub pool: Vec<LabeledInstance>,
    model_rng: ChaCha8Rng,
}

impl BaselineState {
    /// Start from the truly clean part of the initial batch, like the frameworks do.
    pub fn initialize<R: Rng + ?Sized>(
        kind: BaselineKind,
        initial: &Batch,
        spec: &ClassifierSpec,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pool: Vec<LabeledInstance> = initial
            .instances
            .iter()
            .filter(|x| x.is_clean())
            .cloned()
            .collect();
        if pool.is_empty() {
            return Err(Error::Initialization(format!(
                "initial batch of {} instances has no clean instance",
                initial.len()
            )));
        }
        let mut model_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>() ^ spec.seed);
        let classifier = ClassifierModel::train(spec, &pool, num_classes, &mut model_rng)?;
        Ok(BaselineState {
            kind,
            num_classes,
            spec: spec.clone(),
            classifier,
            pool,
            model_rng,
        })
    }

    pub fn step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        match self.kind {
            BaselineKind::NoSel => self.no_sel_step(batch),
            BaselineKind::OptSel => self.opt_sel_step(batch),
            BaselineKind::FullClean => self.full_clean_step(batch),
        }
    }

    pub fn no_sel_step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        let mut log = ArrivalLog::new(&batch);
        self.take(&mut log, batch.instances)?;
        Ok(log)
    }

    pub fn opt_sel_step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        let mut log = ArrivalLog::new(&batch);
        let (clean, dirty): (Vec<_>, Vec<_>) =
            batch.instances.into_iter().partition(|x| x.is_clean());
        log.discarded = dirty.len();
        self.take(&mut log, clean)?;
        Ok(log)
    }

    pub fn full_clean_step(&mut self, batch: Batch) -> Result<ArrivalLog> {
        let mut log = ArrivalLog::new(&batch);
        let mut instances = batch.instances;
        for x in &mut instances {
            if !x.is_clean() {
                x.set_given_label(x.true_label());
                log.relabeled += 1;
            }
        }
        self.take(&mut log, instances)?;
        Ok(log)
    }

    fn take(&mut self, log: &mut ArrivalLog, selected: Vec<LabeledInstance>) -> Result<()> {
        if !selected.is_empty() {
            self.pool.extend_from_slice(&selected);
            self.classifier =
                ClassifierModel::train(&self.spec, &self.pool, self.num_classes, &mut self.model_rng)?;
            log.retrained = true;
        }
        log.label_clean = selected;
        Ok(())
    }
}
