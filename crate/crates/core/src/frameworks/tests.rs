use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{generate_synthetic_n, split_stream, StreamConfig};
use crate::models::{ClassifierSpec, Learned};
use crate::noise::inject_symmetric_noise;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature encodes the true class, so a centroid model fit on clean data recovers the truth.
fn coded(id: usize, truth: usize, given: usize) -> LabeledInstance {
    LabeledInstance::with_labels(id, vec![10.0 * truth as f64 + 0.01 * (id % 7) as f64], given, truth)
}

fn constant_model(class: usize, num_classes: usize) -> ClassifierModel {
    ClassifierModel::train(
        &ClassifierSpec::centroid(),
        &[LabeledInstance::new(usize::MAX, vec![0.0], class)],
        num_classes,
        &mut rng(0),
    )
    .unwrap()
}

fn truth_model(num_classes: usize) -> ClassifierModel {
    let train: Vec<_> = (0..num_classes).map(|c| coded(1_000_000 + c, c, c)).collect();
    ClassifierModel::train(&ClassifierSpec::centroid(), &train, num_classes, &mut rng(0)).unwrap()
}

fn coded_batch(index: usize, start: usize, n: usize, k: usize, flips: &[usize]) -> Batch {
    Batch::new(
        index,
        (0..n)
            .map(|i| {
                let truth = i % k;
                let given = if flips.contains(&i) { (truth + 1) % k } else { truth };
                coded(start + i, truth, given)
            })
            .collect(),
    )
}

fn init(variant: Variant, initial: &Batch, k: usize) -> FrameworkState {
    FrameworkState::initialize(
        variant,
        initial,
        &ClassifierSpec::centroid(),
        &ClassifierSpec::centroid(),
        k,
        &mut rng(1),
    )
    .unwrap()
}

#[test]
fn cleanse_total_agreement_keeps_everything() {
    let b = coded_batch(1, 0, 12, 3, &[]);
    let r = cleanse_with_label_model(&truth_model(3), b.instances.clone()).unwrap();
    assert!(r.predicted_dirty.is_empty());
    assert_eq!(r.predicted_clean, b.instances);
    assert_eq!(r.clean_predictions, b.instances.iter().map(|x| x.given_label()).collect::<Vec<_>>());
}

#[test]
fn cleanse_with_constant_model_keeps_that_class() {
    let b = coded_batch(1, 0, 12, 3, &[0, 4]);
    let m = b.instances.iter().filter(|x| x.given_label() == 2).count();
    let r = cleanse_with_label_model(&constant_model(2, 3), b.instances).unwrap();
    assert_eq!(r.predicted_clean.len(), m);
    assert!(r.dirty_predictions.iter().all(|&k| k == 2));
}

#[test]
fn cleanse_partition_matches_brute_force_centroid() {
    let cfg = StreamConfig {
        num_classes: 2,
        num_features: 2,
        seed: 3,
        ..Default::default()
    };
    let d = generate_synthetic_n(&cfg, 5.0, 60).unwrap();
    let (train, rest) = d.instances.split_at(40);
    let model = ClassifierModel::train(&ClassifierSpec::centroid(), train, 2, &mut rng(0)).unwrap();
    let mut batch = Batch::new(1, rest.to_vec());
    batch = inject_symmetric_noise(batch, 0.3, 2, &mut rng(4)).unwrap();
    assert_eq!(batch.len() - batch.clean_count(), 6);

    // brute-force means and nearest-mean predictions
    let mut means = [[0.0; 2]; 2];
    let mut counts = [0.0; 2];
    for x in train {
        counts[x.given_label()] += 1.0;
        for j in 0..2 {
            means[x.given_label()][j] += x.features()[j];
        }
    }
    let expect_clean: Vec<usize> = batch
        .instances
        .iter()
        .filter(|x| {
            let d = |c: usize| {
                (0..2)
                    .map(|j| (means[c][j] / counts[c] - x.features()[j]).powi(2))
                    .sum::<f64>()
            };
            let k = if d(1) < d(0) { 1 } else { 0 };
            k == x.given_label()
        })
        .map(|x| x.id())
        .collect();

    let r = cleanse_with_label_model(&model, batch.instances.clone()).unwrap();
    assert_eq!(r.predicted_clean.iter().map(|x| x.id()).collect::<Vec<_>>(), expect_clean);
    assert_eq!(r.predicted_clean.len() + r.predicted_dirty.len(), 20);
}

#[test]
fn vote_relabels_when_models_agree() {
    let x = LabeledInstance::with_labels(0, vec![0.0], 2, 0);
    let out = voting_filter(&constant_model(0, 3), vec![x], &[0]).unwrap();
    assert_eq!(out.accepted.len(), 1);
    assert_eq!(out.accepted[0].given_label(), 0);
    assert!(out.accepted[0].is_clean());
    assert_eq!(out.relabeled, 1);
}

#[test]
fn vote_rule_table_on_thirty_instances() {
    // classifier always says 1; label predictions and given labels cycle through all cases
    let k = 3;
    let uncertain: Vec<LabeledInstance> = (0..30)
        .map(|i| LabeledInstance::with_labels(i, vec![i as f64], i % k, (i / 3) % k))
        .collect();
    let label_preds: Vec<usize> = (0..30).map(|i| (i / 3 + 1) % k).collect();
    let out = voting_filter(&constant_model(1, k), uncertain.clone(), &label_preds).unwrap();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (x, &kl) in uncertain.iter().zip(&label_preds) {
        let kc = 1;
        if kc == x.given_label() {
            accepted.push((x.id(), x.given_label()));
        } else if kc == kl {
            accepted.push((x.id(), kc));
        } else {
            rejected.push(x.id());
        }
    }
    let got: Vec<(usize, usize)> = out.accepted.iter().map(|x| (x.id(), x.given_label())).collect();
    assert_eq!(got, accepted);
    assert_eq!(out.rejected.iter().map(|x| x.id()).collect::<Vec<_>>(), rejected);
    // case (a) never mutates, case (b) always sets the agreed class
    for x in &out.accepted {
        let orig = &uncertain[x.id()];
        if orig.given_label() == 1 {
            assert_eq!(x.given_label(), orig.given_label());
        } else {
            assert_eq!(x.given_label(), 1);
            assert_eq!(label_preds[x.id()], 1);
        }
    }
}

#[test]
fn rad_total_agreement_grows_pool_by_batch() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Rad, &initial, 3);
    let log = s.rad_step(coded_batch(1, 100, 12, 3, &[])).unwrap();
    assert_eq!(log.selected_count(), 12);
    assert_eq!(s.clean_pool.len(), 21);
    assert!(log.retrained);
}

#[test]
fn rad_with_truthful_label_model_keeps_exactly_clean() {
    let initial = coded_batch(0, 0, 9, 3, &[1, 2]);
    let mut s = init(Variant::Rad, &initial, 3);
    assert_eq!(s.clean_pool.len(), 7);
    let arrivals = [
        coded_batch(1, 100, 12, 3, &[0, 5, 7]),
        coded_batch(2, 200, 12, 3, &[1]),
        coded_batch(3, 300, 12, 3, &[2, 3, 4, 11]),
    ];
    let mut expected: Vec<usize> = initial.instances.iter().filter(|x| x.is_clean()).map(|x| x.id()).collect();
    for b in arrivals {
        expected.extend(b.instances.iter().filter(|x| x.is_clean()).map(|x| x.id()));
        let log = s.rad_step(b).unwrap();
        assert!(log.label_clean.iter().all(|x| x.is_clean()));
    }
    let mut got: Vec<usize> = s.clean_pool.iter().map(|x| x.id()).collect();
    got.sort_unstable();
    expected.sort_unstable();
    assert_eq!(got, expected);
    assert!(s.clean_pool.iter().all(|x| x.is_clean()));
}

#[test]
fn rad_empty_selection_keeps_models() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Rad, &initial, 3);
    s.label_model = Some(constant_model(0, 3));
    let before = s.classifier.clone();
    // every given label is 1 or 2, label model always says 0
    let b = Batch::new(1, (0..6).map(|i| coded(50 + i, 1 + i % 2, 1 + i % 2)).collect());
    let log = s.rad_step(b).unwrap();
    assert_eq!(log.selected_count(), 0);
    assert!(!log.retrained);
    assert_eq!(s.classifier, before);
}

#[test]
fn wrong_variant_step_is_rejected() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Rad, &initial, 3);
    assert!(s.voting_step(coded_batch(1, 100, 3, 3, &[])).is_err());
}

#[test]
fn voting_without_uncertain_reduces_to_rad() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut rad = init(Variant::Rad, &initial, 3);
    let mut vote = init(Variant::Voting, &initial, 3);
    let b = coded_batch(1, 100, 12, 3, &[]);
    let lr = rad.rad_step(b.clone()).unwrap();
    let lv = vote.voting_step(b).unwrap();
    assert_eq!(lr.label_clean, lv.label_clean);
    assert!(lv.vote_accepted.is_empty());
    assert_eq!(rad.clean_pool, vote.clean_pool);
    assert_eq!(rad.classifier, vote.classifier);
    assert_eq!(vote.inactive_total(), 0);
}

fn group(origin: usize, start: usize, n: usize, label: usize) -> InactiveGroup {
    InactiveGroup {
        origin,
        instances: (0..n).map(|i| coded(start + i, label, label)).collect(),
    }
}

#[test]
fn history_reprocesses_two_largest_groups() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Voting, &initial, 3);
    s.classifier = constant_model(2, 3);
    s.inactive = vec![group(1, 100, 9, 2), group(2, 200, 7, 2), group(3, 300, 3, 2)];
    let pool_before = s.clean_pool.len();
    let recovered = s.reprocess_history().unwrap();
    assert_eq!(recovered.len(), 16);
    assert_eq!(s.clean_pool.len(), pool_before + 16);
    assert_eq!(s.inactive.len(), 1);
    assert_eq!(s.inactive[0].origin, 3);
}

#[test]
fn history_with_nothing_inactive_is_a_no_op() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Voting, &initial, 3);
    let pool = s.clean_pool.clone();
    assert!(s.reprocess_history().unwrap().is_empty());
    assert_eq!(s.clean_pool, pool);
}

#[test]
fn history_keeps_size_order_after_partial_acceptance() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Voting, &initial, 3);
    s.classifier = constant_model(2, 3);
    let mut big = group(1, 100, 9, 1);
    big.instances.extend(group(1, 150, 2, 2).instances);
    s.inactive = vec![big, group(2, 200, 7, 0), group(3, 300, 5, 1)];
    s.reprocess_history().unwrap();
    let sizes: Vec<usize> = s.inactive.iter().map(|g| g.instances.len()).collect();
    assert_eq!(sizes, vec![9, 7, 5]);
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn improved_classifier_recovers_history_exactly_once() {
    let initial = coded_batch(0, 0, 9, 3, &[]);
    let mut s = init(Variant::Voting, &initial, 3);
    // phase 1: label model and classifier disagree with each other and with the labels
    s.label_model = Some(constant_model(0, 3));
    s.classifier = constant_model(2, 3);
    let b1 = Batch::new(1, (0..4).map(|i| coded(100 + i, 1, 1)).collect());
    let before = s.clean_pool.len();
    // retraining replaces the scripted models; restore them before the history pass runs
    s.voting_step_scripted(b1, |st| {
        st.label_model = Some(constant_model(0, 3));
        st.classifier = constant_model(2, 3);
    });
    assert_eq!(s.clean_pool.len(), before);
    assert_eq!(s.inactive_total(), 4);

    // phase 2: a classifier that confirms the given labels
    s.label_model = Some(constant_model(0, 3));
    s.classifier = truth_model(3);
    let recovered = s.reprocess_history().unwrap();
    assert_eq!(recovered.len(), 4);
    assert_eq!(s.inactive_total(), 0);
    let ids: Vec<usize> = s.clean_pool.iter().map(|x| x.id()).collect();
    let unique: HashSet<usize> = ids.iter().copied().collect();
    assert_eq!(ids.len(), unique.len());
    for i in 0..4 {
        assert!(unique.contains(&(100 + i)));
    }
    // nothing further to recover
    assert!(s.reprocess_history().unwrap().is_empty());
}

impl FrameworkState {
    /// voting_step with a hook between retraining and history reprocessing.
    fn voting_step_scripted(&mut self, batch: Batch, hook: impl FnOnce(&mut Self)) -> ArrivalLog {
        let cleansed = cleanse_with_label_model(self.label_model().unwrap(), batch.instances).unwrap();
        let vote = voting_filter(&self.classifier, cleansed.predicted_dirty, &cleansed.dirty_predictions).unwrap();
        self.accept(&cleansed.predicted_clean);
        self.accept(&vote.accepted);
        self.park(batch.index, vote.rejected);
        self.retrain().unwrap();
        hook(self);
        let mut log = ArrivalLog::default();
        log.history_recovered = self.reprocess_history().unwrap();
        log
    }
}

fn noisy_stream(seed: u64, level: f64, arrivals: usize, n: usize) -> (Batch, Vec<Batch>) {
    let cfg = StreamConfig {
        num_classes: 3,
        num_features: 4,
        initial_batch_size: 40,
        batch_size: n,
        num_batches: arrivals,
        test_size: 5,
        seed,
        stratify: false,
        scale: false,
    };
    let d = generate_synthetic_n(&cfg, 2.0, cfg.required_instances()).unwrap();
    let mut r = rng(seed);
    let s = split_stream(&d, &cfg, &mut r).unwrap();
    let initial = inject_symmetric_noise(s.initial, level, 3, &mut r).unwrap();
    let arrivals = s
        .arrivals
        .into_iter()
        .map(|b| inject_symmetric_noise(b, level, 3, &mut r).unwrap())
        .collect();
    (initial, arrivals)
}

fn knn_state(variant: Variant, initial: &Batch) -> FrameworkState {
    FrameworkState::initialize(
        variant,
        initial,
        &ClassifierSpec::centroid(),
        &ClassifierSpec::knn(3),
        3,
        &mut rng(7),
    )
    .unwrap()
}

#[test]
fn active_with_zero_budget_matches_voting_first_arrival() {
    let (initial, arrivals) = noisy_stream(2, 0.4, 1, 30);
    let mut vote = knn_state(Variant::Voting, &initial);
    let mut act = knn_state(Variant::Active, &initial);
    let b = arrivals[0].clone();
    let lv = vote.voting_step(b.clone()).unwrap();
    let la = act
        .active_step(b, &mut TruthOracle::default(), &OracleBudget::per_batch(0.0), &mut rng(3))
        .unwrap();
    assert_eq!(la.oracle_queries, 0);
    assert_eq!(lv.label_clean, la.label_clean);
    assert_eq!(lv.vote_accepted, la.vote_accepted);
    assert_eq!(la.discarded, lv.newly_inactive);
    let pool_without_history = &vote.clean_pool[..vote.clean_pool.len() - lv.history_recovered.len()];
    assert_eq!(pool_without_history, &act.clean_pool[..]);
}

#[test]
fn active_unlimited_uses_every_instance() {
    let (initial, arrivals) = noisy_stream(5, 0.4, 4, 30);
    let mut s = knn_state(Variant::Active, &initial);
    let mut oracle = TruthOracle::default();
    for b in arrivals {
        let log = s.active_step(b, &mut oracle, &OracleBudget::unlimited(), &mut rng(1)).unwrap();
        assert_eq!(log.selected_count(), 30);
        assert_eq!(log.discarded, 0);
        assert!(log.oracle_answered.iter().all(|x| x.is_clean()));
        assert_eq!(s.inactive_total(), 0);
    }
    assert_eq!(oracle.queries, s.oracle_queries_total);
}

#[test]
fn active_limited_respects_budget() {
    let (initial, arrivals) = noisy_stream(6, 0.6, 5, 30);
    let mut s = knn_state(Variant::Active, &initial);
    let budget = OracleBudget::per_batch(0.1);
    let mut r = rng(2);
    for b in arrivals {
        let log = s.active_step(b, &mut TruthOracle::default(), &budget, &mut r).unwrap();
        assert!(log.oracle_queries <= 3);
        assert_eq!(log.selected_count() + log.discarded, 30);
    }
}

#[test]
fn slimmed_trains_on_current_and_previous_oracle_answers() {
    let (initial, arrivals) = noisy_stream(8, 0.4, 3, 30);
    let mut s = FrameworkState::initialize(
        Variant::Slimmed,
        &initial,
        &ClassifierSpec::centroid(),
        &ClassifierSpec::knn(3),
        3,
        &mut rng(7),
    )
    .unwrap();
    assert!(s.label_model.is_none());
    let mut oracle = TruthOracle::default();
    let budget = OracleBudget::per_batch(0.3);
    let mut r = rng(4);
    let mut answered: Vec<Vec<LabeledInstance>> = Vec::new();
    for b in arrivals {
        let log = s.slimmed_step(b, &mut oracle, &budget, &mut r).unwrap();
        assert!(log.oracle_queries <= 9);
        let mut expected: Vec<(usize, usize)> = log
            .label_clean
            .iter()
            .chain(&log.oracle_answered)
            .chain(answered.last().into_iter().flatten())
            .map(|x| (x.id(), x.given_label()))
            .collect();
        let mut got: Vec<(usize, usize)> = log.warm_start_set.iter().map(|x| (x.id(), x.given_label())).collect();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        if answered.len() >= 2 {
            let old: HashSet<usize> = answered[answered.len() - 2].iter().map(|x| x.id()).collect();
            assert!(log.warm_start_set.iter().all(|x| !old.contains(&x.id())));
        }
        answered.push(log.oracle_answered.clone());
    }
    assert_eq!(s.prev_oracle_batch, answered[2]);
    assert_eq!(s.prev2_oracle_batch, answered[1]);
    let Learned::Knn(m) = &s.classifier.learned else { unreachable!() };
    assert_eq!(m.len(), s.classifier.trained_on_count);
}

#[test]
fn slimmed_zero_budget_discards_disagreements() {
    let (initial, arrivals) = noisy_stream(9, 0.4, 2, 30);
    let mut s = knn_state(Variant::Slimmed, &initial);
    for b in arrivals {
        let log = s
            .slimmed_step(b, &mut TruthOracle::default(), &OracleBudget::per_batch(0.0), &mut rng(0))
            .unwrap();
        assert_eq!(log.oracle_queries, 0);
        assert_eq!(log.label_clean.len() + log.discarded, 30);
        assert_eq!(log.warm_start_set, log.label_clean);
    }
}

#[test]
fn initialization_uses_only_truly_clean() {
    let noiseless = coded_batch(0, 0, 30, 3, &[]);
    assert_eq!(init(Variant::Rad, &noiseless, 3).clean_pool, noiseless.instances);

    let big = Batch::new(0, (0..6000).map(|i| coded(i, i % 3, i % 3)).collect());
    let noisy = inject_symmetric_noise(big, 0.3, 3, &mut rng(1)).unwrap();
    let s = init(Variant::Voting, &noisy, 3);
    assert_eq!(s.clean_pool.len(), 4200);

    let all_dirty = coded_batch(0, 0, 6, 3, &[0, 1, 2, 3, 4, 5]);
    assert!(matches!(
        FrameworkState::initialize(
            Variant::Rad,
            &all_dirty,
            &ClassifierSpec::centroid(),
            &ClassifierSpec::centroid(),
            3,
            &mut rng(0)
        ),
        Err(Error::Initialization(_))
    ));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

    #[test]
    fn pool_monotone_and_voting_conserves(seed in 0u64..10_000, level in 0.0f64..0.9) {
        let (initial, arrivals) = noisy_stream(seed, level, 4, 20);
        for variant in [Variant::Rad, Variant::Voting, Variant::Active, Variant::Slimmed] {
            let Ok(mut s) = FrameworkState::initialize(
                variant, &initial, &ClassifierSpec::centroid(), &ClassifierSpec::knn(3), 3, &mut rng(seed),
            ) else { continue };
            let mut r = rng(seed + 1);
            let mut oracle = TruthOracle::default();
            let budget = if variant == Variant::Slimmed { OracleBudget::per_batch(0.3) } else { OracleBudget::unlimited() };
            let mut last = s.clean_pool.len();
            for b in arrivals.clone() {
                let log = s.step(b, &mut oracle, &budget, &mut r).unwrap();
                proptest::prop_assert!(s.clean_pool.len() >= last);
                last = s.clean_pool.len();
                proptest::prop_assert!(log.selected_true_clean_count() <= log.selected_count());
                proptest::prop_assert!(log.selected_count() <= 20);
                proptest::prop_assert!(log.oracle_answered.iter().all(|x| x.is_clean()));
                match variant {
                    Variant::Voting => {
                        proptest::prop_assert_eq!(log.label_clean.len() + log.vote_accepted.len() + log.newly_inactive, 20);
                        let sizes: Vec<usize> = s.inactive.iter().map(|g| g.instances.len()).collect();
                        proptest::prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
                    }
                    Variant::Active => {
                        proptest::prop_assert_eq!(log.selected_count(), 20);
                        proptest::prop_assert_eq!(s.inactive_total(), 0);
                    }
                    _ => {}
                }
            }
        }
    }
}
