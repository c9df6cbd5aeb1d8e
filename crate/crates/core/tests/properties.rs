use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamfuse::active::{AlState, THETA_MAX, THETA_MIN};
use streamfuse::data::{NormStats, Preprocess};
use streamfuse::experiment::{run_structure_full, Aggregation, StructureSpec};
use streamfuse::format::{model_from_str, model_to_string};
use streamfuse::learner::LearnOutcome;
use streamfuse::merge::{
    extract_rules, hyperplane_similarity, merge_pair, run_merge, union_inv_dispersion,
};
use streamfuse::model::{argmax, firing_strength};
use streamfuse::{
    make_plan, normalize, synth_stream, train_all, vote, AlConfig, Dataset, Ensemble, Learner,
    LearnerConfig, MergeConfig, Model, NormMethod, Rule, SynthSpec,
};

fn spd(rng: &mut ChaCha8Rng, u: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(u, u, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(u, u) * rng.random_range(0.05..2.0)
}

fn random_rule(rng: &mut ChaCha8Rng, u: usize, m: usize) -> Rule {
    Rule {
        center: DVector::from_fn(u, |_, _| rng.random_range(-3.0..3.0)),
        inv_dispersion: spd(rng, u),
        population: rng.random_range(1..500) as f64,
        consequent: DMatrix::from_fn(u + 1, m, |_, _| rng.random_range(-2.0..2.0)),
        weight: rng.random_range(0.0..1.0),
    }
}

fn random_model(rng: &mut ChaCha8Rng, u: usize, m: usize, rules: usize) -> Model {
    let mut model = Model::new(u, m);
    model.rules = (0..rules).map(|_| random_rule(rng, u, m)).collect();
    model.training_accuracy = rng.random_range(0.5..1.0);
    model
}

fn point(rng: &mut ChaCha8Rng, u: usize) -> Vec<f64> {
    (0..u).map(|_| rng.random_range(-4.0..4.0)).collect()
}

fn is_spd(m: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

fn learner_on_stream(seed: u64, n: usize) -> (Learner, Vec<(Vec<f64>, usize)>) {
    let ds = synth_stream(&SynthSpec::overlapping(n, seed)).unwrap();
    let mut l = Learner::new(ds.input_dim(), ds.num_classes, LearnerConfig::default()).unwrap();
    let mut seen = Vec::new();
    for (x, y) in ds.iter() {
        l.learn_one(x, y).unwrap();
        seen.push((x.to_vec(), y));
    }
    (l, seen)
}

// Model core.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn firing_strength_in_unit_interval(seed in any::<u64>(), u in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_rule(&mut rng, u, 2);
        let x = point(&mut rng, u);
        let f = firing_strength(&r, &x).unwrap();
        prop_assert!(f > 0.0 && f <= 1.0);
        if r.mahalanobis_sq(&x).unwrap() > 1e-12 {
            prop_assert!(f < 1.0);
        }
        prop_assert_eq!(firing_strength(&r, r.center.as_slice()).unwrap(), 1.0);
    }

    #[test]
    fn activations_sum_to_one(seed in any::<u64>(), u in 1usize..5, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, u, 3, n);
        let x = point(&mut rng, u);
        let total: f64 = model.normalized_activations(&x).unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infer_ignores_rule_order(seed in any::<u64>(), u in 1usize..4, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, u, 3, n);
        let mut shuffled = model.clone();
        shuffled.rules.reverse();
        shuffled.rules.rotate_left(rng.random_range(0..n));
        let x = point(&mut rng, u);
        let a = model.infer(&x).unwrap();
        let b = shuffled.infer(&x).unwrap();
        for (p, q) in a.scores.iter().zip(&b.scores) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
        let mut sorted = a.scores.clone();
        sorted.sort_by(|p, q| q.total_cmp(p));
        if sorted[0] - sorted[1] > 1e-9 {
            prop_assert_eq!(a.class_label, b.class_label);
        }
    }

    #[test]
    fn argmax_survives_positive_rescaling(
        scores in prop::collection::vec(-10.0f64..10.0, 2..6),
        c in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|p, q| q.total_cmp(p));
        if sorted[0] - sorted[1] > 1e-9 {
            prop_assert_eq!(argmax(&scores), argmax(&scaled));
        }
    }
}

// Learner.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn learner_keeps_precisions_spd_and_population_conserved(seed in any::<u64>()) {
        let ds = synth_stream(&SynthSpec::overlapping(1500, seed)).unwrap();
        let mut l = Learner::new(ds.input_dim(), ds.num_classes, LearnerConfig::default()).unwrap();
        for (x, y) in ds.iter() {
            l.learn_one(x, y).unwrap();
            for r in &l.model().rules {
                prop_assert!(asymmetry(&r.inv_dispersion) < 1e-9);
                prop_assert!(is_spd(&r.inv_dispersion));
            }
            let held = l.model().total_population() + l.stats().pruned_population;
            prop_assert_eq!(held, l.stats().samples_learned as f64);
        }
    }

    #[test]
    fn learner_is_deterministic(seed in any::<u64>()) {
        let (a, _) = learner_on_stream(seed, 800);
        let (b, _) = learner_on_stream(seed, 800);
        prop_assert_eq!(model_to_string(a.model()), model_to_string(b.model()));
    }
}

#[test]
fn rule_count_is_bounded_by_rules_not_samples() {
    let ds = synth_stream(&SynthSpec::two_blobs(20_000, 9)).unwrap();
    let mut l = Learner::new(ds.input_dim(), ds.num_classes, LearnerConfig::default()).unwrap();
    let mut peak = 0;
    for (x, y) in ds.iter() {
        l.learn_one(x, y).unwrap();
        peak = peak.max(l.model().rules.len());
    }
    assert!(peak < 100, "peak rule count {peak}");
}

#[test]
fn learner_spawns_and_updates() {
    let (l, seen) = learner_on_stream(5, 500);
    assert_eq!(l.stats().samples_learned, seen.len() as u64);
    assert!(l.stats().rules_spawned >= 1);
    let mut fresh = Learner::new(2, 2, LearnerConfig::default()).unwrap();
    assert!(matches!(
        fresh.learn_one(&[0.0, 0.0], 0).unwrap().outcome,
        LearnOutcome::Spawned { .. }
    ));
}

// Active learning.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn threshold_stays_clamped(seed in any::<u64>(), budget in 0.05f64..0.95, step in 0.001f64..0.2) {
        let cfg = AlConfig { budget, step, seed, ..AlConfig::default() };
        let mut st = AlState::new(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for _ in 0..2000 {
            st.record_seen();
            st.admit(rng.random_range(0.5..1.0), rng.random_range(0.5..1.0));
            prop_assert!(st.theta >= THETA_MIN && st.theta <= THETA_MAX);
        }
    }

    #[test]
    fn fixed_seed_fixes_decisions(seed in any::<u64>()) {
        let cfg = AlConfig { seed, ..AlConfig::default() };
        let run = || {
            let mut st = AlState::new(&cfg, 3).unwrap();
            (0..500)
                .map(|i| {
                    st.record_seen();
                    st.admit(0.5 + (i % 7) as f64 / 14.0, 0.9)
                })
                .collect::<Vec<bool>>()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn forced_full_admission_equals_plain_training() {
    let ds = synth_stream(&SynthSpec::overlapping(4000, 3)).unwrap();
    let plan = make_plan(ds.len(), 2).unwrap();
    let cfg = LearnerConfig::default();
    let al = AlConfig {
        budget: 1.0,
        theta_override: Some(1.0),
        randomize: false,
        ..AlConfig::default()
    };
    let with = train_all(&ds, &plan, &cfg, Some(&al), 1).unwrap();
    let without = train_all(&ds, &plan, &cfg, None, 1).unwrap();
    assert_eq!(with.samples_trained(), with.samples_seen());
    assert_eq!(with.to_text(), without.to_text());
}

#[test]
fn iid_stream_compresses_near_budget() {
    let ds = synth_stream(&SynthSpec::two_blobs(40_000, 6)).unwrap();
    let plan = make_plan(ds.len(), 4).unwrap();
    let al = AlConfig::default();
    let init = train_all(&ds, &plan, &LearnerConfig::default(), Some(&al), 1).unwrap();
    let rate = init.samples_trained() as f64 / init.samples_seen() as f64;
    assert!((0.3..=0.5).contains(&rate), "compression {rate}");
}

// Partition training.

#[test]
fn parallelism_leaves_models_unchanged() {
    let ds = synth_stream(&SynthSpec::two_blobs(16_000, 2)).unwrap();
    let plan = make_plan(ds.len(), 8).unwrap();
    let cfg = LearnerConfig::default();
    let al = AlConfig::default();
    for al in [None, Some(&al)] {
        let base = train_all(&ds, &plan, &cfg, al, 1).unwrap().to_text();
        for p in [2, 3, 8] {
            assert_eq!(train_all(&ds, &plan, &cfg, al, p).unwrap().to_text(), base);
        }
    }
}

#[test]
fn partitions_share_no_state() {
    let ds = synth_stream(&SynthSpec::overlapping(6000, 8)).unwrap();
    let cfg = LearnerConfig::default();
    let both = train_all(&ds, &make_plan(ds.len(), 2).unwrap(), &cfg, None, 2).unwrap();
    let plan = make_plan(ds.len(), 2).unwrap();
    for (i, range) in plan.ranges.iter().enumerate() {
        let half = subset(&ds, range.clone());
        let alone = train_all(&half, &make_plan(half.len(), 1).unwrap(), &cfg, None, 1).unwrap();
        let mut expected = alone.models[0].clone();
        expected.partition_id = i;
        assert_eq!(model_to_string(&both.models[i]), model_to_string(&expected));
    }
}

fn subset(ds: &Dataset, range: std::ops::Range<usize>) -> Dataset {
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for i in range {
        feats.extend_from_slice(ds.row(i));
        labels.push(ds.label(i));
    }
    Dataset::new(feats, labels, ds.input_dim(), ds.num_classes).unwrap()
}

// Merging.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn similarity_symmetric_and_bounded(seed in any::<u64>(), u in 1usize..5, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_rule(&mut rng, u, m);
        let w = random_rule(&mut rng, u, m);
        let s = hyperplane_similarity(&d, &w);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - hyperplane_similarity(&w, &d)).abs() <= 1e-12);
    }

    #[test]
    fn merge_pair_conserves_and_stays_convex(seed in any::<u64>(), u in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_rule(&mut rng, u, 2);
        let w = random_rule(&mut rng, u, 2);
        let r = merge_pair(&d, &w).unwrap();
        prop_assert_eq!(r.population, d.population + w.population);
        for j in 0..u {
            let (lo, hi) = (d.center[j].min(w.center[j]), d.center[j].max(w.center[j]));
            prop_assert!(r.center[j] >= lo - 1e-12 && r.center[j] <= hi + 1e-12);
        }
        prop_assert!(asymmetry(&r.inv_dispersion) < 1e-12);
        prop_assert!(is_spd(&r.inv_dispersion));
    }

    #[test]
    fn duplicate_merge_is_idempotent(seed in any::<u64>(), u in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_rule(&mut rng, u, 3);
        let r = merge_pair(&d, &d).unwrap();
        prop_assert_eq!(&r.center, &d.center);
        prop_assert_eq!(&r.inv_dispersion, &d.inv_dispersion);
        prop_assert_eq!(&r.consequent, &d.consequent);
        prop_assert_eq!(r.population, 2.0 * d.population);
    }

    #[test]
    fn union_precision_is_spd(seed in any::<u64>(), u in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_rule(&mut rng, u, 2);
        let w = random_rule(&mut rng, u, 2);
        prop_assert!(is_spd(&union_inv_dispersion(&d, &w).unwrap()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn run_merge_keeps_k_rules_deterministically(
        seed in any::<u64>(),
        models in 1usize..5,
        per in 1usize..6,
        k_pick in 0usize..100,
        theta in 0.3f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms: Vec<Model> = (0..models)
            .map(|i| {
                let mut m = random_model(&mut rng, 2, 2, per);
                m.partition_id = i;
                m
            })
            .collect();
        let pool = extract_rules(&ms).unwrap();
        let k = 1 + k_pick % pool.len();
        let cfg = MergeConfig { k, sim_threshold: theta, ..MergeConfig::default() };
        let a = run_merge(&pool, &cfg).unwrap();
        let b = run_merge(&pool, &cfg).unwrap();
        prop_assert_eq!(a.model.rules.len(), k);
        prop_assert_eq!(&a.model, &b.model);
        prop_assert_eq!(a.report.fates.len(), pool.len());
        let r = &a.report;
        prop_assert_eq!(r.assigned + r.discarded_similarity, pool.len() - k);
        prop_assert_eq!(r.merged + r.discarded_blowup, r.assigned);
    }
}

// Voting.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vote_permutation_invariant_and_normalized(seed in any::<u64>(), l in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<Model> = (0..l).map(|_| random_model(&mut rng, 2, 3, 3)).collect();
        let x = point(&mut rng, 2);
        let e = Ensemble::new(models.clone()).unwrap();
        let p = vote(&e, &x).unwrap();
        let total: f64 = p.scores.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut rev = models;
        rev.reverse();
        prop_assert_eq!(vote(&Ensemble::new(rev).unwrap(), &x).unwrap(), p);
    }

    #[test]
    fn copies_vote_like_the_model(seed in any::<u64>(), l in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, 2, 3, 4);
        let x = point(&mut rng, 2);
        let e = Ensemble::new(vec![m.clone(); l]).unwrap();
        prop_assert_eq!(vote(&e, &x).unwrap().class_label, m.infer(&x).unwrap().class_label);
    }
}

// Data and formats.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_text_round_trips(seed in any::<u64>(), u in 1usize..4, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, u, 2, n);
        let back = model_from_str(&model_to_string(&m), "mem").unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn normalization_uses_training_statistics_only() {
    let ds = synth_stream(&SynthSpec::drifting(4000, 1, 0.1, 0.9)).unwrap();
    let (train, test) = ds.split(0.5).unwrap();
    let (_, stats) = normalize(&train, NormMethod::ZScore).unwrap();
    assert_eq!(stats.fitted_rows, train.len());
    assert_eq!(stats, NormStats::fit(&train, NormMethod::ZScore).unwrap());
    assert_ne!(stats, NormStats::fit(&test, NormMethod::ZScore).unwrap());
    let pre = Preprocess {
        label: Default::default(),
        class_names: ds.class_names.clone(),
        norm: stats.clone(),
    };
    assert_eq!(Preprocess::from_text(&pre.to_text(), "mem").unwrap(), pre);
}

#[test]
fn synthetic_streams_are_reproducible() {
    let spec = SynthSpec::two_blobs(2000, 77).with_outliers(0.05);
    let a = synth_stream(&spec).unwrap();
    let b = synth_stream(&spec).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synth_stream(&SynthSpec::two_blobs(2000, 78)).unwrap());
}

// End-to-end.

#[test]
fn runs_are_deterministic_and_counted() {
    let ds = synth_stream(&SynthSpec::two_blobs(8000, 4)).unwrap();
    let (train, test) = ds.split(0.8).unwrap();
    for spec in StructureSpec::four() {
        let a = run_structure_full(&spec, &train, &test).unwrap();
        let b = run_structure_full(&spec, &train, &test).unwrap();
        assert_eq!(a.report.deterministic_text(), b.report.deterministic_text());
        match spec.aggregation {
            Aggregation::Merge => assert_eq!(a.report.rules_after, spec.merge.k),
            Aggregation::Vote => assert_eq!(a.report.rules_after, a.report.rules_before),
        }
        if !spec.al_enabled {
            assert_eq!(a.report.compression_rate(), 1.0);
        }
    }
}
