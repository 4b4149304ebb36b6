use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use prose_core::autodiff::Tape;
use prose_core::model::{Mode, ModelConfig, Prose};
use prose_core::pde_zoo::{IcClass, PdeFamily, RiemannKind, N_INPUT_STAMPS, N_TARGET_STAMPS, NX};
use prose_core::train_eval::*;

fn tiny(mode: Mode) -> ModelConfig {
    let mut c = ModelConfig::desk(mode);
    c.d_model = 16;
    c.n_heads = 2;
    c.ffn = 32;
    c.layers.data_enc = 1;
    c.layers.sym_enc = 1;
    c.layers.fusion = 1;
    c.layers.data_dec = 1;
    c.layers.sym_dec = 1;
    c
}

fn small_set(seed: u64, per_family: usize) -> Dataset {
    generate(&GenSpec::families(&[PdeFamily::Heat, PdeFamily::Advection], per_family, seed)).unwrap()
}

#[test]
fn relative_l2_hand_values() {
    let m = relative_l2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0], 3);
    assert_abs_diff_eq!(m.mean, 100.0 / 14f64.sqrt(), epsilon = 1e-12);
    assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0], 2).mean, 0.0);
    assert_abs_diff_eq!(relative_l2(&[0.0, 0.0], &[3.0, -4.0], 2).mean, 100.0, epsilon = 1e-12);
}

#[test]
fn r2_hand_values() {
    assert_abs_diff_eq!(r2_score(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0], 3).mean, 0.5, epsilon = 1e-12);
    assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 3).mean, 1.0);
    assert_abs_diff_eq!(r2_score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], 3).mean, 0.0, epsilon = 1e-12);
}

#[test]
fn degenerate_samples_are_excluded_and_counted() {
    let m = relative_l2(&[1.0, 1.0, 1.0, 2.0], &[0.0, 0.0, 1.0, 2.0], 2);
    assert_eq!((m.count, m.excluded), (1, 1));
    assert_eq!(m.mean, 0.0);
    let r = r2_score(&[1.0, 1.0, 1.0, 2.0], &[5.0, 5.0, 1.0, 2.0], 2);
    assert_eq!((r.count, r.excluded), (1, 1));
}

#[test]
fn report_aggregates_per_family() {
    let o = |family, rel, valid| SampleOutcome {
        family,
        rel_l2: Some(rel),
        r2: Some(0.5),
        valid: Some(valid),
        symbol_error: valid.then_some(1.0),
        degenerate_symbol: false,
    };
    let r = MetricReport::from_outcomes(&[
        o(PdeFamily::Heat, 2.0, true),
        o(PdeFamily::Heat, 4.0, false),
        o(PdeFamily::Kdv, 6.0, true),
    ]);
    assert_eq!(r.rel_l2(), 4.0);
    assert_eq!(r.per_family[&PdeFamily::Heat].rel_l2.mean, 3.0);
    assert_abs_diff_eq!(r.overall.valid_fraction.unwrap(), 200.0 / 3.0, epsilon = 1e-12);
    assert_eq!(r.per_family[&PdeFamily::Heat].symbol_error.unwrap().count, 1);
}

#[test]
fn constant_input_takes_clamp_path() {
    let mut x = vec![3.0; 8];
    let mut y = vec![4.0; 2];
    let s = normalize_batch(&mut x, &mut y, 1);
    assert_eq!(s[0].std, 1.0);
    assert!(x.iter().all(|&v| v == 0.0));
    assert_eq!(y, vec![1.0, 1.0]);
}

proptest! {
    #[test]
    fn normalization_standardizes_and_inverts(
        v in prop::collection::vec(-50.0f64..50.0, 32),
        labels in prop::collection::vec(-50.0f64..50.0, 6),
    ) {
        prop_assume!(NormStats::of(&v[..16]).std > 1e-3 && NormStats::of(&v[16..]).std > 1e-3);
        let mut x = v.clone();
        let mut y = labels.clone();
        let stats = normalize_batch(&mut x, &mut y, 2);
        for b in 0..2 {
            let s = NormStats::of(&x[b * 16..(b + 1) * 16]);
            prop_assert!(s.mean.abs() < 1e-6);
            prop_assert!((s.std - 1.0).abs() < 1e-6);
            stats[b].invert(&mut x[b * 16..(b + 1) * 16]);
            stats[b].invert(&mut y[b * 3..(b + 1) * 3]);
        }
        for (a, b) in x.iter().zip(&v).chain(y.iter().zip(&labels)) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn metrics_invariant_to_common_scaling(
        t in prop::collection::vec(-10.0f64..10.0, 8),
        p in prop::collection::vec(-10.0f64..10.0, 8),
        c in 0.01f64..100.0,
    ) {
        let (rl, r2) = (relative_l2_sample(&p, &t), r2_sample(&p, &t));
        prop_assume!(rl.is_some() && r2.is_some());
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v * c).collect();
        prop_assert!((relative_l2_sample(&ps, &ts).unwrap() - rl.unwrap()).abs() <= 1e-9 * rl.unwrap().max(1.0));
        prop_assert!((r2_sample(&ps, &ts).unwrap() - r2.unwrap()).abs() <= 1e-9 * r2.unwrap().abs().max(1.0));
        prop_assert!(r2.unwrap() <= 1.0);
    }
}

#[test]
fn loss_weights_validation() {
    assert!(LossWeights { alpha: 0.0, beta: 0.0 }.validate().is_err());
    assert!(LossWeights { alpha: -1.0, beta: 1.0 }.validate().is_err());
    assert!(LossWeights::default().validate().is_ok());
    assert_eq!(LossWeights::default(), LossWeights { alpha: 5.0, beta: 1.0 });
}

#[test]
fn weighted_loss_is_exact_combination() {
    let data = small_set(3, 2);
    let (model, params) = Prose::init::<f64>(tiny(Mode::TwoToTwo), 1).unwrap();
    let refs: Vec<&Sample> = data.samples.iter().collect();
    let spec = TrainConfig::default().batch_spec(Mode::TwoToTwo);
    let (input, _) = make_batch(&refs, &spec);
    let mut tape = Tape::<f64>::new();
    let vars = params.load(&mut tape);
    let l = loss(&model, &mut tape, &vars, &input, LossWeights::default()).unwrap();
    let d = tape.value(l.data).data[0];
    let s = tape.value(l.symbol.unwrap()).data[0];
    assert_eq!(tape.value(l.total).data[0], 5.0 * d + s);
}

#[test]
fn input_indices_spread_over_window() {
    assert_eq!(input_indices(1), vec![0]);
    assert_eq!(input_indices(16), (0..16).collect::<Vec<_>>());
    assert_eq!(input_indices(4), vec![0, 5, 10, 15]);
    let i8 = input_indices(8);
    assert_eq!((i8[0], i8[7], i8.len()), (0, 15, 8));
}

#[test]
fn stamps_follow_the_half_window_layout() {
    let t = stamp_times(2.0, 1.0);
    assert_eq!(t.len(), N_INPUT_STAMPS + N_TARGET_STAMPS);
    assert_eq!((t[0], t[15], t[16], t[31]), (0.0, 1.0, 1.0625, 2.0));
    let mid = stamp_times(2.0, 0.5);
    assert_abs_diff_eq!(mid[16], 1.03125, epsilon = 1e-15);
    assert!(mid[16..].iter().all(|s| !t[16..].contains(s)));
}

#[test]
fn batch_has_expected_layout() {
    let data = small_set(4, 3);
    let refs: Vec<&Sample> = data.samples.iter().collect();
    let spec = BatchSpec {
        n_in: 8,
        symbols: SymbolInput::Skeleton,
        symbol_targets: true,
    };
    let (b, stats) = make_batch(&refs, &spec);
    assert_eq!((b.batch, b.n_in, b.nx, b.n_query), (6, 8, NX, N_TARGET_STAMPS));
    assert_eq!(b.data.len(), 6 * 8 * NX);
    assert_eq!(b.data_target.len(), 6 * N_TARGET_STAMPS * NX);
    assert_eq!(stats.len(), 6);
    assert!(b.query_times.iter().all(|&q| q > 0.5 && q <= 1.0));
    assert!(b.in_times.iter().all(|&q| (0.0..=0.5).contains(&q)));
    assert!(b.sym_len > 0 && b.dec_len > 0);
}

#[test]
fn skeleton_targets_carry_coefficients() {
    let data = small_set(5, 2);
    let vocab = prose_core::expr::Vocab::global();
    let coeff = vocab.id(prose_core::expr::Token::Coeff);
    for s in &data.samples {
        assert!(!s.equation.contains(&coeff));
        assert!(s.skeleton.contains(&coeff));
    }
}

#[test]
fn generation_is_deterministic_across_worker_counts() {
    let spec = GenSpec::families(&[PdeFamily::Heat, PdeFamily::ViscousF1], 3, 11);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| generate(&spec).unwrap());
    let b = many.install(|| generate(&spec).unwrap());
    assert_eq!(a.samples, b.samples);
    let c = generate(&GenSpec::families(&[PdeFamily::Heat, PdeFamily::ViscousF1], 3, 12)).unwrap();
    assert_ne!(a.samples[0].values, c.samples[0].values);
}

#[test]
fn noise_only_touches_inputs() {
    let mut spec = GenSpec::families(&[PdeFamily::Heat], 2, 7);
    let clean = generate(&spec).unwrap();
    spec.noise = 0.02;
    let noisy = generate(&spec).unwrap();
    assert_eq!(clean.samples[0].values, noisy.samples[0].values);
    assert_ne!(clean.samples[0].inputs, noisy.samples[0].inputs);
    assert_eq!(clean.samples[0].inputs, clean.samples[0].values[..N_INPUT_STAMPS * NX]);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = small_set(6, 4);
    let cfg = TrainConfig {
        steps: 30,
        batch_size: 4,
        log_every: 10,
        ..TrainConfig::desk()
    };
    let run = || {
        let (model, mut params) = Prose::init::<f32>(tiny(Mode::TwoToTwo), 2).unwrap();
        let log = train(&model, &mut params, &data, &cfg).unwrap();
        (log, params)
    };
    let (la, pa) = run();
    let (lb, pb) = run();
    assert_eq!(la, lb);
    assert!(pa.iter().zip(pb.iter()).all(|(a, b)| a.1.data == b.1.data));
    assert!(la.records.last().unwrap().total < la.records[0].total);
}

#[test]
fn evaluation_is_deterministic_across_worker_counts() {
    let data = small_set(8, 3);
    let (model, params) = Prose::init::<f32>(tiny(Mode::TwoToTwo), 3).unwrap();
    let opts = EvalOptions {
        batch_size: 2,
        ..Default::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| evaluate(&model, &params, &data, &opts).unwrap());
    let b = many.install(|| evaluate(&model, &params, &data, &opts).unwrap());
    // Empty symbol-error means are NaN, so compare the printed form.
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a.1.len(), 6);
    assert!(a.0.overall.valid_fraction.is_some());
}

#[test]
fn untrained_model_sits_near_the_trivial_floor() {
    let data = small_set(9, 4);
    let (model, params) = Prose::init::<f32>(tiny(Mode::TwoToOne), 4).unwrap();
    let (r, _) = evaluate(&model, &params, &data, &EvalOptions::default()).unwrap();
    assert!(r.rel_l2() > 30.0, "{}", r.rel_l2());
    assert!(r.r2() < 0.5);
    assert!(r.overall.valid_fraction.is_none());
}

#[test]
fn zero_rollout_equals_plain_test_error() {
    let data = small_set(10, 2);
    let (model, params) = Prose::init::<f32>(tiny(Mode::TwoToTwo), 5).unwrap();
    let opts = EvalOptions {
        symbols: SymbolInput::Known,
        decode: false,
        ..Default::default()
    };
    let (plain, _) = evaluate(&model, &params, &data, &opts).unwrap();
    let r = run_time_marching(&model, &params, &data, 1.0, &RolloutOptions::default()).unwrap();
    assert_abs_diff_eq!(r.rel_l2, plain.rel_l2(), epsilon = 1e-9);
    assert_eq!(r.windows.len(), 1);
}

#[test]
fn rollout_windows_and_horizon() {
    let data = small_set(12, 1);
    let (model, params) = Prose::init::<f32>(tiny(Mode::TwoToTwo), 6).unwrap();
    let r = run_time_marching(&model, &params, &data, 1.25, &RolloutOptions::default()).unwrap();
    assert_eq!(r.windows.len(), 2);
    assert_eq!((r.windows[1].start, r.windows[1].end), (1.0, 1.5));
    assert!(r.rel_l2.is_finite());
    assert!(run_time_marching(&model, &params, &data, MAX_ROLLOUT_HORIZON + 0.5, &RolloutOptions::default()).is_err());
    assert!(run_time_marching(&model, &params, &data, 0.9, &RolloutOptions::default()).is_err());
}

#[test]
fn study_registry_roundtrips() {
    let ids = StudyId::all();
    assert_eq!(ids.len(), 15);
    for id in ids {
        assert_eq!(id.to_string().parse::<StudyId>().unwrap(), id);
        StudySpec::builtin(id, 2, 1).unwrap().check_disjoint().unwrap();
    }
    assert!("study2-exp6".parse::<StudyId>().is_err());
}

#[test]
fn transfer_tables_follow_the_regime_pattern() {
    let count = |s: &StudySpec, kind| s.train.iter().filter(|p| p.ic == IcClass::Riemann(kind)).count();
    for j in 1..=5u8 {
        let s = StudySpec::builtin(StudyId::Study2(j), 1, 1).unwrap();
        assert_eq!(s.train.len(), 6);
        assert_eq!(count(&s, RiemannKind::Rarefaction), 6 - j as usize);
        assert_eq!(s.train[0].ic, IcClass::Riemann(RiemannKind::Shock));
    }
    for j in 1..=3u8 {
        let s = StudySpec::builtin(StudyId::Study3(j), 1, 1).unwrap();
        assert_eq!(count(&s, RiemannKind::MultiShock), 4 - j as usize);
    }
}

#[test]
fn transfer_spec_rejects_leaked_regime() {
    let mut s = StudySpec::builtin(StudyId::Study2(3), 1, 1).unwrap();
    s.train.push(GenPart::new(PdeFamily::ViscousF1, 1).with_ic(IcClass::Riemann(RiemannKind::Rarefaction)));
    assert!(s.check_disjoint().is_err());
    let mut m = StudySpec::miniature_transfer(1, 1);
    m.check_disjoint().unwrap();
    m.train.push(GenPart::new(PdeFamily::ViscousF3, 1).with_ic(IcClass::Riemann(RiemannKind::MultiShock)));
    assert!(m.check_disjoint().is_err());
}

#[test]
fn similarity_is_zero_for_identical_operators() {
    let ic = IcClass::Riemann(RiemannKind::Rarefaction);
    assert_eq!(similarity(PdeFamily::ViscousF1, PdeFamily::ViscousF1, ic, 2, 0).unwrap(), 0.0);
    let ab = similarity(PdeFamily::ViscousF1, PdeFamily::ViscousF3, ic, 2, 0).unwrap();
    assert!(ab > 1.0, "{ab}");
}

#[test]
fn colliding_dataset_shares_initial_data() {
    let d = colliding_dataset(3, 1, 0.0).unwrap();
    // Each IC appears once per family: three pairs per IC.
    assert_eq!(ic_collisions(&d), 3 * 3);
    assert_eq!(ic_collisions(&small_set(1, 3)), 0);
}
