use prose_core::autodiff::{gradcheck, ParamStore, Tape, Tensor};
use prose_core::expr::{encode_ids, Vocab};
use prose_core::model::{pad_sequences, time_encoding, BatchInput, Mode, ModelConfig, Prose};
use prose_core::pde_zoo::{nominal_instance, PdeFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [PdeFamily; 3] = [PdeFamily::Heat, PdeFamily::ViscousF1, PdeFamily::KleinGordon];

fn equation_ids(family: PdeFamily) -> Vec<u16> {
    encode_ids(Vocab::global(), &nominal_instance(family, 0).to_expression()).unwrap()
}

fn batch(b: usize, n_in: usize, q: usize, nx: usize, seed: u64) -> BatchInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<u16>> = (0..b).map(|i| equation_ids(FAMILIES[i % FAMILIES.len()])).collect();
    let pad = Vocab::global().pad_id();
    let (sym_tokens, sym_len) = pad_sequences(&seqs, pad);
    let mut input = BatchInput {
        batch: b,
        n_in,
        nx,
        data: (0..b * n_in * nx).map(|_| rng.random_range(-1.0..1.0)).collect(),
        in_times: (0..b).flat_map(|_| (0..n_in).map(|i| 0.5 * i as f64 / 15.0)).collect(),
        sym_len,
        sym_tokens,
        n_query: q,
        query_times: (0..b * q).map(|_| rng.random_range(0.5..1.0)).collect(),
        ..Default::default()
    };
    input.set_symbol_targets(&seqs, pad);
    input
}

fn small(mode: Mode) -> ModelConfig {
    let mut c = ModelConfig::desk(mode);
    c.d_model = 16;
    c.n_heads = 2;
    c.ffn = 32;
    c.layers.sym_dec = 1;
    c.nx = 8;
    c
}

fn predict(model: &Prose, params: &ParamStore<f64>, input: &BatchInput) -> Vec<f64> {
    model.predict(params, input).unwrap()
}

#[test]
fn query_permutation_swaps_outputs() {
    let (model, params) = Prose::init::<f64>(ModelConfig::desk(Mode::TwoToTwo), 1).unwrap();
    let mut input = batch(1, 16, 2, 128, 3);
    let ab = predict(&model, &params, &input);
    input.query_times.swap(0, 1);
    let ba = predict(&model, &params, &input);
    assert_eq!(&ab[..128], &ba[128..]);
    assert_eq!(&ab[128..], &ba[..128]);
}

#[test]
fn single_query_equals_query_inside_a_batch() {
    let (model, params) = Prose::init::<f64>(ModelConfig::desk(Mode::TwoToTwo), 2).unwrap();
    let mut input = batch(2, 16, 16, 128, 4);
    let full = predict(&model, &params, &input);
    let picked = 11;
    let times: Vec<f64> = input.query_times.clone();
    input.n_query = 1;
    input.query_times = vec![times[picked], times[16 + picked]];
    let alone = predict(&model, &params, &input);
    for b in 0..2 {
        let inside = &full[(b * 16 + picked) * 128..][..128];
        assert_eq!(inside, &alone[b * 128..(b + 1) * 128]);
    }
}

#[test]
fn untrained_output_is_deterministic_for_a_seed() {
    let input = batch(2, 16, 4, 128, 5);
    let run = |seed| {
        let (m, p) = Prose::init::<f32>(ModelConfig::desk(Mode::TwoToTwo), seed).unwrap();
        m.predict(&p, &input).unwrap()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn causal_mask_hides_future_targets() {
    let cfg = small(Mode::TwoToTwo);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 6).unwrap();
    let input = batch(1, 4, 2, cfg.nx, 7);
    let logits = |inp: &BatchInput| {
        let mut tape = Tape::new();
        let vars = params.load(&mut tape);
        let out = model.forward(&mut tape, &vars, inp).unwrap();
        tape.value(out.logits.unwrap()).data.clone()
    };
    let base = logits(&input);
    let v = cfg.vocab_size;
    let j = 5;
    let mut perturbed = input.clone();
    perturbed.dec_tokens[j] = (perturbed.dec_tokens[j] + 17) % v as u16;
    let changed = logits(&perturbed);
    assert_eq!(&base[..j * v], &changed[..j * v], "positions before {j} must not move");
    assert_ne!(&base[j * v..], &changed[j * v..]);
}

#[test]
fn extra_padding_leaves_fused_data_unchanged() {
    let cfg = small(Mode::TwoToTwo);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 8).unwrap();
    let input = batch(2, 4, 2, cfg.nx, 9);
    let fused_data = |inp: &BatchInput| {
        let mut tape = Tape::new();
        let vars = params.load_frozen(&mut tape);
        let f = model.fuse(&mut tape, &vars, inp).unwrap();
        tape.value(f.data).data.clone()
    };
    let pad = Vocab::global().pad_id();
    let mut longer = input.clone();
    let l = input.sym_len;
    longer.sym_len = l + 5;
    longer.sym_tokens = input
        .sym_tokens
        .chunks(l)
        .flat_map(|row| row.iter().copied().chain(std::iter::repeat_n(pad, 5)))
        .collect();
    let (a, b) = (fused_data(&input), fused_data(&longer));
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "fused data moved by {diff:e}");
}

#[test]
fn one_to_one_fuses_data_only() {
    let cfg = small(Mode::OneToOne);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 1).unwrap();
    let mut input = batch(2, 16, 3, cfg.nx, 2);
    input.sym_tokens.clear();
    input.sym_len = 0;
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let f = model.fuse(&mut tape, &vars, &input).unwrap();
    assert_eq!(tape.shape(f.data), &[2, 16, cfg.d_model]);
    assert!(f.sym.is_none());
    let out = model.forward(&mut tape, &vars, &input).unwrap();
    assert!(out.logits.is_none());
    assert!(params.iter().all(|(n, _)| !n.starts_with("sym_")));
    assert_eq!(params.get(params.find("modality").unwrap()).shape, vec![1, cfg.d_model]);
}

#[test]
fn parameter_counts_grow_with_modalities() {
    let count = |mode| Prose::init::<f32>(ModelConfig::desk(mode), 0).unwrap().1.numel();
    let (one, two_one, two_two) = (count(Mode::OneToOne), count(Mode::TwoToOne), count(Mode::TwoToTwo));
    assert!(one < two_one && two_one < two_two, "{one} {two_one} {two_two}");
    let (_, p) = Prose::init::<f32>(ModelConfig::desk(Mode::TwoToOne), 0).unwrap();
    assert!(p.iter().all(|(n, _)| !n.starts_with("sym_dec") && n != "sym_out.w"));
}

#[test]
fn data_embedding_is_affine_plus_time_encoding() {
    let cfg = small(Mode::TwoToOne);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 3).unwrap();
    let mut input = batch(1, 2, 1, cfg.nx, 4);
    input.data = vec![0.0; 2 * cfg.nx];
    input.in_times = vec![0.0, 0.3];
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let e = model.embed_data(&mut tape, &vars, &input).unwrap();
    let e = tape.value(e).data.clone();
    let d = cfg.d_model;
    let bias = &params.get(params.find("data_embed.b").unwrap()).data;
    let pe0 = time_encoding(0.0, d);
    for j in 0..d {
        assert!((e[j] - (bias[j] + pe0[j])).abs() < 1e-15);
    }
    // identical snapshots at different times embed differently
    let mut same = input.clone();
    same.data = (0..2 * cfg.nx).map(|i| ((i % cfg.nx) as f64).sin()).collect();
    let e = model.embed_data(&mut tape, &vars, &same).unwrap();
    let e = &tape.value(e).data;
    assert_ne!(&e[..d], &e[d..]);
}

#[test]
fn symbol_embedding_rejects_unknown_ids() {
    let (model, params) = Prose::init::<f64>(small(Mode::TwoToTwo), 3).unwrap();
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let v = model.config.vocab_size as u16;
    assert!(model.embed_symbol_ids(&mut tape, &vars, &[0, v], 1, 2).is_err());
    let e = model.embed_symbol_ids(&mut tape, &vars, &[0, 1, 2], 1, 3).unwrap();
    assert_eq!(tape.shape(e), &[1, 3, model.config.d_model]);
}

#[test]
fn zero_data_weight_blocks_data_decoder_gradients() {
    let cfg = small(Mode::TwoToTwo);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 4).unwrap();
    let input = batch(2, 4, 3, cfg.nx, 5);
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let out = model.forward(&mut tape, &vars, &input).unwrap();
    let target = vec![0.5; 2 * 3 * cfg.nx];
    let ld = tape.mse(out.data, &target).unwrap();
    let ls = tape
        .cross_entropy(out.logits.unwrap(), &input.token_target.iter().map(|&t| t as usize).collect::<Vec<_>>(), Some(Vocab::global().pad_id() as usize))
        .unwrap();
    let ld0 = tape.scale(ld, 0.0);
    let loss = tape.add(ld0, ls).unwrap();
    let mut g = tape.backward(loss).unwrap();
    let grads = params.collect_grads(&vars, &mut g);
    for id in model.data_decoder_params(&params) {
        assert!(grads[id.0].iter().all(|v| *v == 0.0), "{} got gradient", params.name(id));
    }
    for prefix in ["data_embed", "fusion", "sym_enc"] {
        let nonzero = model
            .encoder_params(&params)
            .into_iter()
            .filter(|id| params.name(*id).starts_with(prefix))
            .any(|id| grads[id.0].iter().any(|v| *v != 0.0));
        assert!(nonzero, "{prefix} received no symbol-loss gradient");
    }
}

#[test]
fn rigged_eos_gives_empty_invalid_expression() {
    let cfg = small(Mode::TwoToTwo);
    let (model, mut params) = Prose::init::<f64>(cfg.clone(), 5).unwrap();
    let id = params.find("sym_out.b").unwrap();
    params.get_mut(id).data[Vocab::global().eos_id() as usize] = 1e6;
    let input = batch(2, 4, 1, cfg.nx, 6);
    let (_, decoded) = model.predict_with_symbols(&params, &input).unwrap();
    for d in decoded {
        assert!(d.ids.is_empty() && !d.valid && d.expr.is_none());
    }
}

#[test]
fn generation_without_eos_is_flagged_invalid() {
    let mut cfg = small(Mode::TwoToTwo);
    cfg.max_symbol_len = 6;
    let (model, mut params) = Prose::init::<f64>(cfg.clone(), 5).unwrap();
    let id = params.find("sym_out.b").unwrap();
    let add = Vocab::global().lookup_text("add").unwrap();
    params.get_mut(id).data[Vocab::global().id(add) as usize] = 1e6;
    let input = batch(1, 4, 1, cfg.nx, 6);
    let (_, decoded) = model.predict_with_symbols(&params, &input).unwrap();
    assert_eq!(decoded[0].ids.len(), 5);
    assert!(!decoded[0].valid);
}

#[test]
fn gradient_check_small_model_all_parameters() {
    let cfg = small(Mode::TwoToTwo);
    let (model, params) = Prose::init::<f64>(cfg.clone(), 12).unwrap();
    let input = batch(2, 3, 2, cfg.nx, 13);
    let pad = Vocab::global().pad_id() as usize;
    let labels: Vec<usize> = input.token_target.iter().map(|&t| t as usize).collect();
    let target: Vec<f64> = (0..2 * 2 * cfg.nx).map(|i| (i as f64 * 0.37).sin()).collect();
    let res = gradcheck(
        &params,
        |tape, vars| {
            let out = model.forward(tape, vars, &input).map_err(|e| match e {
                prose_core::model::ModelError::Autodiff(a) => a,
                other => panic!("{other}"),
            })?;
            let ld = tape.mse(out.data, &target)?;
            let ls = tape.cross_entropy(out.logits.unwrap(), &labels, Some(pad))?;
            let ld = tape.scale(ld, 5.0);
            tape.add(ld, ls)
        },
        1e-5,
        Some((400, 1)),
    )
    .unwrap();
    assert!(res.max_rel < 1e-5, "max rel {:.3e}", res.max_rel);
}

#[test]
fn shapes_follow_the_batch() {
    let (model, params) = Prose::init::<f32>(ModelConfig::desk(Mode::TwoToOne), 0).unwrap();
    for b in [1, 3] {
        let input = batch(b, 16, 5, 128, 0);
        assert_eq!(model.predict(&params, &input).unwrap().len(), b * 5 * 128);
    }
    let bad = BatchInput {
        data: vec![0.0; 3],
        ..batch(1, 16, 1, 128, 0)
    };
    assert!(model.predict(&params, &bad).is_err());
    let _ = Tensor::<f32>::zeros(&[1]);
}
