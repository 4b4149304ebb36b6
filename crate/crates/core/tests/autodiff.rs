use prose_core::autodiff::{clip_grad_norm, gradcheck, AdError, AdamW, AdamWConfig, ParamStore, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn store(shapes: &[&[usize]], seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    for (i, s) in shapes.iter().enumerate() {
        p.add(format!("p{i}"), random(s, &mut rng));
    }
    p
}

/// Reduces an op output to a scalar by MSE against a fixed random target.
fn to_loss(tape: &mut Tape<f64>, out: Var) -> Result<Var, AdError> {
    let n = tape.value(out).len();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.mse(out, &target)
}

fn check<F>(name: &str, shapes: &[&[usize]], f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, AdError>,
{
    let p = store(shapes, 7);
    let res = gradcheck(
        &p,
        |t, v| {
            let out = f(t, v)?;
            to_loss(t, out)
        },
        H,
        None,
    )
    .unwrap();
    assert!(res.max_rel < TOL, "{name}: max rel error {:.3e}", res.max_rel);
}

#[test]
fn gradcheck_matmul_and_bmm() {
    check("matmul", &[&[2, 3, 4], &[4, 5]], |t, v| t.matmul(v[0], v[1]));
    check("bmm", &[&[2, 3, 4], &[2, 4, 5]], |t, v| t.bmm(v[0], v[1], false));
    check("bmm_t", &[&[2, 3, 4], &[2, 5, 4]], |t, v| t.bmm(v[0], v[1], true));
    // shared operand on both sides
    check("bmm_self", &[&[2, 3, 4]], |t, v| t.bmm(v[0], v[0], true));
}

#[test]
fn gradcheck_elementwise() {
    check("add", &[&[3, 4], &[3, 4]], |t, v| t.add(v[0], v[1]));
    check("add_bias", &[&[2, 3, 4], &[4]], |t, v| t.add_bias(v[0], v[1]));
    check("scale", &[&[3, 4]], |t, v| Ok(t.scale(v[0], -0.7)));
    let c = Tensor::from_f64(&[3, 4], &[0.5; 12]).unwrap();
    check("add_const", &[&[2, 3, 4]], |t, v| t.add_const(v[0], &c));
    check("gelu", &[&[3, 5]], |t, v| Ok(t.gelu(v[0])));
    check("softmax", &[&[3, 5]], |t, v| Ok(t.softmax(v[0])));
}

#[test]
fn gradcheck_layer_norm() {
    check("layer_norm", &[&[3, 6], &[6], &[6]], |t, v| t.layer_norm(v[0], v[1], v[2]));
}

#[test]
fn gradcheck_indexing_and_layout() {
    check("embedding", &[&[5, 3]], |t, v| t.embedding(v[0], &[4, 0, 4, 2]));
    check("concat", &[&[2, 3, 4], &[2, 2, 4]], |t, v| t.concat1(v[0], v[1]));
    check("slice", &[&[2, 5, 3]], |t, v| t.slice1(v[0], 1, 3));
    check("swap", &[&[2, 3, 4, 2]], |t, v| t.swap_axes12(v[0]));
    check("transpose", &[&[3, 4], &[3, 2]], |t, v| {
        let at = t.transpose(v[0])?;
        t.matmul(at, v[1])
    });
    check("reshape", &[&[2, 6], &[3, 2]], |t, v| {
        let r = t.reshape(v[0], &[4, 3])?;
        t.matmul(r, v[1])
    });
}

#[test]
fn gradcheck_losses() {
    let p = store(&[&[4, 6]], 3);
    let targets = [2, 0, 6, 5];
    let res = gradcheck(&p, |t, v| t.cross_entropy(v[0], &targets, Some(6)), H, None);
    // target 6 equals ignore and would be out of range otherwise
    assert!(res.unwrap().max_rel < TOL);
    let res = gradcheck(&p, |t, v| t.mse(v[0], &[0.3; 24]), H, None).unwrap();
    assert!(res.max_rel < TOL);
}

#[test]
fn mse_gradient_closed_form() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_f64(&[4], &[1.0, -2.0, 0.5, 3.0]).unwrap());
    let x0 = [0.0, 1.0, 0.5, -1.0];
    let l = tape.mse(x, &x0).unwrap();
    let g = tape.backward(l).unwrap();
    let expect: Vec<f64> = [1.0, -2.0, 0.5, 3.0].iter().zip(&x0).map(|(a, b)| 2.0 * (a - b) / 4.0).collect();
    assert_eq!(g.get(x).unwrap(), expect.as_slice());
}

#[test]
fn zero_weighted_term_contributes_nothing() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap());
    let y = tape.param(Tensor::from_f64(&[3], &[0.5, -1.0, 2.0]).unwrap());
    let lx = tape.mse(x, &[0.0; 3]).unwrap();
    let ly = tape.mse(y, &[0.0; 3]).unwrap();
    let ly0 = tape.scale(ly, 0.0);
    let l = tape.add(lx, ly0).unwrap();
    let g = tape.backward(l).unwrap();
    assert!(g.get(y).unwrap().iter().all(|v| *v == 0.0));
    assert!(g.get(x).unwrap().iter().any(|v| *v != 0.0));
}

#[test]
fn uniform_attention_is_mean_of_values() {
    let mut tape = Tape::<f64>::new();
    let s = tape.constant(Tensor::zeros(&[1, 2, 4]));
    let w = tape.softmax(s);
    assert!(tape.value(w).data.iter().all(|v| *v == 0.25));
    let vals = tape.constant(Tensor::from_f64(&[1, 4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap());
    let o = tape.bmm(w, vals, false).unwrap();
    assert_eq!(tape.value(o).data, vec![4.0, 5.0, 4.0, 5.0]);
}

#[test]
fn layer_norm_of_constant_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[2, 5], &[3.7; 10]).unwrap());
    let g = tape.constant(Tensor::from_f64(&[5], &[1.0; 5]).unwrap());
    let b = tape.constant(Tensor::zeros(&[5]));
    let y = tape.layer_norm(x, g, b).unwrap();
    assert!(tape.value(y).data.iter().all(|v| *v == 0.0));
}

#[test]
fn confident_cross_entropy_vanishes() {
    let mut tape = Tape::<f64>::new();
    let mut logits = vec![0.0; 8];
    logits[3] = 60.0;
    logits[4 + 1] = 60.0;
    let l = tape.constant(Tensor::from_f64(&[2, 4], &logits).unwrap());
    let ce = tape.cross_entropy(l, &[3, 1], None).unwrap();
    assert!(tape.value(ce).data[0] < 1e-20);
}

#[test]
fn cross_entropy_ignores_pad_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random(&[3, 4], &mut rng);
    let mut other = base.clone();
    other.data[8..].iter_mut().for_each(|v| *v += 10.0);
    let mut values = Vec::new();
    for t in [base, other] {
        let mut tape = Tape::new();
        let l = tape.param(t);
        let ce = tape.cross_entropy(l, &[1, 2, 0], Some(0)).unwrap();
        let g = tape.backward(ce).unwrap();
        assert!(g.get(l).unwrap()[8..].iter().all(|v| *v == 0.0));
        values.push(tape.value(ce).data[0]);
    }
    assert_eq!(values[0], values[1]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(AdError::NonScalarLoss(_))));
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let a = tape.param(Tensor::zeros(&[2, 3]));
    let b = tape.param(Tensor::zeros(&[2, 3]));
    assert!(tape.matmul(a, b).is_err());
    assert!(tape.embedding(a, &[2]).is_err());
    assert!(tape.reshape(a, &[4]).is_err());
}

#[test]
fn learning_rate_schedule_endpoints() {
    let cfg = AdamWConfig {
        total_steps: 1000,
        ..Default::default()
    };
    assert_eq!(cfg.lr_at(0), 0.0);
    assert!((cfg.lr_at(100) - 1e-4).abs() < 1e-18);
    assert!(cfg.lr_at(50) > 0.0 && cfg.lr_at(50) < 1e-4);
    assert!(cfg.lr_at(1000).abs() < 1e-20);
    let lrs: Vec<f64> = (100..=1000).map(|s| cfg.lr_at(s)).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gradient_norm_ten_is_clipped_to_one() {
    let mut g = vec![vec![6.0f64, 0.0], vec![8.0]];
    let before = clip_grad_norm(&mut g, 1.0);
    assert_eq!(before, 10.0);
    let after: f64 = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    assert!((after - 1.0).abs() < 1e-15);
    assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
}

#[test]
fn adamw_reduces_a_quadratic() {
    let mut p = ParamStore::<f64>::new();
    let id = p.add("w", Tensor::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap());
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: 0.05,
            total_steps: 400,
            ..Default::default()
        },
        &p,
    );
    for _ in 0..400 {
        let mut tape = Tape::new();
        let vars = p.load(&mut tape);
        let l = tape.mse(vars[0], &[0.0; 3]).unwrap();
        let mut g = tape.backward(l).unwrap();
        let mut grads = p.collect_grads(&vars, &mut g);
        opt.step(&mut p, &mut grads);
    }
    assert!(p.get(id).data.iter().all(|v| v.abs() < 0.05), "{:?}", p.get(id).data);
}

#[test]
fn backward_is_deterministic() {
    let p = store(&[&[3, 4], &[4, 4]], 11);
    let run = || {
        let mut tape = Tape::new();
        let v = p.load(&mut tape);
        let h = tape.matmul(v[0], v[1]).unwrap();
        let s = tape.softmax(h);
        let l = tape.mse(s, &[0.1; 12]).unwrap();
        let mut g = tape.backward(l).unwrap();
        p.collect_grads(&v, &mut g)
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(row in prop::collection::vec(-20.0f64..20.0, 1..12), c in -50.0f64..50.0) {
        let n = row.len();
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![n], row.clone()).unwrap());
        let b = tape.constant(Tensor::new(vec![n], row.iter().map(|v| v + c).collect()).unwrap());
        let sa = tape.softmax(a);
        let sb = tape.softmax(b);
        let (ya, yb) = (&tape.value(sa).data, &tape.value(sb).data);
        prop_assert!((ya.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in ya.iter().zip(yb) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
