use prose_core::expr::{encode_polish, Field};
use prose_core::pde_zoo::{
    instance_rng, nominal_instance, registry, sample_instance, Backend, IcClass, IcKind, IcSpec, ParamRange,
    PdeFamily, PdeInstance, PostProcess, SineTerm,
};
use prose_core::solvers::{solve_fine, SolveConfig};

/// Periodic or one-sided-free central differences on a uniform grid.
fn derivative(u: &[f64], h: f64, order: usize, i: usize) -> f64 {
    let n = u.len() as isize;
    let at = |k: isize| u[(i as isize + k).rem_euclid(n) as usize];
    match order {
        0 => at(0),
        1 => (at(1) - at(-1)) / (2.0 * h),
        2 => (at(1) - 2.0 * at(0) + at(-1)) / (h * h),
        3 => (at(2) - 2.0 * at(1) + 2.0 * at(-1) - at(-2)) / (2.0 * h * h * h),
        4 => (at(2) - 4.0 * at(1) + 6.0 * at(0) - 4.0 * at(-1) + at(-2)) / (h * h * h * h),
        _ => unreachable!(),
    }
}

#[test]
fn porous_expansion_matches_finite_differences() {
    let h = 1e-3;
    let u = |x: f64| 1.5 + 0.5 * (std::f64::consts::PI * x).sin() + 0.2 * (3.0 * x).cos();
    for m in [2, 3, 4] {
        let mut inst = nominal_instance(PdeFamily::PorousMedium, 0);
        inst.params.insert("m".into(), m as f64);
        let expr = inst.to_expression();
        for &x in &[0.13, 0.7, 1.41] {
            let w = |y: f64| u(y).powi(m);
            // u_t := (u^m)_xx, so the residual must vanish.
            let wxx = (w(x + h) - 2.0 * w(x) + w(x - h)) / (h * h);
            let ux = (u(x + h) - u(x - h)) / (2.0 * h);
            let uxx = (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
            let lookup = |f: Field| match f {
                Field::U => u(x),
                Field::Ut => wxx,
                Field::Ux => ux,
                Field::Uxx => uxx,
                _ => 0.0,
            };
            let r = expr.eval_point(x, 0.0, &lookup).unwrap();
            assert!(r.abs() < 1e-4 * wxx.abs().max(1.0), "m={m} x={x} r={r}");
        }
    }
}

#[test]
fn registry_is_serializable_and_consistent() {
    let reg = registry();
    assert_eq!(reg.len(), 20);
    let json = serde_json::to_string(&reg).unwrap();
    let back: Vec<prose_core::pde_zoo::FamilySpec> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, reg);
    for spec in &reg {
        assert!(spec.t_final > 0.0 && spec.x_final > 0.0);
        let expected_x = if spec.family == PdeFamily::FokkerPlanck { 2e-6 } else { 2.0 };
        assert_eq!(spec.physical_x_final, expected_x);
    }
    let fp = reg.iter().find(|s| s.family == PdeFamily::FokkerPlanck).unwrap();
    assert_eq!(fp.fixed["k_B"], 1.380649e-23);
    assert_eq!(fp.physical_t_final, 0.1);
}

#[test]
fn sampled_instances_respect_ranges_and_grids() {
    let mut rng = instance_rng(42, 0);
    for family in PdeFamily::ALL {
        for _ in 0..20 {
            let inst = sample_instance(family, &ParamRange::training(), IcClass::Training, &mut rng).unwrap();
            for (k, q) in family.spec().q_c {
                let v = inst.params[&k];
                assert!(v >= 0.9 * q - 1e-15 && v <= 1.1 * q + 1e-15, "{family} {k}={v}");
            }
            assert!(inst.xgrid().windows(2).all(|w| w[1] > w[0]));
            assert!(inst.times.windows(2).all(|w| w[1] > w[0]));
            assert!(encode_polish(&inst.to_expression()).is_ok());
        }
    }
}

fn smooth_ic(family: PdeFamily) -> IcSpec {
    let terms = vec![
        SineTerm {
            amplitude: 0.6,
            n: 1,
            phase: 0.4,
        },
        SineTerm {
            amplitude: 0.3,
            n: 2,
            phase: 1.9,
        },
    ];
    let mut post = PostProcess::default();
    match family {
        PdeFamily::PorousMedium | PdeFamily::DiffReactR1 | PdeFamily::DiffReactR3 | PdeFamily::DiffReactR4 => {
            post.range_normalize = Some((0.2, 1.0))
        }
        PdeFamily::CahnHilliard => post.range_normalize = Some((-1.0, -0.2)),
        _ => {}
    }
    let kind = match family {
        PdeFamily::FokkerPlanck => {
            post.probability_normalize = true;
            IcKind::GaussianMixture {
                bumps: vec![prose_core::pde_zoo::Bump {
                    amplitude: 1.0,
                    center: 1.0,
                    width: 0.15,
                }],
            }
        }
        _ => IcKind::SinusoidSuperposition { terms },
    };
    IcSpec {
        kind,
        post,
        x_final: 2.0,
    }
}

/// The residual expression evaluated on the solver's own output, with
/// derivatives by finite differences, must be small next to `u_t`.
#[test]
fn residual_expressions_agree_with_solvers() {
    for family in PdeFamily::ALL {
        if family.is_inviscid_conservation() {
            continue;
        }
        let mut inst: PdeInstance = nominal_instance(family, 1);
        inst.ic = smooth_ic(family);
        let t0 = 0.1 * inst.t_final;
        let dt = 1e-3 * inst.t_final;
        inst.times = vec![t0 - dt, t0, t0 + dt];
        let mut cfg = SolveConfig::for_family(family).with_nx(512);
        cfg.min_substeps = 20;
        let rows = solve_fine(&inst, &cfg).unwrap();
        let h = inst.x_final / cfg.nx_int as f64;
        let expr = inst.to_expression();
        let (mut res2, mut scale2) = (0.0, 0.0);
        let interior = if family.backend() == Backend::FpMatrix { 8..504 } else { 0..512 };
        for i in interior {
            let x = i as f64 * h;
            let ut = (rows[2][i] - rows[0][i]) / (2.0 * dt);
            let utt = (rows[2][i] - 2.0 * rows[1][i] + rows[0][i]) / (dt * dt);
            let lookup = |f: Field| match f {
                Field::Ut => ut,
                Field::Utt => utt,
                other => derivative(&rows[1], h, other.orders().0, i),
            };
            let r = expr.eval_point(x, t0, &lookup).unwrap();
            res2 += r * r;
            let lead = if family.is_second_order_in_time() { utt } else { ut };
            scale2 += lead * lead;
        }
        let rel = (res2 / scale2).sqrt();
        assert!(rel < 2e-2, "{family}: residual/leading term = {rel:.3e}");
    }
}
