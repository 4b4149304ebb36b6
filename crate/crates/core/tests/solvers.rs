use std::f64::consts::PI;

use prose_core::pde_zoo::{
    instance_rng, nominal_instance, sample_instance, Boundary, Flux, IcClass, IcKind, IcSpec, ParamRange, PdeFamily,
    PostProcess, RiemannKind, SineTerm,
};
use prose_core::solvers::{
    add_noise, convergence_order, convergence_order_at, solve, solve_fine, solve_with_stats, Convergence, FvSolver,
    SolveConfig, SolverError,
};

fn sine_ic(amplitude: f64, n: u32) -> IcSpec {
    IcSpec {
        kind: IcKind::SinusoidSuperposition {
            terms: vec![SineTerm {
                amplitude,
                n,
                phase: 0.0,
            }],
        },
        post: PostProcess::default(),
        x_final: 2.0,
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn heat_matches_separation_of_variables() {
    let mut inst = nominal_instance(PdeFamily::Heat, 0);
    inst.ic = sine_ic(1.0, 1);
    let c = inst.param("c");
    let traj = solve(&inst, &SolveConfig::for_family(PdeFamily::Heat)).unwrap();
    let last = traj.nt() - 1;
    assert_eq!(traj.times[last], 2.0);
    let exact: Vec<f64> = traj
        .xs
        .iter()
        .map(|&x| (-c * PI * PI * 2.0).exp() * (PI * x).sin())
        .collect();
    let err = rel_l2(traj.row(last), &exact);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn advection_is_exact_shift() {
    let mut inst = nominal_instance(PdeFamily::Advection, 3);
    inst.params.insert("beta".into(), 0.5);
    inst.times = (0..32).map(|i| i as f64 / 16.0).collect();
    let traj = solve(&inst, &SolveConfig::for_family(PdeFamily::Advection)).unwrap();
    let ic = prose_core::pde_zoo::InitialCondition::new(&inst.ic).unwrap();
    let row = traj.times.iter().position(|&t| t == 1.0).unwrap();
    for (j, &x) in traj.xs.iter().enumerate() {
        let expect = ic.eval((x - 0.5).rem_euclid(2.0));
        assert!((traj.row(row)[j] - expect).abs() < 1e-12);
    }
    // Half-period shift is a grid shift of 32 points.
    for j in 0..128 {
        assert!((traj.row(row)[j] - traj.row(0)[(j + 128 - 32) % 128]).abs() < 1e-12);
    }
}

#[test]
fn wave_matches_dalembert() {
    let mut inst = nominal_instance(PdeFamily::Wave, 5);
    inst.ic = sine_ic(1.0, 1);
    let traj = solve(&inst, &SolveConfig::for_family(PdeFamily::Wave)).unwrap();
    let s = inst.param("beta").sqrt();
    // For sin(πx): (sin(π(x - st)) + sin(π(x + st)))/2 = sin(πx) cos(πst)
    for (i, &t) in traj.times.iter().enumerate() {
        let exact: Vec<f64> = traj.xs.iter().map(|&x| (PI * x).sin() * (PI * s * t).cos()).collect();
        let err: f64 = traj.row(i).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "t={t} err={err}");
    }
}

#[test]
fn heat_second_order_in_space() {
    match convergence_order(PdeFamily::Heat, &sine_ic(1.0, 1)).unwrap() {
        Convergence::Order(p) => assert!((p - 2.0).abs() < 0.3, "{p}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exact_backend_skips_order() {
    assert_eq!(
        convergence_order(PdeFamily::Advection, &sine_ic(1.0, 1)).unwrap(),
        Convergence::Exact
    );
}

#[test]
fn viscous_burgers_converges_before_shock() {
    match convergence_order_at(PdeFamily::ViscousF1, &sine_ic(0.1, 1), 256).unwrap() {
        Convergence::Order(p) => assert!(p >= 1.0, "{p}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn inviscid_fv_conserves_mass_each_step() {
    for (i, flux) in [Flux::Burgers, Flux::Cubic, Flux::Sine].into_iter().enumerate() {
        let n = 512;
        let h = 2.0 / n as f64;
        let u0: Vec<f64> = (0..n)
            .map(|j| {
                let x = j as f64 * h;
                0.3 + (PI * x).sin() + 0.5 * (3.0 * PI * x + i as f64).cos()
            })
            .collect();
        let mut s = FvSolver::with_terms(u0, h, 0.4, Boundary::Periodic, Some((flux, 1.0)), 0.0, None);
        let m0 = s.mass();
        for _ in 0..400 {
            let dt = s.stable_dt();
            let before = s.mass();
            s.advance(dt);
            assert!((s.mass() - before).abs() < 1e-10);
        }
        assert!((s.mass() - m0).abs() < 1e-10, "{flux:?}");
    }
}

#[test]
fn fokker_planck_mass_and_positivity() {
    let mut rng = instance_rng(11, 0);
    for class in [IcClass::Training, IcClass::Testing] {
        let inst = sample_instance(PdeFamily::FokkerPlanck, &ParamRange::training(), class, &mut rng).unwrap();
        let cfg = SolveConfig::for_family(PdeFamily::FokkerPlanck);
        let rows = solve_fine(&inst, &cfg).unwrap();
        let h = inst.x_final / cfg.nx_int as f64;
        let m0: f64 = rows[0].iter().sum::<f64>() * h;
        for r in &rows {
            let m: f64 = r.iter().sum::<f64>() * h;
            assert!((m - m0).abs() < 1e-8, "{m} vs {m0}");
            assert!(r.iter().all(|&v| v >= -1e-12));
        }
    }
}

fn riemann_instance(family: PdeFamily, kind: RiemannKind, seed: u64) -> prose_core::pde_zoo::PdeInstance {
    let mut rng = instance_rng(seed, 1);
    sample_instance(family, &ParamRange::training(), IcClass::Riemann(kind), &mut rng).unwrap()
}

fn total_variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[test]
fn burgers_riemann_entropy_behaviour() {
    for seed in 0..4 {
        let inst = riemann_instance(PdeFamily::InviscidF1, RiemannKind::Shock, seed);
        assert_eq!(inst.boundary, Boundary::Neumann);
        let traj = solve(&inst, &SolveConfig::for_family(inst.family)).unwrap();
        for i in 0..traj.nt() {
            let row = traj.row(i);
            assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-9), "shock profile not monotone");
        }
        // Early on the shock is inside the domain and stays sharp.
        let early = traj.row(1);
        let jump = early[0] - early[127];
        let steepest = early.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        assert!(steepest > 0.3 * jump, "{steepest} vs {jump}");

        let inst = riemann_instance(PdeFamily::InviscidF1, RiemannKind::Rarefaction, seed);
        let traj = solve(&inst, &SolveConfig::for_family(inst.family)).unwrap();
        let tv: Vec<f64> = (0..traj.nt()).map(|i| total_variation(traj.row(i))).collect();
        assert!(tv.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        for i in 0..traj.nt() {
            assert!(traj.row(i).windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
        // The fan spreads: by t = 2 no cell-to-cell step exceeds a small fraction.
        let IcKind::Riemann { levels, .. } = &inst.ic.kind else { unreachable!() };
        let last = traj.row(traj.nt() - 1);
        let steepest = last.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(steepest < 0.25 * (levels[1] - levels[0]), "{steepest}");
    }
}

#[test]
fn downsampled_matches_finer_internal_grid() {
    let mut rng = instance_rng(2, 2);
    for family in [PdeFamily::Heat, PdeFamily::DiffReactR1, PdeFamily::Kdv] {
        let inst = sample_instance(family, &ParamRange::training(), IcClass::Training, &mut rng).unwrap();
        let a = solve(&inst, &SolveConfig::for_family(family).with_nx(256)).unwrap();
        let b = solve(&inst, &SolveConfig::for_family(family).with_nx(512)).unwrap();
        let err = rel_l2(&a.values, &b.values);
        assert!(err < 2e-2, "{family}: {err}");
    }
}

#[test]
fn noise_statistics_and_determinism() {
    let inst = nominal_instance(PdeFamily::Heat, 1);
    let traj = solve(&inst, &SolveConfig::for_family(PdeFamily::Heat)).unwrap();
    assert_eq!(add_noise(&traj, 0.0, 9), traj);
    assert_eq!(add_noise(&traj, 0.02, 9), add_noise(&traj, 0.02, 9));
    let sigma = traj.std();
    let (mut sum2, mut count) = (0.0, 0usize);
    for seed in 0..1000 {
        let noisy = add_noise(&traj, 0.02, seed);
        assert!(noisy.noisy);
        assert_eq!(noisy.target_rows(), traj.target_rows());
        for (a, b) in noisy.input_rows().iter().zip(traj.input_rows()) {
            sum2 += (a - b).powi(2);
            count += 1;
        }
    }
    let ratio = (sum2 / count as f64).sqrt() / sigma;
    assert!((ratio - 0.02).abs() < 0.002, "{ratio}");
}

#[test]
fn config_and_backend_checks() {
    let inst = nominal_instance(PdeFamily::Heat, 0);
    let wrong = SolveConfig::for_family(PdeFamily::Kdv);
    assert!(matches!(solve(&inst, &wrong), Err(SolverError::BackendMismatch { .. })));
    let coarse = SolveConfig::for_family(PdeFamily::Heat).with_nx(128);
    assert!(matches!(solve(&inst, &coarse), Err(SolverError::InvalidConfig(_))));
    let odd = SolveConfig::for_family(PdeFamily::Heat).with_nx(300);
    assert!(matches!(solve(&inst, &odd), Err(SolverError::InvalidConfig(_))));
    let mut cfl = SolveConfig::for_family(PdeFamily::Heat);
    cfl.cfl = 1.5;
    assert!(solve(&inst, &cfl).is_err());
}

#[test]
fn every_family_produces_finite_trajectories() {
    let mut failures = vec![];
    for family in PdeFamily::ALL {
        for (k, class) in [IcClass::Training, IcClass::Testing].into_iter().enumerate() {
            let mut rng = instance_rng(100 + k as u64, family as u64);
            let inst = sample_instance(family, &ParamRange::training(), class, &mut rng).unwrap();
            let t0 = std::time::Instant::now();
            match solve_with_stats(&inst, &SolveConfig::for_family(family)) {
                Ok((traj, stats)) => {
                    assert_eq!(traj.values.len(), 32 * 128);
                    assert!(traj.values.iter().all(|v| v.is_finite()));
                    let umax = traj.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    eprintln!(
                        "{family:<14} {class:?} steps={:<8} max|u|={umax:.3} {:?}",
                        stats.steps,
                        t0.elapsed()
                    );
                }
                Err(e) => failures.push(format!("{family} {class:?}: {e}")),
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
