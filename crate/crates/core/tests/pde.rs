use ordercone::field::{decouple, recombine, Interpretation};
use ordercone::pde::{fd_solve, fd_solve_scalar, ConvolutionMethod, SolverConfig};
use ordercone::{BoundaryConditions, Error, KernelSpec, ModelParams, Profile};

fn bump(center: f64, half_width: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        let z = (x - center) / half_width;
        if z.abs() < 1.0 {
            (0.5 * std::f64::consts::PI * z).cos().powi(2)
        } else {
            0.0
        }
    }
}

fn sampled(f: impl Fn(f64) -> f64, lo: f64, hi: f64, dx: f64) -> Profile {
    let n = ((hi - lo) / dx).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + dx * i as f64).collect();
    Profile::from_fn(&grid, f).unwrap()
}

fn reference_params() -> (ModelParams, KernelSpec) {
    (
        ModelParams::nondimensional(0.75).unwrap(),
        KernelSpec::new(1.5, 0.6, 0.3).unwrap(),
    )
}

fn l2(a: &[f64], b: &[f64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dx).sqrt()
}

#[test]
fn advection_converges_at_first_order() {
    // a = 0: pure transport p(x, t) = f(x + v t), run at CFL 1/2.
    let p = ModelParams::new(0.0, 0.75, 1.0).unwrap();
    let spec = KernelSpec::new(1.5, 0.6, 0.3).unwrap();
    let f = bump(1.0, 1.5);
    let t_end = 2.0;
    let errors: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dx| {
            let init = sampled(&f, -4.0, 4.0, dx / 4.0);
            let bc = BoundaryConditions::initial_only(init.clone(), init);
            let cfg = SolverConfig::new(dx, 0.5 * dx / 0.75, -4.0, 4.0, t_end);
            let field = fd_solve(&p, &spec, &bc, &cfg).unwrap();
            let last = field.nt() - 1;
            assert!((field.t[last] - t_end).abs() < 1e-12);
            let exact: Vec<f64> = field.x.iter().map(|&x| f(x + 0.75 * t_end)).collect();
            l2(field.snapshot(0, last), &exact, dx)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn unit_courant_number_shifts_exactly() {
    let p = ModelParams::new(0.0, 0.5, 1.0).unwrap();
    let spec = KernelSpec::free(1.0).unwrap();
    let dx = 0.05;
    let f = |x: f64| (-(x * x)).exp() * (3.0 * x).sin();
    let init = sampled(f, -5.0, 5.0, dx);
    let cfg = SolverConfig::new(dx, dx / 0.5, -5.0, 5.0, 2.0);
    let field = fd_solve(&p, &spec, &BoundaryConditions::initial_only(init.clone(), init), &cfg).unwrap();
    let last = field.nt() - 1;
    for (i, &x) in field.x.iter().enumerate() {
        let want = if x + 1.0 <= 5.0 + 1e-9 { f(x + 1.0) } else { 0.0 };
        assert!((field.value(0, last, i) - want).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn coupled_solve_equals_recombined_modes() {
    let (p, spec) = reference_params();
    let dx = 0.02;
    let f1 = sampled(bump(0.0, 1.0), -8.0, 8.0, dx);
    let f2 = sampled(|x| 0.5 * bump(0.5, 1.0)(x) - 0.2 * bump(-1.0, 0.5)(x), -8.0, 8.0, dx);
    let cfg = SolverConfig::new(dx, dx / 0.75, -8.0, 8.0, 3.0);
    let coupled = fd_solve(&p, &spec, &BoundaryConditions::initial_only(f1.clone(), f2.clone()), &cfg).unwrap();

    let grid = f1.grid().to_vec();
    let qp = Profile::new(grid.clone(), f1.values().iter().zip(f2.values()).map(|(a, b)| a + b).collect()).unwrap();
    let qm = Profile::new(grid, f1.values().iter().zip(f2.values()).map(|(a, b)| a - b).collect()).unwrap();
    let zero = Profile::zero();
    let plus = fd_solve_scalar(&p, spec.lambda(), spec.plus_amplitude(), &qp, &zero, &cfg).unwrap();
    let minus = fd_solve_scalar(&p, spec.lambda(), spec.minus_amplitude(), &qm, &zero, &cfg).unwrap();
    let back = recombine(&plus, &minus).unwrap();
    for c in 0..2 {
        for (a, b) in back.components[c].iter().zip(&coupled.components[c]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    let (dp, dm) = decouple(&coupled).unwrap();
    for (a, b) in dp.components[0].iter().zip(&plus.components[0]) {
        assert!((a - b).abs() < 1e-10);
    }
    for (a, b) in dm.components[0].iter().zip(&minus.components[0]) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn solution_stays_within_the_growth_bound() {
    // With kernel mass m the sup norm obeys |p(t)| <= B exp(a (m - 1) t).
    let p = ModelParams::nondimensional(0.9).unwrap();
    let spec = KernelSpec::new(1.0, 0.7, 0.3).unwrap();
    let dx = 0.01;
    let f1 = sampled(|x| bump(0.0, 2.0)(x) - 0.5, -6.0, 6.0, dx);
    let f2 = sampled(|x| (2.0 * x).sin(), -6.0, 6.0, dx);
    let bc = BoundaryConditions::new(f1, f2, Profile::constant(0.3), Profile::constant(-0.7));
    let cfg = SolverConfig::new(dx, 0.8 * dx / 0.9, -6.0, 6.0, 4.0);
    let field = fd_solve(&p, &spec, &bc, &cfg).unwrap();
    let b = bc.bound();
    for it in 0..field.nt() {
        for c in 0..2 {
            let m = field.snapshot(c, it).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(m <= b * (1.0 + 1e-12));
        }
    }
}

#[test]
fn mode_mass_decays_at_the_kernel_rate() {
    let (p, spec) = reference_params();
    let dx = 0.005;
    let f = sampled(bump(0.0, 1.0), -10.0, 20.0, dx);
    let cfg = SolverConfig::new(dx, dx / 0.75, -10.0, 20.0, 3.0);
    let field = fd_solve(&p, &spec, &BoundaryConditions::initial_only(f.clone(), f), &cfg).unwrap();
    let mass0: f64 = field.snapshot(0, 0).iter().sum::<f64>() * dx;
    let last = field.nt() - 1;
    let mass: f64 = field.snapshot(0, last).iter().sum::<f64>() * dx;
    let want = mass0 * ((0.9 / 1.5 - 1.0) * 3.0f64).exp();
    assert!((mass - want).abs() < 1e-4 * want, "{mass} vs {want}");
}

#[test]
fn queue_limit_reaches_the_stationary_workload_cdf() {
    // Full-mass scalar kernel with v = 1: P(W <= x) = 1 - rho exp(-(lambda - a / v) x).
    let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let dx = 0.01;
    let mut cfg = SolverConfig::new(dx, dx, 0.0, 40.0, 150.0);
    cfg.snapshot_every = 5000;
    cfg.interpretation = Interpretation::Cumulative;
    let one = Profile::constant(1.0);
    let field = fd_solve_scalar(&p, 1.5, 1.5, &one, &one, &cfg).unwrap();
    let last = field.nt() - 1;
    let worst = field
        .x
        .iter()
        .zip(field.snapshot(0, last))
        .map(|(&x, &f)| (f - (1.0 - 2.0 / 3.0 * (-0.5 * x).exp())).abs())
        .fold(0.0_f64, f64::max);
    assert!(worst < 0.01, "sup error {worst}");
    assert!(field.is_nondecreasing(0, 1e-12));
}

#[test]
fn recursion_and_direct_quadrature_agree() {
    let (p, spec) = reference_params();
    let dx = 0.05;
    let f = sampled(bump(0.0, 1.0), -5.0, 5.0, dx);
    let mut cfg = SolverConfig::new(dx, dx / 0.75, -5.0, 5.0, 2.0);
    let bc = BoundaryConditions::initial_only(f.clone(), f);
    let a = fd_solve(&p, &spec, &bc, &cfg).unwrap();
    cfg.method = ConvolutionMethod::DirectQuadrature;
    let b = fd_solve(&p, &spec, &bc, &cfg).unwrap();
    for (x, y) in a.components[0].iter().zip(&b.components[0]) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn rejects_unstable_time_steps() {
    let (p, spec) = reference_params();
    let cfg = SolverConfig::new(0.01, 0.02, -1.0, 1.0, 1.0);
    let bc = BoundaryConditions::default();
    assert!(matches!(fd_solve(&p, &spec, &bc, &cfg), Err(Error::InvalidConfig(_))));
}
