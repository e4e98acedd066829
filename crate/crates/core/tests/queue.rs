use ordercone::field::Interpretation;
use ordercone::pde::{fd_solve_scalar, SolverConfig};
use ordercone::queue::{compare_cdf, simulate_workload, InitialWorkload, SimConfig};
use ordercone::{ModelParams, Profile};

fn mm1(n_paths: usize, t_end: f64, initial: InitialWorkload) -> SimConfig {
    SimConfig {
        n_paths,
        t_end,
        seed: 2024,
        initial,
        v: 1.0,
        a: 1.0,
        lambda: 1.5,
        beta: 1.5,
        x_grid: (0..=32).map(|i| 0.25 * i as f64).collect(),
    }
}

fn stationary(x: f64) -> f64 {
    1.0 - 2.0 / 3.0 * (-0.5 * x).exp()
}

#[test]
fn stationary_start_stays_stationary() {
    let cfg = mm1(200_000, 5.0, InitialWorkload::AtomPlusExponential { p_busy: 2.0 / 3.0, rate: 0.5 });
    let emp = simulate_workload(&cfg).unwrap();
    assert_eq!(emp.total_weight, 1.0);
    for (i, &x) in emp.x.iter().enumerate() {
        let z = (emp.cdf[i] - stationary(x)) / emp.stderr[i];
        assert!(z.abs() < 4.0, "x = {x}: z = {z}");
    }
}

#[test]
fn empty_start_relaxes_to_the_stationary_law() {
    let emp = simulate_workload(&mm1(200_000, 300.0, InitialWorkload::Fixed(0.0))).unwrap();
    for (i, &x) in emp.x.iter().enumerate() {
        let z = (emp.cdf[i] - stationary(x)) / emp.stderr[i];
        assert!(z.abs() < 4.0, "x = {x}: z = {z}");
    }
}

#[test]
fn standard_error_halves_with_four_times_the_paths() {
    let small = simulate_workload(&mm1(20_000, 10.0, InitialWorkload::Fixed(0.0))).unwrap();
    let large = simulate_workload(&mm1(80_000, 10.0, InitialWorkload::Fixed(0.0))).unwrap();
    for i in [0, 4, 8, 16] {
        let ratio = small.stderr[i] / large.stderr[i];
        assert!((1.8..=2.2).contains(&ratio), "index {i}: ratio {ratio}");
    }
}

#[test]
fn seeds_change_the_sample() {
    let a = simulate_workload(&mm1(10_000, 5.0, InitialWorkload::Fixed(0.0))).unwrap();
    let mut cfg = mm1(10_000, 5.0, InitialWorkload::Fixed(0.0));
    cfg.seed += 1;
    let b = simulate_workload(&cfg).unwrap();
    assert_ne!(a.cdf, b.cdf);
}

#[test]
fn defective_kernel_matches_the_weighted_fd_solution() {
    // Surviving weight E[(beta / lambda)^N(t)] = exp(-a t (1 - beta / lambda)),
    // and the weighted CDF solves the scalar equation with a defective kernel.
    let t_end = 2.0;
    let mut cfg = mm1(200_000, t_end, InitialWorkload::Fixed(0.0));
    cfg.beta = 0.9;
    let emp = simulate_workload(&cfg).unwrap();
    let want = (-t_end * (1.0 - 0.6f64)).exp();
    assert!((emp.total_weight - want).abs() < 5e-3, "{} vs {want}", emp.total_weight);

    let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let mut scfg = SolverConfig::new(0.01, 0.01, 0.0, 20.0, t_end);
    scfg.interpretation = Interpretation::Cumulative;
    // Beyond x_max the CDF is the surviving weight.
    let inflow_t: Vec<f64> = (0..=200).map(|i| 0.01 * i as f64).collect();
    let inflow = Profile::from_fn(&inflow_t, |t| (-t * 0.4).exp()).unwrap();
    let field = fd_solve_scalar(&p, 1.5, 0.9, &Profile::constant(1.0), &inflow, &scfg).unwrap();
    let cmp = compare_cdf(&emp, &field, t_end).unwrap();
    assert!(cmp.flagged.is_empty(), "z = {:?}", cmp.z_scores);
    assert!(cmp.sup_distance < 5e-3);
}
