//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use ordercone::field::{decouple, recombine, Interpretation};
use ordercone::laplace::{bromwich_invert, green_kernel, respond, Component, ConeSide, ContourPair, ContourSpec, GreenKernel, KernelGrid, SignalWaveform};
use ordercone::metrics::{kl_distance, tau_grid};
use ordercone::model::clearing_curves;
use ordercone::pde::{fd_solve, fd_solve_scalar, SolverConfig};
use ordercone::queue::{compare_cdf, simulate_workload, InitialWorkload, SimConfig};
use ordercone::{BoundaryConditions, KernelSpec, ModelParams, Profile};

type Check = Result<String, String>;

fn reference_params() -> (ModelParams, KernelSpec) {
    (
        ModelParams::nondimensional(0.75).unwrap(),
        KernelSpec::new(1.5, 0.6, 0.3).unwrap(),
    )
}

fn grid(lo: f64, hi: f64, dx: f64) -> Vec<f64> {
    let n = ((hi - lo) / dx).round() as usize;
    (0..=n).map(|i| lo + dx * i as f64).collect()
}

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

/// The default bundle kernel: x in [-10, 10], t up to 10 / 0.75, spacing 0.05.
fn bundle_kernel() -> &'static GreenKernel {
    static K: OnceLock<GreenKernel> = OnceLock::new();
    K.get_or_init(|| {
        let (p, s) = reference_params();
        let g = KernelGrid::covering(-10.0, 10.0, 0.05, 13.4, 0.05).unwrap();
        green_kernel(g, &p, &s, &ContourPair::deformed(&s, 128)).unwrap()
    })
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cross_path() -> Check {
    let (p, s) = reference_params();
    let k = bundle_kernel();
    if k.n_unconverged() > 0 {
        return Err(format!("{} kernel nodes unconverged", k.n_unconverged()));
    }
    let xs = grid(-6.0, 6.0, 0.05);
    let f1 = bump(0.0, 1.0);
    let f2 = |x| 0.5 * bump(0.5, 1.0)(x);
    let input = SignalWaveform::from_fns(&xs, &f1, f2).unwrap();
    let dx = 0.05 / 8.0;
    let fine = grid(-12.0, 12.0, dx);
    let bc = BoundaryConditions::initial_only(Profile::from_fn(&fine, &f1).unwrap(), Profile::from_fn(&fine, f2).unwrap());
    let fd = fd_solve(&p, &s, &bc, &SolverConfig::new(dx, dx / 0.75, -12.0, 12.0, 3.0)).unwrap();
    let mut worst = 0.0_f64;
    for t in [1.0, 2.0, 3.0] {
        let spectral = respond(&input, k, t).unwrap();
        let (a, b) = (fd.profile_at(0, t).unwrap(), fd.profile_at(1, t).unwrap());
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &x) in xs.iter().enumerate() {
            let j = ((x + 12.0) / dx).round() as usize;
            num += (spectral.phi1[i] - a[j]).powi(2) + (spectral.phi2[i] - b[j]).powi(2);
            den += spectral.phi1[i].powi(2) + spectral.phi2[i].powi(2);
        }
        worst = worst.max((num / den).sqrt());
    }
    verdict(worst < 0.05, format!("max relative L2 over t = 1, 2, 3 is {worst:.4} (< 0.05)"))
}

fn queueing_oracle() -> Check {
    let exact = |x: f64| 1.0 - 2.0 / 3.0 * (-0.5 * x).exp();
    let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let dx = 0.01;
    let mut cfg = SolverConfig::new(dx, dx, 0.0, 40.0, 300.0);
    cfg.snapshot_every = 1000;
    cfg.interpretation = Interpretation::Cumulative;
    let one = Profile::constant(1.0);
    let field = fd_solve_scalar(&p, 1.5, 1.5, &one, &one, &cfg).unwrap();
    let last = field.nt() - 1;
    let fd_sup = field
        .x
        .iter()
        .zip(field.snapshot(0, last))
        .map(|(&x, &f)| (f - exact(x)).abs())
        .fold(0.0_f64, f64::max);

    let emp = simulate_workload(&SimConfig {
        n_paths: 1_000_000,
        t_end: 300.0,
        seed: 20240601,
        initial: InitialWorkload::Fixed(0.0),
        v: 1.0,
        a: 1.0,
        lambda: 1.5,
        beta: 1.5,
        x_grid: grid(0.0, 8.0, 0.25),
    })
    .unwrap();
    let z_exact = emp
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| ((emp.cdf[i] - exact(x)) / emp.stderr[i]).abs())
        .fold(0.0_f64, f64::max);
    let cmp = compare_cdf(&emp, &field, 300.0).unwrap();
    let z_fd = cmp.z_scores.iter().fold(0.0_f64, |m, z| m.max(z.abs()));
    verdict(
        fd_sup < 0.01 && z_exact < 3.0 && z_fd < 3.0,
        format!("FD sup error {fd_sup:.2e} (< 1e-2); MC max |z| {z_exact:.2} vs exact, {z_fd:.2} vs FD (< 3)"),
    )
}

fn inversion_pairs() -> Check {
    let contour = ContourSpec::truncated_line(0.0, 64, ConeSide::PostCone);
    let errs = [
        (bromwich_invert(|s| 1.0 / (s + 1.5), 1.0, &contour).unwrap() - (-1.5f64).exp()).abs(),
        (bromwich_invert(|s| 1.0 / s, 1.0, &contour).unwrap() - 1.0).abs(),
        (bromwich_invert(|s| 1.0 / ((s + 1.5) * (s + 1.5)), 2.0, &contour).unwrap() - 2.0 * (-3.0f64).exp()).abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    verdict(worst < 1e-6, format!("worst absolute error {worst:.1e} (< 1e-6)"))
}

fn decoupling() -> Check {
    let (p, spec) = reference_params();
    let dx = 0.02;
    let xs = grid(-8.0, 8.0, dx);
    let f1 = Profile::from_fn(&xs, bump(0.0, 1.0)).unwrap();
    let f2 = Profile::from_fn(&xs, |x| 0.5 * bump(0.5, 1.0)(x) - 0.2 * bump(-1.0, 0.5)(x)).unwrap();
    let cfg = SolverConfig::new(dx, dx / 0.75, -8.0, 8.0, 3.0);
    let coupled = fd_solve(&p, &spec, &BoundaryConditions::initial_only(f1.clone(), f2.clone()), &cfg).unwrap();
    let qp = Profile::new(xs.clone(), f1.values().iter().zip(f2.values()).map(|(a, b)| a + b).collect()).unwrap();
    let qm = Profile::new(xs, f1.values().iter().zip(f2.values()).map(|(a, b)| a - b).collect()).unwrap();
    let zero = Profile::zero();
    let plus = fd_solve_scalar(&p, spec.lambda(), spec.plus_amplitude(), &qp, &zero, &cfg).unwrap();
    let minus = fd_solve_scalar(&p, spec.lambda(), spec.minus_amplitude(), &qm, &zero, &cfg).unwrap();
    let back = recombine(&plus, &minus).unwrap();
    let (dp, dm) = decouple(&coupled).unwrap();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let worst = [
        diff(&back.components[0], &coupled.components[0]),
        diff(&back.components[1], &coupled.components[1]),
        diff(&dp.components[0], &plus.components[0]),
        diff(&dm.components[0], &minus.components[0]),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    verdict(worst < 1e-10, format!("max difference {worst:.1e} (< 1e-10)"))
}

fn causality() -> Check {
    let k = bundle_kernel();
    let v = k.params.v();
    let margin = 3.0 * k.grid.dt;
    let global = k.max_abs();
    let mut outside = 0.0_f64;
    for it in 0..k.grid.nt {
        let t = k.grid.t(it);
        for ix in 0..k.grid.nx {
            if k.grid.x(ix) + v * (t + margin) < 0.0 {
                outside = outside.max(k.value(it, ix).iter().fold(0.0_f64, |m, c| m.max(c.abs())));
            }
        }
    }
    let ratio = outside / global;
    verdict(ratio < 1e-3, format!("max |K| outside the cone / global max = {ratio:.1e} (< 1e-3)"))
}

fn clearing() -> Check {
    let (p, s) = reference_params();
    let (a, v, lam) = (p.a(), p.v(), s.lambda());
    // Determinant of the forward matrix on the real axis, written out directly.
    let det = |s_: f64, tau: f64| {
        let d = tau - v * s_ + a - a * s.beta1() / (s_ + lam);
        let o = a * s.beta2() / (s_ + lam);
        d * d - o * o
    };
    let mut worst = 0.0_f64;
    let mut count = 0;
    for range in [(-1.0, 3.0), (-6.0, -2.0)] {
        let (plus, minus) = clearing_curves(range, 401, &p, &s).unwrap();
        for &(s_, tau) in plus.samples.iter().chain(&minus.samples) {
            worst = worst.max(det(s_, tau).abs());
            count += 1;
        }
    }
    let (plus, minus) = clearing_curves((0.0, 0.0), 1, &p, &s).unwrap();
    let (tp, tm) = (plus.samples[0].1, minus.samples[0].1);
    let anchors = (tp + 0.4).abs() < 1e-12 && (tm + 0.8).abs() < 1e-12;
    verdict(
        worst < 1e-10 && anchors,
        format!("max |P| {worst:.1e} over {count} samples (< 1e-10); tau+(0) = {tp}, tau-(0) = {tm}"),
    )
}

fn kl_peak() -> Check {
    let tau = tau_grid(0.0, 6.0, 0.05).unwrap();
    let d = kl_distance(bundle_kernel(), &tau, 0.75, Component::K11, (-10.0, 10.0)).unwrap();
    let peak = tau[d.argmax_raw().unwrap()];
    let nonneg = d.values.iter().all(|v| *v >= 0.0);
    let zero = d.values[0] == 0.0 && d.values_raw[0] == 0.0;
    verdict(
        (1.0..=3.0).contains(&peak) && nonneg && zero,
        format!("peak at tau = {peak:.2} (in [1, 3]); D(0) = {}; clipped min {:.1e}", d.values_raw[0], d.values.iter().cloned().fold(f64::MAX, f64::min)),
    )
}

fn advection_order() -> Check {
    let p = ModelParams::new(0.0, 0.75, 1.0).unwrap();
    let (_, spec) = reference_params();
    let f = bump(1.0, 1.5);
    let t_end = 2.0;
    let errors: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dx| {
            let init = Profile::from_fn(&grid(-4.0, 4.0, dx / 4.0), &f).unwrap();
            let bc = BoundaryConditions::initial_only(init.clone(), init);
            let field = fd_solve(&p, &spec, &bc, &SolverConfig::new(dx, 0.5 * dx / 0.75, -4.0, 4.0, t_end)).unwrap();
            let last = field.nt() - 1;
            let sq: f64 = field
                .x
                .iter()
                .zip(field.snapshot(0, last))
                .map(|(&x, &u)| (u - f(x + 0.75 * t_end)).powi(2))
                .sum();
            (sq * dx).sqrt()
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));
    verdict(ok, format!("L2 error ratios under halving {ratios:.3?} (in [1.7, 2.3])"))
}

const SMALL_CONFIG: &str = r#"
[green]
x_min = -8.0
x_max = 8.0
dx = 0.1
t_max = 10.0
dt = 0.1
n_nodes = 128

[signal]
x_min = -3.0
x_max = 3.0
dx = 0.1

[solver]
x_min = -8.0
x_max = 8.0
dx = 0.0125
t_end = 2.0
output_times = [1.0, 2.0]

[respond]
times = [1.0, 2.0]

[sim]
n_paths = 20000
t_end = 5.0

[metrics]
x_lo = -6.0
x_hi = 6.0
tau_max = 2.0
tau_step = 0.25
"#;

fn cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ordercone"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn outputs_of(manifest: &Path) -> Vec<PathBuf> {
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    m["outputs"].as_array().unwrap().iter().map(|p| PathBuf::from(p.as_str().unwrap())).collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), SMALL_CONFIG).unwrap();
    let runs: [(&[&str], &str); 8] = [
        (&["green", "--out", "k"], "k.manifest.json"),
        (&["respond", "--kernel", "k.bin", "--out", "r.csv"], "r.manifest.json"),
        (&["fd", "--out", "f.csv"], "f.manifest.json"),
        (&["simulate", "--out", "s.csv"], "s.manifest.json"),
        (&["metrics", "--kernel", "k.bin", "--metric", "kl", "--out", "m.csv"], "m.manifest.json"),
        (&["clearing", "--s-range", "-1:3:41", "--out", "c.csv"], "c.manifest.json"),
        (&["figures", "--outdir", "figs"], "figs/manifest.json"),
        (&["crossval", "--outdir", "cv"], "cv/manifest.json"),
    ];
    let mut compared = 0;
    for (i, (args, manifest)) in runs.iter().enumerate() {
        let mut full = vec!["--config", "small.toml", "--threads", "1"];
        full.extend_from_slice(args);
        cli(&full, dir).map_err(|e| format!("first run failed: {e}"))?;
        let manifest = dir.join(manifest);
        let replay = dir.join(format!("replay{i}"));
        let threads = "3";
        cli(
            &["--threads", threads, "rerun", manifest.to_str().unwrap(), "--outdir", replay.to_str().unwrap()],
            dir,
        )
        .map_err(|e| format!("rerun failed: {e}"))?;
        for original in outputs_of(&manifest) {
            let copy = replay.join(original.file_name().unwrap());
            let (a, b) = (std::fs::read(&original).unwrap(), std::fs::read(&copy).unwrap());
            if a != b {
                return Err(format!("{} differs after rerun", original.display()));
            }
            compared += 1;
        }
    }
    Ok(format!("{} pipelines re-run from manifests with a different thread count; {compared} output files byte-identical", runs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("cross-path equivalence", cross_path),
        ("queueing oracle", queueing_oracle),
        ("Laplace inversion pairs", inversion_pairs),
        ("decoupling", decoupling),
        ("causality", causality),
        ("clearing curves", clearing),
        ("KL peak", kl_peak),
        ("advection order", advection_order),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
