//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the
//! terminal. The process fails if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use nsslice::analysis::{apriori_bounds, ledger_from_run, uniqueness_experiment, Perturbation, Problem};
use nsslice::cli::TIMESTAMP_KEY;
use nsslice::fieldio::{write_field, Encoding, Field, TimeSeriesField};
use nsslice::galerkin::manufactured::manufactured_order;
use nsslice::galerkin::{
    assemble, assemble_with_coupling, coercivity_check, integrate, run_mms, stable_dt, FnForcing, GalerkinState,
    ManufacturedForcing, ManufacturedSolution, OperatorTensors, SpectralBasis, TimeGrid, ZeroForcing,
};
use nsslice::geometry::{make_chart, Hyperplane, DEFAULT_CHART_TOLERANCE};
use nsslice::quadform::{
    box_lambda1, canonicalize_matrix, eigen_inertia, quadform_value, uniqueness_criterion, Inertia, Mat3, Method,
    DEFAULT_PIVOT_TOLERANCE,
};
use nsslice::stratify::{stratification_verdict, IndicatorGrid, OracleStatus, StratifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const AXIS: (f64, f64) = (0.0, 0.0);

/// Chart of the plane `x + y + z = 1`, where both projected coefficients are one.
fn oblique_tensors(basis: &SpectralBasis) -> OperatorTensors {
    let chart = make_chart(&Hyperplane::new([1.0, 1.0, 1.0], 1.0).unwrap(), DEFAULT_CHART_TOLERANCE).unwrap();
    assert_eq!((chart.alpha1, chart.alpha2), (1.0, 1.0));
    assemble(basis, &chart, 0).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, t: &OperatorTensors) -> DVector<f64> {
    let basis = t.basis();
    let raw = DVector::from_fn(t.state_len(), |i, _| {
        let (m, n) = basis.modes()[i % basis.len()];
        rng.random_range(-1.0..1.0) / (m * m + n * n) as f64
    });
    t.project(&raw)
}

fn skew_symmetry() -> Outcome {
    let basis = SpectralBasis::new([8, 8], [1.0, 1.0]).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (name, t) in [("axis", assemble_with_coupling(&basis, AXIS, 0)), ("oblique", oblique_tensors(&basis))] {
        for _ in 0..100 {
            let u = random_state(&mut rng, &t);
            let norm = t.mass_norm_sq(&u).sqrt();
            let ratio = t.trilinear_value(&u, &u, &u).abs() / norm.powi(3);
            ensure(ratio <= 1e-10, format!("{name}: |b(u,u,u)|/|u|^3 = {ratio:e}"))?;
            worst = worst.max(ratio);
        }
    }
    Ok(format!("200 states, max |b(u,u,u)|/|u|^3 = {worst:.2e}"))
}

fn mms_convergence() -> Outcome {
    let m = ManufacturedSolution::new([1.0, 1.0], AXIS, 0.1);
    let grid = |dt| TimeGrid::new(dt, 0.5).unwrap();
    let coarse = run_mms(&m, 8, grid(0.002)).map_err(err)?;
    let runs: Vec<_> = [0.004, 0.002, 0.001]
        .iter()
        .map(|dt| run_mms(&m, 16, grid(*dt)))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let ratio = coarse.error / runs[1].error;
    let t = &runs[0].tensors;
    let last = |k: usize| &runs[k].trace.last().unwrap().coeffs;
    let d01 = t.mass_norm_sq(&(last(0) - last(1))).sqrt();
    let d12 = t.mass_norm_sq(&(last(1) - last(2))).sqrt();
    let order = (d01 / d12).log2();
    let detail = format!(
        "error N=8 {:.3e}, N=16 {:.3e}, ratio {ratio:.1}; temporal order {order:.2}",
        coarse.error, runs[1].error
    );
    ensure(ratio >= 10.0 && order >= 3.8, detail.clone())?;
    Ok(detail)
}

fn energy_identity() -> Outcome {
    let m = ManufacturedSolution::new([1.0, 1.0], AXIS, 0.1);
    let mut residuals = Vec::new();
    for dt in [0.004, 0.002, 0.001] {
        let r = run_mms(&m, 12, TimeGrid::new(dt, 0.5).unwrap()).map_err(err)?;
        let f = ManufacturedForcing {
            solution: &m,
            basis: r.tensors.basis(),
            order: manufactured_order(r.tensors.basis(), m.power),
        };
        residuals.push(ledger_from_run(&r.trace, &r.tensors, &f, m.nu).map_err(err)?.max_abs_residual());
    }
    let orders = [(residuals[0] / residuals[1]).log2(), (residuals[1] / residuals[2]).log2()];
    let min_order = orders[0].min(orders[1]);

    // unforced decay from random data on both charts
    let basis = SpectralBasis::new([8, 8], [1.0, 1.0]).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = ZeroForcing::new(&basis);
    let mut monotone = true;
    for t in [assemble_with_coupling(&basis, AXIS, 0), oblique_tensors(&basis)] {
        let u0 = random_state(&mut rng, &t);
        let dt = 0.002f64.min(0.5 * stable_dt(&t, 0.1));
        let trace = integrate(GalerkinState::new(u0, 0.0), &t, &f, 0.1, TimeGrid::new(dt, 0.5).unwrap()).map_err(err)?;
        monotone &= ledger_from_run(&trace, &t, &f, 0.1).map_err(err)?.is_monotone(1e-12);
    }
    let detail = format!("residual order {:.2}, {:.2}; unforced energy monotone: {monotone}", orders[0], orders[1]);
    ensure(min_order >= 1.9 && monotone, detail.clone())?;
    Ok(detail)
}

fn apriori_inequality() -> Outcome {
    let mut runs = 0;
    let mut worst = f64::INFINITY;
    for c in [AXIS, (-0.5, -0.5)] {
        let m = ManufacturedSolution::new([1.0, 1.0], c, 0.1);
        for n in [8, 12] {
            let r = run_mms(&m, n, TimeGrid::new(0.002, 0.5).unwrap()).map_err(err)?;
            let f = ManufacturedForcing {
                solution: &m,
                basis: r.tensors.basis(),
                order: manufactured_order(r.tensors.basis(), m.power),
            };
            let l = ledger_from_run(&r.trace, &r.tensors, &f, m.nu).map_err(err)?;
            l.check().map_err(|e| format!("manufactured N={n} c={c:?}: {e}"))?;
            apriori_bounds(&l).map_err(err)?;
            worst = worst.min(l.rows.iter().map(|r| r.margin / l.tolerance()).fold(f64::INFINITY, f64::min));
            runs += 1;
        }
    }
    let basis = SpectralBasis::new([8, 8], [1.0, 1.0]).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed_run in 0..4 {
        let t = if seed_run % 2 == 0 { assemble_with_coupling(&basis, AXIS, 0) } else { oblique_tensors(&basis) };
        let u0 = random_state(&mut rng, &t);
        let a = random_state(&mut rng, &t) * 20.0;
        let b = random_state(&mut rng, &t) * 20.0;
        let w = rng.random_range(1.0..6.0);
        let forcing = FnForcing(move |s: f64| &a + &b * (w * s).sin());
        let nu = [0.1, 0.05][seed_run / 2];
        // rough random data decays fastest in the first step; the 1e-8
        // accumulation tolerance needs that transient resolved in time
        let dt = 0.002f64.min(0.04 * stable_dt(&t, nu));
        let trace = integrate(GalerkinState::new(u0, 0.0), &t, &forcing, nu, TimeGrid::new(dt, 0.5).unwrap()).map_err(err)?;
        let l = ledger_from_run(&trace, &t, &forcing, nu).map_err(err)?;
        l.check().map_err(|e| format!("random forcing run {seed_run}: {e}"))?;
        apriori_bounds(&l).map_err(err)?;
        worst = worst.min(l.rows.iter().map(|r| r.margin / l.tolerance()).fold(f64::INFINITY, f64::min));
        runs += 1;
    }
    Ok(format!("{runs} runs, smallest margin / tolerance {worst:.3e}"))
}

fn uniqueness_contraction() -> Outcome {
    let mut notes = Vec::new();
    for (name, c) in [("axis", AXIS), ("oblique", (-0.5, -0.5))] {
        let m = ManufacturedSolution::new([1.0, 1.0], c, 0.1);
        let basis = SpectralBasis::new([8, 8], [1.0, 1.0]).map_err(err)?;
        let t = assemble_with_coupling(&basis, c, 0);
        let order = manufactured_order(&basis, m.power);
        let f = ManufacturedForcing {
            solution: &m,
            basis: &basis,
            order,
        };
        let p = Problem {
            tensors: &t,
            forcing: &f,
            nu: 0.1,
            grid: TimeGrid::new(0.002f64.min(0.5 * stable_dt(&t, 0.1)), 0.5).unwrap(),
            initial: t.project(&m.coefficients(&basis, 0.0, order)),
        };
        let twin = uniqueness_experiment(&p, 0.0, Perturbation::Mode { component: 0, index: 0 }).map_err(err)?;
        ensure(
            twin.pass && twin.max_w <= 1e-12 * twin.scale,
            format!("{name}: twin runs differ by {:e}", twin.max_w),
        )?;
        let pert = uniqueness_experiment(&p, 1e-8, Perturbation::Mode { component: 0, index: 0 }).map_err(err)?;
        ensure(pert.pass, format!("{name}: envelope failed, C = {}", pert.fitted_c))?;
        notes.push(format!("{name} twin max {:.0e}, C {:.3e}", twin.max_w, pert.fitted_c));
    }
    Ok(notes.join("; "))
}

fn det2(a: &Mat3) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn jacobi_canonicalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut matched, mut tested, mut worst) = (0, 0, 0.0f64);
    while tested < 1000 {
        let mut a: Mat3 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                a[i][j] = rng.random_range(-1.0..1.0);
                a[j][i] = a[i][j];
            }
        }
        if a[0][0].abs() <= 1e-6 || det2(&a).abs() <= 1e-6 || det3(&a).abs() <= 1e-6 {
            continue;
        }
        tested += 1;
        let f = canonicalize_matrix(&a, DEFAULT_PIVOT_TOLERANCE);
        let signs = Inertia {
            positive: f.b.iter().filter(|b| **b > 0.0).count(),
            zero: f.b.iter().filter(|b| **b == 0.0).count(),
            negative: f.b.iter().filter(|b| **b < 0.0).count(),
        };
        if f.method == Method::Jacobi && signs == eigen_inertia(&a) && f.inertia == signs {
            matched += 1;
        }
        let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) * w.iter().map(|v| v * v).sum::<f64>();
        worst = worst.max((f.value(w) - quadform_value(&a, w)).abs() / scale);
    }
    let detail = format!("{matched}/{tested} sign patterns match, max relative value error {worst:.2e}");
    ensure(matched == 1000 && worst <= 1e-10, detail.clone())?;
    Ok(detail)
}

fn cube(n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
    Field::from_fn(vec![n; 3], vec![1.0; 3], 3, f).unwrap()
}

fn criterion_homogeneity() -> Outcome {
    let lambda1 = box_lambda1(&[1.0, 1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let k: [f64; 3] = std::array::from_fn(|_| rng.random_range(1..4) as f64);
        let amp: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let v = cube(13, |p| {
            let s = (k[0] * PI * p[0]).sin() * (k[1] * PI * p[1]).sin() * (k[2] * PI * p[2]).sin();
            amp.iter().map(|a| a * s * (1.0 + p[0] * p[1])).collect()
        });
        let one = uniqueness_criterion(&TimeSeriesField::steady(v.clone()), 1.0, lambda1, 0.7).map_err(err)?;
        let two = uniqueness_criterion(&TimeSeriesField::steady(v.scaled(2.0)), 1.0, lambda1, 0.7).map_err(err)?;
        for (a, b) in one.rows[0].rhs.iter().zip(&two.rows[0].rhs) {
            ensure(*b == 2.0 * a, format!("scaling by 2 gives {b:e}, want {:e}", 2.0 * a))?;
        }
    }
    // single sine mode: every component norm is pi / sqrt(8), so the
    // boundary viscosity makes both sides equal in exact arithmetic
    let v = cube(17, |p| vec![(PI * p[0]).sin() * (PI * p[1]).sin() * (PI * p[2]).sin(), 0.0, 0.0]);
    let rhs = 3.0 * PI / 8f64.sqrt();
    let nu = rhs / lambda1.powf(0.25);
    let r = uniqueness_criterion(&TimeSeriesField::steady(v), nu, lambda1, 1.0).map_err(err)?;
    ensure(r.satisfied, format!("boundary case lhs {:e} rhs {:e}", r.lhs, r.rows[0].rhs[0]))?;
    Ok(format!(
        "doubling exact on 5 fields; boundary lhs {:.15e} vs rhs {:.15e} satisfied",
        r.lhs, r.rows[0].rhs[0]
    ))
}

fn random_mask(rng: &mut ChaCha8Rng, case: usize) -> IndicatorGrid {
    let dims: Vec<usize> = (0..3).map(|_| rng.random_range(6..18)).collect();
    let extents: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
    let n: usize = dims.iter().product();
    let mask: Vec<bool> = match case % 3 {
        // sparse speckle
        0 => {
            let p = rng.random_range(0.0..0.05);
            (0..n).map(|_| rng.random_bool(p)).collect()
        }
        // a random box
        1 => {
            let lo: Vec<usize> = dims.iter().map(|d| rng.random_range(0..*d)).collect();
            let hi: Vec<usize> = dims.iter().zip(&lo).map(|(d, l)| rng.random_range(*l..*d)).collect();
            (0..n)
                .map(|p| {
                    let idx = [p % dims[0], (p / dims[0]) % dims[1], p / (dims[0] * dims[1])];
                    (0..3).all(|a| idx[a] >= lo[a] && idx[a] <= hi[a])
                })
                .collect()
        }
        // dense noise
        _ => {
            let p = rng.random_range(0.0..1.0);
            (0..n).map(|_| rng.random_bool(p)).collect()
        }
    };
    IndicatorGrid::new(dims, extents, mask, 0.0).unwrap()
}

fn stratification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut masks: Vec<(String, IndicatorGrid)> = (0..50).map(|k| (format!("random {k}"), random_mask(&mut rng, k))).collect();
    masks.push((
        "ball".into(),
        IndicatorGrid::from_fn(vec![24; 3], vec![1.0; 3], |x| {
            x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() < 0.09
        })
        .unwrap(),
    ));
    masks.push(("half cube".into(), IndicatorGrid::from_fn(vec![24; 3], vec![1.0; 3], |x| x[2] < 0.5).unwrap()));
    let exact = StratifyOptions {
        nslices: 0,
        area_tol: Some(0.0),
        interval_slabs: 1.0,
    };
    let (mut decisive, mut undetermined) = (0, 0);
    for (name, m) in &masks {
        let r = stratification_verdict(m, &[], &StratifyOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        match r.oracle {
            OracleStatus::Undetermined => undetermined += 1,
            _ => decisive += 1,
        }
        if name == "ball" || name == "half cube" {
            ensure(r.axis_positive, format!("{name} should be stratified"))?;
        }
        let e = stratification_verdict(m, &[], &exact).map_err(|e| format!("{name} (exact mode): {e}"))?;
        ensure(
            e.axis_positive == (m.volume() > 0.0),
            format!("{name}: exact-mode verdict {} with volume {:e}", e.axis_positive, m.volume()),
        )?;
    }
    Ok(format!(
        "{} masks, 0 inconsistencies ({decisive} decisive, {undetermined} in band); exact mode agrees on all",
        masks.len()
    ))
}

fn coercivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut couplings = vec![AXIS, (-0.5, -0.5), (-0.5, 0.0)];
    couplings.extend((0..3).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))));
    let mut smallest = f64::INFINITY;
    for modes in [[4, 4], [6, 8], [8, 8]] {
        let basis = SpectralBasis::new(modes, [1.0, 1.3]).map_err(err)?;
        for c in &couplings {
            let v = coercivity_check(&assemble_with_coupling(&basis, *c, 0));
            ensure(v > 0.0, format!("N={modes:?} c={c:?}: {v:e}"))?;
            smallest = smallest.min(v);
        }
    }
    let basis = SpectralBasis::new([8, 8], [1.0, 1.0]).map_err(err)?;
    let v = coercivity_check(&assemble_with_coupling(&basis, AXIS, 0));
    let rel = (v - 2.0 * PI * PI).abs() / (2.0 * PI * PI);
    ensure(rel <= 1e-10, format!("unit square gives {v}, relative gap {rel:e}"))?;
    Ok(format!("smallest over 18 cases {smallest:.4}; unit square {v:.12} (relative gap {rel:.1e})"))
}

/// Lines of a JSON report other than the timestamp.
fn comparable(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    if path.extension().is_some_and(|e| e == "json") {
        let key = format!("\"{TIMESTAMP_KEY}\"");
        let text = String::from_utf8(bytes).unwrap();
        return text.lines().filter(|l| !l.trim_start().starts_with(&key)).collect::<Vec<_>>().join("\n").into_bytes();
    }
    bytes
}

fn tree(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let work = tempfile::tempdir().map_err(err)?;
    let w = work.path();
    let u = cube(9, |p| {
        let s = (PI * p[0]).sin() * (PI * p[1]).sin() * (PI * p[2]).sin();
        vec![s, (2.0 * PI * p[0]).sin() * s, -0.5 * s]
    });
    write_field(&u, w.join("u.nsf"), Encoding::Binary).map_err(err)?;
    let config = format!(
        "input.u0 = {0}/u.nsf\ninput.velocity = {0}/u.nsf\ninput.field = {0}/u.nsf\n\
         basis.modes = 4,4\nsolve.t_final = 0.05\nsolve.dt = 0.005\nsolve.frame_stride = 2\n\
         uniqueness.perturbation = random\nstratify.eps = 0.2\nstratify.directions = 0.6,0.8,0\n\
         mms.modes = 3,5\nmms.dts = 0.02,0.01,0.005\nmms.t_final = 0.1\nmms.dt = 0.01\nmms.min_ratio = 0\nmms.min_order = 0\n",
        w.display()
    );
    std::fs::write(w.join("run.cfg"), config).map_err(err)?;
    let commands = ["project", "solve", "uniqueness", "quadform", "stratify", "mms"];
    let mut compared = 0;
    for cmd in commands {
        let outs: Vec<_> = ["a", "b"].iter().map(|r| w.join(format!("{cmd}_{r}"))).collect();
        for o in &outs {
            let status = Command::new(env!("CARGO_BIN_EXE_nsslice"))
                .args([cmd, "--config"])
                .arg(w.join("run.cfg"))
                .arg("--out")
                .arg(o)
                .args(["--seed", "42"])
                .output()
                .map_err(err)?;
            // quadform's criterion may fail on this field; only errors matter here
            ensure(
                matches!(status.status.code(), Some(0 | 1)),
                format!("{cmd} exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)),
            )?;
        }
        let (a, b) = (tree(&outs[0]), tree(&outs[1]));
        ensure(!a.is_empty() && a.len() == b.len(), format!("{cmd}: output sets differ"))?;
        for (pa, pb) in a.iter().zip(&b) {
            ensure(comparable(pa) == comparable(pb), format!("{cmd}: {} differs", pa.display()))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} files byte-identical across reruns of all six subcommands"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("trilinear skew-symmetry", skew_symmetry),
        ("manufactured-solution convergence", mms_convergence),
        ("energy identity", energy_identity),
        ("a-priori inequality", apriori_inequality),
        ("uniqueness contraction", uniqueness_contraction),
        ("Jacobi canonicalization", jacobi_canonicalization),
        ("criterion homogeneity and threshold", criterion_homogeneity),
        ("stratification equivalence", stratification),
        ("discrete coercivity", coercivity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name} ({secs:.1}s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name} ({secs:.1}s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
