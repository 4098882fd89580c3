//! The six subcommands. Each validates its keys before computing, writes
//! JSON reports and CSV tables into the output directory and returns the
//! checks it evaluated.

use std::path::PathBuf;

use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;

use super::config::{nonnegative, positive, KeyValues};
use super::{write_csv, write_report, Check, RunContext};
use crate::analysis::{apriori_bounds, ledger_from_run, uniqueness_experiment, AprioriBounds, Perturbation, Problem};
use crate::error::{Error, Result};
use crate::fieldio::{read_field, read_series_or_field, restrict_to_slice, restrict_to_slice_filled, Encoding, Field, TimeSeriesField};
use crate::galerkin::manufactured::manufactured_order;
use crate::galerkin::{
    assemble, coercivity_check, integrate, project_divfree, project_field, run_mms, sample_state, stable_dt,
    FrameForcing, Forcing, GalerkinState, ManufacturedForcing, ManufacturedSolution, OperatorTensors, SpectralBasis,
    TimeGrid, ZeroForcing,
};
use crate::geometry::{make_chart, slice_domain, Box3, Hyperplane, SliceChart, DEFAULT_CHART_TOLERANCE};
use crate::quadform::{
    box_lambda1, canonicalize, coefficient_field, frame_summary, signed_integral, strain_field, uniqueness_criterion,
    QuadformReport, DEFAULT_PIVOT_TOLERANCE,
};
use crate::stratify::{mask_from_series, stratification_verdict, StratifyOptions};

fn encoding(kv: &KeyValues) -> Result<Encoding> {
    match kv.raw("output.encoding").unwrap_or("binary") {
        "binary" => Ok(Encoding::Binary),
        "text" => Ok(Encoding::Text),
        other => Err(Error::Config(format!("output.encoding must be binary or text, got {other:?}"))),
    }
}

fn required_path(kv: &KeyValues, key: &str) -> Result<PathBuf> {
    kv.path(key).ok_or_else(|| Error::Config(format!("{key} is required")))
}

fn chart_from(kv: &KeyValues) -> Result<(Hyperplane, SliceChart)> {
    let normal = kv.array("plane.normal", [0.0, 0.0, 1.0])?;
    let offset = kv.get_or("plane.offset", 0.5)?;
    let tol = positive("plane.tolerance", kv.get_or("plane.tolerance", DEFAULT_CHART_TOLERANCE)?)?;
    let plane = Hyperplane::new(normal, offset)?;
    let chart = make_chart(&plane, tol)?;
    Ok((plane, chart))
}

fn slice_dims(kv: &KeyValues) -> Result<[usize; 2]> {
    let d = kv.array("project.dims", [33usize, 33])?;
    if d.iter().any(|v| *v < 2) {
        return Err(Error::Config(format!("project.dims must be >= 2, got {d:?}")));
    }
    Ok(d)
}

/// Restricts every frame of a series; 2D frames are passed through.
fn restrict_series(series: &TimeSeriesField, chart: &SliceChart, dims: [usize; 2]) -> Result<TimeSeriesField> {
    series.map_frames(|f| match f.ndims() {
        3 => Ok(restrict_to_slice(f, chart, dims)?.field),
        2 => Ok(f.clone()),
        n => Err(Error::InvalidField(format!("expected a 2D or 3D field, got {n}D"))),
    })
}

fn check_nonempty(field: &Field, chart: &SliceChart) -> Result<crate::geometry::SliceDomain> {
    let e = field.extents();
    let dom = slice_domain(&Box3::from_extents([e[0], e[1], e[2]])?, chart);
    if dom.is_empty() {
        return Err(Error::EmptySlice);
    }
    Ok(dom)
}

#[derive(Debug, Serialize)]
struct ChartManifest {
    plane_normal: [f64; 3],
    plane_offset: f64,
    chart: SliceChart,
    coupling: (f64, f64),
    domain_vertices: Vec<[f64; 2]>,
    domain_area: f64,
    rectangular: bool,
    origin: [f64; 2],
    extents: Vec<f64>,
    dims: [usize; 2],
    forcing_frames: usize,
}

pub fn project(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let (plane, chart) = chart_from(kv)?;
    let dims = slice_dims(kv)?;
    let enc = encoding(kv)?;
    let u0 = read_field(required_path(kv, "input.u0")?)?;
    if u0.ndims() != 3 {
        return Err(Error::InvalidField("input.u0 must be a 3D field".into()));
    }
    let dom = check_nonempty(&u0, &chart)?;
    let slice = match kv.raw("project.outside").unwrap_or("error") {
        "error" => restrict_to_slice(&u0, &chart, dims)?,
        "zero" => restrict_to_slice_filled(&u0, &chart, dims, 0.0)?,
        other => return Err(Error::Config(format!("project.outside must be error or zero, got {other:?}"))),
    };
    crate::fieldio::write_field(&slice.field, ctx.path("u0_slice.nsf"), enc)?;
    let mut forcing_frames = 0;
    if let Some(p) = kv.path("input.forcing") {
        let series = restrict_series(&read_series_or_field(p)?, &chart, dims)?;
        forcing_frames = series.len();
        series.write_dir(ctx.path("forcing"), enc)?;
    }
    let manifest = ChartManifest {
        plane_normal: plane.normal(),
        plane_offset: plane.offset(),
        coupling: chart.projected_gradient_coeffs()?,
        chart,
        domain_area: dom.area(),
        rectangular: dom.is_rectangle(),
        domain_vertices: dom.vertices,
        origin: slice.origin,
        extents: slice.field.extents().to_vec(),
        dims,
        forcing_frames,
    };
    write_report(&manifest, &ctx.path("chart.json"))?;
    info!("slice written with origin {:?}", slice.origin);
    Ok(vec![])
}

/// Forcing owned by a configured problem.
pub enum ProblemForcing {
    Zero(ZeroForcing),
    Frames(FrameForcing),
    Manufactured {
        solution: ManufacturedSolution,
        basis: SpectralBasis,
        order: usize,
    },
}

impl Forcing for ProblemForcing {
    fn coefficients(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Zero(f) => f.coefficients(t),
            Self::Frames(f) => f.coefficients(t),
            Self::Manufactured { solution, basis, order } => ManufacturedForcing {
                solution,
                basis,
                order: *order,
            }
            .coefficients(t),
        }
    }
}

/// A fully validated slice problem, shared by `solve` and `uniqueness`.
pub struct SliceProblem {
    pub tensors: OperatorTensors,
    pub chart: SliceChart,
    pub forcing: ProblemForcing,
    pub initial: DVector<f64>,
    pub frame_dims: [usize; 2],
    pub origin: [f64; 2],
    pub source: String,
    pub nu: f64,
    pub grid: TimeGrid,
    pub frame_stride: usize,
}

fn extents_key(kv: &KeyValues, key: &str) -> Result<[f64; 2]> {
    let e = kv.array(key, [1.0, 1.0])?;
    for v in e {
        positive(key, v)?;
    }
    Ok(e)
}

/// Reads the `problem.*`, `basis.*`, `solve.*` and `input.*` keys.
pub fn load_problem(kv: &KeyValues) -> Result<SliceProblem> {
    let (_, chart) = chart_from(kv)?;
    let nu = positive("solve.nu", kv.get_or("solve.nu", 0.1)?)?;
    let dt = positive("solve.dt", kv.get_or("solve.dt", 1e-3)?)?;
    let t_final = positive("solve.t_final", kv.get_or("solve.t_final", 0.5)?)?;
    let frame_stride = kv.get_or("solve.frame_stride", 10usize)?.max(1);
    let modes = kv.array("basis.modes", [8usize, 8])?;
    if modes.contains(&0) {
        return Err(Error::Config("basis.modes must be >= 1".into()));
    }
    let order = kv.get_or("basis.quadrature_order", 0usize)?;
    let grid = TimeGrid::new(dt, t_final)?;
    let default_source = if kv.path("input.u0").is_some() { "files" } else { "zero" };
    let source = kv.raw("problem.source").unwrap_or(default_source).to_string();
    let coupling = chart.projected_gradient_coeffs()?;

    let (extents, u0_slice, origin) = match source.as_str() {
        "files" => {
            let u0 = read_field(required_path(kv, "input.u0")?)?;
            match u0.ndims() {
                3 => {
                    let dom = check_nonempty(&u0, &chart)?;
                    if !dom.is_rectangle() {
                        return Err(Error::InvalidArgument(
                            "the slice of the input box is not a rectangle; the sine basis needs one".into(),
                        ));
                    }
                    let s = restrict_to_slice(&u0, &chart, slice_dims(kv)?)?;
                    let e = s.field.extents();
                    ([e[0], e[1]], Some(s.field), s.origin)
                }
                2 => {
                    let e = u0.extents();
                    ([e[0], e[1]], Some(u0), [0.0, 0.0])
                }
                n => return Err(Error::InvalidField(format!("input.u0 must be 2D or 3D, got {n}D"))),
            }
        }
        "mms" | "zero" => (extents_key(kv, "problem.extents")?, None, [0.0, 0.0]),
        other => return Err(Error::Config(format!("problem.source must be files, mms or zero, got {other:?}"))),
    };
    let basis = SpectralBasis::new(modes, extents)?;
    let tensors = assemble(&basis, &chart, order)?;
    let frame_dims = match &u0_slice {
        Some(f) => [f.dims()[0], f.dims()[1]],
        None => {
            let d = kv.array("solve.grid", [33usize, 33])?;
            if d.iter().any(|v| *v < 2) {
                return Err(Error::Config("solve.grid must be >= 2".into()));
            }
            d
        }
    };

    let (initial, forcing) = match source.as_str() {
        "files" => {
            let coeffs = project_field(&basis, u0_slice.as_ref().expect("files source has u0"))?;
            let forcing = match kv.path("input.forcing") {
                Some(p) => {
                    let series = restrict_series(&read_series_or_field(p)?, &chart, frame_dims)?;
                    ProblemForcing::Frames(FrameForcing::new(&basis, &series)?)
                }
                None => ProblemForcing::Zero(ZeroForcing::new(&basis)),
            };
            (coeffs, forcing)
        }
        "mms" => {
            let solution = ManufacturedSolution::new(extents, coupling, nu);
            let order = manufactured_order(&basis, solution.power);
            let coeffs = solution.coefficients(&basis, 0.0, order);
            (
                coeffs,
                ProblemForcing::Manufactured {
                    solution,
                    basis: basis.clone(),
                    order,
                },
            )
        }
        _ => (basis.zero_state(), ProblemForcing::Zero(ZeroForcing::new(&basis))),
    };
    let initial = project_divfree(&GalerkinState::new(initial, 0.0), &tensors).coeffs;
    Ok(SliceProblem {
        tensors,
        chart,
        forcing,
        initial,
        frame_dims,
        origin,
        source,
        nu,
        grid,
        frame_stride,
    })
}

#[derive(Debug, Serialize)]
struct BasisInfo {
    modes: [usize; 2],
    extents: [f64; 2],
    quadrature_order: usize,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    source: String,
    basis: BasisInfo,
    chart: SliceChart,
    coupling: (f64, f64),
    origin: [f64; 2],
    nu: f64,
    dt: f64,
    t_final: f64,
    nsteps: usize,
    stable_dt: f64,
    lambda1: f64,
    coercivity: f64,
    max_divergence: f64,
    apriori: Option<AprioriBounds>,
    apriori_error: Option<String>,
    ledger: String,
    frames: String,
    checks: Vec<Check>,
}

fn basis_info(t: &OperatorTensors) -> BasisInfo {
    BasisInfo {
        modes: t.basis().nmodes(),
        extents: t.basis().extents(),
        quadrature_order: t.quadrature_order(),
    }
}

fn sample_frames(
    tensors: &OperatorTensors,
    trace: &[GalerkinState],
    dims: [usize; 2],
    stride: usize,
) -> Result<TimeSeriesField> {
    let last = trace.len() - 1;
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (k, s) in trace.iter().enumerate() {
        if k % stride == 0 || k == last {
            times.push(s.time);
            frames.push(sample_state(tensors.basis(), &s.coeffs, dims)?);
        }
    }
    TimeSeriesField::new(times, frames)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn solve(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let enc = encoding(kv)?;
    let p = load_problem(kv)?;
    let t = &p.tensors;
    let trace = integrate(GalerkinState::new(p.initial.clone(), 0.0), t, &p.forcing, p.nu, p.grid)?;
    sample_frames(t, &trace, p.frame_dims, p.frame_stride)?.write_dir(ctx.path("frames"), enc)?;

    let ledger = ledger_from_run(&trace, t, &p.forcing, p.nu)?;
    write_report(&ledger, &ctx.path("energy_ledger.json"))?;
    let rows: Vec<Vec<String>> = ledger
        .rows
        .iter()
        .map(|r| {
            [r.time, r.energy, r.d1, r.d2, r.dcross, r.work, r.residual, r.dissipated, r.abs_work, r.margin]
                .map(num)
                .to_vec()
        })
        .collect();
    write_csv(
        &ctx.path("ledger.csv"),
        &["time", "energy", "d1", "d2", "dcross", "work", "residual", "dissipated", "abs_work", "margin"],
        &rows,
    )?;

    let (apriori, apriori_error) = match apriori_bounds(&ledger) {
        Ok(b) => (Some(b), None),
        Err(Error::BoundViolation(m)) => (None, Some(m)),
        Err(e) => return Err(e),
    };
    if !ledger.inequality_holds() {
        warn!("energy inequality misses its tolerance; the early transient is probably under-resolved, try a smaller solve.dt");
    }
    let coercivity = coercivity_check(t);
    let max_divergence = trace.iter().map(|s| t.divergence_norm(&s.coeffs)).fold(0.0, f64::max);
    let mut checks = vec![
        Check::new("energy_inequality", ledger.inequality_holds()),
        Check::new("apriori_bounds", apriori.is_some()),
        Check::new("coercivity_positive", coercivity > 0.0),
    ];
    if matches!(p.forcing, ProblemForcing::Zero(_)) {
        checks.push(Check::new("energy_monotone", ledger.is_monotone(1e-12)));
    }
    let manifest = RunManifest {
        source: p.source.clone(),
        basis: basis_info(t),
        chart: p.chart,
        coupling: t.coupling(),
        origin: p.origin,
        nu: p.nu,
        dt: p.grid.effective_dt(),
        t_final: p.grid.t_final,
        nsteps: p.grid.nsteps(),
        stable_dt: stable_dt(t, p.nu),
        lambda1: t.basis().lambda1(),
        coercivity,
        max_divergence,
        apriori,
        apriori_error,
        ledger: "energy_ledger.json".into(),
        frames: "frames".into(),
        checks: checks.clone(),
    };
    write_report(&manifest, &ctx.path("run.json"))?;
    Ok(checks)
}

fn parse_perturbation(s: &str, seed: u64) -> Result<Perturbation> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let bad = || Error::Config(format!("uniqueness.perturbation must be mode:<component>:<index> or random, got {s:?}"));
    match parts.as_slice() {
        ["random"] => Ok(Perturbation::Random { seed }),
        ["mode", c, i] => Ok(Perturbation::Mode {
            component: c.parse().map_err(|_| bad())?,
            index: i.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

pub fn uniqueness(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let delta = nonnegative("uniqueness.delta", kv.get_or("uniqueness.delta", 1e-8)?)?;
    let perturbation = parse_perturbation(kv.raw("uniqueness.perturbation").unwrap_or("mode:0:0"), ctx.seed)?;
    let p = load_problem(kv)?;
    if let Perturbation::Mode { component, index } = perturbation {
        if component >= 3 || index >= p.tensors.basis().len() {
            return Err(Error::Config(format!("perturbation mode {component}:{index} out of range")));
        }
    }
    let problem = Problem {
        tensors: &p.tensors,
        forcing: &p.forcing,
        nu: p.nu,
        grid: p.grid,
        initial: p.initial.clone(),
    };
    let report = uniqueness_experiment(&problem, delta, perturbation)?;
    write_report(&report, &ctx.path("contraction_report.json"))?;
    let rows: Vec<Vec<String>> = (0..report.times.len())
        .map(|k| {
            [report.times[k], report.w_norm[k], report.bound[k], report.grad_norm_sq[k], report.grad_integral[k]]
                .map(num)
                .to_vec()
        })
        .collect();
    write_csv(
        &ctx.path("contraction.csv"),
        &["time", "w_norm", "bound", "grad_norm_sq", "grad_integral"],
        &rows,
    )?;
    Ok(vec![Check::new("contraction_envelope", report.pass)])
}

pub fn quadform(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let nu = positive("quadform.nu", kv.get_or("quadform.nu", 0.1)?)?;
    let c_gn = positive("quadform.c_gn", kv.get_or("quadform.c_gn", 1.0)?)?;
    let pivot_tol = positive("quadform.pivot_tol", kv.get_or("quadform.pivot_tol", DEFAULT_PIVOT_TOLERANCE)?)?;
    let lambda1 = kv.get::<f64>("quadform.lambda1")?.map(|v| positive("quadform.lambda1", v)).transpose()?;
    let enc = encoding(kv)?;
    let series = read_series_or_field(required_path(kv, "input.velocity")?)?;
    let lambda1 = lambda1.unwrap_or_else(|| box_lambda1(series.frames()[0].extents()));
    let criterion = uniqueness_criterion(&series, nu, lambda1, c_gn)?;

    let mut frames = Vec::with_capacity(series.len());
    let mut coeff_frames = Vec::new();
    let mut last_strain = None;
    for (t, f) in series.times().iter().zip(series.frames()) {
        let strain = strain_field(f)?;
        let decomposition = canonicalize(&strain, pivot_tol)?;
        frames.push(frame_summary(*t, &decomposition, &strain));
        if kv.flag("quadform.write_coefficients")? {
            coeff_frames.push(coefficient_field(&strain, &decomposition)?);
        }
        last_strain = Some(strain);
    }
    if !coeff_frames.is_empty() {
        TimeSeriesField::new(series.times().to_vec(), coeff_frames)?.write_dir(ctx.path("coefficients"), enc)?;
    }
    let signed = match kv.path("input.test_field") {
        Some(p) => Some(signed_integral(last_strain.as_ref().expect("series is nonempty"), &read_field(p)?)?),
        None => None,
    };

    let mut rows = Vec::new();
    for r in &criterion.rows {
        for (j, (rhs, ok)) in r.rhs.iter().zip(&r.satisfied).enumerate() {
            rows.push(vec![num(r.time), j.to_string(), num(*rhs), num(criterion.lhs), ok.to_string()]);
        }
        rows.push(vec![
            num(r.time),
            "joint".into(),
            num(r.rhs_joint),
            num(criterion.lhs),
            r.satisfied_joint.to_string(),
        ]);
    }
    write_csv(&ctx.path("criterion.csv"), &["time", "component", "rhs", "lhs", "satisfied"], &rows)?;
    let inertia_rows: Vec<Vec<String>> = frames
        .iter()
        .flat_map(|f| {
            f.inertia_histogram.iter().map(|(i, n)| {
                vec![num(f.time), i.positive.to_string(), i.zero.to_string(), i.negative.to_string(), n.to_string()]
            })
        })
        .collect();
    write_csv(&ctx.path("inertia.csv"), &["time", "positive", "zero", "negative", "count"], &inertia_rows)?;

    let satisfied = criterion.satisfied;
    let report = QuadformReport {
        criterion,
        frames,
        signed_integral: signed,
    };
    write_report(&report, &ctx.path("quadform_report.json"))?;
    Ok(vec![Check::new("uniqueness_criterion", satisfied)])
}

pub fn stratify(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let eps = nonnegative("stratify.eps", kv.get_or("stratify.eps", 0.0)?)?;
    let defaults = StratifyOptions::default();
    let options = StratifyOptions {
        nslices: kv.get_or("stratify.nslices", defaults.nslices)?,
        area_tol: kv.get::<f64>("stratify.area_tol")?.map(|v| nonnegative("stratify.area_tol", v)).transpose()?,
        interval_slabs: positive(
            "stratify.interval_slabs",
            kv.get_or("stratify.interval_slabs", defaults.interval_slabs)?,
        )?,
    };
    let directions = kv.vectors("stratify.directions")?;
    let series = read_series_or_field(required_path(kv, "input.field")?)?;
    let mask = mask_from_series(&series, eps)?;
    let report = stratification_verdict(&mask, &directions, &options)?;
    write_report(&report, &ctx.path("stratify_report.json"))?;
    let mut rows = Vec::new();
    for (d, v) in report.directions.iter().enumerate() {
        for (o, m) in v.profile.offsets.iter().zip(&v.profile.measures) {
            rows.push(vec![d.to_string(), num(*o), num(*m)]);
        }
    }
    write_csv(&ctx.path("stratify_profiles.csv"), &["direction", "offset", "measure"], &rows)?;
    // an inconsistent verdict surfaces as an error above
    Ok(vec![Check::new("oracle_consistent", true)])
}

#[derive(Debug, Serialize)]
struct SpatialRow {
    modes: usize,
    dt: f64,
    error: f64,
}

#[derive(Debug, Serialize)]
struct TemporalRow {
    dt: f64,
    error: f64,
    /// Mass-norm distance to the next finer step's final state.
    difference: Option<f64>,
    order: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MmsReport {
    nu: f64,
    t_final: f64,
    extents: [f64; 2],
    coupling: (f64, f64),
    spatial: Vec<SpatialRow>,
    spatial_ratio: f64,
    temporal_modes: usize,
    temporal: Vec<TemporalRow>,
    min_temporal_order: f64,
    checks: Vec<Check>,
}

pub fn mms(ctx: &RunContext) -> Result<Vec<Check>> {
    let kv = &ctx.config;
    let nu = positive("mms.nu", kv.get_or("mms.nu", 0.1)?)?;
    let t_final = positive("mms.t_final", kv.get_or("mms.t_final", 0.5)?)?;
    let dt = positive("mms.dt", kv.get_or("mms.dt", 2e-3)?)?;
    let extents = extents_key(kv, "mms.extents")?;
    let modes = kv.list::<usize>("mms.modes")?.unwrap_or_else(|| vec![8, 16]);
    let dts = kv.list::<f64>("mms.dts")?.unwrap_or_else(|| vec![4e-3, 2e-3, 1e-3]);
    let min_ratio = kv.get_or("mms.min_ratio", 10.0)?;
    let min_order = kv.get_or("mms.min_order", 3.8)?;
    if modes.len() < 2 || modes.contains(&0) || modes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("mms.modes needs at least two increasing positive entries".into()));
    }
    if dts.len() < 3 || dts.windows(2).any(|w| w[0] <= w[1]) || dts.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Config("mms.dts needs at least three decreasing positive entries".into()));
    }
    let temporal_modes = kv.get_or("mms.temporal_modes", *modes.last().expect("checked"))?;
    let coupling = match kv.list::<f64>("mms.coupling")? {
        Some(c) if c.len() == 2 => (c[0], c[1]),
        Some(_) => return Err(Error::Config("mms.coupling needs two values".into())),
        None => chart_from(kv)?.1.projected_gradient_coeffs()?,
    };
    let solution = ManufacturedSolution::new(extents, coupling, nu);

    let jobs: Vec<(usize, f64)> = modes
        .iter()
        .map(|n| (*n, dt))
        .chain(dts.iter().map(|d| (temporal_modes, *d)))
        .collect();
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(n, d)| {
                let solution = &solution;
                s.spawn(move || TimeGrid::new(d, t_final).and_then(|g| run_mms(solution, n, g)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("mms worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let (spatial_runs, temporal_runs) = runs.split_at(modes.len());

    let spatial: Vec<SpatialRow> = modes
        .iter()
        .zip(spatial_runs)
        .map(|(n, r)| SpatialRow {
            modes: *n,
            dt,
            error: r.error,
        })
        .collect();
    let spatial_ratio = spatial[spatial.len() - 2].error / spatial[spatial.len() - 1].error;

    let finals: Vec<&DVector<f64>> = temporal_runs.iter().map(|r| &r.trace.last().expect("nonempty").coeffs).collect();
    let t0 = &temporal_runs[0].tensors;
    let diffs: Vec<f64> = finals.windows(2).map(|w| t0.mass_norm_sq(&(w[0] - w[1])).sqrt()).collect();
    let orders: Vec<f64> = (0..diffs.len() - 1)
        .map(|k| (diffs[k] / diffs[k + 1]).ln() / (dts[k] / dts[k + 1]).ln())
        .collect();
    let temporal: Vec<TemporalRow> = dts
        .iter()
        .enumerate()
        .map(|(k, d)| TemporalRow {
            dt: *d,
            error: temporal_runs[k].error,
            difference: diffs.get(k).copied(),
            order: orders.get(k).copied(),
        })
        .collect();
    let min_temporal_order = orders.iter().copied().fold(f64::INFINITY, f64::min);

    write_csv(
        &ctx.path("mms_spatial.csv"),
        &["modes", "dt", "error"],
        &spatial.iter().map(|r| vec![r.modes.to_string(), num(r.dt), num(r.error)]).collect::<Vec<_>>(),
    )?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    write_csv(
        &ctx.path("mms_temporal.csv"),
        &["dt", "error", "difference", "order"],
        &temporal
            .iter()
            .map(|r| vec![num(r.dt), num(r.error), opt(r.difference), opt(r.order)])
            .collect::<Vec<_>>(),
    )?;
    let checks = vec![
        Check::new("spatial_convergence", spatial_ratio >= min_ratio),
        Check::new("temporal_order", min_temporal_order >= min_order),
    ];
    let report = MmsReport {
        nu,
        t_final,
        extents,
        coupling,
        spatial,
        spatial_ratio,
        temporal_modes,
        temporal,
        min_temporal_order,
        checks: checks.clone(),
    };
    write_report(&report, &ctx.path("mms_report.json"))?;
    Ok(checks)
}
