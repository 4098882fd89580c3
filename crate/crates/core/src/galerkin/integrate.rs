use std::f64::consts::PI;

use log::{debug, info};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::assembly::OperatorTensors;
use super::basis::SpectralBasis;
use super::quadrature::gauss_legendre;
use crate::error::{Error, Result};
use crate::fieldio::{Field, TimeSeriesField};

/// Coefficient magnitude treated as numerical blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Coefficients of the three velocity components, stacked component-major
/// (`[u1 modes | u2 modes | u3 modes]`), at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub coeffs: DVector<f64>,
    pub time: f64,
}

impl GalerkinState {
    pub fn new(coeffs: DVector<f64>, time: f64) -> Self {
        Self { coeffs, time }
    }

    pub fn zeros(basis: &SpectralBasis) -> Self {
        Self::new(basis.zero_state(), 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Source term as `L^2` expansion coefficients in the sine basis, so that
/// the Galerkin load is `M f(t)`.
pub trait Forcing: Sync {
    fn coefficients(&self, t: f64) -> DVector<f64>;
}

#[derive(Debug, Clone)]
pub struct ZeroForcing {
    len: usize,
}

impl ZeroForcing {
    pub fn new(basis: &SpectralBasis) -> Self {
        Self { len: basis.state_len() }
    }
}

impl Forcing for ZeroForcing {
    fn coefficients(&self, _t: f64) -> DVector<f64> {
        DVector::zeros(self.len)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantForcing(pub DVector<f64>);

impl Forcing for ConstantForcing {
    fn coefficients(&self, _t: f64) -> DVector<f64> {
        self.0.clone()
    }
}

/// Forcing given by an arbitrary closure of time.
pub struct FnForcing<F>(pub F);

impl<F: Fn(f64) -> DVector<f64> + Sync> Forcing for FnForcing<F> {
    fn coefficients(&self, t: f64) -> DVector<f64> {
        (self.0)(t)
    }
}

/// Forcing sampled on a time series of slice fields, projected frame by
/// frame and interpolated linearly in time (held constant outside the
/// sampled window).
#[derive(Debug, Clone)]
pub struct FrameForcing {
    times: Vec<f64>,
    coeffs: Vec<DVector<f64>>,
}

impl FrameForcing {
    pub fn new(basis: &SpectralBasis, series: &TimeSeriesField) -> Result<Self> {
        let coeffs = series
            .frames()
            .iter()
            .map(|f| project_field(basis, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: series.times().to_vec(),
            coeffs,
        })
    }
}

impl Forcing for FrameForcing {
    fn coefficients(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.coeffs[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.coeffs[n - 1].clone();
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = (t - t0) / (t1 - t0);
        &self.coeffs[k] * (1.0 - s) + &self.coeffs[k + 1] * s
    }
}

/// Sine coefficients of a vertex-sampled three-component slice field.
///
/// Uses the trapezoidal rule on the vertex grid, which for data vanishing
/// on the boundary is the discrete sine transform.
pub fn project_field(basis: &SpectralBasis, field: &Field) -> Result<DVector<f64>> {
    if field.ndims() != 2 || field.ncomp() != 3 {
        return Err(Error::InvalidField(format!(
            "slice data must be 2D with 3 components, got {}D with {}",
            field.ndims(),
            field.ncomp()
        )));
    }
    let ext = field.extents();
    let [l1, l2] = basis.extents();
    if (ext[0] - l1).abs() > 1e-9 * l1 || (ext[1] - l2).abs() > 1e-9 * l2 {
        return Err(Error::InvalidField(format!(
            "field extents {ext:?} do not match the slice rectangle [{l1}, {l2}]"
        )));
    }
    let dims = field.dims();
    let weights = |n: usize, l: f64| {
        let h = l / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut w = vec![h; n];
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
        (x, w)
    };
    let (x, wx) = weights(dims[0], l1);
    let (y, wy) = weights(dims[1], l2);
    let grid = |c: usize| DMatrix::from_fn(dims[0], dims[1], |i, j| field.value(c, &[i, j]));
    Ok(grid_coefficients(basis, &x, &wx, &y, &wy, grid))
}

/// `L^2` coefficients of a function of `(x, y)` by Gauss-Legendre
/// quadrature with `order` points per direction.
pub fn project_function<F: Fn(f64, f64) -> [f64; 3]>(basis: &SpectralBasis, order: usize, f: F) -> DVector<f64> {
    let [l1, l2] = basis.extents();
    let (x, wx) = gauss_legendre(order, 0.0, l1);
    let (y, wy) = gauss_legendre(order, 0.0, l2);
    let samples: Vec<[f64; 3]> = x
        .iter()
        .flat_map(|xi| y.iter().map(move |yj| (*xi, *yj)))
        .map(|(xi, yj)| f(xi, yj))
        .collect();
    let ny = y.len();
    grid_coefficients(basis, &x, &wx, &y, &wy, |c| {
        DMatrix::from_fn(x.len(), ny, |i, j| samples[i * ny + j][c])
    })
}

fn grid_coefficients(
    basis: &SpectralBasis,
    x: &[f64],
    wx: &[f64],
    y: &[f64],
    wy: &[f64],
    grid: impl Fn(usize) -> DMatrix<f64>,
) -> DVector<f64> {
    let (sx, _) = basis.tables(0, x);
    let (sy, _) = basis.tables(1, y);
    let sxw = DMatrix::from_fn(sx.ncols(), sx.nrows(), |m, q| sx[(q, m)] * wx[q]);
    let syw = DMatrix::from_fn(sy.nrows(), sy.ncols(), |q, n| sy[(q, n)] * wy[q]);
    let scale = 1.0 / basis.mass_diagonal();
    let n = basis.len();
    let mut out = DVector::zeros(3 * n);
    let mut tmp = vec![0.0; n];
    for c in 0..3 {
        let a = &sxw * grid(c) * &syw * scale;
        basis.from_grid(&a, &mut tmp);
        out.rows_mut(c * n, n).copy_from_slice(&tmp);
    }
    out
}

/// Evaluates a state on a vertex grid of the given dimensions.
pub fn sample_state(basis: &SpectralBasis, coeffs: &DVector<f64>, dims: [usize; 2]) -> Result<Field> {
    let [l1, l2] = basis.extents();
    let axis = |n: usize, l: f64| -> Vec<f64> { (0..n).map(|i| i as f64 * l / (n - 1) as f64).collect() };
    if dims.iter().any(|d| *d < 2) {
        return Err(Error::InvalidArgument(format!("sampling grid {dims:?} needs >= 2 points per axis")));
    }
    let (sx, _) = basis.tables(0, &axis(dims[0], l1));
    let (sy, _) = basis.tables(1, &axis(dims[1], l2));
    let n = basis.len();
    let vals: Vec<DMatrix<f64>> = (0..3)
        .map(|c| &sx * basis.to_grid(&coeffs.as_slice()[c * n..(c + 1) * n]) * sy.transpose())
        .collect();
    // component-planar, first axis fastest
    let mut data = Vec::with_capacity(3 * dims[0] * dims[1]);
    for v in &vals {
        for j in 0..dims[1] {
            data.extend((0..dims[0]).map(|i| v[(i, j)]));
        }
    }
    Field::new(vec![dims[0], dims[1]], vec![l1, l2], 3, data)
}

/// Mass-orthogonal projection onto the discretely solenoidal subspace.
pub fn project_divfree(state: &GalerkinState, tensors: &OperatorTensors) -> GalerkinState {
    GalerkinState::new(tensors.project(&state.coeffs), state.time)
}

/// Time derivative of the semi-discrete system at `(t, u)`:
/// `u' = P M^-1 (nu K u - N(u) + M f(t))`.
pub fn rhs(tensors: &OperatorTensors, forcing: &dyn Forcing, nu: f64, t: f64, u: &DVector<f64>) -> DVector<f64> {
    let mut r = tensors.apply_stiffness(u) * nu - tensors.convection(u);
    let f = forcing.coefficients(t);
    let m = tensors.mass_diagonal();
    for i in 0..r.len() {
        r[i] = r[i] / m[i] + f[i];
    }
    tensors.project(&r)
}

/// One classical RK4 step followed by the constraint projection.
pub fn step(state: &GalerkinState, tensors: &OperatorTensors, forcing: &dyn Forcing, nu: f64, dt: f64) -> Result<GalerkinState> {
    if !(dt > 0.0) || !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and nu > 0, got dt={dt}, nu={nu}")));
    }
    let (t, u) = (state.time, &state.coeffs);
    let k1 = rhs(tensors, forcing, nu, t, u);
    let k2 = rhs(tensors, forcing, nu, t + 0.5 * dt, &(u + &k1 * (0.5 * dt)));
    let k3 = rhs(tensors, forcing, nu, t + 0.5 * dt, &(u + &k2 * (0.5 * dt)));
    let k4 = rhs(tensors, forcing, nu, t + dt, &(u + &k3 * dt));
    let next = u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let next = tensors.project(&next);
    let magnitude = next.iter().fold(0.0f64, |a, c| if c.is_finite() { a.max(c.abs()) } else { f64::INFINITY });
    if magnitude > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp {
            time: t + dt,
            magnitude,
        });
    }
    Ok(GalerkinState::new(next, t + dt))
}

/// Largest step for which explicit RK4 is linearly stable on the
/// dissipative part, `2.78 / (nu * rho)` with `rho` the spectral radius of
/// `M^-1 K`.
pub fn stable_dt(tensors: &OperatorTensors, nu: f64) -> f64 {
    let m = tensors.basis().mass_diagonal();
    let eig = SymmetricEigen::new(-tensors.stiffness.clone() / m);
    let rho = eig.eigenvalues.max();
    2.78 / (nu * rho)
}

/// Time-stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_final: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("need dt > 0 and T > 0, got dt={dt}, T={t_final}")));
        }
        Ok(Self { dt, t_final })
    }

    /// Number of steps; the step is shrunk so that they land exactly on `T`.
    pub fn nsteps(&self) -> usize {
        ((self.t_final / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn effective_dt(&self) -> f64 {
        self.t_final / self.nsteps() as f64
    }
}

/// Integrates from an already-projected initial state; returns every step.
pub fn integrate(
    initial: GalerkinState,
    tensors: &OperatorTensors,
    forcing: &dyn Forcing,
    nu: f64,
    grid: TimeGrid,
) -> Result<Vec<GalerkinState>> {
    let n = grid.nsteps();
    let dt = grid.effective_dt();
    let t0 = initial.time;
    let mut trace = Vec::with_capacity(n + 1);
    trace.push(initial);
    for k in 0..n {
        let mut next = step(&trace[k], tensors, forcing, nu, dt)?;
        // avoid drift of the time stamps
        next.time = t0 + (k + 1) as f64 * dt;
        trace.push(next);
    }
    debug!("integrated {n} steps of size {dt}");
    Ok(trace)
}

/// Output of a full solve.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub frames: TimeSeriesField,
    pub trace: Vec<GalerkinState>,
}

/// Projects `u0` onto the solenoidal Galerkin space, integrates to `T` and
/// samples every `frame_stride`-th state back onto the grid of `u0`.
pub fn solve(
    u0: &Field,
    forcing: &dyn Forcing,
    tensors: &OperatorTensors,
    nu: f64,
    grid: TimeGrid,
    frame_stride: usize,
) -> Result<SolveOutput> {
    let basis = tensors.basis();
    let coeffs = project_field(basis, u0)?;
    let initial = project_divfree(&GalerkinState::new(coeffs, 0.0), tensors);
    info!(
        "solving {} modes, nu={nu}, dt={}, {} steps",
        basis.len(),
        grid.effective_dt(),
        grid.nsteps()
    );
    let trace = integrate(initial, tensors, forcing, nu, grid)?;
    let dims = [u0.dims()[0], u0.dims()[1]];
    let stride = frame_stride.max(1);
    let last = trace.len() - 1;
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (k, s) in trace.iter().enumerate() {
        if k % stride == 0 || k == last {
            times.push(s.time);
            frames.push(sample_state(basis, &s.coeffs, dims)?);
        }
    }
    Ok(SolveOutput {
        frames: TimeSeriesField::new(times, frames)?,
        trace,
    })
}

/// Smallest eigenvalue of `-A1` restricted to the discretely solenoidal
/// subspace, in the mass-normalized sense (a Rayleigh quotient against the
/// `L^2` norm).
pub fn coercivity_check(tensors: &OperatorTensors) -> f64 {
    let basis = tensors.basis();
    let n = basis.len();
    let m = basis.mass_diagonal();
    let s = 1.0 / m.sqrt();
    // B = C M^-1/2; its null space is Z
    let b = &tensors.constraint * s;
    let eig = SymmetricEigen::new(b.transpose() * &b);
    let top = eig.eigenvalues.amax();
    let cut = 1e-12 * top.max(1e-300);
    let cols: Vec<usize> = (0..3 * n).filter(|&k| eig.eigenvalues[k] <= cut).collect();
    if cols.is_empty() {
        return f64::INFINITY;
    }
    let z = DMatrix::from_fn(3 * n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])]);
    let neg_k = DMatrix::from_fn(3 * n, 3 * n, |i, j| {
        if i / n == j / n {
            -tensors.stiffness[(i % n, j % n)] / m
        } else {
            0.0
        }
    });
    let reduced = z.transpose() * neg_k * &z;
    SymmetricEigen::new(reduced).eigenvalues.min()
}

/// Closed-form decay rate of a single heat mode, `nu * lambda`.
pub fn heat_mode_rate(basis: &SpectralBasis, index: usize, nu: f64) -> f64 {
    nu * basis.eigenvalue(index)
}

/// `2 pi^2` scaled to a rectangle: the first Dirichlet eigenvalue.
pub fn first_eigenvalue(extents: [f64; 2]) -> f64 {
    PI * PI * (1.0 / (extents[0] * extents[0]) + 1.0 / (extents[1] * extents[1]))
}
