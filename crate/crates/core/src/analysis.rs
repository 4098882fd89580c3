//! Energy balance, a-priori bounds and the Grönwall contraction experiment.
//!
//! All norms are evaluated in coefficient space, where the sine basis makes
//! them exact Parseval sums. For a solenoidal Galerkin trajectory the
//! semi-discrete energy balance is
//!
//! ```text
//! dE/dt + nu (||D1 u||^2 + ||D2 u||^2 + ||(c.grad) u||^2) = <f, u>,   E = ||u||^2 / 2
//! ```
//!
//! since the skew convective form drops out. `||(c.grad) u||^2` equals one
//! quarter of `||(a1^-1 D1 + a2^-1 D2) u||^2` for the chart's tilt ratios.

use std::path::Path;

use log::{info, warn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{integrate, Forcing, GalerkinState, OperatorTensors, TimeGrid};

/// Relative tolerance of the cumulative energy inequality.
pub const ACCUMULATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub time: f64,
    /// `||u||^2 / 2`
    pub energy: f64,
    pub d1: f64,
    pub d2: f64,
    pub dcross: f64,
    /// `<f, u>`
    pub work: f64,
    /// `dE/dt + nu (d1 + d2 + dcross) - work`, with a finite-difference `dE/dt`.
    pub residual: f64,
    /// `nu * int_0^t (d1 + d2 + dcross)`
    pub dissipated: f64,
    /// `int_0^t |work|`
    pub abs_work: f64,
    /// `E(0) + abs_work + tol - E(t) - dissipated`; nonnegative when the
    /// cumulative inequality holds.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub nu: f64,
    pub dt: f64,
    pub rows: Vec<LedgerRow>,
}

/// Fourth-order cumulative integral of uniformly spaced samples; falls back
/// to the trapezoidal rule for fewer than four samples.
pub fn cumulative_integral(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let piece = if n < 4 {
            0.5 * dt * (f[k] + f[k + 1])
        } else if k == 0 {
            dt / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if k == n - 2 {
            dt / 24.0 * (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4])
        } else {
            dt / 24.0 * (-f[k - 1] + 13.0 * f[k] + 13.0 * f[k + 1] - f[k + 2])
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Second-order derivative of uniformly spaced samples: centered inside,
/// one-sided three-point stencils at both ends.
pub fn time_derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![(f[1] - f[0]) / dt; 2],
        _ => (0..n)
            .map(|k| {
                if k == 0 {
                    (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt)
                } else if k == n - 1 {
                    (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt)
                } else {
                    (f[k + 1] - f[k - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

fn uniform_step(trace: &[GalerkinState]) -> f64 {
    if trace.len() < 2 {
        return 0.0;
    }
    (trace[trace.len() - 1].time - trace[0].time) / (trace.len() - 1) as f64
}

pub fn ledger_from_run(trace: &[GalerkinState], tensors: &OperatorTensors, forcing: &dyn Forcing, nu: f64) -> Result<EnergyLedger> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    let dt = uniform_step(trace);
    let m = tensors.mass_diagonal();
    let mut rows: Vec<LedgerRow> = trace
        .iter()
        .map(|s| {
            let u = &s.coeffs;
            let f = forcing.coefficients(s.time);
            let work = u.iter().zip(f.iter()).zip(m.iter()).map(|((a, b), w)| a * b * w).sum();
            LedgerRow {
                time: s.time,
                energy: 0.5 * tensors.mass_norm_sq(u),
                d1: tensors.d1_norm_sq(u).max(0.0),
                d2: tensors.d2_norm_sq(u).max(0.0),
                dcross: tensors.cross_norm_sq(u).max(0.0),
                work,
                residual: 0.0,
                dissipated: 0.0,
                abs_work: 0.0,
                margin: 0.0,
            }
        })
        .collect();
    let energy: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let dissipation: Vec<f64> = rows.iter().map(|r| r.d1 + r.d2 + r.dcross).collect();
    let abs_work: Vec<f64> = rows.iter().map(|r| r.work.abs()).collect();
    let de = time_derivative(&energy, dt);
    let int_diss = cumulative_integral(&dissipation, dt);
    let int_abs_work = cumulative_integral(&abs_work, dt);
    let e0 = energy[0];
    let tol = ACCUMULATION_TOLERANCE * (e0 + int_abs_work.last().copied().unwrap_or(0.0));
    for (k, r) in rows.iter_mut().enumerate() {
        r.residual = if trace.len() > 1 { de[k] + nu * dissipation[k] - r.work } else { 0.0 };
        r.dissipated = nu * int_diss[k];
        r.abs_work = int_abs_work[k];
        r.margin = e0 + r.abs_work + tol - r.energy - r.dissipated;
    }
    Ok(EnergyLedger { nu, dt, rows })
}

impl EnergyLedger {
    pub fn initial_energy(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.energy)
    }

    pub fn total_abs_work(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.abs_work)
    }

    pub fn tolerance(&self) -> f64 {
        ACCUMULATION_TOLERANCE * (self.initial_energy() + self.total_abs_work())
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
    }

    /// Cumulative inequality at every recorded time.
    pub fn inequality_holds(&self) -> bool {
        self.rows.iter().all(|r| r.margin >= 0.0)
    }

    /// Whether `E` never grows by more than `slack * E(0)` in one step.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let s = slack * self.initial_energy();
        self.rows.windows(2).all(|w| w[1].energy <= w[0].energy + s)
    }

    pub fn check(&self) -> Result<()> {
        if let Some(r) = self.rows.iter().find(|r| r.margin < 0.0) {
            return Err(Error::BoundViolation(format!(
                "cumulative energy inequality fails at t={} by {:e}",
                r.time, -r.margin
            )));
        }
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriBounds {
    /// `sup_t ||u||`
    pub sup_norm: f64,
    /// `int_0^T (||D1 u||^2 + ||D2 u||^2)`
    pub gradient_integral: f64,
    /// Data constant `E(0) + int |<f, u>|`.
    pub data_constant: f64,
    /// Bound on `sup_t ||u||`: `sqrt(2 * data_constant)`.
    pub norm_bound: f64,
    /// Bound on the gradient integral: `data_constant / nu`.
    pub gradient_bound: f64,
}

/// Evaluates both a-priori statistics and their data bounds, failing if
/// either statistic exceeds its bound beyond the accumulation tolerance.
pub fn apriori_bounds(ledger: &EnergyLedger) -> Result<AprioriBounds> {
    if ledger.rows.is_empty() {
        return Err(Error::InvalidArgument("empty ledger".into()));
    }
    let sup_norm = ledger.rows.iter().map(|r| (2.0 * r.energy).sqrt()).fold(0.0, f64::max);
    let g: Vec<f64> = ledger.rows.iter().map(|r| r.d1 + r.d2).collect();
    let gradient_integral = *cumulative_integral(&g, ledger.dt).last().unwrap();
    let data_constant = ledger.initial_energy() + ledger.total_abs_work();
    let tol = ledger.tolerance();
    let bounds = AprioriBounds {
        sup_norm,
        gradient_integral,
        data_constant,
        norm_bound: (2.0 * (data_constant + tol)).sqrt(),
        gradient_bound: (data_constant + tol) / ledger.nu,
    };
    if bounds.sup_norm > bounds.norm_bound {
        return Err(Error::BoundViolation(format!(
            "sup ||u|| = {:e} exceeds the data bound {:e}",
            bounds.sup_norm, bounds.norm_bound
        )));
    }
    if bounds.gradient_integral > bounds.gradient_bound {
        return Err(Error::BoundViolation(format!(
            "int ||grad u||^2 = {:e} exceeds the data bound {:e}",
            bounds.gradient_integral, bounds.gradient_bound
        )));
    }
    Ok(bounds)
}

/// Direction of the initial perturbation in the uniqueness experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// A single basis function, given by component and mode index.
    Mode { component: usize, index: usize },
    /// A seeded random coefficient vector.
    Random { seed: u64 },
}

/// Everything needed to run one solve from given initial coefficients.
pub struct Problem<'a> {
    pub tensors: &'a OperatorTensors,
    pub forcing: &'a dyn Forcing,
    pub nu: f64,
    pub grid: TimeGrid,
    pub initial: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub delta: f64,
    pub times: Vec<f64>,
    /// `||u - v||(t)`
    pub w_norm: Vec<f64>,
    /// `||grad u||^2(t)`
    pub grad_norm_sq: Vec<f64>,
    /// `int_0^t ||grad u||^2`
    pub grad_integral: Vec<f64>,
    /// Smallest `C` with `||w|| <= delta exp(2 C int ||grad u||^2)`.
    pub fitted_c: f64,
    pub bound: Vec<f64>,
    pub max_w: f64,
    /// Reference size for the zero-perturbation test, `sup_t ||u||`.
    pub scale: f64,
    /// Largest relative defect of the discrete difference identity.
    pub identity_residual: f64,
    pub pass: bool,
}

fn perturbation_vector(tensors: &OperatorTensors, p: Perturbation) -> Result<DVector<f64>> {
    let n = tensors.basis().len();
    let mut v = DVector::zeros(3 * n);
    match p {
        Perturbation::Mode { component, index } => {
            if component >= 3 || index >= n {
                return Err(Error::InvalidArgument(format!(
                    "perturbation mode ({component}, {index}) outside {n} modes x 3 components"
                )));
            }
            v[component * n + index] = 1.0;
        }
        Perturbation::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (k, x) in v.iter_mut().enumerate() {
                // spectral decay keeps the perturbation smooth
                let lam = tensors.basis().eigenvalue(k % n);
                *x = rng.random_range(-1.0..1.0) / lam;
            }
        }
    }
    Ok(tensors.project(&v))
}

/// Solves the problem twice, from `u0` and from `u0 + w0` with
/// `||w0|| = delta` after projection, and fits the Grönwall envelope.
pub fn uniqueness_experiment(problem: &Problem, delta: f64, perturbation: Perturbation) -> Result<ContractionReport> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
    }
    let t = problem.tensors;
    let u0 = t.project(&problem.initial);
    let mut v0 = u0.clone();
    if delta > 0.0 {
        let w0 = perturbation_vector(t, perturbation)?;
        let norm = t.mass_norm_sq(&w0).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("perturbation vanishes after projection".into()));
        }
        v0 += w0 * (delta / norm);
    }
    let run = |x: DVector<f64>| integrate(GalerkinState::new(x, 0.0), t, problem.forcing, problem.nu, problem.grid);
    let (u, v) = std::thread::scope(|s| {
        let hu = s.spawn(|| run(u0));
        let v = run(v0);
        (hu.join().expect("solver thread panicked"), v)
    });
    let report = contraction_from_traces(t, &u?, &v?, delta, problem.nu)?;
    info!(
        "contraction: delta={delta:e}, fitted C={:.6}, max ||w||={:e}, pass={}",
        report.fitted_c, report.max_w, report.pass
    );
    Ok(report)
}

/// Builds the contraction report from two trajectories on the same grid.
pub fn contraction_from_traces(
    tensors: &OperatorTensors,
    u: &[GalerkinState],
    v: &[GalerkinState],
    delta: f64,
    nu: f64,
) -> Result<ContractionReport> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "trajectories differ in length ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let dt = uniform_step(u);
    let times: Vec<f64> = u.iter().map(|s| s.time).collect();
    let w: Vec<DVector<f64>> = u.iter().zip(v).map(|(a, b)| &a.coeffs - &b.coeffs).collect();
    let w_norm: Vec<f64> = w.iter().map(|x| tensors.mass_norm_sq(x).sqrt()).collect();
    let grad_norm_sq: Vec<f64> = u.iter().map(|s| tensors.gradient_norm_sq(&s.coeffs)).collect();
    let grad_integral = cumulative_integral(&grad_norm_sq, dt);
    let scale = u.iter().map(|s| tensors.mass_norm_sq(&s.coeffs).sqrt()).fold(0.0, f64::max);
    let max_w = w_norm.iter().copied().fold(0.0, f64::max);

    let (fitted_c, bound, pass) = if delta == 0.0 {
        let ok = w_norm.iter().all(|x| *x <= 1e-12 * scale);
        (0.0, vec![0.0; times.len()], ok)
    } else {
        let mut c = f64::NEG_INFINITY;
        for (wn, g) in w_norm.iter().zip(&grad_integral).skip(1) {
            if *g > 0.0 {
                c = c.max((wn / delta).ln() / (2.0 * g));
            }
        }
        if !c.is_finite() {
            c = 0.0;
        }
        let bound: Vec<f64> = grad_integral.iter().map(|g| delta * (2.0 * c * g).exp()).collect();
        let ok = w_norm
            .iter()
            .zip(&bound)
            .all(|(wn, b)| wn.is_finite() && *wn <= b * (1.0 + 1e-6));
        (c, bound, ok)
    };
    if !pass {
        warn!("contraction envelope violated (max ||w|| = {max_w:e})");
    }
    let identity_residual = difference_identity_residual(tensors, u, &w, nu, dt);
    Ok(ContractionReport {
        delta,
        times,
        w_norm,
        grad_norm_sq,
        grad_integral,
        fitted_c,
        bound,
        max_w,
        scale,
        identity_residual,
        pass,
    })
}

/// Relative defect of `d/dt ||w||^2 / 2 + nu ||w||_A^2 + b~(w, u, w) = 0`
/// along the stored frames, normalized by the size of its terms.
fn difference_identity_residual(tensors: &OperatorTensors, u: &[GalerkinState], w: &[DVector<f64>], nu: f64, dt: f64) -> f64 {
    if w.len() < 3 {
        return 0.0;
    }
    let half_sq: Vec<f64> = w.iter().map(|x| 0.5 * tensors.mass_norm_sq(x)).collect();
    let dq = time_derivative(&half_sq, dt);
    let mut worst: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (k, (x, s)) in w.iter().zip(u).enumerate() {
        let diss = nu * (tensors.gradient_norm_sq(x) + tensors.cross_norm_sq(x));
        let conv = if tensors.nonlinear() {
            tensors.trilinear_value(x, &s.coeffs, x)
        } else {
            0.0
        };
        worst = worst.max((dq[k] + diss + conv).abs());
        size = size.max(dq[k].abs() + diss + conv.abs());
    }
    if size == 0.0 {
        0.0
    } else {
        worst / size
    }
}

impl ContractionReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}
