//! Closed-form solenoidal test solution and the forcing that produces it.
//!
//! With `X = sin^k(pi x / L1)`, `Y = sin^k(pi y / L2)` and a stream
//! function `psi = g(t) X Y`, the field
//!
//! ```text
//! u1 = psi_y - c1 u3,   u2 = -psi_x - c2 u3,   u3 = g3(t) sin^3(pi x / L1) sin(pi y / L2)
//! ```
//!
//! satisfies `D1 (u1 + c1 u3) + D2 (u2 + c2 u3) = 0` pointwise for every
//! chart, and vanishes on the boundary for `k >= 2`.

use std::f64::consts::PI;

use nalgebra::DVector;

use super::assembly::{assemble_with_coupling, OperatorTensors};
use super::basis::SpectralBasis;
use super::integrate::{integrate, project_function, Forcing, GalerkinState, TimeGrid};
use super::quadrature::gauss_legendre;
use crate::error::Result;

/// Value and first three derivatives of `sin^k(p x)`.
pub fn sin_power_jet(k: u32, p: f64, x: f64) -> [f64; 4] {
    let (s, c) = (p * x).sin_cos();
    let kf = k as f64;
    let pw = |e: i32| if e < 0 { 0.0 } else { s.powi(e) };
    let k = k as i32;
    [
        pw(k),
        kf * p * pw(k - 1) * c,
        kf * p * p * ((kf - 1.0) * pw(k - 2) * c * c - pw(k)),
        kf * p.powi(3) * ((kf - 1.0) * (kf - 2.0) * pw(k - 3) * c.powi(3) - (3.0 * kf - 2.0) * pw(k - 1) * c),
    ]
}

#[derive(Debug, Clone)]
pub struct ManufacturedSolution {
    pub extents: [f64; 2],
    pub coupling: (f64, f64),
    pub nu: f64,
    /// Exponent of the stream-function profile.
    pub power: u32,
}

impl ManufacturedSolution {
    pub fn new(extents: [f64; 2], coupling: (f64, f64), nu: f64) -> Self {
        Self {
            extents,
            coupling,
            nu,
            power: 5,
        }
    }

    fn g(t: f64) -> [f64; 2] {
        [1.0 + 0.5 * (3.0 * t).sin(), 1.5 * (3.0 * t).cos()]
    }

    fn g3(t: f64) -> [f64; 2] {
        [0.5 * (2.0 * t).cos(), -(2.0 * t).sin()]
    }

    /// Mixed derivative `d^ix/dx d^iy/dy` of all three components; `dot`
    /// selects the time derivative of the amplitudes instead.
    fn derivative(&self, t: f64, x: f64, y: f64, ix: usize, iy: usize, dot: bool) -> [f64; 3] {
        let [l1, l2] = self.extents;
        let (p1, p2) = (PI / l1, PI / l2);
        let sx = sin_power_jet(self.power, p1, x);
        let sy = sin_power_jet(self.power, p2, y);
        let px = sin_power_jet(3, p1, x);
        let qy = sin_power_jet(1, p2, y);
        let d = usize::from(dot);
        let (g, g3) = (Self::g(t)[d], Self::g3(t)[d]);
        let (c1, c2) = self.coupling;
        let w = g3 * px[ix] * qy[iy];
        [g * sx[ix] * sy[iy + 1] - c1 * w, -g * sx[ix + 1] * sy[iy] - c2 * w, w]
    }

    pub fn velocity(&self, t: f64, x: f64, y: f64) -> [f64; 3] {
        self.derivative(t, x, y, 0, 0, false)
    }

    /// `f = u_t - nu A1 u + (U . grad) u` evaluated pointwise.
    pub fn forcing(&self, t: f64, x: f64, y: f64) -> [f64; 3] {
        let (c1, c2) = self.coupling;
        let d = |ix, iy| self.derivative(t, x, y, ix, iy, false);
        let u = d(0, 0);
        let (ux, uy) = (d(1, 0), d(0, 1));
        let (uxx, uxy, uyy) = (d(2, 0), d(1, 1), d(0, 2));
        let ut = self.derivative(t, x, y, 0, 0, true);
        let big_u = [u[0] + c1 * u[2], u[1] + c2 * u[2]];
        std::array::from_fn(|i| {
            let a1 = (1.0 + c1 * c1) * uxx[i] + 2.0 * c1 * c2 * uxy[i] + (1.0 + c2 * c2) * uyy[i];
            ut[i] - self.nu * a1 + big_u[0] * ux[i] + big_u[1] * uy[i]
        })
    }

    pub fn coefficients(&self, basis: &SpectralBasis, t: f64, order: usize) -> DVector<f64> {
        project_function(basis, order, |x, y| self.velocity(t, x, y))
    }

    /// `L^2` distance between a Galerkin state and the exact solution at `t`.
    pub fn l2_error(&self, basis: &SpectralBasis, coeffs: &DVector<f64>, t: f64, order: usize) -> f64 {
        let [l1, l2] = self.extents;
        let (x, wx) = gauss_legendre(order, 0.0, l1);
        let (y, wy) = gauss_legendre(order, 0.0, l2);
        let (sx, _) = basis.tables(0, &x);
        let (sy, _) = basis.tables(1, &y);
        let n = basis.len();
        let vals: Vec<_> = (0..3)
            .map(|c| &sx * basis.to_grid(&coeffs.as_slice()[c * n..(c + 1) * n]) * sy.transpose())
            .collect();
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                let exact = self.velocity(t, *xi, *yj);
                let e2: f64 = (0..3).map(|c| (vals[c][(i, j)] - exact[c]).powi(2)).sum();
                acc += wx[i] * wy[j] * e2;
            }
        }
        acc.sqrt()
    }
}

/// Forcing that reproduces a [`ManufacturedSolution`].
pub struct ManufacturedForcing<'a> {
    pub solution: &'a ManufacturedSolution,
    pub basis: &'a SpectralBasis,
    pub order: usize,
}

impl Forcing for ManufacturedForcing<'_> {
    fn coefficients(&self, t: f64) -> DVector<f64> {
        project_function(self.basis, self.order, |x, y| self.solution.forcing(t, x, y))
    }
}

/// Quadrature order used to project manufactured data onto `basis`.
pub fn manufactured_order(basis: &SpectralBasis, power: u32) -> usize {
    let nmax = basis.nmodes()[0].max(basis.nmodes()[1]);
    2 * nmax + 3 * power as usize + 24
}

/// Result of one manufactured-solution run.
#[derive(Debug, Clone)]
pub struct MmsRun {
    pub tensors: OperatorTensors,
    pub trace: Vec<GalerkinState>,
    /// `L^2` error against the exact solution at the final time.
    pub error: f64,
}

/// Solves the manufactured problem on an `n x n` basis up to `grid.t_final`.
pub fn run_mms(solution: &ManufacturedSolution, n: usize, grid: TimeGrid) -> Result<MmsRun> {
    let basis = SpectralBasis::new([n, n], solution.extents)?;
    let tensors = assemble_with_coupling(&basis, solution.coupling, 0);
    let order = manufactured_order(&basis, solution.power);
    let u0 = tensors.project(&solution.coefficients(&basis, 0.0, order));
    let forcing = ManufacturedForcing {
        solution,
        basis: &basis,
        order,
    };
    let trace = integrate(GalerkinState::new(u0, 0.0), &tensors, &forcing, solution.nu, grid)?;
    let last = trace.last().expect("trace holds the initial state");
    let error = solution.l2_error(&basis, &last.coeffs, last.time, order + 16);
    Ok(MmsRun { tensors, trace, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_matches_finite_differences() {
        let h = 1e-4;
        for k in [1, 2, 3, 5, 6] {
            for x in [0.1, 0.37, 0.8] {
                let j = sin_power_jet(k, 2.5, x);
                let (a, b) = (sin_power_jet(k, 2.5, x - h), sin_power_jet(k, 2.5, x + h));
                for d in 0..3 {
                    let fd = (b[d] - a[d]) / (2.0 * h);
                    assert!((fd - j[d + 1]).abs() < 1e-5 * (1.0 + j[d + 1].abs()), "k={k} d={d}");
                }
            }
        }
    }

    #[test]
    fn exact_field_is_solenoidal_and_vanishes_on_boundary() {
        let m = ManufacturedSolution::new([1.0, 1.3], (-0.4, 0.7), 0.1);
        let (c1, c2) = m.coupling;
        for (x, y) in [(0.2, 0.3), (0.55, 1.0), (0.9, 0.1)] {
            let ux = m.derivative(0.3, x, y, 1, 0, false);
            let uy = m.derivative(0.3, x, y, 0, 1, false);
            let div = ux[0] + c1 * ux[2] + uy[1] + c2 * uy[2];
            assert!(div.abs() < 1e-12);
        }
        for t in [0.0, 0.7] {
            for s in [0.0, 0.4, 1.0] {
                for p in [m.velocity(t, 0.0, s * 1.3), m.velocity(t, 1.0, s * 1.3), m.velocity(t, s, 0.0), m.velocity(t, s, 1.3)] {
                    assert!(p.iter().all(|v| v.abs() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn forcing_matches_finite_difference_residual() {
        let m = ManufacturedSolution::new([1.0, 1.0], (-0.5, -0.5), 0.1);
        let (c1, c2) = m.coupling;
        let (t, x, y, h) = (0.2, 0.31, 0.62, 1e-3);
        let u = |t, x, y| m.velocity(t, x, y);
        let f = m.forcing(t, x, y);
        let u0 = u(t, x, y);
        for i in 0..3 {
            let ut = (u(t + h, x, y)[i] - u(t - h, x, y)[i]) / (2.0 * h);
            let ux = (u(t, x + h, y)[i] - u(t, x - h, y)[i]) / (2.0 * h);
            let uy = (u(t, x, y + h)[i] - u(t, x, y - h)[i]) / (2.0 * h);
            let uxx = (u(t, x + h, y)[i] - 2.0 * u0[i] + u(t, x - h, y)[i]) / (h * h);
            let uyy = (u(t, x, y + h)[i] - 2.0 * u0[i] + u(t, x, y - h)[i]) / (h * h);
            let uxy = (u(t, x + h, y + h)[i] - u(t, x + h, y - h)[i] - u(t, x - h, y + h)[i] + u(t, x - h, y - h)[i])
                / (4.0 * h * h);
            let a1 = (1.0 + c1 * c1) * uxx + 2.0 * c1 * c2 * uxy + (1.0 + c2 * c2) * uyy;
            let adv = (u0[0] + c1 * u0[2]) * ux + (u0[1] + c2 * u0[2]) * uy;
            let fd = ut - m.nu * a1 + adv;
            assert!((fd - f[i]).abs() < 1e-3 * (1.0 + f[i].abs()), "component {i}: {fd} vs {}", f[i]);
        }
    }
}
