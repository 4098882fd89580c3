use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor-product Dirichlet sine basis `sin(m pi x / L1) sin(n pi y / L2)`,
/// `1 <= m <= N1`, `1 <= n <= N2`, ordered by eigenvalue (ties by `(m, n)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    nmodes: [usize; 2],
    extents: [f64; 2],
    modes: Vec<(usize, usize)>,
    /// `lookup[(m-1) * N2 + (n-1)]` is the sorted index of `(m, n)`.
    lookup: Vec<usize>,
}

impl SpectralBasis {
    pub fn new(nmodes: [usize; 2], extents: [f64; 2]) -> Result<Self> {
        if nmodes.contains(&0) {
            return Err(Error::InvalidArgument(format!("mode counts {nmodes:?} must be >= 1")));
        }
        if extents.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("extents {extents:?} must be positive")));
        }
        let mut modes: Vec<(usize, usize)> = (1..=nmodes[0])
            .flat_map(|m| (1..=nmodes[1]).map(move |n| (m, n)))
            .collect();
        let lam = |(m, n): (usize, usize)| {
            PI * PI * ((m * m) as f64 / (extents[0] * extents[0]) + (n * n) as f64 / (extents[1] * extents[1]))
        };
        modes.sort_by(|a, b| lam(*a).total_cmp(&lam(*b)).then(a.cmp(b)));
        let mut lookup = vec![0; modes.len()];
        for (i, (m, n)) in modes.iter().enumerate() {
            lookup[(m - 1) * nmodes[1] + (n - 1)] = i;
        }
        Ok(Self {
            nmodes,
            extents,
            modes,
            lookup,
        })
    }

    pub fn nmodes(&self) -> [usize; 2] {
        self.nmodes
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    /// Number of scalar modes `N1 * N2`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Length of a three-component coefficient vector.
    pub fn state_len(&self) -> usize {
        3 * self.len()
    }

    pub fn index_of(&self, m: usize, n: usize) -> usize {
        self.lookup[(m - 1) * self.nmodes[1] + (n - 1)]
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        let (m, n) = self.modes[i];
        let (l1, l2) = (self.extents[0], self.extents[1]);
        PI * PI * ((m * m) as f64 / (l1 * l1) + (n * n) as f64 / (l2 * l2))
    }

    /// First Dirichlet eigenvalue of the rectangle, `pi^2 (1/L1^2 + 1/L2^2)`.
    pub fn lambda1(&self) -> f64 {
        let (l1, l2) = (self.extents[0], self.extents[1]);
        PI * PI * (1.0 / (l1 * l1) + 1.0 / (l2 * l2))
    }

    pub fn lambda_max(&self) -> f64 {
        (0..self.len()).map(|i| self.eigenvalue(i)).fold(0.0, f64::max)
    }

    /// `<w_i, w_i>` for every mode (the sine family is orthogonal).
    pub fn mass_diagonal(&self) -> f64 {
        0.25 * self.extents[0] * self.extents[1]
    }

    pub fn evaluate(&self, i: usize, x: f64, y: f64) -> f64 {
        let (m, n) = self.modes[i];
        (m as f64 * PI * x / self.extents[0]).sin() * (n as f64 * PI * y / self.extents[1]).sin()
    }

    /// One component of a state vector as an `N1 x N2` grid `A[m-1, n-1]`.
    pub fn to_grid(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let [n1, n2] = self.nmodes;
        DMatrix::from_fn(n1, n2, |a, b| coeffs[self.lookup[a * n2 + b]])
    }

    pub fn from_grid(&self, grid: &DMatrix<f64>, out: &mut [f64]) {
        let [n1, n2] = self.nmodes;
        for a in 0..n1 {
            for b in 0..n2 {
                out[self.lookup[a * n2 + b]] = grid[(a, b)];
            }
        }
    }

    /// Sine and scaled-cosine tables on `points` along `axis`:
    /// `S[q, m-1] = sin(m pi x_q / L)`, `D[q, m-1] = (m pi / L) cos(m pi x_q / L)`.
    pub fn tables(&self, axis: usize, points: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let l = self.extents[axis];
        let nm = self.nmodes[axis];
        let s = DMatrix::from_fn(points.len(), nm, |q, m| ((m + 1) as f64 * PI * points[q] / l).sin());
        let d = DMatrix::from_fn(points.len(), nm, |q, m| {
            let k = (m + 1) as f64 * PI / l;
            k * (k * points[q]).cos()
        });
        (s, d)
    }

    pub fn zero_state(&self) -> DVector<f64> {
        DVector::zeros(self.state_len())
    }
}
