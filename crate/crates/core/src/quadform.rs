//! Symmetric velocity-gradient quadratic form and the pointwise uniqueness
//! criterion.
//!
//! At each grid point `B(w, w) = sum_jk a_jk w_j w_k` with
//! `a_jk = (D_j v_k + D_k v_j) / 2`. Jacobi's method writes it as
//! `b1 y1^2 + b2 y2^2 + b3 y3^2` with `b_k` ratios of leading principal
//! minors and `y = T w` for a unit upper-triangular `T`. Where a leading
//! minor vanishes the eigen-decomposition is used instead.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldio::{Field, TimeSeriesField};

pub type Mat3 = [[f64; 3]; 3];

/// Default relative pivot tolerance: minor `k` counts as degenerate when
/// `|det M_k| <= tol * max|a_ij|^k`.
pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-8;

/// Relative slack on the closed inequality of the criterion, absorbing
/// rounding in the transform.
pub const CRITERION_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StrainMatrixField {
    pub dims: [usize; 3],
    pub extents: [f64; 3],
    /// `gradient[p][i][k] = D_i v_k` at point `p` (first axis fastest).
    pub gradient: Vec<Mat3>,
    pub strain: Vec<Mat3>,
}

fn check_3d_vector(v: &Field) -> Result<([usize; 3], [f64; 3])> {
    if v.ndims() != 3 || v.ncomp() != 3 {
        return Err(Error::InvalidField(format!(
            "need a 3D field with 3 components, got {}D with {}",
            v.ndims(),
            v.ncomp()
        )));
    }
    let d = v.dims();
    let e = v.extents();
    Ok(([d[0], d[1], d[2]], [e[0], e[1], e[2]]))
}

/// Second-order derivative along one axis at index `i` of a line of
/// samples `f(j)`, `0 <= j < n`.
fn diff(n: usize, h: f64, i: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n == 2 {
        return (f(1) - f(0)) / h;
    }
    if i == 0 {
        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

pub fn strain_field(v: &Field) -> Result<StrainMatrixField> {
    let (dims, extents) = check_3d_vector(v)?;
    let npts = v.npoints();
    let mut gradient = vec![[[0.0; 3]; 3]; npts];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let idx = [x, y, z];
                let p = v.flat_index(&idx);
                for axis in 0..3 {
                    let h = v.spacing(axis);
                    for k in 0..3 {
                        gradient[p][axis][k] = diff(dims[axis], h, idx[axis], |j| {
                            let mut at = idx;
                            at[axis] = j;
                            v.value(k, &at)
                        });
                    }
                }
            }
        }
    }
    let strain = gradient.iter().map(symmetrize).collect();
    Ok(StrainMatrixField {
        dims,
        extents,
        gradient,
        strain,
    })
}

pub fn symmetrize(g: &Mat3) -> Mat3 {
    std::array::from_fn(|j| std::array::from_fn(|k| 0.5 * (g[j][k] + g[k][j])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jacobi,
    EigenFallback,
}

/// Counts of positive, zero and negative canonical coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Inertia {
    fn from_signs(values: &[f64], zero_below: &[f64]) -> Self {
        let mut s = Inertia {
            positive: 0,
            zero: 0,
            negative: 0,
        };
        for (v, z) in values.iter().zip(zero_below) {
            if v.abs() <= *z {
                s.zero += 1;
            } else if *v > 0.0 {
                s.positive += 1;
            } else {
                s.negative += 1;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    pub b: [f64; 3],
    /// Change of variables `y = T w`.
    pub transform: Mat3,
    pub inertia: Inertia,
    pub method: Method,
}

fn max_abs(a: &Mat3) -> f64 {
    a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn det2(a: &Mat3) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inertia of a symmetric matrix from its eigenvalues.
pub fn eigen_inertia(a: &Mat3) -> Inertia {
    let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| a[i][j]));
    let top = eig.eigenvalues.amax();
    let z = 1e-12 * top;
    Inertia::from_signs(eig.eigenvalues.as_slice(), &[z; 3])
}

/// Jacobi canonical form of one symmetric matrix; `pivot_tol` is relative
/// (see [`DEFAULT_PIVOT_TOLERANCE`]).
pub fn canonicalize_matrix(a: &Mat3, pivot_tol: f64) -> CanonicalForm {
    let s = max_abs(a);
    let (d1, d2, d3) = (a[0][0], det2(a), det3(a));
    if s > 0.0 && d1.abs() > pivot_tol * s && d2.abs() > pivot_tol * s * s {
        let b = [d1, d2 / d1, d3 / d2];
        let m23 = a[1][2] - a[0][1] * a[0][2] / a[0][0];
        let transform = [
            [1.0, a[0][1] / a[0][0], a[0][2] / a[0][0]],
            [0.0, 1.0, m23 / b[1]],
            [0.0, 0.0, 1.0],
        ];
        // b3 vanishes exactly when det M3 does
        let z3 = pivot_tol * s * s * s / d2.abs();
        return CanonicalForm {
            b,
            transform,
            inertia: Inertia::from_signs(&b, &[0.0, 0.0, z3]),
            method: Method::Jacobi,
        };
    }
    let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| a[i][j]));
    let b = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    let q = eig.eigenvectors;
    let z = 1e-12 * s;
    CanonicalForm {
        b,
        transform: std::array::from_fn(|j| std::array::from_fn(|k| q[(k, j)])),
        inertia: Inertia::from_signs(&b, &[z; 3]),
        method: Method::EigenFallback,
    }
}

/// `w^T A w`, the reference evaluation.
pub fn quadform_value(a: &Mat3, w: [f64; 3]) -> f64 {
    let (m, v) = (Matrix3::from_fn(|i, j| a[i][j]), Vector3::from(w));
    v.dot(&(m * v))
}

impl CanonicalForm {
    pub fn variables(&self, w: [f64; 3]) -> [f64; 3] {
        let t = &self.transform;
        std::array::from_fn(|j| t[j][0] * w[0] + t[j][1] * w[1] + t[j][2] * w[2])
    }

    /// `sum_j b_j y_j^2` with `y = T w`.
    pub fn value(&self, w: [f64; 3]) -> f64 {
        let y = self.variables(w);
        (0..3).map(|j| self.b[j] * y[j] * y[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormDecomposition {
    pub forms: Vec<CanonicalForm>,
}

impl QuadFormDecomposition {
    pub fn degenerate_fraction(&self) -> f64 {
        if self.forms.is_empty() {
            return 0.0;
        }
        let n = self.forms.iter().filter(|f| f.method == Method::EigenFallback).count();
        n as f64 / self.forms.len() as f64
    }

    /// `(inertia, count)` pairs sorted by inertia.
    pub fn inertia_histogram(&self) -> Vec<(Inertia, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for f in &self.forms {
            *h.entry(f.inertia).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }
}

pub fn canonicalize(strain: &StrainMatrixField, pivot_tol: f64) -> Result<QuadFormDecomposition> {
    if !(pivot_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("pivot tolerance must be > 0, got {pivot_tol}")));
    }
    Ok(QuadFormDecomposition {
        forms: strain.strain.iter().map(|a| canonicalize_matrix(a, pivot_tol)).collect(),
    })
}

/// `int B(w, w) dx`: the nodal integrand is interpolated multilinearly and
/// integrated with the cell-midpoint rule (exact for the interpolant).
pub fn signed_integral(strain: &StrainMatrixField, w: &Field) -> Result<f64> {
    let (dims, extents) = check_3d_vector(w)?;
    if dims != strain.dims || extents.iter().zip(&strain.extents).any(|(a, b)| (a - b).abs() > 1e-12 * b) {
        return Err(Error::InvalidField("strain and test field shapes differ".into()));
    }
    let integrand: Vec<f64> = (0..w.npoints())
        .map(|p| {
            let wp = [w.data()[p], w.data()[w.npoints() + p], w.data()[2 * w.npoints() + p]];
            quadform_value(&strain.strain[p], wp)
        })
        .collect();
    Ok(midpoint_integral(&integrand, dims, extents))
}

pub(crate) fn midpoint_integral(f: &[f64], dims: [usize; 3], extents: [f64; 3]) -> f64 {
    let h: [f64; 3] = std::array::from_fn(|a| extents[a] / (dims[a] - 1) as f64);
    let at = |x: usize, y: usize, z: usize| f[x + dims[0] * (y + dims[1] * z)];
    let mut acc = 0.0;
    for z in 0..dims[2] - 1 {
        for y in 0..dims[1] - 1 {
            for x in 0..dims[0] - 1 {
                let mut s = 0.0;
                for c in 0..8 {
                    s += at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                }
                acc += s / 8.0;
            }
        }
    }
    acc * h[0] * h[1] * h[2]
}

/// `||D_i v_j||_2` for every axis `i` and component `j`, from the sine
/// expansion of the interior samples (the field is taken to vanish on the
/// boundary). Returned as `norms[j][i]`.
pub fn gradient_norms(v: &Field) -> Vec<Vec<f64>> {
    let nd = v.ndims();
    let dims = v.dims().to_vec();
    let ext = v.extents().to_vec();
    let modes: Vec<usize> = dims.iter().map(|d| d.saturating_sub(2)).collect();
    let vol: f64 = ext.iter().product();
    let mut out = Vec::with_capacity(v.ncomp());
    for c in 0..v.ncomp() {
        let coeffs = sine_coefficients(v.component(c), &dims);
        let mut norms = vec![0.0; nd];
        let total: usize = modes.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            let mut k = vec![0usize; nd];
            for a in 0..nd {
                k[a] = rem % modes[a] + 1;
                rem /= modes[a];
            }
            let a2 = coeffs[flat] * coeffs[flat];
            for (a, n) in norms.iter_mut().enumerate() {
                let wave = k[a] as f64 * PI / ext[a];
                *n += wave * wave * a2;
            }
        }
        // Parseval for the product sine basis: ||s||^2 = vol / 2^nd
        let scale = vol / (1u64 << nd) as f64;
        out.push(norms.iter().map(|n| (n * scale).sqrt()).collect());
    }
    out
}

/// DST-I of the interior samples along every axis; coefficient layout is
/// first axis fastest over `dims[a] - 2` modes each.
fn sine_coefficients(samples: &[f64], dims: &[usize]) -> Vec<f64> {
    let nd = dims.len();
    let mut shape: Vec<usize> = dims.to_vec();
    let mut data = samples.to_vec();
    for axis in 0..nd {
        let n = dims[axis];
        let m = n.saturating_sub(2);
        let table: Vec<f64> = (0..m * n)
            .map(|q| {
                let (k, j) = (q / n + 1, q % n);
                2.0 / (n - 1) as f64 * (PI * (k * j) as f64 / (n - 1) as f64).sin()
            })
            .collect();
        let stride: usize = shape[..axis].iter().product();
        let outer: usize = shape[axis + 1..].iter().product();
        let mut new_shape = shape.clone();
        new_shape[axis] = m;
        let mut next = vec![0.0; stride * m * outer];
        for o in 0..outer {
            for s in 0..stride {
                for k in 0..m {
                    let mut acc = 0.0;
                    for j in 1..n - 1 {
                        acc += table[k * n + j] * data[s + stride * (j + n * o)];
                    }
                    next[s + stride * (k + m * o)] = acc;
                }
            }
        }
        data = next;
        shape = new_shape;
    }
    data
}

/// First Dirichlet eigenvalue of a box, `pi^2 sum 1 / L_i^2`.
pub fn box_lambda1(extents: &[f64]) -> f64 {
    PI * PI * extents.iter().map(|l| 1.0 / (l * l)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub time: f64,
    /// `c^2 sum_i ||D_i v_j||` for each component `j`.
    pub rhs: Vec<f64>,
    pub satisfied: Vec<bool>,
    /// `c^2 sum_ij ||D_i v_j||`, the joint reading of the criterion.
    pub rhs_joint: f64,
    pub satisfied_joint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub nu: f64,
    pub lambda1: f64,
    pub c_gn: f64,
    /// `nu * lambda1^(1/4)`
    pub lhs: f64,
    pub rows: Vec<CriterionRow>,
    /// Every component satisfied at every time.
    pub satisfied: bool,
    pub satisfied_joint: bool,
}

pub fn uniqueness_criterion(series: &TimeSeriesField, nu: f64, lambda1: f64, c_gn: f64) -> Result<CriterionReport> {
    if !(lambda1 > 0.0) || !(c_gn > 0.0) || !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need nu, lambda1, c_gn > 0, got {nu}, {lambda1}, {c_gn}"
        )));
    }
    let lhs = nu * lambda1.powf(0.25);
    let holds = |r: f64| lhs >= r * (1.0 - CRITERION_ROUNDING);
    let rows: Vec<CriterionRow> = series
        .times()
        .iter()
        .zip(series.frames())
        .map(|(t, f)| {
            let norms = gradient_norms(f);
            let rhs: Vec<f64> = norms.iter().map(|n| c_gn * c_gn * n.iter().sum::<f64>()).collect();
            let rhs_joint = rhs.iter().sum();
            CriterionRow {
                time: *t,
                satisfied: rhs.iter().map(|r| holds(*r)).collect(),
                rhs,
                rhs_joint,
                satisfied_joint: holds(rhs_joint),
            }
        })
        .collect();
    Ok(CriterionReport {
        nu,
        lambda1,
        c_gn,
        lhs,
        satisfied: rows.iter().all(|r| r.satisfied.iter().all(|s| *s)),
        satisfied_joint: rows.iter().all(|r| r.satisfied_joint),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub time: f64,
    pub degenerate_fraction: f64,
    pub inertia_histogram: Vec<(Inertia, usize)>,
    /// Largest `|trace a|`, which is the discrete divergence.
    pub max_abs_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadformReport {
    pub criterion: CriterionReport,
    pub frames: Vec<FrameSummary>,
    pub signed_integral: Option<f64>,
}

impl QuadformReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::analysis::write_json(self, path)
    }
}

pub fn frame_summary(time: f64, decomposition: &QuadFormDecomposition, strain: &StrainMatrixField) -> FrameSummary {
    FrameSummary {
        time,
        degenerate_fraction: decomposition.degenerate_fraction(),
        inertia_histogram: decomposition.inertia_histogram(),
        max_abs_trace: strain
            .strain
            .iter()
            .map(|a| (a[0][0] + a[1][1] + a[2][2]).abs())
            .fold(0.0, f64::max),
    }
}

/// The canonical coefficients as a three-component field on the strain grid.
pub fn coefficient_field(strain: &StrainMatrixField, decomposition: &QuadFormDecomposition) -> Result<Field> {
    let n = decomposition.forms.len();
    let mut data = vec![0.0; 3 * n];
    for (p, f) in decomposition.forms.iter().enumerate() {
        for j in 0..3 {
            data[j * n + p] = f.b[j];
        }
    }
    Field::new(strain.dims.to_vec(), strain.extents.to_vec(), 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
        Field::from_fn(vec![n, n, n], vec![1.0, 1.0, 1.0], 3, f).unwrap()
    }

    #[test]
    fn rigid_rotation_has_no_strain() {
        let s = strain_field(&cube(5, |p| vec![-p[1], p[0], 0.0])).unwrap();
        assert!(s.strain.iter().flatten().flatten().all(|v| v.abs() < 1e-12));
        assert!((s.gradient[0][1][0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_field_strain_is_exact() {
        let s = strain_field(&cube(4, |p| vec![p[0], -p[1], 0.0])).unwrap();
        for a in &s.strain {
            let want = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]];
            for j in 0..3 {
                for k in 0..3 {
                    assert!((a[j][k] - want[j][k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trigonometric_strain_converges_at_second_order() {
        let v = |p: &[f64]| vec![(p[1] * 2.0).sin() * p[2].cos(), (p[0] + p[2]).sin(), p[0] * p[1]];
        let exact_a01 = |p: &[f64]| 0.5 * (2.0 * (2.0 * p[1]).cos() * p[2].cos() + (p[0] + p[2]).cos());
        let err = |n: usize| {
            let f = cube(n, v);
            let s = strain_field(&f).unwrap();
            let mut e: f64 = 0.0;
            for (p, a) in s.strain.iter().enumerate() {
                let idx = [p % n, (p / n) % n, p / (n * n)];
                let x: Vec<f64> = idx.iter().map(|i| *i as f64 / (n - 1) as f64).collect();
                e = e.max((a[0][1] - exact_a01(&x)).abs());
            }
            e
        };
        let rate = (err(17) / err(33)).log2();
        assert!(rate >= 1.9, "{rate}");
    }

    #[test]
    fn identity_and_diagonal_forms() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let f = canonicalize_matrix(&id, DEFAULT_PIVOT_TOLERANCE);
        assert_eq!(f.b, [1.0, 1.0, 1.0]);
        assert_eq!((f.inertia.positive, f.inertia.zero, f.inertia.negative), (3, 0, 0));
        let d = [[1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 3.0]];
        let f = canonicalize_matrix(&d, DEFAULT_PIVOT_TOLERANCE);
        assert_eq!(f.b, [1.0, -2.0, 3.0]);
        assert_eq!((f.inertia.positive, f.inertia.zero, f.inertia.negative), (2, 0, 1));
        assert_eq!(quadform_value(&id, [1.0, 2.0, 2.0]), 9.0);
        assert_eq!(quadform_value(&d, [1.0, 1.0, 1.0]), 2.0);
    }

    fn random_symmetric(rng: &mut ChaCha8Rng) -> Mat3 {
        let mut a = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in j..3 {
                a[j][k] = rng.random_range(-1.0..1.0);
                a[k][j] = a[j][k];
            }
        }
        a
    }

    #[test]
    fn sylvester_and_value_equivalence_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 300 {
            let a = random_symmetric(&mut rng);
            if a[0][0].abs() < 1e-6 || det2(&a).abs() < 1e-6 || det3(&a).abs() < 1e-6 {
                continue;
            }
            let f = canonicalize_matrix(&a, DEFAULT_PIVOT_TOLERANCE);
            assert_eq!(f.method, Method::Jacobi);
            assert_eq!(f.inertia, eigen_inertia(&a));
            for _ in 0..10 {
                let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let direct = quadform_value(&a, w);
                let scale = max_abs(&a) * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
                assert!((f.value(w) - direct).abs() <= 1e-10 * scale);
            }
            checked += 1;
        }
    }

    #[test]
    fn degenerate_pivot_falls_back_to_eigen() {
        let a = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]];
        let f = canonicalize_matrix(&a, DEFAULT_PIVOT_TOLERANCE);
        assert_eq!(f.method, Method::EigenFallback);
        assert_eq!((f.inertia.positive, f.inertia.zero, f.inertia.negative), (2, 0, 1));
        let w = [0.3, -0.7, 0.2];
        assert!((f.value(w) - quadform_value(&a, w)).abs() < 1e-14);
        let z = canonicalize_matrix(&[[0.0; 3]; 3], DEFAULT_PIVOT_TOLERANCE);
        assert_eq!(z.inertia.zero, 3);
    }

    #[test]
    fn singular_third_minor_counts_as_zero() {
        let a = [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        let f = canonicalize_matrix(&a, DEFAULT_PIVOT_TOLERANCE);
        assert_eq!(f.method, Method::Jacobi);
        assert_eq!((f.inertia.positive, f.inertia.zero, f.inertia.negative), (2, 1, 0));
        assert_eq!(f.inertia, eigen_inertia(&a));
    }

    #[test]
    fn signed_integral_examples() {
        let n = 9;
        let v = cube(n, |p| vec![p[0], -p[1], 0.0]);
        let s = strain_field(&v).unwrap();
        let w = cube(n, |_| vec![0.0, 1.0, 0.0]);
        assert!((signed_integral(&s, &w).unwrap() + 1.0).abs() < 1e-12);
        // positive semidefinite strain
        let v = cube(n, |p| vec![p[0] * p[0], p[1], 0.5 * p[2]]);
        let s = strain_field(&v).unwrap();
        let w = cube(n, |p| vec![p[1].sin(), p[2], p[0] * p[1]]);
        assert!(signed_integral(&s, &w).unwrap() >= 0.0);
    }

    #[test]
    fn signed_integral_matches_refined_interpolant_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let rv = |_: &[f64]| vec![0.0; 3];
        let mut v = cube(n, rv);
        let mut w = cube(n, rv);
        let data_v: Vec<f64> = (0..v.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data_w: Vec<f64> = (0..w.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        v = Field::new(v.dims().to_vec(), v.extents().to_vec(), 3, data_v).unwrap();
        w = Field::new(w.dims().to_vec(), w.extents().to_vec(), 3, data_w).unwrap();
        let s = strain_field(&v).unwrap();
        let got = signed_integral(&s, &w).unwrap();
        // brute force: sample the multilinear interpolant of the nodal
        // integrand at the midpoints of 4x4x4 sub-cells
        let nodal: Vec<f64> = (0..w.npoints())
            .map(|p| {
                let np = w.npoints();
                quadform_value(&s.strain[p], [w.data()[p], w.data()[np + p], w.data()[2 * np + p]])
            })
            .collect();
        let g = Field::new(vec![n, n, n], vec![1.0; 3], 1, nodal).unwrap();
        let m = 4 * (n - 1);
        let h = 1.0 / m as f64;
        let mut brute = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                    brute += g.interpolate(&p).unwrap()[0];
                }
            }
        }
        brute *= h * h * h;
        assert!((got - brute).abs() <= 1e-8 * brute.abs().max(1e-3), "{got} vs {brute}");
    }

    fn single_mode(n: usize, amp: f64) -> Field {
        cube(n, |p| {
            vec![amp * (PI * p[0]).sin() * (PI * p[1]).sin() * (PI * p[2]).sin(), 0.0, 0.0]
        })
    }

    #[test]
    fn gradient_norms_match_closed_form_for_one_mode() {
        let norms = gradient_norms(&single_mode(17, 1.0));
        let want = PI / 8f64.sqrt();
        for i in 0..3 {
            assert!((norms[0][i] - want).abs() < 1e-13, "{}", norms[0][i]);
            assert_eq!(norms[1][i], 0.0);
        }
    }

    #[test]
    fn criterion_boundary_homogeneity_and_zero_field() {
        let lambda1 = box_lambda1(&[1.0, 1.0, 1.0]);
        let c_gn = 1.0;
        let v = single_mode(17, 1.0);
        let rhs = c_gn * c_gn * 3.0 * PI / 8f64.sqrt();
        let nu = rhs / lambda1.powf(0.25);
        let r = uniqueness_criterion(&TimeSeriesField::steady(v.clone()), nu, lambda1, c_gn).unwrap();
        assert!(r.satisfied);
        let doubled = uniqueness_criterion(&TimeSeriesField::steady(v.scaled(2.0)), nu, lambda1, c_gn).unwrap();
        assert_eq!(doubled.rows[0].rhs[0], 2.0 * r.rows[0].rhs[0]);
        assert!(!doubled.satisfied);
        let zero = Field::zeros(vec![5, 5, 5], vec![1.0; 3], 3).unwrap();
        let z = uniqueness_criterion(&TimeSeriesField::steady(zero), 1e-6, lambda1, c_gn).unwrap();
        assert!(z.satisfied && z.rows[0].rhs_joint == 0.0);
    }

    #[test]
    fn divergence_free_field_has_traceless_strain() {
        // v = curl of a smooth potential, sampled finely
        let v = cube(33, |p| {
            let (x, y, z) = (p[0], p[1], p[2]);
            vec![(x).sin() * (y).cos(), -(x).cos() * (y).sin(), 0.0 * z]
        });
        let s = strain_field(&v).unwrap();
        let d = canonicalize(&s, DEFAULT_PIVOT_TOLERANCE).unwrap();
        let summary = frame_summary(0.0, &d, &s);
        assert!(summary.max_abs_trace < 5e-3, "{}", summary.max_abs_trace);
        let total: usize = summary.inertia_histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(total, 33 * 33 * 33);
    }
}
