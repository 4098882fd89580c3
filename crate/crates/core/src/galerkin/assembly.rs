//! Assembly of the Galerkin operators on a rectangular slice.
//!
//! With `(c1, c2)` the chart's projected-gradient coefficients, the slice
//! operators are
//!
//! ```text
//! A1 u      = (D1^2 + D2^2 + (c1 D1 + c2 D2)^2) u
//! B1(u, w)  = (U1 D1 + U2 D2) w,   U = (u1 + c1 u3, u2 + c2 u3)
//! div_L u   = D1 U1 + D2 U2
//! ```
//!
//! All 2D integrals factor into products of 1D integrals, which are
//! computed by Gauss-Legendre quadrature. The convective form is used in
//! its skew-symmetrized version `(b(u,v,w) - b(u,w,v)) / 2`, which agrees
//! with `b` for pointwise solenoidal `U` and vanishes identically for
//! `v = w`.

use std::f64::consts::PI;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::basis::SpectralBasis;
use super::quadrature::gauss_legendre;
use crate::error::Result;
use crate::geometry::SliceChart;

/// Largest number of scalar modes for which the explicit trilinear tensor
/// is stored; beyond this only the matrix-free evaluator is built.
pub const TRILINEAR_TENSOR_MODE_LIMIT: usize = 100;

/// Entries of the trilinear tensor with magnitude below this are dropped.
pub const TRILINEAR_DROP_TOLERANCE: f64 = 1e-14;

/// Smallest Gauss-Legendre order per direction that integrates products of
/// three sine/cosine factors of wavenumber up to `nmax` to round-off.
///
/// Such products oscillate with frequency up to `omega = 3 pi nmax / 2` on
/// the reference interval. An `n`-point rule resolves them once `n` exceeds
/// `omega / 2` by a margin growing like `omega^(1/3)`; the constants below
/// keep the truncation error under 1e-14 for `nmax` up to a few hundred.
pub fn minimum_quadrature_order(nmax: usize) -> usize {
    let omega = 1.5 * PI * nmax as f64;
    (0.5 * omega).ceil() as usize + 12 + 3 * omega.cbrt().ceil() as usize
}

/// One-dimensional integral tables on `[0, L]` for `N` sine modes.
#[derive(Debug, Clone)]
pub(crate) struct Tables1d {
    /// `ss[m][p] = int s_m s_p`
    pub ss: DMatrix<f64>,
    /// `ds[m][p] = int s_m' s_p`
    pub ds: DMatrix<f64>,
    /// `dd[m][p] = int s_m' s_p'`
    pub dd: DMatrix<f64>,
    /// `sss[(a*N + e)*N + p] = int s_a s_e s_p`
    pub sss: Vec<f64>,
    /// `sds[(a*N + e)*N + p] = int s_a s_e' s_p`
    pub sds: Vec<f64>,
    pub n: usize,
}

impl Tables1d {
    fn build(basis: &SpectralBasis, axis: usize, order: usize, with_triples: bool) -> Self {
        let l = basis.extents()[axis];
        let n = basis.nmodes()[axis];
        let (x, w) = gauss_legendre(order, 0.0, l);
        let (s, d) = basis.tables(axis, &x);
        let wdiag = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
        let ws = &wdiag * &s;
        let wd = &wdiag * &d;
        let ss = s.transpose() * &ws;
        let ds = d.transpose() * &ws;
        let dd = d.transpose() * &wd;
        let (mut sss, mut sds) = (Vec::new(), Vec::new());
        if with_triples {
            sss = vec![0.0; n * n * n];
            sds = vec![0.0; n * n * n];
            for a in 0..n {
                for e in 0..n {
                    for p in 0..n {
                        let (mut t1, mut t2) = (0.0, 0.0);
                        for q in 0..x.len() {
                            let wsp = ws[(q, p)] * s[(q, a)];
                            t1 += wsp * s[(q, e)];
                            t2 += wsp * d[(q, e)];
                        }
                        sss[(a * n + e) * n + p] = t1;
                        sds[(a * n + e) * n + p] = t2;
                    }
                }
            }
        }
        Self {
            ss,
            ds,
            dd,
            sss,
            sds,
            n,
        }
    }

    fn triple(&self, table: &[f64], a: usize, e: usize, p: usize) -> f64 {
        table[(a * self.n + e) * self.n + p]
    }
}

/// Sparse skew-symmetrized trilinear tensor.
///
/// Entry `(i, j, k, v)` stands for `v = b~(w_j, w_k, w_i)`: `j` advects,
/// `k` is advected and `i` is the test function. Indices address the
/// three-component state vector.
#[derive(Debug, Clone)]
pub struct SparseTrilinear {
    pub dim: usize,
    pub entries: Vec<(u32, u32, u32, f64)>,
}

impl SparseTrilinear {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `sum_ijk T_ijk a_i b_j c_k`; with `a = b = c = u` this is `b~(u,u,u)`.
    pub fn contract(&self, test: &DVector<f64>, adv: &DVector<f64>, advected: &DVector<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, k, v)| v * test[i as usize] * adv[j as usize] * advected[k as usize])
            .sum()
    }

    /// `out_i = sum_jk T_ijk u_j u_k`.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, k, v) in &self.entries {
            out[i as usize] += v * u[j as usize] * u[k as usize];
        }
        out
    }
}

/// Matrix-free evaluation of the convective term by sum factorization on
/// a tensor Gauss-Legendre grid.
#[derive(Debug, Clone)]
pub(crate) struct ConvectionQuadrature {
    sx: DMatrix<f64>,
    dx: DMatrix<f64>,
    sy: DMatrix<f64>,
    dy: DMatrix<f64>,
    /// weight-scaled transposes for the projection back onto test functions
    sxw_t: DMatrix<f64>,
    dxw_t: DMatrix<f64>,
    syw: DMatrix<f64>,
    dyw: DMatrix<f64>,
}

impl ConvectionQuadrature {
    fn build(basis: &SpectralBasis, order: usize) -> Self {
        let [l1, l2] = basis.extents();
        let (x, wx) = gauss_legendre(order, 0.0, l1);
        let (y, wy) = gauss_legendre(order, 0.0, l2);
        let (sx, dx) = basis.tables(0, &x);
        let (sy, dy) = basis.tables(1, &y);
        let wxd = DMatrix::from_diagonal(&DVector::from_vec(wx));
        let wyd = DMatrix::from_diagonal(&DVector::from_vec(wy));
        Self {
            sxw_t: (&wxd * &sx).transpose(),
            dxw_t: (&wxd * &dx).transpose(),
            syw: &wyd * &sy,
            dyw: &wyd * &dy,
            sx,
            dx,
            sy,
            dy,
        }
    }
}

/// All operators of the semi-discrete system for one basis and chart.
#[derive(Debug, Clone)]
pub struct OperatorTensors {
    basis: SpectralBasis,
    coupling: (f64, f64),
    quadrature_order: usize,
    /// Scalar mass block `<w_j, w_i>`; the state mass is `I_3 (x) mass`.
    pub mass: DMatrix<f64>,
    /// Scalar `<D1 w_j, D1 w_i>`.
    pub grad1: DMatrix<f64>,
    /// Scalar `<D2 w_j, D2 w_i>`.
    pub grad2: DMatrix<f64>,
    /// Scalar `<(c.grad) w_j, (c.grad) w_i>`.
    pub cross: DMatrix<f64>,
    /// Scalar block of `<A1 w_j, w_i> = -(grad1 + grad2 + cross)`.
    pub stiffness: DMatrix<f64>,
    /// Rows `<div_L u, w_q>` for every scalar mode `q`; `n x 3n`.
    pub constraint: DMatrix<f64>,
    pub constraint_rank: usize,
    pub trilinear: Option<SparseTrilinear>,
    mass_diag: DVector<f64>,
    /// `M^-1 C^T (C M^-1 C^T)^+`, so that `P u = u - R C u`.
    correction: DMatrix<f64>,
    convection: ConvectionQuadrature,
    nonlinear: bool,
}

pub fn assemble(basis: &SpectralBasis, chart: &SliceChart, quadrature_order: usize) -> Result<OperatorTensors> {
    let coupling = chart.projected_gradient_coeffs()?;
    Ok(assemble_with_coupling(basis, coupling, quadrature_order))
}

/// Assembly from explicit projected-gradient coefficients `(c1, c2)`.
pub fn assemble_with_coupling(basis: &SpectralBasis, coupling: (f64, f64), quadrature_order: usize) -> OperatorTensors {
    let nmax = basis.nmodes()[0].max(basis.nmodes()[1]);
    let order = quadrature_order.max(minimum_quadrature_order(nmax));
    if order > quadrature_order {
        debug!("quadrature order raised from {quadrature_order} to {order}");
    }
    let n = basis.len();
    let with_tensor = n <= TRILINEAR_TENSOR_MODE_LIMIT;
    let tx = Tables1d::build(basis, 0, order, with_tensor);
    let ty = Tables1d::build(basis, 1, order, with_tensor);
    let (c1, c2) = coupling;
    let grid = |i: usize| {
        let (m, k) = basis.modes()[i];
        (m - 1, k - 1)
    };

    let mut mass = DMatrix::zeros(n, n);
    let mut grad1 = DMatrix::zeros(n, n);
    let mut grad2 = DMatrix::zeros(n, n);
    let mut cross = DMatrix::zeros(n, n);
    let mut g1 = DMatrix::zeros(n, n);
    let mut g2 = DMatrix::zeros(n, n);
    for i in 0..n {
        let (p, q) = grid(i);
        for j in 0..n {
            let (m, k) = grid(j);
            mass[(i, j)] = tx.ss[(m, p)] * ty.ss[(k, q)];
            grad1[(i, j)] = tx.dd[(m, p)] * ty.ss[(k, q)];
            grad2[(i, j)] = tx.ss[(m, p)] * ty.dd[(k, q)];
            // <D1 w_j, D2 w_i> + <D2 w_j, D1 w_i>
            let mixed = tx.ds[(m, p)] * ty.ds[(q, k)] + tx.ds[(p, m)] * ty.ds[(k, q)];
            cross[(i, j)] = c1 * c1 * grad1[(i, j)] + c2 * c2 * grad2[(i, j)] + c1 * c2 * mixed;
            g1[(i, j)] = tx.ds[(m, p)] * ty.ss[(k, q)];
            g2[(i, j)] = tx.ss[(m, p)] * ty.ds[(k, q)];
        }
    }
    let stiffness = -(&grad1 + &grad2 + &cross);

    let mut constraint = DMatrix::zeros(n, 3 * n);
    constraint.view_mut((0, 0), (n, n)).copy_from(&g1);
    constraint.view_mut((0, n), (n, n)).copy_from(&g2);
    constraint
        .view_mut((0, 2 * n), (n, n))
        .copy_from(&(&g1 * c1 + &g2 * c2));

    let mass_diag = DVector::from_fn(3 * n, |i, _| mass[(i % n, i % n)]);
    let (correction, constraint_rank) = build_correction(&constraint, &mass_diag);
    if constraint_rank < n {
        debug!("constraint rank {constraint_rank} of {n} rows");
    }
    if constraint_rank == 0 && n > 1 {
        warn!("divergence constraint has rank 0 for {n} modes");
    }

    let trilinear = with_tensor.then(|| build_trilinear(basis, &tx, &ty, coupling));
    OperatorTensors {
        basis: basis.clone(),
        coupling,
        quadrature_order: order,
        mass,
        grad1,
        grad2,
        cross,
        stiffness,
        constraint,
        constraint_rank,
        trilinear,
        mass_diag,
        correction,
        convection: ConvectionQuadrature::build(basis, order),
        nonlinear: true,
    }
}

fn build_correction(c: &DMatrix<f64>, mass_diag: &DVector<f64>) -> (DMatrix<f64>, usize) {
    let minv_ct = DMatrix::from_fn(c.ncols(), c.nrows(), |i, j| c[(j, i)] / mass_diag[i]);
    let g = c * &minv_ct;
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = 1e-12 * top;
    let mut rank = 0;
    let mut inv = DVector::zeros(eig.eigenvalues.len());
    for (k, v) in eig.eigenvalues.iter().enumerate() {
        if *v > cut && top > 0.0 {
            inv[k] = 1.0 / v;
            rank += 1;
        }
    }
    let q = &eig.eigenvectors;
    let pinv = q * DMatrix::from_diagonal(&inv) * q.transpose();
    (minv_ct * pinv, rank)
}

fn build_trilinear(basis: &SpectralBasis, tx: &Tables1d, ty: &Tables1d, coupling: (f64, f64)) -> SparseTrilinear {
    let n = basis.len();
    let (c1, c2) = coupling;
    // weights of each advecting component in (U1, U2)
    let beta = [(1.0, 0.0), (0.0, 1.0), (c1, c2)];
    let modes: Vec<(usize, usize)> = basis.modes().iter().map(|(m, k)| (m - 1, k - 1)).collect();
    // I1(j,k,i) = int w_j D1 w_k w_i, I2 likewise with D2
    let i1 = |j: usize, k: usize, i: usize| {
        let ((a, b), (e, f), (p, q)) = (modes[j], modes[k], modes[i]);
        tx.triple(&tx.sds, a, e, p) * ty.triple(&ty.sss, b, f, q)
    };
    let i2 = |j: usize, k: usize, i: usize| {
        let ((a, b), (e, f), (p, q)) = (modes[j], modes[k], modes[i]);
        tx.triple(&tx.sss, a, e, p) * ty.triple(&ty.sds, b, f, q)
    };
    let mut entries = Vec::new();
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                let d1 = i1(j, k, i) - i1(j, i, k);
                let d2 = i2(j, k, i) - i2(j, i, k);
                if d1 == 0.0 && d2 == 0.0 {
                    continue;
                }
                for (cj, (b1, b2)) in beta.iter().enumerate() {
                    let v = 0.5 * (b1 * d1 + b2 * d2);
                    if v.abs() < TRILINEAR_DROP_TOLERANCE {
                        continue;
                    }
                    for c in 0..3 {
                        entries.push(((c * n + i) as u32, (cj * n + j) as u32, (c * n + k) as u32, v));
                    }
                }
            }
        }
    }
    SparseTrilinear { dim: 3 * n, entries }
}

impl OperatorTensors {
    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// Projected-gradient coefficients `(c1, c2)` the tensors were built with.
    pub fn coupling(&self) -> (f64, f64) {
        self.coupling
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn state_len(&self) -> usize {
        3 * self.basis.len()
    }

    pub fn mass_diagonal(&self) -> &DVector<f64> {
        &self.mass_diag
    }

    pub fn nonlinear(&self) -> bool {
        self.nonlinear
    }

    /// Copy with the convective term switched on or off.
    pub fn with_nonlinearity(mut self, on: bool) -> Self {
        self.nonlinear = on;
        self
    }

    fn blocks<'a>(&self, u: &'a DVector<f64>) -> [&'a [f64]; 3] {
        let n = self.basis.len();
        let s = u.as_slice();
        [&s[..n], &s[n..2 * n], &s[2 * n..]]
    }

    /// Applies a scalar `n x n` block to each of the three components.
    pub fn apply_blockwise(&self, block: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.basis.len();
        let mut out = DVector::zeros(3 * n);
        for c in 0..3 {
            let uc = u.rows(c * n, n);
            out.rows_mut(c * n, n).copy_from(&(block * uc));
        }
        out
    }

    fn quadratic_blockwise(&self, block: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
        let n = self.basis.len();
        (0..3)
            .map(|c| {
                let uc = u.rows(c * n, n);
                uc.dot(&(block * uc))
            })
            .sum()
    }

    /// `||u||^2` in `L^2`.
    pub fn mass_norm_sq(&self, u: &DVector<f64>) -> f64 {
        u.iter().zip(self.mass_diag.iter()).map(|(a, m)| a * a * m).sum()
    }

    pub fn mass_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.iter()
            .zip(v.iter())
            .zip(self.mass_diag.iter())
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// `||D1 u||^2`.
    pub fn d1_norm_sq(&self, u: &DVector<f64>) -> f64 {
        self.quadratic_blockwise(&self.grad1, u)
    }

    /// `||D2 u||^2`.
    pub fn d2_norm_sq(&self, u: &DVector<f64>) -> f64 {
        self.quadratic_blockwise(&self.grad2, u)
    }

    /// `||(c1 D1 + c2 D2) u||^2`, the cross dissipation.
    pub fn cross_norm_sq(&self, u: &DVector<f64>) -> f64 {
        self.quadratic_blockwise(&self.cross, u)
    }

    /// `||grad u||^2 = ||D1 u||^2 + ||D2 u||^2`.
    pub fn gradient_norm_sq(&self, u: &DVector<f64>) -> f64 {
        self.d1_norm_sq(u) + self.d2_norm_sq(u)
    }

    pub fn apply_stiffness(&self, u: &DVector<f64>) -> DVector<f64> {
        self.apply_blockwise(&self.stiffness, u)
    }

    /// `L^2` norm of the sine-space projection of `div_L u`.
    pub fn divergence_norm(&self, u: &DVector<f64>) -> f64 {
        let r = &self.constraint * u;
        let m = self.basis.mass_diagonal();
        (r.iter().map(|v| v * v).sum::<f64>() / m).sqrt()
    }

    /// Mass-orthogonal projection onto the null space of the constraint.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        let cu = &self.constraint * u;
        u - &self.correction * cu
    }

    /// Convective load `N_i = b~(u, u, w_i)` by quadrature (zero when the
    /// nonlinearity is switched off).
    pub fn convection(&self, u: &DVector<f64>) -> DVector<f64> {
        if !self.nonlinear {
            return DVector::zeros(self.state_len());
        }
        self.convection_quadrature(u)
    }

    /// Matrix-free `b~(u, u, w_i)` regardless of the nonlinearity switch.
    pub fn convection_quadrature(&self, u: &DVector<f64>) -> DVector<f64> {
        self.convection_bilinear(u, u)
    }

    /// `b~(a, b, w_i)` for every test function: `a` advects, `b` is advected.
    pub fn convection_bilinear(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let q = &self.convection;
        let (c1, c2) = self.coupling;
        let on_grid = |u: &DVector<f64>, derivs: bool| {
            let mut val = Vec::with_capacity(3);
            let mut d1 = Vec::with_capacity(3);
            let mut d2 = Vec::with_capacity(3);
            for c in self.blocks(u) {
                let g = self.basis.to_grid(c);
                let g_syt = &g * q.sy.transpose();
                val.push(&q.sx * &g_syt);
                if derivs {
                    d1.push(&q.dx * &g_syt);
                    d2.push(&q.sx * (&g * q.dy.transpose()));
                }
            }
            (val, d1, d2)
        };
        let (va, _, _) = on_grid(a, false);
        let (vb, d1, d2) = on_grid(b, true);
        let big_u1 = &va[0] + &va[2] * c1;
        let big_u2 = &va[1] + &va[2] * c2;
        let n = self.basis.len();
        let mut out = DVector::zeros(3 * n);
        let mut tmp = vec![0.0; n];
        for c in 0..3 {
            // (U.grad) b_c tested against w, minus b_c tested against (U.grad) w
            let adv = big_u1.component_mul(&d1[c]) + big_u2.component_mul(&d2[c]);
            let h1 = big_u1.component_mul(&vb[c]);
            let h2 = big_u2.component_mul(&vb[c]);
            let proj = &q.sxw_t * adv * &q.syw - &q.dxw_t * h1 * &q.syw - &q.sxw_t * h2 * &q.dyw;
            self.basis.from_grid(&(proj * 0.5), &mut tmp);
            out.rows_mut(c * n, n).copy_from_slice(&tmp);
        }
        out
    }

    /// `b~(a, b, c)`.
    pub fn trilinear_value(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
        self.convection_bilinear(a, b).dot(c)
    }
}
