//! Slicing hyperplanes, slice charts and the projected-operator coefficients.
//!
//! Axis indices are zero-based throughout (`0 = x`, `1 = y`, `2 = z`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance below which a nonzero renamed coefficient is rejected.
pub const DEFAULT_CHART_TOLERANCE: f64 = 1e-8;

/// The plane `{x : <normal, x> = offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: [f64; 3],
    offset: f64,
}

impl Hyperplane {
    /// Normalizes `normal` (scaling `offset` with it) and picks the sign
    /// representative whose first nonzero normal component is positive.
    pub fn new(normal: [f64; 3], offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "hyperplane normal {normal:?} / offset {offset} not usable"
            )));
        }
        let mut n = normal.map(|v| v / norm);
        let mut b = offset / norm;
        if let Some(first) = n.iter().find(|v| **v != 0.0) {
            if *first < 0.0 {
                n = n.map(|v| -v);
                b = -b;
            }
        }
        Ok(Self {
            normal: n,
            offset: b,
        })
    }

    pub fn normal(&self) -> [f64; 3] {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed residual `<normal, x> - offset`.
    pub fn residual(&self, x: [f64; 3]) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] + self.normal[2] * x[2] - self.offset
    }
}

/// Parametrization of a plane over two retained coordinates:
/// `x[eliminated] = affine_offset - alpha1 * x[p] - alpha2 * x[q]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceChart {
    pub eliminated_axis: usize,
    pub inplane_axes: [usize; 2],
    pub alpha1: f64,
    pub alpha2: f64,
    pub affine_offset: f64,
    pub tolerance: f64,
}

/// How the eliminated derivative is modeled in terms of the retained ones.
///
/// `Halved` is `2 D_e = -(1/alpha1) D_p - (1/alpha2) D_q`; `Unhalved` drops
/// the factor two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DerivativeScaling {
    #[default]
    Halved,
    Unhalved,
}

impl DerivativeScaling {
    fn factor(self) -> f64 {
        match self {
            DerivativeScaling::Halved => 0.5,
            DerivativeScaling::Unhalved => 1.0,
        }
    }
}

pub fn make_chart(plane: &Hyperplane, tolerance: f64) -> Result<SliceChart> {
    let n = plane.normal();
    // ties go to the largest index
    let mut elim = 0;
    for axis in 1..3 {
        if n[axis].abs() >= n[elim].abs() {
            elim = axis;
        }
    }
    if n[elim].abs() < tolerance {
        return Err(Error::DegenerateNormal {
            largest: n[elim].abs(),
            tolerance,
        });
    }
    let inplane = match elim {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    Ok(SliceChart {
        eliminated_axis: elim,
        inplane_axes: inplane,
        alpha1: n[inplane[0]] / n[elim],
        alpha2: n[inplane[1]] / n[elim],
        affine_offset: plane.offset() / n[elim],
        tolerance,
    })
}

impl SliceChart {
    /// Value of the eliminated coordinate above the in-plane point.
    pub fn eliminated_value(&self, p: [f64; 2]) -> f64 {
        self.affine_offset - self.alpha1 * p[0] - self.alpha2 * p[1]
    }

    pub fn lift(&self, p: [f64; 2]) -> [f64; 3] {
        let mut x = [0.0; 3];
        x[self.inplane_axes[0]] = p[0];
        x[self.inplane_axes[1]] = p[1];
        x[self.eliminated_axis] = self.eliminated_value(p);
        x
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.alpha1 == 0.0 && self.alpha2 == 0.0
    }

    pub fn projected_gradient_coeffs(&self) -> Result<(f64, f64)> {
        projected_gradient_coeffs(self, DerivativeScaling::Halved)
    }
}

/// Coefficients `(c1, c2)` with `D_e = c1 D_1 + c2 D_2` on the slice.
///
/// A renamed coefficient that is exactly zero contributes no coupling.
pub fn projected_gradient_coeffs(
    chart: &SliceChart,
    scaling: DerivativeScaling,
) -> Result<(f64, f64)> {
    let coeff = |alpha: f64| -> Result<f64> {
        if alpha == 0.0 {
            Ok(0.0)
        } else if alpha.abs() < chart.tolerance {
            Err(Error::CoefficientOverflow {
                alpha,
                tolerance: chart.tolerance,
            })
        } else {
            Ok(-scaling.factor() / alpha)
        }
    };
    Ok((coeff(chart.alpha1)?, coeff(chart.alpha2)?))
}

/// Axis-aligned box `[lo, hi]` in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "degenerate box lo={lo:?} hi={hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[0, extents]`.
    pub fn from_extents(extents: [f64; 3]) -> Result<Self> {
        Self::new([0.0; 3], extents)
    }

    pub fn unit() -> Self {
        Self {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn contains(&self, x: [f64; 3], slack: f64) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] - slack && x[i] <= self.hi[i] + slack)
    }
}

/// Parameter domain of a planar section in the retained coordinates.
///
/// Always convex; `vertices` are counter-clockwise and empty when the plane
/// misses the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDomain {
    pub vertices: Vec<[f64; 2]>,
    /// Jacobian `|n_e|` relating in-plane area to projected area.
    pub normal_component: f64,
}

impl SliceDomain {
    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3 || self.area() <= 0.0
    }

    /// Area in the retained coordinates.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            twice += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * twice.abs()
    }

    /// Area measured within the plane itself.
    pub fn surface_area(&self) -> f64 {
        self.area() / self.normal_component
    }

    pub fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        if self.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    /// True when the section fills its bounding rectangle.
    pub fn is_rectangle(&self) -> bool {
        match self.bounding_box() {
            Some((lo, hi)) => {
                let rect = (hi[0] - lo[0]) * (hi[1] - lo[1]);
                (rect - self.area()).abs() <= 1e-12 * rect
            }
            None => false,
        }
    }

    pub fn contains(&self, p: [f64; 2], slack: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        let v = &self.vertices;
        (0..v.len()).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            cross >= -slack
        })
    }
}

/// Keeps the part of a convex polygon where `g(p) = a.p + c >= 0`.
fn clip_halfplane(poly: &[[f64; 2]], a: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    let g = |p: [f64; 2]| a[0] * p[0] + a[1] * p[1] + c;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (gc, gn) = (g(cur), g(next));
        if gc >= 0.0 {
            out.push(cur);
        }
        if (gc >= 0.0) != (gn >= 0.0) {
            let t = gc / (gc - gn);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

pub fn slice_domain(bx: &Box3, chart: &SliceChart) -> SliceDomain {
    let [p, q] = chart.inplane_axes;
    let e = chart.eliminated_axis;
    let rect = vec![
        [bx.lo[p], bx.lo[q]],
        [bx.hi[p], bx.lo[q]],
        [bx.hi[p], bx.hi[q]],
        [bx.lo[p], bx.hi[q]],
    ];
    // lo_e <= off - a1 x - a2 y  and  off - a1 x - a2 y <= hi_e
    let lower = clip_halfplane(
        &rect,
        [-chart.alpha1, -chart.alpha2],
        chart.affine_offset - bx.lo[e],
    );
    let mut both = if lower.len() >= 3 {
        clip_halfplane(
            &lower,
            [chart.alpha1, chart.alpha2],
            bx.hi[e] - chart.affine_offset,
        )
    } else {
        Vec::new()
    };
    both.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    if both.len() >= 2 {
        let (f, l) = (both[0], both[both.len() - 1]);
        if (f[0] - l[0]).abs() < 1e-15 && (f[1] - l[1]).abs() < 1e-15 {
            both.pop();
        }
    }
    let normal_component = 1.0
        / (1.0 + chart.alpha1 * chart.alpha1 + chart.alpha2 * chart.alpha2).sqrt();
    let mut dom = SliceDomain {
        vertices: both,
        normal_component,
    };
    if dom.area() <= 0.0 {
        dom.vertices.clear();
    }
    dom
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart(normal: [f64; 3], offset: f64) -> SliceChart {
        make_chart(&Hyperplane::new(normal, offset).unwrap(), DEFAULT_CHART_TOLERANCE).unwrap()
    }

    #[test]
    fn axis_aligned_z() {
        let c = chart([0.0, 0.0, 1.0], 0.0);
        assert_eq!(c.eliminated_axis, 2);
        assert_eq!((c.alpha1, c.alpha2, c.affine_offset), (0.0, 0.0, 0.0));
        assert_eq!(c.projected_gradient_coeffs().unwrap(), (0.0, 0.0));
    }

    #[test]
    fn diagonal_plane_breaks_tie_to_last_axis() {
        let s = 3f64.sqrt();
        let c = chart([1.0 / s, 1.0 / s, 1.0 / s], s);
        assert_eq!(c.eliminated_axis, 2);
        assert_eq!(c.inplane_axes, [0, 1]);
        assert!((c.alpha1 - 1.0).abs() < 1e-15);
        assert!((c.alpha2 - 1.0).abs() < 1e-15);
        assert!((c.affine_offset - 3.0).abs() < 1e-14);
        let (c1, c2) = c.projected_gradient_coeffs().unwrap();
        assert!((c1 + 0.5).abs() < 1e-15 && (c2 + 0.5).abs() < 1e-15);
    }

    #[test]
    fn axis_aligned_y() {
        let c = chart([0.0, 1.0, 0.0], 0.5);
        assert_eq!(c.eliminated_axis, 1);
        assert_eq!(c.inplane_axes, [0, 2]);
        assert_eq!((c.alpha1, c.alpha2, c.affine_offset), (0.0, 0.0, 0.5));
    }

    #[test]
    fn coefficients_by_substitution() {
        let c = SliceChart {
            eliminated_axis: 2,
            inplane_axes: [0, 1],
            alpha1: 2.0,
            alpha2: -1.0,
            affine_offset: 0.0,
            tolerance: DEFAULT_CHART_TOLERANCE,
        };
        assert_eq!(c.projected_gradient_coeffs().unwrap(), (-0.25, 0.5));
        assert_eq!(
            projected_gradient_coeffs(&c, DerivativeScaling::Unhalved).unwrap(),
            (-0.5, 1.0)
        );
    }

    #[test]
    fn tiny_coefficient_is_rejected() {
        let c = chart([1e-10, 0.0, 1.0], 0.0);
        assert!(matches!(
            c.projected_gradient_coeffs(),
            Err(Error::CoefficientOverflow { .. })
        ));
    }

    #[test]
    fn degenerate_normal_guard() {
        let p = Hyperplane::new([0.0, 0.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            make_chart(&p, 2.0),
            Err(Error::DegenerateNormal { .. })
        ));
        assert!(Hyperplane::new([0.0; 3], 1.0).is_err());
    }

    #[test]
    fn sign_flip_gives_same_chart() {
        let a = chart([0.3, -0.5, 0.8], 0.7);
        let b = chart([-0.3, 0.5, -0.8], -0.7);
        assert_eq!(a, b);
    }

    #[test]
    fn lift_lands_on_plane() {
        let plane = Hyperplane::new([0.2, -0.7, 0.4], 0.3).unwrap();
        let c = make_chart(&plane, DEFAULT_CHART_TOLERANCE).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                let x = c.lift([i as f64 * 0.37 - 2.0, j as f64 * 0.21 - 1.0]);
                assert!(plane.residual(x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_cube_sections() {
        let half = slice_domain(&Box3::unit(), &chart([0.0, 0.0, 1.0], 0.5));
        assert!(half.is_rectangle());
        assert!((half.area() - 1.0).abs() < 1e-15);
        let miss = slice_domain(&Box3::unit(), &chart([0.0, 0.0, 1.0], 2.0));
        assert!(miss.is_empty());
    }

    #[test]
    fn hexagonal_section_matches_monte_carlo() {
        let s = 3f64.sqrt();
        let c = chart([1.0, 1.0, 1.0], 1.5);
        assert!((c.affine_offset - 1.5).abs() < 1e-14);
        let dom = slice_domain(&Box3::unit(), &c);
        assert_eq!(dom.vertices.len(), 6);
        assert!((dom.surface_area() - 3.0 * s / 4.0).abs() < 1e-12);

        // Monte-Carlo estimate of the projected area
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000_000usize;
        let hits = (0..n)
            .filter(|_| {
                let (x, y): (f64, f64) = (rng.random(), rng.random());
                let z = c.eliminated_value([x, y]);
                (0.0..=1.0).contains(&z)
            })
            .count();
        let p = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((dom.area() - p).abs() <= 3.0 * sigma, "{} vs {p}", dom.area());
    }

    #[test]
    fn oblique_plane_through_whole_square_is_rectangle() {
        let c = SliceChart {
            eliminated_axis: 2,
            inplane_axes: [0, 1],
            alpha1: -0.1,
            alpha2: -0.1,
            affine_offset: 0.4,
            tolerance: DEFAULT_CHART_TOLERANCE,
        };
        let dom = slice_domain(&Box3::unit(), &c);
        assert!(dom.is_rectangle());
    }
}
