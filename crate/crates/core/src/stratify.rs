//! Measure stratification of voxel sets by families of parallel hyperplanes.
//!
//! A set of positive volume is cut by the hyperplanes `<d, x> = beta`; it
//! is stratified along `d` when a positive-length interval of offsets gives
//! slices of positive area. On voxels "positive" becomes "above a
//! threshold" and slices become slabs of thickness `range / nslices`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldio::{Field, TimeSeriesField};

/// Boolean voxel mask over a box in three or four dimensions. Sample `i`
/// along an axis is the voxel `[i h, (i + 1) h)` with `h = extent / dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorGrid {
    dims: Vec<usize>,
    extents: Vec<f64>,
    mask: Vec<bool>,
    eps: f64,
}

impl IndicatorGrid {
    pub fn new(dims: Vec<usize>, extents: Vec<f64>, mask: Vec<bool>, eps: f64) -> Result<Self> {
        if !(dims.len() == 3 || dims.len() == 4) || dims.len() != extents.len() {
            return Err(Error::InvalidArgument(format!(
                "masks need 3 or 4 axes with matching extents, got {dims:?} / {extents:?}"
            )));
        }
        if dims.iter().any(|d| *d < 2) || extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mask dims must be >= 2 and extents positive, got {dims:?} / {extents:?}"
            )));
        }
        if mask.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} samples for dims {dims:?}",
                mask.len()
            )));
        }
        Ok(Self {
            dims,
            extents,
            mask,
            eps,
        })
    }

    /// Mask of a predicate on voxel centers.
    pub fn from_fn(dims: Vec<usize>, extents: Vec<f64>, f: impl Fn(&[f64]) -> bool) -> Result<Self> {
        let n: usize = dims.iter().product();
        let mut mask = Vec::with_capacity(n);
        let mut x = vec![0.0; dims.len()];
        for flat in 0..n {
            let mut rem = flat;
            for a in 0..dims.len() {
                x[a] = ((rem % dims[a]) as f64 + 0.5) * extents[a] / dims[a] as f64;
                rem /= dims[a];
            }
            mask.push(f(&x));
        }
        Self::new(dims, extents, mask, 0.0)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.extents.iter().zip(&self.dims).map(|(e, d)| e / *d as f64).collect()
    }

    pub fn voxel_volume(&self) -> f64 {
        let mut h = self.spacing();
        h.sort_by(|a, b| a.total_cmp(b));
        h.iter().product()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.voxel_volume()
    }

    /// The same mask with axes reordered: new axis `a` is old axis `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let nd = self.ndims();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|p| *p >= nd || std::mem::replace(&mut seen[*p], true)) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of {nd} axes")));
        }
        let dims: Vec<usize> = perm.iter().map(|p| self.dims[*p]).collect();
        let extents: Vec<f64> = perm.iter().map(|p| self.extents[*p]).collect();
        let mut mask = vec![false; self.mask.len()];
        let mut idx = vec![0; nd];
        for (flat, m) in self.mask.iter().enumerate() {
            let mut rem = flat;
            for a in 0..nd {
                idx[a] = rem % self.dims[a];
                rem /= self.dims[a];
            }
            let mut new_flat = 0;
            for a in (0..nd).rev() {
                new_flat = new_flat * dims[a] + idx[perm[a]];
            }
            mask[new_flat] = *m;
        }
        Self::new(dims, extents, mask, self.eps)
    }
}

fn euclidean(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

/// `|w| > eps` at every sample of a 3D field.
pub fn mask_from_field(w: &Field, eps: f64) -> Result<IndicatorGrid> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    if w.ndims() != 3 {
        return Err(Error::InvalidField(format!("need a 3D field, got {}D", w.ndims())));
    }
    let n = w.npoints();
    let mask = (0..n)
        .map(|p| euclidean((0..w.ncomp()).map(|c| w.data()[c * n + p])) > eps)
        .collect();
    IndicatorGrid::new(w.dims().to_vec(), w.extents().to_vec(), mask, eps)
}

/// Space-time mask with time as the fourth axis; a single frame yields a
/// 3D mask.
pub fn mask_from_series(series: &TimeSeriesField, eps: f64) -> Result<IndicatorGrid> {
    if series.len() == 1 {
        return mask_from_field(&series.frames()[0], eps);
    }
    let frames: Vec<IndicatorGrid> = series
        .frames()
        .iter()
        .map(|f| mask_from_field(f, eps))
        .collect::<Result<_>>()?;
    let t = series.times();
    let span = t[t.len() - 1] - t[0];
    let mut dims = frames[0].dims.clone();
    dims.push(frames.len());
    let mut extents = frames[0].extents.clone();
    extents.push(if span > 0.0 { span } else { 1.0 });
    let mask = frames.into_iter().flat_map(|f| f.mask).collect();
    IndicatorGrid::new(dims, extents, mask, eps)
}

/// Order-independent sum, so that permuting axes gives bitwise equal results.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.into_iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub direction: Vec<f64>,
    pub beta_min: f64,
    pub slab_width: f64,
    /// Slab centers.
    pub offsets: Vec<f64>,
    /// Estimated measure of each slice.
    pub measures: Vec<f64>,
}

/// Slice measures along `direction`: each mask voxel spreads its volume
/// uniformly over its projected extent and the mass in a slab is divided by
/// the slab width. Exact for axis directions.
pub fn slice_measures(mask: &IndicatorGrid, direction: &[f64], nslices: usize) -> Result<SliceProfile> {
    let nd = mask.ndims();
    if direction.len() != nd {
        return Err(Error::InvalidArgument(format!(
            "direction has {} components for a {nd}D mask",
            direction.len()
        )));
    }
    let len = euclidean(direction.iter().copied());
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |d| = {len}")));
    }
    if nslices < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 slices, got {nslices}")));
    }
    let h = mask.spacing();
    let beta_min = canonical_sum(direction.iter().zip(&mask.extents).map(|(d, l)| (d * l).min(0.0)).collect());
    let beta_max = canonical_sum(direction.iter().zip(&mask.extents).map(|(d, l)| (d * l).max(0.0)).collect());
    let width = (beta_max - beta_min) / nslices as f64;
    let half = 0.5 * canonical_sum(direction.iter().zip(&h).map(|(d, s)| d.abs() * s).collect());
    // voxel fractions are accumulated in 2^-52 units so the sum does not
    // depend on the traversal order
    let unit = (52f64).exp2();
    let mut mass = vec![0i128; nslices];
    let mut idx = vec![0usize; nd];
    for (flat, m) in mask.mask.iter().enumerate() {
        if !*m {
            continue;
        }
        let mut rem = flat;
        for a in 0..nd {
            idx[a] = rem % mask.dims[a];
            rem /= mask.dims[a];
        }
        let center = canonical_sum((0..nd).map(|a| direction[a] * (idx[a] as f64 + 0.5) * h[a]).collect());
        let (lo, hi) = ((center - half - beta_min) / width, (center + half - beta_min) / width);
        let first = (lo.floor().max(0.0) as usize).min(nslices - 1);
        let last = ((hi.ceil() as usize).max(1) - 1).min(nslices - 1);
        for (s, slot) in mass.iter_mut().enumerate().take(last + 1).skip(first) {
            let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
            *slot += (overlap / (hi - lo) * unit).round() as i128;
        }
    }
    Ok(SliceProfile {
        direction: direction.to_vec(),
        beta_min,
        slab_width: width,
        offsets: (0..nslices).map(|s| beta_min + (s as f64 + 0.5) * width).collect(),
        measures: mass
            .into_iter()
            .map(|m| m as f64 / unit * mask.voxel_volume() / width)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifyOptions {
    pub nslices: usize,
    /// Minimum slice measure; defaults to four voxel faces.
    pub area_tol: Option<f64>,
    /// Minimum interval length as a number of slabs.
    pub interval_slabs: f64,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        Self {
            nslices: 0,
            area_tol: None,
            interval_slabs: 2.0,
        }
    }
}

impl StratifyOptions {
    fn resolve(&self, mask: &IndicatorGrid) -> (usize, f64) {
        let nslices = if self.nslices >= 2 {
            self.nslices
        } else {
            *mask.dims.iter().max().unwrap()
        };
        let h = mask.spacing();
        let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
        (nslices, self.area_tol.unwrap_or(4.0 * mask.voxel_volume() / hmin))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionVerdict {
    pub profile: SliceProfile,
    /// Longest offset interval whose slices all reach the area threshold.
    pub interval: Option<(f64, f64)>,
    pub interval_length: f64,
    pub positive: bool,
}

/// Decision of the voxel-volume oracle for the axis directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    /// Volume large enough that some axis must be stratified.
    Positive,
    /// Volume too small for any axis to be stratified.
    Negative,
    /// Inside the discretization band; either verdict is admissible.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifyReport {
    pub eps: f64,
    pub volume: f64,
    pub area_tol: f64,
    pub nslices: usize,
    pub directions: Vec<DirectionVerdict>,
    /// Some tested direction (axes or extra) is stratified.
    pub positive: bool,
    /// Some axis direction is stratified.
    pub axis_positive: bool,
    pub oracle: OracleStatus,
    /// Volumes below `volume_low` force a negative axis verdict, volumes
    /// above `volume_high` a positive one.
    pub volume_low: f64,
    pub volume_high: f64,
}

impl StratifyReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::analysis::write_json(self, path)
    }
}

fn judge(profile: SliceProfile, area_tol: f64, interval_tol: f64) -> DirectionVerdict {
    let w = profile.slab_width;
    let (mut best, mut best_start, mut run, mut start) = (0usize, 0usize, 0usize, 0usize);
    for (s, m) in profile.measures.iter().enumerate() {
        if *m > 0.0 && *m >= area_tol {
            if run == 0 {
                start = s;
            }
            run += 1;
            if run > best {
                best = run;
                best_start = start;
            }
        } else {
            run = 0;
        }
    }
    let length = best as f64 * w;
    let lo = profile.beta_min + best_start as f64 * w;
    DirectionVerdict {
        interval: (best > 0).then_some((lo, lo + length)),
        interval_length: length,
        // slab counts are integers; compare with a little slack for rounding
        positive: best > 0 && length >= interval_tol * (1.0 - 1e-12),
        profile,
    }
}

fn axis(nd: usize, a: usize) -> Vec<f64> {
    let mut d = vec![0.0; nd];
    d[a] = 1.0;
    d
}

/// Tests the canonical axes and `extra` directions and cross-checks the
/// axis verdict against the voxel volume.
pub fn stratification_verdict(mask: &IndicatorGrid, extra: &[Vec<f64>], options: &StratifyOptions) -> Result<StratifyReport> {
    let nd = mask.ndims();
    let (nslices, area_tol) = options.resolve(mask);
    let mut directions = Vec::with_capacity(nd + extra.len());
    for d in (0..nd).map(|a| axis(nd, a)).chain(extra.iter().cloned()) {
        let profile = slice_measures(mask, &d, nslices)?;
        let interval_tol = options.interval_slabs * profile.slab_width;
        directions.push(judge(profile, area_tol, interval_tol));
    }
    let axis_positive = directions[..nd].iter().any(|d| d.positive);

    // A positive axis needs `interval_slabs` slabs of measure >= area_tol.
    // Without any run of r = ceil(interval_slabs) big slabs along axis a, at
    // most (r - 1) of every r consecutive slabs are big, which caps the volume.
    let volume = mask.volume();
    let r = options.interval_slabs.ceil().max(1.0);
    let mut volume_low = f64::INFINITY;
    let mut volume_high = f64::INFINITY;
    for (a, d) in directions[..nd].iter().enumerate() {
        let w = d.profile.slab_width;
        let face: f64 = mask.extents.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, l)| l).product();
        let needed_slabs = r.max(if area_tol > 0.0 { 1.0 } else { 0.0 });
        volume_low = volume_low.min(area_tol.max(0.0) * needed_slabs * w);
        let range = mask.extents[a];
        let cap = ((r - 1.0) / r * face + area_tol) * range + face * w * r;
        volume_high = volume_high.min(cap);
    }
    let oracle = if volume == 0.0 || volume < volume_low {
        OracleStatus::Negative
    } else if volume > volume_high {
        OracleStatus::Positive
    } else {
        OracleStatus::Undetermined
    };
    let report = StratifyReport {
        eps: mask.eps,
        volume,
        area_tol,
        nslices,
        positive: directions.iter().any(|d| d.positive),
        axis_positive,
        directions,
        oracle,
        volume_low,
        volume_high,
    };
    let agrees = match oracle {
        OracleStatus::Positive => axis_positive,
        OracleStatus::Negative => !axis_positive,
        OracleStatus::Undetermined => true,
    };
    if !agrees {
        return Err(Error::Inconsistency(format!(
            "axis verdict {axis_positive} contradicts voxel volume {volume:e} (band [{volume_low:e}, {volume_high:e}])"
        )));
    }
    Ok(report)
}
