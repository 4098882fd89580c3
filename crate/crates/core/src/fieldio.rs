//! Structured-grid fields, the NSF1 file format and slice restriction.
//!
//! Samples sit on a vertex-centered grid: along axis `a` the points are
//! `i * extents[a] / (dims[a] - 1)` for `i in 0..dims[a]`, so the grid covers
//! `[0, extents[a]]` including both boundary faces. Data is component-major,
//! then x-fastest row-major.
//!
//! NSF1 layout:
//!
//! ```text
//! NSF1 <ndims> <dim1> ... <dimk> <ncomp> <ext1> ... <extk>\n
//! binary|text\n
//! <payload>
//! ```
//!
//! The binary payload is little-endian IEEE-754 doubles; the text payload is
//! whitespace-separated decimals.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{slice_domain, Box3, SliceChart};

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    dims: Vec<usize>,
    extents: Vec<f64>,
    ncomp: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Binary,
    Text,
}

impl Field {
    pub fn new(dims: Vec<usize>, extents: Vec<f64>, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if !(dims.len() == 2 || dims.len() == 3) || dims.len() != extents.len() {
            return Err(Error::InvalidField(format!(
                "need 2 or 3 axes with matching extents, got dims {dims:?} extents {extents:?}"
            )));
        }
        if !(ncomp == 1 || ncomp == 3) {
            return Err(Error::InvalidField(format!("ncomp must be 1 or 3, got {ncomp}")));
        }
        if dims.iter().any(|d| *d < 2) {
            return Err(Error::InvalidField(format!("all dims must be >= 2, got {dims:?}")));
        }
        if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidField(format!("extents must be positive, got {extents:?}")));
        }
        let expected = ncomp * dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self {
            dims,
            extents,
            ncomp,
            data,
        })
    }

    pub fn zeros(dims: Vec<usize>, extents: Vec<f64>, ncomp: usize) -> Result<Self> {
        let n = ncomp * dims.iter().product::<usize>();
        Self::new(dims, extents, ncomp, vec![0.0; n])
    }

    /// Samples `f(point) -> components` at every grid point.
    pub fn from_fn<F>(dims: Vec<usize>, extents: Vec<f64>, ncomp: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let npts: usize = dims.iter().product();
        let mut data = vec![0.0; ncomp * npts];
        let mut point = vec![0.0; dims.len()];
        for flat in 0..npts {
            let mut rem = flat;
            for a in 0..dims.len() {
                let i = rem % dims[a];
                rem /= dims[a];
                point[a] = i as f64 * extents[a] / (dims[a] - 1) as f64;
            }
            let v = f(&point);
            for c in 0..ncomp {
                data[c * npts + flat] = v[c];
            }
        }
        Self::new(dims, extents, ncomp, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn npoints(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.dims[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in (0..self.dims.len()).rev() {
            flat = flat * self.dims[a] + idx[a];
        }
        flat
    }

    pub fn value(&self, comp: usize, idx: &[usize]) -> f64 {
        self.data[comp * self.npoints() + self.flat_index(idx)]
    }

    pub fn component(&self, comp: usize) -> &[f64] {
        let n = self.npoints();
        &self.data[comp * n..(comp + 1) * n]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.dims == other.dims && self.extents == other.extents && self.ncomp == other.ncomp
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// Multilinear interpolation at `point`; `None` outside the grid box.
    pub fn interpolate(&self, point: &[f64]) -> Option<Vec<f64>> {
        let nd = self.dims.len();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..nd {
            let h = self.spacing(a);
            let slack = 1e-12 * self.extents[a];
            let x = point[a];
            if x < -slack || x > self.extents[a] + slack {
                return None;
            }
            let s = (x / h).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let npts = self.npoints();
        let mut out = vec![0.0; self.ncomp];
        let mut idx = [0usize; 3];
        for corner in 0..(1usize << nd) {
            let mut w = 1.0;
            for a in 0..nd {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let flat = self.flat_index(&idx[..nd]);
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.data[c * npts + flat];
            }
        }
        Some(out)
    }
}

fn header_line(field: &Field) -> String {
    let mut h = format!("NSF1 {}", field.dims.len());
    for d in &field.dims {
        h.push_str(&format!(" {d}"));
    }
    h.push_str(&format!(" {}", field.ncomp));
    for e in &field.extents {
        h.push_str(&format!(" {e:e}"));
    }
    h
}

pub fn encode_field(field: &Field, encoding: Encoding) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * field.data.len());
    out.extend_from_slice(header_line(field).as_bytes());
    out.push(b'\n');
    match encoding {
        Encoding::Binary => {
            out.extend_from_slice(b"binary\n");
            for v in &field.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Encoding::Text => {
            out.extend_from_slice(b"text\n");
            for (i, v) in field.data.iter().enumerate() {
                if i > 0 {
                    out.push(if i % 8 == 0 { b'\n' } else { b' ' });
                }
                out.extend_from_slice(format!("{v:e}").as_bytes());
            }
            out.push(b'\n');
        }
    }
    out
}

fn take_line(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let end = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing newline".into()))?;
    let line = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    Ok((line.trim_end_matches('\r'), &bytes[end + 1..]))
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let (header, rest) = take_line(bytes)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"NSF1") {
        return Err(Error::MalformedHeader(format!("bad magic in {header:?}")));
    }
    let bad = |what: &str| Error::MalformedHeader(format!("{what} in {header:?}"));
    let ndims: usize = tokens
        .get(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad ndims"))?;
    if !(ndims == 2 || ndims == 3) {
        return Err(bad("ndims must be 2 or 3"));
    }
    if tokens.len() != 3 + 2 * ndims {
        return Err(bad("wrong token count"));
    }
    let dims = tokens[2..2 + ndims]
        .iter()
        .map(|t| t.parse::<usize>().map_err(|_| bad("bad dim")))
        .collect::<Result<Vec<_>>>()?;
    let ncomp: usize = tokens[2 + ndims].parse().map_err(|_| bad("bad ncomp"))?;
    let extents = tokens[3 + ndims..]
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| bad("bad extent")))
        .collect::<Result<Vec<_>>>()?;
    let expected = ncomp * dims.iter().product::<usize>();
    let (mode, payload) = take_line(rest)?;
    let data = match mode.trim() {
        "binary" => {
            if payload.len() < 8 * expected {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: payload.len() / 8,
                });
            }
            payload[..8 * expected]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect::<Vec<_>>()
        }
        "text" => {
            let text = std::str::from_utf8(payload)
                .map_err(|_| Error::MalformedHeader("text payload is not UTF-8".into()))?;
            let vals = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::MalformedHeader(format!("bad number {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() < expected {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: vals.len(),
                });
            }
            vals
        }
        other => return Err(Error::MalformedHeader(format!("unknown encoding {other:?}"))),
    };
    if data.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "payload has {} values, header declares {expected}",
            data.len()
        )));
    }
    Field::new(dims, extents, ncomp, data)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes)
}

pub fn write_field(field: &Field, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_field(field, encoding))
        .map_err(|e| Error::io(path, e))
}

/// Frames sampled at strictly increasing times, all of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesField {
    times: Vec<f64>,
    frames: Vec<Field>,
}

#[derive(Serialize, Deserialize)]
struct SeriesManifest {
    times: Vec<f64>,
    frames: Vec<String>,
}

impl TimeSeriesField {
    pub fn new(times: Vec<f64>, frames: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != frames.len() {
            return Err(Error::InvalidField(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidField("times must be strictly increasing".into()));
        }
        if frames.iter().any(|f| !f.same_shape(&frames[0])) {
            return Err(Error::InvalidField("frames differ in shape".into()));
        }
        Ok(Self { times, frames })
    }

    /// A single frame held constant in time.
    pub fn steady(frame: Field) -> Self {
        Self {
            times: vec![0.0],
            frames: vec![frame],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn map_frames<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&Field) -> Result<Field>,
    {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), frames)
    }

    /// Writes `series.json` plus one NSF1 file per frame into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::with_capacity(self.frames.len());
        for (i, frame) in self.frames.iter().enumerate() {
            let name = format!("frame_{i:05}.nsf");
            write_field(frame, dir.join(&name), encoding)?;
            names.push(name);
        }
        let manifest = SeriesManifest {
            times: self.times.clone(),
            frames: names,
        };
        let path = dir.join("series.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("series.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SeriesManifest = serde_json::from_str(&text)?;
        let frames = manifest
            .frames
            .iter()
            .map(|name| read_field(dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest.times, frames)
    }
}

/// Reads either a series directory or a single NSF1 file (held steady).
pub fn read_series_or_field(path: impl AsRef<Path>) -> Result<TimeSeriesField> {
    let path: PathBuf = path.as_ref().into();
    if path.is_dir() {
        TimeSeriesField::read_dir(path)
    } else {
        Ok(TimeSeriesField::steady(read_field(path)?))
    }
}

/// A 2D field on a slice together with where its grid sits in the chart's
/// retained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceField {
    pub field: Field,
    pub origin: [f64; 2],
}

/// Samples a 3D field on a `slice_dims` grid over the bounding box of the
/// slice domain, by trilinear interpolation at the lifted points. Fails
/// with [`Error::OutsideDomain`] when the slice is not a rectangle.
pub fn restrict_to_slice(
    field3d: &Field,
    chart: &SliceChart,
    slice_dims: [usize; 2],
) -> Result<SliceField> {
    restrict(field3d, chart, slice_dims, None)
}

/// As [`restrict_to_slice`], but grid points lifting outside the box take
/// the value `fill`.
pub fn restrict_to_slice_filled(
    field3d: &Field,
    chart: &SliceChart,
    slice_dims: [usize; 2],
    fill: f64,
) -> Result<SliceField> {
    restrict(field3d, chart, slice_dims, Some(fill))
}

fn restrict(field3d: &Field, chart: &SliceChart, slice_dims: [usize; 2], fill: Option<f64>) -> Result<SliceField> {
    if field3d.ndims() != 3 {
        return Err(Error::InvalidField("restriction needs a 3D field".into()));
    }
    if slice_dims.iter().any(|d| *d < 2) {
        return Err(Error::InvalidArgument(format!("slice dims {slice_dims:?} must be >= 2")));
    }
    let ext = field3d.extents();
    let bx = Box3::from_extents([ext[0], ext[1], ext[2]])?;
    let dom = slice_domain(&bx, chart);
    let (lo, hi) = dom.bounding_box().ok_or(Error::EmptySlice)?;
    let extents = vec![hi[0] - lo[0], hi[1] - lo[1]];
    let npts = slice_dims[0] * slice_dims[1];
    let ncomp = field3d.ncomp();
    let mut data = vec![0.0; ncomp * npts];
    for j in 0..slice_dims[1] {
        for i in 0..slice_dims[0] {
            let p = [
                lo[0] + i as f64 * extents[0] / (slice_dims[0] - 1) as f64,
                lo[1] + j as f64 * extents[1] / (slice_dims[1] - 1) as f64,
            ];
            let x = chart.lift(p);
            let v = match (field3d.interpolate(&x), fill) {
                (Some(v), _) => v,
                (None, Some(f)) => vec![f; ncomp],
                (None, None) => return Err(Error::OutsideDomain { point: x }),
            };
            let flat = i + slice_dims[0] * j;
            for c in 0..ncomp {
                data[c * npts + flat] = v[c];
            }
        }
    }
    Ok(SliceField {
        field: Field::new(slice_dims.to_vec(), extents, ncomp, data)?,
        origin: lo,
    })
}
