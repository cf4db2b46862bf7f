//! Binary file formats.
//!
//! All integers and floats are little-endian. Every file starts with a
//! six-byte magic: `NSTF1\n` (grid field), `NSTP1\n` (point cloud),
//! `NSTC1\n` (capture set), `NSTM1\n` (parameter maps). Fringe previews are
//! 8-bit binary PGM. Decoders report the byte offset of the first problem.

use std::fs;
use std::path::{Path, PathBuf};

use stresstomo_core::renderer::{CaptureRecord, CaptureSet, PolariscopeConfig, RotationPose};
use stresstomo_core::stress::{Grid, StressTensor};
use stresstomo_core::Vec3;

pub const FIELD_MAGIC: &[u8; 6] = b"NSTF1\n";
pub const POINTS_MAGIC: &[u8; 6] = b"NSTP1\n";
pub const CAPTURE_MAGIC: &[u8; 6] = b"NSTC1\n";
pub const MAPS_MAGIC: &[u8; 6] = b"NSTM1\n";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{what} at byte offset {offset}")]
pub struct FormatError {
    pub offset: usize,
    pub what: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Write `bytes` to `path`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

fn with_path<T>(path: &Path, r: Result<T, FormatError>) -> Result<T, IoError> {
    r.map_err(|source| IoError::Format {
        path: path.to_owned(),
        source,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn fail<T>(&self, what: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError {
            offset: self.pos,
            what: what.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        match self.buf.get(self.pos..self.pos.saturating_add(n)) {
            Some(s) if self.pos.checked_add(n).is_some() => {
                self.pos += n;
                Ok(s)
            }
            _ => self.fail(format!("unexpected end of file reading {what}")),
        }
    }

    fn magic(&mut self, m: &[u8; 6]) -> Result<(), FormatError> {
        let got = self.take(6, "magic")?;
        if got != m {
            self.pos -= 6;
            return self.fail(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(&m[..5])
            ));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn finite_f64(&mut self, what: &str) -> Result<f64, FormatError> {
        let at = self.pos;
        let v = self.f64(what)?;
        if !v.is_finite() {
            return Err(FormatError {
                offset: at,
                what: format!("non-finite {what}"),
            });
        }
        Ok(v)
    }

    /// `n` binary32 values, checked for finiteness.
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let bytes = n
            .checked_mul(4)
            .map_or_else(|| self.fail(format!("{what} count overflows")), Ok)?;
        let start = self.pos;
        let raw = self.take(bytes, what)?;
        let mut out = Vec::with_capacity(n);
        for (i, c) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError {
                    offset: start + 4 * i,
                    what: format!("non-finite value in {what}"),
                });
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return self.fail(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(
        &u32::try_from(v)
            .expect("dimension exceeds u32")
            .to_le_bytes(),
    );
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

// ---- grid field ----

pub fn encode_field(g: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 12 + 48 + 4 * g.data.len());
    out.extend_from_slice(FIELD_MAGIC);
    for d in g.dims {
        put_u32(&mut out, d);
    }
    for v in g.min.0.iter().chain(&g.max.0) {
        put_f64(&mut out, *v);
    }
    put_f32s(&mut out, g.data.iter().copied());
    out
}

pub fn decode_field(buf: &[u8]) -> Result<Grid, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(FIELD_MAGIC)?;
    let dims_at = r.pos;
    let dims = [
        r.u32("nx")? as usize,
        r.u32("ny")? as usize,
        r.u32("nz")? as usize,
    ];
    if dims.iter().any(|&d| d < 2) {
        return Err(FormatError {
            offset: dims_at,
            what: format!("grid dims {dims:?} must be at least 2"),
        });
    }
    let bbox_at = r.pos;
    let mut b = [0.0; 6];
    for v in b.iter_mut() {
        *v = r.finite_f64("bounding box")?;
    }
    let (min, max) = (Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
    if (0..3).any(|i| min[i] >= max[i]) {
        return Err(FormatError {
            offset: bbox_at,
            what: "bounding box min must be below max".into(),
        });
    }
    let n = dims.iter().try_fold(6usize, |a, &d| a.checked_mul(d));
    let Some(n) = n else {
        return Err(FormatError {
            offset: dims_at,
            what: "grid too large".into(),
        });
    };
    let data = r.f32s(n, "grid values")?;
    r.finish()?;
    Grid::new(dims, min, max, data).map_err(|e| FormatError {
        offset: dims_at,
        what: e.to_string(),
    })
}

pub fn write_field(path: &Path, g: &Grid) -> Result<(), IoError> {
    write_bytes(path, &encode_field(g))
}

pub fn read_field(path: &Path) -> Result<Grid, IoError> {
    with_path(path, decode_field(&read_bytes(path)?))
}

// ---- point cloud ----

pub fn encode_points(points: &[Vec3], values: &[StressTensor]) -> Vec<u8> {
    assert_eq!(points.len(), values.len());
    let mut out = Vec::with_capacity(10 + 36 * points.len());
    out.extend_from_slice(POINTS_MAGIC);
    put_u32(&mut out, points.len());
    for (p, v) in points.iter().zip(values) {
        put_f32s(&mut out, p.0.iter().copied().chain(v.to_array()));
    }
    out
}

pub fn decode_points(buf: &[u8]) -> Result<(Vec<Vec3>, Vec<StressTensor>), FormatError> {
    let mut r = Reader::new(buf);
    r.magic(POINTS_MAGIC)?;
    let count_at = r.pos;
    let count = r.u32("point count")? as usize;
    if count == 0 {
        return Err(FormatError {
            offset: count_at,
            what: "point cloud is empty".into(),
        });
    }
    let raw = r.f32s(count * 9, "point records")?;
    r.finish()?;
    let mut pts = Vec::with_capacity(count);
    let mut vals = Vec::with_capacity(count);
    for rec in raw.chunks_exact(9) {
        pts.push(Vec3::new(rec[0], rec[1], rec[2]));
        vals.push(StressTensor::from_array(rec[3..9].try_into().unwrap()));
    }
    Ok((pts, vals))
}

pub fn write_points(path: &Path, points: &[Vec3], values: &[StressTensor]) -> Result<(), IoError> {
    write_bytes(path, &encode_points(points, values))
}

pub fn read_points(path: &Path) -> Result<(Vec<Vec3>, Vec<StressTensor>), IoError> {
    with_path(path, decode_points(&read_bytes(path)?))
}

// ---- capture set ----

pub fn encode_capture(c: &CaptureSet) -> Vec<u8> {
    let npix = c.width * c.height;
    let mut out = Vec::with_capacity(18 + c.records.len() * (60 + 4 * npix));
    out.extend_from_slice(CAPTURE_MAGIC);
    put_u32(&mut out, c.width);
    put_u32(&mut out, c.height);
    put_u32(&mut out, c.records.len());
    for rec in &c.records {
        put_f64(&mut out, rec.pose.rho1);
        put_f64(&mut out, rec.pose.rho2);
        let cfg = &rec.config;
        put_f64(&mut out, cfg.alpha1);
        for q in [cfg.qwp1, cfg.qwp2] {
            out.push(q.is_some() as u8);
            put_f64(&mut out, q.unwrap_or(0.0));
        }
        put_f64(&mut out, cfg.alpha2);
        put_f64(&mut out, cfg.source_intensity);
        put_f32s(&mut out, rec.image.iter().copied());
    }
    out
}

pub fn decode_capture(buf: &[u8]) -> Result<CaptureSet, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(CAPTURE_MAGIC)?;
    let dims_at = r.pos;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let n = r.u32("record count")? as usize;
    if width == 0 || height == 0 {
        return Err(FormatError {
            offset: dims_at,
            what: "image dimensions must be positive".into(),
        });
    }
    let npix = width.checked_mul(height).ok_or(FormatError {
        offset: dims_at,
        what: "image too large".into(),
    })?;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let pose = RotationPose::new(r.finite_f64("pose rho1")?, r.finite_f64("pose rho2")?);
        let alpha1 = r.finite_f64("alpha1")?;
        let mut qwp = [None, None];
        for q in qwp.iter_mut() {
            let flag_at = r.pos;
            let flag = r.u8("quarter-wave flag")?;
            let beta = r.finite_f64("quarter-wave angle")?;
            *q = match flag {
                0 => None,
                1 => Some(beta),
                f => {
                    return Err(FormatError {
                        offset: flag_at,
                        what: format!("quarter-wave flag {f} is not 0 or 1"),
                    })
                }
            };
        }
        let alpha2 = r.finite_f64("alpha2")?;
        let src_at = r.pos;
        let source_intensity = r.finite_f64("source intensity")?;
        if source_intensity <= 0.0 {
            return Err(FormatError {
                offset: src_at,
                what: "source intensity must be positive".into(),
            });
        }
        let image = r.f32s(npix, "image")?;
        let config = PolariscopeConfig {
            alpha1,
            qwp1: qwp[0],
            qwp2: qwp[1],
            alpha2,
            source_intensity,
        };
        records.push(CaptureRecord {
            pose,
            config,
            image,
        });
    }
    r.finish()?;
    Ok(CaptureSet {
        width,
        height,
        records,
    })
}

pub fn write_capture(path: &Path, c: &CaptureSet) -> Result<(), IoError> {
    write_bytes(path, &encode_capture(c))
}

pub fn read_capture(path: &Path) -> Result<CaptureSet, IoError> {
    with_path(path, decode_capture(&read_bytes(path)?))
}

// ---- parameter maps ----

/// Per-pixel planes, each `width * height` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMaps {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f64>>,
}

pub fn encode_maps(m: &ParamMaps) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAPS_MAGIC);
    put_u32(&mut out, m.width);
    put_u32(&mut out, m.height);
    put_u32(&mut out, m.planes.len());
    for p in &m.planes {
        assert_eq!(p.len(), m.width * m.height);
        put_f32s(&mut out, p.iter().copied());
    }
    out
}

pub fn decode_maps(buf: &[u8]) -> Result<ParamMaps, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(MAPS_MAGIC)?;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let n = r.u32("plane count")? as usize;
    let mut planes = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        planes.push(r.f32s(width * height, "plane")?);
    }
    r.finish()?;
    Ok(ParamMaps {
        width,
        height,
        planes,
    })
}

pub fn write_maps(path: &Path, m: &ParamMaps) -> Result<(), IoError> {
    write_bytes(path, &encode_maps(m))
}

pub fn read_maps(path: &Path) -> Result<ParamMaps, IoError> {
    with_path(path, decode_maps(&read_bytes(path)?))
}

// ---- PGM ----

/// Binary greyscale image mapping `[0, full_scale]` linearly onto `0..=255`.
pub fn encode_pgm(width: usize, height: usize, values: &[f64], full_scale: f64) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (v / full_scale * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// `(width, height, pixels)` of an 8-bit binary PGM with single-space or
/// newline separators and no comments.
pub fn decode_pgm(buf: &[u8]) -> Result<(usize, usize, Vec<u8>), FormatError> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while buf.get(pos).is_some_and(u8::is_ascii_whitespace) {
            pos += 1;
        }
        let start = pos;
        while buf.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError {
                offset: pos,
                what: "truncated PGM header".into(),
            });
        }
        fields.push((
            start,
            String::from_utf8_lossy(&buf[start..pos]).into_owned(),
        ));
    }
    pos += 1;
    if fields[0].1 != "P5" {
        return Err(FormatError {
            offset: 0,
            what: "bad magic, expected \"P5\"".into(),
        });
    }
    let num = |i: usize| -> Result<usize, FormatError> {
        fields[i].1.parse().map_err(|_| FormatError {
            offset: fields[i].0,
            what: "bad PGM header number".into(),
        })
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(FormatError {
            offset: fields[3].0,
            what: "only 8-bit PGM is supported".into(),
        });
    }
    let body = buf.get(pos..).unwrap_or_default();
    if body.len() != w * h {
        return Err(FormatError {
            offset: pos,
            what: format!("expected {} pixel bytes, found {}", w * h, body.len()),
        });
    }
    Ok((w, h, body.to_vec()))
}
