//! Spacetime grids, sampled fields and the WAVF container.
//!
//! WAVF layout (all integers little-endian): magic `WAVF`, `u32` version 1,
//! `u8` ndim, `ndim × u64` dims, then `f64` samples in row-major order with
//! time as the slowest axis. Complex fields carry a trailing dimension of 2
//! (re, im). Optional tagged sections follow the samples: `IDXM` (`u64`
//! count + `u64` flat spatial indices) and `META` (`u64` byte length + UTF-8
//! `key=value` lines).

use crate::error::{Error, Result};
use crate::geometry::{DomainConfig, Vec3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Uniform spacetime grid on the box `[−H, H]ⁿ × [0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub halfwidth: f64,
    /// Nodes per spatial axis.
    pub nx: usize,
    /// Number of time steps; levels are `0..=nt`.
    pub nt: usize,
}

impl GridSpec {
    /// Grid with spacing close to `dx` (adjusted so the box has whole
    /// cells) and the largest `dt ≤ cfl·dx/√n` that divides `T`.
    pub fn new(domain: &DomainConfig, dx: f64, cfl: f64) -> Result<Self> {
        if !(dx > 0.0 && cfl > 0.0) {
            return Err(Error::Config("dx and cfl must be positive".into()));
        }
        let h = domain.box_halfwidth;
        let cells = (2.0 * h / dx).ceil() as usize;
        let dx = 2.0 * h / cells as f64;
        let dt_max = cfl * dx / (domain.n as f64).sqrt();
        let nt = (domain.t_final / dt_max).ceil() as usize;
        let g = Self { n: domain.n, dx, dt: domain.t_final / nt as f64, halfwidth: h, nx: cells + 1, nt };
        if domain.r_tilde + 4.0 * g.dx > h {
            return Err(Error::Config("box leaves fewer than 4 cells outside Ω̃".into()));
        }
        Ok(g)
    }

    /// Grid with an explicit time step (used to exercise the stability check).
    pub fn with_dt(domain: &DomainConfig, dx: f64, dt: f64) -> Self {
        let h = domain.box_halfwidth;
        let cells = (2.0 * h / dx).ceil() as usize;
        let dx = 2.0 * h / cells as f64;
        let nt = (domain.t_final / dt).round().max(1.0) as usize;
        Self { n: domain.n, dx, dt, halfwidth: h, nx: cells + 1, nt }
    }

    pub fn cfl(&self) -> f64 {
        self.dt * (self.n as f64).sqrt() / self.dx
    }

    pub fn npoints(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.halfwidth + i as f64 * self.dx
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    /// Spatial point of flat index `p` (last axis fastest).
    pub fn point(&self, p: usize) -> Vec3 {
        let mut x = [0.0; 3];
        let mut r = p;
        for a in (0..self.n).rev() {
            x[a] = self.coord(r % self.nx);
            r /= self.nx;
        }
        x
    }

    /// Flat indices of all nodes with `|x − c| < radius`, ascending.
    pub fn points_in_ball(&self, c: &Vec3, radius: f64) -> Vec<usize> {
        let lo = |a: usize| (((c[a] - radius + self.halfwidth) / self.dx).floor().max(0.0)) as usize;
        let hi = |a: usize| ((((c[a] + radius + self.halfwidth) / self.dx).ceil()) as usize).min(self.nx - 1);
        let mut out = Vec::new();
        let r2 = radius * radius;
        if self.n == 2 {
            for i in lo(0)..=hi(0) {
                for j in lo(1)..=hi(1) {
                    let p = i * self.nx + j;
                    let x = self.point(p);
                    if (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) < r2 {
                        out.push(p);
                    }
                }
            }
        } else {
            for i in lo(0)..=hi(0) {
                for j in lo(1)..=hi(1) {
                    for k in lo(2)..=hi(2) {
                        let p = (i * self.nx + j) * self.nx + k;
                        let x = self.point(p);
                        let d2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
                        if d2 < r2 {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    /// Flat indices with `inner < |x| < outer`.
    pub fn points_in_shell(&self, inner: f64, outer: f64) -> Vec<usize> {
        self.points_in_ball(&[0.0; 3], outer)
            .into_iter()
            .filter(|&p| crate::geometry::norm(&self.point(p)) > inner)
            .collect()
    }
}

/// Which spatial nodes a slab carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Full,
    /// `r < |x| < r̃`.
    Exterior,
    /// `r < |x| < r + width`.
    Shell,
    /// Union of source supports.
    Support,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Full => "full",
            Region::Exterior => "exterior",
            Region::Shell => "shell",
            Region::Support => "support",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Region::Full,
            "exterior" => Region::Exterior,
            "shell" => Region::Shell,
            "support" => Region::Support,
            _ => return Err(Error::Format(format!("unknown region {s}"))),
        })
    }
}

/// Complex samples of a field at a subset of spatial nodes and all time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlab {
    pub grid: GridSpec,
    pub region: Region,
    /// Ascending flat spatial indices.
    pub points: Vec<usize>,
    /// Time-major samples: `values[m * points.len() + p]`.
    pub values: Vec<Complex64>,
    pub meta: Vec<(String, String)>,
}

impl FieldSlab {
    pub fn zeros(grid: GridSpec, region: Region, points: Vec<usize>) -> Self {
        let len = (grid.nt + 1) * points.len();
        Self { grid, region, points, values: vec![Complex64::new(0.0, 0.0); len], meta: Vec::new() }
    }

    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    pub fn level(&self, m: usize) -> &[Complex64] {
        let np = self.points.len();
        &self.values[m * np..(m + 1) * np]
    }

    pub fn level_mut(&mut self, m: usize) -> &mut [Complex64] {
        let np = self.points.len();
        &mut self.values[m * np..(m + 1) * np]
    }

    /// Position of flat spatial index `p` in `points`.
    pub fn slot(&self, p: usize) -> Option<usize> {
        self.points.binary_search(&p).ok()
    }

    pub fn l2_norm(&self) -> f64 {
        let vol = self.grid.dt * self.grid.dx.powi(self.grid.n as i32);
        (crate::sum::sum_f64(self.values.iter().map(|z| z.norm_sqr())) * vol).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Grid description stored with the samples.
    fn grid_meta(&self) -> Vec<(String, String)> {
        let g = &self.grid;
        let mut m = vec![
            ("region".to_string(), self.region.name().to_string()),
            ("n".into(), g.n.to_string()),
            ("dx".into(), g.dx.to_string()),
            ("dt".into(), g.dt.to_string()),
            ("halfwidth".into(), g.halfwidth.to_string()),
            ("nx".into(), g.nx.to_string()),
            ("nt".into(), g.nt.to_string()),
        ];
        m.extend(self.meta.iter().cloned());
        m
    }

    pub fn write_wavf<W: Write>(&self, w: W) -> Result<()> {
        let data: Vec<f64> = self.values.iter().flat_map(|z| [z.re, z.im]).collect();
        let dims = [self.levels() as u64, self.points.len() as u64, 2];
        let idx: Vec<u64> = self.points.iter().map(|&p| p as u64).collect();
        write_wavf(w, &dims, &data, Some(&idx), &self.grid_meta())
    }

    pub fn read_wavf<R: Read>(r: R) -> Result<Self> {
        let file = read_wavf(r)?;
        if file.dims.len() != 3 || file.dims[2] != 2 {
            return Err(Error::Format(format!("expected complex slab dims, got {:?}", file.dims)));
        }
        let get = |k: &str| -> Result<String> {
            file.meta
                .iter()
                .find(|(a, _)| a == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Format(format!("missing meta key {k}")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|e| Error::Format(format!("{k}: {e}"))) };
        let grid = GridSpec {
            n: num("n")? as usize,
            dx: num("dx")?,
            dt: num("dt")?,
            halfwidth: num("halfwidth")?,
            nx: num("nx")? as usize,
            nt: num("nt")? as usize,
        };
        let region = Region::parse(&get("region")?)?;
        let points: Vec<usize> = file.index.unwrap_or_default().into_iter().map(|p| p as usize).collect();
        let values: Vec<Complex64> = file.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        if values.len() != (grid.nt + 1) * points.len() {
            return Err(Error::Format("sample count does not match grid".into()));
        }
        let reserved = ["region", "n", "dx", "dt", "halfwidth", "nx", "nt"];
        let meta = file.meta.into_iter().filter(|(k, _)| !reserved.contains(&k.as_str())).collect();
        Ok(Self { grid, region, points, values, meta })
    }
}

/// Contents of a WAVF file.
#[derive(Debug, Clone, PartialEq)]
pub struct WavfFile {
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
    pub index: Option<Vec<u64>>,
    pub meta: Vec<(String, String)>,
}

pub fn write_wavf<W: Write>(
    mut w: W,
    dims: &[u64],
    data: &[f64],
    index: Option<&[u64]>,
    meta: &[(String, String)],
) -> Result<()> {
    let count: u64 = dims.iter().product();
    if count as usize != data.len() {
        return Err(Error::Format(format!("dims {dims:?} do not match {} samples", data.len())));
    }
    let mut buf = Vec::with_capacity(16 + 8 * dims.len() + 8 * data.len());
    buf.extend_from_slice(b"WAVF");
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.push(dims.len() as u8);
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(idx) = index {
        buf.extend_from_slice(b"IDXM");
        buf.extend_from_slice(&(idx.len() as u64).to_le_bytes());
        for i in idx {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    if !meta.is_empty() {
        let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        buf.extend_from_slice(b"META");
        buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
        buf.extend_from_slice(text.as_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_wavf<R: Read>(mut r: R) -> Result<WavfFile> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |k: usize| -> Result<&[u8]> {
        if pos + k > bytes.len() {
            return Err(Error::Format("truncated WAVF file".into()));
        }
        let s = &bytes[pos..pos + k];
        pos += k;
        Ok(s)
    };
    if take(4)? != b"WAVF" {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != 1 {
        return Err(Error::Format(format!("unsupported WAVF version {version}")));
    }
    let ndim = take(1)?[0] as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let count: u64 = dims.iter().product();
    let mut data = Vec::with_capacity(count as usize);
    for _ in 0..count {
        data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let mut index = None;
    let mut meta = Vec::new();
    while let Ok(t) = take(4) {
        let tag = <[u8; 4]>::try_from(t).unwrap();
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        match &tag {
            b"IDXM" => {
                let mut v = Vec::with_capacity(len);
                for _ in 0..len {
                    v.push(u64::from_le_bytes(take(8)?.try_into().unwrap()));
                }
                index = Some(v);
            }
            b"META" => {
                let text = std::str::from_utf8(take(len)?).map_err(|e| Error::Format(e.to_string()))?;
                for line in text.lines() {
                    if let Some((k, v)) = line.split_once('=') {
                        meta.push((k.to_string(), v.to_string()));
                    }
                }
            }
            _ => return Err(Error::Format(format!("unknown WAVF section {:?}", String::from_utf8_lossy(&tag)))),
        }
    }
    Ok(WavfFile { dims, data, index, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_respects_cfl_and_box() {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let g = GridSpec::new(&d, 0.05, 0.9).unwrap();
        assert!(g.cfl() <= 0.9 + 1e-12);
        assert!((g.time(g.nt) - 2.5).abs() < 1e-12);
        assert!((g.coord(g.nx - 1) - g.halfwidth).abs() < 1e-12);
        let p = g.points_in_ball(&[0.0; 3], 0.3);
        assert!(p.iter().all(|&i| crate::geometry::norm(&g.point(i)) < 0.3));
    }

    #[test]
    fn slab_round_trips_through_wavf() {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let g = GridSpec::new(&d, 0.2, 0.9).unwrap();
        let pts = g.points_in_shell(1.0, 1.3);
        let mut s = FieldSlab::zeros(g, Region::Exterior, pts);
        for (i, v) in s.values.iter_mut().enumerate() {
            *v = Complex64::new(i as f64, -0.5 * i as f64);
        }
        s.meta.push(("config_hash".into(), "abc".into()));
        let mut buf = Vec::new();
        s.write_wavf(&mut buf).unwrap();
        let back = FieldSlab::read_wavf(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_wavf(&b"WAVX\x01\0\0\0"[..]).is_err());
    }
}
