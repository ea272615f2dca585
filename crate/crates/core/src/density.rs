//! Probabilistic density volumes and their orthographic grayscale projections.
//!
//! A volume stores, per voxel, the fraction of the voxel covered by instances,
//! estimated on a regular `s³` sub-sample lattice (`s²` for planes). Averaging
//! the volumes of a run's seeds gives the run's probabilistic volume. Sphere
//! surface recipes get an equal-area longitude × z surface map instead, stored
//! as a volume with `dims[2] == 1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::PackingOutput;
use crate::recipe::{PackingVolume, VolumeMode};
use crate::{Error, Result};

pub const DEFAULT_SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVolume {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub origin: [f64; 3],
    /// Covered fraction of all ingredients together, x fastest then y then z.
    pub values: Vec<f64>,
    /// The same per ingredient.
    pub channels: BTreeMap<String, Vec<f64>>,
    pub n_outputs_averaged: usize,
}

impl DensityVolume {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn channel(&self, name: Option<&str>) -> Option<&[f64]> {
        match name {
            None => Some(&self.values),
            Some(n) => self.channels.get(n).map(|v| v.as_slice()),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Effective voxel counts for a volume: planes are one voxel thick.
pub fn effective_dims(volume: &PackingVolume, dims: [usize; 3]) -> [usize; 3] {
    let d = dims.map(|v| v.max(1));
    match volume.mode {
        VolumeMode::Box3d => d,
        VolumeMode::Plane2d | VolumeMode::SphereSurface => [d[0], d[1], 1],
    }
}

pub fn voxelize(out: &PackingOutput, volume: &PackingVolume, dims: [usize; 3]) -> DensityVolume {
    voxelize_with(out, volume, dims, DEFAULT_SUBSAMPLES)
}

/// Covered fraction per voxel from an `s`-per-axis sub-sample lattice.
pub fn voxelize_with(out: &PackingOutput, volume: &PackingVolume, dims: [usize; 3], s: usize) -> DensityVolume {
    let dims = effective_dims(volume, dims);
    let s = s.max(1);
    match volume.mode {
        VolumeMode::SphereSurface => surface_map(out, volume, [dims[0], dims[1]], s),
        _ => volumetric(out, volume, dims, s),
    }
}

fn names_of(out: &PackingOutput) -> Vec<String> {
    let mut names: Vec<String> = out.requested_counts.keys().cloned().collect();
    for i in &out.instances {
        if !names.contains(&i.ingredient) {
            names.push(i.ingredient.clone());
        }
    }
    names.sort();
    names
}

fn volumetric(out: &PackingOutput, volume: &PackingVolume, dims: [usize; 3], s: usize) -> DensityVolume {
    let planar = volume.mode == VolumeMode::Plane2d;
    let axes = if planar { 2 } else { 3 };
    let e = volume.extents;
    let voxel_size = [e[0] / dims[0] as f64, e[1] / dims[1] as f64, if planar { 0.0 } else { e[2] / dims[2] as f64 }];
    // Sub-sample lattice resolution per axis.
    let sub = [dims[0] * s, dims[1] * s, if planar { 1 } else { dims[2] * s }];
    let step = [e[0] / sub[0] as f64, e[1] / sub[1] as f64, if planar { 0.0 } else { e[2] / sub[2] as f64 }];
    let names = names_of(out);
    let total_sub = sub[0] * sub[1] * sub[2];
    let mut covered: Vec<Vec<bool>> = vec![vec![false; total_sub]; names.len()];

    let shifts = |k: usize| -> Vec<f64> {
        if volume.periodic && k < axes {
            vec![-e[k], 0.0, e[k]]
        } else {
            vec![0.0]
        }
    };
    let (sx, sy, sz) = (shifts(0), shifts(1), shifts(2));
    for inst in &out.instances {
        let ch = names.binary_search(&inst.ingredient).expect("names cover instances");
        let r = inst.radius;
        let r2 = r * r;
        for &dz in &sz {
            for &dy in &sy {
                for &dx in &sx {
                    let c = [inst.position[0] + dx, inst.position[1] + dy, inst.position[2] + dz];
                    let mut lo = [0usize; 3];
                    let mut hi = [0usize; 3];
                    let mut empty = false;
                    for k in 0..3 {
                        if k >= axes {
                            lo[k] = 0;
                            hi[k] = 0;
                            continue;
                        }
                        // Sub-point a sits at (a + 0.5) * step.
                        let a0 = ((c[k] - r) / step[k] - 0.5).ceil().max(0.0);
                        let a1 = ((c[k] + r) / step[k] - 0.5).floor().min(sub[k] as f64 - 1.0);
                        if a1 < a0 {
                            empty = true;
                            break;
                        }
                        lo[k] = a0 as usize;
                        hi[k] = a1 as usize;
                    }
                    if empty {
                        continue;
                    }
                    for az in lo[2]..=hi[2] {
                        let pz = if planar { 0.0 } else { (az as f64 + 0.5) * step[2] };
                        let dz2 = (pz - c[2]) * (pz - c[2]);
                        for ay in lo[1]..=hi[1] {
                            let py = (ay as f64 + 0.5) * step[1];
                            let dyz = dz2 + (py - c[1]) * (py - c[1]);
                            if dyz > r2 {
                                continue;
                            }
                            for ax in lo[0]..=hi[0] {
                                let px = (ax as f64 + 0.5) * step[0];
                                if dyz + (px - c[0]) * (px - c[0]) <= r2 {
                                    covered[ch][(az * sub[1] + ay) * sub[0] + ax] = true;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let per_voxel = if planar { s * s } else { s * s * s };
    let n = dims.iter().product::<usize>();
    let mut channels = BTreeMap::new();
    let mut combined = vec![0usize; n];
    for (name, bits) in names.iter().zip(&covered) {
        let mut counts = vec![0usize; n];
        for az in 0..sub[2] {
            for ay in 0..sub[1] {
                for ax in 0..sub[0] {
                    if bits[(az * sub[1] + ay) * sub[0] + ax] {
                        let v = ((az / s.min(sub[2])) * dims[1] + ay / s) * dims[0] + ax / s;
                        counts[v] += 1;
                    }
                }
            }
        }
        for (c, k) in combined.iter_mut().zip(&counts) {
            *c += k;
        }
        channels.insert(name.clone(), counts.into_iter().map(|c| c as f64 / per_voxel as f64).collect());
    }
    DensityVolume {
        dims,
        voxel_size,
        origin: [0.0; 3],
        // Instances never overlap, so the union count is the sum of channels.
        values: combined.into_iter().map(|c| (c.min(per_voxel)) as f64 / per_voxel as f64).collect(),
        channels,
        n_outputs_averaged: 1,
    }
}

/// Equal-area surface map: `bins[0]` longitude bins over [-π, π) by
/// `bins[1]` bands of equal z-height, each sampled on an `s × s` lattice.
fn surface_map(out: &PackingOutput, volume: &PackingVolume, bins: [usize; 2], s: usize) -> DensityVolume {
    let big_r = volume.surface_radius();
    let names = names_of(out);
    let (nl, nz) = (bins[0], bins[1]);
    let (sl, sz) = (nl * s, nz * s);
    let dphi = 2.0 * PI / sl as f64;
    let dz = 2.0 * big_r / sz as f64;
    let mut counts: Vec<Vec<usize>> = vec![vec![0; nl * nz]; names.len()];
    let mut combined = vec![0usize; nl * nz];
    for bz in 0..sz {
        let z = -big_r + (bz as f64 + 0.5) * dz;
        let rho = (big_r * big_r - z * z).max(0.0).sqrt();
        let rows: Vec<(usize, f64)> = out
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| (i.position[2] - z).abs() <= i.radius)
            .map(|(k, i)| (k, i.radius * i.radius))
            .collect();
        if rows.is_empty() {
            continue;
        }
        for bl in 0..sl {
            let phi = -PI + (bl as f64 + 0.5) * dphi;
            let p = [rho * phi.cos(), rho * phi.sin(), z];
            let hit = rows.iter().find(|(k, r2)| {
                let q = out.instances[*k].position;
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                d2 <= *r2
            });
            if let Some((k, _)) = hit {
                let ch = names.binary_search(&out.instances[*k].ingredient).expect("names cover instances");
                let v = (bz / s) * nl + bl / s;
                counts[ch][v] += 1;
                combined[v] += 1;
            }
        }
    }
    let per = (s * s) as f64;
    DensityVolume {
        dims: [nl, nz, 1],
        voxel_size: [2.0 * PI / nl as f64, 2.0 * big_r / nz as f64, 0.0],
        origin: [-PI, -big_r, 0.0],
        values: combined.into_iter().map(|c| c as f64 / per).collect(),
        channels: names
            .into_iter()
            .zip(counts)
            .map(|(n, c)| (n, c.into_iter().map(|x| x as f64 / per).collect()))
            .collect(),
        n_outputs_averaged: 1,
    }
}

fn exact_order_mean(column: &mut [f64]) -> f64 {
    // Summing in sorted order makes the mean independent of input order.
    column.sort_by(f64::total_cmp);
    column.iter().sum::<f64>() / column.len() as f64
}

/// Per-voxel arithmetic mean of volumes of identical shape.
pub fn average_volumes(vols: &[DensityVolume]) -> Result<DensityVolume> {
    let first = vols.first().ok_or(Error::ShapeMismatch)?;
    let same = |v: &DensityVolume| {
        v.dims == first.dims
            && v.voxel_size == first.voxel_size
            && v.origin == first.origin
            && v.channels.keys().eq(first.channels.keys())
    };
    if !vols.iter().all(same) {
        return Err(Error::ShapeMismatch);
    }
    let n = first.len();
    let average = |pick: &dyn Fn(&DensityVolume) -> &[f64]| -> Vec<f64> {
        let mut column = vec![0.0; vols.len()];
        (0..n)
            .map(|i| {
                for (c, v) in column.iter_mut().zip(vols) {
                    *c = pick(v)[i];
                }
                exact_order_mean(&mut column)
            })
            .collect()
    };
    let values = average(&|v| &v.values);
    let channels = first
        .channels
        .keys()
        .map(|k| (k.clone(), average(&|v| &v.channels[k])))
        .collect();
    Ok(DensityVolume {
        dims: first.dims,
        voxel_size: first.voxel_size,
        origin: first.origin,
        values,
        channels,
        n_outputs_averaged: vols.iter().map(|v| v.n_outputs_averaged).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Mean of the voxels along one axis. `pixels` hold the pre-normalization
/// means, row-major with row 0 at the highest vertical coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSidecar {
    pub axis: Axis,
    pub dims: [usize; 3],
    pub width: usize,
    pub height: usize,
    pub normalization_max: f64,
}

pub fn project(vol: &DensityVolume, axis: Axis) -> ProjectionImage {
    project_channel(vol, &vol.values, axis)
}

pub fn project_channel(vol: &DensityVolume, values: &[f64], axis: Axis) -> ProjectionImage {
    let [nx, ny, nz] = vol.dims;
    // (horizontal axis, vertical axis, projected axis)
    let (h, v, p) = match axis {
        Axis::X => (1, 2, 0),
        Axis::Y => (0, 2, 1),
        Axis::Z => (0, 1, 2),
    };
    let d = [nx, ny, nz];
    let (width, height, depth) = (d[h], d[v], d[p]);
    let mut pixels = vec![0.0; width * height];
    for row in 0..height {
        let vi = height - 1 - row;
        for col in 0..width {
            let mut sum = 0.0;
            for k in 0..depth {
                let mut c = [0usize; 3];
                c[h] = col;
                c[v] = vi;
                c[p] = k;
                sum += values[vol.index(c[0], c[1], c[2])];
            }
            pixels[row * width + col] = sum / depth as f64;
        }
    }
    ProjectionImage {
        axis,
        width,
        height,
        pixels,
    }
}

impl ProjectionImage {
    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Gray levels in [0, 1]: 0 is black, the brightest pixel is white.
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.max();
        if m <= 0.0 {
            return vec![0.0; self.pixels.len()];
        }
        self.pixels.iter().map(|p| p / m).collect()
    }

    /// Binary 8-bit PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        buf.extend(self.normalized().iter().map(|g| (g * 255.0).round().clamp(0.0, 255.0) as u8));
        buf
    }

    pub fn sidecar(&self, dims: [usize; 3]) -> ProjectionSidecar {
        ProjectionSidecar {
            axis: self.axis,
            dims,
            width: self.width,
            height: self.height,
            normalization_max: self.max(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VolumeHeader {
    dims: [usize; 3],
    voxel_size: [f64; 3],
    origin: [f64; 3],
    n_outputs_averaged: usize,
    /// Channel order after the combined block.
    channels: Vec<String>,
    dtype: String,
}

/// `u32` LE header length, canonical JSON header, then the combined values
/// and each channel as little-endian `f32`.
pub fn encode_volume(vol: &DensityVolume) -> Vec<u8> {
    let header = VolumeHeader {
        dims: vol.dims,
        voxel_size: vol.voxel_size,
        origin: vol.origin,
        n_outputs_averaged: vol.n_outputs_averaged,
        channels: vol.channels.keys().cloned().collect(),
        dtype: "f32le".into(),
    };
    let h = crate::canonical::to_string(&header).into_bytes();
    let mut buf = Vec::with_capacity(4 + h.len() + 4 * vol.len() * (1 + vol.channels.len()));
    buf.write_all(&(h.len() as u32).to_le_bytes()).expect("vec write");
    buf.extend_from_slice(&h);
    for block in std::iter::once(&vol.values).chain(vol.channels.values()) {
        for v in block {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_volume(bytes: &[u8]) -> Result<DensityVolume> {
    let bad = |m: &str| Error::MalformedDocument(format!("volume: {m}"));
    if bytes.len() < 4 {
        return Err(bad("truncated header"));
    }
    let hlen = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(4..4 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: VolumeHeader = serde_json::from_slice(body).map_err(Error::from_json)?;
    let n: usize = header.dims.iter().product();
    let floats = &bytes[4 + hlen..];
    if floats.len() != 4 * n * (1 + header.channels.len()) {
        return Err(bad("payload size does not match the header"));
    }
    let mut blocks = floats
        .chunks_exact(4 * n)
        .map(|b| b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect());
    let values = blocks.next().unwrap_or_default();
    let channels = header.channels.into_iter().zip(blocks).collect();
    Ok(DensityVolume {
        dims: header.dims,
        voxel_size: header.voxel_size,
        origin: header.origin,
        values,
        channels,
        n_outputs_averaged: header.n_outputs_averaged,
    })
}
