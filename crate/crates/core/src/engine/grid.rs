//! Candidate drop points ("spatial tracking grid") and their occupancy.

use std::f64::consts::PI;

use crate::engine::cells::CellIndex;
use crate::geom::{min_image_distance, Vec3};
use crate::recipe::{PackingVolume, VolumeMode};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Grid {
    points: Vec<Vec3>,
    spacing: f64,
    period: [Option<f64>; 3],
    index: CellIndex,
    free: Vec<bool>,
    free_list: Vec<u32>,
    slot: Vec<u32>,
    lowest_free: usize,
}

/// Centres of `n = ceil(len / s)` cells, laid out symmetrically so every
/// point lies strictly inside `[0, len]`.
fn axis_centres(len: f64, s: f64) -> Vec<f64> {
    let n = (len / s).ceil().max(1.0) as usize;
    let offset = (len - (n - 1) as f64 * s) / 2.0;
    (0..n).map(|i| offset + i as f64 * s).collect()
}

/// `n` area-uniform points on a sphere of radius `r` (Fibonacci spiral: equal
/// steps in z, golden-angle steps in longitude).
pub fn fibonacci_sphere(n: usize, r: f64) -> Vec<Vec3> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let theta = golden_angle * i as f64;
            [r * rho * theta.cos(), r * rho * theta.sin(), r * z]
        })
        .collect()
}

pub fn build_grid(volume: &PackingVolume, spacing: f64) -> Result<Grid> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Validation(vec!["grid spacing must be > 0".into()]));
    }
    let e = volume.extents;
    let points: Vec<Vec3> = match volume.mode {
        VolumeMode::Box3d => {
            let (xs, ys, zs) = (axis_centres(e[0], spacing), axis_centres(e[1], spacing), axis_centres(e[2], spacing));
            let mut pts = Vec::with_capacity(xs.len() * ys.len() * zs.len());
            for &z in &zs {
                for &y in &ys {
                    for &x in &xs {
                        pts.push([x, y, z]);
                    }
                }
            }
            pts
        }
        VolumeMode::Plane2d => {
            let (xs, ys) = (axis_centres(e[0], spacing), axis_centres(e[1], spacing));
            let mut pts = Vec::with_capacity(xs.len() * ys.len());
            for &y in &ys {
                for &x in &xs {
                    pts.push([x, y, 0.0]);
                }
            }
            pts
        }
        VolumeMode::SphereSurface => {
            let r = e[0];
            let n = (4.0 * PI * r * r / (spacing * spacing)).ceil() as usize;
            fibonacci_sphere(n, r)
        }
    };
    if points.is_empty() || points.len() > u32::MAX as usize {
        return Err(Error::EmptyGrid);
    }
    let (origin, extent) = domain_bounds(volume);
    let period = volume.period();
    let mut index = CellIndex::new(origin, extent, spacing.max(extent_scale(extent) / 256.0), period.map(|p| p.is_some()));
    for (i, p) in points.iter().enumerate() {
        index.insert(i as u32, *p);
    }
    let n = points.len();
    Ok(Grid {
        points,
        spacing,
        period,
        index,
        free: vec![true; n],
        free_list: (0..n as u32).collect(),
        slot: (0..n as u32).collect(),
        lowest_free: 0,
    })
}

fn extent_scale(extent: Vec3) -> f64 {
    extent.iter().copied().fold(0.0, f64::max)
}

/// Axis-aligned bounds of every position an instance centre can take.
pub(crate) fn domain_bounds(volume: &PackingVolume) -> (Vec3, Vec3) {
    let e = volume.extents;
    match volume.mode {
        VolumeMode::Box3d => ([0.0; 3], e),
        VolumeMode::Plane2d => ([0.0; 3], [e[0], e[1], 0.0]),
        VolumeMode::SphereSurface => ([-e[0]; 3], [2.0 * e[0]; 3]),
    }
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn free_count(&self) -> usize {
        self.free_list.len()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.free[i]
    }

    /// Free point indices in free-list order.
    pub fn free_points(&self) -> &[u32] {
        &self.free_list
    }

    /// The `k`-th entry of the free list.
    pub fn nth_free(&self, k: usize) -> usize {
        self.free_list[k] as usize
    }

    pub fn lowest_free(&mut self) -> Option<usize> {
        while self.lowest_free < self.free.len() && !self.free[self.lowest_free] {
            self.lowest_free += 1;
        }
        (self.lowest_free < self.free.len()).then_some(self.lowest_free)
    }

    pub fn occupy(&mut self, i: usize) {
        if !self.free[i] {
            return;
        }
        self.free[i] = false;
        let s = self.slot[i] as usize;
        let last = *self.free_list.last().expect("free point implies non-empty list");
        self.free_list.swap_remove(s);
        if last as usize != i {
            self.slot[last as usize] = s as u32;
        }
    }

    /// Marks every point within `radius` of `centre` occupied and returns how
    /// many points were examined.
    pub fn occupy_within(&mut self, centre: Vec3, radius: f64) -> u64 {
        let mut hits = Vec::new();
        let mut examined = 0u64;
        let period = self.period;
        let points = &self.points;
        self.index.for_each_near(centre, radius, |id| {
            examined += 1;
            if min_image_distance(centre, points[id as usize], &period) <= radius {
                hits.push(id as usize);
            }
        });
        for i in hits {
            self.occupy(i);
        }
        examined
    }
}
