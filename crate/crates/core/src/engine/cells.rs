//! Uniform cell index over the packing domain, used both for instance
//! collision queries and for marking occupied grid points.

use crate::geom::Vec3;

#[derive(Debug, Clone)]
pub struct CellIndex {
    origin: Vec3,
    cell_len: Vec3,
    dims: [usize; 3],
    periodic: [bool; 3],
    buckets: Vec<Vec<u32>>,
}

impl CellIndex {
    /// Cells of edge at least `min_cell` covering `[origin, origin + extent]`.
    /// Axes with zero extent get a single cell.
    pub fn new(origin: Vec3, extent: Vec3, min_cell: f64, periodic: [bool; 3]) -> Self {
        let mut dims = [1usize; 3];
        let mut cell_len = [1.0; 3];
        let total_cap = 1usize << 22;
        for k in 0..3 {
            if extent[k] > 0.0 {
                let n = if min_cell > 0.0 {
                    (extent[k] / min_cell).floor().max(1.0) as usize
                } else {
                    1
                };
                dims[k] = n.min(1 << 10);
                cell_len[k] = extent[k] / dims[k] as f64;
            }
        }
        while dims.iter().product::<usize>() > total_cap {
            for k in 0..3 {
                if dims[k] > 1 {
                    dims[k] = dims[k].div_ceil(2);
                    cell_len[k] = extent[k] / dims[k] as f64;
                }
            }
        }
        let n = dims.iter().product();
        CellIndex {
            origin,
            cell_len,
            dims,
            periodic,
            buckets: vec![Vec::new(); n],
        }
    }

    fn coord(&self, k: usize, x: f64) -> i64 {
        ((x - self.origin[k]) / self.cell_len[k]).floor() as i64
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn insert(&mut self, id: u32, p: Vec3) {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let n = self.dims[k] as i64;
            let i = self.coord(k, p[k]);
            c[k] = if self.periodic[k] {
                i.rem_euclid(n) as usize
            } else {
                i.clamp(0, n - 1) as usize
            };
        }
        let f = self.flat(c);
        self.buckets[f].push(id);
    }

    /// Calls `f` with every id stored in a cell overlapping the cube of
    /// half-width `reach` around `p`. Each id is visited at most once.
    pub fn for_each_near(&self, p: Vec3, reach: f64, mut f: impl FnMut(u32)) {
        let mut ranges: [Vec<usize>; 3] = Default::default();
        for k in 0..3 {
            let n = self.dims[k] as i64;
            let lo = self.coord(k, p[k] - reach);
            let hi = self.coord(k, p[k] + reach);
            let r = &mut ranges[k];
            if self.periodic[k] {
                if hi - lo + 1 >= n {
                    r.extend(0..n as usize);
                } else {
                    r.extend((lo..=hi).map(|i| i.rem_euclid(n) as usize));
                }
            } else {
                let lo = lo.clamp(0, n - 1);
                let hi = hi.clamp(0, n - 1);
                r.extend(lo as usize..=hi as usize);
            }
        }
        for &z in &ranges[2] {
            for &y in &ranges[1] {
                for &x in &ranges[0] {
                    for &id in &self.buckets[self.flat([x, y, z])] {
                        f(id);
                    }
                }
            }
        }
    }
}
