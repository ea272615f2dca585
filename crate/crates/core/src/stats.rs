//! Small statistics toolkit used by the analysis checks.

use std::f64::consts::PI;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    /// True when uniformity is not rejected at level `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pearson χ² test of observed bin counts against equal expected counts.
pub fn chi_square_uniform(counts: &[u64]) -> ChiSquare {
    let total: u64 = counts.iter().sum();
    let k = counts.len();
    if k < 2 || total == 0 {
        return ChiSquare { statistic: 0.0, dof: k.saturating_sub(1), p_value: 1.0 };
    }
    let expected = total as f64 / k as f64;
    let statistic = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
    let dof = k - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof > 0");
    ChiSquare { statistic, dof, p_value: dist.sf(statistic) }
}

/// Upper critical value of χ² with `dof` degrees of freedom at level `alpha`.
pub fn chi_square_critical(dof: usize, alpha: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("dof > 0").inverse_cdf(1.0 - alpha)
}

/// Equal-area bin of a point on a centred sphere: `bands` equal z-slabs
/// times `sectors` longitude sectors. Returns `band * sectors + sector`.
pub fn sphere_bin(p: Vec3, bands: usize, sectors: usize) -> usize {
    let r = crate::geom::norm(p);
    let z = if r > 0.0 { (p[2] / r).clamp(-1.0, 1.0) } else { 0.0 };
    let band = (((z + 1.0) / 2.0 * bands as f64) as usize).min(bands - 1);
    let phi = p[1].atan2(p[0]);
    let sector = (((phi + PI) / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
    band * sectors + sector
}

pub fn sphere_bin_counts(points: &[Vec3], bands: usize, sectors: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bands * sectors];
    for p in points {
        counts[sphere_bin(*p, bands, sectors)] += 1;
    }
    counts
}

/// Ranks starting at 1, ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&ranks(xs), &ranks(ys))
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population standard deviation divided by the mean.
pub fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if m == 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    Some(var.sqrt() / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_flat_and_skewed() {
        assert!(chi_square_uniform(&[100, 100, 100, 100]).passes(0.01));
        assert!(!chi_square_uniform(&[400, 0, 0, 0]).passes(0.01));
        let crit = chi_square_critical(9, 0.01);
        assert!((crit - 21.666).abs() < 1e-3);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let r: Vec<f64> = y.iter().rev().copied().collect();
        assert!((spearman(&x, &r).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]), None);
    }

    #[test]
    fn sphere_bins_cover_octants() {
        assert_eq!(sphere_bin([0.0, 0.0, 1.0], 4, 4), 3 * 4 + 2);
        assert_eq!(sphere_bin([-1.0, -1e-9, -0.9], 2, 2), 0);
        let c = sphere_bin_counts(&[[1.0, 0.0, 0.0], [-1.0, 0.1, 0.0]], 2, 2);
        assert_eq!(c.iter().sum::<u64>(), 2);
    }

    #[test]
    fn coefficient_of_variation_basics() {
        assert_eq!(coefficient_of_variation(&[2.0, 2.0]), Some(0.0));
        assert!((coefficient_of_variation(&[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
    }
}
