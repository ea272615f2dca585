//! Nice, human-readable axis labels via the extended Wilkinson search.
//!
//! `nice_edges` picks bin edges that cover the data range (loose labelling),
//! aiming for `bins + 1` labels.

const Q: [f64; 6] = [1.0, 5.0, 2.0, 2.5, 4.0, 3.0];
const W: [f64; 4] = [0.25, 0.2, 0.5, 0.05];
const EPS: f64 = 1e-10;

fn simplicity(qi: usize, j: f64, lmin: f64, lmax: f64, lstep: f64) -> f64 {
    let n = Q.len() as f64;
    let rem = lmin.rem_euclid(lstep);
    let v = if (rem < EPS || lstep - rem < EPS) && lmin <= 0.0 && lmax >= 0.0 { 1.0 } else { 0.0 };
    1.0 - qi as f64 / (n - 1.0) - j + v
}

fn simplicity_max(qi: usize, j: f64) -> f64 {
    let n = Q.len() as f64;
    1.0 - qi as f64 / (n - 1.0) - j + 1.0
}

fn coverage(dmin: f64, dmax: f64, lmin: f64, lmax: f64) -> f64 {
    let range = dmax - dmin;
    1.0 - 0.5 * ((dmax - lmax).powi(2) + (dmin - lmin).powi(2)) / (0.1 * range).powi(2)
}

fn coverage_max(dmin: f64, dmax: f64, span: f64) -> f64 {
    let range = dmax - dmin;
    if span > range {
        let half = (span - range) / 2.0;
        1.0 - half * half / (0.1 * range).powi(2)
    } else {
        1.0
    }
}

fn density(k: f64, m: f64, dmin: f64, dmax: f64, lmin: f64, lmax: f64) -> f64 {
    let r = (k - 1.0) / (lmax - lmin);
    let rt = (m - 1.0) / (lmax.max(dmax) - dmin.min(lmin));
    2.0 - (r / rt).max(rt / r)
}

fn density_max(k: f64, m: f64) -> f64 {
    if k >= m {
        2.0 - (k - 1.0) / (m - 1.0)
    } else {
        1.0
    }
}

/// Labels `lmin, lmin + step, ..., lmax` covering `[dmin, dmax]`, about `m` of them.
pub fn extended(dmin: f64, dmax: f64, m: usize) -> Vec<f64> {
    let m = m.max(2) as f64;
    if !(dmin.is_finite() && dmax.is_finite()) {
        return vec![0.0, 1.0];
    }
    let (dmin, dmax) = if dmin <= dmax { (dmin, dmax) } else { (dmax, dmin) };
    if dmax - dmin < EPS {
        return vec![dmin - 0.5, dmin + 0.5];
    }
    let mut best: Option<(f64, f64, f64)> = None; // (lmin, lmax, step)
    let mut best_score = -2.0;
    let mut j = 1.0_f64;
    'outer: while j < f64::INFINITY {
        for (qi, &q) in Q.iter().enumerate() {
            let sm = simplicity_max(qi, j);
            if W[0] * sm + W[1] + W[2] + W[3] < best_score {
                break 'outer;
            }
            let mut k = 2.0_f64;
            while k < f64::INFINITY {
                let dm = density_max(k, m);
                if W[0] * sm + W[1] + W[2] * dm + W[3] < best_score {
                    break;
                }
                let delta = (dmax - dmin) / (k + 1.0) / j / q;
                let mut z = delta.log10().ceil();
                while z < f64::INFINITY {
                    let step = j * q * 10f64.powf(z);
                    let cm = coverage_max(dmin, dmax, step * (k - 1.0));
                    if W[0] * sm + W[1] * cm + W[2] * dm + W[3] < best_score {
                        break;
                    }
                    let min_start = (dmax / step).floor() * j - (k - 1.0) * j;
                    let max_start = (dmin / step).ceil() * j;
                    if min_start > max_start {
                        z += 1.0;
                        continue;
                    }
                    let mut start = min_start;
                    while start <= max_start {
                        let lmin = start * (step / j);
                        let lmax = lmin + step * (k - 1.0);
                        let lstep = step;
                        // Loose labelling only: the labels must cover the data.
                        if lmin <= dmin + EPS * (dmax - dmin) && lmax >= dmax - EPS * (dmax - dmin) {
                            let s = simplicity(qi, j, lmin, lmax, lstep);
                            let c = coverage(dmin, dmax, lmin, lmax);
                            let g = density(k, m, dmin, dmax, lmin, lmax);
                            let score = W[0] * s + W[1] * c + W[2] * g + W[3];
                            if score > best_score {
                                best_score = score;
                                best = Some((lmin, lmax, lstep));
                            }
                        }
                        start += 1.0;
                    }
                    z += 1.0;
                }
                k += 1.0;
            }
        }
        j += 1.0;
    }
    match best {
        Some((lmin, lmax, step)) => {
            let n = ((lmax - lmin) / step).round() as usize;
            (0..=n).map(|i| clean(lmin + i as f64 * step, step)).collect()
        }
        None => vec![dmin, dmax],
    }
}

/// Strip floating noise such as 0.30000000000000004 by rounding to the step's precision.
fn clean(v: f64, step: f64) -> f64 {
    let digits = (-step.abs().log10().floor() + 2.0).clamp(0.0, 15.0) as i32;
    let p = 10f64.powi(digits);
    let r = (v * p).round() / p;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Monotone bin edges covering `[lo, hi]`, aiming for `bins` bins.
/// `None` (no data) gives unit bins over [0, 1].
pub fn nice_edges(range: Option<(f64, f64)>, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    match range {
        None => extended(0.0, 1.0, bins + 1),
        Some((lo, hi)) => extended(lo, hi, bins + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_ranges() {
        assert_eq!(extended(0.0, 100.0, 5), vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        let tenth = extended(0.0, 1.0, 11);
        assert_eq!(tenth.len(), 11);
        assert_eq!(tenth[3], 0.3);
    }

    #[test]
    fn covers_awkward_range() {
        let e = extended(3.7, 488.2, 21);
        assert!(e[0] <= 3.7 && *e.last().unwrap() >= 488.2);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(extended(2.0, 2.0, 5), vec![1.5, 2.5]);
        let e = nice_edges(None, 4);
        assert_eq!(e.first(), Some(&0.0));
        assert_eq!(e.last(), Some(&1.0));
    }

    #[test]
    fn negative_range() {
        let e = extended(-7.0, 13.0, 6);
        assert!(e[0] <= -7.0 && *e.last().unwrap() >= 13.0);
        assert!(e.contains(&0.0));
    }
}
