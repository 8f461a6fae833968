//! Nearest-neighbour distances for initial Gaussian scales.

use crate::scalar::Real;

/// Root of the mean squared distance from each point to its `k` nearest
/// other points. Points are swept in x order and the scan stops once the x gap
/// alone exceeds the current k-th best distance.
pub fn knn_rms_distance<T: Real>(points: &[[T; 3]], k: usize) -> Vec<T> {
    let n = points.len();
    if n < 2 || k == 0 {
        return vec![T::one(); n];
    }
    let k = k.min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].partial_cmp(&points[b][0]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut out = vec![T::zero(); n];
    let mut best: Vec<T> = Vec::with_capacity(k + 1);
    for (rank, &i) in order.iter().enumerate() {
        best.clear();
        let p = points[i];
        let consider = |j: usize, best: &mut Vec<T>| -> bool {
            let q = points[j];
            let dx = q[0] - p[0];
            let dx2 = dx * dx;
            if best.len() == k && dx2 > best[k - 1] {
                return false;
            }
            let d2 = dx2 + (q[1] - p[1]) * (q[1] - p[1]) + (q[2] - p[2]) * (q[2] - p[2]);
            if best.len() < k || d2 < best[k - 1] {
                let pos = best.partition_point(|&v| v <= d2);
                best.insert(pos, d2);
                best.truncate(k);
            }
            true
        };
        for &j in order[rank + 1..].iter() {
            if !consider(j, &mut best) {
                break;
            }
        }
        for &j in order[..rank].iter().rev() {
            if !consider(j, &mut best) {
                break;
            }
        }
        let mean = best.iter().fold(T::zero(), |a, &b| a + b) / T::lit(best.len() as f64);
        out[i] = mean.sqrt();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..300).map(|_| [0; 3].map(|_| r.random_range(-1.0..1.0))).collect();
        let fast = knn_rms_distance(&pts, 3);
        for (i, p) in pts.iter().enumerate() {
            let mut d: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = ((d[0] + d[1] + d[2]) / 3.0).sqrt();
            assert!((fast[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(knn_rms_distance::<f64>(&[], 3), Vec::<f64>::new());
        assert_eq!(knn_rms_distance(&[[0.0f64; 3]], 3), vec![1.0]);
        assert_eq!(knn_rms_distance(&[[0.0f64; 3], [3.0, 4.0, 0.0]], 3), vec![5.0, 5.0]);
    }
}
