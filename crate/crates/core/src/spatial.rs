//! Euclidean k-nearest-neighbour queries on node coordinates.

use alloc::vec::Vec;

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

/// Indices of the `k` points closest to `xy[i]`, the point itself first.
/// Distance ties are broken by the lower index.
pub fn knn_with_self(xy: &[(f64, f64)], i: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xy.len()).collect();
    order.sort_by(|&a, &b| {
        let da = if a == i { -1.0 } else { distance(xy[i], xy[a]) };
        let db = if b == i { -1.0 } else { distance(xy[i], xy[b]) };
        da.total_cmp(&db).then(a.cmp(&b))
    });
    order.truncate(k.min(xy.len()));
    order
}

/// Indices of the `k` nearest other points of `xy[i]`.
pub fn knn_excluding_self(xy: &[(f64, f64)], i: usize, k: usize) -> Vec<usize> {
    let mut found = knn_with_self(xy, i, k + 1);
    found.retain(|&j| j != i);
    found.truncate(k);
    found
}

/// Mean distance from each point to its nearest neighbour.
pub fn mean_nearest_distance(xy: &[(f64, f64)]) -> f64 {
    if xy.len() < 2 {
        return 0.0;
    }
    let total: f64 = (0..xy.len())
        .map(|i| {
            (0..xy.len())
                .filter(|&j| j != i)
                .map(|j| distance(xy[i], xy[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / xy.len() as f64
}
