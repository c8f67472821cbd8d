use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClusteringResult, ModelKind};
use crate::error::{Error, Result};

const MAX_ITER: usize = 300;

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn lex_cmp(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Row order independent of the input order: lexicographic by value.
pub(crate) fn canonical_order(x: ArrayView2<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| lex_cmp(x.row(a), x.row(b)).then(a.cmp(&b)));
    order
}

/// Renumbers labels by first appearance in input order.
pub(crate) fn relabel(labels: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let mut map: Vec<(i64, i64)> = Vec::new();
    let mut old_of_new = Vec::new();
    let out = labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return l;
            }
            if let Some(&(_, n)) = map.iter().find(|(o, _)| *o == l) {
                return n;
            }
            let n = map.len() as i64;
            map.push((l, n));
            old_of_new.push(l as usize);
            n
        })
        .collect();
    (out, old_of_new)
}

fn nearest(row: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(pick)));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// stops changing or 300 iterations.
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusteringResult> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("k must lie in [1, {n}], got {k}")));
    }
    let order = canonical_order(x);
    let xs = x.select(Axis(0), &order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(&xs, k, &mut rng);
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut changed = false;
        for (i, row) in xs.rows().into_iter().enumerate() {
            let (c, _) = nearest(row, &centroids);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, row) in xs.rows().into_iter().enumerate() {
            sums.row_mut(assign[i]).scaled_add(1.0, &row);
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        let sse = xs
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| sq_dist(r, centroids.row(assign[i])))
            .sum();
        trace.push(sse);
    }
    let mut labels = vec![0i64; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = assign[pos] as i64;
    }
    let (labels, old_of_new) = relabel(&labels);
    // clusters that ended up empty go last
    let mut cen_order = old_of_new.clone();
    cen_order.extend((0..k).filter(|c| !old_of_new.contains(c)));
    Ok(ClusteringResult {
        kind: ModelKind::Kmeans,
        assignments: labels,
        centroids: Some(centroids.select(Axis(0), &cen_order)),
        parameters: vec![("k".into(), k as f64), ("seed".into(), seed as f64)],
        sse_trace: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_blobs() {
        let x = array![[0.0, 0.0], [10.0, 10.0], [0.1, 0.0], [10.0, 10.1], [0.0, 0.1], [9.9, 10.0]];
        let r = kmeans(x.view(), 2, 3).unwrap();
        assert_eq!(r.assignments, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]];
        let r = kmeans(x.view(), 1, 0).unwrap();
        let c = r.centroids.unwrap();
        assert!((c[[0, 0]] - 2.0).abs() < 1e-12 && (c[[0, 1]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let x = array![[0.0], [1.0], [5.0], [7.0]];
        let r = kmeans(x.view(), 4, 9).unwrap();
        assert_eq!(*r.sse_trace.last().unwrap(), 0.0);
        assert!(matches!(kmeans(x.view(), 5, 0), Err(Error::Config(_))));
    }
}
