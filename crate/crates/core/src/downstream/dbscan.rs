use ndarray::ArrayView2;

use super::kmeans::relabel;
use super::{ClusteringResult, ModelKind};
use crate::error::{Error, Result};

/// Density-based clustering. Core points within `eps` of each other share a
/// cluster; a border point joins the cluster of its nearest core neighbour,
/// so the result does not depend on row order beyond label names.
pub fn dbscan(x: ArrayView2<f64>, eps: f64, min_pts: usize) -> Result<ClusteringResult> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::Config("dbscan needs eps > 0 and min_pts >= 1".into()));
    }
    let eps2 = eps * eps;
    let dist2 = |a: usize, b: usize| -> f64 { x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q).powi(2)).sum() };
    let neighbours: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist2(i, j) <= eps2).collect()).collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![-1i64; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start] >= 0 {
            continue;
        }
        labels[start] = next;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] < 0 {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    let core_labels = labels.clone();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let nearest = neighbours[i]
            .iter()
            .filter(|&&j| core[j])
            .min_by(|&&a, &&b| {
                dist2(i, a).total_cmp(&dist2(i, b)).then_with(|| {
                    x.row(a)
                        .iter()
                        .zip(x.row(b))
                        .map(|(p, q)| p.total_cmp(q))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            });
        if let Some(&j) = nearest {
            labels[i] = core_labels[j];
        }
    }
    let (labels, _) = relabel(&labels);
    Ok(ClusteringResult {
        kind: ModelKind::Dbscan,
        assignments: labels,
        centroids: None,
        parameters: vec![("eps".into(), eps), ("min_pts".into(), min_pts as f64)],
        sse_trace: Vec::new(),
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pair_and_noise() {
        let x = array![[0.0, 0.0], [0.0, 0.1], [5.0, 5.0]];
        let r = dbscan(x.view(), 0.5, 2).unwrap();
        assert_eq!(r.assignments, vec![0, 0, -1]);
    }

    #[test]
    fn all_close_is_one_cluster() {
        let x = array![[0.0], [0.1], [0.2], [0.15]];
        assert_eq!(dbscan(x.view(), 1.0, 4).unwrap().assignments, vec![0; 4]);
        assert_eq!(dbscan(x.view(), 1.0, 5).unwrap().assignments, vec![-1; 4]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = array![[0.0]];
        assert!(dbscan(x.view(), 0.0, 1).is_err());
        assert!(matches!(dbscan(x.slice(ndarray::s![..0, ..]), 1.0, 1), Err(Error::EmptyInput)));
    }
}
