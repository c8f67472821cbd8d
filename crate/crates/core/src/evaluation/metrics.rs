use crate::error::{Error, Result};

/// Average 1-based ranks, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve from the Mann–Whitney statistic.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Schema("labels and scores differ in length".into()));
    }
    let n1 = labels.iter().filter(|&&l| l).count() as f64;
    let n0 = labels.len() as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::DegenerateLabels);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Fenwick tree over risk ranks.
struct Counts(Vec<usize>);

impl Counts {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> usize {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's concordance index. A pair is comparable when the shorter time
/// ends in an event; equal times are not comparable. Risk ties count half.
pub fn concordance_index(time: &[f64], event: &[bool], risk: &[f64]) -> Result<f64> {
    let n = time.len();
    if event.len() != n || risk.len() != n {
        return Err(Error::Schema("time, event and risk differ in length".into()));
    }
    // dense ranks of risk
    let mut sorted: Vec<f64> = risk.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank = |r: f64| sorted.partition_point(|&v| v < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    let mut counts = Counts(vec![0; sorted.len() + 1]);
    let mut inserted = 0usize;
    let (mut concordant, mut tied, mut comparable) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && time[order[j + 1]] == time[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if event[k] {
                let r = rank(risk[k]);
                let below = counts.below(r);
                let at_or_below = counts.below(r + 1);
                concordant += below;
                tied += at_or_below - below;
                comparable += inserted;
            }
        }
        for &k in &order[i..=j] {
            counts.add(rank(risk[k]));
            inserted += 1;
        }
        i = j + 1;
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / comparable as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[false, false, true, true], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&[false, true, false, true], &[0.4, 0.3, 0.2, 0.8]).unwrap(), 0.75);
        assert_eq!(auc(&[false, true, false, true], &[1.0; 4]).unwrap(), 0.5);
        assert!(matches!(auc(&[true, true], &[1.0, 2.0]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn concordance_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(concordance_index(&t, &[true; 3], &[3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(concordance_index(&t, &[true, true, false], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            concordance_index(&t, &[false; 3], &[1.0, 2.0, 3.0]),
            Err(Error::NoComparablePairs)
        ));
    }

    #[test]
    fn equal_times_not_comparable() {
        let c = concordance_index(&[1.0, 1.0, 2.0], &[true, true, true], &[1.0, 0.0, 0.5]).unwrap();
        // pairs (0,2) concordant, (1,2) discordant
        assert_eq!(c, 0.5);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
