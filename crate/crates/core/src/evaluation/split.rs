use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Indices of each stratum (false first), shuffled by one seeded stream.
fn shuffled_strata(labels: &[bool], rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut strata = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        strata[l as usize].push(i);
    }
    for s in &mut strata {
        s.shuffle(rng);
    }
    strata
}

/// Round-half-up share of a stratum sent to the test side.
fn test_count(n: usize, test_size: f64) -> usize {
    (test_size * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Splits indices into (train, test), each sorted, keeping each label's
/// proportion.
pub fn stratified_split(labels: &[bool], test_size: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_size > 0.0 && test_size < 1.0) {
        return Err(Error::Config(format!("test size must lie in (0, 1), got {test_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata = shuffled_strata(labels, &mut rng);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, s) in strata.iter().enumerate() {
        let k = test_count(s.len(), test_size);
        if k == 0 || k >= s.len() {
            return Err(Error::Stratification(format!(
                "stratum {label} has {} samples; cannot place one on each side at test size {test_size}",
                s.len()
            )));
        }
        test.extend_from_slice(&s[..k]);
        train.extend_from_slice(&s[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold index per sample. Each stratum is shuffled and dealt round-robin,
/// with the dealing position carried from one stratum to the next.
pub fn stratified_kfold(labels: &[bool], n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata = shuffled_strata(labels, &mut rng);
    let minority = strata.iter().map(Vec::len).min().unwrap_or(0);
    if minority < n_folds {
        return Err(Error::Stratification(format!(
            "smallest class has {minority} samples, fewer than {n_folds} folds"
        )));
    }
    let mut folds = vec![0; labels.len()];
    let mut counter = 0;
    for s in &strata {
        for &i in s {
            folds[i] = counter % n_folds;
            counter += 1;
        }
    }
    Ok(folds)
}
