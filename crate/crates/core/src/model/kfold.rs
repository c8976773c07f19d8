use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::Label;

/// Indices of one cross-validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified K-fold split.
///
/// Each class is shuffled with a seeded stream and dealt round-robin over the
/// folds; the second class continues the deal where the first one stopped so
/// fold sizes differ by at most one. Per-fold class counts are within one of
/// `class_count / k`.
pub fn stratified_k_fold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let mut rng = seed::rng(seed);
    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in [Label::NoiseOnly, Label::SignalPresent] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {class:?} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for idx in members {
            test_sets[next % k].push(idx);
            next += 1;
        }
    }
    Ok(test_sets
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let mut test = test.clone();
            test.sort_unstable();
            let mut train: Vec<usize> = test_sets
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, t)| t.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect())
}
