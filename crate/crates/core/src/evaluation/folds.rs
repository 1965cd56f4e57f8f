use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k` disjoint sets of session indices; all sessions of a therapist share
/// one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: Vec<Vec<usize>>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }

    /// Checks the partition and grouping properties against `therapists`.
    pub fn verify(&self, therapists: &[&str]) -> Result<()> {
        let mut seen = vec![false; therapists.len()];
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (f, fold) in self.folds.iter().enumerate() {
            for &i in fold {
                if i >= seen.len() || seen[i] {
                    return Err(Error::Protocol(format!("session index {i} assigned twice or out of range")));
                }
                seen[i] = true;
                if let Some(prev) = owner.insert(therapists[i], f) {
                    if prev != f {
                        return Err(Error::Protocol(format!(
                            "therapist `{}` appears in folds {prev} and {f}",
                            therapists[i]
                        )));
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Protocol(format!("session index {i} is in no fold")));
        }
        Ok(())
    }
}

/// Seeded Fisher–Yates shuffle (same recipe as the batch order).
pub(crate) fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u32) as usize;
        items.swap(i, j);
    }
}

/// Therapist-grouped k-fold split.
///
/// Therapists are shuffled with `seed`, stably sorted by session count
/// (largest first) and each is placed in the fold that currently holds the
/// fewest sessions, lowest fold index on ties.
pub fn grouped_kfold(therapists: &[&str], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in therapists.iter().enumerate() {
        groups.entry(t).or_default().push(i);
    }
    if k == 0 || groups.len() < k {
        return Err(Error::Protocol(format!(
            "grouped {k}-fold split needs at least {k} therapists, found {}",
            groups.len()
        )));
    }
    let mut order: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
    shuffle(&mut order, seed);
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (_, sessions) in order {
        let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).expect("k > 0");
        folds[target].extend(sessions);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    let assignment = FoldAssignment { folds };
    assignment.verify(therapists)?;
    Ok(assignment)
}

/// Splits `indices` into (train, validation) by holding out
/// `ceil(fraction · #therapists)` therapists, at least one, chosen with `seed`.
pub fn carve_validation(
    indices: &[usize],
    therapists: &[&str],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut names: Vec<&str> = indices
        .iter()
        .map(|&i| therapists[i])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if names.len() < 2 {
        return Err(Error::Protocol(
            "a validation carve-out needs at least two training therapists".into(),
        ));
    }
    shuffle(&mut names, seed);
    let n_val = ((fraction * names.len() as f64).ceil() as usize).clamp(1, names.len() - 1);
    let held: BTreeSet<&str> = names[..n_val].iter().copied().collect();
    Ok(indices.iter().partition(|&&i| !held.contains(therapists[i])))
}
