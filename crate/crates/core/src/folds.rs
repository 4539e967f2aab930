//! Deterministic K-fold assignment keyed to row identifiers.
//!
//! Rows are ranked by a seeded hash of their identifier and dealt to folds
//! round-robin, so a row's fold depends only on its id, the seed and the set
//! of ids present, never on row order.

use crate::util::stable_hash;

/// Fold index in `0..k` for every row.
pub fn assign(row_ids: &[String], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1, "at least one fold");
    let mut order: Vec<(u64, &str, usize)> = row_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (stable_hash(id, seed), id.as_str(), i))
        .collect();
    order.sort_unstable();
    let mut folds = vec![0; row_ids.len()];
    for (rank, &(_, _, i)) in order.iter().enumerate() {
        folds[i] = rank % k;
    }
    folds
}

/// Merges every fold whose complement (its training set) carries a single
/// label class into the next fold, until all training sets see both classes
/// or only one fold remains. Returns the merged assignment, renumbered
/// densely, and the number of merges performed.
pub fn merge_degenerate(folds: &[usize], labels: &[bool]) -> (Vec<usize>, usize) {
    let mut folds = folds.to_vec();
    let mut merges = 0;
    loop {
        let ids = distinct(&folds);
        if ids.len() <= 1 {
            return (renumber(&folds), merges);
        }
        let bad = ids.iter().position(|&f| {
            let mut seen = (false, false);
            for (g, &l) in folds.iter().zip(labels) {
                if *g != f {
                    if l {
                        seen.0 = true;
                    } else {
                        seen.1 = true;
                    }
                }
            }
            !(seen.0 && seen.1)
        });
        match bad {
            None => return (renumber(&folds), merges),
            Some(pos) => {
                let from = ids[pos];
                let into = ids[(pos + 1) % ids.len()];
                log::warn!("fold {from} has single-class training labels; merging into fold {into}");
                for g in folds.iter_mut() {
                    if *g == from {
                        *g = into;
                    }
                }
                merges += 1;
            }
        }
    }
}

fn distinct(folds: &[usize]) -> Vec<usize> {
    let mut ids = folds.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn renumber(folds: &[usize]) -> Vec<usize> {
    let ids = distinct(folds);
    folds
        .iter()
        .map(|f| ids.binary_search(f).expect("present"))
        .collect()
}

/// Number of folds in an assignment.
pub fn count(folds: &[usize]) -> usize {
    folds.iter().copied().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("firm{i}")).collect()
    }

    #[test]
    fn balanced_and_complete() {
        let f = assign(&ids(103), 5, 42);
        let mut sizes = [0; 5];
        for &x in &f {
            sizes[x] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 20 || s == 21));
    }

    #[test]
    fn invariant_to_row_order() {
        let a = ids(50);
        let mut b = a.clone();
        b.reverse();
        let fa = assign(&a, 5, 1);
        let fb = assign(&b, 5, 1);
        for (i, id) in a.iter().enumerate() {
            let j = b.iter().position(|x| x == id).unwrap();
            assert_eq!(fa[i], fb[j]);
        }
    }

    #[test]
    fn leave_one_out() {
        let f = assign(&ids(10), 10, 3);
        let mut sorted = f.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_fold_is_merged() {
        // fold 0 holds the only negatives, so its complement is all positive
        let folds = vec![0, 0, 1, 1, 2, 2];
        let labels = vec![false, false, true, true, true, true];
        let (merged, n) = merge_degenerate(&folds, &labels);
        assert!(n >= 1);
        for f in 0..count(&merged) {
            let train: Vec<bool> = merged
                .iter()
                .zip(&labels)
                .filter(|(g, _)| **g != f)
                .map(|(_, l)| *l)
                .collect();
            assert!(count(&merged) == 1 || (train.contains(&true) && train.contains(&false)));
        }
    }
}
