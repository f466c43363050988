use pfn_core::data::Dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{derive_seed, Key};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const MAX_GUARD_ATTEMPTS: usize = 1000;

/// One repetition: training rows in presentation order (prefixes of this
/// order form the fraction schedule) and test rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub split_id: usize,
    /// Indices into the dataset's rows.
    pub train: Vec<usize>,
    /// Indices into the dataset's rows, or into its fixed test split.
    pub test: Vec<usize>,
    pub fixed_test: bool,
    /// Permutations drawn until the imbalance guard held.
    pub attempts: usize,
}

fn guard_holds(ds: &Dataset, train: &[usize]) -> bool {
    ds.guard.is_none_or(|g| {
        train
            .iter()
            .take(g.window)
            .filter(|&&i| ds.y[i] == g.class)
            .count()
            >= g.min_count
    })
}

/// Number of test rows cut from `n` rows: `round(n * fraction)`, at least 1
/// and leaving at least 1 training row.
pub fn test_rows(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// `n_reps` random permutations. Without a fixed test split the first
/// `test_fraction` of each permutation is the test set and the rest the
/// training set; with one, only the training rows are permuted. Flagged
/// imbalanced datasets redraw until the guard class has `min_count` rows
/// among the first `window` training rows.
pub fn make_splits(
    ds: &Dataset,
    n_reps: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    if n_reps == 0 {
        return Err(Error::Parameter("at least one repetition is needed".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Parameter(format!("test fraction {test_fraction}")));
    }
    let n = ds.n_rows();
    let fixed = ds.test.as_ref().map(|t| t.n_rows());
    if n < 2 && fixed.is_none() {
        return Err(Error::Config(format!("{}: too few rows to split", ds.name)));
    }
    let mut plans = Vec::with_capacity(n_reps);
    for split_id in 0..n_reps {
        let mut attempt = 0;
        let plan = loop {
            if attempt == MAX_GUARD_ATTEMPTS {
                let g = ds.guard.expect("only the guard rejects a plan");
                return Err(Error::Config(format!(
                    "{}: imbalance guard ({} rows of class {} within the first {}) unsatisfiable after {MAX_GUARD_ATTEMPTS} permutations",
                    ds.name, g.min_count, g.class, g.window
                )));
            }
            let s = derive_seed(
                seed,
                &[Key::Str(&ds.name), Key::Int(split_id as u64), Key::Int(attempt as u64)],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            attempt += 1;
            let (train, test) = match fixed {
                Some(m) => (perm, (0..m).collect()),
                None => {
                    let k = test_rows(n, test_fraction);
                    let train = perm.split_off(k);
                    (train, perm)
                }
            };
            if guard_holds(ds, &train) {
                break SplitPlan {
                    split_id,
                    train,
                    test,
                    fixed_test: fixed.is_some(),
                    attempts: attempt,
                };
            }
        };
        plans.push(plan);
    }
    Ok(plans)
}
