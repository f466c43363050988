use pfn_bench::baselines::*;
use pfn_core::numeric::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Integer-valued coordinates so that distance and split ties are common.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize) -> (Matrix<f64>, Vec<usize>) {
    let v = (0..n * d).map(|_| rng.random_range(0..6) as f64).collect();
    let y = (0..n).map(|_| rng.random_range(0..c)).collect();
    (Matrix::from_vec(n, d, v).unwrap(), y)
}

fn knn_oracle(x: &Matrix<f64>, y: &[usize], q: &[f64], k: usize) -> usize {
    let dist: Vec<f64> = (0..x.rows())
        .map(|i| x.row(i).iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    let mut taken = vec![false; x.rows()];
    let n_classes = y.iter().max().unwrap() + 1;
    let mut votes = vec![0; n_classes];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..x.rows() {
            if !taken[i] && best.is_none_or(|b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        votes[y[b]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..=4);
        let c = rng.random_range(2..=4);
        let (x, y) = random_instance(&mut rng, n, d, c);
        let (q, _) = random_instance(&mut rng, 20, d, c);
        let k = rng.random_range(1..=n);
        let got = knn_predict(&x, &y, &q, KnnParams { k }).unwrap();
        for r in 0..q.rows() {
            assert_eq!(got[r], knn_oracle(&x, &y, q.row(r), k), "n {n} k {k}");
        }
    }
}

fn weighted_gini(rows: &[usize], y: &[usize], n_classes: usize) -> f64 {
    let mut c = vec![0; n_classes];
    rows.iter().for_each(|&i| c[y[i]] += 1);
    rows.len() as f64 * gini(&c)
}

/// Lowest child impurity over every (feature, midpoint) split that keeps
/// `min_leaf` rows on each side.
fn best_split_impurity(x: &Matrix<f64>, y: &[usize], rows: &[usize], min_leaf: usize, n_classes: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x.get(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let imp = weighted_gini(&l, y, n_classes) + weighted_gini(&r, y, n_classes);
            if best.is_none_or(|b| imp < b) {
                best = Some(imp);
            }
        }
    }
    best
}

fn check_tree(x: &Matrix<f64>, y: &[usize], p: TreeParams) {
    let tree = tree_fit(x, y, p).unwrap();
    let n_classes = y.iter().max().unwrap() + 1;
    // rows reaching each node, by routing the training data
    let mut reach: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    let mut depth = vec![0usize; tree.nodes.len()];
    reach[0] = (0..x.rows()).collect();
    for id in 0..tree.nodes.len() {
        let rows = reach[id].clone();
        assert!(!rows.is_empty());
        let mut counts = vec![0; n_classes];
        rows.iter().for_each(|&i| counts[y[i]] += 1);
        assert_eq!(tree.nodes[id].counts(), counts.as_slice());
        let oracle = best_split_impurity(x, y, &rows, p.min_samples_leaf, n_classes);
        let impure = counts.iter().filter(|&&c| c > 0).count() > 1;
        let may_split = impure && depth[id] < p.max_depth && rows.len() >= p.min_samples_split;
        match &tree.nodes[id] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                assert!(may_split);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, *feature) <= *threshold);
                let imp = weighted_gini(&l, y, n_classes) + weighted_gini(&r, y, n_classes);
                assert!((imp - oracle.unwrap()).abs() < 1e-9, "node {id}: {imp} vs {oracle:?}");
                reach[*left] = l;
                reach[*right] = r;
                depth[*left] = depth[id] + 1;
                depth[*right] = depth[id] + 1;
            }
            Node::Leaf { class, .. } => {
                assert!(!may_split || oracle.is_none(), "node {id} should split");
                let top = *counts.iter().max().unwrap();
                assert_eq!(*class, counts.iter().position(|&c| c == top).unwrap());
            }
        }
    }
}

#[test]
fn depth_two_tree_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (x, y) = random_instance(&mut rng, 30, 3, 3);
        check_tree(&x, &y, TreeParams { max_depth: 2, min_samples_split: 2, min_samples_leaf: 1 });
    }
}

#[test]
fn trees_match_exhaustive_search_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let (d, c) = (rng.random_range(1..=4), rng.random_range(2..=4));
        let (x, y) = random_instance(&mut rng, n, d, c);
        let p = TreeParams {
            max_depth: rng.random_range(1..=8),
            min_samples_split: rng.random_range(2..=10),
            min_samples_leaf: rng.random_range(1..=5),
        };
        check_tree(&x, &y, p);
    }
}

/// A tree predicts the class of the leaf its query lands in, found here by a
/// direct walk over the stored nodes.
#[test]
fn tree_predictions_follow_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (x, y) = random_instance(&mut rng, 60, 2, 3);
        let t = tree_fit(&x, &y, TreeParams::default()).unwrap();
        let (q, _) = random_instance(&mut rng, 40, 2, 3);
        let pred = tree_predict(&t, &q).unwrap();
        for r in 0..q.rows() {
            let mut i = 0;
            let class = loop {
                match &t.nodes[i] {
                    Node::Leaf { class, .. } => break *class,
                    Node::Split { feature, threshold, left, right, .. } => {
                        i = if q.get(r, *feature) <= *threshold { *left } else { *right }
                    }
                }
            };
            assert_eq!(pred[r], class);
        }
    }
}

#[test]
fn tuner_only_scores_held_out_fold_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for family in [Family::Knn, Family::Tree] {
        for trial in 0..10 {
            let n = rng.random_range(10..=120);
            let (x, y) = random_instance(&mut rng, n, 3, 2);
            let r = tune(family, &x, &y, TuneBudget { folds: 5, max_configs: 20, seed: trial }).unwrap();
            assert_eq!(r.folds.len(), 5);
            let mut seen = vec![0; n];
            for f in &r.folds {
                assert!(f.fit_rows.iter().all(|i| !f.eval_rows.contains(i)));
                assert_eq!(f.fit_rows.len() + f.eval_rows.len(), n);
                f.eval_rows.iter().for_each(|&i| seen[i] += 1);
            }
            // every row is validated exactly once
            assert!(seen.iter().all(|&c| c == 1));
            assert!(r.configs_evaluated >= 1 && r.configs_evaluated <= 20);
            assert!((0.0..=1.0).contains(&r.cv_score));
        }
    }
}

#[test]
fn tuned_score_is_reproduced_by_refitting_folds() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = random_instance(&mut rng, 80, 2, 2);
    let r = tune(Family::Tree, &x, &y, TuneBudget { folds: 4, max_configs: 30, seed: 1 }).unwrap();
    let mut total = 0.0;
    for f in &r.folds {
        let pick = |rows: &[usize]| {
            let v: Vec<f64> = rows.iter().flat_map(|&i| x.row(i).to_vec()).collect();
            (Matrix::from_vec(rows.len(), 2, v).unwrap(), rows.iter().map(|&i| y[i]).collect::<Vec<_>>())
        };
        let (fx, fy) = pick(&f.fit_rows);
        let (ex, ey) = pick(&f.eval_rows);
        let pred = r.params.fit_predict(&fx, &fy, &ex).unwrap();
        total += pred.iter().zip(&ey).filter(|(a, b)| a == b).count() as f64 / ey.len() as f64;
    }
    assert!((total / 4.0 - r.cv_score).abs() < 1e-12);
}
