//! Ranking, omnibus and pairwise tests, multiple-comparison correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi_square_survival, normal_survival};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Largest sample size for which the Wilcoxon p-value is computed exactly.
pub const DEFAULT_EXACT_LIMIT: usize = 12;
/// Smallest number of non-zero differences the Wilcoxon test accepts.
pub const WILCOXON_MIN_PAIRS: usize = 5;

/// Average ranks of `values`, rank 1 being the smallest.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Rank 1 goes to the best score; tied scores share their average rank.
pub fn rank_scores(scores: &[f64], higher_is_better: bool) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::Argument(format!(
            "ranking needs at least 2 methods, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Undefined("NaN score".into()));
    }
    if higher_is_better {
        let negated: Vec<f64> = scores.iter().map(|v| -v).collect();
        Ok(average_ranks(&negated))
    } else {
        Ok(average_ranks(scores))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Friedman test on an `n_blocks x k` matrix whose rows are rankings.
pub fn friedman_test(ranks: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = ranks.len();
    if n == 0 {
        return Err(Error::Undefined("no blocks".into()));
    }
    let k = ranks[0].len();
    if k < 3 {
        return Err(Error::NotApplicable(format!(
            "Friedman test needs at least 3 methods, got {k}; compare pairs with Wilcoxon"
        )));
    }
    if let Some(r) = ranks.iter().find(|r| r.len() != k) {
        return Err(Error::Dimension(format!("block with {} ranks, expected {k}", r.len())));
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = (0..k)
        .map(|j| {
            let mean = ranks.iter().map(|r| r[j]).sum::<f64>() / nf;
            mean * mean
        })
        .sum();
    let statistic = (12.0 * nf / (kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0)).max(0.0);
    Ok(FriedmanResult {
        statistic,
        df: k - 1,
        p_value: chi_square_survival(statistic, kf - 1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1.
    pub degenerate: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped; tied absolute differences share average
/// ranks. For at most `exact_limit` pairs the p-value counts all `2^n` sign
/// assignments, otherwise it uses the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], exact_limit: usize) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} paired values", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Undefined("NaN value".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    if n < WILCOXON_MIN_PAIRS {
        return Err(Error::Undefined(format!(
            "{n} non-zero differences; at least {WILCOXON_MIN_PAIRS} required"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, exact) = if n <= exact_limit {
        // Average ranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let obs_doubled = (2.0 * w_plus).round() as u64;
        let hits = exact_tail_count_doubled(&doubled, obs_doubled);
        (hits as f64 / 2f64.powi(n as i32), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_survival(z), false)
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic,
        n,
        p_value: p_value.min(1.0),
        exact,
        degenerate: false,
    })
}

/// Number of sign assignments whose positive-rank sum `s` satisfies
/// `|2s - total| >= |2w - total|`, counted by dynamic programming over the
/// rank multiset. Ranks and the observed sum `w` are doubled to stay integral.
fn exact_tail_count_doubled(doubled_ranks: &[u64], observed_doubled: u64) -> u128 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        for s in (r as usize..=total as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let obs_dev = (2 * observed_doubled).abs_diff(total);
    counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (2 * s as u64).abs_diff(total) >= obs_dev)
        .map(|(_, &c)| c)
        .sum()
}

/// Holm step-down adjustment; results are in the input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        let v = ((m - i) as f64 * p_values[idx]).min(1.0);
        running = running.max(v);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// Maximal sets of methods whose every internal pair has adjusted `p >= alpha`.
///
/// `p_adjusted` is a symmetric `k x k` matrix (diagonal ignored). Groups are
/// listed with members ordered by average rank, and groups ordered by their
/// best member's rank, then by size.
pub fn significance_groups(
    avg_ranks: &[f64],
    p_adjusted: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<Vec<usize>>> {
    let k = avg_ranks.len();
    if p_adjusted.len() != k || p_adjusted.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension(format!("p matrix is not {k}x{k}")));
    }
    for i in 0..k {
        for j in 0..i {
            if p_adjusted[i][j] != p_adjusted[j][i] {
                return Err(Error::Argument(format!("p matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let linked = |i: usize, j: usize| p_adjusted[i][j] >= alpha;
    let mut cliques = Vec::new();
    bron_kerbosch(
        &mut Vec::new(),
        (0..k).collect(),
        Vec::new(),
        &linked,
        &mut cliques,
    );
    let by_rank = |a: &usize, b: &usize| avg_ranks[*a].total_cmp(&avg_ranks[*b]).then(a.cmp(b));
    for c in &mut cliques {
        c.sort_by(by_rank);
    }
    cliques.sort_by(|a, b| {
        by_rank(&a[0], &b[0])
            .then(b.len().cmp(&a.len()))
            .then(a.cmp(b))
    });
    Ok(cliques)
}

fn bron_kerbosch(
    r: &mut Vec<usize>,
    p: Vec<usize>,
    mut x: Vec<usize>,
    linked: &impl Fn(usize, usize) -> bool,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(r.clone());
        }
        return;
    }
    let mut p = p;
    while let Some(v) = p.first().copied() {
        r.push(v);
        let np = p.iter().copied().filter(|&u| u != v && linked(u, v)).collect();
        let nx = x.iter().copied().filter(|&u| linked(u, v)).collect();
        bron_kerbosch(r, np, nx, linked, out);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(rank_scores(&[0.9, 0.8, 0.7], true).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_scores(&[0.9, 0.9, 0.7], true).unwrap(), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_scores(&[3.0, 1.0, 2.0], false).unwrap(), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn friedman_extremes() {
        let same = vec![vec![1.0, 2.0, 3.0]; 10];
        let r = friedman_test(&same).unwrap();
        assert!((r.statistic - 20.0).abs() < 1e-12);
        let tied = vec![vec![2.0, 2.0, 2.0]; 10];
        let r = friedman_test(&tied).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(matches!(
            friedman_test(&[vec![1.0, 2.0]]),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn wilcoxon_all_positive() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [1.0; 6];
        let r = wilcoxon_signed_rank(&a, &b, DEFAULT_EXACT_LIMIT).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.p_value, 0.03125);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_all_zero_is_degenerate() {
        let r = wilcoxon_signed_rank(&[1.0; 6], &[1.0; 6], 12).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn holm_hand_computed() {
        let adj = holm_adjust(&[0.01, 0.02, 0.04]).unwrap();
        let want = [0.03, 0.04, 0.04];
        for (a, w) in adj.iter().zip(want) {
            assert!((a - w).abs() < 1e-15);
        }
        assert_eq!(holm_adjust(&[0.3]).unwrap(), vec![0.3]);
    }

    #[test]
    fn groups_at_the_extremes() {
        let ranks = [1.0, 2.0, 3.0];
        let sig = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(
            significance_groups(&ranks, &sig, 0.05).unwrap(),
            vec![vec![0], vec![1], vec![2]]
        );
        let none = vec![vec![1.0; 3]; 3];
        assert_eq!(significance_groups(&ranks, &none, 0.05).unwrap(), vec![vec![0, 1, 2]]);
    }
}
