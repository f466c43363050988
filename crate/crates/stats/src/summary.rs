//! Rank-based comparison of several methods over paired blocks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::{
    friedman_test, holm_adjust, rank_scores, significance_groups, wilcoxon_signed_rank,
    FriedmanResult, WilcoxonResult,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub test: Option<WilcoxonResult>,
    pub p_raw: f64,
    pub p_holm: f64,
    /// Why `test` is missing, if it is.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub metric: String,
    pub higher_is_better: bool,
    pub alpha: f64,
    pub methods: Vec<String>,
    pub n_blocks: usize,
    pub avg_ranks: Vec<f64>,
    pub friedman: Option<FriedmanResult>,
    pub friedman_note: Option<String>,
    pub pairwise: Vec<PairwiseTest>,
    /// Holm-adjusted p-values, `methods.len()` square, 1 on the diagonal.
    pub p_adjusted: Vec<Vec<f64>>,
    pub groups: Vec<Vec<String>>,
}

/// Ranks methods within each block, runs the Friedman test, pairwise Wilcoxon
/// tests with Holm correction and groups statistically indistinguishable
/// methods.
///
/// `blocks[b][m]` is method `m`'s score on block `b`. When the Friedman test
/// applies and does not reject at `alpha`, all methods form one group. A pair
/// with too few non-zero differences for the Wilcoxon test gets `p = 1`.
pub fn summarize_ranks(
    metric: &str,
    methods: &[String],
    blocks: &[Vec<f64>],
    higher_is_better: bool,
    alpha: f64,
    exact_limit: usize,
) -> Result<RankSummary> {
    let k = methods.len();
    if k < 2 {
        return Err(Error::Argument(format!("{k} methods; at least 2 needed")));
    }
    if blocks.is_empty() {
        return Err(Error::Undefined("no blocks".into()));
    }
    if let Some(b) = blocks.iter().find(|b| b.len() != k) {
        return Err(Error::Dimension(format!("block with {} scores for {k} methods", b.len())));
    }
    let ranks: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| rank_scores(b, higher_is_better))
        .collect::<Result<_>>()?;
    let n = ranks.len() as f64;
    let avg_ranks: Vec<f64> = (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let (friedman, friedman_note) = match friedman_test(&ranks) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let a: Vec<f64> = blocks.iter().map(|b| b[i]).collect();
            let b: Vec<f64> = blocks.iter().map(|b| b[j]).collect();
            let (test, p, note) = match wilcoxon_signed_rank(&a, &b, exact_limit) {
                Ok(w) => (Some(w), w.p_value, None),
                Err(e) => (None, 1.0, Some(e.to_string())),
            };
            raw.push(p);
            pairs.push((i, j, test, note));
        }
    }
    let adjusted = holm_adjust(&raw)?;
    let mut p_adjusted = vec![vec![1.0; k]; k];
    let pairwise = pairs
        .into_iter()
        .zip(raw.iter().zip(&adjusted))
        .map(|((i, j, test, note), (&p_raw, &p_holm))| {
            p_adjusted[i][j] = p_holm;
            p_adjusted[j][i] = p_holm;
            PairwiseTest {
                a: methods[i].clone(),
                b: methods[j].clone(),
                test,
                p_raw,
                p_holm,
                note,
            }
        })
        .collect();

    let omnibus_accepts = friedman.is_some_and(|f| f.p_value >= alpha);
    let index_groups = if omnibus_accepts {
        let mut all: Vec<usize> = (0..k).collect();
        all.sort_by(|&a, &b| avg_ranks[a].total_cmp(&avg_ranks[b]).then(a.cmp(&b)));
        vec![all]
    } else {
        significance_groups(&avg_ranks, &p_adjusted, alpha)?
    };
    let groups = index_groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| methods[i].clone()).collect())
        .collect();
    Ok(RankSummary {
        metric: metric.to_string(),
        higher_is_better,
        alpha,
        methods: methods.to_vec(),
        n_blocks: blocks.len(),
        avg_ranks,
        friedman,
        friedman_note,
        pairwise,
        p_adjusted,
        groups,
    })
}

impl RankSummary {
    /// Plain-text rendering: average ranks, Friedman result, adjusted
    /// p-value matrix and groups.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "metric: {} ({} blocks)", self.metric, self.n_blocks);
        let mut order: Vec<usize> = (0..self.methods.len()).collect();
        order.sort_by(|&a, &b| self.avg_ranks[a].total_cmp(&self.avg_ranks[b]));
        let _ = writeln!(s, "{:<width$}  avg_rank", "method");
        for &i in &order {
            let _ = writeln!(s, "{:<width$}  {:.3}", self.methods[i], self.avg_ranks[i]);
        }
        match (&self.friedman, &self.friedman_note) {
            (Some(f), _) => {
                let _ = writeln!(
                    s,
                    "friedman: chi2 = {:.4}, df = {}, p = {:.4e}",
                    f.statistic, f.df, f.p_value
                );
            }
            (None, Some(note)) => {
                let _ = writeln!(s, "friedman: {note}");
            }
            (None, None) => {}
        }
        let _ = writeln!(s, "holm-adjusted wilcoxon p-values:");
        let _ = write!(s, "{:<width$}", "");
        for m in &self.methods {
            let _ = write!(s, "  {m:>width$}");
        }
        s.push('\n');
        for (i, m) in self.methods.iter().enumerate() {
            let _ = write!(s, "{m:<width$}");
            for j in 0..self.methods.len() {
                if i == j {
                    let _ = write!(s, "  {:>width$}", "-");
                } else {
                    let _ = write!(s, "  {:>width$.4}", self.p_adjusted[i][j]);
                }
            }
            s.push('\n');
        }
        let _ = writeln!(s, "groups (alpha = {}):", self.alpha);
        for g in &self.groups {
            let _ = writeln!(s, "  [{}]", g.join(", "));
        }
        s
    }
}
