//! Summaries over a set of benchmark records: rank statistics, relative data
//! efficiency, performance/time Pareto ranks and learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pfn_stats::{auc_trapezoid, data_efficiency, pareto_rank, summarize_ranks, RankSummary};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::FRACTION_PERCENTS;
use crate::runner::{BenchmarkRecord, RecordStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1,
    MacroF1,
    Accuracy,
    TotalSeconds,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::MacroF1 => "macro_f1",
            Metric::Accuracy => "accuracy",
            Metric::TotalSeconds => "total_seconds",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self != Metric::TotalSeconds
    }

    pub fn value(self, r: &BenchmarkRecord) -> Option<f64> {
        match self {
            Metric::F1 => r.f1,
            Metric::MacroF1 => r.macro_f1,
            Metric::Accuracy => r.accuracy,
            Metric::TotalSeconds => (r.status == RecordStatus::Ok).then_some(r.total_seconds),
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        [Metric::F1, Metric::MacroF1, Metric::Accuracy, Metric::TotalSeconds]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

type Block<'a> = BTreeMap<String, BTreeMap<u32, &'a BenchmarkRecord>>;

/// Successful records grouped by (dataset, split), then method, then percent.
fn blocks(records: &[BenchmarkRecord]) -> BTreeMap<(String, usize), Block<'_>> {
    let mut out: BTreeMap<(String, usize), Block> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RecordStatus::Ok) {
        out.entry((r.dataset.clone(), r.split))
            .or_default()
            .entry(r.method.clone())
            .or_default()
            .insert(r.percent(), r);
    }
    out
}

pub fn method_names(records: &[BenchmarkRecord]) -> Vec<String> {
    let mut m: Vec<String> = records.iter().map(|r| r.method.clone()).collect();
    m.sort();
    m.dedup();
    m
}

/// Full-data scores per (dataset, split) block; blocks missing any method are
/// dropped and listed in the returned notes.
pub fn full_data_blocks(records: &[BenchmarkRecord], metric: Metric) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
    let methods = method_names(records);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for ((ds, split), block) in blocks(records) {
        let row: Option<Vec<f64>> = methods
            .iter()
            .map(|m| block.get(m).and_then(|c| c.get(&100)).and_then(|r| metric.value(r)))
            .collect();
        match row {
            Some(v) => rows.push(v),
            None => notes.push(format!("{ds} split {split}: incomplete full-data scores, block dropped")),
        }
    }
    (methods, rows, notes)
}

/// Rank statistics with (dataset, split) blocks on full-data scores.
pub fn rank_summary(records: &[BenchmarkRecord], metric: Metric, alpha: f64, exact_limit: usize) -> Result<(RankSummary, Vec<String>)> {
    let (methods, rows, notes) = full_data_blocks(records, metric);
    let s = summarize_ranks(metric.name(), &methods, &rows, metric.higher_is_better(), alpha, exact_limit)?;
    Ok((s, notes))
}

fn complete_curves<'a>(block: &Block<'a>, methods: &[String]) -> Option<Vec<Vec<&'a BenchmarkRecord>>> {
    methods
        .iter()
        .map(|m| {
            let c = block.get(m)?;
            FRACTION_PERCENTS.iter().map(|p| c.get(p).copied()).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub dataset: String,
    pub method: String,
    /// Mean over splits of the per-split efficiency, including zeros.
    pub mean_eta: f64,
    pub n_splits: usize,
}

/// Relative data efficiency of F1 learning curves, computed per split and
/// averaged per (dataset, method). Repeated prefix sizes (tiny datasets) keep
/// their first score.
pub fn efficiency_table(records: &[BenchmarkRecord], threshold: f64) -> Result<(Vec<EfficiencyRow>, Vec<String>)> {
    let methods = method_names(records);
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut notes = Vec::new();
    for ((ds, split), block) in blocks(records) {
        let Some(curves) = complete_curves(&block, &methods) else {
            notes.push(format!("{ds} split {split}: incomplete learning curves, skipped"));
            continue;
        };
        let counts_all: Vec<usize> = curves[0].iter().map(|r| r.n_train).collect();
        let mut keep = Vec::new();
        for (i, &c) in counts_all.iter().enumerate() {
            if keep.last().is_none_or(|&j: &usize| counts_all[j] < c) {
                keep.push(i);
            }
        }
        let counts: Vec<usize> = keep.iter().map(|&i| counts_all[i]).collect();
        let scores: Vec<Vec<f64>> = curves
            .iter()
            .map(|c| keep.iter().map(|&i| c[i].f1.unwrap_or(0.0)).collect())
            .collect();
        let n_max = *counts_all.last().expect("11 fractions");
        let eff = data_efficiency(&scores, &counts, n_max, threshold)?;
        for (m, e) in methods.iter().zip(eff) {
            acc.entry((ds.clone(), m.clone())).or_default().push(e.eta);
        }
    }
    let rows = acc
        .into_iter()
        .map(|((dataset, method), v)| EfficiencyRow {
            dataset,
            method,
            mean_eta: v.iter().sum::<f64>() / v.len() as f64,
            n_splits: v.len(),
        })
        .collect();
    Ok((rows, notes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub dataset: String,
    pub method: String,
    pub mean_pareto_rank: f64,
    pub mean_f1_auc: f64,
    pub mean_time_auc: f64,
    pub n_splits: usize,
}

/// Per split: AUC of F1 (maximized) and of total time (minimized) over the
/// fraction grid, then Pareto ranks across methods; averaged per
/// (dataset, method). With `log_time` the time curve is `log10` seconds.
pub fn pareto_table(records: &[BenchmarkRecord], log_time: bool) -> Result<(Vec<ParetoRow>, Vec<String>)> {
    let methods = method_names(records);
    let grid: Vec<f64> = FRACTION_PERCENTS.iter().map(|&p| p as f64 / 100.0).collect();
    let mut acc: BTreeMap<(String, String), Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut notes = Vec::new();
    for ((ds, split), block) in blocks(records) {
        let Some(curves) = complete_curves(&block, &methods) else {
            notes.push(format!("{ds} split {split}: incomplete curves, skipped"));
            continue;
        };
        let mut points = Vec::with_capacity(methods.len());
        for c in &curves {
            let f1: Vec<f64> = c.iter().map(|r| r.f1.unwrap_or(0.0)).collect();
            let t: Vec<f64> = c
                .iter()
                .map(|r| if log_time { r.total_seconds.max(1e-9).log10() } else { r.total_seconds })
                .collect();
            points.push((auc_trapezoid(&grid, &f1)?, auc_trapezoid(&grid, &t)?));
        }
        let ranks = pareto_rank(&points)?;
        for ((m, p), r) in methods.iter().zip(&points).zip(ranks) {
            acc.entry((ds.clone(), m.clone())).or_default().push((r as f64, p.0, p.1));
        }
    }
    let rows = acc
        .into_iter()
        .map(|((dataset, method), v)| {
            let n = v.len() as f64;
            ParetoRow {
                dataset,
                method,
                mean_pareto_rank: v.iter().map(|t| t.0).sum::<f64>() / n,
                mean_f1_auc: v.iter().map(|t| t.1).sum::<f64>() / n,
                mean_time_auc: v.iter().map(|t| t.2).sum::<f64>() / n,
                n_splits: v.len(),
            }
        })
        .collect();
    Ok((rows, notes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub dataset: String,
    pub method: String,
    pub fraction: f64,
    pub n_splits: usize,
    pub mean_f1: f64,
    pub se_f1: f64,
    pub mean_total_seconds: f64,
}

/// Mean F1 and time per (dataset, method, fraction) over successful records.
pub fn learning_curves(records: &[BenchmarkRecord]) -> Vec<CurvePoint> {
    let mut acc: BTreeMap<(String, String, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RecordStatus::Ok) {
        if let Some(f) = r.f1 {
            acc.entry((r.dataset.clone(), r.method.clone(), r.percent()))
                .or_default()
                .push((f, r.total_seconds));
        }
    }
    acc.into_iter()
        .map(|((dataset, method, p), v)| {
            let n = v.len() as f64;
            let mean = v.iter().map(|t| t.0).sum::<f64>() / n;
            let se = if v.len() > 1 {
                (v.iter().map(|t| (t.0 - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                dataset,
                method,
                fraction: p as f64 / 100.0,
                n_splits: v.len(),
                mean_f1: mean,
                se_f1: se,
                mean_total_seconds: v.iter().map(|t| t.1).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Everything the `report` and `bench` commands write besides the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub n_records: usize,
    pub n_failed: usize,
    pub n_skipped: usize,
    pub f1_ranks: Option<RankSummary>,
    pub efficiency_threshold: f64,
    pub efficiency: Vec<EfficiencyRow>,
    pub log_time: bool,
    pub pareto: Vec<ParetoRow>,
    pub notes: Vec<String>,
}

pub fn analyze(records: &[BenchmarkRecord], alpha: f64, threshold: f64, log_time: bool) -> Result<Analysis> {
    if records.is_empty() {
        return Err(Error::Config("no records to analyze".into()));
    }
    let mut notes = Vec::new();
    let f1_ranks = match rank_summary(records, Metric::F1, alpha, pfn_stats::DEFAULT_EXACT_LIMIT) {
        Ok((s, n)) => {
            notes.extend(n);
            Some(s)
        }
        Err(e) => {
            notes.push(format!("rank statistics unavailable: {e}"));
            None
        }
    };
    let (efficiency, n) = efficiency_table(records, threshold)?;
    notes.extend(n);
    let (pareto, n) = pareto_table(records, log_time)?;
    notes.extend(n);
    Ok(Analysis {
        n_records: records.len(),
        n_failed: records.iter().filter(|r| r.status == RecordStatus::Failed).count(),
        n_skipped: records.iter().filter(|r| r.status == RecordStatus::Skipped).count(),
        f1_ranks,
        efficiency_threshold: threshold,
        efficiency,
        log_time,
        pareto,
        notes,
    })
}

impl Analysis {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} records ({} failed, {} skipped)\n",
            self.n_records, self.n_failed, self.n_skipped
        );
        if let Some(r) = &self.f1_ranks {
            s.push_str(&r.to_table());
            s.push('\n');
        }
        let _ = writeln!(s, "Relative data efficiency (threshold {}):", self.efficiency_threshold);
        let _ = writeln!(s, "{:<16} {:<8} {:>8} {:>7}", "dataset", "method", "eta", "splits");
        for r in &self.efficiency {
            let _ = writeln!(s, "{:<16} {:<8} {:>7.1}% {:>7}", r.dataset, r.method, 100.0 * r.mean_eta, r.n_splits);
        }
        let _ = writeln!(
            s,
            "\nPareto ranks (F1 AUC up, {} time AUC down):",
            if self.log_time { "log10" } else { "linear" }
        );
        let _ = writeln!(s, "{:<16} {:<8} {:>6} {:>8} {:>12}", "dataset", "method", "rank", "f1_auc", "time_auc");
        for r in &self.pareto {
            let _ = writeln!(
                s,
                "{:<16} {:<8} {:>6.2} {:>8.4} {:>12.6}",
                r.dataset, r.method, r.mean_pareto_rank, r.mean_f1_auc, r.mean_time_auc
            );
        }
        if !self.notes.is_empty() {
            s.push_str("\nNotes:\n");
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        s
    }
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows_csv<T: Serialize>(rows: &[T], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
