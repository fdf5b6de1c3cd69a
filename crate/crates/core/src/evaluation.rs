//! Anytime comparison of optimizers from stored run records: pairwise win
//! rates over (instance, seed, checkpoint) settings, global scores, rank
//! labels and normalized loss curves.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::record::RunRecord;

/// Budget fractions used when none are given.
pub const DEFAULT_CHECKPOINTS: [f64; 5] = [0.05, 0.1, 0.25, 0.5, 1.0];

/// Rows shown in the rendered heatmap.
pub const HEATMAP_ROWS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// Algorithm ids in ascending id order; all other fields index into it.
    pub algorithms: Vec<String>,
    /// `wins[a][b]`: fraction of settings where `a` beats `b`, ties count half.
    pub wins: Vec<Vec<f64>>,
    pub global_score: Vec<f64>,
    /// Standard error of the per-setting score.
    pub stderr: Vec<f64>,
    /// Indices into `algorithms`, best first.
    pub rank: Vec<usize>,
    pub settings: usize,
}

impl ScoreMatrix {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.algorithms.iter().position(|a| a == id)
    }

    /// 1-based rank of `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        let i = self.index_of(id)?;
        self.rank.iter().position(|&r| r == i).map(|p| p + 1)
    }

    pub fn win(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.wins[self.index_of(a)?][self.index_of(b)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub algorithm: String,
    /// `(budget fraction, mean normalized loss)`, ascending in budget.
    pub points: Vec<(f64, f64)>,
    pub final_loss_label: f64,
    pub second_final_loss_label: f64,
}

/// Losses of every algorithm at every setting: `[setting][algorithm]`.
struct Table {
    algorithms: Vec<String>,
    checkpoints: Vec<f64>,
    /// Checkpoint index of each setting.
    checkpoint_of: Vec<usize>,
    losses: Vec<Vec<f64>>,
}

fn checked_checkpoints(checkpoints: &[f64]) -> Result<Vec<f64>> {
    if checkpoints.is_empty() {
        return Err(Error::config("checkpoints", "at least one checkpoint is required"));
    }
    if let Some(c) = checkpoints.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
        return Err(Error::config("checkpoints", format!("{c} is not in (0, 1]")));
    }
    let mut sorted = checkpoints.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

/// Evaluations reached at `fraction` of `budget`, at least one.
pub fn checkpoint_evaluations(budget: u64, fraction: f64) -> u64 {
    ((budget as f64 * fraction).ceil() as u64).clamp(1, budget.max(1))
}

fn tabulate(records: &[RunRecord], checkpoints: &[f64]) -> Result<Table> {
    let checkpoints = checked_checkpoints(checkpoints)?;
    if records.is_empty() {
        return Err(Error::MissingRecords("no records to compare".into()));
    }
    let mut by_setting: BTreeMap<(String, u64), BTreeMap<&str, &RunRecord>> = BTreeMap::new();
    let mut algorithms = BTreeSet::new();
    for r in records {
        algorithms.insert(r.algorithm.as_str());
        let slot = by_setting.entry((r.instance.key(), r.seed)).or_default();
        if slot.insert(r.algorithm.as_str(), r).is_some() {
            return Err(Error::Parse(format!(
                "duplicate record for {} on instance {} seed {}",
                r.algorithm,
                r.instance.key(),
                r.seed
            )));
        }
    }
    let mut gaps = Vec::new();
    for ((key, seed), runs) in &by_setting {
        for a in &algorithms {
            if !runs.contains_key(a) {
                gaps.push(format!("{a} on instance {key} seed {seed}"));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingRecords(gaps.join("; ")));
    }

    let mut checkpoint_of = Vec::new();
    let mut losses = Vec::new();
    for runs in by_setting.values() {
        for (ci, &c) in checkpoints.iter().enumerate() {
            checkpoint_of.push(ci);
            losses.push(
                algorithms
                    .iter()
                    .map(|a| {
                        let r = runs[a];
                        r.loss_at(checkpoint_evaluations(r.instance.budget, c))
                    })
                    .collect(),
            );
        }
    }
    Ok(Table {
        algorithms: algorithms.into_iter().map(String::from).collect(),
        checkpoints,
        checkpoint_of,
        losses,
    })
}

fn beats(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Pairwise win rates over all (instance, seed, checkpoint) settings.
/// Checkpoints are fractions of each instance's budget; a checkpoint reached
/// before the first recorded evaluation counts as an infinite loss.
pub fn score_matrix(records: &[RunRecord], checkpoints: &[f64]) -> Result<ScoreMatrix> {
    let table = tabulate(records, checkpoints)?;
    let k = table.algorithms.len();
    let n = table.losses.len();
    let mut wins = vec![vec![0.0; k]; k];
    let mut per_setting = vec![Vec::with_capacity(n); k];
    for row in &table.losses {
        for a in 0..k {
            let mut s = 0.0;
            for b in 0..k {
                if a != b {
                    let w = beats(row[a], row[b]);
                    wins[a][b] += w;
                    s += w;
                }
            }
            per_setting[a].push(if k == 1 { 0.5 } else { s / (k - 1) as f64 });
        }
    }
    for (a, row) in wins.iter_mut().enumerate() {
        for (b, w) in row.iter_mut().enumerate() {
            *w = if a == b { 0.5 } else { *w / n as f64 };
        }
    }
    let global_score: Vec<f64> = per_setting
        .iter()
        .map(|s| s.iter().sum::<f64>() / n as f64)
        .collect();
    let stderr = per_setting
        .iter()
        .zip(&global_score)
        .map(|(s, &m)| {
            if n < 2 {
                return 0.0;
            }
            let var = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        })
        .collect();
    let mut rank: Vec<usize> = (0..k).collect();
    rank.sort_by(|&a, &b| global_score[b].total_cmp(&global_score[a]).then(a.cmp(&b)));
    Ok(ScoreMatrix {
        algorithms: table.algorithms,
        wins,
        global_score,
        stderr,
        rank,
        settings: n,
    })
}

/// Mean normalized loss per checkpoint. Within each setting losses are mapped
/// linearly onto [0, 1] across algorithms (all equal maps to 0). An infinite
/// loss is first replaced by the worst finite loss of its setting.
pub fn convergence_curves(records: &[RunRecord], checkpoints: &[f64]) -> Result<Vec<ConvergenceCurve>> {
    let table = tabulate(records, checkpoints)?;
    let k = table.algorithms.len();
    let m = table.checkpoints.len();
    let mut sums = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; m];
    for (row, &ci) in table.losses.iter().zip(&table.checkpoint_of) {
        let worst_finite = row
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let row: Vec<f64> = row
            .iter()
            .map(|&v| if v.is_finite() { v } else { worst_finite })
            .collect();
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        counts[ci] += 1;
        for a in 0..k {
            if hi > lo {
                sums[a][ci] += ((row[a] - lo) / (hi - lo)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(table
        .algorithms
        .into_iter()
        .enumerate()
        .map(|(a, algorithm)| {
            let points: Vec<(f64, f64)> = (0..m)
                .map(|ci| (table.checkpoints[ci], sums[a][ci] / counts[ci] as f64))
                .collect();
            let final_loss_label = points[m - 1].1;
            let second_final_loss_label = points[m.saturating_sub(2)].1;
            ConvergenceCurve {
                algorithm,
                points,
                final_loss_label,
                second_final_loss_label,
            }
        })
        .collect())
}

/// `rank/total:score% +- stderr`, both in percent with one decimal.
pub fn format_rank_label(matrix: &ScoreMatrix, id: &str) -> Option<String> {
    let i = matrix.index_of(id)?;
    Some(format!(
        "{}/{}:{:.1}% +- {:.1}",
        matrix.rank_of(id)?,
        matrix.algorithms.len(),
        100.0 * matrix.global_score[i],
        100.0 * matrix.stderr[i]
    ))
}

/// Plain-text heatmap: the top rows by rank against every column, in rank order.
pub fn render_heatmap(matrix: &ScoreMatrix) -> String {
    let width = matrix.algorithms.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = format!("{:width$}", "");
    for &c in &matrix.rank {
        write!(out, "  {:>width$}", matrix.algorithms[c]).unwrap();
    }
    out.push('\n');
    for &r in matrix.rank.iter().take(HEATMAP_ROWS) {
        write!(out, "{:width$}", matrix.algorithms[r]).unwrap();
        for &c in &matrix.rank {
            write!(out, "  {:>width$.3}", matrix.wins[r][c]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Tab-separated full matrix in rank order, one row per algorithm.
pub fn matrix_tsv(matrix: &ScoreMatrix) -> String {
    let mut out = String::from("algorithm\trank\tscore\tstderr");
    for &c in &matrix.rank {
        write!(out, "\t{}", matrix.algorithms[c]).unwrap();
    }
    out.push('\n');
    for (pos, &r) in matrix.rank.iter().enumerate() {
        write!(
            out,
            "{}\t{}\t{:.6}\t{:.6}",
            matrix.algorithms[r],
            pos + 1,
            matrix.global_score[r],
            matrix.stderr[r]
        )
        .unwrap();
        for &c in &matrix.rank {
            write!(out, "\t{:.6}", matrix.wins[r][c]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Tab-separated curves: one row per algorithm, one column per checkpoint.
pub fn curves_tsv(curves: &[ConvergenceCurve]) -> String {
    let mut out = String::from("algorithm");
    if let Some(first) = curves.first() {
        for (c, _) in &first.points {
            write!(out, "\t{c}").unwrap();
        }
    }
    out.push_str("\tfinal\tsecond\n");
    for curve in curves {
        out.push_str(&curve.algorithm);
        for (_, v) in &curve.points {
            write!(out, "\t{v:.6}").unwrap();
        }
        writeln!(out, "\t{:.6}\t{:.6}", curve.final_loss_label, curve.second_final_loss_label).unwrap();
    }
    out
}

/// One `algorithm<TAB>label` line per algorithm, in rank order.
pub fn labels_tsv(matrix: &ScoreMatrix) -> String {
    let mut out = String::from("algorithm\tlabel\n");
    for &r in &matrix.rank {
        let id = &matrix.algorithms[r];
        writeln!(out, "{id}\t{}", format_rank_label(matrix, id).expect("ranked id")).unwrap();
    }
    out
}
