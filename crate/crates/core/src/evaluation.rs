//! Survivor functions, ROC curves and AUC.

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty population: {0}")]
    EmptyPopulation(&'static str),
    #[error("scores must be finite")]
    NonFinite,
}

/// Which population is expected to score higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Type2Higher,
    Type1Higher,
}

/// Step function `v -> fraction of values strictly greater than v`,
/// evaluated at each distinct value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorFunction {
    pub points: Vec<(f64, f64)>,
}

impl SurvivorFunction {
    /// Value at an arbitrary `v`.
    pub fn at(&self, v: f64) -> f64 {
        let i = self.points.partition_point(|&(x, _)| x <= v);
        match i {
            0 => 1.0,
            _ => self.points[i - 1].1,
        }
    }

    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,y")?;
        for &(x, y) in &self.points {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

fn sorted_finite(values: &[f64], what: &'static str) -> Result<Vec<f64>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyPopulation(what));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

pub fn survivor(values: &[f64]) -> Result<SurvivorFunction, EvalError> {
    let v = sorted_finite(values, "survivor input")?;
    let n = v.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        while i < v.len() && v[i] == x {
            i += 1;
        }
        points.push((x, (v.len() - i) as f64 / n));
    }
    Ok(SurvivorFunction { points })
}

/// Exact pair counts behind the AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Pairs where the expected-higher population wins.
    pub wins: u128,
    pub ties: u128,
    pub pairs: u128,
}

impl PairCounts {
    pub fn auc(&self) -> f64 {
        (2 * self.wins + self.ties) as f64 / (2 * self.pairs) as f64
    }
}

fn oriented(type1: &[f64], type2: &[f64], dir: Direction) -> (Vec<f64>, Vec<f64>) {
    // (negatives, positives): positives are the population expected higher.
    match dir {
        Direction::Type2Higher => (type1.to_vec(), type2.to_vec()),
        Direction::Type1Higher => (type2.to_vec(), type1.to_vec()),
    }
}

pub fn pair_counts(type1: &[f64], type2: &[f64], dir: Direction) -> Result<PairCounts, EvalError> {
    let (neg, pos) = oriented(type1, type2, dir);
    let neg = sorted_finite(&neg, "type-1 scores")?;
    let pos = sorted_finite(&pos, "type-2 scores")?;
    let (mut wins, mut ties) = (0u128, 0u128);
    let (mut lo, mut hi) = (0usize, 0usize);
    for &p in &pos {
        // neg[..lo] < p, neg[lo..hi] == p
        while lo < neg.len() && neg[lo] < p {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < neg.len() && neg[hi] == p {
            hi += 1;
        }
        wins += lo as u128;
        ties += (hi - lo) as u128;
    }
    Ok(PairCounts { wins, ties, pairs: neg.len() as u128 * pos.len() as u128 })
}

/// Mann-Whitney AUC with ties counted one half.
pub fn auc(type1: &[f64], type2: &[f64], dir: Direction) -> Result<f64, EvalError> {
    pair_counts(type1, type2, dir).map(|c| c.auc())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false_positive, true_positive)`, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoidal area.
    pub fn area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }

    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,y")?;
        for &(x, y) in &self.points {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

/// Sweeps the threshold downward over every distinct score; a user is
/// called positive when its score is at or above the threshold.
pub fn roc(type1: &[f64], type2: &[f64], dir: Direction) -> Result<RocCurve, EvalError> {
    let (neg, pos) = oriented(type1, type2, dir);
    let neg = sorted_finite(&neg, "type-1 scores")?;
    let pos = sorted_finite(&pos, "type-2 scores")?;
    let (nn, np) = (neg.len(), pos.len());
    let (mut i, mut j) = (nn, np);
    let mut points = vec![(0.0, 0.0)];
    while i > 0 || j > 0 {
        let t = match (i, j) {
            (0, _) => pos[j - 1],
            (_, 0) => neg[i - 1],
            _ => match neg[i - 1].total_cmp(&pos[j - 1]) {
                Ordering::Greater => neg[i - 1],
                _ => pos[j - 1],
            },
        };
        while i > 0 && neg[i - 1] == t {
            i -= 1;
        }
        while j > 0 && pos[j - 1] == t {
            j -= 1;
        }
        points.push(((nn - i) as f64 / nn as f64, (np - j) as f64 / np as f64));
    }
    Ok(RocCurve { points })
}

/// Alternative to pooling: the AUC of every (type-1 user, type-2 user)
/// pair of follower score lists, averaged. Users with no scores are skipped.
pub fn mean_pairwise_auc(type1: &[Vec<f64>], type2: &[Vec<f64>], dir: Direction) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for a in type1.iter().filter(|v| !v.is_empty()) {
        for b in type2.iter().filter(|v| !v.is_empty()) {
            total += auc(a, b, dir)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyPopulation("per-user score lists"));
    }
    Ok(total / n as f64)
}

/// One cell of an AUC table keyed by (language, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucCell {
    pub language: String,
    pub metric: String,
    pub auc: Option<f64>,
}

pub fn write_auc_table<W: Write + ?Sized>(cells: &[AucCell], w: &mut W) -> io::Result<()> {
    writeln!(w, "language,metric,auc")?;
    for c in cells {
        match c.auc {
            Some(a) => writeln!(w, "{},{},{a}", c.language, c.metric)?,
            None => writeln!(w, "{},{},n/a", c.language, c.metric)?,
        }
    }
    Ok(())
}
