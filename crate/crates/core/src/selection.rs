//! Variance-threshold selection over the two per-question blocks, min-max
//! scaling, and the threshold sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, Prep};
use crate::features::{FeatureGroup, FeatureMatrix};
use crate::ingest::Grade;
use crate::matrix::Matrix;
use crate::models::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Thresholds {
    /// Applied to per-question performance columns.
    pub t_perf: f64,
    /// Applied to submissions-per-question columns.
    pub t_subs: f64,
}

impl Thresholds {
    pub const fn new(t_perf: f64, t_subs: f64) -> Self {
        Thresholds { t_perf, t_subs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_perf >= 0.0 && self.t_subs >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("negative variance threshold ({}, {})", self.t_perf, self.t_subs)))
        }
    }

    fn for_group(&self, group: FeatureGroup) -> Option<f64> {
        match group {
            FeatureGroup::PerQuestionPerformance => Some(self.t_perf),
            FeatureGroup::SubmissionsPerQuestion => Some(self.t_subs),
            _ => None,
        }
    }
}

impl std::str::FromStr for Thresholds {
    type Err = String;

    /// Parses `"0.02,0.05"`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `t_perf,t_subs`, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        let t = Thresholds::new(parse(a)?, parse(b)?);
        t.validate().map_err(|e| e.to_string())?;
        Ok(t)
    }
}

/// The four (performance, submissions) combinations the sweep evaluates,
/// in ascending lexicographic order.
pub const SWEEP_GRID: [Thresholds; 4] = [
    Thresholds::new(0.00, 0.00),
    Thresholds::new(0.02, 0.05),
    Thresholds::new(0.03, 0.07),
    Thresholds::new(0.04, 0.10),
];

/// Population variance of column `col`.
pub fn column_variance(m: &Matrix, col: usize) -> f64 {
    let n = m.rows() as f64;
    let mean = (0..m.rows()).map(|i| m.get(i, col)).sum::<f64>() / n;
    (0..m.rows()).map(|i| (m.get(i, col) - mean).powi(2)).sum::<f64>() / n
}

/// Population variance of every column, restricted to `rows`.
pub(crate) fn column_variances(m: &Matrix, rows: &[usize]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; m.cols()];
    for &i in rows {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m.cols()];
    for &i in rows {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    var
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    pub kept: Vec<bool>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub t_perf: f64,
    pub t_subs: f64,
    pub kept: Vec<String>,
}

impl SelectionMask {
    pub fn kept_indices(&self) -> Vec<usize> {
        self.kept.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| j).collect()
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_in_group(&self, fm: &FeatureMatrix, group: FeatureGroup) -> usize {
        fm.group_columns(group).filter(|&j| self.kept[j]).count()
    }

    /// Contents of `mask.json`.
    pub fn to_file(&self, fm: &FeatureMatrix) -> MaskFile {
        MaskFile {
            t_perf: self.thresholds.t_perf,
            t_subs: self.thresholds.t_subs,
            kept: self.kept_indices().into_iter().map(|j| fm.columns[j].name.clone()).collect(),
        }
    }
}

fn mask_from_variances(fm: &FeatureMatrix, variances: &[f64], thresholds: Thresholds) -> SelectionMask {
    let kept = fm
        .columns
        .iter()
        .zip(variances)
        .map(|(c, &v)| thresholds.for_group(c.group).is_none_or(|t| v > t))
        .collect();
    SelectionMask { kept, thresholds }
}

/// Keeps a question-block column iff its variance is strictly above the
/// block's threshold; every other column is kept.
pub fn apply_variance_threshold(fm: &FeatureMatrix, thresholds: Thresholds) -> Result<SelectionMask> {
    thresholds.validate()?;
    let rows: Vec<usize> = (0..fm.n_rows()).collect();
    Ok(mask_from_variances(fm, &column_variances(&fm.values, &rows), thresholds))
}

/// Drops unselected columns and rescales each kept column to [0, 1].
/// Constant columns map to 0.
pub fn minmax_normalize(fm: &FeatureMatrix, mask: &SelectionMask) -> FeatureMatrix {
    let rows: Vec<usize> = (0..fm.n_rows()).collect();
    let prep = Preprocessor::from_mask(fm, mask, &rows, true);
    FeatureMatrix {
        row_ids: fm.row_ids.clone(),
        columns: prep.kept.iter().map(|&j| fm.columns[j].clone()).collect(),
        values: prep.transform(&fm.values),
    }
}

/// Column selection plus optional min-max scaling, fitted on a subset of
/// rows and then applied to any row.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    kept: Vec<usize>,
    /// (min, max − min) per kept column.
    scale: Option<Vec<(f64, f64)>>,
}

impl Preprocessor {
    pub fn fit(fm: &FeatureMatrix, rows: &[usize], thresholds: Thresholds, normalize: bool) -> Result<Self> {
        thresholds.validate()?;
        let variances = column_variances(&fm.values, rows);
        let mask = mask_from_variances(fm, &variances, thresholds);
        Ok(Self::from_mask(fm, &mask, rows, normalize))
    }

    fn from_mask(fm: &FeatureMatrix, mask: &SelectionMask, rows: &[usize], normalize: bool) -> Self {
        let kept = mask.kept_indices();
        let scale = normalize.then(|| {
            kept.iter()
                .map(|&j| {
                    let (lo, hi) = rows.iter().map(|&i| fm.values.get(i, j)).fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), v| (lo.min(v), hi.max(v)),
                    );
                    (lo, hi - lo)
                })
                .collect()
        });
        Preprocessor { kept, scale }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn n_outputs(&self) -> usize {
        self.kept.len()
    }

    /// Rows outside the fitted range are not clipped.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        match &self.scale {
            None => self.kept.iter().map(|&j| row[j]).collect(),
            Some(scale) => self
                .kept
                .iter()
                .zip(scale)
                .map(|(&j, &(lo, range))| if range > 0.0 { (row[j] - lo) / range } else { 0.0 })
                .collect(),
        }
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = m.iter_rows().map(|r| self.transform_row(r)).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.kept.len());
        }
        Matrix::from_rows(&rows)
    }

    pub fn transform_rows(&self, m: &Matrix, rows: &[usize]) -> Matrix {
        let data: Vec<f64> = rows.iter().flat_map(|&i| self.transform_row(m.row(i))).collect();
        Matrix::from_vec(rows.len(), self.kept.len(), data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweepResult {
    /// One entry per [`SWEEP_GRID`] combination, in grid order.
    pub accuracies: Vec<(Thresholds, f64)>,
    pub winner: Thresholds,
}

/// Runs leave-one-out evaluation once per grid combination and picks the
/// most accurate; ties go to the earliest (smallest) combination.
pub fn threshold_sweep(
    fm: &FeatureMatrix,
    labels: &[Grade],
    spec: &ModelSpec,
    normalize: bool,
    global_prep: bool,
) -> Result<ThresholdSweepResult> {
    let mut accuracies = Vec::with_capacity(SWEEP_GRID.len());
    for t in SWEEP_GRID {
        let prep = Prep { thresholds: t, normalize, global: global_prep };
        let preds = eval::loocv(fm, labels, spec, &prep)
            .map_err(|e| Error::Sweep { t_perf: t.t_perf, t_subs: t.t_subs, source: Box::new(e) })?;
        accuracies.push((t, eval::accuracy(&preds)));
    }
    Ok(ThresholdSweepResult { winner: sweep_winner(&accuracies), accuracies })
}

pub(crate) fn sweep_winner(accuracies: &[(Thresholds, f64)]) -> Thresholds {
    let mut best = accuracies[0];
    for &(t, acc) in &accuracies[1..] {
        if acc > best.1 || (acc == best.1 && t < best.0) {
            best = (t, acc);
        }
    }
    best.0
}
