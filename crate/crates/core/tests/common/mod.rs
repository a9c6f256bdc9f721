//! Fixtures and independent reference implementations shared by the
//! integration tests. Nothing here calls the code under test for the
//! quantity it is checking.

#![allow(dead_code)]

use gradecast::features::{column_layout, FeatureMatrix};
use gradecast::ingest::{Dataset, Grade, SubmissionEvent};
use gradecast::synth::{generate_cohort, CohortConfig};
use gradecast::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cohort_dataset(cfg: &CohortConfig) -> Dataset {
    generate_cohort(cfg).expect("valid cohort config").into_dataset().expect("cohort is consistent")
}

pub fn small_dataset(students: usize, questions: usize, seed: u64) -> Dataset {
    cohort_dataset(&CohortConfig::scaled(students, questions, seed))
}

/// A feature matrix with `q` questions per block and random contents:
/// binary performance cells, small-integer submission counts, and
/// arbitrary values in the 13 trailing columns.
pub fn random_feature_matrix(r: &mut ChaCha8Rng, rows: usize, q: usize) -> FeatureMatrix {
    let cols = 2 * q + 13;
    let mut values = Matrix::zeros(rows, cols);
    // per-column bias so that low-variance columns are common
    let bias: Vec<f64> = (0..cols).map(|_| r.random::<f64>()).collect();
    for i in 0..rows {
        for j in 0..cols {
            let v = if j < q {
                f64::from(u8::from(r.random::<f64>() < bias[j]))
            } else if j < 2 * q {
                if r.random::<f64>() < bias[j] {
                    0.0
                } else {
                    f64::from(r.random_range(1..4u8))
                }
            } else {
                r.random_range(-5.0..5.0)
            };
            values.set(i, j, v);
        }
    }
    FeatureMatrix { row_ids: (0..rows).map(|i| format!("s{i}")).collect(), columns: column_layout(q), values }
}

pub fn random_grades(r: &mut ChaCha8Rng, n: usize) -> Vec<Grade> {
    (0..n).map(|_| Grade::ALL[r.random_range(0..5)]).collect()
}

/// Population variance as an exact fraction (numerator, denominator) of
/// integer-valued data: (nΣx² − (Σx)²) / n².
pub fn exact_variance(col: &[i64]) -> (i128, i128) {
    let n = col.len() as i128;
    let s: i128 = col.iter().map(|&v| v as i128).sum();
    let s2: i128 = col.iter().map(|&v| (v as i128) * (v as i128)).sum();
    (n * s2 - s * s, n * n)
}

/// Population variance, one pass over the squares.
pub fn naive_variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|v| v * v).sum::<f64>() / n - mean * mean
}

/// Sessions of a time-ordered event list under the inclusive 2-hour rule,
/// as event counts per session.
pub fn session_sizes(timestamps: &[i64]) -> Vec<usize> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut last: Option<i64> = None;
    for &t in timestamps {
        match last {
            Some(prev) if t - prev <= 7200 => *sizes.last_mut().unwrap() += 1,
            _ => sizes.push(1),
        }
        last = Some(t);
    }
    sizes
}

/// In-session gaps of one student, over all four assignments.
pub fn student_gaps(events: &[&SubmissionEvent]) -> Vec<f64> {
    let mut gaps = Vec::new();
    for a in 1..=4u8 {
        let mut ts: Vec<i64> = events.iter().filter(|e| e.assignment_id == a).map(|e| e.timestamp).collect();
        ts.sort();
        for w in ts.windows(2) {
            if w[1] - w[0] <= 7200 {
                gaps.push((w[1] - w[0]) as f64);
            }
        }
    }
    gaps
}

/// Column index of a named feature.
pub fn col(fm: &FeatureMatrix, name: &str) -> usize {
    fm.column_names().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}
