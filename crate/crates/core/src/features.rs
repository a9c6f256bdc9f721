//! Per-student feature extraction.
//!
//! The matrix is the concatenation of five blocks, in this order:
//! per-question performance (Q), submissions per question (Q), response-time
//! statistics (4), sessions per assignment (4) and gradebook scores (5).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, SubmissionEvent, N_ASSIGNMENTS};
use crate::matrix::Matrix;
use crate::parallel;

/// Adjacent tries at most this far apart belong to the same session.
pub const SESSION_GAP_SECS: i64 = 7200;

/// Response times strictly below this are "quick" (more than 5 per minute).
pub const QUICK_RESPONSE_SECS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    PerQuestionPerformance,
    SubmissionsPerQuestion,
    ResponseTime,
    SessionsPerAssignment,
    Scores,
}

impl FeatureGroup {
    pub fn is_question_block(self) -> bool {
        matches!(self, FeatureGroup::PerQuestionPerformance | FeatureGroup::SubmissionsPerQuestion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub group: FeatureGroup,
}

/// Students × features, with named, group-tagged columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<Column>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn group_columns(&self, group: FeatureGroup) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().enumerate().filter(move |(_, c)| c.group == group).map(|(j, _)| j)
    }

    /// Writes the `features.csv` export: `student_id,<column names>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["student_id".to_owned()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (id, row) in self.row_ids.iter().zip(self.values.iter_rows()) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(id.clone());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }
}

/// A maximal run of one student's tries on one assignment whose adjacent
/// gaps are all within [`SESSION_GAP_SECS`].
#[derive(Debug, Clone, PartialEq)]
pub struct Session<'a> {
    pub student_id: &'a str,
    pub assignment_id: u8,
    pub events: Vec<&'a SubmissionEvent>,
}

impl Session<'_> {
    /// Gaps between consecutive tries, in seconds.
    pub fn response_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.windows(2).map(|w| (w[1].timestamp - w[0].timestamp) as f64)
    }
}

pub fn per_question_performance(ds: &Dataset) -> Matrix {
    question_block(ds, |cell, e| {
        if e.correct {
            *cell = 1.0;
        }
    })
}

pub fn submissions_per_question(ds: &Dataset) -> Matrix {
    question_block(ds, |cell, _| *cell += 1.0)
}

fn question_block<F>(ds: &Dataset, update: F) -> Matrix
where
    F: Fn(&mut f64, &SubmissionEvent) + Sync,
{
    let q = ds.n_questions();
    let rows = parallel::map_range(ds.n_students(), |s| {
        let mut row = vec![0.0; q];
        for e in ds.events_of(s) {
            let j = ds.question_index(&e.question_id).expect("catalog covers every event");
            update(&mut row[j], e);
        }
        row
    });
    Matrix::from_rows(&rows)
}

/// Splits the time-ordered tries of the student at `row` on `assignment_id`
/// into sessions. A gap of exactly [`SESSION_GAP_SECS`] stays in-session.
pub fn segment_sessions(ds: &Dataset, row: usize, assignment_id: u8) -> Vec<Session<'_>> {
    let student_id = ds.students()[row].student_id.as_str();
    let mut events: Vec<&SubmissionEvent> =
        ds.events_of(row).iter().filter(|e| e.assignment_id == assignment_id).collect();
    // stable: ties keep catalog order
    events.sort_by_key(|e| e.timestamp);

    let mut sessions: Vec<Session<'_>> = Vec::new();
    for e in events {
        match sessions.last_mut() {
            Some(s) if e.timestamp - s.events.last().unwrap().timestamp <= SESSION_GAP_SECS => s.events.push(e),
            _ => sessions.push(Session { student_id, assignment_id, events: vec![e] }),
        }
    }
    sessions
}

pub fn sessions_per_assignment(ds: &Dataset) -> Matrix {
    let rows = parallel::map_range(ds.n_students(), |s| {
        (1..=N_ASSIGNMENTS as u8).map(|a| segment_sessions(ds, s, a).len() as f64).collect::<Vec<_>>()
    });
    Matrix::from_rows(&rows)
}

/// In-session response times of the student at `row`, assignment by
/// assignment. The first try of every session has no response time, so
/// gaps longer than two hours never appear here.
pub fn response_times(ds: &Dataset, row: usize) -> Vec<f64> {
    (1..=N_ASSIGNMENTS as u8)
        .flat_map(|a| {
            segment_sessions(ds, row, a).iter().flat_map(|s| s.response_times().collect::<Vec<_>>()).collect::<Vec<_>>()
        })
        .collect()
}

/// Cohort-wide response-time statistics behind the "long" cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseTimeStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

impl ResponseTimeStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return ResponseTimeStats { count: 0, mean: 0.0, std_dev: 0.0 };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        ResponseTimeStats { count: samples.len(), mean, std_dev: var.sqrt() }
    }

    /// Response times strictly above this are "long". Infinite when the
    /// cohort has no response times at all.
    pub fn long_threshold(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            self.mean + 2.0 * self.std_dev
        }
    }
}

/// `[long_count, quick_count, long_fraction, quick_fraction]` for one
/// student's response times.
pub fn response_time_row(times: &[f64], long_threshold: f64) -> [f64; 4] {
    let long = times.iter().filter(|&&t| t > long_threshold).count() as f64;
    let quick = times.iter().filter(|&&t| t < QUICK_RESPONSE_SECS).count() as f64;
    if times.is_empty() {
        return [0.0; 4];
    }
    let n = times.len() as f64;
    [long, quick, long / n, quick / n]
}

pub fn response_time_features(ds: &Dataset) -> Matrix {
    let per_student = parallel::map_range(ds.n_students(), |s| response_times(ds, s));
    let all: Vec<f64> = per_student.iter().flatten().copied().collect();
    let threshold = ResponseTimeStats::from_samples(&all).long_threshold();
    let rows: Vec<[f64; 4]> = per_student.iter().map(|t| response_time_row(t, threshold)).collect();
    Matrix::from_rows(&rows)
}

pub fn score_features(ds: &Dataset) -> Matrix {
    let rows: Vec<[f64; 5]> = ds
        .students()
        .iter()
        .map(|s| [s.hw_scores[0], s.hw_scores[1], s.hw_scores[2], s.hw_scores[3], s.test_score])
        .collect();
    Matrix::from_rows(&rows)
}

pub fn column_layout(n_questions: usize) -> Vec<Column> {
    let col = |name: String, group| Column { name, group };
    let mut cols = Vec::with_capacity(2 * n_questions + 13);
    // question columns are numbered by 1-based catalog position
    cols.extend((1..=n_questions).map(|q| col(format!("perf:q{q}"), FeatureGroup::PerQuestionPerformance)));
    cols.extend((1..=n_questions).map(|q| col(format!("subs:q{q}"), FeatureGroup::SubmissionsPerQuestion)));
    for name in ["rt:long_n", "rt:quick_n", "rt:long_f", "rt:quick_f"] {
        cols.push(col(name.to_owned(), FeatureGroup::ResponseTime));
    }
    cols.extend((1..=N_ASSIGNMENTS).map(|a| col(format!("sess:a{a}"), FeatureGroup::SessionsPerAssignment)));
    cols.extend((1..=N_ASSIGNMENTS).map(|a| col(format!("score:hw{a}"), FeatureGroup::Scores)));
    cols.push(col("score:test1".to_owned(), FeatureGroup::Scores));
    cols
}

/// Builds the full `2Q + 13` column matrix, one row per gradebook student.
pub fn assemble_feature_matrix(ds: &Dataset) -> FeatureMatrix {
    let perf = per_question_performance(ds);
    let subs = submissions_per_question(ds);
    let rt = response_time_features(ds);
    let sess = sessions_per_assignment(ds);
    let scores = score_features(ds);
    FeatureMatrix {
        row_ids: ds.students().iter().map(|s| s.student_id.clone()).collect(),
        columns: column_layout(ds.n_questions()),
        values: Matrix::hstack(&[&perf, &subs, &rt, &sess, &scores]),
    }
}
