mod common;

use gradecast::features::{self, assemble_feature_matrix};
use gradecast::ingest::{build_dataset, Grade, StudentRecord, SubmissionEvent};
use proptest::prelude::*;

use common::*;

fn student(id: &str) -> StudentRecord {
    StudentRecord { student_id: id.into(), hw_scores: [50.0; 4], test_score: 50.0, final_grade: Grade::C }
}

fn event(student: &str, question: usize, assignment: u8, timestamp: i64, attempt: u32, correct: bool) -> SubmissionEvent {
    SubmissionEvent {
        student_id: student.into(),
        question_id: format!("q{question}"),
        assignment_id: assignment,
        timestamp,
        attempt_number: attempt,
        correct,
    }
}

/// Random but well-formed logs: per (student, question) a run of wrong
/// attempts optionally ending in a correct one, at arbitrary gaps that
/// straddle the two-hour session boundary.
fn arbitrary_log() -> impl Strategy<Value = (Vec<SubmissionEvent>, Vec<StudentRecord>)> {
    let attempts = prop::collection::vec((0u32..4, any::<bool>(), prop::sample::select(vec![1i64, 11, 12, 13, 600, 7199, 7200, 7201, 20000])), 1..24);
    (1usize..5, attempts).prop_map(|(n_students, cells)| {
        let students: Vec<StudentRecord> = (0..n_students).map(|s| student(&format!("s{s}"))).collect();
        let mut events = Vec::new();
        let mut clock = vec![0i64; n_students];
        for (k, (tries, solved, gap)) in cells.into_iter().enumerate() {
            let s = k % n_students;
            let question = k / n_students;
            let assignment = 1 + (question % 4) as u8;
            let total = tries + u32::from(solved);
            for a in 1..=total {
                clock[s] += gap;
                events.push(event(&format!("s{s}"), question, assignment, clock[s], a, solved && a == total));
            }
        }
        if events.is_empty() {
            events.push(event("s0", 0, 1, 0, 1, true));
        }
        (events, students)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn counting_identities_hold((events, students) in arbitrary_log()) {
        let ds = build_dataset(events, students).unwrap();
        let fm = assemble_feature_matrix(&ds);
        let q = ds.n_questions();
        prop_assert_eq!(fm.n_cols(), 2 * q + 13);
        for row in 0..ds.n_students() {
            for j in 0..q {
                if fm.values.get(row, j) == 1.0 {
                    prop_assert!(fm.values.get(row, q + j) >= 1.0);
                }
            }
            let mut sessions = 0;
            for a in 1..=4u8 {
                let segmented = features::segment_sessions(&ds, row, a);
                let mut ts: Vec<i64> = ds.events_of(row).iter().filter(|e| e.assignment_id == a).map(|e| e.timestamp).collect();
                ts.sort();
                prop_assert_eq!(segmented.iter().map(|s| s.events.len()).collect::<Vec<_>>(), session_sizes(&ts));
                sessions += segmented.len();
            }
            let times = features::response_times(&ds, row);
            prop_assert_eq!(times.len(), ds.events_of(row).len() - sessions);
            prop_assert!(times.iter().all(|&t| t <= 7200.0));
            let long = fm.values.get(row, col(&fm, "rt:long_n"));
            let quick = fm.values.get(row, col(&fm, "rt:quick_n"));
            prop_assert!(long + quick <= times.len() as f64);
        }
    }
}

#[test]
fn renaming_students_permutes_rows() {
    let ds = small_dataset(15, 20, 5);
    let fm = assemble_feature_matrix(&ds);
    // reverse the natural order of the ids
    let n = ds.n_students();
    let rename = |id: &str| {
        let i: usize = id.trim_start_matches('s').parse().unwrap();
        format!("s{:04}", n + 1 - i)
    };
    let events: Vec<SubmissionEvent> =
        ds.events().iter().map(|e| SubmissionEvent { student_id: rename(&e.student_id), ..e.clone() }).collect();
    let students: Vec<StudentRecord> =
        ds.students().iter().map(|s| StudentRecord { student_id: rename(&s.student_id), ..s.clone() }).collect();
    let renamed = build_dataset(events, students).unwrap();
    let fm2 = assemble_feature_matrix(&renamed);
    for row in 0..n {
        assert_eq!(fm2.values.row(row), fm.values.row(n - 1 - row));
    }
}

#[test]
fn csv_export_has_documented_header() {
    let events = vec![event("s1", 1, 1, 0, 1, true), event("s2", 2, 4, 0, 1, false)];
    let students = ["s1", "s2", "s3", "s4"].map(student).to_vec();
    let ds = build_dataset(events, students).unwrap();
    let fm = assemble_feature_matrix(&ds);
    let mut out = Vec::new();
    fm.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "student_id,perf:q1,perf:q2,subs:q1,subs:q2,rt:long_n,rt:quick_n,rt:long_f,rt:quick_f,\
         sess:a1,sess:a2,sess:a3,sess:a4,score:hw1,score:hw2,score:hw3,score:hw4,score:test1"
    );
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn zero_activity_student_has_zero_features() {
    let events = vec![event("s1", 1, 1, 0, 1, true)];
    let mut students = vec![student("s1"), student("s2")];
    students[1].hw_scores = [0.0; 4];
    students[1].test_score = 0.0;
    let ds = build_dataset(events, students).unwrap();
    let fm = assemble_feature_matrix(&ds);
    assert_eq!(fm.n_rows(), 2);
    assert!(fm.values.row(1).iter().all(|&v| v == 0.0));
}
