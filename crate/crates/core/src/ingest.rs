//! Submission-log and gradebook parsing.
//!
//! Both files are plain CSV with a fixed header. Lines starting with `#` are
//! treated as comments so that files written by this crate (which carry a
//! provenance comment on their first line) parse back unchanged.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUBMISSIONS_HEADER: [&str; 6] = [
    "student_id",
    "question_id",
    "assignment_id",
    "timestamp",
    "attempt_number",
    "correct",
];

pub const GRADEBOOK_HEADER: [&str; 7] =
    ["student_id", "hw1", "hw2", "hw3", "hw4", "test1", "final_grade"];

/// Number of homework assignments inside the observation window.
pub const N_ASSIGNMENTS: usize = 4;

/// Letter grade on the integer scale 5=A, 4=B, 3=C, 2=D, 1=F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const F: Grade = Grade(1);
    pub const D: Grade = Grade(2);
    pub const C: Grade = Grade(3);
    pub const B: Grade = Grade(4);
    pub const A: Grade = Grade(5);

    /// All grades in ascending order (F first).
    pub const ALL: [Grade; 5] = [Grade::F, Grade::D, Grade::C, Grade::B, Grade::A];

    pub fn new(value: u8) -> Option<Grade> {
        (1..=5).contains(&value).then_some(Grade(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based position in [`Grade::ALL`].
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(index: usize) -> Option<Grade> {
        Grade::ALL.get(index).copied()
    }

    pub fn letter(self) -> char {
        match self.0 {
            5 => 'A',
            4 => 'B',
            3 => 'C',
            2 => 'D',
            _ => 'F',
        }
    }

    /// Case-insensitive letter lookup.
    pub fn from_letter(letter: &str) -> Option<Grade> {
        match letter.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Grade::A),
            "B" => Some(Grade::B),
            "C" => Some(Grade::C),
            "D" => Some(Grade::D),
            "F" => Some(Grade::F),
            _ => None,
        }
    }

    /// Absolute distance on the integer scale.
    pub fn distance(self, other: Grade) -> usize {
        usize::from(self.0.abs_diff(other.0))
    }
}

impl TryFrom<u8> for Grade {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        Grade::new(value).ok_or_else(|| format!("grade {value} outside 1..=5"))
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One graded attempt on one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionEvent {
    pub student_id: String,
    pub question_id: String,
    pub assignment_id: u8,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub attempt_number: u32,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentRecord {
    pub student_id: String,
    pub hw_scores: [f64; N_ASSIGNMENTS],
    pub test_score: f64,
    pub final_grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    pub assignment_id: u8,
    pub index: usize,
}

/// Events plus the number of attempt numbers that had to be rewritten.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<SubmissionEvent>,
    pub renumbered: usize,
}

/// Compares identifiers so that embedded digit runs sort numerically
/// (`q2` < `q10`).
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let na = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let nb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let da = trim_zeros(&a[..na]);
                let db = trim_zeros(&b[..nb]);
                let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db)).then(na.cmp(&nb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[na..];
                b = &b[nb..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[start..]
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let found = reader.headers()?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow { line, reason: reason.into() }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_submissions(path: impl AsRef<Path>) -> Result<ParsedLog> {
    parse_submissions_from(open(path.as_ref())?)
}

pub fn parse_submissions_from<R: Read>(reader: R) -> Result<ParsedLog> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &SUBMISSIONS_HEADER)?;

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != SUBMISSIONS_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", SUBMISSIONS_HEADER.len(), record.len()),
            ));
        }
        let field = |i: usize| &record[i];
        let assignment_id = field(2)
            .parse::<u8>()
            .ok()
            .filter(|a| (1..=N_ASSIGNMENTS as u8).contains(a))
            .ok_or_else(|| malformed(line, format!("bad assignment_id `{}`", field(2))))?;
        let timestamp = field(3)
            .parse::<i64>()
            .map_err(|_| malformed(line, format!("bad timestamp `{}`", field(3))))?;
        let attempt_number = field(4)
            .parse::<u32>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| malformed(line, format!("bad attempt_number `{}`", field(4))))?;
        let correct = match field(5) {
            "0" => false,
            "1" => true,
            other => return Err(malformed(line, format!("bad correct flag `{other}`"))),
        };
        if field(0).is_empty() || field(1).is_empty() {
            return Err(malformed(line, "empty identifier"));
        }
        events.push(SubmissionEvent {
            student_id: field(0).to_owned(),
            question_id: field(1).to_owned(),
            assignment_id,
            timestamp,
            attempt_number,
            correct,
        });
    }
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }

    events.sort_by(event_order);
    let renumbered = renumber_attempts(&mut events);
    Ok(ParsedLog { events, renumbered })
}

fn event_order(a: &SubmissionEvent, b: &SubmissionEvent) -> Ordering {
    natural_cmp(&a.student_id, &b.student_id)
        .then_with(|| natural_cmp(&a.question_id, &b.question_id))
        .then(a.timestamp.cmp(&b.timestamp))
        .then(a.attempt_number.cmp(&b.attempt_number))
        .then(a.correct.cmp(&b.correct))
        .then(a.assignment_id.cmp(&b.assignment_id))
}

/// Rewrites attempt numbers to 1, 2, ... within each (student, question) run.
/// `events` must already be grouped by (student, question) in time order.
/// Returns the number of events whose attempt number changed.
pub fn renumber_attempts(events: &mut [SubmissionEvent]) -> usize {
    let mut changed = 0;
    let mut expected = 0u32;
    for i in 0..events.len() {
        let same_pair = i > 0
            && events[i - 1].student_id == events[i].student_id
            && events[i - 1].question_id == events[i].question_id;
        expected = if same_pair { expected + 1 } else { 1 };
        if events[i].attempt_number != expected {
            events[i].attempt_number = expected;
            changed += 1;
        }
    }
    changed
}

pub fn parse_gradebook(path: impl AsRef<Path>) -> Result<Vec<StudentRecord>> {
    parse_gradebook_from(open(path.as_ref())?)
}

pub fn parse_gradebook_from<R: Read>(reader: R) -> Result<Vec<StudentRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &GRADEBOOK_HEADER)?;

    let mut seen = HashSet::new();
    let mut students = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != GRADEBOOK_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", GRADEBOOK_HEADER.len(), record.len()),
            ));
        }
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(malformed(line, "empty student_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateStudent(id));
        }
        let mut scores = [0.0; 5];
        for (k, score) in scores.iter_mut().enumerate() {
            let raw = &record[k + 1];
            let v: f64 = raw
                .parse()
                .map_err(|_| malformed(line, format!("bad {} `{raw}`", GRADEBOOK_HEADER[k + 1])))?;
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::ScoreOutOfRange {
                    id,
                    field: GRADEBOOK_HEADER[k + 1].to_owned(),
                });
            }
            *score = v;
        }
        let final_grade = Grade::from_letter(&record[6]).ok_or_else(|| Error::UnknownGrade(id.clone()))?;
        students.push(StudentRecord {
            student_id: id,
            hw_scores: [scores[0], scores[1], scores[2], scores[3]],
            test_score: scores[4],
            final_grade,
        });
    }
    if students.is_empty() {
        return Err(Error::EmptyGradebook);
    }
    students.sort_by(|a, b| natural_cmp(&a.student_id, &b.student_id));
    Ok(students)
}

/// Canonical in-memory cohort: gradebook rows, their submission events and
/// the question catalog.
///
/// Events are stored grouped by student (in gradebook order), then by
/// question catalog index, then by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    events: Vec<SubmissionEvent>,
    students: Vec<StudentRecord>,
    catalog: Vec<Question>,
    question_index: HashMap<String, usize>,
    student_events: Vec<Range<usize>>,
}

pub fn build_dataset(events: Vec<SubmissionEvent>, students: Vec<StudentRecord>) -> Result<Dataset> {
    if students.is_empty() {
        return Err(Error::EmptyGradebook);
    }
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut students = students;
    students.sort_by(|a, b| natural_cmp(&a.student_id, &b.student_id));
    let mut student_index = HashMap::with_capacity(students.len());
    for (i, s) in students.iter().enumerate() {
        if student_index.insert(s.student_id.clone(), i).is_some() {
            return Err(Error::DuplicateStudent(s.student_id.clone()));
        }
    }

    let mut assignment_of: HashMap<&str, u8> = HashMap::new();
    for e in &events {
        if !student_index.contains_key(&e.student_id) {
            return Err(Error::OrphanEvent(e.student_id.clone()));
        }
        match assignment_of.get(e.question_id.as_str()) {
            Some(&a) if a != e.assignment_id => {
                return Err(Error::InconsistentAssignment(e.question_id.clone()))
            }
            Some(_) => {}
            None => {
                assignment_of.insert(&e.question_id, e.assignment_id);
            }
        }
    }

    let mut catalog: Vec<Question> = assignment_of
        .into_iter()
        .map(|(id, assignment_id)| Question { id: id.to_owned(), assignment_id, index: 0 })
        .collect();
    catalog.sort_by(|a, b| a.assignment_id.cmp(&b.assignment_id).then_with(|| natural_cmp(&a.id, &b.id)));
    let mut question_index = HashMap::with_capacity(catalog.len());
    for (i, q) in catalog.iter_mut().enumerate() {
        q.index = i;
        question_index.insert(q.id.clone(), i);
    }

    let mut events = events;
    events.sort_by(|a, b| {
        student_index[&a.student_id]
            .cmp(&student_index[&b.student_id])
            .then(question_index[&a.question_id].cmp(&question_index[&b.question_id]))
            .then(a.timestamp.cmp(&b.timestamp))
            .then(a.attempt_number.cmp(&b.attempt_number))
            .then(a.correct.cmp(&b.correct))
    });

    let mut student_events = vec![0..0; students.len()];
    let mut start = 0;
    while start < events.len() {
        let s = student_index[&events[start].student_id];
        let end = start + events[start..].iter().take_while(|e| student_index[&e.student_id] == s).count();
        student_events[s] = start..end;
        start = end;
    }

    Ok(Dataset { events, students, catalog, question_index, student_events })
}

impl Dataset {
    /// Parses both files and cross-validates them. Returns the dataset and
    /// the number of re-numbered attempts.
    pub fn load(submissions: impl AsRef<Path>, gradebook: impl AsRef<Path>) -> Result<(Dataset, usize)> {
        let log = parse_submissions(submissions)?;
        let students = parse_gradebook(gradebook)?;
        Ok((build_dataset(log.events, students)?, log.renumbered))
    }

    pub fn events(&self) -> &[SubmissionEvent] {
        &self.events
    }

    pub fn students(&self) -> &[StudentRecord] {
        &self.students
    }

    pub fn catalog(&self) -> &[Question] {
        &self.catalog
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_questions(&self) -> usize {
        self.catalog.len()
    }

    pub fn question_index(&self, question_id: &str) -> Option<usize> {
        self.question_index.get(question_id).copied()
    }

    pub fn student_position(&self, student_id: &str) -> Option<usize> {
        self.students.iter().position(|s| s.student_id == student_id)
    }

    /// Events of the student at `row`, grouped by question then time.
    pub fn events_of(&self, row: usize) -> &[SubmissionEvent] {
        &self.events[self.student_events[row].clone()]
    }

    pub fn grades(&self) -> Vec<Grade> {
        self.students.iter().map(|s| s.final_grade).collect()
    }

    pub fn write_submissions<W: Write>(&self, out: W) -> Result<()> {
        write_submissions(out, &self.events)
    }

    pub fn write_gradebook<W: Write>(&self, out: W) -> Result<()> {
        write_gradebook(out, &self.students)
    }
}

pub fn write_submissions<W: Write>(out: W, events: &[SubmissionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUBMISSIONS_HEADER)?;
    for e in events {
        w.write_record([
            e.student_id.as_str(),
            e.question_id.as_str(),
            &e.assignment_id.to_string(),
            &e.timestamp.to_string(),
            &e.attempt_number.to_string(),
            if e.correct { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<submissions>", e))?;
    Ok(())
}

pub fn write_gradebook<W: Write>(out: W, students: &[StudentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRADEBOOK_HEADER)?;
    for s in students {
        let mut row = vec![s.student_id.clone()];
        row.extend(s.hw_scores.iter().map(|v| v.to_string()));
        row.push(s.test_score.to_string());
        row.push(s.final_grade.letter().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<gradebook>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUB_HEADER: &str = "student_id,question_id,assignment_id,timestamp,attempt_number,correct\n";
    const GB_HEADER: &str = "student_id,hw1,hw2,hw3,hw4,test1,final_grade\n";

    fn subs(body: &str) -> Result<ParsedLog> {
        parse_submissions_from(format!("{SUB_HEADER}{body}").as_bytes())
    }

    fn gradebook(body: &str) -> Result<Vec<StudentRecord>> {
        parse_gradebook_from(format!("{GB_HEADER}{body}").as_bytes())
    }

    fn record(id: &str) -> StudentRecord {
        StudentRecord {
            student_id: id.into(),
            hw_scores: [0.0; 4],
            test_score: 0.0,
            final_grade: Grade::C,
        }
    }

    fn event(student: &str, question: &str, t: i64) -> SubmissionEvent {
        SubmissionEvent {
            student_id: student.into(),
            question_id: question.into(),
            assignment_id: 1,
            timestamp: t,
            attempt_number: 1,
            correct: false,
        }
    }

    #[test]
    fn grade_letters_are_a_bijection() {
        for g in Grade::ALL {
            assert_eq!(Grade::from_letter(&g.letter().to_string()), Some(g));
            assert_eq!(Grade::from_index(g.index()), Some(g));
        }
        assert_eq!(Grade::from_letter("a"), Some(Grade::A));
        assert_eq!(Grade::from_letter("E"), None);
        assert_eq!(Grade::new(0), None);
        assert_eq!(Grade::new(6), None);
    }

    #[test]
    fn single_valid_row() {
        let log = subs("s1,q1,1,100,1,1\n").unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.renumbered, 0);
        assert!(log.events[0].correct);
    }

    #[test]
    fn attempt_gap_is_renumbered() {
        let log = subs("s1,q1,1,100,1,0\ns1,q1,1,200,3,1\n").unwrap();
        let attempts: Vec<_> = log.events.iter().map(|e| e.attempt_number).collect();
        assert_eq!(attempts, [1, 2]);
        assert_eq!(log.renumbered, 1);
    }

    #[test]
    fn attempt_disorder_follows_timestamps() {
        let log = subs("s1,q1,1,200,1,1\ns1,q1,1,100,2,0\n").unwrap();
        assert_eq!(log.events[0].timestamp, 100);
        assert_eq!(log.events[0].attempt_number, 1);
        assert_eq!(log.events[1].attempt_number, 2);
        assert_eq!(log.renumbered, 2);
    }

    #[test]
    fn bad_correct_flag_is_malformed() {
        let err = subs("s1,q1,1,100,1,1\ns1,q2,1,100,1,maybe\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }), "{err}");
    }

    #[test]
    fn wrong_column_count_is_malformed() {
        assert!(matches!(subs("s1,q1,1,100,1\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(subs("s1,q1,9,100,1,0\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(subs("s1,q1,1,100,0,0\n"), Err(Error::MalformedRow { .. })));
    }

    #[test]
    fn empty_log_and_bad_header() {
        assert!(matches!(subs(""), Err(Error::EmptyLog)));
        let err = parse_submissions_from("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::BadHeader { .. }));
    }

    #[test]
    fn comments_are_skipped() {
        let text = format!("# run_config: {{}}\n{SUB_HEADER}s1,q1,1,100,1,1\n");
        assert_eq!(parse_submissions_from(text.as_bytes()).unwrap().events.len(), 1);
    }

    #[test]
    fn gradebook_row_parses() {
        let rows = gradebook("s1,90,85,70,100,88,A\n").unwrap();
        assert_eq!(rows[0].hw_scores, [90.0, 85.0, 70.0, 100.0]);
        assert_eq!(rows[0].test_score, 88.0);
        assert_eq!(rows[0].final_grade.value(), 5);
        assert_eq!(gradebook("s1,1,2,3,4,5,b\n").unwrap()[0].final_grade, Grade::B);
    }

    #[test]
    fn gradebook_errors() {
        assert!(matches!(
            gradebook("s1,90,85,101,100,88,A\n"),
            Err(Error::ScoreOutOfRange { ref field, .. }) if field == "hw3"
        ));
        assert!(matches!(gradebook("s1,90,85,70,100,-1,A\n"), Err(Error::ScoreOutOfRange { .. })));
        assert!(matches!(
            gradebook("s1,90,85,70,100,88,A\ns1,1,1,1,1,1,B\n"),
            Err(Error::DuplicateStudent(ref id)) if id == "s1"
        ));
        assert!(matches!(gradebook("s1,90,85,70,100,88,E\n"), Err(Error::UnknownGrade(_))));
        assert!(matches!(gradebook(""), Err(Error::EmptyGradebook)));
    }

    #[test]
    fn minimal_dataset_catalog() {
        let ds = build_dataset(vec![event("s1", "q1", 0)], vec![record("s1")]).unwrap();
        assert_eq!(ds.catalog(), &[Question { id: "q1".into(), assignment_id: 1, index: 0 }]);
    }

    #[test]
    fn orphan_event_rejected() {
        let err = build_dataset(vec![event("s9", "q1", 0)], vec![record("s1")]).unwrap_err();
        assert!(matches!(err, Error::OrphanEvent(ref id) if id == "s9"));
    }

    #[test]
    fn inconsistent_assignment_rejected() {
        let mut e2 = event("s1", "q1", 5);
        e2.assignment_id = 2;
        let err = build_dataset(vec![event("s1", "q1", 0), e2], vec![record("s1")]).unwrap_err();
        assert!(matches!(err, Error::InconsistentAssignment(_)));
    }

    #[test]
    fn inactive_students_are_kept() {
        let ds = build_dataset(vec![event("s2", "q1", 0)], vec![record("s1"), record("s2")]).unwrap();
        assert_eq!(ds.n_students(), 2);
        assert!(ds.events_of(0).is_empty());
        assert_eq!(ds.events_of(1).len(), 1);
    }

    #[test]
    fn catalog_is_contiguous_and_ordered() {
        let mut events = Vec::new();
        for q in (1..=409).rev() {
            let mut e = event("s1", &format!("q{q}"), q as i64);
            e.assignment_id = 1 + ((q - 1) * 4 / 409) as u8;
            events.push(e);
        }
        let ds = build_dataset(events, vec![record("s1")]).unwrap();
        assert_eq!(ds.n_questions(), 409);
        for (i, q) in ds.catalog().iter().enumerate() {
            assert_eq!(q.index, i);
            assert_eq!(q.id, format!("q{}", i + 1));
        }
    }

    #[test]
    fn natural_ordering() {
        assert_eq!(natural_cmp("q2", "q10"), Ordering::Less);
        assert_eq!(natural_cmp("q10", "q10"), Ordering::Equal);
        assert_eq!(natural_cmp("a", "b"), Ordering::Less);
        assert_eq!(natural_cmp("q01", "q1"), Ordering::Greater);
        assert_eq!(natural_cmp("s1x", "s1"), Ordering::Greater);
    }
}
