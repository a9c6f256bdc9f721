//! Seeded synthetic cohorts with the same shape as the real course data.
//!
//! Students get a latent ability and questions a latent difficulty; each
//! try succeeds with probability `logistic(ability − difficulty)` and a
//! student keeps trying until success or the attempt limit. Letter grades
//! are cut from the weighted final score so the grade histogram is exactly
//! the configured one.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, Grade, StudentRecord, SubmissionEvent, N_ASSIGNMENTS};
use crate::rng;

/// Seconds between assignment release dates.
const ASSIGNMENT_SPACING_SECS: i64 = 10 * 24 * 3600;
/// Earliest start of the first assignment (2013-01-14T00:00:00Z).
const TERM_START: i64 = 1_358_121_600;
/// Minimum gap between sessions on the same assignment.
const MIN_SESSION_BREAK_SECS: i64 = 3 * 3600;
/// Cap on in-session gaps, keeping every session within the 2 h rule.
const MAX_IN_SESSION_GAP_SECS: f64 = 7000.0;

// stream ids; students and questions live in disjoint ranges
const QUESTION_STREAM: u64 = 1 << 40;
const STUDENT_STREAM: u64 = 2 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_students: usize,
    pub n_questions: usize,
    pub boolean_question_fraction: f64,
    /// Attempt limits for Boolean and other questions.
    pub boolean_max_attempts: u32,
    pub max_attempts: u32,
    /// Students per grade, F..A.
    pub target_grade_counts: [usize; 5],
    pub ability_spread: f64,
    pub difficulty_spread: f64,
    /// Standard deviation of the noise between ability and test score.
    pub test_noise: f64,
    /// Probability that a student never opens a given question.
    pub skip_rate: f64,
    /// Median in-session gap between tries, in seconds.
    pub median_gap_secs: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_students: 249,
            n_questions: 409,
            boolean_question_fraction: 0.2,
            boolean_max_attempts: 1,
            max_attempts: 3,
            target_grade_counts: [26, 10, 22, 72, 119],
            ability_spread: 1.0,
            difficulty_spread: 1.0,
            test_noise: 0.5,
            skip_rate: 0.05,
            median_gap_secs: 45.0,
            seed: 42,
        }
    }
}

impl CohortConfig {
    /// Default parameters resized to `n_students`, with the grade counts
    /// scaled proportionally (largest remainders) to still sum correctly.
    pub fn scaled(n_students: usize, n_questions: usize, seed: u64) -> Self {
        let base = CohortConfig::default();
        CohortConfig {
            n_students,
            n_questions,
            target_grade_counts: scale_counts(&base.target_grade_counts, n_students),
            seed,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.target_grade_counts.iter().sum();
        if total != self.n_students {
            return Err(Error::InfeasibleConfig(format!(
                "grade counts sum to {total} but n_students is {}",
                self.n_students
            )));
        }
        if self.n_students == 0 || self.n_questions < N_ASSIGNMENTS {
            return Err(Error::InfeasibleConfig(format!(
                "need at least one student and {N_ASSIGNMENTS} questions"
            )));
        }
        for (name, v) in [("boolean_question_fraction", self.boolean_question_fraction), ("skip_rate", self.skip_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InfeasibleConfig(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("ability_spread", self.ability_spread),
            ("difficulty_spread", self.difficulty_spread),
            ("test_noise", self.test_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InfeasibleConfig(format!("{name} must be a finite value >= 0")));
            }
        }
        if self.boolean_max_attempts == 0 || self.max_attempts == 0 {
            return Err(Error::InfeasibleConfig("attempt limits must be >= 1".into()));
        }
        if self.median_gap_secs.is_nan() || self.median_gap_secs <= 0.0 {
            return Err(Error::InfeasibleConfig("median_gap_secs must be > 0".into()));
        }
        Ok(())
    }
}

/// Largest-remainder rescaling of `counts` to a new total.
pub fn scale_counts(counts: &[usize; 5], total: usize) -> [usize; 5] {
    let old: usize = counts.iter().sum();
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / old as f64).collect();
    let mut out: [usize; 5] = std::array::from_fn(|i| exact[i].floor() as usize);
    let mut short = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        out[i] += 1;
        short -= 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthQuestion {
    pub id: String,
    pub assignment_id: u8,
    pub boolean: bool,
    pub difficulty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub questions: Vec<SynthQuestion>,
    pub abilities: Vec<f64>,
    pub events: Vec<SubmissionEvent>,
    pub students: Vec<StudentRecord>,
    /// Sessions generated per student and assignment.
    pub sessions: Vec<[usize; N_ASSIGNMENTS]>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal(spread: f64) -> Normal<f64> {
    Normal::new(0.0, spread).expect("spread validated")
}

struct StudentDraw {
    ability: f64,
    events: Vec<SubmissionEvent>,
    hw: [f64; N_ASSIGNMENTS],
    test: f64,
    sessions: [usize; N_ASSIGNMENTS],
}

pub fn generate_cohort(cfg: &CohortConfig) -> Result<Cohort> {
    cfg.validate()?;
    let questions: Vec<SynthQuestion> = (0..cfg.n_questions)
        .map(|q| {
            let mut r = rng::stream(cfg.seed, QUESTION_STREAM + q as u64);
            SynthQuestion {
                id: format!("q{}", q + 1),
                assignment_id: 1 + (q * N_ASSIGNMENTS / cfg.n_questions) as u8,
                boolean: r.random::<f64>() < cfg.boolean_question_fraction,
                difficulty: normal(cfg.difficulty_spread).sample(&mut r),
            }
        })
        .collect();

    let draws: Vec<StudentDraw> =
        crate::parallel::map_range(cfg.n_students, |s| draw_student(cfg, &questions, s));

    let finals: Vec<f64> = draws
        .iter()
        .map(|d| 0.6 * d.test + 0.4 * d.hw.iter().sum::<f64>() / N_ASSIGNMENTS as f64)
        .collect();
    let grades = quantile_grades(&finals, &cfg.target_grade_counts);

    let mut events = Vec::new();
    let mut students = Vec::with_capacity(cfg.n_students);
    let mut abilities = Vec::with_capacity(cfg.n_students);
    let mut sessions = Vec::with_capacity(cfg.n_students);
    for (s, d) in draws.into_iter().enumerate() {
        students.push(StudentRecord {
            student_id: student_id(s),
            hw_scores: d.hw,
            test_score: d.test,
            final_grade: grades[s],
        });
        abilities.push(d.ability);
        sessions.push(d.sessions);
        events.extend(d.events);
    }
    Ok(Cohort { questions, abilities, events, students, sessions })
}

fn student_id(s: usize) -> String {
    format!("s{:04}", s + 1)
}

/// Sorts students by final score (ties by index) and hands out grades
/// F..A in blocks of the target sizes.
pub fn quantile_grades(finals: &[f64], counts: &[usize; 5]) -> Vec<Grade> {
    let mut order: Vec<usize> = (0..finals.len()).collect();
    order.sort_by(|&a, &b| finals[a].total_cmp(&finals[b]).then(a.cmp(&b)));
    let mut grades = vec![Grade::F; finals.len()];
    let mut pos = 0;
    for (g, &c) in Grade::ALL.iter().zip(counts) {
        for &s in &order[pos..pos + c] {
            grades[s] = *g;
        }
        pos += c;
    }
    grades
}

fn draw_student(cfg: &CohortConfig, questions: &[SynthQuestion], s: usize) -> StudentDraw {
    let mut r = rng::stream(cfg.seed, STUDENT_STREAM + s as u64);
    let ability = normal(cfg.ability_spread).sample(&mut r);
    let gap = LogNormal::new(cfg.median_gap_secs.ln(), 1.0).expect("valid log-normal");
    let id = student_id(s);

    let mut events = Vec::new();
    let mut hw = [0.0; N_ASSIGNMENTS];
    let mut sessions = [0; N_ASSIGNMENTS];
    for a in 0..N_ASSIGNMENTS {
        let assignment_id = a as u8 + 1;
        let block: Vec<&SynthQuestion> = questions.iter().filter(|q| q.assignment_id == assignment_id).collect();

        // (question, outcomes of each try)
        let mut work: Vec<(&SynthQuestion, Vec<bool>)> = Vec::new();
        let mut solved = 0;
        for q in &block {
            if r.random::<f64>() < cfg.skip_rate {
                continue;
            }
            let limit = if q.boolean { cfg.boolean_max_attempts } else { cfg.max_attempts };
            let p = logistic(ability - q.difficulty);
            let mut tries = Vec::new();
            for _ in 0..limit {
                let ok = r.random::<f64>() < p;
                tries.push(ok);
                if ok {
                    solved += 1;
                    break;
                }
            }
            work.push((q, tries));
        }
        hw[a] = 100.0 * solved as f64 / block.len() as f64;
        if work.is_empty() {
            continue;
        }

        // split the question sequence into 1-3 contiguous sessions
        let n_sessions = r.random_range(1..=3usize).min(work.len());
        let mut cuts: Vec<usize> = Vec::new();
        while cuts.len() < n_sessions - 1 {
            let c = r.random_range(1..work.len());
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_unstable();
        sessions[a] = n_sessions;

        let release = TERM_START + a as i64 * ASSIGNMENT_SPACING_SECS;
        let mut t = release + r.random_range(0..2 * 24 * 3600);
        for (k, (q, tries)) in work.iter().enumerate() {
            if k > 0 {
                if cuts.contains(&k) {
                    t += MIN_SESSION_BREAK_SECS + r.random_range(0..24 * 3600);
                } else {
                    t += sample_gap(&gap, &mut r);
                }
            }
            for (n, &ok) in tries.iter().enumerate() {
                if n > 0 {
                    t += sample_gap(&gap, &mut r);
                }
                events.push(SubmissionEvent {
                    student_id: id.clone(),
                    question_id: q.id.clone(),
                    assignment_id,
                    timestamp: t,
                    attempt_number: n as u32 + 1,
                    correct: ok,
                });
            }
        }
    }
    let noise = normal(cfg.test_noise).sample(&mut r);
    let test = 100.0 * logistic(ability + noise);
    StudentDraw { ability, events, hw, test, sessions }
}

fn sample_gap<R: Rng>(gap: &LogNormal<f64>, r: &mut R) -> i64 {
    gap.sample(r).clamp(1.0, MAX_IN_SESSION_GAP_SECS).round() as i64
}

impl Cohort {
    pub fn write_submissions<W: Write>(&self, out: W) -> Result<()> {
        ingest::write_submissions(out, &self.events)
    }

    pub fn write_gradebook<W: Write>(&self, out: W) -> Result<()> {
        ingest::write_gradebook(out, &self.students)
    }

    /// Writes `submissions.csv` and `gradebook.csv` into `dir`, each
    /// preceded by `header` (a comment line) when given.
    pub fn write_to_dir(&self, dir: &Path, header: Option<&str>) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let subs = dir.join("submissions.csv");
        let grades = dir.join("gradebook.csv");
        for (path, is_subs) in [(&subs, true), (&grades, false)] {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            if let Some(h) = header {
                writeln!(w, "{h}").map_err(|e| Error::io(path, e))?;
            }
            if is_subs {
                self.write_submissions(&mut w)?;
            } else {
                self.write_gradebook(&mut w)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok((subs, grades))
    }

    pub fn into_dataset(self) -> Result<ingest::Dataset> {
        ingest::build_dataset(self.events, self.students)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> CohortConfig {
        CohortConfig::scaled(30, 40, seed)
    }

    #[test]
    fn default_histogram_is_exact() {
        let c = generate_cohort(&CohortConfig::default()).unwrap();
        assert_eq!(c.students.len(), 249);
        let mut hist = [0; 5];
        for s in &c.students {
            hist[s.final_grade.index()] += 1;
        }
        assert_eq!(hist, [26, 10, 22, 72, 119]);
    }

    #[test]
    fn zero_spread_still_exact() {
        let cfg = CohortConfig { ability_spread: 0.0, ..small(3) };
        let c = generate_cohort(&cfg).unwrap();
        let mut hist = [0; 5];
        for s in &c.students {
            hist[s.final_grade.index()] += 1;
        }
        assert_eq!(hist, cfg.target_grade_counts);
        assert!(c.abilities.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn infeasible_counts() {
        let cfg = CohortConfig { target_grade_counts: [1, 1, 1, 1, 1], ..small(1) };
        assert!(matches!(generate_cohort(&cfg), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn attempt_limits_respected() {
        let cfg = small(9);
        let c = generate_cohort(&cfg).unwrap();
        let cap: usize = c.questions.iter().map(|q| if q.boolean { 1 } else { 3 }).sum::<usize>() * cfg.n_students;
        assert!(c.events.len() <= cap);
        for e in &c.events {
            let q = &c.questions[e.question_id[1..].parse::<usize>().unwrap() - 1];
            assert!(e.attempt_number <= if q.boolean { 1 } else { 3 });
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let bytes = |seed| {
            let c = generate_cohort(&small(seed)).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            c.write_submissions(&mut a).unwrap();
            c.write_gradebook(&mut b).unwrap();
            (a, b)
        };
        assert_eq!(bytes(42), bytes(42));
        assert_ne!(bytes(42).0, bytes(43).0);
    }

    #[test]
    fn scaled_counts_sum() {
        assert_eq!(scale_counts(&[26, 10, 22, 72, 119], 249), [26, 10, 22, 72, 119]);
        for n in [1, 7, 30, 100, 500] {
            assert_eq!(scale_counts(&[26, 10, 22, 72, 119], n).iter().sum::<usize>(), n);
        }
    }
}
