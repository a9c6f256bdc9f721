//! Leave-one-out evaluation, the five summary metrics, and report rendering.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::Grade;
use crate::models::{self, ModelSpec, PredictionOutcome, TrainedModel};
use crate::parallel;
use crate::rng;
use crate::selection::{Preprocessor, Thresholds};

/// How features are prepared for each fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prep {
    pub thresholds: Thresholds,
    pub normalize: bool,
    /// Fit selection and scaling once on every row instead of per fold.
    pub global: bool,
}

impl Prep {
    pub fn new(thresholds: Thresholds) -> Self {
        Prep { thresholds, normalize: false, global: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooEntry {
    pub true_grade: Grade,
    pub outcome: PredictionOutcome,
    pub fold: usize,
}

/// One entry per row, in row order; entry `i` came from the model trained
/// without row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LooPredictions {
    pub entries: Vec<LooEntry>,
    /// Folds whose SMO solve stopped at the pass limit.
    pub non_converged_folds: Vec<usize>,
}

impl LooPredictions {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn predicted(&self) -> impl Iterator<Item = Grade> + '_ {
        self.entries.iter().map(|e| e.outcome.grade)
    }
}

/// Selection/scaling plus the model trained for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub prep: Preprocessor,
    pub model: TrainedModel,
}

impl FoldModel {
    /// Predicts from a raw (unselected, unscaled) feature row.
    pub fn predict(&self, raw: &[f64]) -> Result<PredictionOutcome> {
        self.model.predict(&self.prep.transform_row(raw))
    }
}

/// Fits fold `held_out`: statistics and model see every row except it.
pub fn fit_fold(fm: &FeatureMatrix, labels: &[Grade], held_out: usize, spec: &ModelSpec, prep: &Prep) -> Result<FoldModel> {
    let train_rows: Vec<usize> = (0..fm.n_rows()).filter(|&i| i != held_out).collect();
    let pre = if prep.global {
        let all: Vec<usize> = (0..fm.n_rows()).collect();
        Preprocessor::fit(fm, &all, prep.thresholds, prep.normalize)?
    } else {
        Preprocessor::fit(fm, &train_rows, prep.thresholds, prep.normalize)?
    };
    fit_with(fm, labels, held_out, &train_rows, pre, spec)
}

fn fit_with(
    fm: &FeatureMatrix,
    labels: &[Grade],
    fold: usize,
    train_rows: &[usize],
    pre: Preprocessor,
    spec: &ModelSpec,
) -> Result<FoldModel> {
    let x = pre.transform_rows(&fm.values, train_rows);
    let y: Vec<Grade> = train_rows.iter().map(|&i| labels[i]).collect();
    let fold_spec = spec.with_seed(rng::derive_seed(spec.seed, fold as u64));
    let model = models::train(&fold_spec, &x, &y)?;
    Ok(FoldModel { prep: pre, model })
}

pub fn loocv(fm: &FeatureMatrix, labels: &[Grade], spec: &ModelSpec, prep: &Prep) -> Result<LooPredictions> {
    let n = fm.n_rows();
    if n < 2 {
        return Err(Error::TooFewStudents(n));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    spec.validate()?;
    prep.thresholds.validate()?;
    let shared = if prep.global {
        let all: Vec<usize> = (0..n).collect();
        Some(Preprocessor::fit(fm, &all, prep.thresholds, prep.normalize)?)
    } else {
        None
    };

    let folds = parallel::try_map_range(n, |i| {
        let run = || -> Result<(LooEntry, bool)> {
            let train_rows: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let pre = match &shared {
                Some(p) => p.clone(),
                None => Preprocessor::fit(fm, &train_rows, prep.thresholds, prep.normalize)?,
            };
            let fold = fit_with(fm, labels, i, &train_rows, pre, spec)?;
            let outcome = fold.predict(fm.values.row(i))?;
            Ok((LooEntry { true_grade: labels[i], outcome, fold: i }, fold.model.converged()))
        };
        run().map_err(|e| Error::Fold { fold: i, source: Box::new(e) })
    })?;

    let non_converged_folds = folds.iter().filter(|(_, ok)| !ok).map(|(e, _)| e.fold).collect();
    Ok(LooPredictions { entries: folds.into_iter().map(|(e, _)| e).collect(), non_converged_folds })
}

pub fn accuracy(preds: &LooPredictions) -> f64 {
    let hits = preds.entries.iter().filter(|e| e.outcome.grade == e.true_grade).count();
    hits as f64 / preds.len() as f64
}

pub fn mse(preds: &LooPredictions) -> f64 {
    let total: f64 = preds
        .entries
        .iter()
        .map(|e| {
            let d = f64::from(e.outcome.grade.value()) - f64::from(e.true_grade.value());
            d * d
        })
        .sum();
    total / preds.len() as f64
}

/// Micro-averaged F1 over the five classes, from pooled TP/FP/FN counts.
pub fn f1_micro(preds: &LooPredictions) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for g in Grade::ALL {
        for e in &preds.entries {
            let predicted = e.outcome.grade == g;
            let actual = e.true_grade == g;
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if tp == 0 {
        return 0.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// Counts of |predicted − actual| for distances 0..=4.
pub fn distance_histogram(preds: &LooPredictions) -> [usize; 5] {
    let mut hist = [0; 5];
    for e in &preds.entries {
        hist[e.outcome.grade.distance(e.true_grade)] += 1;
    }
    hist
}

/// Average precision over all (row, class) pairs pooled into one ranking.
/// Equal scores are ordered by row index, then class index.
pub fn micro_average_precision(preds: &LooPredictions) -> f64 {
    let mut pairs: Vec<(f64, usize, usize, bool)> = Vec::with_capacity(preds.len() * 5);
    for (row, e) in preds.entries.iter().enumerate() {
        for g in Grade::ALL {
            pairs.push((e.outcome.score(g), row, g.index(), g == e.true_grade));
        }
    }
    average_precision(&mut pairs)
}

pub(crate) fn average_precision(pairs: &mut [(f64, usize, usize, bool)]) -> f64 {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let positives = pairs.iter().filter(|p| p.3).count();
    if positives == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, p) in pairs.iter().enumerate() {
        if p.3 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / positives as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auroc {
    pub value: f64,
    /// Every row was correct, or every row was wrong; `value` is 0.5.
    pub degenerate: bool,
}

/// AUROC of "exactly correct" against each row's top class score
/// (min-max rescaled over the run), ties counting one half.
pub fn auroc_correct(preds: &LooPredictions) -> Auroc {
    let raw: Vec<f64> = preds.entries.iter().map(|e| e.outcome.max_score()).collect();
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let scores: Vec<f64> = raw.iter().map(|&s| if hi > lo { (s - lo) / (hi - lo) } else { 0.0 }).collect();
    let labels: Vec<bool> = preds.entries.iter().map(|e| e.outcome.grade == e.true_grade).collect();
    rank_auroc(&scores, &labels)
}

/// Mann-Whitney AUROC with average ranks for ties.
pub fn rank_auroc(scores: &[f64], positive: &[bool]) -> Auroc {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Auroc { value: 0.5, degenerate: true };
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        rank_sum_pos += mean_rank * order[start..end].iter().filter(|&&i| positive[i]).count() as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Auroc { value: u / (n_pos * n_neg) as f64, degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub mse: f64,
    pub micro_ap: f64,
    pub auroc: f64,
    pub auroc_degenerate: bool,
    pub f1_micro: f64,
    pub distance_histogram: [usize; 5],
}

impl EvalReport {
    pub fn from_predictions(preds: &LooPredictions) -> Self {
        let auroc = auroc_correct(preds);
        EvalReport {
            n: preds.len(),
            accuracy: accuracy(preds),
            mse: mse(preds),
            micro_ap: micro_average_precision(preds),
            auroc: auroc.value,
            auroc_degenerate: auroc.degenerate,
            f1_micro: f1_micro(preds),
            distance_histogram: distance_histogram(preds),
        }
    }

    /// Checks the exact identities tying the metrics to the histogram.
    pub fn check_identities(&self) -> std::result::Result<(), String> {
        let total: usize = self.distance_histogram.iter().sum();
        if total != self.n {
            return Err(format!("histogram sums to {total}, expected {}", self.n));
        }
        if self.f1_micro != self.accuracy {
            return Err(format!("f1_micro {} != accuracy {}", self.f1_micro, self.accuracy));
        }
        let acc = self.distance_histogram[0] as f64 / self.n as f64;
        if acc != self.accuracy {
            return Err(format!("accuracy {} != hist[0]/N {acc}", self.accuracy));
        }
        let sq: usize = self.distance_histogram.iter().enumerate().map(|(d, c)| d * d * c).sum();
        let mse = sq as f64 / self.n as f64;
        if mse != self.mse {
            return Err(format!("mse {} != Σd²·hist/N {mse}", self.mse));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub spec: ModelSpec,
    pub label: String,
    pub report: EvalReport,
}

impl ReportRow {
    /// Majority rows are labelled by the grade they predict (`All A`).
    pub fn new(spec: ModelSpec, preds: &LooPredictions) -> Self {
        let label = if spec.kind == models::ModelKind::MajorityBaseline {
            let mut counts = [0usize; 5];
            for g in preds.predicted() {
                counts[g.index()] += 1;
            }
            let mode = (0..5).rev().max_by_key(|&c| (counts[c], c)).unwrap();
            format!("All {}", Grade::ALL[mode])
        } else {
            spec.label().to_owned()
        };
        ReportRow { spec, label, report: EvalReport::from_predictions(preds) }
    }
}

/// Percentages to one decimal, everything else to three.
pub fn format_percent(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

/// Markdown metric table and distance table, rows in the fixed model order.
pub fn render_report(rows: &[ReportRow], normalized: bool) -> String {
    let mut rows: Vec<&ReportRow> = rows.iter().collect();
    rows.sort_by_key(|r| r.spec.report_rank());
    let input = if normalized { "normalized" } else { "non-normalized" };
    let mut out = String::new();
    let _ = writeln!(out, "## Performance for {input} input\n");
    let _ = writeln!(out, "| Model | Accuracy | Mean Square Error | Average Precision (Micro) | AUROC | f1 score |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in &rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.label,
            format_percent(m.accuracy),
            m.mse,
            m.micro_ap,
            m.auroc,
            m.f1_micro
        );
    }
    let _ = writeln!(out, "\n## Confusion by grade distance ({input} input)\n");
    let _ = writeln!(out, "| Difference | 0 | 1 | 2 | 3 | 4 |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in &rows {
        let h = &r.report.distance_histogram;
        let _ = writeln!(out, "| {} | {} | {} | {} | {} | {} |", r.label, h[0], h[1], h[2], h[3], h[4]);
    }
    out
}

/// `student_id,true_grade,predicted_grade,score_F,...,score_A`.
pub fn write_predictions<W: Write>(out: W, row_ids: &[String], preds: &LooPredictions) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["student_id", "true_grade", "predicted_grade", "score_F", "score_D", "score_C", "score_B", "score_A"])?;
    for (id, e) in row_ids.iter().zip(&preds.entries) {
        let mut rec = vec![id.clone(), e.true_grade.to_string(), e.outcome.grade.to_string()];
        rec.extend(e.outcome.class_scores.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(true_grade: Grade, grade: Grade, scores: [f64; 5]) -> LooEntry {
        LooEntry { true_grade, outcome: PredictionOutcome { grade, class_scores: scores }, fold: 0 }
    }

    fn preds(entries: Vec<LooEntry>) -> LooPredictions {
        LooPredictions { entries, non_converged_folds: Vec::new() }
    }

    fn all_a_cohort() -> LooPredictions {
        let counts = [(Grade::A, 119), (Grade::B, 72), (Grade::C, 22), (Grade::D, 10), (Grade::F, 26)];
        let mut scores = [0.0; 5];
        scores[Grade::A.index()] = 1.0;
        preds(
            counts
                .iter()
                .flat_map(|&(g, n)| std::iter::repeat_n(entry(g, Grade::A, scores), n))
                .collect(),
        )
    }

    #[test]
    fn all_a_metrics() {
        let p = all_a_cohort();
        assert_eq!(accuracy(&p), 119.0 / 249.0);
        assert_eq!(mse(&p), 666.0 / 249.0);
        assert_eq!(distance_histogram(&p), [119, 72, 22, 10, 26]);
        let r = EvalReport::from_predictions(&p);
        r.check_identities().unwrap();
        assert_eq!(format_percent(r.accuracy), "47.8%");
        assert_eq!(format!("{:.3}", r.mse), "2.675");
    }

    #[test]
    fn perfect_predictions() {
        let p = preds(Grade::ALL.iter().map(|&g| {
            let mut s = [0.0; 5];
            s[g.index()] = 1.0;
            entry(g, g, s)
        }).collect());
        let r = EvalReport::from_predictions(&p);
        assert_eq!((r.accuracy, r.mse, r.f1_micro, r.micro_ap), (1.0, 0.0, 1.0, 1.0));
        assert_eq!(r.distance_histogram, [5, 0, 0, 0, 0]);
        assert!(r.auroc_degenerate);
        assert_eq!(r.auroc, 0.5);
    }

    #[test]
    fn f_for_a_lands_in_bucket_four() {
        let p = preds(vec![entry(Grade::A, Grade::F, [1.0, 0.0, 0.0, 0.0, 0.0])]);
        assert_eq!(distance_histogram(&p), [0, 0, 0, 0, 1]);
    }

    #[test]
    fn ap_two_student_toy() {
        // the two true-class pairs rank first and second among ten
        let p = preds(vec![
            entry(Grade::A, Grade::A, [0.0, 0.1, 0.2, 0.3, 0.9]),
            entry(Grade::B, Grade::B, [0.0, 0.1, 0.2, 0.8, 0.3]),
        ]);
        assert_eq!(micro_average_precision(&p), 1.0);
    }

    #[test]
    fn ap_with_ties_uses_row_then_class_order() {
        let mut pairs = vec![(0.5, 1, 0, true), (0.5, 0, 1, false), (0.5, 0, 0, false)];
        // order: (0,0) miss, (0,1) miss, (1,0) hit at rank 3
        assert!((average_precision(&mut pairs) - 1.0 / 3.0).abs() < 1e-15);
    }

    fn pair_count_auroc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            for (j, &pj) in positive.iter().enumerate() {
                if pi && !pj {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / total
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let scores = [0.9, 0.8, 0.85];
        let labels = [true, true, false];
        let oracle = pair_count_auroc(&scores, &labels);
        assert_eq!(oracle, 0.5);
        assert_eq!(rank_auroc(&scores, &labels).value, oracle);

        let scores = [0.1, 0.4, 0.4, 0.4, 0.9, 0.2, 0.9];
        let labels = [false, true, false, true, true, false, false];
        assert!((rank_auroc(&scores, &labels).value - pair_count_auroc(&scores, &labels)).abs() < 1e-15);
    }

    #[test]
    fn auroc_separated() {
        assert_eq!(rank_auroc(&[0.9, 0.8, 0.1], &[true, true, false]).value, 1.0);
    }

    #[test]
    fn report_layout() {
        let p = all_a_cohort();
        let majority: ModelSpec = "majority".parse().unwrap();
        let knn: ModelSpec = "knn".parse().unwrap();
        let rows = vec![ReportRow::new(majority, &p), ReportRow::new(knn, &p)];
        let text = render_report(&rows, false);
        let knn_at = text.find("| KNN |").unwrap();
        let all_a_at = text.find("| All A |").unwrap();
        assert!(knn_at < all_a_at);
        assert!(text.contains("| All A | 47.8% | 2.675 |"));
        assert!(text.contains("| All A | 119 | 72 | 22 | 10 | 26 |"));
    }
}
