mod common;

use gradecast::features::{column_layout, FeatureGroup, FeatureMatrix};
use gradecast::ingest::Grade;
use gradecast::selection::{apply_variance_threshold, minmax_normalize, threshold_sweep, Preprocessor, Thresholds, SWEEP_GRID};
use gradecast::{Matrix, ModelSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

fn permuted(fm: &FeatureMatrix, order: &[usize]) -> FeatureMatrix {
    FeatureMatrix {
        row_ids: order.iter().map(|&i| fm.row_ids[i].clone()).collect(),
        columns: fm.columns.clone(),
        values: fm.values.select_rows(order),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_bounded_and_idempotent(seed in any::<u64>(), rows in 1usize..12, q in 1usize..6) {
        let mut r = rng(seed);
        let fm = random_feature_matrix(&mut r, rows, q);
        let t = SWEEP_GRID[r.random_range(0..4)];
        let once = minmax_normalize(&fm, &apply_variance_threshold(&fm, t).unwrap());
        prop_assert!(once.values.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let all_kept = apply_variance_threshold(&once, Thresholds::new(0.0, 0.0)).unwrap();
        // a second pass keeps exactly the non-constant columns and leaves
        // their values unchanged
        let twice = minmax_normalize(&once, &all_kept);
        for (k, &j) in all_kept.kept_indices().iter().enumerate() {
            prop_assert_eq!(twice.values.column(k), once.values.column(j));
        }
    }

    #[test]
    fn preparation_commutes_with_row_permutation(seed in any::<u64>(), rows in 2usize..12, q in 1usize..6) {
        let mut r = rng(seed);
        let fm = random_feature_matrix(&mut r, rows, q);
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut r);
        let t = SWEEP_GRID[r.random_range(0..4)];
        let all: Vec<usize> = (0..rows).collect();
        let a = Preprocessor::fit(&fm, &all, t, true).unwrap();
        let shuffled = permuted(&fm, &order);
        let b = Preprocessor::fit(&shuffled, &all, t, true).unwrap();
        prop_assert_eq!(a.kept(), b.kept());
        prop_assert_eq!(a.transform(&fm.values).select_rows(&order), b.transform(&shuffled.values));
    }
}

#[test]
fn non_question_blocks_always_kept() {
    let mut r = rng(11);
    let fm = random_feature_matrix(&mut r, 6, 4);
    let mask = apply_variance_threshold(&fm, Thresholds::new(100.0, 100.0)).unwrap();
    assert_eq!(mask.kept_count(), 13);
    for g in [FeatureGroup::ResponseTime, FeatureGroup::SessionsPerAssignment, FeatureGroup::Scores] {
        assert_eq!(mask.kept_in_group(&fm, g), fm.group_columns(g).count());
    }
}

#[test]
fn negative_threshold_is_rejected() {
    let mut r = rng(12);
    let fm = random_feature_matrix(&mut r, 3, 2);
    assert!(apply_variance_threshold(&fm, Thresholds::new(-0.1, 0.0)).is_err());
    assert!("0.02,x".parse::<Thresholds>().is_err());
    assert_eq!("0.03,0.07".parse::<Thresholds>().unwrap(), Thresholds::new(0.03, 0.07));
}

/// 30% of the questions are solved by everyone on the first try, so their
/// performance and submission columns are constant.
fn cohort_with_trivial_questions(rows: usize, q: usize) -> (FeatureMatrix, Vec<Grade>) {
    let mut r = rng(13);
    let labels = random_grades(&mut r, rows);
    let trivial = (q * 3) / 10;
    let mut values = Matrix::zeros(rows, 2 * q + 13);
    for i in 0..rows {
        let skill = labels[i].value() as f64 / 5.0;
        for j in 0..q {
            let (perf, subs) = if j < trivial {
                (1.0, 1.0)
            } else {
                let solved = r.random::<f64>() < skill;
                (f64::from(u8::from(solved)), f64::from(r.random_range(1..4u8)))
            };
            values.set(i, j, perf);
            values.set(i, q + j, subs);
        }
        for j in 2 * q..2 * q + 13 {
            values.set(i, j, skill * 100.0 + r.random_range(-5.0..5.0));
        }
    }
    let fm = FeatureMatrix { row_ids: (0..rows).map(|i| format!("s{i}")).collect(), columns: column_layout(q), values };
    (fm, labels)
}

#[test]
fn sweep_drops_constant_questions() {
    let (fm, labels) = cohort_with_trivial_questions(30, 20);
    let result = threshold_sweep(&fm, &labels, &"knn".parse::<ModelSpec>().unwrap(), false, false).unwrap();
    assert_eq!(result.accuracies.iter().map(|(t, _)| *t).collect::<Vec<_>>(), SWEEP_GRID);
    let mask = apply_variance_threshold(&fm, result.winner).unwrap();
    let question_columns = mask.kept_count() - 13;
    assert!(question_columns < 2 * 20, "{question_columns}");
    // the brute-force count for the winner agrees
    let expected = (0..40)
        .filter(|&j| {
            let limit = if j < 20 { result.winner.t_perf } else { result.winner.t_subs };
            naive_variance(&fm.values.column(j)) > limit + 1e-12
        })
        .count();
    assert_eq!(question_columns, expected);
}

#[test]
fn sweep_ties_go_to_smallest_thresholds() {
    let (fm, labels) = cohort_with_trivial_questions(12, 10);
    let result = threshold_sweep(&fm, &labels, &"majority".parse::<ModelSpec>().unwrap(), false, false).unwrap();
    assert!(result.accuracies.iter().all(|(_, a)| *a == result.accuracies[0].1));
    assert_eq!(result.winner, Thresholds::new(0.0, 0.0));
}
