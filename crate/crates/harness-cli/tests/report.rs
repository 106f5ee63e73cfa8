use harness_cli::artifacts::MetricsRow;
use harness_cli::report::{compare_report, rank_sum_less, savitzky_golay, terminal_cost};
use harness_cli::ReportSection;
use proptest::prelude::*;

#[test]
fn smoothing_reproduces_quartic_polynomials() {
    let poly = |x: f64| 3.0 - 0.2 * x + 0.01 * x * x - 1e-4 * x.powi(3) + 2e-7 * x.powi(4);
    let y: Vec<f64> = (0..100).map(|i| poly(i as f64)).collect();
    let s = savitzky_golay(&y, 21, 4);
    for (a, b) in y.iter().zip(&s) {
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn smoothing_handles_short_series() {
    assert!(savitzky_golay(&[], 21, 4).is_empty());
    let s = savitzky_golay(&[1.0, 2.0, 3.0], 21, 4);
    for (a, b) in s.iter().zip([1.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn smoothing_damps_alternating_noise() {
    let y: Vec<f64> = (0..200).map(|i| 5.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let s = savitzky_golay(&y, 21, 4);
    assert!(s[20..180].iter().all(|v| (v - 5.0).abs() < 0.2));
}

#[test]
fn rank_sum_matches_reference_values() {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1., 2., 3., 4., 5., 6., 7., 8., 9., 10.], &[11., 12., 13., 14., 15., 16., 17., 18., 19., 20.], 9.133589555477501e-05),
        (&[1., 2., 2., 3., 5., 8.], &[2., 3., 4., 5., 9., 9., 10.], 0.06493249602075483),
        (&[3.1, 1.2, 5.5, 4.0, 2.2], &[2.5, 6.1, 4.4, 7.0, 5.0], 0.07183604090348011),
    ];
    for (a, b, p) in cases {
        assert!((rank_sum_less(a, b) - p).abs() < 1e-9 * p, "{} vs {p}", rank_sum_less(a, b));
    }
}

fn rows(method: &str, seed: u64, costs: &[f64]) -> Vec<MetricsRow> {
    costs
        .iter()
        .enumerate()
        .map(|(episode, &total_cost)| MetricsRow {
            episode,
            method: method.into(),
            seed,
            total_cost,
            steps: 1,
            theta: 1.0,
            mutual_information: 0.0,
            n_state_groups: 1,
            replay_size: 0,
        })
        .collect()
}

fn curve(seed: u64, offset: f64) -> Vec<f64> {
    (0..300).map(|k| offset + 50.0 / (1.0 + 0.05 * k as f64) + ((k as u64 * 7 + seed * 13) % 5) as f64).collect()
}

#[test]
fn identical_metric_sets_have_no_winner() {
    let mut m = Vec::new();
    for seed in 0..5 {
        m.extend(rows("a", seed, &curve(seed, 0.0)));
        m.extend(rows("b", seed, &curve(seed, 0.0)));
    }
    let report = compare_report(&m, &ReportSection::default()).unwrap();
    assert_eq!(report.rows[0].mean, report.rows[1].mean);
    assert_eq!(report.winner, None);
}

#[test]
fn constant_offset_shows_up_in_the_means() {
    let mut m = Vec::new();
    for seed in 0..8 {
        m.extend(rows("low", seed, &curve(seed, 0.0)));
        m.extend(rows("high", seed, &curve(seed, 10.0)));
    }
    let report = compare_report(&m, &ReportSection::default()).unwrap();
    assert_eq!(report.rows[0].method, "low");
    assert!((report.rows[1].mean - report.rows[0].mean - 10.0).abs() < 0.1);
    assert_eq!(report.winner.as_deref(), Some("low"));
    assert!(report.rows[1].p_value.unwrap() < 0.05);
}

#[test]
fn five_methods_are_sorted_by_cost() {
    let mut m = Vec::new();
    for (i, name) in ["e", "c", "a", "d", "b"].iter().enumerate() {
        for seed in 0..3 {
            m.extend(rows(name, seed, &curve(seed, i as f64 * 3.0)));
        }
    }
    let report = compare_report(&m, &ReportSection::default()).unwrap();
    let order: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(order, vec!["e", "c", "a", "d", "b"]);
    assert!(report.rows.windows(2).all(|w| w[0].mean <= w[1].mean));
    assert!(report.to_table().contains("winner"));
}

#[test]
fn mismatched_budgets_are_rejected() {
    let mut m = rows("a", 0, &[1.0; 30]);
    m.extend(rows("b", 0, &[1.0; 40]));
    assert!(compare_report(&m, &ReportSection::default()).is_err());
    assert!(compare_report(&rows("a", 0, &[1.0; 30]), &ReportSection::default()).is_err());
}

#[test]
fn terminal_cost_of_a_constant_curve() {
    assert!((terminal_cost(&[4.0; 500], &ReportSection::default()) - 4.0).abs() < 1e-10);
}

proptest! {
    #[test]
    fn smoothing_is_linear_and_preserves_length(
        y in prop::collection::vec(-100.0..100.0f64, 0..80), c in -5.0..5.0f64,
    ) {
        let s = savitzky_golay(&y, 21, 4);
        prop_assert_eq!(s.len(), y.len());
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let t = savitzky_golay(&shifted, 21, 4);
        for (a, b) in s.iter().zip(&t) {
            prop_assert!((b - a - c).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_sum_p_values_are_probabilities(
        a in prop::collection::vec(0.0..10.0f64, 1..20), b in prop::collection::vec(0.0..10.0f64, 1..20),
    ) {
        let p = rank_sum_less(&a, &b);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
