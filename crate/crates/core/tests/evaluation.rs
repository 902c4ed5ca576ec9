mod common;

use chrono::{TimeZone, Utc};
use common::{brute_force_buckets, mode_scores, rng, synthetic_scores, Class};
use histostyle::evaluation::{
    aggregate_report, categorize_images, histograms, image_summaries, intensity_map, parse_scores,
    serialize_scores, Impact, ReportOptions, ScoreRecord, CSV_HEADER,
};
use histostyle::image::ColorMode;
use histostyle::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn impact_index(c: Class) -> usize {
    (c + 1) as usize
}

#[test]
fn categories_match_the_design() {
    let (records, design) = synthetic_scores(5);
    assert_eq!(records.len(), 500);
    let got = categorize_images(&records);

    let mut joint = [[0u64; 3]; 3];
    for (r, a) in design.values() {
        joint[impact_index(*r)][impact_index(*a)] += 1;
    }
    assert_eq!(got.joint, joint);
    let buckets = [
        got.both_positive,
        got.only_removed_positive,
        got.only_added_positive,
        got.only_removed_negative,
        got.only_added_negative,
        got.both_negative,
    ];
    assert_eq!(buckets, brute_force_buckets(&design));
    assert_eq!(buckets, [70, 11, 9, 6, 7, 3]);
}

#[test]
fn image_summaries_agree_with_float_means() {
    let (records, design) = synthetic_scores(6);
    let summaries = image_summaries(&records);
    assert_eq!(summaries.len(), 100);
    for s in &summaries {
        let (r, a) = design[&s.image_id];
        let as_impact =
            |c: Class| [Impact::Negative, Impact::Neutral, Impact::Positive][impact_index(c)];
        assert_eq!(s.removed_artifacts, as_impact(r), "{}", s.image_id);
        assert_eq!(s.added_structures, as_impact(a), "{}", s.image_id);
        assert_eq!(s.ratings, 5);
        let mine: Vec<&ScoreRecord> = records
            .iter()
            .filter(|x| x.image_id == s.image_id)
            .collect();
        let mean = mine.iter().map(|x| x.removed_artifacts as f64).sum::<f64>() / 5.0;
        assert!((s.mean_removed_artifacts - mean).abs() < 1e-12);
    }
}

#[test]
fn intensity_map_matches_brute_force() {
    let (records, _) = synthetic_scores(7);
    let map = intensity_map(&records);
    for a in 0..7u8 {
        for r in 0..7u8 {
            let want = records
                .iter()
                .filter(|x| x.added_structures == a && x.removed_artifacts == r)
                .count() as u64;
            assert_eq!(map.counts[a as usize][r as usize], want);
        }
    }
    assert_eq!(map.total(), records.len() as u64);
    let h = histograms(&records);
    assert_eq!(h.removed_artifacts.iter().sum::<u64>(), 500);
    assert_eq!(h.added_structures.iter().sum::<u64>(), 500);
}

#[test]
fn planted_mode_is_found() {
    let records = mode_scores(8);
    assert_eq!(intensity_map(&records).mode(), Some((5, 4)));
    let report = aggregate_report(&records, ReportOptions::default());
    assert_eq!(report.overall.intensity_mode, Some([5, 4]));
}

#[test]
fn small_intensity_example() {
    let mk = |a, r, img: &str| ScoreRecord {
        rater_id: "r".into(),
        image_id: img.into(),
        color_mode: ColorMode::Gray,
        removed_artifacts: r,
        added_structures: a,
        timestamp: Utc.timestamp_millis_opt(0).unwrap(),
    };
    let map = intensity_map(&[mk(5, 4, "a"), mk(5, 4, "b"), mk(5, 5, "c")]);
    assert_eq!(map.counts[5][4], 2);
    assert_eq!(map.counts[5][5], 1);
    assert_eq!(map.total(), 3);
    assert_eq!(intensity_map(&[]).total(), 0);
    assert_eq!(intensity_map(&[]).mode(), None);
}

#[test]
fn report_is_order_invariant() {
    let (mut records, _) = synthetic_scores(9);
    let options = ReportOptions { welch: true };
    let base = aggregate_report(&records, options);
    let base_json = serde_json::to_string(&base).unwrap();
    let mut r = rng(10);
    for _ in 0..5 {
        records.shuffle(&mut r);
        let again = aggregate_report(&records, options);
        assert_eq!(again, base);
        assert_eq!(serde_json::to_string(&again).unwrap(), base_json);
    }
}

#[test]
fn report_totals_are_consistent() {
    let (records, _) = synthetic_scores(11);
    let report = aggregate_report(&records, ReportOptions::default());
    assert_eq!(report.record_count, 500);
    assert_eq!(report.image_count, 100);
    assert_eq!(report.rater_count, 5);
    assert_eq!(report.per_color_mode.len(), 4);
    let per_mode: u64 = report.per_color_mode.values().map(|g| g.record_count).sum();
    assert_eq!(per_mode, 500);
    for g in report.per_color_mode.values() {
        assert_eq!(g.intensity_map.total(), g.record_count);
        assert_eq!(
            g.histograms.added_structures.iter().sum::<u64>(),
            g.record_count
        );
    }
    let chi = &report.overall.tests.removed_artifacts;
    assert_eq!(chi.per_rating_counts.iter().sum::<u64>(), 500);
    assert_eq!(chi.per_image_counts.iter().sum::<u64>(), 100);
    // 70 + 6 + 5 images have a positive removed-artifacts mean.
    assert_eq!(chi.per_image_counts, [81, 19]);
    assert!(report.overall.tests.paired_t.result().is_some());
    assert!(report.overall.tests.welch_t.is_none());
}

#[test]
fn scores_out_of_range_report_the_row() {
    let csv = format!(
        "{CSV_HEADER}\nr1,i1,gray,3,4,2024-01-01T00:00:00.000Z\nr1,i2,gray,7,4,2024-01-01T00:00:00.000Z\n"
    );
    match parse_scores(csv.as_bytes()).unwrap_err() {
        Error::Validation { row, field, .. } => {
            assert_eq!(row, 2);
            assert_eq!(field, "removed_artifacts");
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn duplicate_pairs_are_rejected() {
    let csv = format!(
        "{CSV_HEADER}\nr1,i1,gray,3,4,2024-01-01T00:00:00.000Z\nr1,i1,red,2,4,2024-01-01T00:00:01.000Z\n"
    );
    assert!(matches!(
        parse_scores(csv.as_bytes()).unwrap_err(),
        Error::Duplicate { row: 2, .. }
    ));
}

#[test]
fn header_only_is_empty() {
    assert!(parse_scores(format!("{CSV_HEADER}\n").as_bytes())
        .unwrap()
        .is_empty());
    assert!(parse_scores(b"a,b,c\n").is_err());
}

fn record_strategy() -> impl Strategy<Value = ScoreRecord> {
    (
        "[a-zA-Z0-9_, \"-]{1,12}",
        "[a-zA-Z0-9_.-]{1,12}",
        0usize..4,
        0u8..=6,
        0u8..=6,
        0i64..4_000_000_000_000,
    )
        .prop_map(|(rater, image, mode, removed, added, ms)| ScoreRecord {
            rater_id: rater,
            image_id: image,
            color_mode: ColorMode::ALL[mode],
            removed_artifacts: removed,
            added_structures: added,
            timestamp: Utc.timestamp_millis_opt(ms).unwrap(),
        })
}

proptest! {
    #[test]
    fn csv_round_trips(records in prop::collection::vec(record_strategy(), 0..40)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<ScoreRecord> = records
            .into_iter()
            .filter(|r| seen.insert((r.rater_id.clone(), r.image_id.clone())))
            .collect();
        let bytes = serialize_scores(&records);
        prop_assert_eq!(parse_scores(&bytes).unwrap(), records);
    }

    #[test]
    fn categories_are_order_invariant(seed in any::<u64>()) {
        let (mut records, _) = synthetic_scores(seed % 1000);
        let before = categorize_images(&records);
        records.shuffle(&mut rng(seed));
        prop_assert_eq!(categorize_images(&records), before);
    }
}
