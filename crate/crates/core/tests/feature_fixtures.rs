//! Every feature value on the committed micro clickstream must match the
//! hand computation recorded in the fixture file: exactly for counts,
//! within 1e-9 for ratios.

use serde::Deserialize;

use edulens_core::clickstream::{parse_events, CourseSchedule, StudentLabel};
use edulens_core::features::{
    extract_features, feature_index, feature_names, impute_nan, ExtractOptions,
};

#[derive(Deserialize)]
struct Fixture {
    options: FixtureOptions,
    schedule: CourseSchedule,
    events_jsonl: Vec<String>,
    labels: Vec<StudentLabel>,
    expected_raw: Vec<ExpectedCell>,
    expected_per_feature_min: std::collections::BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct FixtureOptions {
    gap_threshold_sec: u64,
    full_watch_fraction: f64,
}

#[derive(Deserialize)]
struct ExpectedCell {
    student: String,
    week: usize,
    feature: String,
    value: Option<f64>,
    #[allow(dead_code)]
    note: String,
}

fn load() -> Fixture {
    let text = include_str!("fixtures/micro_course.json");
    serde_json::from_str(text).expect("fixture parses")
}

const COUNT_FEATURES: [&str; 5] = [
    "check-check-check-quiz",
    "distinct-probs-quiz",
    "play-stop-play-vid",
    "play-pause-load-vid",
    "pause-speedchange-play-vid",
];

#[test]
fn all_22_features_match_hand_computation() {
    let fixture = load();
    let jsonl = fixture.events_jsonl.join("\n");
    let events = parse_events(std::io::Cursor::new(jsonl), &fixture.schedule).unwrap();
    let options = ExtractOptions {
        gap_threshold_sec: fixture.options.gap_threshold_sec,
        full_watch_fraction: fixture.options.full_watch_fraction,
    };
    let raw = extract_features(&events, &fixture.schedule, &fixture.labels, &options).unwrap();

    // The fixture must cover every (student, week, feature) cell.
    assert_eq!(
        fixture.expected_raw.len(),
        fixture.labels.len() * fixture.schedule.weeks * feature_names().len()
    );

    let mut checked = 0;
    for cell in &fixture.expected_raw {
        let s = raw.student_index(&cell.student).expect("student exists");
        let f = feature_index(&cell.feature).expect("feature exists");
        let got = raw.get(s, cell.week, f);
        match cell.value {
            None => assert!(
                got.is_nan(),
                "{}/{} week {}: expected NaN, got {got}",
                cell.student,
                cell.feature,
                cell.week
            ),
            Some(want) => {
                if COUNT_FEATURES.contains(&cell.feature.as_str()) {
                    assert_eq!(
                        got, want,
                        "{}/{} week {} (count must be exact)",
                        cell.student, cell.feature, cell.week
                    );
                } else {
                    assert!(
                        (got - want).abs() <= 1e-9,
                        "{}/{} week {}: got {got}, want {want}",
                        cell.student,
                        cell.feature,
                        cell.week
                    );
                }
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 88, "2 students x 2 weeks x 22 features");
}

#[test]
fn imputation_mins_match_hand_computation() {
    let fixture = load();
    let jsonl = fixture.events_jsonl.join("\n");
    let events = parse_events(std::io::Cursor::new(jsonl), &fixture.schedule).unwrap();
    let options = ExtractOptions {
        gap_threshold_sec: fixture.options.gap_threshold_sec,
        full_watch_fraction: fixture.options.full_watch_fraction,
    };
    let raw = extract_features(&events, &fixture.schedule, &fixture.labels, &options).unwrap();
    let imputed = impute_nan(&raw);

    assert_eq!(fixture.expected_per_feature_min.len(), feature_names().len());
    for (name, want) in &fixture.expected_per_feature_min {
        let f = feature_index(name).expect("feature exists");
        assert!(
            (imputed.per_feature_min[f] - want).abs() <= 1e-9,
            "per_feature_min[{name}]: got {}, want {want}",
            imputed.per_feature_min[f]
        );
    }

    // Mask marks exactly the cells that were NaN in the raw matrix, and the
    // imputed value equals the feature minimum there.
    for cell in &fixture.expected_raw {
        let s = raw.student_index(&cell.student).unwrap();
        let f = feature_index(&cell.feature).unwrap();
        assert_eq!(imputed.imputed(s, cell.week, f), cell.value.is_none());
        if cell.value.is_none() {
            assert_eq!(imputed.get(s, cell.week, f), imputed.per_feature_min[f]);
        }
    }
    assert!(!imputed.has_nan());
}
