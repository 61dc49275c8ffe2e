//! Weekly feature extraction from a validated clickstream.
//!
//! Conventions shared by all features:
//!
//! * An event's week is `assign_week(timestamp)`.
//! * *Active time* is the sum of gaps between consecutive same-student events
//!   with gap <= `gap_threshold_sec`, attributed to the family (video/quiz)
//!   of the earlier event and to the earlier event's week. Gaps following a
//!   quiz submission are additionally attributed to that quiz object.
//! * *Watched time* of a video accrues from a play event until the next
//!   pause/stop/load, the next play (which moves the accrual to its video),
//!   or the end of the session; seek, speed, and quiz events do not interrupt
//!   it. Each inter-event segment lands in the week of its starting event.
//! * "Watched fully" means cumulative watched time through the given week
//!   reaches `full_watch_fraction` of the video duration.
//! * Sessions (and their durations) belong to the week of their first event;
//!   action trigrams belong to the week of their first event.
//! * Weekend days are days 5 and 6 of every 7-day block from course start.
//! * A week with no events yields 0 for count features and NaN for
//!   ratio/statistic features; the two cumulative features (total-time-vid,
//!   attendance-rate) always carry their cumulative values.

use std::collections::{BTreeMap, BTreeSet};

use crate::clickstream::{
    sessionize, Action, CourseSchedule, Interaction, ObjectKind, Payload, StudentLabel,
    validate_course, DEFAULT_GAP_THRESHOLD_SEC,
};
use crate::error::{CoreError, Result};
use crate::features::{feature_names, FeatureMatrix, FEATURE_COUNT};

/// Extraction knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    /// Session gap threshold and active-time cap, in seconds.
    pub gap_threshold_sec: u64,
    /// Fraction of a video's duration that counts as "watched fully".
    pub full_watch_fraction: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            gap_threshold_sec: DEFAULT_GAP_THRESHOLD_SEC,
            full_watch_fraction: 0.9,
        }
    }
}

/// Compute the raw (pre-imputation) feature matrix: one value per
/// (student, week, feature), NaN where a feature is undefined.
///
/// Students appear in label order. The dataset must be consistent
/// ([`validate_course`] returns no findings) and events must be sorted by
/// (student_id, timestamp), as [`crate::clickstream::parse_events`] produces.
pub fn extract_features(
    events: &[Interaction],
    schedule: &CourseSchedule,
    labels: &[StudentLabel],
    options: &ExtractOptions,
) -> Result<FeatureMatrix> {
    schedule.check_structure()?;
    let report = validate_course(schedule, events, labels);
    if !report.is_consistent() {
        return Err(CoreError::InconsistentDataset(format!(
            "{} finding(s), first: {}",
            report.findings.len(),
            report.findings[0]
        )));
    }
    if options.gap_threshold_sec == 0 {
        return Err(CoreError::invalid("gap_threshold_sec must be positive"));
    }
    if !(options.full_watch_fraction > 0.0 && options.full_watch_fraction <= 1.0) {
        return Err(CoreError::invalid("full_watch_fraction must be in (0,1]"));
    }

    let students: Vec<String> = labels.iter().map(|l| l.student_id.clone()).collect();
    let mut matrix = FeatureMatrix::new_raw(students.clone(), schedule.weeks, feature_names());

    // Events arrive sorted by (student, t); walk the per-student slices.
    let mut by_student: BTreeMap<&str, &[Interaction]> = BTreeMap::new();
    let mut begin = 0usize;
    for i in 1..=events.len() {
        if i == events.len() || events[i].student_id != events[begin].student_id {
            by_student.insert(events[begin].student_id.as_str(), &events[begin..i]);
            begin = i;
        }
    }

    for (s_idx, student_id) in students.iter().enumerate() {
        let slice = by_student.get(student_id.as_str()).copied().unwrap_or(&[]);
        let per_week = student_features(slice, schedule, options)?;
        for w in 0..schedule.weeks {
            for f in 0..FEATURE_COUNT {
                matrix.set(s_idx, w, f, per_week[w][f]);
            }
        }
    }
    Ok(matrix)
}

/// Scratch tallies for one student, indexed by week.
struct Tally<'a> {
    weeks: usize,
    course_weeks_f: f64,
    events_in_week: Vec<usize>,
    active_video: Vec<u64>,
    active_quiz: Vec<u64>,
    /// (week, quiz id) -> active seconds attributed to that quiz.
    quiz_time: BTreeMap<(usize, &'a str), u64>,
    /// (video id) -> per-week watched seconds.
    watched: BTreeMap<&'a str, Vec<u64>>,
    session_durations: Vec<Vec<u64>>,
    ccc_quiz: Vec<u64>,
    play_stop_play: Vec<u64>,
    play_pause_load: Vec<u64>,
    pause_speed_play: Vec<u64>,
    loads: Vec<BTreeSet<&'a str>>,
    played: Vec<BTreeSet<&'a str>>,
    opened: Vec<BTreeSet<&'a str>>,
    submits: Vec<u64>,
    distinct_quizzes: Vec<BTreeSet<&'a str>>,
    corrects: Vec<u64>,
    quiz_corrects: BTreeMap<(usize, &'a str), u64>,
    seek_lens: Vec<Vec<f64>>,
    plays: Vec<u64>,
    pauses: Vec<u64>,
    speeds: Vec<Vec<f64>>,
    weekend_clicks: Vec<u64>,
    weekday_clicks: Vec<u64>,
    /// (week, day) -> 24-bin hour histogram.
    day_hists: BTreeMap<(usize, u64), [u32; 24]>,
    video_activity: Vec<bool>,
    first_view: BTreeMap<&'a str, usize>,
}

impl<'a> Tally<'a> {
    fn new(weeks: usize) -> Tally<'a> {
        Tally {
            weeks,
            course_weeks_f: weeks as f64,
            events_in_week: vec![0; weeks],
            active_video: vec![0; weeks],
            active_quiz: vec![0; weeks],
            quiz_time: BTreeMap::new(),
            watched: BTreeMap::new(),
            session_durations: vec![Vec::new(); weeks],
            ccc_quiz: vec![0; weeks],
            play_stop_play: vec![0; weeks],
            play_pause_load: vec![0; weeks],
            pause_speed_play: vec![0; weeks],
            loads: vec![BTreeSet::new(); weeks],
            played: vec![BTreeSet::new(); weeks],
            opened: vec![BTreeSet::new(); weeks],
            submits: vec![0; weeks],
            distinct_quizzes: vec![BTreeSet::new(); weeks],
            corrects: vec![0; weeks],
            quiz_corrects: BTreeMap::new(),
            seek_lens: vec![Vec::new(); weeks],
            plays: vec![0; weeks],
            pauses: vec![0; weeks],
            speeds: vec![Vec::new(); weeks],
            weekend_clicks: vec![0; weeks],
            weekday_clicks: vec![0; weeks],
            day_hists: BTreeMap::new(),
            video_activity: vec![false; weeks],
            first_view: BTreeMap::new(),
        }
    }
}

fn student_features(
    events: &[Interaction],
    schedule: &CourseSchedule,
    options: &ExtractOptions,
) -> Result<Vec<[f64; FEATURE_COUNT]>> {
    let weeks = schedule.weeks;
    let mut t = Tally::new(weeks);
    let durations: BTreeMap<&str, u64> = schedule
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Video)
        .map(|o| (o.object_id.as_str(), o.duration_sec.unwrap_or(0).max(1)))
        .collect();

    // Per-event tallies.
    for e in events {
        let w = schedule.assign_week(e.timestamp);
        t.events_in_week[w] += 1;
        let day = e.timestamp / 86_400;
        let hour = ((e.timestamp % 86_400) / 3_600) as usize;
        if day % 7 >= 5 {
            t.weekend_clicks[w] += 1;
        } else {
            t.weekday_clicks[w] += 1;
        }
        t.day_hists.entry((w, day)).or_insert([0; 24])[hour] += 1;
        t.first_view.entry(e.object_id.as_str()).or_insert(w);
        if e.action.is_video() {
            t.video_activity[w] = true;
            t.opened[w].insert(e.object_id.as_str());
        }
        match e.action {
            Action::VideoLoad => {
                t.loads[w].insert(e.object_id.as_str());
            }
            Action::VideoPlay => {
                t.plays[w] += 1;
                t.played[w].insert(e.object_id.as_str());
            }
            Action::VideoPause => t.pauses[w] += 1,
            Action::VideoSeek => {
                if let Payload::Seek { seek_from, seek_to } = e.payload {
                    t.seek_lens[w].push((seek_to - seek_from).abs());
                }
            }
            Action::VideoSpeedChange => {
                if let Payload::Speed { new_speed } = e.payload {
                    t.speeds[w].push(new_speed);
                }
            }
            Action::QuizSubmit => {
                t.submits[w] += 1;
                t.distinct_quizzes[w].insert(e.object_id.as_str());
                if let Payload::Quiz { correct: true } = e.payload {
                    t.corrects[w] += 1;
                    *t.quiz_corrects.entry((w, e.object_id.as_str())).or_insert(0) += 1;
                }
            }
            Action::VideoStop => {}
        }
    }

    // Active-time attribution over consecutive event pairs.
    for pair in events.windows(2) {
        let gap = pair[1].timestamp - pair[0].timestamp;
        if gap > options.gap_threshold_sec {
            continue;
        }
        let w = schedule.assign_week(pair[0].timestamp);
        if pair[0].action.is_quiz() {
            t.active_quiz[w] += gap;
            *t.quiz_time.entry((w, pair[0].object_id.as_str())).or_insert(0) += gap;
        } else {
            t.active_video[w] += gap;
        }
    }

    // Session-scoped tallies: durations, trigrams, watched time.
    let sessions = sessionize(events, options.gap_threshold_sec)?;
    for session in &sessions {
        let sw = schedule.assign_week(session.start);
        t.session_durations[sw].push(session.duration());
        let ev = session.events(events);
        for win in ev.windows(3) {
            let (a, b, c) = (win[0].action, win[1].action, win[2].action);
            let w = schedule.assign_week(win[0].timestamp);
            if a == Action::QuizSubmit && b == Action::QuizSubmit && c == Action::QuizSubmit {
                t.ccc_quiz[w] += 1;
            }
            if a == Action::VideoPlay && b == Action::VideoStop && c == Action::VideoPlay {
                t.play_stop_play[w] += 1;
            }
            if a == Action::VideoPlay && b == Action::VideoPause && c == Action::VideoLoad {
                t.play_pause_load[w] += 1;
            }
            if a == Action::VideoPause && b == Action::VideoSpeedChange && c == Action::VideoPlay {
                t.pause_speed_play[w] += 1;
            }
        }
        // Watching state machine across the session's inter-event segments.
        let mut watching: Option<&str> = match ev[0].action {
            Action::VideoPlay => Some(ev[0].object_id.as_str()),
            _ => None,
        };
        for i in 1..ev.len() {
            if let Some(vid) = watching {
                let seg_week = schedule.assign_week(ev[i - 1].timestamp);
                let seg = ev[i].timestamp - ev[i - 1].timestamp;
                t.watched.entry(vid).or_insert_with(|| vec![0; weeks])[seg_week] += seg;
            }
            watching = match ev[i].action {
                Action::VideoPlay => Some(ev[i].object_id.as_str()),
                Action::VideoPause | Action::VideoStop | Action::VideoLoad => None,
                _ => watching,
            };
        }
    }

    Ok(compose(&t, schedule, options, &durations))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn cosine(a: &[u32; 24], b: &[u32; 24]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn compose(
    t: &Tally<'_>,
    schedule: &CourseSchedule,
    options: &ExtractOptions,
    durations: &BTreeMap<&str, u64>,
) -> Vec<[f64; FEATURE_COUNT]> {
    let weeks = t.weeks;
    let mut out = vec![[f64::NAN; FEATURE_COUNT]; weeks];

    // Cumulative helpers.
    let mut cum_video_time = 0u64;
    let mut cum_played: BTreeSet<&str> = BTreeSet::new();
    let mut released: BTreeSet<&str> = BTreeSet::new();
    // Cumulative watched seconds per video through the end of each week.
    let mut cum_watched: BTreeMap<&str, u64> = BTreeMap::new();

    for w in 0..weeks {
        cum_video_time += t.active_video[w];
        cum_played.extend(t.played[w].iter().copied());
        released.extend(
            schedule
                .objects
                .iter()
                .filter(|o| o.kind == ObjectKind::Video && o.scheduled_week == w)
                .map(|o| o.object_id.as_str()),
        );
        for (vid, by_week) in &t.watched {
            *cum_watched.entry(vid).or_insert(0) += by_week[w];
        }

        let active_week = t.events_in_week[w] > 0;
        let row = &mut out[w];

        // Effort ------------------------------------------------------------
        row[0] = t.ccc_quiz[w] as f64;
        row[1] = if t.corrects[w] > 0 {
            t.active_quiz[w] as f64 / t.corrects[w] as f64
        } else {
            f64::NAN
        };
        row[2] = t.distinct_quizzes[w].len() as f64;
        row[3] = if !t.distinct_quizzes[w].is_empty() {
            t.submits[w] as f64 / t.distinct_quizzes[w].len() as f64
        } else {
            f64::NAN
        };
        row[4] = cum_video_time as f64;

        // Regularity ----------------------------------------------------------
        row[5] = if !t.loads[w].is_empty() {
            let fully = t.loads[w]
                .iter()
                .filter(|vid| {
                    let watched = *cum_watched.get(*vid).unwrap_or(&0);
                    let dur = *durations.get(*vid).unwrap_or(&1);
                    watched as f64 >= options.full_watch_fraction * dur as f64
                })
                .count();
            fully as f64 / t.loads[w].len() as f64
        } else {
            f64::NAN
        };
        // Early views of not-yet-released videos do not count toward
        // attendance until their release week, keeping the rate in [0,1].
        row[6] = if !released.is_empty() {
            let attended = cum_played.intersection(&released).count();
            attended as f64 / released.len() as f64
        } else {
            f64::NAN
        };
        row[7] = if active_week {
            let hists: Vec<&[u32; 24]> = t
                .day_hists
                .range((w, 0)..(w + 1, 0))
                .map(|(_, h)| h)
                .collect();
            if hists.len() < 2 {
                0.0
            } else {
                let mut sims = Vec::new();
                for i in 0..hists.len() {
                    for j in i + 1..hists.len() {
                        sims.push(cosine(hists[i], hists[j]));
                    }
                }
                mean(&sims)
            }
        } else {
            f64::NAN
        };
        row[8] = {
            let ratios: Vec<f64> = t.opened[w]
                .iter()
                .map(|vid| {
                    let watched = t.watched.get(vid).map_or(0, |by| by[w]);
                    let dur = *durations.get(vid).unwrap_or(&1);
                    (watched as f64 / dur as f64).min(1.0)
                })
                .collect();
            mean(&ratios)
        };
        row[9] = {
            let durs: Vec<f64> = t.session_durations[w].iter().map(|d| *d as f64).collect();
            population_std(&durs)
        };

        // Proactivity ---------------------------------------------------------
        let eager = |kind: ObjectKind| -> f64 {
            let vals: Vec<f64> = schedule
                .objects
                .iter()
                .filter(|o| o.kind == kind)
                .filter_map(|o| {
                    let fv = *t.first_view.get(o.object_id.as_str())?;
                    (fv == w && fv <= o.scheduled_week)
                        .then(|| (o.scheduled_week - fv) as f64 / t.course_weeks_f)
                })
                .collect();
            mean(&vals)
        };
        row[10] = eager(ObjectKind::Video);
        row[11] = if active_week {
            let scheduled: Vec<&str> = schedule
                .objects
                .iter()
                .filter(|o| o.kind == ObjectKind::Video && o.scheduled_week == w)
                .map(|o| o.object_id.as_str())
                .collect();
            if scheduled.is_empty() {
                f64::NAN
            } else {
                let timely = scheduled
                    .iter()
                    .filter(|vid| t.first_view.get(**vid) == Some(&w))
                    .count();
                timely as f64 / scheduled.len() as f64
            }
        } else {
            f64::NAN
        };
        row[12] = eager(ObjectKind::Quiz);
        row[13] = if t.weekday_clicks[w] > 0 {
            t.weekend_clicks[w] as f64 / t.weekday_clicks[w] as f64
        } else {
            f64::NAN
        };
        row[14] = {
            let vals: Vec<f64> = t.distinct_quizzes[w]
                .iter()
                .filter_map(|q| {
                    let correct = *t.quiz_corrects.get(&(w, *q)).unwrap_or(&0);
                    if correct == 0 {
                        return None;
                    }
                    let time = *t.quiz_time.get(&(w, *q)).unwrap_or(&0);
                    Some(time as f64 / correct as f64)
                })
                .collect();
            population_std(&vals)
        };

        // Control -------------------------------------------------------------
        row[15] = mean(&t.seek_lens[w]);
        row[16] = if t.active_video[w] > 0 {
            t.pauses[w] as f64 * 3600.0 / t.active_video[w] as f64
        } else {
            f64::NAN
        };
        row[17] = {
            let session_time: u64 = t.session_durations[w].iter().sum();
            if session_time > 0 {
                t.plays[w] as f64 * 3600.0 / session_time as f64
            } else {
                f64::NAN
            }
        };
        row[18] = t.play_stop_play[w] as f64;
        row[19] = t.play_pause_load[w] as f64;
        row[20] = t.pause_speed_play[w] as f64;
        row[21] = if !t.speeds[w].is_empty() {
            mean(&t.speeds[w])
        } else if t.video_activity[w] {
            1.0
        } else {
            f64::NAN
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clickstream::{LearningObject, StudentLabel};

    fn schedule() -> CourseSchedule {
        CourseSchedule {
            course_id: "t".into(),
            weeks: 2,
            seconds_per_week: 604_800,
            objects: vec![
                LearningObject {
                    object_id: "v1".into(),
                    kind: ObjectKind::Video,
                    scheduled_week: 0,
                    duration_sec: Some(100),
                },
                LearningObject {
                    object_id: "q1".into(),
                    kind: ObjectKind::Quiz,
                    scheduled_week: 0,
                    duration_sec: None,
                },
                LearningObject {
                    object_id: "q2".into(),
                    kind: ObjectKind::Quiz,
                    scheduled_week: 0,
                    duration_sec: None,
                },
            ],
            metadata: None,
        }
    }

    fn submit(t: u64, obj: &str, correct: bool) -> Interaction {
        Interaction {
            student_id: "s".into(),
            timestamp: t,
            action: Action::QuizSubmit,
            object_id: obj.into(),
            payload: Payload::Quiz { correct },
        }
    }

    fn label() -> Vec<StudentLabel> {
        vec![StudentLabel {
            student_id: "s".into(),
            passed: true,
        }]
    }

    #[test]
    fn empty_week_zero_counts_nan_ratios() {
        let events = vec![submit(10, "q1", true)];
        let m = extract_features(&events, &schedule(), &label(), &ExtractOptions::default()).unwrap();
        // Week 1 has no events.
        let f = |name: &str| m.get(0, 1, crate::features::feature_index(name).unwrap());
        assert_eq!(f("check-check-check-quiz"), 0.0);
        assert!(f("watch-ratio-vid").is_nan());
        assert!(f("num-submit-quiz").is_nan());
    }

    #[test]
    fn distinct_and_num_submit_hand_trace() {
        let events = vec![
            submit(10, "q1", false),
            submit(20, "q1", true),
            submit(30, "q2", true),
        ];
        let m = extract_features(&events, &schedule(), &label(), &ExtractOptions::default()).unwrap();
        let f = |name: &str| m.get(0, 0, crate::features::feature_index(name).unwrap());
        assert_eq!(f("distinct-probs-quiz"), 2.0);
        assert_eq!(f("num-submit-quiz"), 1.5);
    }

    #[test]
    fn ccc_quiz_sliding_window() {
        let three = vec![
            submit(10, "q1", false),
            submit(20, "q1", false),
            submit(30, "q1", true),
        ];
        let m = extract_features(&three, &schedule(), &label(), &ExtractOptions::default()).unwrap();
        assert_eq!(m.get(0, 0, 0), 1.0);

        let four = vec![
            submit(10, "q1", false),
            submit(20, "q1", false),
            submit(30, "q1", false),
            submit(40, "q1", true),
        ];
        let m = extract_features(&four, &schedule(), &label(), &ExtractOptions::default()).unwrap();
        assert_eq!(m.get(0, 0, 0), 2.0);
    }

    #[test]
    fn inconsistent_dataset_rejected() {
        // Event student has no label.
        let events = vec![submit(10, "q1", true)];
        let err = extract_features(&events, &schedule(), &[], &ExtractOptions::default());
        assert!(matches!(err, Err(CoreError::InconsistentDataset(_))));
    }
}
