//! Seeded synthetic course generator.
//!
//! Stands in for real platform exports. The two archetypes encode the
//! behavioral contrasts the downstream analyses look for:
//!
//! * failing students' weekly event counts decay by `engagement_decay_fail`
//!   per week (activity is truncated from the end of each week),
//! * passing students first view objects `proactivity_shift_pass` weeks early
//!   (floored at week 0), keep a fixed weekday/hour study slot, and watch
//!   most of each video; failing students study at arbitrary days and hours
//!   and watch fragments,
//! * quiz correctness is drawn per-archetype (`quiz_accuracy_*`), retrying up
//!   to four times until the first correct submission.
//!
//! Everything is a pure function of the config: per-student RNG streams are
//! seeded with `seed ^ fnv1a64(student_id)`, so output does not depend on
//! iteration order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::clickstream::{
    Action, CourseSchedule, Interaction, LearningObject, ObjectKind, Payload, StudentLabel,
    SyntheticConfig, DEFAULT_SECONDS_PER_WEEK,
};
use crate::error::Result;
use crate::fnv1a64;

const SPEED_CHOICES: [f64; 5] = [0.75, 1.0, 1.25, 1.5, 2.0];

/// Generate a schedule, an event log, and labels from the config.
///
/// Deterministic: the same config (including seed) produces byte-identical
/// output. The number of pass labels is exactly `round(n_students * pass_rate)`.
pub fn generate_synthetic_course(
    config: &SyntheticConfig,
) -> Result<(CourseSchedule, Vec<Interaction>, Vec<StudentLabel>)> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let mut objects = Vec::new();
    for w in 0..config.weeks {
        for i in 0..config.n_videos_per_week {
            let duration = 180 + 30 * master.gen_range(0..15u64);
            objects.push(LearningObject {
                object_id: format!("w{w}v{i}"),
                kind: ObjectKind::Video,
                scheduled_week: w,
                duration_sec: Some(duration),
            });
        }
        for i in 0..config.n_quizzes_per_week {
            objects.push(LearningObject {
                object_id: format!("w{w}q{i}"),
                kind: ObjectKind::Quiz,
                scheduled_week: w,
                duration_sec: None,
            });
        }
    }
    let schedule = CourseSchedule {
        course_id: format!("synth-{}", config.seed),
        weeks: config.weeks,
        seconds_per_week: DEFAULT_SECONDS_PER_WEEK,
        objects,
        metadata: None,
    };

    let n_pass = (config.n_students as f64 * config.pass_rate).round() as usize;
    let mut order: Vec<usize> = (0..config.n_students).collect();
    order.shuffle(&mut master);
    let mut passed = vec![false; config.n_students];
    for &idx in order.iter().take(n_pass) {
        passed[idx] = true;
    }

    let mut events = Vec::new();
    let mut labels = Vec::with_capacity(config.n_students);
    for i in 0..config.n_students {
        let student_id = format!("s{i:04}");
        events.extend(simulate_student(&student_id, passed[i], config, &schedule));
        labels.push(StudentLabel {
            student_id,
            passed: passed[i],
        });
    }
    events.sort_by(|a, b| {
        a.student_id
            .cmp(&b.student_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok((schedule, events, labels))
}

struct StudentSim<'a> {
    rng: ChaCha8Rng,
    student_id: &'a str,
    passing: bool,
    accuracy: f64,
    preferred_day: u64,
    preferred_hour: u64,
    /// Strictly-increasing timestamp guard.
    cursor: u64,
}

fn simulate_student(
    student_id: &str,
    passing: bool,
    config: &SyntheticConfig,
    schedule: &CourseSchedule,
) -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a64(student_id));
    let preferred_day = rng.gen_range(0..5u64);
    let preferred_hour = 8 + rng.gen_range(0..12u64);
    let mut sim = StudentSim {
        rng,
        student_id,
        passing,
        accuracy: if passing {
            config.quiz_accuracy_pass
        } else {
            config.quiz_accuracy_fail
        },
        preferred_day,
        preferred_hour,
        cursor: 0,
    };

    let spw = schedule.seconds_per_week;
    let mut events = Vec::new();
    for w in 0..config.weeks {
        let mut week_events: Vec<Interaction> = Vec::new();
        for obj in schedule.objects.iter().filter(|o| o.scheduled_week == w) {
            // Chain some objects into the running session; otherwise open a
            // fresh session at the archetype's study slot.
            let chained = !week_events.is_empty() && sim.rng.gen_bool(0.35);
            let t0 = if chained {
                sim.cursor + 30 + sim.rng.gen_range(0..270u64)
            } else {
                let (day, hour) = if sim.passing {
                    (sim.preferred_day, sim.preferred_hour)
                } else {
                    (sim.rng.gen_range(0..7u64), sim.rng.gen_range(0..24u64))
                };
                let view_week = if sim.passing {
                    (w as f64 - config.proactivity_shift_pass).max(0.0)
                } else {
                    w as f64
                };
                let base = (view_week * spw as f64) as u64
                    + day * 86_400
                    + hour * 3_600
                    + sim.rng.gen_range(0..1800u64);
                base.max(sim.cursor + 3_600)
            };
            match obj.kind {
                ObjectKind::Video => sim.video_session(obj, t0, chained, &mut week_events),
                ObjectKind::Quiz => sim.quiz_session(obj, t0, &mut week_events),
            }
        }
        if !passing {
            let keep = ((week_events.len() as f64)
                * config.engagement_decay_fail.powi(w as i32))
            .ceil() as usize;
            week_events.truncate(keep);
            sim.cursor = week_events
                .last()
                .map(|e| e.timestamp)
                .unwrap_or(sim.cursor)
                .max(sim.cursor);
        }
        events.extend(week_events);
    }
    events
}

impl StudentSim<'_> {
    fn push(&mut self, out: &mut Vec<Interaction>, t: u64, action: Action, obj: &str, payload: Payload) {
        self.cursor = t;
        out.push(Interaction {
            student_id: self.student_id.to_string(),
            timestamp: t,
            action,
            object_id: obj.to_string(),
            payload,
        });
    }

    fn video_session(
        &mut self,
        obj: &LearningObject,
        t0: u64,
        chained: bool,
        out: &mut Vec<Interaction>,
    ) {
        let duration = obj.duration_sec.unwrap_or(300);
        let frac = if self.passing {
            0.85 + 0.15 * self.rng.gen::<f64>()
        } else {
            0.2 + 0.5 * self.rng.gen::<f64>()
        };
        let watch = ((duration as f64 * frac) as u64).max(10);
        let id = obj.object_id.clone();
        let mut t = t0;

        // Chained continuations sometimes go straight to play, which yields
        // play -> stop -> play trigrams across back-to-back videos.
        if !(chained && self.rng.gen_bool(0.5)) {
            self.push(out, t, Action::VideoLoad, &id, Payload::Video { position: Some(0.0) });
            t += 2 + self.rng.gen_range(0..10u64);
        }
        self.push(out, t, Action::VideoPlay, &id, Payload::Video { position: Some(0.0) });

        let mut rest = watch;
        if self.rng.gen_bool(0.3) && watch >= 20 {
            let first = watch * (30 + self.rng.gen_range(0..40u64)) / 100;
            t += first;
            rest = watch - first;
            self.push(
                out,
                t,
                Action::VideoPause,
                &id,
                Payload::Video { position: Some(first as f64) },
            );
            if self.rng.gen_bool(0.5) {
                t += 2;
                let speed = SPEED_CHOICES[self.rng.gen_range(0..SPEED_CHOICES.len())];
                self.push(out, t, Action::VideoSpeedChange, &id, Payload::Speed { new_speed: speed });
            }
            t += 3 + self.rng.gen_range(0..10u64);
            self.push(
                out,
                t,
                Action::VideoPlay,
                &id,
                Payload::Video { position: Some(first as f64) },
            );
        }
        if self.rng.gen_bool(0.25) && rest >= 10 {
            let step = rest / 2;
            t += step;
            rest -= step;
            let from = self.rng.gen_range(0..duration) as f64;
            let to = self.rng.gen_range(0..duration) as f64;
            self.push(out, t, Action::VideoSeek, &id, Payload::Seek { seek_from: from, seek_to: to });
        }
        t += rest.max(1);
        let roll = self.rng.gen::<f64>();
        if roll < 0.7 {
            self.push(out, t, Action::VideoStop, &id, Payload::Video { position: Some(watch as f64) });
        } else if roll < 0.85 {
            self.push(out, t, Action::VideoPause, &id, Payload::Video { position: Some(watch as f64) });
        }
        // otherwise the student abandons the video without a closing event
    }

    fn quiz_session(&mut self, obj: &LearningObject, t0: u64, out: &mut Vec<Interaction>) {
        let id = obj.object_id.clone();
        let mut t = t0;
        for _ in 0..4 {
            let correct = self.rng.gen_bool(self.accuracy.clamp(0.0, 1.0));
            self.push(out, t, Action::QuizSubmit, &id, Payload::Quiz { correct });
            if correct {
                break;
            }
            t += 20 + self.rng.gen_range(0..100u64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clickstream::validate_course;

    fn small_config() -> SyntheticConfig {
        SyntheticConfig {
            n_students: 20,
            weeks: 4,
            n_videos_per_week: 2,
            n_quizzes_per_week: 1,
            pass_rate: 0.5,
            engagement_decay_fail: 0.5,
            quiz_accuracy_pass: 0.9,
            quiz_accuracy_fail: 0.3,
            proactivity_shift_pass: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate_synthetic_course(&small_config()).unwrap();
        let b = generate_synthetic_course(&small_config()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn label_balance_is_exact() {
        let mut cfg = small_config();
        cfg.n_students = 100;
        let (_, _, labels) = generate_synthetic_course(&cfg).unwrap();
        let n_pass = labels.iter().filter(|l| l.passed).count();
        assert_eq!(n_pass, 50);
    }

    #[test]
    fn failing_cohort_event_counts_decay() {
        let mut cfg = small_config();
        cfg.n_students = 40;
        let (schedule, events, labels) = generate_synthetic_course(&cfg).unwrap();
        let failing: std::collections::BTreeSet<&str> = labels
            .iter()
            .filter(|l| !l.passed)
            .map(|l| l.student_id.as_str())
            .collect();
        let mut per_week = vec![0usize; cfg.weeks];
        for e in &events {
            if failing.contains(e.student_id.as_str()) {
                per_week[schedule.assign_week(e.timestamp)] += 1;
            }
        }
        for w in 1..cfg.weeks {
            assert!(
                per_week[w] < per_week[w - 1],
                "week {w}: {} !< {}",
                per_week[w],
                per_week[w - 1]
            );
        }
    }

    #[test]
    fn generator_output_is_consistent() {
        let (schedule, events, labels) = generate_synthetic_course(&small_config()).unwrap();
        let report = validate_course(&schedule, &events, &labels);
        assert!(report.is_consistent(), "findings: {:?}", report.findings);
        // Timestamps strictly increase within each student.
        for pair in events.windows(2) {
            if pair[0].student_id == pair[1].student_id {
                assert!(pair[0].timestamp < pair[1].timestamp);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small_config();
        cfg.pass_rate = 1.5;
        assert!(generate_synthetic_course(&cfg).is_err());
        let mut cfg = small_config();
        cfg.n_students = 3;
        assert!(generate_synthetic_course(&cfg).is_err());
    }
}
