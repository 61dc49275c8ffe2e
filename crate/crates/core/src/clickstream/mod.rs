//! Interaction data model, event-log parsing, sessionization, dataset
//! validation, and synthetic course generation.
//!
//! Events are line-delimited JSON, one object per line:
//!
//! ```text
//! {"student_id": "s01", "t": 36000, "action": "video.play", "object_id": "v1", "position": 0}
//! {"student_id": "s01", "t": 36500, "action": "quiz.submit", "object_id": "q1", "correct": true}
//! ```
//!
//! Timestamps are integer seconds relative to course start. All types are
//! immutable after construction and safe to share across threads.

mod generate;
mod session;

pub use generate::generate_synthetic_course;
pub use session::{sessionize, Session};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Event vocabulary. Video objects accept the six `video.*` actions, quiz
/// objects accept `quiz.submit` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    VideoLoad,
    VideoPlay,
    VideoPause,
    VideoStop,
    VideoSeek,
    VideoSpeedChange,
    QuizSubmit,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::VideoLoad => "video.load",
            Action::VideoPlay => "video.play",
            Action::VideoPause => "video.pause",
            Action::VideoStop => "video.stop",
            Action::VideoSeek => "video.seek",
            Action::VideoSpeedChange => "video.speed",
            Action::QuizSubmit => "quiz.submit",
        }
    }

    pub fn from_str(s: &str) -> Option<Action> {
        Some(match s {
            "video.load" => Action::VideoLoad,
            "video.play" => Action::VideoPlay,
            "video.pause" => Action::VideoPause,
            "video.stop" => Action::VideoStop,
            "video.seek" => Action::VideoSeek,
            "video.speed" => Action::VideoSpeedChange,
            "quiz.submit" => Action::QuizSubmit,
            _ => return None,
        })
    }

    pub fn is_video(&self) -> bool {
        !matches!(self, Action::QuizSubmit)
    }

    pub fn is_quiz(&self) -> bool {
        matches!(self, Action::QuizSubmit)
    }
}

/// Action-specific payload, validated at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    /// load/play/pause/stop; position is seconds into the video.
    Video { position: Option<f64> },
    Seek { seek_from: f64, seek_to: f64 },
    Speed { new_speed: f64 },
    Quiz { correct: bool },
}

/// One timestamped clickstream event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub student_id: String,
    /// Seconds since course start.
    pub timestamp: u64,
    pub action: Action,
    pub object_id: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Video,
    Quiz,
}

/// A video or quiz in the course schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningObject {
    pub object_id: String,
    pub kind: ObjectKind,
    /// 0-based week index.
    pub scheduled_week: usize,
    /// Video length in seconds; present iff `kind == Video`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_sec: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "MOOC")]
    Mooc,
    Flipped,
}

/// Instructional-design and population metadata attached to a course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseMetadata {
    pub setting: Setting,
    pub language: String,
    pub level: String,
    pub quiz_video_ratio: f64,
    pub success_rate: f64,
}

/// The weekly course schedule: which objects exist and when they are released.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseSchedule {
    pub course_id: String,
    /// Number of course weeks W.
    pub weeks: usize,
    /// Week-assignment divisor for timestamps. Defaults to 604800 (7 days).
    pub seconds_per_week: u64,
    pub objects: Vec<LearningObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<CourseMetadata>,
}

pub const DEFAULT_SECONDS_PER_WEEK: u64 = 604_800;
pub const DEFAULT_GAP_THRESHOLD_SEC: u64 = 1_800;

impl CourseSchedule {
    /// Week index for a timestamp: `floor(t / seconds_per_week)` clamped to
    /// `[0, W-1]`. Total over all non-negative timestamps.
    pub fn assign_week(&self, timestamp: u64) -> usize {
        let w = (timestamp / self.seconds_per_week) as usize;
        w.min(self.weeks.saturating_sub(1))
    }

    pub fn object(&self, object_id: &str) -> Option<&LearningObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Parse a schedule from its JSON document form.
    pub fn from_json(json: &str) -> Result<CourseSchedule> {
        let schedule: CourseSchedule = serde_json::from_str(json)?;
        schedule.check_structure()?;
        Ok(schedule)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural invariants: positive W and divisor, unique object ids,
    /// in-range weeks, durations present exactly on videos.
    pub fn check_structure(&self) -> Result<()> {
        if self.weeks == 0 {
            return Err(CoreError::invalid("schedule has zero weeks"));
        }
        if self.seconds_per_week == 0 {
            return Err(CoreError::invalid("seconds_per_week must be positive"));
        }
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.object_id.as_str()) {
                return Err(CoreError::invalid(format!(
                    "duplicate object_id {}",
                    obj.object_id
                )));
            }
            if obj.scheduled_week >= self.weeks {
                return Err(CoreError::invalid(format!(
                    "object {} scheduled in week {} but course has {} weeks",
                    obj.object_id, obj.scheduled_week, self.weeks
                )));
            }
            match (obj.kind, obj.duration_sec) {
                (ObjectKind::Video, Some(d)) if d > 0 => {}
                (ObjectKind::Video, _) => {
                    return Err(CoreError::invalid(format!(
                        "video {} needs a positive duration_sec",
                        obj.object_id
                    )))
                }
                (ObjectKind::Quiz, None) => {}
                (ObjectKind::Quiz, Some(_)) => {
                    return Err(CoreError::invalid(format!(
                        "quiz {} must not carry duration_sec",
                        obj.object_id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Binary pass/fail outcome for one student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentLabel {
    pub student_id: String,
    pub passed: bool,
}

/// Parse the `student_id,passed` label CSV (passed in {0,1}).
pub fn parse_labels<R: std::io::Read>(reader: R) -> Result<Vec<StudentLabel>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        if headers.len() < 2 || &headers[0] != "student_id" || &headers[1] != "passed" {
            return Err(CoreError::invalid(
                "label CSV must start with header student_id,passed",
            ));
        }
    }
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let passed = match record.get(1) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(CoreError::parse(
                    i + 2,
                    format!("passed must be 0 or 1, got {:?}", other.unwrap_or("")),
                ))
            }
        };
        labels.push(StudentLabel {
            student_id: record.get(0).unwrap_or("").to_string(),
            passed,
        });
    }
    Ok(labels)
}

/// Serialize labels to the CSV wire format.
pub fn labels_to_csv(labels: &[StudentLabel]) -> String {
    let mut out = String::from("student_id,passed\n");
    for l in labels {
        out.push_str(&format!("{},{}\n", l.student_id, u8::from(l.passed)));
    }
    out
}

/// Wire form of one JSONL event line.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    student_id: String,
    t: i64,
    action: String,
    object_id: String,
    #[serde(default)]
    correct: Option<bool>,
    #[serde(default)]
    seek_from: Option<f64>,
    #[serde(default)]
    seek_to: Option<f64>,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    position: Option<f64>,
}

/// Parse a JSONL event stream against a schedule.
///
/// Returns events stably sorted by `(student_id, timestamp)`. Every error
/// names the offending 1-based line. Payload fields irrelevant to an action
/// are ignored; required ones (seek bounds, speed, quiz correctness) must be
/// present and in range.
pub fn parse_events<R: BufRead>(reader: R, schedule: &CourseSchedule) -> Result<Vec<Interaction>> {
    schedule.check_structure()?;
    let kinds: HashMap<&str, ObjectKind> = schedule
        .objects
        .iter()
        .map(|o| (o.object_id.as_str(), o.kind))
        .collect();

    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEvent = serde_json::from_str(&line)
            .map_err(|e| CoreError::parse(line_no, format!("malformed event: {e}")))?;
        let action = Action::from_str(&raw.action)
            .ok_or_else(|| CoreError::parse(line_no, format!("unknown action {:?}", raw.action)))?;
        if raw.t < 0 {
            return Err(CoreError::parse(
                line_no,
                format!("negative timestamp {}", raw.t),
            ));
        }
        let kind = *kinds.get(raw.object_id.as_str()).ok_or_else(|| {
            CoreError::parse(line_no, format!("unknown object_id {:?}", raw.object_id))
        })?;
        let family_ok = match kind {
            ObjectKind::Video => action.is_video(),
            ObjectKind::Quiz => action.is_quiz(),
        };
        if !family_ok {
            return Err(CoreError::parse(
                line_no,
                format!(
                    "action {} not allowed on {:?} object {:?}",
                    action.as_str(),
                    kind,
                    raw.object_id
                ),
            ));
        }
        let payload = match action {
            Action::VideoLoad | Action::VideoPlay | Action::VideoPause | Action::VideoStop => {
                if raw.position.is_some_and(|p| p < 0.0) {
                    return Err(CoreError::parse(line_no, "negative position"));
                }
                Payload::Video {
                    position: raw.position,
                }
            }
            Action::VideoSeek => {
                let (from, to) = match (raw.seek_from, raw.seek_to) {
                    (Some(f), Some(t)) => (f, t),
                    _ => {
                        return Err(CoreError::parse(
                            line_no,
                            "video.seek requires seek_from and seek_to",
                        ))
                    }
                };
                if from < 0.0 || to < 0.0 {
                    return Err(CoreError::parse(line_no, "seek positions must be >= 0"));
                }
                Payload::Seek {
                    seek_from: from,
                    seek_to: to,
                }
            }
            Action::VideoSpeedChange => {
                let speed = raw.speed.ok_or_else(|| {
                    CoreError::parse(line_no, "video.speed requires a speed field")
                })?;
                if !(speed > 0.0) {
                    return Err(CoreError::parse(line_no, "speed must be > 0"));
                }
                Payload::Speed { new_speed: speed }
            }
            Action::QuizSubmit => {
                let correct = raw.correct.ok_or_else(|| {
                    CoreError::parse(line_no, "quiz.submit requires a correct field")
                })?;
                Payload::Quiz { correct }
            }
        };
        events.push(Interaction {
            student_id: raw.student_id,
            timestamp: raw.t as u64,
            action,
            object_id: raw.object_id,
            payload,
        });
    }
    events.sort_by(|a, b| {
        a.student_id
            .cmp(&b.student_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(events)
}

/// Serialize events to the JSONL wire format (one line per event, in order).
pub fn events_to_jsonl(events: &[Interaction]) -> String {
    let mut out = String::new();
    for e in events {
        let mut map = serde_json::Map::new();
        map.insert("student_id".into(), e.student_id.clone().into());
        map.insert("t".into(), e.timestamp.into());
        map.insert("action".into(), e.action.as_str().into());
        map.insert("object_id".into(), e.object_id.clone().into());
        match &e.payload {
            Payload::Video { position } => {
                if let Some(p) = position {
                    map.insert("position".into(), (*p).into());
                }
            }
            Payload::Seek { seek_from, seek_to } => {
                map.insert("seek_from".into(), (*seek_from).into());
                map.insert("seek_to".into(), (*seek_to).into());
            }
            Payload::Speed { new_speed } => {
                map.insert("speed".into(), (*new_speed).into());
            }
            Payload::Quiz { correct } => {
                map.insert("correct".into(), (*correct).into());
            }
        }
        out.push_str(&serde_json::Value::Object(map).to_string());
        out.push('\n');
    }
    out
}

/// A single consistency finding from [`validate_course`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finding {
    /// Student has events but no label.
    OrphanEventStudent { student_id: String },
    /// Student has a label but no events.
    OrphanLabel { student_id: String },
    DuplicateLabel { student_id: String },
    DuplicateObjectId { object_id: String },
    ObjectWeekOutOfRange { object_id: String, scheduled_week: usize },
    BadDuration { object_id: String },
    UnknownEventObject { object_id: String },
    ActionKindMismatch { object_id: String, action: String },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::OrphanEventStudent { student_id } => {
                write!(f, "student {student_id} has events but no label")
            }
            Finding::OrphanLabel { student_id } => {
                write!(f, "label for student {student_id} who has no events")
            }
            Finding::DuplicateLabel { student_id } => {
                write!(f, "duplicate label for student {student_id}")
            }
            Finding::DuplicateObjectId { object_id } => {
                write!(f, "duplicate object_id {object_id} in schedule")
            }
            Finding::ObjectWeekOutOfRange {
                object_id,
                scheduled_week,
            } => write!(
                f,
                "object {object_id} scheduled in out-of-range week {scheduled_week}"
            ),
            Finding::BadDuration { object_id } => write!(
                f,
                "object {object_id} has a missing, zero, or misplaced duration"
            ),
            Finding::UnknownEventObject { object_id } => {
                write!(f, "event references unknown object {object_id}")
            }
            Finding::ActionKindMismatch { object_id, action } => {
                write!(f, "action {action} does not match kind of object {object_id}")
            }
        }
    }
}

/// Outcome of a full-dataset consistency check. Empty iff consistent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_consistent(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Cross-check schedule, events, and labels. All problems are reported as
/// findings; this never fails.
pub fn validate_course(
    schedule: &CourseSchedule,
    events: &[Interaction],
    labels: &[StudentLabel],
) -> ValidationReport {
    let mut findings = Vec::new();

    let mut object_kinds: BTreeMap<&str, ObjectKind> = BTreeMap::new();
    for obj in &schedule.objects {
        if object_kinds.insert(obj.object_id.as_str(), obj.kind).is_some() {
            findings.push(Finding::DuplicateObjectId {
                object_id: obj.object_id.clone(),
            });
        }
        if obj.scheduled_week >= schedule.weeks {
            findings.push(Finding::ObjectWeekOutOfRange {
                object_id: obj.object_id.clone(),
                scheduled_week: obj.scheduled_week,
            });
        }
        let duration_ok = match obj.kind {
            ObjectKind::Video => obj.duration_sec.is_some_and(|d| d > 0),
            ObjectKind::Quiz => obj.duration_sec.is_none(),
        };
        if !duration_ok {
            findings.push(Finding::BadDuration {
                object_id: obj.object_id.clone(),
            });
        }
    }

    let mut labeled: BTreeSet<&str> = BTreeSet::new();
    for label in labels {
        if !labeled.insert(label.student_id.as_str()) {
            findings.push(Finding::DuplicateLabel {
                student_id: label.student_id.clone(),
            });
        }
    }

    let mut event_students: BTreeSet<&str> = BTreeSet::new();
    let mut reported_objects: BTreeSet<(&str, bool)> = BTreeSet::new();
    for e in events {
        event_students.insert(e.student_id.as_str());
        match object_kinds.get(e.object_id.as_str()) {
            None => {
                if reported_objects.insert((e.object_id.as_str(), false)) {
                    findings.push(Finding::UnknownEventObject {
                        object_id: e.object_id.clone(),
                    });
                }
            }
            Some(kind) => {
                let ok = match kind {
                    ObjectKind::Video => e.action.is_video(),
                    ObjectKind::Quiz => e.action.is_quiz(),
                };
                if !ok && reported_objects.insert((e.object_id.as_str(), true)) {
                    findings.push(Finding::ActionKindMismatch {
                        object_id: e.object_id.clone(),
                        action: e.action.as_str().to_string(),
                    });
                }
            }
        }
    }

    for s in &event_students {
        if !labeled.contains(s) {
            findings.push(Finding::OrphanEventStudent {
                student_id: (*s).to_string(),
            });
        }
    }
    for s in &labeled {
        if !event_students.contains(s) {
            findings.push(Finding::OrphanLabel {
                student_id: (*s).to_string(),
            });
        }
    }

    ValidationReport { findings }
}

/// Synthetic course generator knobs. The failing archetype decays in weekly
/// activity, answers quizzes less accurately, and never works ahead; the
/// passing archetype is regular, accurate, and starts `proactivity_shift_pass`
/// weeks early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub weeks: usize,
    pub n_videos_per_week: usize,
    pub n_quizzes_per_week: usize,
    /// Fraction of students labeled as passing, in (0,1).
    pub pass_rate: f64,
    /// Per-week multiplicative activity decay for the failing archetype, in (0,1].
    pub engagement_decay_fail: f64,
    pub quiz_accuracy_pass: f64,
    pub quiz_accuracy_fail: f64,
    /// Weeks early the passing archetype first views objects (>= 0).
    pub proactivity_shift_pass: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_students < 4 {
            return Err(CoreError::invalid("n_students must be >= 4"));
        }
        if self.weeks == 0 {
            return Err(CoreError::invalid("weeks must be positive"));
        }
        if self.n_videos_per_week == 0 || self.n_quizzes_per_week == 0 {
            return Err(CoreError::invalid(
                "need at least one video and one quiz per week",
            ));
        }
        if !(self.pass_rate > 0.0 && self.pass_rate < 1.0) {
            return Err(CoreError::invalid("pass_rate must be in (0,1)"));
        }
        if !(self.engagement_decay_fail > 0.0 && self.engagement_decay_fail <= 1.0) {
            return Err(CoreError::invalid("engagement_decay_fail must be in (0,1]"));
        }
        for (name, v) in [
            ("quiz_accuracy_pass", self.quiz_accuracy_pass),
            ("quiz_accuracy_fail", self.quiz_accuracy_fail),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::invalid(format!("{name} must be in [0,1]")));
            }
        }
        if !(self.proactivity_shift_pass >= 0.0) {
            return Err(CoreError::invalid("proactivity_shift_pass must be >= 0"));
        }
        Ok(())
    }
}
