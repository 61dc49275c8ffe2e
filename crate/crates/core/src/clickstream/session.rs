//! Gap-based sessionization of one student's event stream.

use serde::{Deserialize, Serialize};

use crate::clickstream::Interaction;
use crate::error::{CoreError, Result};

/// A maximal run of one student's events in which consecutive gaps stay at or
/// under the threshold. Stored as an index range into the input slice, so the
/// concatenation of all session ranges reproduces the input exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub student_id: String,
    /// Half-open index range into the event slice passed to [`sessionize`].
    pub start_index: usize,
    pub end_index: usize,
    /// Timestamp of the first event.
    pub start: u64,
    /// Timestamp of the last event.
    pub end: u64,
}

impl Session {
    /// Last minus first timestamp; a single-event session has duration 0.
    pub fn duration(&self) -> u64 {
        self.end - self.start
    }

    pub fn events<'a>(&self, all: &'a [Interaction]) -> &'a [Interaction] {
        &all[self.start_index..self.end_index]
    }
}

/// Partition one student's time-ordered events into sessions. A new session
/// starts whenever the gap to the previous event exceeds `gap_threshold_sec`.
pub fn sessionize(events: &[Interaction], gap_threshold_sec: u64) -> Result<Vec<Session>> {
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let student = &events[0].student_id;
    for pair in events.windows(2) {
        if pair[1].student_id != *student {
            return Err(CoreError::invalid(format!(
                "sessionize expects events of one student, got {} and {}",
                student, pair[1].student_id
            )));
        }
        if pair[1].timestamp < pair[0].timestamp {
            return Err(CoreError::invalid(
                "sessionize expects events sorted by timestamp",
            ));
        }
    }

    let mut sessions = Vec::new();
    let mut begin = 0usize;
    for i in 1..events.len() {
        if events[i].timestamp - events[i - 1].timestamp > gap_threshold_sec {
            sessions.push(make_session(events, begin, i));
            begin = i;
        }
    }
    sessions.push(make_session(events, begin, events.len()));
    Ok(sessions)
}

fn make_session(events: &[Interaction], begin: usize, end: usize) -> Session {
    Session {
        student_id: events[begin].student_id.clone(),
        start_index: begin,
        end_index: end,
        start: events[begin].timestamp,
        end: events[end - 1].timestamp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clickstream::{Action, Payload};

    fn ev(t: u64) -> Interaction {
        Interaction {
            student_id: "s".into(),
            timestamp: t,
            action: Action::VideoPlay,
            object_id: "v".into(),
            payload: Payload::Video { position: None },
        }
    }

    #[test]
    fn all_gaps_small_is_one_session() {
        let events: Vec<_> = [0, 100, 200, 900].into_iter().map(ev).collect();
        let sessions = sessionize(&events, 1800).unwrap();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].duration(), 900);
    }

    #[test]
    fn gap_rule_hand_trace() {
        let events: Vec<_> = [0, 10, 4000].into_iter().map(ev).collect();
        let sessions = sessionize(&events, 1800).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].duration(), 10);
        assert_eq!(sessions[1].duration(), 0);
    }

    #[test]
    fn empty_input_empty_output() {
        assert!(sessionize(&[], 1800).unwrap().is_empty());
    }

    #[test]
    fn gap_exactly_threshold_stays_in_session() {
        let events: Vec<_> = [0, 1800].into_iter().map(ev).collect();
        assert_eq!(sessionize(&events, 1800).unwrap().len(), 1);
    }

    #[test]
    fn unsorted_input_rejected() {
        let events: Vec<_> = [10, 0].into_iter().map(ev).collect();
        assert!(sessionize(&events, 1800).is_err());
    }

    #[test]
    fn mixed_students_rejected() {
        let mut events: Vec<_> = [0, 10].into_iter().map(ev).collect();
        events[1].student_id = "other".into();
        assert!(sessionize(&events, 1800).is_err());
    }
}
