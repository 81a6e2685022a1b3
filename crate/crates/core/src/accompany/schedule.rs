use serde::{Deserialize, Serialize};

/// One scheduled accompaniment note. Serializes as an output-stream record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccompanimentEvent {
    #[serde(rename = "t")]
    pub due_time: f64,
    pub pitch: u8,
    #[serde(rename = "vel")]
    pub velocity: u8,
    #[serde(rename = "dur")]
    pub duration: f64,
    #[serde(rename = "unit")]
    pub source_unit: usize,
}

/// Pending accompaniment, ordered by due time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pending: Vec<AccompanimentEvent>,
    /// Due time of the last emitted event; nothing earlier may be emitted.
    committed_until: f64,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> &[AccompanimentEvent] {
        &self.pending
    }

    pub fn committed_until(&self) -> f64 {
        self.committed_until
    }

    /// Inserts after any events with the same due time. Events due before
    /// the committed horizon are moved up to it.
    pub fn enqueue(&mut self, mut event: AccompanimentEvent) {
        event.due_time = event.due_time.max(self.committed_until);
        let at = self
            .pending
            .partition_point(|e| e.due_time <= event.due_time);
        self.pending.insert(at, event);
    }

    /// Removes and returns every event due at or before `now`.
    pub fn pop_due(&mut self, now: f64) -> Vec<AccompanimentEvent> {
        let split = self.pending.partition_point(|e| e.due_time <= now);
        let due: Vec<_> = self.pending.drain(..split).collect();
        if let Some(last) = due.last() {
            self.committed_until = last.due_time;
        }
        due
    }

    pub fn pop_all(&mut self) -> Vec<AccompanimentEvent> {
        self.pop_due(f64::INFINITY)
    }

    /// Cancels pending events for which `cancel` returns true.
    pub fn cancel_where(
        &mut self,
        mut cancel: impl FnMut(&AccompanimentEvent) -> bool,
    ) -> Vec<AccompanimentEvent> {
        let mut removed = Vec::new();
        self.pending.retain(|e| {
            if cancel(e) {
                removed.push(*e);
                false
            } else {
                true
            }
        });
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, unit: usize) -> AccompanimentEvent {
        AccompanimentEvent {
            due_time: t,
            pitch: 48,
            velocity: 60,
            duration: 0.5,
            source_unit: unit,
        }
    }

    #[test]
    fn keeps_due_order_and_commits() {
        let mut s = Schedule::new();
        s.enqueue(ev(2.0, 2));
        s.enqueue(ev(1.0, 1));
        s.enqueue(ev(2.0, 3));
        let units: Vec<_> = s.pending().iter().map(|e| e.source_unit).collect();
        assert_eq!(units, vec![1, 2, 3]);
        assert_eq!(s.pop_due(1.5).len(), 1);
        assert_eq!(s.committed_until(), 1.0);
        s.enqueue(ev(0.5, 9));
        assert_eq!(s.pending()[0].due_time, 1.0);
    }

    #[test]
    fn record_field_names() {
        let json = serde_json::to_string(&ev(1.5, 4)).unwrap();
        assert_eq!(json, r#"{"t":1.5,"pitch":48,"vel":60,"dur":0.5,"unit":4}"#);
    }
}
