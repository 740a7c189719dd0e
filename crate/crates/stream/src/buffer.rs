//! The event buffer: `p` queues ordered by due time.
//!
//! Times are microseconds on the session's virtual axis, where zero is the
//! session start and one unit is one microsecond of wall-clock time.

use std::collections::VecDeque;

use plgen_core::sim::Event;

#[derive(Debug, Clone, PartialEq)]
pub struct BufferedEvent {
    pub due_us: i64,
    pub seq: u64,
    pub event: Event,
}

/// Each queue holds whole traces, appended after its last event, so it is
/// always sorted by `(due_us, seq)`.
#[derive(Debug, Clone)]
pub struct EventBuffer {
    queues: Vec<VecDeque<BufferedEvent>>,
    tails: Vec<Option<i64>>,
    len: usize,
    next_seq: u64,
}

impl EventBuffer {
    pub fn new(queues: usize) -> Self {
        assert!(queues >= 1);
        EventBuffer {
            queues: vec![VecDeque::new(); queues],
            tails: vec![None; queues],
            len: 0,
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn queue_lens(&self) -> Vec<usize> {
        self.queues.iter().map(VecDeque::len).collect()
    }

    /// Due time of the last event ever placed in each queue.
    pub fn tails(&self) -> &[Option<i64>] {
        &self.tails
    }

    pub fn max_tail(&self) -> Option<i64> {
        self.tails.iter().flatten().copied().max()
    }

    /// The queue whose last event is earliest; queues never used come first.
    pub fn target_queue(&self) -> usize {
        (0..self.queues.len())
            .min_by_key(|&i| (self.tails[i].unwrap_or(i64::MIN), i))
            .unwrap()
    }

    /// Places a trace into [`EventBuffer::target_queue`]. Its first event is
    /// due `gap_us` after that queue's tail, but never before `not_before_us`;
    /// later events keep their simulated offsets scaled by `multiplier`.
    /// Returns the chosen queue.
    pub fn insert_trace(
        &mut self,
        events: Vec<Event>,
        origin_ms: i64,
        multiplier: f64,
        gap_us: i64,
        not_before_us: i64,
    ) -> usize {
        let q = self.target_queue();
        if events.is_empty() {
            return q;
        }
        let base = self.tails[q].map_or(not_before_us, |t| (t + gap_us).max(not_before_us));
        let scale = |ts: i64| ((ts - origin_ms).max(0) as f64 * 1000.0 * multiplier).round() as i64;
        for event in events {
            let due_us = base + scale(event.timestamp);
            self.tails[q] = Some(self.tails[q].map_or(due_us, |t| t.max(due_us)));
            self.queues[q].push_back(BufferedEvent {
                due_us,
                seq: self.next_seq,
                event,
            });
            self.next_seq += 1;
            self.len += 1;
        }
        q
    }

    fn earliest(&self) -> Option<usize> {
        (0..self.queues.len())
            .filter(|&i| !self.queues[i].is_empty())
            .min_by_key(|&i| {
                let e = &self.queues[i][0];
                (e.due_us, e.seq)
            })
    }

    pub fn peek(&self) -> Option<&BufferedEvent> {
        self.earliest().map(|i| &self.queues[i][0])
    }

    pub fn pop(&mut self) -> Option<BufferedEvent> {
        let i = self.earliest()?;
        self.len -= 1;
        self.queues[i].pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use plgen_core::sim::Lifecycle;

    fn trace(case: &str, times: &[i64]) -> Vec<Event> {
        times
            .iter()
            .map(|&t| Event {
                case_id: case.into(),
                activity: "A".into(),
                timestamp: t,
                lifecycle: Lifecycle::Complete,
                attributes: Default::default(),
            })
            .collect()
    }

    #[test]
    fn traces_go_to_the_queue_with_the_earliest_tail() {
        let mut b = EventBuffer::new(2);
        assert_eq!(b.insert_trace(trace("a", &[1000, 3000]), 0, 1.0, 0, 0), 0);
        assert_eq!(b.insert_trace(trace("b", &[1000]), 0, 1.0, 0, 0), 1);
        assert_eq!(b.tails(), &[Some(3_000_000), Some(1_000_000)]);
        assert_eq!(b.insert_trace(trace("c", &[0]), 0, 1.0, 500, 0), 1);
        assert_eq!(b.tails()[1], Some(1_000_500));
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn offsets_scale_with_multiplier() {
        let mut b = EventBuffer::new(1);
        b.insert_trace(trace("a", &[10_000, 10_100, 10_400]), 10_000, 0.5, 0, 0);
        let due: Vec<i64> = std::iter::from_fn(|| b.pop()).map(|e| e.due_us).collect();
        assert_eq!(due, [0, 50_000, 200_000]);
    }

    #[test]
    fn first_event_keeps_its_offset_from_the_origin() {
        let mut b = EventBuffer::new(1);
        b.insert_trace(trace("a", &[2_000, 3_000]), 1_000, 0.1, 0, 0);
        let due: Vec<i64> = std::iter::from_fn(|| b.pop()).map(|e| e.due_us).collect();
        assert_eq!(due, [100_000, 200_000]);
    }

    #[test]
    fn not_before_is_respected() {
        let mut b = EventBuffer::new(1);
        b.insert_trace(trace("a", &[0]), 0, 1.0, 0, 7_000);
        assert_eq!(b.pop().unwrap().due_us, 7_000);
    }

    #[test]
    fn pop_is_globally_ordered() {
        let mut b = EventBuffer::new(3);
        for (i, c) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            b.insert_trace(trace(c, &[0, 700 + i as i64 * 13, 1500]), 0, 1.0, 100, 0);
        }
        let mut last = (i64::MIN, 0);
        while let Some(e) = b.pop() {
            assert!((e.due_us, e.seq) > last);
            last = (e.due_us, e.seq);
        }
        assert!(b.is_empty());
    }
}
