//! Valued hand state and the feedback channels feeding the tick loop.
//!
//! Gesture samples arrive from a [`GestureSource`] and are held
//! (zero-order) until the next sample. Explicit pushes queue up on a
//! [`PushChannel`] and are consumed at most once per tick.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::env::PushEvent;
use crate::error::{Result, SivError};

/// Right-hand roll reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandSample {
    pub t_ms: u64,
    pub roll_deg: f64,
    pub present: bool,
}

impl HandSample {
    pub const THUMBS_UP_ROLL: f64 = -90.0;
    pub const THUMBS_DOWN_ROLL: f64 = 0.0;

    pub fn absent(t_ms: u64) -> Self {
        HandSample { t_ms, roll_deg: 0.0, present: false }
    }

    pub fn thumbs_up(t_ms: u64) -> Self {
        HandSample { t_ms, roll_deg: Self::THUMBS_UP_ROLL, present: true }
    }

    pub fn thumbs_down(t_ms: u64) -> Self {
        HandSample { t_ms, roll_deg: Self::THUMBS_DOWN_ROLL, present: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.roll_deg) {
            return Err(SivError::Config(format!("roll {} outside [-180, 180]", self.roll_deg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandState {
    ThumbsUp,
    ThumbsDown,
}

impl HandState {
    pub fn value(self) -> f64 {
        match self {
            HandState::ThumbsUp => 1.0,
            HandState::ThumbsDown => -1.0,
        }
    }
}

/// Thumbs up iff a hand is present and rolled strictly between -135° and
/// -45°. Everything else, including no hand at all, reads as thumbs down.
pub fn hand_state(sample: &HandSample) -> HandState {
    if sample.present && -135.0 < sample.roll_deg && sample.roll_deg < -45.0 {
        HandState::ThumbsUp
    } else {
        HandState::ThumbsDown
    }
}

/// Anything that can report the most recent hand sample at a point in time.
pub trait GestureSource {
    /// Latest sample captured at or before `t_ms`. Sources without a sample
    /// yet report an absent hand.
    fn latest(&mut self, t_ms: u64) -> Result<HandSample>;
}

/// Hand state held from the latest sample at or before `t_ms`.
pub fn sample_at_tick(source: &mut dyn GestureSource, t_ms: u64) -> Result<HandState> {
    source.latest(t_ms).map(|s| hand_state(&s))
}

/// Zero-order hold over samples fed in timestamp order. Queries must be
/// non-decreasing in time; older samples are discarded as they go stale.
#[derive(Debug, Clone, Default)]
pub struct HeldSamples {
    samples: VecDeque<HandSample>,
}

impl HeldSamples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, sample: HandSample) {
        if let Some(last) = self.samples.back() {
            debug_assert!(sample.t_ms >= last.t_ms, "samples must arrive in time order");
        }
        self.samples.push_back(sample);
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

impl GestureSource for HeldSamples {
    fn latest(&mut self, t_ms: u64) -> Result<HandSample> {
        while self.samples.len() > 1 && self.samples[1].t_ms <= t_ms {
            self.samples.pop_front();
        }
        Ok(match self.samples.front() {
            Some(s) if s.t_ms <= t_ms => *s,
            _ => HandSample::absent(t_ms),
        })
    }
}

/// Pre-recorded samples. Querying past `end_ms` signals end of stream.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    samples: Vec<HandSample>,
    end_ms: u64,
}

impl ReplaySource {
    pub fn new(samples: Vec<HandSample>, end_ms: u64) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
            return Err(SivError::Config("replayed samples are not in time order".into()));
        }
        let end_ms = end_ms.max(samples.last().map_or(0, |s| s.t_ms));
        Ok(ReplaySource { samples, end_ms })
    }

    pub fn end_ms(&self) -> u64 {
        self.end_ms
    }
}

impl GestureSource for ReplaySource {
    fn latest(&mut self, t_ms: u64) -> Result<HandSample> {
        if t_ms > self.end_ms {
            return Err(SivError::EndOfStream(t_ms));
        }
        let n = self.samples.partition_point(|s| s.t_ms <= t_ms);
        Ok(if n == 0 { HandSample::absent(t_ms) } else { self.samples[n - 1] })
    }
}

/// Explicit pushes waiting for the next tick.
#[derive(Debug, Clone, Default)]
pub struct PushChannel {
    pending: VecDeque<PushEvent>,
}

impl PushChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, event: PushEvent) {
        self.pending.push_back(event);
    }

    /// Consumes every push captured at or before `tick_ms` and returns the
    /// first of them; duplicates within the window collapse into one.
    pub fn drain(&mut self, tick_ms: u64) -> Option<PushEvent> {
        let mut first = None;
        while let Some(ev) = self.pending.front() {
            if ev.t_ms > tick_ms {
                break;
            }
            let ev = self.pending.pop_front().unwrap();
            first.get_or_insert(ev);
        }
        first
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Drains at most one push for the tick at `tick_ms`.
pub fn drain_pushes(channel: &mut PushChannel, tick_ms: u64) -> Option<PushEvent> {
    channel.drain(tick_ms)
}

/// Bounded single-producer/single-consumer queue that drops its oldest
/// entry on overflow. Used between session transport and tick loop.
#[derive(Debug)]
pub struct DropOldestQueue<T> {
    inner: Arc<Mutex<VecDeque<T>>>,
    capacity: usize,
}

impl<T> Clone for DropOldestQueue<T> {
    fn clone(&self) -> Self {
        DropOldestQueue { inner: Arc::clone(&self.inner), capacity: self.capacity }
    }
}

impl<T> DropOldestQueue<T> {
    pub const DEFAULT_CAPACITY: usize = 64;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        DropOldestQueue { inner: Arc::new(Mutex::new(VecDeque::with_capacity(capacity))), capacity }
    }

    /// Enqueues `item`; returns true when an older item was dropped.
    pub fn send(&self, item: T) -> bool {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let dropped = if q.len() == self.capacity {
            q.pop_front();
            true
        } else {
            false
        };
        q.push_back(item);
        dropped
    }

    pub fn drain(&self) -> Vec<T> {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        q.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn present(roll: f64) -> HandSample {
        HandSample { t_ms: 0, roll_deg: roll, present: true }
    }

    #[test]
    fn thumbs_up_inside_open_interval() {
        assert_eq!(hand_state(&present(-90.0)), HandState::ThumbsUp);
        assert_eq!(hand_state(&present(0.0)), HandState::ThumbsDown);
        assert_eq!(hand_state(&present(-45.0)), HandState::ThumbsDown);
        assert_eq!(hand_state(&present(-135.0)), HandState::ThumbsDown);
        assert_eq!(hand_state(&HandSample { t_ms: 0, roll_deg: -90.0, present: false }), HandState::ThumbsDown);
    }

    #[test]
    fn zero_order_hold() {
        let mut held = HeldSamples::new();
        held.feed(HandSample::thumbs_up(0));
        held.feed(HandSample::thumbs_down(250));
        assert_eq!(sample_at_tick(&mut held, 100).unwrap(), HandState::ThumbsUp);
        assert_eq!(sample_at_tick(&mut held, 300).unwrap(), HandState::ThumbsDown);
    }

    #[test]
    fn before_first_sample_is_absent() {
        let mut held = HeldSamples::new();
        held.feed(HandSample::thumbs_up(500));
        assert_eq!(sample_at_tick(&mut held, 100).unwrap(), HandState::ThumbsDown);
        let mut replay = ReplaySource::new(vec![HandSample::thumbs_up(500)], 500).unwrap();
        assert!(!replay.latest(100).unwrap().present);
    }

    #[test]
    fn replay_past_end_signals_end_of_stream() {
        let mut replay = ReplaySource::new(vec![HandSample::thumbs_up(0)], 300).unwrap();
        assert_eq!(sample_at_tick(&mut replay, 300).unwrap(), HandState::ThumbsUp);
        assert!(matches!(sample_at_tick(&mut replay, 400), Err(SivError::EndOfStream(400))));
    }

    #[test]
    fn pushes_collapse_within_a_window() {
        let mut ch = PushChannel::new();
        assert_eq!(drain_pushes(&mut ch, 100), None);
        for t in [110, 150, 190] {
            ch.send(PushEvent { t_ms: t });
        }
        ch.send(PushEvent { t_ms: 250 });
        assert_eq!(drain_pushes(&mut ch, 200), Some(PushEvent { t_ms: 110 }));
        assert_eq!(drain_pushes(&mut ch, 200), None);
        assert_eq!(drain_pushes(&mut ch, 300), Some(PushEvent { t_ms: 250 }));
        assert!(ch.is_empty());
    }

    #[test]
    fn bounded_queue_drops_oldest() {
        let q = DropOldestQueue::new(64);
        let producer = q.clone();
        for i in 0..70 {
            producer.send(i);
        }
        let items = q.drain();
        assert_eq!(items.len(), 64);
        assert_eq!(items[0], 6);
        assert!(q.is_empty());
    }

    fn naive_latest(samples: &[HandSample], t: u64) -> HandState {
        samples
            .iter()
            .rfind(|s| s.t_ms <= t)
            .map_or(HandState::ThumbsDown, hand_state)
    }

    proptest! {
        #[test]
        fn hand_state_is_total(roll in -180.0f64..=180.0, present in any::<bool>()) {
            let v = hand_state(&HandSample { t_ms: 0, roll_deg: roll, present }).value();
            prop_assert!(v == 1.0 || v == -1.0);
        }

        #[test]
        fn hold_matches_naive_scan(
            gaps in proptest::collection::vec((0u64..300, -180.0f64..=180.0, any::<bool>()), 0..40),
            step in 1u64..200,
        ) {
            let mut t = 0;
            let samples: Vec<HandSample> = gaps.iter().map(|&(dt, roll, present)| {
                t += dt;
                HandSample { t_ms: t, roll_deg: roll, present }
            }).collect();
            let end = t + 500;
            let mut held = HeldSamples::new();
            for s in &samples {
                held.feed(*s);
            }
            let mut replay = ReplaySource::new(samples.clone(), end).unwrap();
            let mut tick = 0;
            while tick <= end {
                let want = naive_latest(&samples, tick);
                prop_assert_eq!(sample_at_tick(&mut held, tick).unwrap(), want);
                prop_assert_eq!(sample_at_tick(&mut replay, tick).unwrap(), want);
                tick += step;
            }
        }
    }
}
