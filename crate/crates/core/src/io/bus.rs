//! In-process publish/subscribe bus.
//!
//! Every subscriber owns a bounded queue. A full queue drops its oldest
//! message and counts the drop, so publishing never waits on a slow
//! consumer.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use crossbeam::queue::ArrayQueue;
use crossbeam::sync::{Parker, Unparker};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Pupil,
    Gaze,
    Surface,
    Latency,
}

impl Topic {
    pub const ALL: [Topic; 4] = [Topic::Pupil, Topic::Gaze, Topic::Surface, Topic::Latency];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Pupil => "pupil",
            Topic::Gaze => "gaze",
            Topic::Surface => "surface",
            Topic::Latency => "latency",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topic {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub topic: Topic,
    /// Per-topic sequence number, starting at 0.
    pub seq: u64,
    /// JSON object mirroring the published datum.
    pub payload: Value,
}

struct Queue {
    prefix: String,
    messages: ArrayQueue<Message>,
    dropped: AtomicU64,
    wake: Unparker,
}

struct Inner {
    subscribers: RwLock<Vec<Arc<Queue>>>,
    seqs: [Mutex<u64>; 4],
    closed: AtomicBool,
    capacity: usize,
}

/// Cloneable handle to a bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("subscribers", &self.subscriber_count())
            .field("closed", &self.is_closed())
            .finish()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::with_capacity(QUEUE_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            inner: Arc::new(Inner {
                subscribers: RwLock::new(Vec::new()),
                seqs: Default::default(),
                closed: AtomicBool::new(false),
                capacity: capacity.max(1),
            }),
        }
    }

    /// Delivers `payload` to every subscriber whose prefix matches `topic`
    /// and returns the assigned sequence number. Publishing on a closed bus
    /// is a no-op returning `None`.
    pub fn publish(&self, topic: Topic, payload: Value) -> Option<u64> {
        if self.is_closed() {
            return None;
        }
        // the per-topic lock keeps sequence order equal to delivery order
        let mut seq = self.inner.seqs[topic as usize].lock().unwrap_or_else(|e| e.into_inner());
        let msg = Message {
            topic,
            seq: *seq,
            payload,
        };
        *seq += 1;
        let subs = self.inner.subscribers.read().unwrap_or_else(|e| e.into_inner());
        for q in subs.iter().filter(|q| topic.as_str().starts_with(q.prefix.as_str())) {
            if q.messages.force_push(msg.clone()).is_some() {
                q.dropped.fetch_add(1, Ordering::Relaxed);
            }
            q.wake.unpark();
        }
        Some(msg.seq)
    }

    /// Serializes `datum` and publishes it.
    pub fn publish_datum<T: Serialize>(&self, topic: Topic, datum: &T) -> Result<Option<u64>, serde_json::Error> {
        Ok(self.publish(topic, serde_json::to_value(datum)?))
    }

    /// Receives messages whose topic starts with `prefix` from now on.
    pub fn subscribe(&self, prefix: &str) -> Subscription {
        let parker = Parker::new();
        let queue = Arc::new(Queue {
            prefix: prefix.to_owned(),
            messages: ArrayQueue::new(self.inner.capacity),
            dropped: AtomicU64::new(0),
            wake: parker.unparker().clone(),
        });
        self.inner
            .subscribers
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .push(queue.clone());
        Subscription {
            queue,
            parker,
            bus: self.inner.clone(),
        }
    }

    /// Ends every subscription once its queue is drained.
    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::SeqCst);
        for q in self.inner.subscribers.read().unwrap_or_else(|e| e.into_inner()).iter() {
            q.wake.unpark();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.subscribers.read().unwrap_or_else(|e| e.into_inner()).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecvError {
    Timeout,
    Closed,
}

pub struct Subscription {
    queue: Arc<Queue>,
    parker: Parker,
    bus: Arc<Inner>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<Message> {
        self.queue.messages.pop()
    }

    /// Blocks until a message arrives, the bus closes and the queue is
    /// empty, or `timeout` passes.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Message, RecvError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(m) = self.queue.messages.pop() {
                return Ok(m);
            }
            if self.bus.closed.load(Ordering::SeqCst) {
                return self.queue.messages.pop().ok_or(RecvError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RecvError::Timeout);
            }
            self.parker.park_timeout(deadline - now);
        }
    }

    /// Blocks until a message arrives; `None` once the bus is closed and
    /// drained.
    pub fn recv(&self) -> Option<Message> {
        loop {
            match self.recv_timeout(Duration::from_millis(100)) {
                Ok(m) => return Some(m),
                Err(RecvError::Closed) => return None,
                Err(RecvError::Timeout) => {}
            }
        }
    }

    /// Messages discarded because this subscriber fell behind.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn prefix(&self) -> &str {
        &self.queue.prefix
    }
}

impl Iterator for Subscription {
    type Item = Message;
    fn next(&mut self) -> Option<Message> {
        self.recv()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        let mut subs = self.bus.subscribers.write().unwrap_or_else(|e| e.into_inner());
        subs.retain(|q| !Arc::ptr_eq(q, &self.queue));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ordered_delivery() {
        let bus = Bus::new();
        let sub = bus.subscribe("pupil");
        for i in 0..1000 {
            bus.publish(Topic::Pupil, json!({ "i": i }));
        }
        bus.close();
        let seqs: Vec<u64> = sub.map(|m| m.seq).collect();
        assert_eq!(seqs, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn topic_filtering() {
        let bus = Bus::new();
        let gaze = bus.subscribe("gaze");
        let all = bus.subscribe("");
        bus.publish(Topic::Pupil, json!({}));
        bus.publish(Topic::Gaze, json!({}));
        bus.close();
        assert_eq!(gaze.map(|m| m.topic).collect::<Vec<_>>(), vec![Topic::Gaze]);
        assert_eq!(all.count(), 2);
    }

    #[test]
    fn overflow_drops_oldest() {
        let bus = Bus::with_capacity(4);
        let sub = bus.subscribe("pupil");
        for _ in 0..10 {
            bus.publish(Topic::Pupil, json!({}));
        }
        assert_eq!(sub.dropped(), 6);
        bus.close();
        assert_eq!(sub.map(|m| m.seq).collect::<Vec<_>>(), vec![6, 7, 8, 9]);
    }

    #[test]
    fn dropped_subscription_unregisters() {
        let bus = Bus::new();
        let s = bus.subscribe("gaze");
        assert_eq!(bus.subscriber_count(), 1);
        drop(s);
        assert_eq!(bus.subscriber_count(), 0);
    }

    #[test]
    fn closed_bus_ends_stream() {
        let bus = Bus::new();
        let s = bus.subscribe("gaze");
        bus.close();
        assert_eq!(s.recv_timeout(Duration::from_millis(10)), Err(RecvError::Closed));
        assert_eq!(bus.publish(Topic::Gaze, json!({})), None);
    }
}
