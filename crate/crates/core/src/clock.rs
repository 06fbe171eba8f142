//! Time sources and the second-granularity UTC datestamp.
//!
//! Everything that reads the clock or sleeps goes through [`Clock`] so
//! tests can drive schedulers, token expiry, and retry backoff with a
//! [`FakeClock`] instead of wall time.

use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A UTC instant truncated to whole seconds, the granularity every
/// datestamp in the catalog and on the OAI-PMH wire uses.
///
/// Text form is always `YYYY-MM-DDThh:mm:ssZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Datestamp(DateTime<Utc>);

impl Datestamp {
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Datestamp(Utc.timestamp_opt(dt.timestamp(), 0).unwrap())
    }

    pub fn from_unix(secs: i64) -> Self {
        Datestamp(Utc.timestamp_opt(secs, 0).unwrap())
    }

    pub fn unix_seconds(&self) -> i64 {
        self.0.timestamp()
    }

    /// The next representable instant, one second later.
    pub fn succ(&self) -> Self {
        Datestamp::from_unix(self.unix_seconds() + 1)
    }

    pub fn datetime(&self) -> DateTime<Utc> {
        self.0
    }
}

impl fmt::Display for Datestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid datestamp {0:?}, expected YYYY-MM-DDThh:mm:ssZ")]
pub struct DatestampParseError(pub String);

impl FromStr for Datestamp {
    type Err = DatestampParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dt = DateTime::parse_from_rfc3339(s).map_err(|_| DatestampParseError(s.to_string()))?;
        if !s.ends_with('Z') {
            return Err(DatestampParseError(s.to_string()));
        }
        Ok(Datestamp::from_datetime(dt.with_timezone(&Utc)))
    }
}

impl Serialize for Datestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Datestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Outcome of a cancellable wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Elapsed,
    Cancelled,
}

/// Cooperative shutdown flag shared between the scheduler, the HTTP
/// listener, and signal handlers.
#[derive(Clone, Default)]
pub struct Shutdown {
    inner: std::sync::Arc<(Mutex<bool>, Condvar)>,
}

impl Shutdown {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signal(&self) {
        let (lock, cv) = &*self.inner;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }

    pub fn is_signalled(&self) -> bool {
        *self.inner.0.lock().unwrap()
    }

    fn wait_quantum(&self, quantum: Duration) -> bool {
        let (lock, cv) = &*self.inner;
        let guard = lock.lock().unwrap();
        if *guard {
            return true;
        }
        let (guard, _) = cv.wait_timeout(guard, quantum).unwrap();
        *guard
    }
}

/// Abstract time source. `sleep` variants must not busy-wait on real time.
pub trait Clock: Send + Sync {
    fn now(&self) -> Datestamp;

    /// Sub-second precision now, used for elapsed-time reporting.
    fn now_precise(&self) -> DateTime<Utc>;

    fn sleep(&self, d: Duration);

    /// Sleep that wakes early when `stop` is signalled.
    fn sleep_cancellable(&self, d: Duration, stop: &Shutdown) -> WaitOutcome;
}

/// Wall-clock time.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Datestamp {
        Datestamp::from_datetime(Utc::now())
    }

    fn now_precise(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn sleep_cancellable(&self, d: Duration, stop: &Shutdown) -> WaitOutcome {
        let deadline = std::time::Instant::now() + d;
        loop {
            if stop.is_signalled() {
                return WaitOutcome::Cancelled;
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return WaitOutcome::Elapsed;
            }
            if stop.wait_quantum((deadline - now).min(Duration::from_millis(50))) {
                return WaitOutcome::Cancelled;
            }
        }
    }
}

/// Manually advanced clock for tests. Sleepers block until `advance`
/// moves fake time past their deadline.
pub struct FakeClock {
    state: Mutex<DateTime<Utc>>,
    cv: Condvar,
}

impl FakeClock {
    pub fn new(start: Datestamp) -> Self {
        FakeClock {
            state: Mutex::new(start.datetime()),
            cv: Condvar::new(),
        }
    }

    /// Convenience start point so tests get readable datestamps.
    pub fn at_2020() -> Self {
        FakeClock::new("2020-01-01T00:00:00Z".parse().unwrap())
    }

    pub fn advance(&self, d: Duration) {
        let mut now = self.state.lock().unwrap();
        *now += chrono::Duration::from_std(d).expect("advance duration in range");
        self.cv.notify_all();
    }

    pub fn advance_secs(&self, secs: u64) {
        self.advance(Duration::from_secs(secs));
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Datestamp {
        Datestamp::from_datetime(*self.state.lock().unwrap())
    }

    fn now_precise(&self) -> DateTime<Utc> {
        *self.state.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        let deadline = self.now_precise() + chrono::Duration::from_std(d).unwrap();
        let mut now = self.state.lock().unwrap();
        while *now < deadline {
            now = self.cv.wait(now).unwrap();
        }
    }

    fn sleep_cancellable(&self, d: Duration, stop: &Shutdown) -> WaitOutcome {
        let deadline = self.now_precise() + chrono::Duration::from_std(d).unwrap();
        loop {
            if stop.is_signalled() {
                return WaitOutcome::Cancelled;
            }
            {
                let now = self.state.lock().unwrap();
                if *now >= deadline {
                    return WaitOutcome::Elapsed;
                }
                // Bounded wait so a shutdown signalled from another thread
                // is observed even when fake time never advances again.
                let _ = self
                    .cv
                    .wait_timeout(now, Duration::from_millis(5))
                    .unwrap();
            }
        }
    }
}
