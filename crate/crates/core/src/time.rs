use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Capture time as microseconds since the Unix epoch (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1_000_000)
    }

    /// Builds a timestamp from the `(ts_sec, ts_usec)` pair of a pcap record.
    pub fn from_parts(secs: u32, micros: u32) -> Self {
        Timestamp(u64::from(secs) * 1_000_000 + u64::from(micros))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Whole seconds, truncating.
    pub const fn as_secs(self) -> u64 {
        self.0 / 1_000_000
    }

    pub const fn subsec_micros(self) -> u32 {
        (self.0 % 1_000_000) as u32
    }

    pub fn saturating_sub(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_sub(duration_micros(d)))
    }

    pub fn saturating_add(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(duration_micros(d)))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.as_secs(), self.subsec_micros())
    }
}

pub(crate) fn duration_micros(d: Duration) -> u64 {
    u64::try_from(d.as_micros()).unwrap_or(u64::MAX)
}
