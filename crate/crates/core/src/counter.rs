//! Windowed crowd count: connected stations, plus mobile devices probing
//! with their real address, plus distinct randomized-probe footprints. A
//! real-address prober that is also connected counts once.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::window::WindowSnapshot;

/// Field order is the wire order of the JSON uplink.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrowdingReport {
    pub sensor_id: String,
    /// Unix seconds, UTC.
    pub ts: u64,
    pub window_s: u32,
    pub connected: u32,
    pub probes_real: u32,
    pub probes_virtual: u32,
    pub total: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("total {total} != connected {connected} + probes_real {probes_real} + probes_virtual {probes_virtual}")]
pub struct InconsistentTotal {
    pub total: u32,
    pub connected: u32,
    pub probes_real: u32,
    pub probes_virtual: u32,
}

impl CrowdingReport {
    pub fn new(sensor_id: impl Into<String>, ts: u64, window_s: u32, connected: u32, probes_real: u32, probes_virtual: u32) -> Self {
        CrowdingReport {
            sensor_id: sensor_id.into(),
            ts,
            window_s,
            connected,
            probes_real,
            probes_virtual,
            total: connected.saturating_add(probes_real).saturating_add(probes_virtual),
        }
    }

    pub fn check_total(&self) -> Result<(), InconsistentTotal> {
        let sum = u64::from(self.connected) + u64::from(self.probes_real) + u64::from(self.probes_virtual);
        if sum == u64::from(self.total) {
            Ok(())
        } else {
            Err(InconsistentTotal {
                total: self.total,
                connected: self.connected,
                probes_real: self.probes_real,
                probes_virtual: self.probes_virtual,
            })
        }
    }
}

fn count(n: usize) -> u32 {
    u32::try_from(n).unwrap_or(u32::MAX)
}

pub fn count_window(snapshot: &WindowSnapshot, sensor_id: &str) -> CrowdingReport {
    let connected = snapshot.connected.len();
    let probes_real = snapshot.real_probes.difference(&snapshot.connected).count();
    let probes_virtual = snapshot.virtual_footprints.len();
    let window_s = count(snapshot.window.as_secs() as usize);
    CrowdingReport::new(
        sensor_id,
        snapshot.now.as_secs(),
        window_s,
        count(connected),
        count(probes_real),
        count(probes_virtual),
    )
}
