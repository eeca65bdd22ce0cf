//! The sensor-local anonymized store: last-seen time per identity, queried
//! as a sliding window.
//!
//! Windows are half-open, `(now - window, now]`.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detector::{hex_u64, IdentityKind, Observation};
use crate::time::{duration_micros, Timestamp};

pub const DEFAULT_WINDOW: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub kind: IdentityKind,
    #[serde(with = "hex_u64")]
    pub id64: u64,
    /// Microseconds since the Unix epoch.
    pub last_seen: Timestamp,
}

/// Distinct ids seen inside one window, per identity kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowSnapshot {
    pub now: Timestamp,
    pub window: Duration,
    pub connected: HashSet<u64>,
    pub real_probes: HashSet<u64>,
    pub virtual_footprints: HashSet<u64>,
}

impl WindowSnapshot {
    pub fn ids(&self, kind: IdentityKind) -> &HashSet<u64> {
        match kind {
            IdentityKind::ConnectedUe => &self.connected,
            IdentityKind::RealProbeMobile => &self.real_probes,
            IdentityKind::VirtualFootprint => &self.virtual_footprints,
        }
    }

    fn ids_mut(&mut self, kind: IdentityKind) -> &mut HashSet<u64> {
        match kind {
            IdentityKind::ConnectedUe => &mut self.connected,
            IdentityKind::RealProbeMobile => &mut self.real_probes,
            IdentityKind::VirtualFootprint => &mut self.virtual_footprints,
        }
    }
}

/// True when `t` lies in `(now - window, now]`.
pub fn in_window(t: Timestamp, now: Timestamp, window: Duration) -> bool {
    if t > now {
        return false;
    }
    match now.as_micros().checked_sub(duration_micros(window)) {
        Some(lower) => t.as_micros() > lower,
        None => true,
    }
}

#[derive(Debug, Default)]
pub struct WindowStore {
    last_seen: HashMap<(IdentityKind, u64), Timestamp>,
    journal: Option<BufWriter<File>>,
}

impl WindowStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) an append-only journal, replaying whatever it
    /// already holds. Unreadable lines are skipped.
    pub fn with_journal(path: &Path) -> io::Result<Self> {
        let mut store = WindowStore::new();
        if path.exists() {
            store.replay(BufReader::new(File::open(path)?))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.journal = Some(BufWriter::new(file));
        Ok(store)
    }

    /// Applies journal lines to the in-memory map; returns the number of
    /// lines that did not parse.
    pub fn replay<R: BufRead>(&mut self, reader: R) -> io::Result<usize> {
        let mut bad = 0;
        for line in reader.split(b'\n') {
            let line = line?;
            if line.trim_ascii().is_empty() {
                continue;
            }
            match serde_json::from_slice::<IdentityRecord>(&line) {
                Ok(r) => self.refresh(r.kind, r.id64, r.last_seen),
                Err(_) => bad += 1,
            }
        }
        Ok(bad)
    }

    fn refresh(&mut self, kind: IdentityKind, id64: u64, ts: Timestamp) {
        let slot = self.last_seen.entry((kind, id64)).or_insert(ts);
        if ts > *slot {
            *slot = ts;
        }
    }

    /// Inserts or refreshes; `last_seen` only ever moves forward.
    pub fn record(&mut self, obs: &Observation) -> io::Result<()> {
        let before = self.last_seen.get(&(obs.kind, obs.id64)).copied();
        self.refresh(obs.kind, obs.id64, obs.ts);
        let changed = before.is_none_or(|b| obs.ts > b);
        if let (true, Some(j)) = (changed, self.journal.as_mut()) {
            let rec = IdentityRecord { kind: obs.kind, id64: obs.id64, last_seen: obs.ts };
            serde_json::to_writer(&mut *j, &rec)?;
            j.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.journal.as_mut() {
            Some(j) => j.flush(),
            None => Ok(()),
        }
    }

    pub fn snapshot_window(&self, now: Timestamp, window: Duration) -> WindowSnapshot {
        let mut snap = WindowSnapshot { now, window, ..Default::default() };
        for (&(kind, id), &t) in &self.last_seen {
            if in_window(t, now, window) {
                snap.ids_mut(kind).insert(id);
            }
        }
        snap
    }

    /// Forgets identities last seen at or before `now - retention`.
    pub fn prune(&mut self, now: Timestamp, retention: Duration) {
        let Some(cutoff) = now.as_micros().checked_sub(duration_micros(retention)) else {
            return;
        };
        self.last_seen.retain(|_, t| t.as_micros() > cutoff);
    }

    pub fn get(&self, kind: IdentityKind, id64: u64) -> Option<IdentityRecord> {
        self.last_seen.get(&(kind, id64)).map(|&last_seen| IdentityRecord { kind, id64, last_seen })
    }

    pub fn records(&self) -> impl Iterator<Item = IdentityRecord> + '_ {
        self.last_seen.iter().map(|(&(kind, id64), &last_seen)| IdentityRecord { kind, id64, last_seen })
    }

    pub fn len(&self) -> usize {
        self.last_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_seen.is_empty()
    }
}

/// Single writer, many snapshot readers. A snapshot holds the read lock
/// only while copying the matching ids.
#[derive(Debug, Clone, Default)]
pub struct SharedWindowStore(Arc<RwLock<WindowStore>>);

impl SharedWindowStore {
    pub fn new(store: WindowStore) -> Self {
        SharedWindowStore(Arc::new(RwLock::new(store)))
    }

    pub fn record(&self, obs: &Observation) -> io::Result<()> {
        self.0.write().unwrap_or_else(|e| e.into_inner()).record(obs)
    }

    pub fn snapshot_window(&self, now: Timestamp, window: Duration) -> WindowSnapshot {
        self.0.read().unwrap_or_else(|e| e.into_inner()).snapshot_window(now, window)
    }

    pub fn prune(&self, now: Timestamp, retention: Duration) {
        self.0.write().unwrap_or_else(|e| e.into_inner()).prune(now, retention)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(kind: IdentityKind, id: u64, secs: u64) -> Observation {
        Observation { kind, id64: id, ts: Timestamp::from_secs(secs), raw_mac_hash: None }
    }

    const W: Duration = Duration::from_secs(300);

    #[test]
    fn refresh_keeps_max() {
        let mut s = WindowStore::new();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 10)).unwrap();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 20)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(IdentityKind::ConnectedUe, 1).unwrap().last_seen, Timestamp::from_secs(20));

        let mut s = WindowStore::new();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 20)).unwrap();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 10)).unwrap();
        assert_eq!(s.get(IdentityKind::ConnectedUe, 1).unwrap().last_seen, Timestamp::from_secs(20));
    }

    #[test]
    fn kind_is_part_of_key() {
        let mut s = WindowStore::new();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 10)).unwrap();
        s.record(&obs(IdentityKind::VirtualFootprint, 1, 10)).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn half_open_boundaries() {
        let mut s = WindowStore::new();
        s.record(&obs(IdentityKind::ConnectedUe, 1, 1000)).unwrap();
        let at = |now| s.snapshot_window(Timestamp::from_secs(now), W).connected.len();
        assert_eq!(at(999), 0);
        assert_eq!(at(1000), 1);
        assert_eq!(at(1299), 1);
        assert_eq!(at(1300), 0);
        assert_eq!(at(1301), 0);
    }

    #[test]
    fn window_near_epoch() {
        assert!(in_window(Timestamp::ZERO, Timestamp::from_secs(10), W));
        assert!(!in_window(Timestamp::ZERO, Timestamp::from_secs(300), W));
        assert!(in_window(Timestamp::from_secs(1), Timestamp::from_secs(300), W));
    }

    #[test]
    fn prune_boundaries() {
        let mut s = WindowStore::new();
        for (id, t) in [(1, 699), (2, 700), (3, 701)] {
            s.record(&obs(IdentityKind::RealProbeMobile, id, t)).unwrap();
        }
        s.prune(Timestamp::from_secs(1000), W);
        let mut left: Vec<u64> = s.records().map(|r| r.id64).collect();
        left.sort();
        assert_eq!(left, vec![3]);
    }

    #[test]
    fn journal_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        {
            let mut s = WindowStore::with_journal(&path).unwrap();
            s.record(&obs(IdentityKind::ConnectedUe, 0xfeed, 10)).unwrap();
            s.record(&obs(IdentityKind::ConnectedUe, 0xfeed, 5)).unwrap();
            s.record(&obs(IdentityKind::VirtualFootprint, 7, 30)).unwrap();
            s.flush().unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"kind":"connected_ue","id64":"000000000000feed","last_seen":10000000}"#));
        let s = WindowStore::with_journal(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(IdentityKind::VirtualFootprint, 7).unwrap().last_seen, Timestamp::from_secs(30));
    }

    #[test]
    fn shared_store_across_threads() {
        let shared = SharedWindowStore::default();
        let writer = {
            let s = shared.clone();
            std::thread::spawn(move || {
                for i in 0..1000 {
                    s.record(&obs(IdentityKind::ConnectedUe, i, 100)).unwrap();
                }
            })
        };
        let mut last = 0;
        for _ in 0..50 {
            let n = shared.snapshot_window(Timestamp::from_secs(100), W).connected.len();
            assert!(n >= last);
            last = n;
        }
        writer.join().unwrap();
        assert_eq!(shared.snapshot_window(Timestamp::from_secs(100), W).connected.len(), 1000);
    }
}
