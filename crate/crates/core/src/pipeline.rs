//! Capture replay: frames in, one [`CrowdingReport`] per sampling tick out.
//!
//! Ticks fall on multiples of the sampling period (Unix time). Each frame
//! is recorded before any tick at or after its timestamp is taken, so the
//! report at tick `T` covers `(T - window, T]`. Time comes from the
//! capture, never from the wall clock.

use std::time::Duration;

use crate::capture::{CaptureError, CaptureSource};
use crate::counter::{count_window, CrowdingReport};
use crate::detector::{Detector, DetectorStats};
use crate::time::Timestamp;
use crate::window::WindowStore;

#[derive(Debug, Clone)]
pub struct TickConfig {
    pub sensor_id: String,
    pub window: Duration,
    pub sample_period: Duration,
}

impl TickConfig {
    pub fn new(sensor_id: impl Into<String>, window_s: u32, sample_period_s: u32) -> Self {
        TickConfig {
            sensor_id: sensor_id.into(),
            window: Duration::from_secs(window_s.into()),
            sample_period: Duration::from_secs(sample_period_s.into()),
        }
    }
}

pub struct Pipeline {
    detector: Detector,
    store: WindowStore,
    ticks: TickConfig,
    next_tick: Option<Timestamp>,
    observations: u64,
}

fn first_tick_at_or_after(ts: Timestamp, period: Duration) -> Timestamp {
    let p = period.as_micros().max(1) as u64;
    Timestamp::from_micros(ts.as_micros().div_ceil(p) * p)
}

impl Pipeline {
    pub fn new(detector: Detector, store: WindowStore, ticks: TickConfig) -> Self {
        assert!(!ticks.window.is_zero() && !ticks.sample_period.is_zero(), "window and period must be positive");
        Pipeline { detector, store, ticks, next_tick: None, observations: 0 }
    }

    fn tick(&mut self, at: Timestamp) -> std::io::Result<CrowdingReport> {
        let snap = self.store.snapshot_window(at, self.ticks.window);
        let report = count_window(&snap, &self.ticks.sensor_id);
        self.store.prune(at, self.ticks.window);
        self.store.flush()?;
        Ok(report)
    }

    /// Feeds one frame; returns the reports for every tick that fell
    /// strictly before it.
    pub fn push(&mut self, ts: Timestamp, frame_bytes: &[u8]) -> std::io::Result<Vec<CrowdingReport>> {
        let mut out = Vec::new();
        let period = self.ticks.sample_period;
        let mut next = *self.next_tick.get_or_insert_with(|| first_tick_at_or_after(ts, period));
        while next < ts {
            out.push(self.tick(next)?);
            next = next.saturating_add(period);
        }
        self.next_tick = Some(next);
        if let Some(obs) = self.detector.process_bytes(frame_bytes, ts) {
            self.store.record(&obs)?;
            self.observations += 1;
        }
        Ok(out)
    }

    /// Closes the replay with the tick covering the last frame. A replay
    /// that saw no frames reports once, at the epoch.
    pub fn finish(mut self) -> std::io::Result<(CrowdingReport, PipelineSummary)> {
        let at = self.next_tick.unwrap_or(Timestamp::ZERO);
        let last = self.tick(at)?;
        let summary = PipelineSummary { detector: self.detector.stats(), observations: self.observations, identities: self.store.len() };
        Ok((last, summary))
    }

    pub fn store(&self) -> &WindowStore {
        &self.store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineSummary {
    pub detector: DetectorStats,
    pub observations: u64,
    /// Identities still held after the final prune.
    pub identities: usize,
}

#[derive(Debug)]
pub struct DetectionRun {
    pub reports: Vec<CrowdingReport>,
    pub summary: PipelineSummary,
    /// Why reading stopped early, if it did. Reports up to that point are
    /// still complete.
    pub error: Option<CaptureError>,
}

/// Replays a capture source end to end. `on_report` sees each report as
/// its tick closes.
pub fn run_detection<S: CaptureSource>(
    source: &mut S,
    detector: Detector,
    store: WindowStore,
    ticks: TickConfig,
    mut on_report: impl FnMut(&CrowdingReport),
) -> std::io::Result<DetectionRun> {
    let mut pipeline = Pipeline::new(detector, store, ticks);
    let mut reports = Vec::new();
    let mut error = None;
    while let Some(item) = source.next_record() {
        match item {
            Ok(rec) => {
                for r in pipeline.push(rec.timestamp, &rec.frame_bytes)? {
                    on_report(&r);
                    reports.push(r);
                }
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let (last, summary) = pipeline.finish()?;
    on_report(&last);
    reports.push(last);
    Ok(DetectionRun { reports, summary, error })
}
