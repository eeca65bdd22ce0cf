//! Cloud-side ingestion: decode uplinks, keep one time series per sensor,
//! raise threshold alerts, export for dashboards.
//!
//! Storage is an append-only NDJSON file per sensor under
//! `<data_dir>/series/`, replayed into memory on open. A later point with
//! the same `(sensor_id, ts)` replaces the earlier one.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counter::{CrowdingReport, InconsistentTotal};
use crate::uplink::{decode_json, decode_lorawan, from_hex, LoraEnvelope, LoraError, MqttSettings, TOPIC_FILTER};

/// One stored sample; same shape as the report it came from.
pub type SeriesPoint = CrowdingReport;

pub const CSV_HEADER: [&str; 7] = ["sensor_id", "ts", "window_s", "connected", "probes_real", "probes_virtual", "total"];

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("undecodable payload: {0}")]
    Decode(String),
    #[error("inconsistent counts: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<InconsistentTotal> for CollectError {
    fn from(e: InconsistentTotal) -> Self {
        CollectError::InvariantViolation(e.to_string())
    }
}

impl From<LoraError> for CollectError {
    fn from(e: LoraError) -> Self {
        CollectError::Decode(e.to_string())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("query bounds reversed: from {t0} > to {t1}")]
pub struct ReversedBounds {
    pub t0: u64,
    pub t1: u64,
}

/// How a payload reached the collector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingress {
    Json,
    /// Raw LoRaWAN application payload plus network-side metadata.
    Lorawan { sensor_id: String, port: u8, received_at: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[derive(Default)]
pub enum AlertDestination {
    #[default]
    Stdout,
    Webhook { url: String },
}


#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertPolicy {
    pub name: String,
    /// A sensor id, or `*` for every sensor.
    #[serde(default = "wildcard")]
    pub sensor_id: String,
    pub threshold: u32,
    #[serde(default = "one")]
    pub consecutive: u32,
    #[serde(default)]
    pub sink: AlertDestination,
}

fn wildcard() -> String {
    "*".into()
}

fn one() -> u32 {
    1
}

impl AlertPolicy {
    pub fn applies_to(&self, sensor_id: &str) -> bool {
        self.sensor_id == "*" || self.sensor_id == sensor_id
    }
}

/// Webhook body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub policy: String,
    pub sensor_id: String,
    pub ts: u64,
    pub total: u32,
}

/// Fires when `new_point` completes a run of exactly `consecutive` samples
/// at or above the threshold. `history` holds the earlier samples in time
/// order. A run that keeps going does not fire again; a sample below the
/// threshold re-arms.
pub fn evaluate_alerts(policy: &AlertPolicy, new_point: &SeriesPoint, history: &[SeriesPoint]) -> Option<Alert> {
    let k = policy.consecutive.max(1) as usize;
    if !policy.applies_to(&new_point.sensor_id) || new_point.total < policy.threshold {
        return None;
    }
    let run = 1 + history.iter().rev().take(k).take_while(|p| p.total >= policy.threshold).count();
    (run == k).then(|| Alert {
        policy: policy.name.clone(),
        sensor_id: new_point.sensor_id.clone(),
        ts: new_point.ts,
        total: new_point.total,
    })
}

/// Alerts over a whole series at once.
pub fn scan_alerts(policy: &AlertPolicy, series: &[SeriesPoint]) -> Vec<Alert> {
    series.iter().enumerate().filter_map(|(i, p)| evaluate_alerts(policy, p, &series[..i])).collect()
}

/// Delivers an alert to its policy's destination.
pub fn dispatch_alert(alert: &Alert, dest: &AlertDestination) -> Result<(), String> {
    match dest {
        AlertDestination::Stdout => {
            println!("{}", serde_json::to_string(alert).map_err(|e| e.to_string())?);
            Ok(())
        }
        AlertDestination::Webhook { url } => post_webhook(url, alert),
    }
}

pub fn post_webhook(url: &str, alert: &Alert) -> Result<(), String> {
    let body = serde_json::to_string(alert).map_err(|e| e.to_string())?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into();
    agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .map(|_| ())
        .map_err(|e| e.to_string())
}

/// An alert paired with where it should go.
pub type RoutedAlert = (Alert, AlertDestination);

/// Alerts raised plus the rejected lines, keyed by 1-based line number.
pub type ReaderOutcome = (Vec<RoutedAlert>, Vec<(usize, CollectError)>);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CollectorStats {
    pub stored: u64,
    pub duplicates: u64,
    pub decode_errors: u64,
    pub invariant_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub point: SeriesPoint,
    /// Re-delivery of an identical point; nothing changed.
    pub duplicate: bool,
    pub alerts: Vec<(Alert, AlertDestination)>,
}

#[derive(Debug, Default)]
struct SensorSeries {
    points: BTreeMap<u64, SeriesPoint>,
    file: Option<BufWriter<File>>,
}

#[derive(Debug, Serialize)]
struct DeadLetter<'a> {
    received_at: u64,
    error: String,
    payload_hex: &'a str,
}

/// Sensor ids become file names: keep `[A-Za-z0-9._-]`, percent-encode the rest.
fn file_stem(sensor_id: &str) -> String {
    let mut s = String::new();
    for b in sensor_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && !s.is_empty()) {
            s.push(b as char);
        } else {
            s.push_str(&format!("%{b:02X}"));
        }
    }
    if s.is_empty() {
        s.push_str("%00");
    }
    s
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Thread-safe collector. Writes to one sensor are serialized; different
/// sensors ingest in parallel.
#[derive(Debug, Default)]
pub struct Collector {
    data_dir: Option<PathBuf>,
    policies: Vec<AlertPolicy>,
    series: RwLock<HashMap<String, Arc<Mutex<SensorSeries>>>>,
    stats: Mutex<CollectorStats>,
    dead_letter: Mutex<Option<BufWriter<File>>>,
}

impl Collector {
    /// Memory-only collector.
    pub fn in_memory(policies: Vec<AlertPolicy>) -> Self {
        Collector { policies, ..Default::default() }
    }

    /// Opens a persistent collector, rebuilding the index from disk.
    pub fn open(data_dir: &Path, policies: Vec<AlertPolicy>) -> Result<Self, CollectError> {
        let series_dir = data_dir.join("series");
        fs::create_dir_all(&series_dir)?;
        let mut map: HashMap<String, SensorSeries> = HashMap::new();
        let mut entries: Vec<_> = fs::read_dir(&series_dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("ndjson") {
                continue;
            }
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<SeriesPoint>(&line) {
                    Ok(p) => {
                        map.entry(p.sensor_id.clone()).or_default().points.insert(p.ts, p);
                    }
                    Err(e) => log::warn!("{}: skipping bad line: {e}", path.display()),
                }
            }
        }
        let series = map.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect();
        let dl = OpenOptions::new().create(true).append(true).open(data_dir.join("deadletter.ndjson"))?;
        Ok(Collector {
            data_dir: Some(data_dir.to_path_buf()),
            policies,
            series: RwLock::new(series),
            stats: Mutex::default(),
            dead_letter: Mutex::new(Some(BufWriter::new(dl))),
        })
    }

    pub fn policies(&self) -> &[AlertPolicy] {
        &self.policies
    }

    pub fn stats(&self) -> CollectorStats {
        *self.stats.lock().unwrap()
    }

    pub fn sensors(&self) -> Vec<String> {
        let mut v: Vec<String> = self.series.read().unwrap().keys().cloned().collect();
        v.sort();
        v
    }

    fn bump(&self, f: impl FnOnce(&mut CollectorStats)) {
        f(&mut self.stats.lock().unwrap());
    }

    fn quarantine(&self, payload: &[u8], err: &CollectError) {
        let mut guard = self.dead_letter.lock().unwrap();
        if let Some(w) = guard.as_mut() {
            let hex = crate::uplink::to_hex(payload);
            let rec = DeadLetter { received_at: unix_now(), error: err.to_string(), payload_hex: &hex };
            let res = serde_json::to_writer(&mut *w, &rec)
                .map_err(io::Error::from)
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush());
            if let Err(e) = res {
                log::error!("dead-letter write failed: {e}");
            }
        }
    }

    fn decode(payload: &[u8], ingress: &Ingress) -> Result<SeriesPoint, CollectError> {
        match ingress {
            Ingress::Json => decode_json(payload).map_err(|e| CollectError::Decode(e.to_string())),
            Ingress::Lorawan { sensor_id, port, received_at } => {
                if *port != crate::uplink::LORA_PORT {
                    return Err(CollectError::Decode(format!("unexpected LoRaWAN port {port}")));
                }
                let f = decode_lorawan(payload)?;
                if !f.is_consistent() {
                    return Err(CollectError::InvariantViolation(format!("{f:?}")));
                }
                Ok(f.into_report(sensor_id.clone(), *received_at))
            }
        }
    }

    /// Decodes, validates and stores one payload, returning any alerts it
    /// raised. Undecodable payloads go to the dead-letter file.
    pub fn ingest(&self, payload: &[u8], ingress: Ingress) -> Result<IngestOutcome, CollectError> {
        let point = match Self::decode(payload, &ingress) {
            Ok(p) => p,
            Err(e) => {
                match &e {
                    CollectError::Decode(_) => {
                        self.bump(|s| s.decode_errors += 1);
                        self.quarantine(payload, &e);
                    }
                    _ => self.bump(|s| s.invariant_violations += 1),
                }
                return Err(e);
            }
        };
        if let Err(e) = point.check_total() {
            self.bump(|s| s.invariant_violations += 1);
            return Err(e.into());
        }
        self.store(point)
    }

    /// Accepts one NDJSON line: a JSON report, or a LoRaWAN envelope.
    pub fn ingest_line(&self, line: &str) -> Result<IngestOutcome, CollectError> {
        let trimmed = line.trim();
        if let Ok(env) = serde_json::from_str::<LoraEnvelope>(trimmed) {
            let Some(bytes) = from_hex(&env.payload_hex) else {
                let e = CollectError::Decode(format!("bad payload_hex {:?}", env.payload_hex));
                self.bump(|s| s.decode_errors += 1);
                self.quarantine(trimmed.as_bytes(), &e);
                return Err(e);
            };
            let ingress = Ingress::Lorawan {
                sensor_id: env.sensor_id,
                port: env.port,
                received_at: env.received_at.unwrap_or_else(unix_now),
            };
            return self.ingest(&bytes, ingress);
        }
        self.ingest(trimmed.as_bytes(), Ingress::Json)
    }

    /// Ingests every non-blank line; returns alerts raised and the errors
    /// (with 1-based line numbers) that did not stop the read.
    pub fn ingest_reader<R: BufRead>(&self, reader: R) -> io::Result<ReaderOutcome> {
        let mut alerts = Vec::new();
        let mut errors = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match self.ingest_line(&line) {
                Ok(out) => alerts.extend(out.alerts),
                Err(e) => errors.push((i + 1, e)),
            }
        }
        Ok((alerts, errors))
    }

    fn series_for(&self, sensor_id: &str) -> Result<Arc<Mutex<SensorSeries>>, CollectError> {
        if let Some(s) = self.series.read().unwrap().get(sensor_id) {
            return Ok(s.clone());
        }
        let mut map = self.series.write().unwrap();
        Ok(map.entry(sensor_id.to_string()).or_default().clone())
    }

    fn store(&self, point: SeriesPoint) -> Result<IngestOutcome, CollectError> {
        let series = self.series_for(&point.sensor_id)?;
        let mut s = series.lock().unwrap();
        if s.points.get(&point.ts) == Some(&point) {
            self.bump(|st| st.duplicates += 1);
            return Ok(IngestOutcome { point, duplicate: true, alerts: Vec::new() });
        }
        if let Some(dir) = &self.data_dir {
            if s.file.is_none() {
                let path = dir.join("series").join(format!("{}.ndjson", file_stem(&point.sensor_id)));
                s.file = Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?));
            }
            let w = s.file.as_mut().expect("opened above");
            serde_json::to_writer(&mut *w, &point).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }

        let k = self.policies.iter().map(|p| p.consecutive.max(1) as usize).max().unwrap_or(0);
        let mut history: Vec<SeriesPoint> = s.points.range(..point.ts).rev().take(k).map(|(_, p)| p.clone()).collect();
        history.reverse();
        let alerts = self
            .policies
            .iter()
            .filter_map(|pol| evaluate_alerts(pol, &point, &history).map(|a| (a, pol.sink.clone())))
            .collect();

        s.points.insert(point.ts, point.clone());
        self.bump(|st| st.stored += 1);
        Ok(IngestOutcome { point, duplicate: false, alerts })
    }

    /// Points with `ts` in `[t0, t1]`, ascending. Unknown sensors yield an
    /// empty series.
    pub fn query(&self, sensor_id: &str, t0: u64, t1: u64) -> Result<Vec<SeriesPoint>, ReversedBounds> {
        if t0 > t1 {
            return Err(ReversedBounds { t0, t1 });
        }
        let Some(series) = self.series.read().unwrap().get(sensor_id).cloned() else {
            return Ok(Vec::new());
        };
        let s = series.lock().unwrap();
        Ok(s.points.range(t0..=t1).map(|(_, p)| p.clone()).collect())
    }

    pub fn export_csv(&self, sensor_id: &str, t0: u64, t1: u64) -> Result<String, ReversedBounds> {
        Ok(points_to_csv(&self.query(sensor_id, t0, t1)?))
    }

    pub fn export_json(&self, sensor_id: &str, t0: u64, t1: u64) -> Result<String, ReversedBounds> {
        Ok(serde_json::to_string_pretty(&self.query(sensor_id, t0, t1)?).expect("points serialize"))
    }
}

pub fn points_to_csv(points: &[SeriesPoint]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([
            p.sensor_id.clone(),
            p.ts.to_string(),
            p.window_s.to_string(),
            p.connected.to_string(),
            p.probes_real.to_string(),
            p.probes_virtual.to_string(),
            p.total.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Subscribes to `sttk/v1/+/crowding` and ingests until the connection
/// iterator ends. `on_alert` receives every alert raised.
pub fn run_mqtt_subscription(
    collector: &Collector,
    settings: &MqttSettings,
    mut on_alert: impl FnMut(&Alert, &AlertDestination),
) -> Result<(), String> {
    let id = settings.client_id.clone().unwrap_or_else(|| format!("sttk-collector-{}", std::process::id()));
    let mut opts = rumqttc::MqttOptions::new(id, settings.host.clone(), settings.port);
    opts.set_keep_alive(Duration::from_secs(30));
    let (client, mut connection) = rumqttc::Client::new(opts, 64);
    client.subscribe(TOPIC_FILTER, rumqttc::QoS::AtLeastOnce).map_err(|e| e.to_string())?;
    for event in connection.iter() {
        match event {
            Ok(rumqttc::Event::Incoming(rumqttc::Packet::Publish(p))) => {
                let text = String::from_utf8_lossy(&p.payload);
                match collector.ingest_line(&text) {
                    Ok(out) => out.alerts.iter().for_each(|(a, d)| on_alert(a, d)),
                    Err(e) => log::warn!("{}: {e}", p.topic),
                }
            }
            Ok(rumqttc::Event::Incoming(rumqttc::Packet::ConnAck(_))) => {
                // resubscribe after reconnects
                let _ = client.try_subscribe(TOPIC_FILTER, rumqttc::QoS::AtLeastOnce);
            }
            Ok(_) => {}
            Err(e) => {
                log::warn!("mqtt: {e}");
                std::thread::sleep(Duration::from_secs(1));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uplink::{encode_json, encode_lorawan};

    fn pt(sensor: &str, ts: u64, total: u32) -> SeriesPoint {
        CrowdingReport::new(sensor, ts, 300, total, 0, 0)
    }

    fn policy(threshold: u32, k: u32) -> AlertPolicy {
        AlertPolicy { name: "p".into(), sensor_id: "*".into(), threshold, consecutive: k, sink: AlertDestination::Stdout }
    }

    fn totals_alerts(totals: &[u32], pol: &AlertPolicy) -> Vec<u64> {
        let series: Vec<_> = totals.iter().enumerate().map(|(i, &t)| pt("s", i as u64, t)).collect();
        scan_alerts(pol, &series).iter().map(|a| a.ts).collect()
    }

    #[test]
    fn rising_edge_with_k() {
        assert_eq!(totals_alerts(&[5, 9, 11, 12], &policy(10, 2)), vec![3]);
        assert_eq!(totals_alerts(&[11, 12, 13], &policy(10, 2)), vec![1]);
        assert_eq!(totals_alerts(&[9, 11, 9, 11], &policy(10, 1)), vec![1, 3]);
        assert_eq!(totals_alerts(&[10], &policy(10, 1)), vec![0]);
        assert!(totals_alerts(&[], &policy(10, 1)).is_empty());
    }

    #[test]
    fn policy_sensor_filter() {
        let mut pol = policy(1, 1);
        pol.sensor_id = "a".into();
        assert!(evaluate_alerts(&pol, &pt("b", 0, 5), &[]).is_none());
        assert!(evaluate_alerts(&pol, &pt("a", 0, 5), &[]).is_some());
    }

    #[test]
    fn ingest_json_and_query() {
        let c = Collector::in_memory(vec![]);
        for ts in [100, 200, 300] {
            c.ingest(&encode_json(&pt("s1", ts, 3)), Ingress::Json).unwrap();
        }
        assert_eq!(c.query("s1", 150, 250).unwrap().len(), 1);
        assert!(c.query("nope", 0, 1000).unwrap().is_empty());
        assert_eq!(c.query("s1", 10, 5), Err(ReversedBounds { t0: 10, t1: 5 }));
        assert!(Collector::in_memory(vec![]).query("s1", 0, u64::MAX).unwrap().is_empty());
    }

    #[test]
    fn ingest_lorawan_uses_reception_time() {
        let c = Collector::in_memory(vec![]);
        let payload = encode_lorawan(&CrowdingReport::new("x", 1, 300, 3, 2, 4));
        let out = c
            .ingest(payload.as_bytes(), Ingress::Lorawan { sensor_id: "lora-7".into(), port: 10, received_at: 1234 })
            .unwrap();
        assert_eq!(out.point, CrowdingReport::new("lora-7", 1234, 300, 3, 2, 4));
    }

    #[test]
    fn invariant_violation_rejected() {
        let c = Collector::in_memory(vec![]);
        let bad = br#"{"sensor_id":"s","ts":1,"window_s":300,"connected":1,"probes_real":1,"probes_virtual":1,"total":4}"#;
        assert!(matches!(c.ingest(bad, Ingress::Json), Err(CollectError::InvariantViolation(_))));
        assert_eq!(c.stats().invariant_violations, 1);
        assert!(c.query("s", 0, 10).unwrap().is_empty());
    }

    #[test]
    fn decode_errors_go_to_dead_letter() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), vec![]).unwrap();
        assert!(matches!(c.ingest(b"{nope", Ingress::Json), Err(CollectError::Decode(_))));
        assert!(c.ingest_line(r#"{"sensor_id":"s","port":10,"payload_hex":"zz"}"#).is_err());
        assert_eq!(c.stats().decode_errors, 2);
        let dl = fs::read_to_string(dir.path().join("deadletter.ndjson")).unwrap();
        assert_eq!(dl.lines().count(), 2);
    }

    #[test]
    fn redelivery_is_idempotent() {
        let c = Collector::in_memory(vec![policy(1, 1)]);
        let payload = encode_json(&pt("s", 10, 5));
        let first = c.ingest(&payload, Ingress::Json).unwrap();
        assert_eq!(first.alerts.len(), 1);
        let again = c.ingest(&payload, Ingress::Json).unwrap();
        assert!(again.duplicate);
        assert!(again.alerts.is_empty());
        assert_eq!(c.query("s", 0, 100).unwrap().len(), 1);
    }

    #[test]
    fn later_duplicate_ts_overwrites() {
        let c = Collector::in_memory(vec![]);
        c.ingest(&encode_json(&pt("s", 10, 5)), Ingress::Json).unwrap();
        c.ingest(&encode_json(&pt("s", 10, 7)), Ingress::Json).unwrap();
        assert_eq!(c.query("s", 0, 100).unwrap()[0].total, 7);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = Collector::open(dir.path(), vec![]).unwrap();
            c.ingest(&encode_json(&pt("room/1", 10, 5)), Ingress::Json).unwrap();
            c.ingest(&encode_json(&pt("room/1", 20, 6)), Ingress::Json).unwrap();
            c.ingest(&encode_json(&pt("room/1", 10, 8)), Ingress::Json).unwrap();
        }
        let c = Collector::open(dir.path(), vec![]).unwrap();
        let pts = c.query("room/1", 0, 100).unwrap();
        assert_eq!(pts.iter().map(|p| p.total).collect::<Vec<_>>(), vec![8, 6]);
        assert!(dir.path().join("series/room%2F1.ndjson").exists());
    }

    #[test]
    fn csv_export() {
        let c = Collector::in_memory(vec![]);
        assert_eq!(c.export_csv("s", 0, 10).unwrap(), "sensor_id,ts,window_s,connected,probes_real,probes_virtual,total\r\n");
        c.ingest(&encode_json(&pt("a,b", 1, 2)), Ingress::Json).unwrap();
        c.ingest(&encode_json(&pt("a,b", 2, 3)), Ingress::Json).unwrap();
        let csv = c.export_csv("a,b", 0, 10).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("\"a,b\",1,300,2,0,0,2\r\n"));
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("lab-1"), "lab-1");
        assert_eq!(file_stem("a/b"), "a%2Fb");
        assert_eq!(file_stem(".."), "%2E.");
        assert_eq!(file_stem(""), "%00");
    }

    #[test]
    fn concurrent_ingest() {
        let c = Arc::new(Collector::in_memory(vec![]));
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let c = c.clone();
                std::thread::spawn(move || {
                    for i in 0..200u64 {
                        c.ingest(&encode_json(&pt(&format!("s{}", t % 3), i * 8 + t, 1)), Ingress::Json).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(c.stats().stored, 1600);
        let n: usize = (0..3).map(|s| c.query(&format!("s{s}"), 0, u64::MAX).unwrap().len()).sum();
        assert_eq!(n, 1600);
    }
}
