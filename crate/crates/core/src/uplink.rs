//! Report encodings and delivery.
//!
//! Two wire formats:
//!
//! * JSON over MQTT, topic `sttk/v1/<sensor_id>/crowding`, keys in the
//!   fixed order `sensor_id, ts, window_s, connected, probes_real,
//!   probes_virtual, total`;
//! * a 10-byte LoRaWAN application payload on port 10, big-endian:
//!
//! ```text
//! 0      1        3            5              7                9
//! +------+--------+------------+--------------+----------------+------------+
//! | ver  | total  | connected  | probes_real  | probes_virtual | window_min |
//! +------+--------+------------+--------------+----------------+------------+
//! ```
//!
//! LoRaWAN payloads carry no timestamp and no sensor id; those come from
//! the network side. When a LoRaWAN message has to travel as text (file
//! sink, MQTT) it is wrapped in a small JSON envelope, see
//! [`LoraEnvelope`].

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counter::CrowdingReport;

pub const LORA_PAYLOAD_LEN: usize = 10;
pub const LORA_VERSION: u8 = 1;
pub const LORA_PORT: u8 = 10;
pub const DEFAULT_QUEUE_CAPACITY: usize = 100;
pub const TOPIC_FILTER: &str = "sttk/v1/+/crowding";

pub fn topic_for(sensor_id: &str) -> String {
    format!("sttk/v1/{sensor_id}/crowding")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoraError {
    #[error("LoRaWAN payload must be {LORA_PAYLOAD_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("unknown LoRaWAN payload version {0}")]
    BadVersion(u8),
}

#[derive(Debug, Error)]
pub enum UplinkError {
    #[error("sink unavailable: {reason} ({queued} queued, {dropped} dropped)")]
    SinkUnavailable { reason: String, queued: usize, dropped: u64 },
    #[error("malformed JSON report: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lora(#[from] LoraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    JsonMqtt,
    Lorawan,
}

pub fn encode_json(report: &CrowdingReport) -> Vec<u8> {
    serde_json::to_vec(report).expect("report serializes")
}

pub fn decode_json(bytes: &[u8]) -> Result<CrowdingReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LoraPayload(pub [u8; LORA_PAYLOAD_LEN]);

impl LoraPayload {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// The report fields a LoRaWAN payload carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LoraFields {
    pub total: u16,
    pub connected: u16,
    pub probes_real: u16,
    pub probes_virtual: u16,
    pub window_min: u8,
}

impl LoraFields {
    /// The values encoding `report` would produce, saturation included.
    pub fn from_report(report: &CrowdingReport) -> Self {
        let sat16 = |v: u32| u16::try_from(v).unwrap_or(u16::MAX);
        LoraFields {
            total: sat16(report.total),
            connected: sat16(report.connected),
            probes_real: sat16(report.probes_real),
            probes_virtual: sat16(report.probes_virtual),
            window_min: u8::try_from(report.window_s / 60).unwrap_or(u8::MAX),
        }
    }

    /// Rebuilds a report; the timestamp and sensor id are supplied by the
    /// receiving side.
    pub fn into_report(self, sensor_id: impl Into<String>, ts: u64) -> CrowdingReport {
        CrowdingReport {
            sensor_id: sensor_id.into(),
            ts,
            window_s: u32::from(self.window_min) * 60,
            connected: self.connected.into(),
            probes_real: self.probes_real.into(),
            probes_virtual: self.probes_virtual.into(),
            total: self.total.into(),
        }
    }

    /// Counts are consistent, allowing for saturation: an exact sum when
    /// the total fits, otherwise parts that reach the cap.
    pub fn is_consistent(&self) -> bool {
        let sum = u32::from(self.connected) + u32::from(self.probes_real) + u32::from(self.probes_virtual);
        if self.total < u16::MAX {
            sum == u32::from(self.total)
        } else {
            sum >= u32::from(u16::MAX)
        }
    }
}

pub fn encode_lorawan(report: &CrowdingReport) -> LoraPayload {
    let f = LoraFields::from_report(report);
    let mut b = [0u8; LORA_PAYLOAD_LEN];
    b[0] = LORA_VERSION;
    b[1..3].copy_from_slice(&f.total.to_be_bytes());
    b[3..5].copy_from_slice(&f.connected.to_be_bytes());
    b[5..7].copy_from_slice(&f.probes_real.to_be_bytes());
    b[7..9].copy_from_slice(&f.probes_virtual.to_be_bytes());
    b[9] = f.window_min;
    LoraPayload(b)
}

pub fn decode_lorawan(bytes: &[u8]) -> Result<LoraFields, LoraError> {
    if bytes.len() != LORA_PAYLOAD_LEN {
        return Err(LoraError::BadLength(bytes.len()));
    }
    if bytes[0] != LORA_VERSION {
        return Err(LoraError::BadVersion(bytes[0]));
    }
    let be = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
    Ok(LoraFields {
        total: be(1),
        connected: be(3),
        probes_real: be(5),
        probes_virtual: be(7),
        window_min: bytes[9],
    })
}

/// Text form of a LoRaWAN uplink, as a network server would forward it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraEnvelope {
    pub sensor_id: String,
    pub port: u8,
    pub payload_hex: String,
    /// Reception time (Unix seconds), when the forwarder records one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_at: Option<u64>,
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) || !s.is_ascii() {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok()).collect()
}

/// One encoded report, ready for a sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UplinkMessage {
    pub transport: Transport,
    pub sensor_id: String,
    pub topic: String,
    /// LoRaWAN application port; `None` for JSON.
    pub port: Option<u8>,
    pub payload: Vec<u8>,
}

impl UplinkMessage {
    pub fn encode(report: &CrowdingReport, transport: Transport) -> Self {
        let (port, payload) = match transport {
            Transport::JsonMqtt => (None, encode_json(report)),
            Transport::Lorawan => (Some(LORA_PORT), encode_lorawan(report).0.to_vec()),
        };
        UplinkMessage { transport, sensor_id: report.sensor_id.clone(), topic: topic_for(&report.sensor_id), port, payload }
    }

    /// Single-line text form for line-oriented sinks: the JSON report
    /// itself, or a [`LoraEnvelope`].
    pub fn to_line(&self) -> String {
        match self.transport {
            Transport::JsonMqtt => String::from_utf8_lossy(&self.payload).into_owned(),
            Transport::Lorawan => serde_json::to_string(&LoraEnvelope {
                sensor_id: self.sensor_id.clone(),
                port: self.port.unwrap_or(LORA_PORT),
                payload_hex: to_hex(&self.payload),
                received_at: None,
            })
            .expect("envelope serializes"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub destination: String,
    pub transport: Transport,
    pub bytes: usize,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct SinkUnavailable(pub String);

impl From<io::Error> for SinkUnavailable {
    fn from(e: io::Error) -> Self {
        SinkUnavailable(e.to_string())
    }
}

pub trait ReportSink {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable>;
}

impl<S: ReportSink + ?Sized> ReportSink for Box<S> {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable> {
        (**self).deliver(msg)
    }
}

/// Line-per-message writer (stdout, or any `Write`).
pub struct WriterSink<W> {
    out: W,
    name: String,
}

impl<W: Write> WriterSink<W> {
    pub fn new(out: W, name: impl Into<String>) -> Self {
        WriterSink { out, name: name.into() }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl WriterSink<io::Stdout> {
    pub fn stdout() -> Self {
        WriterSink::new(io::stdout(), "stdout")
    }
}

impl<W: Write> ReportSink for WriterSink<W> {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable> {
        let line = msg.to_line();
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(Receipt { destination: self.name.clone(), transport: msg.transport, bytes: msg.payload.len() })
    }
}

/// Appends NDJSON lines to a file.
pub struct FileSink {
    path: String,
    out: BufWriter<File>,
}

impl FileSink {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FileSink { path: path.display().to_string(), out: BufWriter::new(file) })
    }
}

impl ReportSink for FileSink {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable> {
        writeln!(self.out, "{}", msg.to_line())?;
        self.out.flush()?;
        Ok(Receipt { destination: self.path.clone(), transport: msg.transport, bytes: msg.payload.len() })
    }
}

/// Test sink: records messages, and can be switched off to simulate an
/// outage.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    inner: Arc<Mutex<MemorySinkState>>,
}

#[derive(Debug, Default)]
struct MemorySinkState {
    delivered: Vec<UplinkMessage>,
    down: bool,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_down(&self, down: bool) {
        self.inner.lock().unwrap().down = down;
    }

    pub fn delivered(&self) -> Vec<UplinkMessage> {
        self.inner.lock().unwrap().delivered.clone()
    }
}

impl ReportSink for MemorySink {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable> {
        let mut st = self.inner.lock().unwrap();
        if st.down {
            return Err(SinkUnavailable("memory sink is down".into()));
        }
        st.delivered.push(msg.clone());
        Ok(Receipt { destination: "memory".into(), transport: msg.transport, bytes: msg.payload.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqttSettings {
    pub host: String,
    #[serde(default = "default_mqtt_port")]
    pub port: u16,
    #[serde(default)]
    pub client_id: Option<String>,
}

fn default_mqtt_port() -> u16 {
    1883
}

/// Publishes to an MQTT broker (QoS 1). The network event loop runs on a
/// background thread; while the broker connection is down, deliveries
/// fail and the publisher queues.
pub struct MqttSink {
    client: rumqttc::Client,
    connected: Arc<AtomicBool>,
    name: String,
}

impl MqttSink {
    pub fn connect(settings: &MqttSettings) -> Self {
        let id = settings.client_id.clone().unwrap_or_else(|| format!("sttk-{}", std::process::id()));
        let mut opts = rumqttc::MqttOptions::new(id, settings.host.clone(), settings.port);
        opts.set_keep_alive(Duration::from_secs(30));
        let (client, mut connection) = rumqttc::Client::new(opts, 64);
        let connected = Arc::new(AtomicBool::new(false));
        let flag = connected.clone();
        thread::spawn(move || {
            for event in connection.iter() {
                match event {
                    Ok(rumqttc::Event::Incoming(rumqttc::Packet::ConnAck(_))) => flag.store(true, Ordering::SeqCst),
                    Ok(_) => {}
                    Err(e) => {
                        log::warn!("mqtt connection: {e}");
                        flag.store(false, Ordering::SeqCst);
                        thread::sleep(Duration::from_secs(1));
                    }
                }
            }
        });
        MqttSink { client, connected, name: format!("mqtt://{}:{}", settings.host, settings.port) }
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::SeqCst)
    }
}

impl ReportSink for MqttSink {
    fn deliver(&mut self, msg: &UplinkMessage) -> Result<Receipt, SinkUnavailable> {
        if !self.is_connected() {
            return Err(SinkUnavailable(format!("{} not connected", self.name)));
        }
        self.client
            .try_publish(msg.topic.clone(), rumqttc::QoS::AtLeastOnce, false, msg.to_line().into_bytes())
            .map_err(|e| SinkUnavailable(e.to_string()))?;
        Ok(Receipt { destination: format!("{}/{}", self.name, msg.topic), transport: msg.transport, bytes: msg.payload.len() })
    }
}

/// Encodes reports for one transport and hands them to a sink. Messages
/// that cannot be delivered wait in a bounded FIFO (oldest dropped first)
/// and go out ahead of the next report.
pub struct Publisher<S> {
    sink: S,
    transport: Transport,
    queue: VecDeque<UplinkMessage>,
    capacity: usize,
    dropped: u64,
}

impl<S: ReportSink> Publisher<S> {
    pub fn new(sink: S, transport: Transport) -> Self {
        Self::with_capacity(sink, transport, DEFAULT_QUEUE_CAPACITY)
    }

    pub fn with_capacity(sink: S, transport: Transport, capacity: usize) -> Self {
        Publisher { sink, transport, queue: VecDeque::new(), capacity: capacity.max(1), dropped: 0 }
    }

    pub fn publish(&mut self, report: &CrowdingReport) -> Result<Receipt, UplinkError> {
        self.queue.push_back(UplinkMessage::encode(report, self.transport));
        while self.queue.len() > self.capacity {
            self.queue.pop_front();
            self.dropped += 1;
        }
        let mut last = None;
        while let Some(msg) = self.queue.front() {
            match self.sink.deliver(msg) {
                Ok(r) => {
                    self.queue.pop_front();
                    last = Some(r);
                }
                Err(e) => {
                    return Err(UplinkError::SinkUnavailable {
                        reason: e.0,
                        queued: self.queue.len(),
                        dropped: self.dropped,
                    })
                }
            }
        }
        Ok(last.expect("queue held at least the new message"))
    }

    /// Retries queued messages; returns how many are still waiting.
    pub fn flush_queue(&mut self) -> usize {
        while let Some(msg) = self.queue.front() {
            if self.sink.deliver(msg).is_err() {
                break;
            }
            self.queue.pop_front();
        }
        self.queue.len()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }
}
