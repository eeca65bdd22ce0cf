//! Synthetic 802.11 traces with exact ground truth.
//!
//! A [`Scenario`] describes a device population; [`generate`] turns it
//! into a link-type-105 pcap and a [`GroundTruth`] recording when every
//! device actually put a frame on the air. Output depends only on the
//! scenario (including its seed).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::capture::{PcapWriter, LINKTYPE_IEEE802_11};
use crate::frame::{Frame, InformationElement, MacAddress};
use crate::time::Timestamp;
use crate::window::in_window;

/// Epoch-aligned to 300 s so default windows line up with the trace start.
pub const DEFAULT_START_TS: u64 = 1_699_999_800;
const INTRA_BURST_GAP_US: u64 = 20_000;
const INTRA_BURST_JITTER_US: u64 = 2_000;
/// Ceiling on generated frames, to keep hostile scenarios bounded.
pub const MAX_FRAMES: u64 = 20_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceMode {
    AssociatedData,
    ProbingReal,
    ProbingRandomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    #[default]
    PerBurst,
    PerProbe,
}

/// Three-byte vendor prefix, written `AA:BB:CC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Oui(pub [u8; 3]);

impl Serialize for Oui {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&format_args!("{:02X}:{:02X}:{:02X}", self.0[0], self.0[1], self.0[2]))
    }
}

impl<'de> Deserialize<'de> for Oui {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mac: MacAddress = format!("{s}:00:00:00").parse().map_err(serde::de::Error::custom)?;
        let o = mac.octets();
        Ok(Oui([o[0], o[1], o[2]]))
    }
}

/// Template element; the value is written as hex in scenario files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IeSpec {
    pub id: u8,
    #[serde(with = "hex_bytes", default)]
    pub value: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::uplink::to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        crate::uplink::from_hex(&s).ok_or_else(|| serde::de::Error::custom(format!("bad hex {s:?}")))
    }
}

impl IeSpec {
    pub fn new(id: u8, value: impl Into<Vec<u8>>) -> Self {
        IeSpec { id, value: value.into() }
    }
}

/// A typical phone probe: wildcard SSID, rates, extended rates, channel.
pub fn default_ie_template() -> Vec<IeSpec> {
    vec![
        IeSpec::new(0, vec![]),
        IeSpec::new(1, vec![0x02, 0x04, 0x0b, 0x16, 0x0c, 0x12, 0x18, 0x24]),
        IeSpec::new(50, vec![0x30, 0x48, 0x60, 0x6c]),
        IeSpec::new(3, vec![6]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub oui: Oui,
    #[serde(default = "yes")]
    pub mobile: bool,
    pub mode: DeviceMode,
    /// Defaults to [`default_ie_template`].
    #[serde(default)]
    pub ie_template: Option<Vec<IeSpec>>,
    #[serde(default = "default_burst_size")]
    pub burst_size: u32,
    pub burst_interval_s: u64,
    /// Randomized mode only.
    #[serde(default)]
    pub randomization: Randomization,
    /// Seconds relative to the scenario start, inclusive. Defaults to the
    /// whole scenario.
    #[serde(default)]
    pub active: Option<(u64, u64)>,
    /// Associated devices that also send probe requests from their real
    /// address (offset by half an interval).
    #[serde(default)]
    pub also_probes: bool,
    /// Number of identical devices this profile stands for.
    #[serde(default = "one")]
    pub count: u32,
}

fn yes() -> bool {
    true
}

fn one() -> u32 {
    1
}

fn default_burst_size() -> u32 {
    3
}

impl DeviceProfile {
    pub fn new(oui: [u8; 3], mode: DeviceMode, burst_interval_s: u64) -> Self {
        DeviceProfile {
            oui: Oui(oui),
            mobile: true,
            mode,
            ie_template: None,
            burst_size: 3,
            burst_interval_s,
            randomization: Randomization::PerBurst,
            active: None,
            also_probes: false,
            count: 1,
        }
    }

    pub fn template(&self) -> Vec<IeSpec> {
        self.ie_template.clone().unwrap_or_else(default_ie_template)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// One access point beaconing at this period, if set.
    #[serde(default)]
    pub beacon_interval_s: Option<u64>,
    /// Probing devices whose vendor is not a mobile manufacturer.
    #[serde(default)]
    pub nonmobile_probers: u32,
    #[serde(default = "cisco")]
    pub nonmobile_oui: Oui,
    #[serde(default = "thirty")]
    pub nonmobile_interval_s: u64,
}

fn cisco() -> Oui {
    Oui([0x00, 0x00, 0x0c])
}

fn thirty() -> u64 {
    30
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { beacon_interval_s: None, nonmobile_probers: 0, nonmobile_oui: cisco(), nonmobile_interval_s: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration_s: u64,
    /// Unix seconds of the trace start.
    #[serde(default = "default_start")]
    pub start_ts: u64,
    pub seed: u64,
    pub devices: Vec<DeviceProfile>,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Probability that any single frame is lost before capture.
    #[serde(default)]
    pub frame_drop_prob: f64,
}

fn default_start() -> u64 {
    DEFAULT_START_TS
}

impl Scenario {
    pub fn new(duration_s: u64, seed: u64, devices: Vec<DeviceProfile>) -> Self {
        Scenario { duration_s, start_ts: DEFAULT_START_TS, seed, devices, noise: NoiseConfig::default(), frame_drop_prob: 0.0 }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn start(&self) -> Timestamp {
        Timestamp::from_secs(self.start_ts)
    }

    pub fn end(&self) -> Timestamp {
        Timestamp::from_secs(self.start_ts + self.duration_s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_s == 0 {
            return Err(invalid("duration_s must be positive"));
        }
        // pcap timestamps are 32-bit seconds
        if self.start_ts.saturating_add(self.duration_s) > u64::from(u32::MAX) {
            return Err(invalid("scenario extends beyond the pcap time range"));
        }
        if !(0.0..1.0).contains(&self.frame_drop_prob) {
            return Err(invalid("frame_drop_prob must be in [0, 1)"));
        }
        let mut estimate: u64 = 0;
        for (i, d) in self.devices.iter().enumerate() {
            let ctx = |m: &str| invalid(format!("device {i}: {m}"));
            if d.burst_interval_s == 0 {
                return Err(ctx("burst_interval_s must be positive"));
            }
            if d.burst_size == 0 {
                return Err(ctx("burst_size must be positive"));
            }
            let burst_span = u64::from(d.burst_size) * (INTRA_BURST_GAP_US + INTRA_BURST_JITTER_US);
            if burst_span >= d.burst_interval_s * 1_000_000 {
                return Err(ctx("burst does not fit in burst_interval_s"));
            }
            if d.count == 0 {
                return Err(ctx("count must be positive"));
            }
            if d.mode != DeviceMode::ProbingRandomized && d.oui.0[0] & 0x03 != 0 {
                return Err(ctx("real-address OUI must be globally unique and unicast"));
            }
            if d.also_probes && d.mode != DeviceMode::AssociatedData {
                return Err(ctx("also_probes only applies to associated_data devices"));
            }
            if let Some((a, b)) = d.active {
                if a > b {
                    return Err(ctx("active span is reversed"));
                }
            }
            if let Some(t) = &d.ie_template {
                if t.iter().any(|ie| ie.value.len() > 255) {
                    return Err(ctx("IE value longer than 255 bytes"));
                }
                let body: usize = t.iter().map(|ie| ie.value.len() + 2).sum();
                if body > 2304 {
                    return Err(ctx("IE template exceeds the 802.11 frame body limit"));
                }
            }
            let per_burst = u64::from(d.burst_size) * if d.also_probes { 2 } else { 1 };
            let bursts = self.duration_s / d.burst_interval_s + 1;
            estimate = estimate.saturating_add(per_burst.saturating_mul(bursts).saturating_mul(u64::from(d.count)));
        }
        if self.noise.beacon_interval_s == Some(0) || self.noise.nonmobile_interval_s == 0 {
            return Err(invalid("noise intervals must be positive"));
        }
        if self.noise.nonmobile_oui.0[0] & 0x03 != 0 {
            return Err(invalid("noise OUI must be globally unique and unicast"));
        }
        if let Some(b) = self.noise.beacon_interval_s {
            estimate = estimate.saturating_add(self.duration_s / b + 1);
        }
        estimate = estimate.saturating_add(
            u64::from(self.noise.nonmobile_probers).saturating_mul(3 * (self.duration_s / self.noise.nonmobile_interval_s + 1)),
        );
        if estimate > MAX_FRAMES {
            return Err(invalid(format!("scenario would emit about {estimate} frames (limit {MAX_FRAMES})")));
        }
        Ok(())
    }
}

/// When one simulated device was on the air.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceTruth {
    pub index: usize,
    /// Position of the generating profile in `Scenario::devices`.
    pub profile: usize,
    pub mode: DeviceMode,
    pub mobile: bool,
    /// Randomized devices with byte-identical templates share a group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_group: Option<usize>,
    /// Distinct source addresses the device used.
    pub distinct_addresses: usize,
    /// Capture times (µs since the epoch) of data frames that were emitted.
    pub data_times: Vec<u64>,
    pub probe_times: Vec<u64>,
}

impl DeviceTruth {
    fn any_in(times: &[u64], now: Timestamp, window: Duration) -> bool {
        times.iter().any(|&t| in_window(Timestamp::from_micros(t), now, window))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub start_ts: u64,
    pub duration_s: u64,
    pub frames: u64,
    pub dropped_frames: u64,
    pub noise_frames: u64,
    pub devices: Vec<DeviceTruth>,
}

/// Devices emitting inside `(now - window, now]`, split the way the
/// detector splits them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TruthCount {
    pub connected: u32,
    /// Mobile-vendor devices probing with their real address and not connected.
    pub probes_real: u32,
    /// Randomizing devices.
    pub probes_virtual: u32,
    pub total: u32,
    /// Distinct template groups among `probes_virtual`: the best a
    /// footprint can resolve.
    pub expected_virtual: u32,
    pub expected_total: u32,
    /// Real-address probers from non-mobile vendors; never counted.
    pub nonmobile_real: u32,
}

pub fn ground_truth_count(truth: &GroundTruth, now: Timestamp, window: Duration) -> TruthCount {
    let mut c = TruthCount::default();
    let mut groups = HashSet::new();
    for d in &truth.devices {
        let data = DeviceTruth::any_in(&d.data_times, now, window);
        let probe = DeviceTruth::any_in(&d.probe_times, now, window);
        match d.mode {
            DeviceMode::AssociatedData if data => c.connected += 1,
            DeviceMode::AssociatedData | DeviceMode::ProbingReal if probe => {
                if d.mobile {
                    c.probes_real += 1;
                } else {
                    c.nonmobile_real += 1;
                }
            }
            DeviceMode::ProbingRandomized if probe => {
                c.probes_virtual += 1;
                groups.insert(d.template_group);
            }
            _ => {}
        }
    }
    c.total = c.connected + c.probes_real + c.probes_virtual;
    c.expected_virtual = groups.len() as u32;
    c.expected_total = c.connected + c.probes_real + c.expected_virtual;
    c
}

pub struct GeneratedTrace {
    pub pcap: Vec<u8>,
    pub truth: GroundTruth,
}

struct Emission {
    ts: u64,
    order: u64,
    bytes: Vec<u8>,
}

struct Gen {
    rng: ChaCha8Rng,
    used_macs: HashSet<MacAddress>,
    drop_prob: f64,
    emissions: Vec<Emission>,
    dropped: u64,
    order: u64,
}

impl Gen {
    fn unique_mac(&mut self, oui: [u8; 3]) -> MacAddress {
        loop {
            let tail: [u8; 3] = self.rng.gen();
            let mac = MacAddress([oui[0], oui[1], oui[2], tail[0], tail[1], tail[2]]);
            if self.used_macs.insert(mac) {
                return mac;
            }
        }
    }

    /// Locally administered, unicast, never reused.
    fn random_mac(&mut self) -> MacAddress {
        loop {
            let mut o: [u8; 6] = self.rng.gen();
            o[0] = (o[0] & 0xfc) | 0x02;
            let mac = MacAddress(o);
            if self.used_macs.insert(mac) {
                return mac;
            }
        }
    }

    /// Returns whether the frame made it into the capture.
    fn emit(&mut self, ts: u64, frame: &Frame) -> bool {
        let lost = self.rng.gen::<f64>() < self.drop_prob;
        self.order += 1;
        if lost {
            self.dropped += 1;
            return false;
        }
        self.emissions.push(Emission { ts, order: self.order, bytes: frame.to_bytes() });
        true
    }

    fn burst_offsets(&mut self, n: u32) -> Vec<u64> {
        (0..u64::from(n))
            .map(|j| j * INTRA_BURST_GAP_US + self.rng.gen_range(0..INTRA_BURST_JITTER_US))
            .collect()
    }
}

/// Burst start times (µs, absolute) for a periodic emitter.
fn burst_starts(scn: &Scenario, active: Option<(u64, u64)>, interval_s: u64, phase_us: u64) -> Vec<u64> {
    let start_us = scn.start_ts * 1_000_000;
    let (a, b) = active.unwrap_or((0, scn.duration_s));
    let first = a * 1_000_000 + phase_us;
    let last_incl = b.saturating_mul(1_000_000);
    let end_excl = scn.duration_s * 1_000_000;
    let step = interval_s * 1_000_000;
    let mut out = Vec::new();
    let mut t = first;
    while t <= last_incl && t < end_excl {
        out.push(start_us + t);
        t += step;
    }
    out
}

fn to_ies(t: &[IeSpec]) -> Vec<InformationElement> {
    t.iter().map(|ie| InformationElement::new(ie.id, ie.value.clone())).collect()
}

fn beacon_body(channel: u8) -> Vec<u8> {
    let mut body = vec![0u8; 8]; // TSF timestamp
    body.extend_from_slice(&100u16.to_le_bytes()); // beacon interval, TU
    body.extend_from_slice(&0x0431u16.to_le_bytes()); // capabilities
    for ie in [
        InformationElement::new(0, *b"sttk-sim"),
        InformationElement::new(1, [0x82, 0x84, 0x8b, 0x96, 0x0c, 0x12, 0x18, 0x24]),
        InformationElement::new(3, [channel]),
    ] {
        ie.write_to(&mut body);
    }
    body
}

const LLC_SNAP_IPV4: [u8; 8] = [0xaa, 0xaa, 0x03, 0x00, 0x00, 0x00, 0x08, 0x00];

pub fn generate(scn: &Scenario) -> Result<GeneratedTrace, ScenarioError> {
    scn.validate()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(scn.seed),
        used_macs: HashSet::new(),
        drop_prob: scn.frame_drop_prob,
        emissions: Vec::new(),
        dropped: 0,
        order: 0,
    };
    let ap = g.unique_mac(scn.noise.nonmobile_oui.0);
    let gateway = g.unique_mac(scn.noise.nonmobile_oui.0);

    let mut template_groups: HashMap<Vec<IeSpec>, usize> = HashMap::new();
    let mut devices = Vec::new();
    let mut index = 0;
    for (pi, profile) in scn.devices.iter().enumerate() {
        let template = profile.template();
        let group = (profile.mode == DeviceMode::ProbingRandomized).then(|| {
            let next = template_groups.len();
            *template_groups.entry(template.clone()).or_insert(next)
        });
        let ies = to_ies(&template);
        for _ in 0..profile.count {
            let mut truth = DeviceTruth {
                index,
                profile: pi,
                mode: profile.mode,
                mobile: profile.mobile,
                template_group: group,
                distinct_addresses: 0,
                data_times: Vec::new(),
                probe_times: Vec::new(),
            };
            index += 1;
            let interval_us = profile.burst_interval_s * 1_000_000;
            let phase = g.rng.gen_range(0..interval_us);
            let mut seq: u16 = g.rng.gen_range(0..4096);
            let mut addresses = HashSet::new();

            match profile.mode {
                DeviceMode::AssociatedData => {
                    let mac = g.unique_mac(profile.oui.0);
                    addresses.insert(mac);
                    for t0 in burst_starts(scn, profile.active, profile.burst_interval_s, phase) {
                        for off in g.burst_offsets(profile.burst_size) {
                            let mut payload = LLC_SNAP_IPV4.to_vec();
                            payload.extend_from_slice(&[0x45, 0, 0, 20, 0, 0, 0x40, 0, 64, 17, 0, 0]);
                            let f = Frame::data_to_ds(mac, ap, gateway, seq, payload);
                            seq = (seq + 1) & 0x0fff;
                            if g.emit(t0 + off, &f) {
                                truth.data_times.push(t0 + off);
                            }
                        }
                    }
                    if profile.also_probes {
                        let probe_phase = (phase + interval_us / 2) % interval_us;
                        for t0 in burst_starts(scn, profile.active, profile.burst_interval_s, probe_phase) {
                            for off in g.burst_offsets(profile.burst_size) {
                                let f = Frame::probe_request(mac, seq, ies.clone());
                                seq = (seq + 1) & 0x0fff;
                                if g.emit(t0 + off, &f) {
                                    truth.probe_times.push(t0 + off);
                                }
                            }
                        }
                    }
                }
                DeviceMode::ProbingReal => {
                    let mac = g.unique_mac(profile.oui.0);
                    addresses.insert(mac);
                    for t0 in burst_starts(scn, profile.active, profile.burst_interval_s, phase) {
                        for off in g.burst_offsets(profile.burst_size) {
                            let f = Frame::probe_request(mac, seq, ies.clone());
                            seq = (seq + 1) & 0x0fff;
                            if g.emit(t0 + off, &f) {
                                truth.probe_times.push(t0 + off);
                            }
                        }
                    }
                }
                DeviceMode::ProbingRandomized => {
                    for t0 in burst_starts(scn, profile.active, profile.burst_interval_s, phase) {
                        let mut mac = g.random_mac();
                        let offsets = g.burst_offsets(profile.burst_size);
                        for (j, off) in offsets.into_iter().enumerate() {
                            if j > 0 && profile.randomization == Randomization::PerProbe {
                                mac = g.random_mac();
                            }
                            let f = Frame::probe_request(mac, seq, ies.clone());
                            seq = (seq + 1) & 0x0fff;
                            if g.emit(t0 + off, &f) {
                                truth.probe_times.push(t0 + off);
                                addresses.insert(mac);
                            }
                        }
                    }
                }
            }
            truth.distinct_addresses = addresses.len();
            devices.push(truth);
        }
    }

    let device_frames = g.emissions.len() as u64;
    if let Some(interval) = scn.noise.beacon_interval_s {
        let mut seq = 0u16;
        for t in burst_starts(scn, None, interval, 0) {
            let f = Frame::beacon(ap, seq, beacon_body(6));
            seq = (seq + 1) & 0x0fff;
            g.emit(t, &f);
        }
    }
    for _ in 0..scn.noise.nonmobile_probers {
        let mac = g.unique_mac(scn.noise.nonmobile_oui.0);
        let interval = scn.noise.nonmobile_interval_s;
        let phase = g.rng.gen_range(0..interval * 1_000_000);
        let ies = to_ies(&default_ie_template());
        let mut seq = 0u16;
        for t0 in burst_starts(scn, None, interval, phase) {
            for off in g.burst_offsets(3) {
                let f = Frame::probe_request(mac, seq, ies.clone());
                seq = (seq + 1) & 0x0fff;
                g.emit(t0 + off, &f);
            }
        }
    }
    let noise_frames = g.emissions.len() as u64 - device_frames;

    g.emissions.sort_by_key(|e| (e.ts, e.order));
    let mut w = PcapWriter::new(Vec::new(), LINKTYPE_IEEE802_11).expect("in-memory write");
    for e in &g.emissions {
        w.write_record(Timestamp::from_micros(e.ts), &e.bytes).map_err(|e| invalid(e.to_string()))?;
    }

    for d in &mut devices {
        d.data_times.sort_unstable();
        d.probe_times.sort_unstable();
    }
    Ok(GeneratedTrace {
        pcap: w.into_inner(),
        truth: GroundTruth {
            start_ts: scn.start_ts,
            duration_s: scn.duration_s,
            frames: g.emissions.len() as u64,
            dropped_frames: g.dropped,
            noise_frames,
            devices,
        },
    })
}

/// Per-template-group device counts, handy for reading collapse results.
pub fn template_group_sizes(truth: &GroundTruth) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for d in &truth.devices {
        if let Some(g) = d.template_group {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}
