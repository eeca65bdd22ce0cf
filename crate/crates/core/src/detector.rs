//! Per-frame detection: turns each decoded frame into at most one
//! anonymized [`Observation`].
//!
//! * data frames: the station address (located through ToDS/FromDS) is
//!   counted as a connected device;
//! * probe requests from a globally-unique address: counted only when the
//!   vendor prefix belongs to a mobile manufacturer;
//! * probe requests from a locally-administered address: identified by a
//!   64-bit footprint of their Information Elements;
//! * everything else is dropped.
//!
//! MAC addresses never leave this module in plaintext; they are replaced
//! by a salted FNV-1a hash.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::frame::{parse_frame, Frame, FrameKind, InformationElement, MacAddress};
use crate::hash::Fnv1a64;
use crate::oui::{classify_mobile_oui, OuiRegistry};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    ConnectedUe,
    RealProbeMobile,
    VirtualFootprint,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 3] =
        [IdentityKind::ConnectedUe, IdentityKind::RealProbeMobile, IdentityKind::VirtualFootprint];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub kind: IdentityKind,
    #[serde(with = "hex_u64")]
    pub id64: u64,
    pub ts: Timestamp,
    /// Same value as `id64` for the two MAC-based kinds.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "hex_u64_opt")]
    pub raw_mac_hash: Option<u64>,
}

impl Observation {
    fn from_mac(kind: IdentityKind, mac: MacAddress, salt: Salt, ts: Timestamp) -> Self {
        let id = anonymize(mac, salt);
        Observation { kind, id64: id, ts, raw_mac_hash: Some(id) }
    }
}

/// Per-sensor anonymization salt. Rendered as 16 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Salt(pub u64);

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Salt(..)")
    }
}

impl fmt::Display for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Salt {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s.trim_start_matches("0x"), 16).map(Salt)
    }
}

impl Serialize for Salt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Salt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&format_args!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

mod hex_u64_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::hex_u64::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FingerprintConfigError {
    #[error("varying IE {0} is not in the included set")]
    VaryingNotIncluded(u8),
    #[error("IE {0} listed twice")]
    Duplicate(u8),
}

/// Which IEs feed the footprint, and which of those contribute only their
/// id and length bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub included_ie_ids: Vec<u8>,
    pub varying_ie_ids: Vec<u8>,
}

impl Default for FingerprintConfig {
    /// Supported Rates, Extended Supported Rates, DS Parameter Set, HT
    /// Capabilities, VHT Capabilities, Extended Capabilities, RM Enabled
    /// Capabilities, Interworking and Vendor Specific. Only the DS
    /// Parameter Set (the channel) is treated as varying.
    fn default() -> Self {
        FingerprintConfig {
            included_ie_ids: vec![1, 50, 3, 45, 191, 127, 70, 107, 221],
            varying_ie_ids: vec![3],
        }
    }
}

impl FingerprintConfig {
    pub fn validate(&self) -> Result<(), FingerprintConfigError> {
        let mut seen = [false; 256];
        for &id in &self.included_ie_ids {
            if std::mem::replace(&mut seen[usize::from(id)], true) {
                return Err(FingerprintConfigError::Duplicate(id));
            }
        }
        let mut seen_varying = [false; 256];
        for &id in &self.varying_ie_ids {
            if !seen[usize::from(id)] {
                return Err(FingerprintConfigError::VaryingNotIncluded(id));
            }
            if std::mem::replace(&mut seen_varying[usize::from(id)], true) {
                return Err(FingerprintConfigError::Duplicate(id));
            }
        }
        Ok(())
    }

    fn includes(&self, id: u8) -> bool {
        self.included_ie_ids.contains(&id)
    }

    fn varies(&self, id: u8) -> bool {
        self.varying_ie_ids.contains(&id)
    }
}

/// Salted MAC hash: FNV-1a 64 over the salt (8 bytes, big-endian) then the
/// six octets.
pub fn anonymize(mac: MacAddress, salt: Salt) -> u64 {
    let mut h = Fnv1a64::new();
    h.update(&salt.0.to_be_bytes());
    h.update(&mac.0);
    h.finish()
}

/// Footprint over IEs in frame order. Included IEs contribute id and length
/// bytes, plus their value unless marked as varying; other IEs are skipped.
pub fn fingerprint_ies(ies: &[InformationElement], cfg: &FingerprintConfig) -> u64 {
    let mut h = Fnv1a64::new();
    for ie in ies.iter().filter(|ie| cfg.includes(ie.id)) {
        h.update(&[ie.id, ie.len()]);
        if !cfg.varies(ie.id) {
            h.update(&ie.value);
        }
    }
    h.finish()
}

pub fn fingerprint(frame: &Frame, cfg: &FingerprintConfig) -> u64 {
    fingerprint_ies(&frame.ies, cfg)
}

/// Station address of a data frame: the transmitter when heading to the
/// DS, the receiver when coming from it. WDS and IBSS frames, and group
/// addresses, yield nothing.
pub fn locate_ue_mac(frame: &Frame) -> Option<MacAddress> {
    if frame.kind != FrameKind::Data {
        return None;
    }
    let mac = match (frame.fc.to_ds(), frame.fc.from_ds()) {
        (true, false) => frame.addr2?,
        (false, true) => frame.addr1,
        _ => return None,
    };
    (!mac.is_group()).then_some(mac)
}

/// The decision path a frame takes. Exactly one applies to every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Neither data nor probe request.
    Dropped,
    ConnectedUe,
    /// Data frame without a usable station address.
    DataNoStation,
    RealProbeMobile,
    /// Globally-unique source that is not a known mobile vendor.
    RealProbeDiscarded,
    VirtualFootprint,
}

impl Branch {
    pub fn kind(self) -> Option<IdentityKind> {
        match self {
            Branch::ConnectedUe => Some(IdentityKind::ConnectedUe),
            Branch::RealProbeMobile => Some(IdentityKind::RealProbeMobile),
            Branch::VirtualFootprint => Some(IdentityKind::VirtualFootprint),
            _ => None,
        }
    }
}

pub fn classify_branch(frame: &Frame, reg: &OuiRegistry) -> Branch {
    match frame.kind {
        FrameKind::Other => Branch::Dropped,
        FrameKind::Data => match locate_ue_mac(frame) {
            Some(_) => Branch::ConnectedUe,
            None => Branch::DataNoStation,
        },
        FrameKind::ProbeRequest => {
            // management frames always carry addr2
            let Some(sa) = frame.source_address() else { return Branch::Dropped };
            if sa.is_locally_administered() {
                Branch::VirtualFootprint
            } else if classify_mobile_oui(sa, reg) {
                Branch::RealProbeMobile
            } else {
                Branch::RealProbeDiscarded
            }
        }
    }
}

pub fn process_frame(
    frame: &Frame,
    ts: Timestamp,
    cfg: &FingerprintConfig,
    reg: &OuiRegistry,
    salt: Salt,
) -> Option<Observation> {
    match classify_branch(frame, reg) {
        Branch::ConnectedUe => {
            let mac = locate_ue_mac(frame)?;
            Some(Observation::from_mac(IdentityKind::ConnectedUe, mac, salt, ts))
        }
        Branch::RealProbeMobile => {
            let sa = frame.source_address()?;
            Some(Observation::from_mac(IdentityKind::RealProbeMobile, sa, salt, ts))
        }
        Branch::VirtualFootprint => Some(Observation {
            kind: IdentityKind::VirtualFootprint,
            id64: fingerprint(frame, cfg),
            ts,
            raw_mac_hash: None,
        }),
        Branch::Dropped | Branch::DataNoStation | Branch::RealProbeDiscarded => None,
    }
}

/// Tallies of what the detector did with its input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectorStats {
    pub frames: u64,
    pub malformed: u64,
    pub dropped: u64,
    pub data_no_station: u64,
    pub probes_discarded: u64,
    pub connected: u64,
    pub real_probes: u64,
    pub virtual_probes: u64,
}

/// Detector bound to one sensor's configuration.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: FingerprintConfig,
    registry: OuiRegistry,
    salt: Salt,
    stats: DetectorStats,
}

impl Detector {
    pub fn new(cfg: FingerprintConfig, registry: OuiRegistry, salt: Salt) -> Self {
        Detector { cfg, registry, salt, stats: DetectorStats::default() }
    }

    pub fn stats(&self) -> DetectorStats {
        self.stats
    }

    pub fn process(&mut self, frame: &Frame, ts: Timestamp) -> Option<Observation> {
        self.stats.frames += 1;
        let branch = classify_branch(frame, &self.registry);
        let s = &mut self.stats;
        match branch {
            Branch::Dropped => s.dropped += 1,
            Branch::DataNoStation => s.data_no_station += 1,
            Branch::RealProbeDiscarded => s.probes_discarded += 1,
            Branch::ConnectedUe => s.connected += 1,
            Branch::RealProbeMobile => s.real_probes += 1,
            Branch::VirtualFootprint => s.virtual_probes += 1,
        }
        process_frame(frame, ts, &self.cfg, &self.registry, self.salt)
    }

    /// Decodes and processes raw MAC-frame bytes; undecodable frames are
    /// counted as malformed.
    pub fn process_bytes(&mut self, raw: &[u8], ts: Timestamp) -> Option<Observation> {
        match parse_frame(raw) {
            Ok(f) => self.process(&f, ts),
            Err(_) => {
                self.stats.frames += 1;
                self.stats.malformed += 1;
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> OuiRegistry {
        OuiRegistry::from_text("AC:BC:32\tApple, Inc.\t1\n00:00:0C\tCisco Systems, Inc\t0\n").unwrap()
    }

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        assert_eq!(FingerprintConfig::default().validate(), Ok(()));
        let bad = FingerprintConfig { included_ie_ids: vec![1], varying_ie_ids: vec![3] };
        assert_eq!(bad.validate(), Err(FingerprintConfigError::VaryingNotIncluded(3)));
        let dup = FingerprintConfig { included_ie_ids: vec![1, 1], varying_ie_ids: vec![] };
        assert_eq!(dup.validate(), Err(FingerprintConfigError::Duplicate(1)));
    }

    #[test]
    fn no_matching_ies_hash_to_offset_basis() {
        let f = Frame::probe_request(mac("02:00:00:00:00:01"), 0, vec![InformationElement::new(0, *b"ssid")]);
        assert_eq!(fingerprint(&f, &FingerprintConfig::default()), 0xCBF29CE484222325);
    }

    #[test]
    fn varying_ie_value_ignored() {
        let cfg = FingerprintConfig::default();
        let a = vec![InformationElement::new(1, [0x82, 0x84]), InformationElement::new(3, [1])];
        let b = vec![InformationElement::new(1, [0x82, 0x84]), InformationElement::new(3, [11])];
        assert_eq!(fingerprint_ies(&a, &cfg), fingerprint_ies(&b, &cfg));
        let c = vec![InformationElement::new(1, [0x82, 0x8b]), InformationElement::new(3, [1])];
        assert_ne!(fingerprint_ies(&a, &cfg), fingerprint_ies(&c, &cfg));
    }

    #[test]
    fn excluded_ies_do_not_contribute() {
        let cfg = FingerprintConfig::default();
        let a = vec![InformationElement::new(1, [2])];
        let b = vec![InformationElement::new(0, *b"home"), InformationElement::new(1, [2])];
        assert_eq!(fingerprint_ies(&a, &cfg), fingerprint_ies(&b, &cfg));
    }

    #[test]
    fn duplicate_ies_all_count() {
        let cfg = FingerprintConfig::default();
        let one = vec![InformationElement::new(221, [1])];
        let two = vec![InformationElement::new(221, [1]), InformationElement::new(221, [1])];
        assert_ne!(fingerprint_ies(&one, &cfg), fingerprint_ies(&two, &cfg));
    }

    #[test]
    fn anonymize_is_salted_and_deterministic() {
        let m = mac("ac:bc:32:01:02:03");
        assert_eq!(anonymize(m, Salt(7)), anonymize(m, Salt(7)));
        assert_ne!(anonymize(m, Salt(7)), anonymize(m, Salt(8)));
    }

    #[test]
    fn locate_station_by_ds_bits() {
        let sta = mac("ac:bc:32:01:02:03");
        let ap = mac("00:00:0c:aa:bb:cc");
        let mut f = Frame::data_to_ds(sta, ap, MacAddress::BROADCAST, 1, vec![]);
        assert_eq!(locate_ue_mac(&f), Some(sta));

        f.fc = crate::frame::FrameControl::new(crate::frame::FrameType::Data, 0, false, true);
        f.addr1 = MacAddress::BROADCAST;
        assert_eq!(locate_ue_mac(&f), None);
        f.addr1 = sta;
        assert_eq!(locate_ue_mac(&f), Some(sta));

        f.fc = crate::frame::FrameControl::new(crate::frame::FrameType::Data, 0, true, true);
        assert_eq!(locate_ue_mac(&f), None);
        f.fc = crate::frame::FrameControl::new(crate::frame::FrameType::Data, 0, false, false);
        assert_eq!(locate_ue_mac(&f), None);
    }

    #[test]
    fn branches() {
        let reg = registry();
        let cfg = FingerprintConfig::default();
        let ts = Timestamp::from_secs(5);
        let salt = Salt(42);

        let sta = mac("00:00:0c:01:02:03"); // non-mobile vendor, still counted on data
        let data = Frame::data_to_ds(sta, mac("00:00:0c:aa:bb:cc"), MacAddress::BROADCAST, 1, vec![]);
        let obs = process_frame(&data, ts, &cfg, &reg, salt).unwrap();
        assert_eq!(obs.kind, IdentityKind::ConnectedUe);
        assert_eq!(obs.id64, anonymize(sta, salt));
        assert_eq!(obs.raw_mac_hash, Some(obs.id64));

        let phone = Frame::probe_request(mac("ac:bc:32:01:02:03"), 1, vec![]);
        assert_eq!(process_frame(&phone, ts, &cfg, &reg, salt).unwrap().kind, IdentityKind::RealProbeMobile);

        let router = Frame::probe_request(sta, 1, vec![]);
        assert_eq!(process_frame(&router, ts, &cfg, &reg, salt), None);

        let unknown = Frame::probe_request(mac("00:11:22:33:44:55"), 1, vec![]);
        assert_eq!(process_frame(&unknown, ts, &cfg, &reg, salt), None);

        let virt = Frame::probe_request(mac("02:00:00:00:00:01"), 1, vec![InformationElement::new(1, [0x82, 0x84])]);
        let obs = process_frame(&virt, ts, &cfg, &reg, salt).unwrap();
        assert_eq!(obs.kind, IdentityKind::VirtualFootprint);
        assert_eq!(obs.raw_mac_hash, None);

        let beacon = Frame::beacon(mac("00:00:0c:aa:bb:cc"), 1, vec![]);
        assert_eq!(process_frame(&beacon, ts, &cfg, &reg, salt), None);
    }

    #[test]
    fn detector_counts_malformed() {
        let mut d = Detector::new(FingerprintConfig::default(), registry(), Salt(1));
        assert_eq!(d.process_bytes(&[0x40, 0], Timestamp::ZERO), None);
        assert_eq!(d.stats().malformed, 1);
        assert_eq!(d.stats().frames, 1);
    }

    #[test]
    fn observation_json_uses_hex_ids() {
        let o = Observation { kind: IdentityKind::VirtualFootprint, id64: 0xab, ts: Timestamp::from_secs(1), raw_mac_hash: None };
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(s, r#"{"kind":"virtual_footprint","id64":"00000000000000ab","ts":1000000}"#);
        assert_eq!(serde_json::from_str::<Observation>(&s).unwrap(), o);
    }
}
