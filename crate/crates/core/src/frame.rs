//! IEEE 802.11 MAC frame decoding.
//!
//! Input starts at the MAC header (radiotap already stripped, no trailing
//! FCS). The decoder classifies every frame from its Frame Control field,
//! pulls out the address fields, and for probe requests walks the
//! Information Element TLVs of the frame body.
//!
//! Every decoded [`Frame`] keeps the bytes that follow its MAC header, so
//! [`Frame::to_bytes`] reproduces the input exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Shortest frame the decoder accepts (Frame Control + Duration + addr1).
pub const MIN_FRAME_LEN: usize = 10;
/// Fixed management header: FC, duration, three addresses, sequence control.
pub const MGMT_HEADER_LEN: usize = 24;

const PROBE_REQUEST_SUBTYPE: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame too short: {len} bytes, {kind} header needs {need}")]
    TooShort { len: usize, need: usize, kind: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid MAC address: {0:?}")]
pub struct MacParseError(pub String);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);

    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// Randomized ("virtual") addresses carry the U/L bit, 0x02 of the
    /// first octet.
    pub const fn is_locally_administered(&self) -> bool {
        self.0[0] & 0x02 != 0
    }

    /// Multicast/broadcast (I/G bit, 0x01 of the first octet).
    pub const fn is_group(&self) -> bool {
        self.0[0] & 0x01 != 0
    }

    /// 24-bit vendor prefix, octets 0..3.
    pub const fn oui(&self) -> u32 {
        (self.0[0] as u32) << 16 | (self.0[1] as u32) << 8 | self.0[2] as u32
    }

    fn from_slice(b: &[u8]) -> Self {
        let mut o = [0u8; 6];
        o.copy_from_slice(&b[..6]);
        MacAddress(o)
    }
}

pub fn is_locally_administered(mac: MacAddress) -> bool {
    mac.is_locally_administered()
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

impl FromStr for MacAddress {
    type Err = MacParseError;

    /// Accepts `aa:bb:cc:dd:ee:ff`, `aa-bb-...` or 12 bare hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        if hex.len() != 12 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(MacParseError(s.to_string()));
        }
        let mut o = [0u8; 6];
        for (i, byte) in o.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| MacParseError(s.to_string()))?;
        }
        Ok(MacAddress(o))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Management,
    Control,
    Data,
    /// Type 3 (reserved before 802.11ah, "extension" after).
    Extension,
}

impl FrameType {
    fn from_bits(b: u8) -> Self {
        match b & 0x3 {
            0 => FrameType::Management,
            1 => FrameType::Control,
            2 => FrameType::Data,
            _ => FrameType::Extension,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            FrameType::Management => 0,
            FrameType::Control => 1,
            FrameType::Data => 2,
            FrameType::Extension => 3,
        }
    }
}

/// The first two bytes of every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameControl {
    pub version: u8,
    pub type_field: FrameType,
    pub subtype: u8,
    /// Second byte: ToDS, FromDS, MoreFrag, Retry, PwrMgt, MoreData, Protected, Order.
    pub flags: u8,
}

impl FrameControl {
    pub const TO_DS: u8 = 0x01;
    pub const FROM_DS: u8 = 0x02;

    pub fn from_bytes(b: [u8; 2]) -> Self {
        FrameControl {
            version: b[0] & 0x3,
            type_field: FrameType::from_bits(b[0] >> 2),
            subtype: b[0] >> 4,
            flags: b[1],
        }
    }

    pub fn to_bytes(self) -> [u8; 2] {
        [
            (self.version & 0x3) | self.type_field.bits() << 2 | (self.subtype & 0xf) << 4,
            self.flags,
        ]
    }

    pub fn new(type_field: FrameType, subtype: u8, to_ds: bool, from_ds: bool) -> Self {
        let mut flags = 0;
        if to_ds {
            flags |= Self::TO_DS;
        }
        if from_ds {
            flags |= Self::FROM_DS;
        }
        FrameControl { version: 0, type_field, subtype: subtype & 0xf, flags }
    }

    pub fn to_ds(&self) -> bool {
        self.flags & Self::TO_DS != 0
    }

    pub fn from_ds(&self) -> bool {
        self.flags & Self::FROM_DS != 0
    }

    pub fn kind(&self) -> FrameKind {
        match (self.type_field, self.subtype) {
            (FrameType::Management, PROBE_REQUEST_SUBTYPE) => FrameKind::ProbeRequest,
            (FrameType::Data, _) => FrameKind::Data,
            _ => FrameKind::Other,
        }
    }

    /// QoS data subtypes have bit 0x8 set and carry a 2-byte QoS Control field.
    fn has_qos(&self) -> bool {
        self.type_field == FrameType::Data && self.subtype & 0x8 != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    ProbeRequest,
    Data,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InformationElement {
    pub id: u8,
    pub value: Vec<u8>,
}

impl InformationElement {
    pub fn new(id: u8, value: impl Into<Vec<u8>>) -> Self {
        let value = value.into();
        assert!(value.len() <= 255, "IE value longer than 255 bytes");
        InformationElement { id, value }
    }

    pub fn len(&self) -> u8 {
        self.value.len() as u8
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.id);
        out.push(self.len());
        out.extend_from_slice(&self.value);
    }
}

/// Walks the TLV list in order. A header or value that runs past the end of
/// `body` ends the walk; everything before it is kept.
pub fn extract_ies(body: &[u8]) -> Vec<InformationElement> {
    let mut ies = Vec::new();
    let mut rest = body;
    while let [id, len, tail @ ..] = rest {
        let len = usize::from(*len);
        if tail.len() < len {
            break;
        }
        ies.push(InformationElement { id: *id, value: tail[..len].to_vec() });
        rest = &tail[len..];
    }
    ies
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub fc: FrameControl,
    pub duration: u16,
    pub addr1: MacAddress,
    pub addr2: Option<MacAddress>,
    pub addr3: Option<MacAddress>,
    /// Raw sequence-control field (management and data frames).
    pub seq_ctrl: Option<u16>,
    /// WDS frames (ToDS and FromDS both set).
    pub addr4: Option<MacAddress>,
    pub qos: Option<u16>,
    /// Probe-request IEs, in frame order. Empty for other kinds.
    pub ies: Vec<InformationElement>,
    /// Everything after the MAC header.
    pub body: Vec<u8>,
}

impl Frame {
    /// 12-bit sequence number.
    pub fn seq(&self) -> Option<u16> {
        self.seq_ctrl.map(|s| s >> 4)
    }

    /// Transmitter of a probe request or management frame.
    pub fn source_address(&self) -> Option<MacAddress> {
        self.addr2
    }

    pub fn header_len(&self) -> usize {
        let mut n = 4 + 6;
        if self.addr2.is_some() {
            n += 6;
        }
        if self.addr3.is_some() {
            n += 6;
        }
        if self.seq_ctrl.is_some() {
            n += 2;
        }
        if self.addr4.is_some() {
            n += 6;
        }
        if self.qos.is_some() {
            n += 2;
        }
        n
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.body.len());
        out.extend_from_slice(&self.fc.to_bytes());
        out.extend_from_slice(&self.duration.to_le_bytes());
        out.extend_from_slice(&self.addr1.0);
        if let Some(a) = self.addr2 {
            out.extend_from_slice(&a.0);
        }
        if let Some(a) = self.addr3 {
            out.extend_from_slice(&a.0);
        }
        if let Some(s) = self.seq_ctrl {
            out.extend_from_slice(&s.to_le_bytes());
        }
        if let Some(a) = self.addr4 {
            out.extend_from_slice(&a.0);
        }
        if let Some(q) = self.qos {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&self.body);
        out
    }

    /// A probe request as a station would send it: broadcast DA/BSSID.
    pub fn probe_request(sa: MacAddress, seq: u16, ies: Vec<InformationElement>) -> Frame {
        let mut body = Vec::new();
        for ie in &ies {
            ie.write_to(&mut body);
        }
        Frame {
            kind: FrameKind::ProbeRequest,
            fc: FrameControl::new(FrameType::Management, PROBE_REQUEST_SUBTYPE, false, false),
            duration: 0,
            addr1: MacAddress::BROADCAST,
            addr2: Some(sa),
            addr3: Some(MacAddress::BROADCAST),
            seq_ctrl: Some((seq & 0x0fff) << 4),
            addr4: None,
            qos: None,
            ies,
            body,
        }
    }

    /// A plain (non-QoS) data frame travelling station -> AP (ToDS=1).
    pub fn data_to_ds(sta: MacAddress, bssid: MacAddress, da: MacAddress, seq: u16, payload: Vec<u8>) -> Frame {
        Frame {
            kind: FrameKind::Data,
            fc: FrameControl::new(FrameType::Data, 0, true, false),
            duration: 0x002c,
            addr1: bssid,
            addr2: Some(sta),
            addr3: Some(da),
            seq_ctrl: Some((seq & 0x0fff) << 4),
            addr4: None,
            qos: None,
            ies: Vec::new(),
            body: payload,
        }
    }

    /// Beacon; `body` must already hold timestamp, interval, capabilities and IEs.
    pub fn beacon(bssid: MacAddress, seq: u16, body: Vec<u8>) -> Frame {
        Frame {
            kind: FrameKind::Other,
            fc: FrameControl::new(FrameType::Management, 8, false, false),
            duration: 0,
            addr1: MacAddress::BROADCAST,
            addr2: Some(bssid),
            addr3: Some(bssid),
            seq_ctrl: Some((seq & 0x0fff) << 4),
            addr4: None,
            qos: None,
            ies: Vec::new(),
            body,
        }
    }
}

fn too_short(len: usize, need: usize, kind: &'static str) -> FrameError {
    FrameError::TooShort { len, need, kind }
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

/// Decodes one MAC frame. Fails only when `raw` is shorter than the header
/// its Frame Control field calls for.
pub fn parse_frame(raw: &[u8]) -> Result<Frame, FrameError> {
    if raw.len() < MIN_FRAME_LEN {
        return Err(too_short(raw.len(), MIN_FRAME_LEN, "any"));
    }
    let fc = FrameControl::from_bytes([raw[0], raw[1]]);
    let kind = fc.kind();
    let duration = le16(raw, 2);
    let addr1 = MacAddress::from_slice(&raw[4..]);

    let mut frame = Frame {
        kind,
        fc,
        duration,
        addr1,
        addr2: None,
        addr3: None,
        seq_ctrl: None,
        addr4: None,
        qos: None,
        ies: Vec::new(),
        body: Vec::new(),
    };

    let header_len = match fc.type_field {
        FrameType::Management => {
            if raw.len() < MGMT_HEADER_LEN {
                return Err(too_short(raw.len(), MGMT_HEADER_LEN, "management"));
            }
            MGMT_HEADER_LEN
        }
        FrameType::Data => {
            let mut need = MGMT_HEADER_LEN;
            if fc.to_ds() && fc.from_ds() {
                need += 6;
            }
            if fc.has_qos() {
                need += 2;
            }
            if raw.len() < need {
                return Err(too_short(raw.len(), need, "data"));
            }
            need
        }
        // Control and extension frames: addr1 always, addr2 when there is room.
        FrameType::Control | FrameType::Extension => {
            if raw.len() >= 16 {
                16
            } else {
                MIN_FRAME_LEN
            }
        }
    };

    if header_len >= 16 {
        frame.addr2 = Some(MacAddress::from_slice(&raw[10..]));
    }
    if header_len >= MGMT_HEADER_LEN {
        frame.addr3 = Some(MacAddress::from_slice(&raw[16..]));
        frame.seq_ctrl = Some(le16(raw, 22));
    }
    let mut at = MGMT_HEADER_LEN;
    if fc.type_field == FrameType::Data {
        if fc.to_ds() && fc.from_ds() {
            frame.addr4 = Some(MacAddress::from_slice(&raw[at..]));
            at += 6;
        }
        if fc.has_qos() {
            frame.qos = Some(le16(raw, at));
        }
    }

    frame.body = raw[header_len..].to_vec();
    if kind == FrameKind::ProbeRequest {
        frame.ies = extract_ies(&frame.body);
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mgmt(fc0: u8) -> Vec<u8> {
        let mut v = vec![fc0, 0x00, 0, 0];
        v.extend_from_slice(&[0xff; 6]);
        v.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        v.extend_from_slice(&[0xff; 6]);
        v.extend_from_slice(&[0x10, 0x00]);
        v
    }

    #[test]
    fn classifies_probe_request() {
        let mut raw = mgmt(0x40);
        raw.extend_from_slice(&[0x01, 0x02, 0x82, 0x84]);
        let f = parse_frame(&raw).unwrap();
        assert_eq!(f.kind, FrameKind::ProbeRequest);
        assert_eq!(f.source_address(), Some("02:00:00:00:00:01".parse().unwrap()));
        assert_eq!(f.ies, vec![InformationElement::new(1, [0x82, 0x84])]);
        assert_eq!(f.seq(), Some(1));
    }

    #[test]
    fn classifies_data_to_ds() {
        let mut raw = vec![0x08, 0x01, 0, 0];
        raw.extend_from_slice(&[0u8; 20]);
        let f = parse_frame(&raw).unwrap();
        assert_eq!(f.kind, FrameKind::Data);
        assert!(f.fc.to_ds());
        assert!(!f.fc.from_ds());
    }

    #[test]
    fn classifies_beacon_as_other() {
        let f = parse_frame(&mgmt(0x80)).unwrap();
        assert_eq!(f.kind, FrameKind::Other);
        assert!(f.ies.is_empty());
    }

    #[test]
    fn qos_data_is_data() {
        let mut raw = vec![0x88, 0x01, 0, 0];
        raw.extend_from_slice(&[0u8; 22]);
        let f = parse_frame(&raw).unwrap();
        assert_eq!(f.kind, FrameKind::Data);
        assert_eq!(f.qos, Some(0));
        assert!(f.body.is_empty());
    }

    #[test]
    fn too_short() {
        assert!(matches!(parse_frame(&[0x40, 0, 0]), Err(FrameError::TooShort { .. })));
        // management needs the full 24-byte header
        assert!(matches!(parse_frame(&mgmt(0x40)[..20]), Err(FrameError::TooShort { need: 24, .. })));
        // QoS data with both DS bits needs 32
        let raw = [0x88, 0x03].iter().copied().chain([0u8; 28]).collect::<Vec<_>>();
        assert!(matches!(parse_frame(&raw), Err(FrameError::TooShort { need: 32, .. })));
    }

    #[test]
    fn ack_frame_parses_with_only_addr1() {
        let raw = [0xd4, 0x00, 0, 0, 1, 2, 3, 4, 5, 6];
        let f = parse_frame(&raw).unwrap();
        assert_eq!(f.kind, FrameKind::Other);
        assert_eq!(f.addr2, None);
        assert_eq!(f.to_bytes(), raw);
    }

    #[test]
    fn locally_administered_bit() {
        assert!("02:00:00:00:00:01".parse::<MacAddress>().unwrap().is_locally_administered());
        assert!(!MacAddress::default().is_locally_administered());
        assert!(MacAddress([0xda, 1, 2, 3, 4, 5]).is_locally_administered());
        assert!(!MacAddress([0xfd, 1, 2, 3, 4, 5]).is_locally_administered());
    }

    #[test]
    fn extract_ies_cases() {
        assert_eq!(extract_ies(&[1, 2, 0x82, 0x84]), vec![InformationElement::new(1, [0x82, 0x84])]);
        assert!(extract_ies(&[]).is_empty());
        assert_eq!(
            extract_ies(&[0x03, 0x01, 0x06, 0xdd, 0x05, 0x00]),
            vec![InformationElement::new(3, [0x06])]
        );
        // lone trailing id byte
        assert_eq!(extract_ies(&[0, 0, 7]), vec![InformationElement::new(0, [])]);
        // duplicates kept in order
        assert_eq!(extract_ies(&[221, 1, 9, 221, 1, 8]).len(), 2);
    }

    #[test]
    fn mac_text_forms() {
        let m: MacAddress = "aa-bb-cc-dd-ee-ff".parse().unwrap();
        assert_eq!(m.to_string(), "AA:BB:CC:DD:EE:FF");
        assert_eq!(m.oui(), 0xaabbcc);
        assert!("aabbccddeeff".parse::<MacAddress>().is_ok());
        assert!("aa:bb:cc".parse::<MacAddress>().is_err());
        assert!("gg:bb:cc:dd:ee:ff".parse::<MacAddress>().is_err());
    }
}
