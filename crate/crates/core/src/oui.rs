//! Vendor-prefix registry used to keep only phones and tablets among
//! globally-unique probe-request sources.
//!
//! Registry files are UTF-8, one entry per line:
//!
//! ```text
//! # comment
//! 00:03:93<TAB>Apple, Inc.<TAB>1
//! ```
//!
//! The snapshot shipped in `data/oui_registry.tsv` is generated from the
//! Wireshark `manuf` database with [`build_from_manuf`].

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::frame::MacAddress;

static BUNDLED: &str = include_str!("../data/oui_registry.tsv");

#[derive(Debug, Error)]
pub enum OuiError {
    #[error("registry has no valid entries ({skipped} lines skipped)")]
    EmptyRegistry { skipped: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuiEntry {
    pub vendor: String,
    pub is_mobile: bool,
}

#[derive(Debug, Clone, Default)]
pub struct OuiRegistry {
    entries: HashMap<u32, OuiEntry>,
    skipped: usize,
}

fn parse_prefix(s: &str) -> Option<u32> {
    let parts: Vec<&str> = s.split([':', '-']).collect();
    if parts.len() != 3 {
        return None;
    }
    let mut v = 0u32;
    for p in parts {
        if p.len() != 2 || !p.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        v = v << 8 | u32::from_str_radix(p, 16).ok()?;
    }
    Some(v)
}

fn format_prefix(p: u32) -> String {
    format!("{:02X}:{:02X}:{:02X}", p >> 16 & 0xff, p >> 8 & 0xff, p & 0xff)
}

fn parse_registry_line(line: &str) -> Option<(u32, OuiEntry)> {
    let mut cols = line.split('\t');
    let prefix = parse_prefix(cols.next()?.trim())?;
    let vendor = cols.next()?.trim();
    let is_mobile = match cols.next()?.trim() {
        "0" => false,
        "1" => true,
        _ => return None,
    };
    if cols.next().is_some() || vendor.is_empty() {
        return None;
    }
    Some((prefix, OuiEntry { vendor: vendor.to_string(), is_mobile }))
}

impl OuiRegistry {
    /// The snapshot compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED).expect("bundled registry is valid")
    }

    pub fn from_text(text: &str) -> Result<Self, OuiError> {
        load_registry(text.as_bytes())
    }

    pub fn insert(&mut self, prefix: u32, entry: OuiEntry) {
        self.entries.insert(prefix & 0x00ff_ffff, entry);
    }

    pub fn get(&self, prefix: u32) -> Option<&OuiEntry> {
        self.entries.get(&prefix)
    }

    pub fn lookup(&self, mac: MacAddress) -> Option<&OuiEntry> {
        self.entries.get(&mac.oui())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lines that were neither comments, blank, nor valid entries.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn mobile_prefixes(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().filter(|(_, e)| e.is_mobile).map(|(p, _)| *p)
    }

    /// Writes entries sorted by prefix.
    pub fn write_to<W: Write>(&self, mut out: W, header: &str) -> io::Result<()> {
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            let e = &self.entries[&k];
            writeln!(out, "{}\t{}\t{}", format_prefix(k), e.vendor, u8::from(e.is_mobile))?;
        }
        Ok(())
    }
}

/// Parses a registry file. Invalid lines are counted and skipped; later
/// duplicates of a prefix replace earlier ones.
pub fn load_registry<R: BufRead>(stream: R) -> Result<OuiRegistry, OuiError> {
    let mut reg = OuiRegistry::default();
    for line in stream.lines() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        match parse_registry_line(trimmed) {
            Some((p, e)) => reg.insert(p, e),
            None => reg.skipped += 1,
        }
    }
    if reg.is_empty() {
        return Err(OuiError::EmptyRegistry { skipped: reg.skipped });
    }
    Ok(reg)
}

pub fn classify_mobile_oui(mac: MacAddress, reg: &OuiRegistry) -> bool {
    reg.lookup(mac).is_some_and(|e| e.is_mobile)
}

/// One 24-bit assignment from a Wireshark `manuf` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManufEntry {
    pub prefix: u32,
    pub short_name: String,
    pub long_name: Option<String>,
}

/// Reads `manuf` lines (`XX:XX:XX<TAB>short[<TAB>long]`). Entries with a
/// `/28` or `/36` mask and anything unparseable are ignored.
pub fn parse_manuf(text: &str) -> Vec<ManufEntry> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let Some(addr) = cols.next() else { continue };
        let Some(prefix) = parse_prefix(addr.trim()) else { continue };
        let Some(short) = cols.next().map(str::trim).filter(|s| !s.is_empty()) else { continue };
        let long = cols
            .next()
            .map(|s| s.split('#').next().unwrap_or("").trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        out.push(ManufEntry { prefix, short_name: short.to_string(), long_name: long });
    }
    out
}

/// Vendor-name fragments (case-insensitive) that mark phone and tablet
/// manufacturers. Matched against the long name, falling back to the
/// short name.
pub const MOBILE_VENDOR_ALLOWLIST: &[&str] = &[
    "apple, inc",
    "apple inc",
    "samsung electronics",
    "huawei technologies",
    "huawei device",
    "honor device",
    "xiaomi communications",
    "beijing xiaomi",
    "oneplus",
    "guangdong oppo",
    "realme chongqing",
    "vivo mobile",
    "motorola mobility",
    "google, inc",
    "google llc",
    "lg electronics (mobile",
    "sony mobile",
    "sony ericsson mobile",
    "htc corporation",
    "nokia corporation",
    "hmd global",
    "blackberry",
    "research in motion",
    "meizu",
    "tct mobile",
    "lenovo mobile",
    "zte corporation",
    "shenzhen transsion",
    "fairphone",
    "nothing technology",
];

pub fn is_mobile_vendor(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    MOBILE_VENDOR_ALLOWLIST.iter().any(|frag| lower.contains(frag))
}

/// Turns a `manuf` database into a registry, flagging allowlisted vendors
/// as mobile.
pub fn build_from_manuf(text: &str) -> OuiRegistry {
    let mut reg = OuiRegistry::default();
    for e in parse_manuf(text) {
        let vendor = e.long_name.clone().unwrap_or_else(|| e.short_name.clone());
        let vendor = vendor.replace('\t', " ");
        let is_mobile = is_mobile_vendor(&vendor);
        reg.insert(e.prefix, OuiEntry { vendor, is_mobile });
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn loads_a_line() {
        let reg = load_registry("AA:BB:CC\tVendorX\t1\n".as_bytes()).unwrap();
        assert_eq!(reg.get(0xaabbcc), Some(&OuiEntry { vendor: "VendorX".into(), is_mobile: true }));
        assert_eq!(reg.skipped(), 0);
    }

    #[test]
    fn skips_bad_lines() {
        let reg = load_registry("# header\nnot a line\n\nAA:BB:CC\tV\t0\n".as_bytes()).unwrap();
        assert_eq!(reg.skipped(), 1);
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(load_registry("".as_bytes()), Err(OuiError::EmptyRegistry { skipped: 0 })));
        assert!(matches!(load_registry("junk\n".as_bytes()), Err(OuiError::EmptyRegistry { skipped: 1 })));
    }

    #[test]
    fn rejects_malformed_fields() {
        for line in ["AA:BB\tV\t1", "AA:BB:CC\t\t1", "AA:BB:CC\tV\t2", "AA:BB:CC\tV\t1\textra", "AA:BB:CG\tV\t1"] {
            assert!(parse_registry_line(line).is_none(), "{line}");
        }
    }

    #[test]
    fn classify() {
        let reg = load_registry("AA:BB:CC\tPhoneCo\t1\n11:22:33\tRouterCo\t0\n".as_bytes()).unwrap();
        assert!(classify_mobile_oui(mac("aa:bb:cc:00:00:01"), &reg));
        assert!(!classify_mobile_oui(mac("11:22:33:00:00:01"), &reg));
        assert!(!classify_mobile_oui(mac("de:ad:be:00:00:01"), &reg));
    }

    #[test]
    fn manuf_parsing() {
        let text = "# c\n00:00:0C\tCisco\tCisco Systems, Inc\n00:03:93\tApple\tApple, Inc.\n\
                    00:1B:C5:00:00:00/36\tConvergi\tConverging Systems Inc.\n\
                    00:50:C2\tIeeeRegi\n";
        let entries = parse_manuf(text);
        assert_eq!(entries.len(), 3);
        let reg = build_from_manuf(text);
        assert!(reg.get(0x000393).unwrap().is_mobile);
        assert!(!reg.get(0x00000c).unwrap().is_mobile);
        assert_eq!(reg.get(0x0050c2).unwrap().vendor, "IeeeRegi");
    }

    #[test]
    fn written_registry_reloads() {
        let reg = build_from_manuf("00:03:93\tApple\tApple, Inc.\nB8:27:EB\tRaspberr\tRaspberry Pi Foundation\n");
        let mut buf = Vec::new();
        reg.write_to(&mut buf, "generated").unwrap();
        let back = load_registry(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.skipped(), 0);
        assert!(back.get(0x000393).unwrap().is_mobile);
    }
}
