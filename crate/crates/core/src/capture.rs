//! Classic libpcap capture files and the capture-source seam.

use std::collections::VecDeque;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::time::Timestamp;

pub const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
pub const LINKTYPE_IEEE802_11: u32 = 105;
pub const LINKTYPE_IEEE802_11_RADIOTAP: u32 = 127;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const FCS_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("not a pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("truncated record #{index}: {reason}")]
    TruncatedRecord { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub timestamp: Timestamp,
    /// Bytes starting at the 802.11 MAC header.
    pub frame_bytes: Vec<u8>,
}

/// Drops the radiotap header, whose little-endian length sits at offset 2.
pub fn strip_radiotap(packet: &[u8]) -> Result<&[u8], CaptureError> {
    if packet.len() < 4 {
        return Err(CaptureError::TruncatedRecord {
            index: 0,
            reason: format!("radiotap header needs 4 bytes, packet has {}", packet.len()),
        });
    }
    let declared = usize::from(u16::from_le_bytes([packet[2], packet[3]]));
    if declared > packet.len() {
        return Err(CaptureError::TruncatedRecord {
            index: 0,
            reason: format!("radiotap length {declared} exceeds packet length {}", packet.len()),
        });
    }
    Ok(&packet[declared..])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Frames carry a trailing 4-byte FCS that must be removed.
    pub fcs_present: bool,
}

/// Streaming pcap reader. Yields records in file order; after the first
/// error it yields nothing more.
pub struct PcapReader<R> {
    inner: R,
    endian: Endian,
    link_type: u32,
    snaplen: u32,
    opts: ReadOptions,
    index: usize,
    done: bool,
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> PcapReader<R> {
    pub fn new(inner: R) -> Result<Self, CaptureError> {
        Self::with_options(inner, ReadOptions::default())
    }

    pub fn with_options(mut inner: R, opts: ReadOptions) -> Result<Self, CaptureError> {
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut hdr)?;
        let magic_bytes = [hdr[0], hdr[1], hdr[2], hdr[3]];
        if got < 4 {
            return Err(CaptureError::BadMagic(u32::from_le_bytes(magic_bytes)));
        }
        let endian = if u32::from_le_bytes(magic_bytes) == PCAP_MAGIC {
            Endian::Little
        } else if u32::from_be_bytes(magic_bytes) == PCAP_MAGIC {
            Endian::Big
        } else {
            return Err(CaptureError::BadMagic(u32::from_le_bytes(magic_bytes)));
        };
        if got < GLOBAL_HEADER_LEN {
            return Err(CaptureError::TruncatedRecord {
                index: 0,
                reason: format!("global header is {got} bytes"),
            });
        }
        let snaplen = endian.u32([hdr[16], hdr[17], hdr[18], hdr[19]]);
        let link_type = endian.u32([hdr[20], hdr[21], hdr[22], hdr[23]]);
        if link_type != LINKTYPE_IEEE802_11 && link_type != LINKTYPE_IEEE802_11_RADIOTAP {
            return Err(CaptureError::UnsupportedLinkType(link_type));
        }
        Ok(PcapReader { inner, endian, link_type, snaplen, opts, index: 0, done: false })
    }

    pub fn link_type(&self) -> u32 {
        self.link_type
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }

    fn truncated(&self, reason: String) -> CaptureError {
        CaptureError::TruncatedRecord { index: self.index, reason }
    }

    fn next_record(&mut self) -> Result<Option<CaptureRecord>, CaptureError> {
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        let got = read_full(&mut self.inner, &mut hdr)?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            return Err(self.truncated(format!("record header is {got} bytes")));
        }
        let e = self.endian;
        let ts_sec = e.u32([hdr[0], hdr[1], hdr[2], hdr[3]]);
        let ts_usec = e.u32([hdr[4], hdr[5], hdr[6], hdr[7]]);
        let incl_len = e.u32([hdr[8], hdr[9], hdr[10], hdr[11]]) as usize;

        // take() keeps a hostile incl_len from driving a huge allocation
        let mut data = Vec::new();
        (&mut self.inner).take(incl_len as u64).read_to_end(&mut data)?;
        if data.len() < incl_len {
            return Err(self.truncated(format!("captured length {incl_len}, {} bytes present", data.len())));
        }

        let mut frame: &[u8] = &data;
        if self.link_type == LINKTYPE_IEEE802_11_RADIOTAP {
            frame = strip_radiotap(frame).map_err(|err| match err {
                CaptureError::TruncatedRecord { reason, .. } => self.truncated(reason),
                other => other,
            })?;
        }
        if self.opts.fcs_present {
            frame = &frame[..frame.len().saturating_sub(FCS_LEN)];
        }
        Ok(Some(CaptureRecord {
            timestamp: Timestamp::from_parts(ts_sec, ts_usec.min(999_999)),
            frame_bytes: frame.to_vec(),
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<CaptureRecord, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(rec)) => {
                self.index += 1;
                Some(Ok(rec))
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Result of reading a whole capture: every good record, plus the error
/// that stopped reading, if any.
#[derive(Debug)]
pub struct PcapCapture {
    pub link_type: u32,
    pub records: Vec<CaptureRecord>,
    pub error: Option<CaptureError>,
}

/// Reads a complete pcap stream. Header problems fail outright; a damaged
/// record ends the read and is reported next to the records before it.
pub fn read_pcap<R: Read>(stream: R) -> Result<PcapCapture, CaptureError> {
    read_pcap_with(stream, ReadOptions::default())
}

pub fn read_pcap_with<R: Read>(stream: R, opts: ReadOptions) -> Result<PcapCapture, CaptureError> {
    let reader = PcapReader::with_options(stream, opts)?;
    let link_type = reader.link_type();
    let mut records = Vec::new();
    let mut error = None;
    for item in reader {
        match item {
            Ok(r) => records.push(r),
            Err(e) => error = Some(e),
        }
    }
    Ok(PcapCapture { link_type, records, error })
}

/// Writes little-endian microsecond pcap files.
pub struct PcapWriter<W> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, link_type: u32) -> io::Result<Self> {
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        hdr.extend_from_slice(&PCAP_MAGIC.to_le_bytes());
        hdr.extend_from_slice(&2u16.to_le_bytes());
        hdr.extend_from_slice(&4u16.to_le_bytes());
        hdr.extend_from_slice(&0i32.to_le_bytes()); // thiszone
        hdr.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
        hdr.extend_from_slice(&65535u32.to_le_bytes());
        hdr.extend_from_slice(&link_type.to_le_bytes());
        inner.write_all(&hdr)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_record(&mut self, ts: Timestamp, data: &[u8]) -> io::Result<()> {
        let secs = u32::try_from(ts.as_secs())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp beyond 2106"))?;
        let len = data.len() as u32;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        hdr[0..4].copy_from_slice(&secs.to_le_bytes());
        hdr[4..8].copy_from_slice(&ts.subsec_micros().to_le_bytes());
        hdr[8..12].copy_from_slice(&len.to_le_bytes());
        hdr[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner.write_all(&hdr)?;
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Anything that can hand timestamped frames to the detector: a capture
/// file today, a monitor-mode interface later.
pub trait CaptureSource {
    fn next_record(&mut self) -> Option<Result<CaptureRecord, CaptureError>>;
}

pub struct PcapSource<R: Read>(PcapReader<R>);

impl<R: Read> PcapSource<R> {
    pub fn new(reader: PcapReader<R>) -> Self {
        PcapSource(reader)
    }
}

impl<R: Read> CaptureSource for PcapSource<R> {
    fn next_record(&mut self) -> Option<Result<CaptureRecord, CaptureError>> {
        self.0.next()
    }
}

/// In-memory source, mostly for tests.
#[derive(Debug, Default)]
pub struct MemorySource(VecDeque<CaptureRecord>);

impl MemorySource {
    pub fn new(records: impl IntoIterator<Item = CaptureRecord>) -> Self {
        MemorySource(records.into_iter().collect())
    }
}

impl CaptureSource for MemorySource {
    fn next_record(&mut self) -> Option<Result<CaptureRecord, CaptureError>> {
        self.0.pop_front().map(Ok)
    }
}
