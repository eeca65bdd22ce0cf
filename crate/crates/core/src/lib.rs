//! Passive Wi-Fi crowd counting.
//!
//! Frames captured in monitor mode are classified (data, probe request,
//! other), reduced to anonymized identities, and counted over a sliding
//! window. Devices that randomize their MAC address are tracked through a
//! footprint of their probe-request Information Elements. Window counts go
//! out as JSON (MQTT) or a 10-byte LoRaWAN payload to a collector that
//! stores per-sensor time series and raises threshold alerts. A trace
//! simulator with exact ground truth backs the tests.

pub mod capture;
pub mod collector;
pub mod config;
pub mod counter;
pub mod detector;
pub mod frame;
pub mod hash;
pub mod oui;
pub mod pipeline;
pub mod simulator;
pub mod time;
pub mod uplink;
pub mod window;

pub use counter::CrowdingReport;
pub use detector::{Detector, FingerprintConfig, IdentityKind, Observation, Salt};
pub use frame::{parse_frame, Frame, FrameKind, MacAddress};
pub use time::Timestamp;
