//! JSON configuration shared by the sensor and collector commands.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::AlertPolicy;
use crate::detector::{FingerprintConfig, FingerprintConfigError, Salt};
use crate::oui::{load_registry, OuiError, OuiRegistry};
use crate::uplink::{MqttSettings, Transport, DEFAULT_QUEUE_CAPACITY};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintConfigError),
    #[error("OUI registry {path}: {source}")]
    Registry { path: PathBuf, source: OuiError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[derive(Default)]
pub enum SinkConfig {
    #[default]
    Stdout,
    File { path: PathBuf },
    Mqtt(MqttSettings),
}


#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollectorConfig {
    pub data_dir: PathBuf,
    /// NDJSON files to ingest; `-` reads stdin.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mqtt: Option<MqttSettings>,
    #[serde(default)]
    pub alerts: Vec<AlertPolicy>,
}

impl CollectorConfig {
    /// Reads the `collector` section of a config file. Sensor fields may be
    /// absent, so a collector host needs no `sensor_id`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Wrapper {
            collector: Option<CollectorConfig>,
        }
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let w: Wrapper = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let mut cfg = w.collector.ok_or_else(|| ConfigError::Invalid(format!("{}: no collector section", path.display())))?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() && p.as_os_str() != "-" {
                    *p = base.join(&*p);
                }
            };
            fix(&mut cfg.data_dir);
            cfg.inputs.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub sensor_id: String,
    #[serde(default = "five_minutes")]
    pub window_s: u32,
    #[serde(default = "five_minutes")]
    pub sample_period_s: u32,
    /// Generated on first start when absent, then persisted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salt: Option<Salt>,
    #[serde(default = "json_mqtt")]
    pub transport: Transport,
    #[serde(default)]
    pub sink: SinkConfig,
    #[serde(default = "default_queue")]
    pub queue_capacity: usize,
    #[serde(default)]
    pub fingerprint: FingerprintConfig,
    /// Registry file; the bundled snapshot when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oui_registry: Option<PathBuf>,
    /// Append-only observation journal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<PathBuf>,
    /// Captured frames end with a 4-byte FCS.
    #[serde(default)]
    pub fcs_present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collector: Option<CollectorConfig>,
}

/// A fresh per-sensor salt from the OS-seeded thread RNG.
pub fn random_salt() -> Salt {
    Salt(rand::random())
}

fn five_minutes() -> u32 {
    300
}

fn json_mqtt() -> Transport {
    Transport::JsonMqtt
}

fn default_queue() -> usize {
    DEFAULT_QUEUE_CAPACITY
}

impl SensorConfig {
    pub fn new(sensor_id: impl Into<String>) -> Self {
        SensorConfig {
            sensor_id: sensor_id.into(),
            window_s: 300,
            sample_period_s: 300,
            salt: None,
            transport: Transport::JsonMqtt,
            sink: SinkConfig::Stdout,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            fingerprint: FingerprintConfig::default(),
            oui_registry: None,
            journal: None,
            fcs_present: false,
            collector: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg: SensorConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text + "\n").map_err(|source| ConfigError::Io { path: path.into(), source })
    }

    /// Loads the config and, the first time a sensor starts, creates its
    /// salt and writes it back.
    pub fn load_or_init_salt(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::load(path)?;
        if cfg.salt.is_none() {
            cfg.salt = Some(random_salt());
            cfg.save(path)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sensor_id.is_empty() {
            return Err(ConfigError::Invalid("sensor_id is empty".into()));
        }
        if self.window_s == 0 || self.sample_period_s == 0 {
            return Err(ConfigError::Invalid("window_s and sample_period_s must be positive".into()));
        }
        if self.sensor_id.contains(['/', '+', '#']) {
            return Err(ConfigError::Invalid("sensor_id must not contain MQTT topic characters (/ + #)".into()));
        }
        self.fingerprint.validate()?;
        Ok(())
    }

    /// Resolves relative paths in the config against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && p.as_os_str() != "-" {
                *p = base.join(&*p);
            }
        };
        if let SinkConfig::File { path } = &mut self.sink {
            fix(path);
        }
        if let Some(p) = &mut self.oui_registry {
            fix(p);
        }
        if let Some(p) = &mut self.journal {
            fix(p);
        }
        if let Some(c) = &mut self.collector {
            fix(&mut c.data_dir);
            c.inputs.iter_mut().for_each(fix);
        }
    }

    pub fn registry(&self) -> Result<OuiRegistry, ConfigError> {
        match &self.oui_registry {
            None => Ok(OuiRegistry::bundled()),
            Some(path) => {
                let f = fs::File::open(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                load_registry(io::BufReader::new(f)).map_err(|source| ConfigError::Registry { path: path.clone(), source })
            }
        }
    }
}
