use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sttk_core::config::{CollectorConfig, SensorConfig};
use sttk_core::uplink::decode_json;
use sttk_core::Salt;

fn sttk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sttk")).args(args).env_remove("STTK_CONFIG").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = SensorConfig::new("lobby");
    cfg.salt = Some(Salt(42));
    cfg.collector = Some(CollectorConfig { data_dir: dir.join("store"), ..Default::default() });
    let path = dir.join("sensor.json");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = sttk(&["detect", "--pcap", "nowhere.pcap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn unreadable_pcap_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = sttk(&["detect", "--config", s(&cfg), "--pcap", s(&dir.path().join("absent.pcap"))]);
    assert_eq!(out.status.code(), Some(2));

    let junk = dir.path().join("junk.pcap");
    fs::write(&junk, b"definitely not a capture").unwrap();
    assert_eq!(sttk(&["detect", "--config", s(&cfg), "--pcap", s(&junk)]).status.code(), Some(2));
}

#[test]
fn empty_capture_yields_one_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let pcap = dir.path().join("empty.pcap");
    let mut header = vec![0xd4, 0xc3, 0xb2, 0xa1, 2, 0, 4, 0];
    header.extend([0; 8]);
    header.extend(65535u32.to_le_bytes());
    header.extend(105u32.to_le_bytes());
    fs::write(&pcap, header).unwrap();
    let out = sttk(&["detect", "--config", s(&cfg), "--pcap", s(&pcap)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<_> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 1);
    let r = decode_json(lines[0].as_bytes()).unwrap();
    assert_eq!((r.ts, r.total, r.connected, r.probes_real, r.probes_virtual), (0, 0, 0, 0, 0));
    assert_eq!(r.sensor_id, "lobby");
}

#[test]
fn export_bounds_and_empty_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let store = dir.path().join("store");
    let missing = sttk(&["export", "--config", s(&cfg), "--sensor", "lobby", "--from", "0", "--to", "10"]);
    assert_eq!(missing.status.code(), Some(2));

    fs::create_dir_all(&store).unwrap();
    let reversed = sttk(&["export", "--config", s(&cfg), "--sensor", "lobby", "--from", "10", "--to", "0"]);
    assert_eq!(reversed.status.code(), Some(2));

    let csv = sttk(&["export", "--config", s(&cfg), "--sensor", "lobby", "--from", "0", "--to", "10"]);
    assert_eq!(csv.status.code(), Some(0));
    assert_eq!(String::from_utf8(csv.stdout).unwrap(), "sensor_id,ts,window_s,connected,probes_real,probes_virtual,total\r\n");

    let json = sttk(&["export", "--data-dir", s(&store), "--sensor", "lobby", "--from", "0", "--to", "10", "--format", "json"]);
    assert_eq!(json.status.code(), Some(0));
    assert_eq!(String::from_utf8(json.stdout).unwrap().trim(), "[]");
}

#[test]
fn collect_rejects_bad_lines_but_keeps_good_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let input = dir.path().join("in.ndjson");
    fs::write(
        &input,
        "{\"sensor_id\":\"lobby\",\"ts\":60,\"window_s\":300,\"connected\":1,\"probes_real\":2,\"probes_virtual\":3,\"total\":6}\nnot json\n",
    )
    .unwrap();
    let out = sttk(&["collect", "--config", s(&cfg), "--input", s(&input), "--no-mqtt"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = sttk(&["export", "--config", s(&cfg), "--sensor", "lobby", "--from", "0", "--to", "100"]);
    assert!(String::from_utf8(csv.stdout).unwrap().ends_with("lobby,60,300,1,2,3,6\r\n"));
}

#[test]
fn init_writes_a_fresh_salted_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("new.json");
    assert_eq!(sttk(&["init", "--config", s(&path), "--sensor-id", "door-1"]).status.code(), Some(0));
    let first = SensorConfig::load(&path).unwrap();
    assert_eq!(first.sensor_id, "door-1");
    assert!(first.salt.is_some());

    assert_eq!(sttk(&["init", "--config", s(&path), "--sensor-id", "door-1"]).status.code(), Some(2));
    assert_eq!(sttk(&["init", "--config", s(&path), "--sensor-id", "door-1", "--force"]).status.code(), Some(0));
    assert_ne!(SensorConfig::load(&path).unwrap().salt, first.salt);
}

#[test]
fn bad_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("scn.json");
    fs::write(&scn, "{\"duration_s\": \"long\"}").unwrap();
    let out = sttk(&["simulate", "--scenario", s(&scn), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
