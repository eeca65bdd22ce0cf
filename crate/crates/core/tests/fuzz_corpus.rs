//! Replays the checked-in fuzz seeds on stable, with the same checks the
//! fuzz targets make.

use std::fs;
use std::path::{Path, PathBuf};

use sttk_core::capture::{read_pcap_with, strip_radiotap, ReadOptions};
use sttk_core::collector::Collector;
use sttk_core::config::SensorConfig;
use sttk_core::detector::{classify_branch, fingerprint_ies, process_frame};
use sttk_core::frame::extract_ies;
use sttk_core::oui::{build_from_manuf, load_registry, OuiRegistry};
use sttk_core::simulator::Scenario;
use sttk_core::uplink::{decode_json, decode_lorawan, encode_json, encode_lorawan};
use sttk_core::window::WindowStore;
use sttk_core::{parse_frame, FingerprintConfig, Salt, Timestamp};

fn fuzz_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz")
}

fn run(target: &str, data: &[u8]) {
    match target {
        "parse_frame" => {
            if let Ok(frame) = parse_frame(data) {
                assert_eq!(frame.to_bytes(), data);
                let reg = OuiRegistry::default();
                let obs = process_frame(&frame, Timestamp::ZERO, &FingerprintConfig::default(), &reg, Salt(1));
                assert_eq!(obs.map(|o| o.kind), classify_branch(&frame, &reg).kind());
            }
        }
        "extract_ies" => {
            let ies = extract_ies(data);
            let mut out = Vec::new();
            ies.iter().for_each(|ie| ie.write_to(&mut out));
            assert!(data.starts_with(&out));
            fingerprint_ies(&ies, &FingerprintConfig::default());
        }
        "read_pcap" => {
            for fcs_present in [false, true] {
                if let Ok(cap) = read_pcap_with(data, ReadOptions { fcs_present }) {
                    cap.records.iter().for_each(|r| drop(parse_frame(&r.frame_bytes)));
                }
            }
        }
        "strip_radiotap" => {
            if let Ok(rest) = strip_radiotap(data) {
                assert!(data.ends_with(rest));
            }
        }
        "load_registry" => {
            if let Ok(reg) = load_registry(data) {
                let mut out = Vec::new();
                reg.write_to(&mut out, "").unwrap();
                assert_eq!(load_registry(&out[..]).unwrap().len(), reg.len());
            }
        }
        "parse_manuf" => {
            if let Ok(text) = std::str::from_utf8(data) {
                build_from_manuf(text);
            }
        }
        "decode_lorawan" => {
            if let Ok(fields) = decode_lorawan(data) {
                assert_eq!(&encode_lorawan(&fields.into_report("fuzz", 0)).0[..], data);
            }
        }
        "decode_json" => {
            if let Ok(report) = decode_json(data) {
                assert_eq!(decode_json(&encode_json(&report)).unwrap(), report);
            }
        }
        "ingest_line" => {
            let collector = Collector::in_memory(Vec::new());
            for line in String::from_utf8_lossy(data).lines() {
                let _ = collector.ingest_line(line);
            }
        }
        "scenario_json" => {
            if let Ok(text) = std::str::from_utf8(data) {
                let _ = Scenario::from_json(text);
            }
        }
        "journal_replay" => {
            WindowStore::new().replay(data).unwrap();
        }
        "sensor_config" => {
            if let Ok(Ok(cfg)) = std::str::from_utf8(data).map(SensorConfig::from_json) {
                let _ = cfg.validate();
            }
        }
        other => panic!("no replay for fuzz target {other}"),
    }
}

#[test]
fn every_target_has_seeds_and_they_pass() {
    let dir = fuzz_dir();
    let mut targets: Vec<String> = fs::read_dir(dir.join("fuzz_targets"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "rs"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    targets.sort();
    assert_eq!(targets.len(), 12);
    for t in &targets {
        let seeds: Vec<_> = fs::read_dir(dir.join("corpus").join(t))
            .unwrap_or_else(|_| panic!("no corpus for {t}"))
            .map(|e| e.unwrap().path())
            .collect();
        assert!(!seeds.is_empty(), "{t}");
        for seed in seeds {
            run(t, &fs::read(&seed).unwrap());
        }
    }
}
