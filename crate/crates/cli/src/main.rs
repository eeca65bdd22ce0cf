use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use sttk_core::capture::{PcapReader, PcapSource, ReadOptions};
use sttk_core::collector::{dispatch_alert, run_mqtt_subscription, Alert, AlertDestination, Collector};
use sttk_core::config::{random_salt, CollectorConfig, SensorConfig, SinkConfig};
use sttk_core::oui::build_from_manuf;
use sttk_core::pipeline::{run_detection, TickConfig};
use sttk_core::simulator::{generate, Scenario};
use sttk_core::uplink::{FileSink, MqttSink, Publisher, ReportSink, UplinkError, WriterSink};
use sttk_core::window::WindowStore;
use sttk_core::{Detector, Salt};

#[derive(Parser)]
#[command(name = "sttk", version, about = "Passive Wi-Fi crowd counting")]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true, env = "STTK_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutMode {
    /// Print each report on stdout.
    Stdout,
    /// Publish through the sink named in the config.
    Ndjson,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a pcap through the detector and emit one report per tick.
    Detect {
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long, value_enum, default_value = "stdout")]
        out: OutMode,
        #[arg(long)]
        sensor_id: Option<String>,
        #[arg(long)]
        window_s: Option<u32>,
        #[arg(long)]
        sample_period_s: Option<u32>,
        #[arg(long)]
        oui_registry: Option<PathBuf>,
    },
    /// Generate a synthetic trace (trace.pcap) and its ground truth (truth.json).
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest report files and, if configured, an MQTT subscription.
    Collect {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Extra NDJSON inputs; `-` is stdin.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Skip the MQTT subscription even when configured.
        #[arg(long)]
        no_mqtt: bool,
    },
    /// Write one sensor's series between two Unix timestamps (inclusive).
    Export {
        #[arg(long)]
        sensor: String,
        #[arg(long)]
        from: u64,
        #[arg(long)]
        to: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write a fresh sensor config with a random salt.
    Init {
        #[arg(long)]
        sensor_id: String,
        #[arg(long)]
        force: bool,
    },
    /// Rebuild the OUI registry snapshot from a Wireshark manuf file.
    OuiBuild {
        #[arg(long)]
        manuf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit 2: bad invocation, config or input path. Exit 1: failure while running.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: err.into() }
}

fn runtime(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = cli.config;
    let result = match cli.cmd {
        Cmd::Detect { pcap, out, sensor_id, window_s, sample_period_s, oui_registry } => {
            let overrides = Overrides { sensor_id, window_s, sample_period_s, oui_registry };
            cmd_detect(config.as_deref(), &pcap, out, overrides)
        }
        Cmd::Simulate { scenario, out } => cmd_simulate(&scenario, &out),
        Cmd::Collect { data_dir, inputs, no_mqtt } => cmd_collect(config.as_deref(), data_dir, inputs, no_mqtt),
        Cmd::Export { sensor, from, to, format, output, data_dir } => {
            cmd_export(config.as_deref(), data_dir, &sensor, from, to, format, output.as_deref())
        }
        Cmd::Init { sensor_id, force } => cmd_init(config.as_deref(), sensor_id, force),
        Cmd::OuiBuild { manuf, out } => cmd_oui_build(&manuf, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sttk: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn need_config(config: Option<&Path>) -> Result<&Path, Failure> {
    config.ok_or_else(|| usage(anyhow!("no config given (use --config or STTK_CONFIG)")))
}

struct Overrides {
    sensor_id: Option<String>,
    window_s: Option<u32>,
    sample_period_s: Option<u32>,
    oui_registry: Option<PathBuf>,
}

fn load_sensor_config(path: &Path, o: Overrides) -> Result<SensorConfig, Failure> {
    let mut cfg = SensorConfig::load_or_init_salt(path).map_err(usage)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    if let Some(v) = o.sensor_id {
        cfg.sensor_id = v;
    }
    if let Some(v) = o.window_s {
        cfg.window_s = v;
    }
    if let Some(v) = o.sample_period_s {
        cfg.sample_period_s = v;
    }
    if o.oui_registry.is_some() {
        cfg.oui_registry = o.oui_registry;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn open_sink(cfg: &SensorConfig, out: OutMode) -> Result<Box<dyn ReportSink>, Failure> {
    if out == OutMode::Stdout {
        return Ok(Box::new(WriterSink::stdout()));
    }
    Ok(match &cfg.sink {
        SinkConfig::Stdout => Box::new(WriterSink::stdout()),
        SinkConfig::File { path } => {
            Box::new(FileSink::open(path).with_context(|| format!("opening sink {}", path.display())).map_err(usage)?)
        }
        SinkConfig::Mqtt(settings) => Box::new(MqttSink::connect(settings)),
    })
}

fn cmd_detect(config: Option<&Path>, pcap: &Path, out: OutMode, overrides: Overrides) -> CmdResult {
    let cfg = load_sensor_config(need_config(config)?, overrides)?;
    let registry = cfg.registry().map_err(usage)?;
    let salt = cfg.salt.unwrap_or(Salt(0));
    let file = File::open(pcap).with_context(|| format!("opening {}", pcap.display())).map_err(usage)?;
    let reader = PcapReader::with_options(BufReader::new(file), ReadOptions { fcs_present: cfg.fcs_present })
        .with_context(|| format!("reading {}", pcap.display()))
        .map_err(usage)?;
    let store = match &cfg.journal {
        Some(p) => WindowStore::with_journal(p).with_context(|| format!("opening journal {}", p.display())).map_err(usage)?,
        None => WindowStore::new(),
    };
    let mut publisher = Publisher::with_capacity(open_sink(&cfg, out)?, cfg.transport, cfg.queue_capacity);
    let detector = Detector::new(cfg.fingerprint.clone(), registry, salt);
    let ticks = TickConfig::new(cfg.sensor_id.clone(), cfg.window_s, cfg.sample_period_s);

    let mut source = PcapSource::new(reader);
    let run = run_detection(&mut source, detector, store, ticks, |r| {
        if let Err(UplinkError::SinkUnavailable { reason, queued, .. }) = publisher.publish(r) {
            warn!("sink unavailable ({reason}); {queued} report(s) queued");
        }
    })
    .map_err(runtime)?;

    // A broker connection may still be coming up.
    let deadline = Instant::now() + Duration::from_secs(5);
    while publisher.flush_queue() > 0 && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(100));
    }
    let s = &run.summary;
    info!(
        "{} frames, {} observations, {} reports, {} identities held",
        s.detector.frames,
        s.observations,
        run.reports.len(),
        s.identities
    );
    if publisher.dropped() > 0 || publisher.queued() > 0 {
        return Err(runtime(anyhow!(
            "{} report(s) undelivered, {} dropped from a full queue",
            publisher.queued(),
            publisher.dropped()
        )));
    }
    if let Some(e) = run.error {
        return Err(runtime(anyhow!("{}: capture read stopped early: {e}", pcap.display())));
    }
    Ok(())
}

fn cmd_simulate(scenario: &Path, out: &Path) -> CmdResult {
    let text = fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display())).map_err(usage)?;
    let scn = Scenario::from_json(&text).with_context(|| scenario.display().to_string()).map_err(usage)?;
    let trace = generate(&scn).map_err(usage)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(usage)?;
    fs::write(out.join("trace.pcap"), &trace.pcap).context("writing trace.pcap").map_err(runtime)?;
    let truth = serde_json::to_string_pretty(&trace.truth).expect("truth serializes");
    fs::write(out.join("truth.json"), truth + "\n").context("writing truth.json").map_err(runtime)?;
    info!("{} frames ({} dropped), {} devices", trace.truth.frames, trace.truth.dropped_frames, trace.truth.devices.len());
    Ok(())
}

fn announce(alert: &Alert, dest: &AlertDestination) {
    if let Err(e) = dispatch_alert(alert, dest) {
        warn!("alert {} for {}: {e}", alert.policy, alert.sensor_id);
    }
}

fn cmd_collect(config: Option<&Path>, data_dir: Option<PathBuf>, inputs: Vec<PathBuf>, no_mqtt: bool) -> CmdResult {
    let mut cfg = CollectorConfig::load(need_config(config)?).map_err(usage)?;
    if let Some(d) = data_dir {
        cfg.data_dir = d;
    }
    cfg.inputs.extend(inputs);
    let collector = Collector::open(&cfg.data_dir, cfg.alerts.clone())
        .with_context(|| format!("opening store {}", cfg.data_dir.display()))
        .map_err(usage)?;

    let mut failed = 0usize;
    for input in &cfg.inputs {
        let result = if input.as_os_str() == "-" {
            collector.ingest_reader(io::stdin().lock())
        } else {
            let f = File::open(input).with_context(|| format!("opening {}", input.display())).map_err(usage)?;
            collector.ingest_reader(BufReader::new(f))
        };
        let (alerts, errors) = result.with_context(|| format!("reading {}", input.display())).map_err(runtime)?;
        alerts.iter().for_each(|(a, d)| announce(a, d));
        for (line, e) in &errors {
            eprintln!("{}:{line}: {e}", input.display());
        }
        failed += errors.len();
    }
    let st = collector.stats();
    info!("stored {}, duplicates {}, rejected {}", st.stored, st.duplicates, failed);

    if let (Some(settings), false) = (&cfg.mqtt, no_mqtt) {
        run_mqtt_subscription(&collector, settings, announce).map_err(|e| runtime(anyhow!("mqtt: {e}")))?;
    }
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} payload(s) rejected; see the dead-letter file")));
    }
    Ok(())
}

fn cmd_export(
    config: Option<&Path>,
    data_dir: Option<PathBuf>,
    sensor: &str,
    from: u64,
    to: u64,
    format: Format,
    output: Option<&Path>,
) -> CmdResult {
    let data_dir = match data_dir {
        Some(d) => d,
        None => CollectorConfig::load(need_config(config)?).map_err(usage)?.data_dir,
    };
    if !data_dir.is_dir() {
        return Err(usage(anyhow!("no collector store at {}", data_dir.display())));
    }
    let collector = Collector::open(&data_dir, Vec::new()).map_err(runtime)?;
    let text = match format {
        Format::Csv => collector.export_csv(sensor, from, to),
        Format::Json => collector.export_json(sensor, from, to).map(|s| s + "\n"),
    }
    .map_err(usage)?;
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(runtime),
        None => io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn cmd_init(config: Option<&Path>, sensor_id: String, force: bool) -> CmdResult {
    let path = need_config(config)?;
    if path.exists() && !force {
        return Err(usage(anyhow!("{} exists (pass --force to overwrite)", path.display())));
    }
    let mut cfg = SensorConfig::new(sensor_id);
    cfg.salt = Some(random_salt());
    cfg.validate().map_err(usage)?;
    cfg.save(path).map_err(runtime)
}

fn cmd_oui_build(manuf: &Path, out: &Path) -> CmdResult {
    let text = fs::read_to_string(manuf).with_context(|| format!("reading {}", manuf.display())).map_err(usage)?;
    let reg = build_from_manuf(&text);
    if reg.is_empty() {
        return Err(usage(anyhow!("{}: no 24-bit assignments found", manuf.display())));
    }
    let header = format!(
        "generated by `sttk oui-build` from {}\nprefix\tvendor\tis_mobile",
        manuf.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    );
    let file = File::create(out).with_context(|| format!("creating {}", out.display())).map_err(usage)?;
    reg.write_to(io::BufWriter::new(file), &header).map_err(runtime)?;
    info!("{} prefixes, {} mobile", reg.len(), reg.mobile_prefixes().count());
    Ok(())
}
