use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use audioleak_core::burst::{detect_bursts, evaluate, sweep_n, BurstEvent, BurstParams};
use audioleak_core::capture::live::TailingPcapSource;
use audioleak_core::capture::{ingest, read_traces_json, write_traces_json, CaptureSource, LocalNetwork};
use audioleak_core::fuzz::{
    fixture_dictionary, load_dictionary, run_campaign, select_by_counts, select_candidates, ActivationTable,
    FuzzReport, SensorLogOracle, SimulatedOracle,
};
use audioleak_core::metrics::{roc, scan_threshold_sweep, threshold_grid, Averaging, RocPoint};
use audioleak_core::model::{AudioLabel, DeviceAddress, DeviceTrace, DirectionFilter, LabeledTraceSet, Span};
use audioleak_core::probe::{
    judge, report, run_session, CommandSink, JudgeConfig, LiveCapture, MonotonicClock, ProbePlan, ProbeSession,
    ReportFormat, SessionFile,
};
use audioleak_core::sim::{library, library_model, simulate, write_pcap, Scenario, SimulatedFleet};
use audioleak_core::stats::{sliding_scan, ProbeConfig, TTestKind};

#[derive(Parser)]
#[command(
    name = "audioleak",
    version,
    about = "Find devices that send recorded audio over the network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a pcap capture into per-device traces.
    Ingest(IngestArgs),
    /// Flag sustained high-rate outbound traffic.
    DetectBurst(BurstArgs),
    /// Compare consecutive windows of each trace with a t-test.
    StatScan(ScanArgs),
    /// Play probe words and capture what the devices send.
    Probe(ProbeArgs),
    /// Re-judge a recorded probe session.
    Judge(JudgeArgs),
    /// Generate synthetic traffic from a scenario file.
    Simulate(SimulateArgs),
    /// Search a dictionary for words that wake a voice assistant.
    Fuzz(FuzzArgs),
    /// Sweep a detector parameter over labeled traces.
    Roc(RocArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Out,
    Both,
}

impl From<DirectionArg> for DirectionFilter {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Out => DirectionFilter::Outbound,
            DirectionArg::Both => DirectionFilter::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Micro,
    Macro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Micro => Averaging::Micro,
            AveragingArg::Macro => Averaging::Macro,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    pcap: PathBuf,
    /// Comma-separated LAN prefixes, e.g. 192.168.0.0/16,fd00::/8.
    #[arg(long)]
    local_net: String,
    #[arg(long)]
    out: PathBuf,
    /// Follow a file that is still being written; stop after this many
    /// seconds without new data.
    #[arg(long, value_name = "SECS")]
    follow: Option<f64>,
}

#[derive(Args)]
struct BurstArgs {
    traces: PathBuf,
    /// Window size in seconds.
    #[arg(long, default_value_t = 1.0)]
    sw: f64,
    /// Rate threshold in bit/s.
    #[arg(long, default_value_t = 23_000.0)]
    baudio: f64,
    /// Consecutive windows above the threshold.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, value_enum, default_value = "out")]
    direction: DirectionArg,
    /// Audio intervals to score against.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "micro")]
    averaging: AveragingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatOptions {
    #[arg(long, default_value_t = 0.42)]
    threshold: f64,
    /// Also test inter-arrival times and combine the p-values.
    #[arg(long)]
    combine_iat: bool,
    /// Equal-variance t-test instead of Welch's.
    #[arg(long)]
    pooled: bool,
    #[arg(long, value_enum, default_value = "out")]
    direction: DirectionArg,
}

impl StatOptions {
    fn config(&self) -> Result<ProbeConfig> {
        let cfg = ProbeConfig {
            threshold: self.threshold,
            combine_iat: self.combine_iat,
            test_kind: if self.pooled {
                TTestKind::Pooled
            } else {
                TTestKind::Welch
            },
            direction: self.direction.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScanArgs {
    traces: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    #[command(flatten)]
    stat: StatOptions,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CaptureMode {
    Live,
    Sim,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Text => ReportFormat::Text,
        }
    }
}

#[derive(Args)]
struct VerdictOutput {
    /// Where to write the verdict report (default: stdout).
    #[arg(long)]
    verdicts: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Accept a reaction even when the probe window carries less traffic
    /// than the idle window.
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_enum)]
    capture: CaptureMode,
    #[arg(long)]
    out: PathBuf,
    /// Live: pcap file being written by the capture process.
    #[arg(long, required_if_eq("capture", "live"))]
    pcap: Option<PathBuf>,
    /// Live: comma-separated LAN prefixes.
    #[arg(long, required_if_eq("capture", "live"))]
    local_net: Option<String>,
    /// Live: player command; the audio file path is appended.
    #[arg(long, default_value = "aplay -q")]
    player: String,
    /// Sim: comma-separated device model names (default: whole library).
    #[arg(long)]
    fleet: Option<String>,
    /// Sim: random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    verdict: VerdictOutput,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    session: PathBuf,
    /// Override the plan's threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    verdict: VerdictOutput,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pcap: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OracleKind {
    Sim,
    SensorLog,
}

#[derive(Args)]
struct FuzzArgs {
    /// Pronouncing dictionary in CMU format (default: bundled subset).
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value = "alexa")]
    target: String,
    /// Comma-separated phoneme counts to try.
    #[arg(long, value_delimiter = ',', default_value = "5,6", conflicts_with = "tolerance")]
    phonemes: Vec<usize>,
    /// Try every word within this many phonemes of the target instead.
    #[arg(long)]
    tolerance: Option<usize>,
    #[arg(long, value_enum, default_value = "sim")]
    oracle: OracleKind,
    /// Sim: word-to-probability table (default: bundled Alexa table).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensor log: file the activation sensor appends to.
    #[arg(long, required_if_eq("oracle", "sensor-log"))]
    sensor_log: Option<PathBuf>,
    /// Sensor log: directory holding `<word>.wav` files.
    #[arg(long, required_if_eq("oracle", "sensor-log"))]
    audio_dir: Option<PathBuf>,
    #[arg(long, default_value = "aplay -q")]
    player: String,
    /// Sensor log: seconds to wait between trials.
    #[arg(long, default_value_t = 5.0)]
    cooldown: f64,
    #[arg(long, default_value_t = 10)]
    trials: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RocMode {
    Burst,
    Stat,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long, value_enum)]
    mode: RocMode,
    /// Traces file (as written by `ingest` or `simulate --traces`) or a
    /// probe session file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "micro")]
    averaging: AveragingArg,
    /// Burst: largest n to sweep.
    #[arg(long, default_value_t = 8)]
    max_n: usize,
    /// Stat: scan window in seconds.
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    /// Stat: number of threshold steps between 0 and 1.
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<AudioLabel>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing labels in {}", path.display()))
}

/// Accepts either a traces file or a session file.
fn read_any_traces(path: &Path) -> Result<std::collections::BTreeMap<DeviceAddress, DeviceTrace>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let file: SessionFile = serde_json::from_str(&text).context("parsing session file")?;
        return Ok(ProbeSession::try_from(file)?.capture);
    }
    read_traces_json(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let local = LocalNetwork::parse(&a.local_net)?;
    let source = match a.follow {
        Some(secs) => {
            let tail = TailingPcapSource::new(&a.pcap, Duration::from_secs_f64(secs.max(0.0)));
            CaptureSource::live(Box::new(tail), local)
        }
        None => CaptureSource::pcap_file(&a.pcap, local),
    };
    let (traces, report) = ingest(source)?;
    write_traces_json(&a.out, traces.values())?;
    eprintln!(
        "{} devices, {} packets, {} frames dropped",
        report.device_count, report.packet_count, report.dropped
    );
    Ok(())
}

fn cmd_detect_burst(a: BurstArgs) -> Result<()> {
    let params = BurstParams {
        window_secs: a.sw,
        rate_threshold: a.baudio,
        consecutive: a.n,
        direction: a.direction.into(),
    };
    params.validate()?;
    let traces = read_traces_json(&a.traces).with_context(|| format!("reading {}", a.traces.display()))?;
    let mut events: Vec<BurstEvent> = Vec::new();
    for t in traces.values() {
        events.extend(detect_bursts(t, &params)?);
    }
    write_json(&a.out, &events)?;
    eprintln!("{} events", events.len());
    if let Some(labels) = &a.labels {
        let set = LabeledTraceSet {
            traces,
            labels: read_labels(labels)?,
        };
        let p = evaluate(&set, &params, a.averaging.into())?;
        eprintln!(
            "TPR {:.3}  FPR {:.4}  false events {}",
            p.tpr, p.fpr, p.score.false_events
        );
    }
    Ok(())
}

fn fmt_opt(p: Option<f64>) -> String {
    p.map(|p| format!("{p:.6}")).unwrap_or_default()
}

fn cmd_stat_scan(a: ScanArgs) -> Result<()> {
    let cfg = a.stat.config()?;
    let traces = read_traces_json(&a.traces).with_context(|| format!("reading {}", a.traces.display()))?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record([
        "device",
        "t_start",
        "t_end",
        "p_size",
        "p_iat",
        "p_combined",
        "reactive",
    ])?;
    let mut reactive = 0;
    for t in traces.values() {
        for pair in sliding_scan(t, a.window, &cfg)? {
            let c = pair.comparison;
            reactive += usize::from(pair.reactive());
            w.write_record([
                t.device().to_string(),
                format!("{:.6}", pair.start.as_secs_f64()),
                format!("{:.6}", pair.end.as_secs_f64()),
                fmt_opt(c.map(|c| c.p_size)),
                fmt_opt(c.and_then(|c| c.p_iat)),
                fmt_opt(c.and_then(|c| c.p_combined)),
                pair.reactive().to_string(),
            ])?;
        }
    }
    w.flush()?;
    eprintln!("{reactive} reactive window pairs");
    Ok(())
}

fn emit_verdicts(session: &ProbeSession, threshold: f64, out: &VerdictOutput) -> Result<()> {
    let cfg = JudgeConfig {
        require_increase: !out.two_sided,
        ..JudgeConfig::with_threshold(threshold)
    };
    cfg.probe.validate()?;
    let verdicts = judge(session, &cfg);
    let doc = report(&verdicts, threshold, out.format.into());
    match &out.verdicts {
        Some(path) => fs::write(path, doc).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(doc.as_bytes())?,
    }
    Ok(())
}

fn cmd_probe(a: ProbeArgs) -> Result<()> {
    let plan = ProbePlan::load(&a.plan).with_context(|| format!("loading {}", a.plan.display()))?;
    let session = match a.capture {
        CaptureMode::Sim => {
            let models = match &a.fleet {
                None => library(),
                Some(list) => list
                    .split(',')
                    .map(|n| library_model(n.trim()).with_context(|| format!("unknown device model {n:?}")))
                    .collect::<Result<_>>()?,
            };
            let fleet = SimulatedFleet::new(models, a.seed);
            run_session(&plan, &mut fleet.sink(), &mut fleet.capture(), &fleet.clock)?
        }
        CaptureMode::Live => {
            let pcap = a.pcap.as_ref().context("--pcap is required for live capture")?;
            let local = LocalNetwork::parse(a.local_net.as_deref().unwrap_or_default())?;
            let source = TailingPcapSource::new(pcap, Duration::from_secs(3600));
            let mut capture = LiveCapture::new(Box::new(source), local);
            let mut sink = CommandSink::parse(&a.player)?;
            run_session(&plan, &mut sink, &mut capture, &MonotonicClock::new())?
        }
    };
    write_json(&a.out, &SessionFile::from(&session))?;
    if let Some(f) = &session.failure {
        eprintln!("session stopped early: {f}");
    }
    emit_verdicts(&session, plan.threshold, &a.verdict)
}

fn cmd_judge(a: JudgeArgs) -> Result<()> {
    let text = fs::read_to_string(&a.session).with_context(|| format!("reading {}", a.session.display()))?;
    let file: SessionFile = serde_json::from_str(&text).context("parsing session file")?;
    let session = ProbeSession::try_from(file)?;
    let threshold = a.threshold.unwrap_or(session.plan.threshold);
    emit_verdicts(&session, threshold, &a.verdict)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(&a.scenario).with_context(|| format!("loading {}", a.scenario.display()))?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let set = simulate(&scenario)?;
    if let Some(p) = &a.pcap {
        let n = write_pcap(&set, p)?;
        eprintln!("{n} packets written to {}", p.display());
    }
    if let Some(p) = &a.labels {
        write_json(p, &set.labels)?;
    }
    if let Some(p) = &a.traces {
        write_traces_json(p, set.traces.values())?;
    }
    eprintln!(
        "{} devices, {} packets, {} audio intervals",
        set.traces.len(),
        set.packet_count(),
        set.labels.len()
    );
    Ok(())
}

fn cmd_fuzz(a: FuzzArgs) -> Result<()> {
    let dict = match &a.dict {
        Some(p) => {
            let (entries, report) = load_dictionary(p).with_context(|| format!("reading {}", p.display()))?;
            if report.skipped > 0 {
                eprintln!("{} malformed dictionary lines skipped", report.skipped);
            }
            entries
        }
        None => fixture_dictionary(),
    };
    let candidates = match a.tolerance {
        Some(tol) => select_candidates(&dict, &a.target, tol)?,
        None => select_by_counts(&dict, &a.target, &a.phonemes.iter().copied().collect::<BTreeSet<_>>())?,
    };
    eprintln!("{} candidate words", candidates.len());
    let results = match a.oracle {
        OracleKind::Sim => {
            let table = match &a.table {
                Some(p) => ActivationTable::load(p).with_context(|| format!("reading {}", p.display()))?,
                None => ActivationTable::alexa(),
            };
            let mut oracle = SimulatedOracle::new(table, a.seed);
            run_campaign(&candidates, &mut oracle, a.trials)?
        }
        OracleKind::SensorLog => {
            let log = a.sensor_log.as_ref().context("--sensor-log is required")?;
            let dir = a.audio_dir.as_ref().context("--audio-dir is required")?;
            let mut sink = CommandSink::parse(&a.player)?;
            let clock = MonotonicClock::new();
            let mut oracle = SensorLogOracle::new(log, dir, &mut sink, &clock).with_cooldown(a.cooldown);
            run_campaign(&candidates, &mut oracle, a.trials)?
        }
    };
    let report = FuzzReport::new(&a.target, a.trials, results);
    write_json(&a.out, &report)?;
    eprintln!("{} words discovered", report.discovered.len());
    Ok(())
}

fn cmd_roc(a: RocArgs) -> Result<()> {
    let traces = read_any_traces(&a.input)?;
    let set = LabeledTraceSet {
        traces,
        labels: read_labels(&a.labels)?,
    };
    let averaging: Averaging = a.averaging.into();
    let points: Vec<RocPoint> = match a.mode {
        RocMode::Burst => {
            if a.max_n < 2 {
                bail!("--max-n must be at least 2");
            }
            sweep_n(&set, &BurstParams::default(), 1..=a.max_n, averaging)?
                .into_iter()
                .map(|p| RocPoint {
                    parameter: p.n as f64,
                    tpr: p.tpr,
                    fpr: p.fpr,
                })
                .collect()
        }
        RocMode::Stat => {
            let cfg = ProbeConfig::default();
            let per_device = set
                .traces
                .values()
                .map(|t| {
                    let labels: Vec<Span> = set.labels_for(t.device()).map(AudioLabel::span).collect();
                    sliding_scan(t, a.window, &cfg).map(|pairs| (pairs, labels))
                })
                .collect::<Result<Vec<_>, _>>()?;
            scan_threshold_sweep(&per_device, &threshold_grid(a.steps.max(1)), averaging)
        }
    };
    let curve = roc(points)?;
    curve.write_csv(BufWriter::new(File::create(&a.out)?))?;
    if let Some(best) = curve.best_point() {
        eprintln!(
            "closest to (0,1): parameter {} TPR {:.3} FPR {:.4}",
            best.parameter, best.tpr, best.fpr
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::DetectBurst(a) => cmd_detect_burst(a),
        Command::StatScan(a) => cmd_stat_scan(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Judge(a) => cmd_judge(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Roc(a) => cmd_roc(a),
    }
}
