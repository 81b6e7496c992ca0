//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{load_config, LoadedConfig, PipelineMode, RunConfig, SourceSpec};
use super::source::{sha256_hex, RunSource, SourceInfo};
use super::{
    AnalyzeArgs, Cli, CliError, Command, FetchArgs, HistogramArgs, PipelineArgs, RenderArgs,
    ShuffleArgs, SonogramArgs,
};
use crate::qjump::{read_intervals_csv, simulate_trajectory, EmissionRecord, QjumpError, Stop};
use crate::qrngclient::{cache_bytes, fetch_random_bytes, QrngEndpointConfig, Transport};
use crate::randsource::SourceError;
use crate::seqorder::{apply_permutation, fisher_yates, load_sequence, save_sequence, SeqError};
use crate::stats::{longest_repeat, serial_correlation, snapshot_series, HistogramSeries, StatsError};
use crate::synth::{export_sonogram_csv, read_wav, render_additive, stft, write_wav, SynthSpec};
use crate::timbre::{
    build_event_sequence, histogram_to_spectrum, read_events_json, spectra_in_succession,
    write_events_json, TimbreError, TimbreEvent,
};

const TOOL: &str = "qtimbre";
const DEFAULT_OUT: &str = "out";

impl From<QjumpError> for CliError {
    fn from(e: QjumpError) -> Self {
        match e {
            QjumpError::Source(_) | QjumpError::MalformedCsv { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SeqError> for CliError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::Io { .. } | SeqError::MalformedLine { .. } | SeqError::DuplicateId(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Runs one parsed command line. Network access goes through `transport`.
pub fn run(cli: Cli, transport: &mut dyn Transport) -> Result<(), CliError> {
    let globals = Globals {
        config: cli.config.clone(),
        seed: cli.seed,
        qbytes: cli.qbytes.clone(),
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Simulate(args) => simulate(&globals, &args, transport),
        Command::Histogram(args) => histogram(&globals, &args, transport),
        Command::Sonify(args) => sonify(&globals, &args, transport),
        Command::Shuffle(args) => shuffle(&globals, &args, transport),
        Command::Analyze(args) => analyze(&globals, &args),
        Command::FetchQrng(args) => fetch_qrng(&globals, &args, transport),
        Command::Render(args) => render(&globals, &args),
        Command::Sonogram(args) => sonogram(&globals, &args),
    }
}

struct Globals {
    config: Option<PathBuf>,
    seed: Option<u64>,
    qbytes: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl Globals {
    fn out_file(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out FILE is required".into()))
    }

    fn loaded(&self) -> Result<LoadedConfig, CliError> {
        let mut loaded = match &self.config {
            Some(path) => load_config(path)?,
            None => LoadedConfig {
                config: RunConfig::default(),
                expected_source_sha256: None,
            },
        };
        if let Some(spec) = self.source_override()? {
            loaded.config.source = spec;
            loaded.expected_source_sha256 = None;
        }
        Ok(loaded)
    }

    fn source_override(&self) -> Result<Option<SourceSpec>, CliError> {
        match (self.seed, &self.qbytes) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "--seed and --qbytes are mutually exclusive".into(),
            )),
            (Some(seed), None) => Ok(Some(SourceSpec::Seed(seed))),
            (None, Some(path)) => Ok(Some(SourceSpec::Qbytes(path.clone()))),
            (None, None) => Ok(None),
        }
    }
}

fn apply_overrides(config: &mut RunConfig, args: &PipelineArgs) {
    if let Some(m) = args.model {
        config.atom.model = m;
    }
    if let Some(o) = args.omega {
        config.atom.rabi_omega = o;
    }
    if let Some(g) = args.gamma {
        config.atom.gamma = g;
    }
    if let Some(dt) = args.dt {
        config.atom.dt = dt;
    }
    if let Some(n) = args.n_events {
        config.stop = Stop::NEvents(n);
    }
    if let Some(t) = args.t_max {
        config.stop = Stop::TMax(t);
    }
    if let Some(p) = &args.palette {
        config.palette = Some(p.clone());
    }
    if let Some(m) = args.mode {
        config.timbre.mode = m;
    }
    if let Some(s) = args.time_scale {
        config.timbre.time_scale = s;
    }
}

/// A validated configuration with its output directory split off, so the
/// recorded config does not depend on where outputs were written.
struct Prepared {
    config: RunConfig,
    out_dir: PathBuf,
    expected_sha256: Option<String>,
}

fn prepare(globals: &Globals, args: &PipelineArgs) -> Result<Prepared, CliError> {
    let loaded = globals.loaded()?;
    let mut config = loaded.config;
    apply_overrides(&mut config, args);
    if let Some(out) = &globals.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    let out_dir = config
        .output_dir
        .take()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Prepared {
        config,
        out_dir,
        expected_sha256: loaded.expected_source_sha256,
    })
}

fn open_source(p: &Prepared, transport: &mut dyn Transport) -> Result<RunSource, CliError> {
    let source = RunSource::open(&p.config.source, transport)?;
    if let Some(expected) = &p.expected_sha256 {
        match source.sha256() {
            Some(actual) if actual == expected => {}
            actual => {
                return Err(CliError::Config(format!(
                    "source bytes do not match the recorded run: expected sha256 {expected}, got {}",
                    actual.unwrap_or("none (seeded source)")
                )))
            }
        }
    }
    Ok(source)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<SourceInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<InputInfo>,
    emissions: usize,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct InputInfo {
    path: String,
    sha256: String,
}

fn write_metadata(dir: &Path, meta: &Metadata) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    write_file(&dir.join("metadata.json"), json + "\n")
}

fn write_emissions(record: &EmissionRecord, dir: &Path) -> Result<String, CliError> {
    let name = "emissions.csv".to_string();
    let mut buf = Vec::new();
    record.write_csv(&mut buf).map_err(CliError::runtime)?;
    write_file(&dir.join(&name), buf)?;
    Ok(name)
}

fn simulate_record(config: &RunConfig, source: &mut RunSource) -> Result<EmissionRecord, CliError> {
    Ok(simulate_trajectory(&config.atom, source, config.stop)?)
}

fn stats_err(e: StatsError) -> CliError {
    match e {
        StatsError::InvalidEdges | StatsError::CheckpointOutOfRange { .. } | StatsError::CheckpointsNotIncreasing => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

fn timbre_err(e: TimbreError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn series_for(config: &RunConfig, intervals: &[f64]) -> Result<HistogramSeries, CliError> {
    let edges = config.histogram.edges()?;
    let checkpoints = config.histogram.resolve_checkpoints(intervals.len());
    snapshot_series(intervals, &edges, &checkpoints).map_err(stats_err)
}

fn simulate(globals: &Globals, args: &PipelineArgs, transport: &mut dyn Transport) -> Result<(), CliError> {
    let p = prepare(globals, args)?;
    let mut source = open_source(&p, transport)?;
    let record = simulate_record(&p.config, &mut source)?;
    create_dir(&p.out_dir)?;
    let outputs = vec![write_emissions(&record, &p.out_dir)?, "metadata.json".into()];
    write_metadata(
        &p.out_dir,
        &Metadata {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: "simulate",
            config: &p.config,
            source: Some(source.info()),
            input: None,
            emissions: record.len(),
            outputs,
        },
    )?;
    println!("{} emissions written to {}", record.len(), p.out_dir.display());
    Ok(())
}

fn histogram(globals: &Globals, args: &HistogramArgs, transport: &mut dyn Transport) -> Result<(), CliError> {
    let mut p = prepare(globals, &args.pipeline)?;
    if let Some(b) = args.bins {
        p.config.histogram.bins = b;
    }
    if let Some(lo) = args.lo {
        p.config.histogram.lo = lo;
    }
    if let Some(hi) = args.hi {
        p.config.histogram.hi = hi;
    }
    if let Some(c) = &args.checkpoints {
        p.config.histogram.checkpoints = Some(c.clone());
    }
    p.config.histogram.edges()?;

    let (intervals, source, input) = match &args.input {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let intervals = read_intervals_csv(BufReader::new(&bytes[..]))?;
            let input = InputInfo {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            };
            (intervals, None, Some(input))
        }
        None => {
            p.config.validate()?;
            let mut source = open_source(&p, transport)?;
            let record = simulate_record(&p.config, &mut source)?;
            (record.intervals, Some(source.info()), None)
        }
    };

    let series = series_for(&p.config, &intervals)?;
    create_dir(&p.out_dir)?;
    let mut outputs = series.write_dir(&p.out_dir).map_err(stats_err)?;
    outputs.push("metadata.json".into());
    write_metadata(
        &p.out_dir,
        &Metadata {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: "histogram",
            config: &p.config,
            source,
            input,
            emissions: intervals.len(),
            outputs,
        },
    )?;
    println!(
        "{} snapshots of {} intervals written to {}",
        series.checkpoints.len(),
        intervals.len(),
        p.out_dir.display()
    );
    Ok(())
}

/// The first `n` emissions of a record.
fn audible_prefix(record: &EmissionRecord, n: usize) -> EmissionRecord {
    let k = n.min(record.len());
    EmissionRecord {
        emission_times: record.emission_times[..k].to_vec(),
        intervals: record.intervals[..k].to_vec(),
        params: record.params,
        source_tag: record.source_tag.clone(),
    }
}

fn timbre_events(
    config: &RunConfig,
    record: &EmissionRecord,
    series: &HistogramSeries,
) -> Result<Vec<TimbreEvent>, CliError> {
    let palette = config.load_palette()?;
    let t = &config.timbre;
    match t.mode.sequence_mode() {
        Some(mode) => build_event_sequence(
            &audible_prefix(record, t.audible_events),
            &palette,
            mode,
            t.time_scale,
            t.total_hold,
        )
        .map_err(timbre_err),
        None => {
            debug_assert_eq!(t.mode, PipelineMode::HistogramSuccession);
            let spectra = series
                .snapshots
                .iter()
                .filter(|h| h.counts().iter().any(|&c| c > 0))
                .map(|h| histogram_to_spectrum(h, palette.fundamental_hz, t.max_partials))
                .collect::<Result<Vec<_>, _>>()
                .map_err(timbre_err)?;
            if spectra.is_empty() {
                return Err(CliError::Runtime(
                    "histogram-succession mode needs at least one interval inside the histogram range"
                        .into(),
                ));
            }
            spectra_in_succession(spectra, t.snapshot_hold).map_err(timbre_err)
        }
    }
}

fn sonify(globals: &Globals, args: &PipelineArgs, transport: &mut dyn Transport) -> Result<(), CliError> {
    let p = prepare(globals, args)?;
    let mut source = open_source(&p, transport)?;
    let record = simulate_record(&p.config, &mut source)?;
    let series = series_for(&p.config, &record.intervals)?;
    let events = timbre_events(&p.config, &record, &series)?;
    let pcm = render_additive(&events, &p.config.synth).map_err(CliError::runtime)?;
    let grid = stft(&pcm, p.config.sonogram.window, p.config.sonogram.hop).map_err(CliError::runtime)?;

    create_dir(&p.out_dir)?;
    let mut outputs = vec![write_emissions(&record, &p.out_dir)?];
    let hist_dir = p.out_dir.join("histograms");
    for name in series.write_dir(&hist_dir).map_err(stats_err)? {
        outputs.push(format!("histograms/{name}"));
    }
    write_events_json(&events, &p.out_dir.join("events.json")).map_err(timbre_err)?;
    outputs.push("events.json".into());
    let clamped = write_wav(&pcm, &p.out_dir.join("sonify.wav")).map_err(CliError::runtime)?;
    outputs.push("sonify.wav".into());
    export_sonogram_csv(&grid, &p.out_dir.join("sonogram.csv")).map_err(CliError::runtime)?;
    outputs.push("sonogram.csv".into());
    outputs.push("metadata.json".into());
    write_metadata(
        &p.out_dir,
        &Metadata {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: "sonify",
            config: &p.config,
            source: Some(source.info()),
            input: None,
            emissions: record.len(),
            outputs,
        },
    )?;
    if clamped > 0 {
        eprintln!("warning: {clamped} samples clipped to full scale");
    }
    println!(
        "{} emissions, {} timbre events, {:.3} s of audio written to {}",
        record.len(),
        events.len(),
        pcm.duration(),
        p.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ShuffleReport {
    source: SourceInfo,
    events: usize,
    draws: usize,
    permutation: Vec<usize>,
}

fn shuffle(globals: &Globals, args: &ShuffleArgs, transport: &mut dyn Transport) -> Result<(), CliError> {
    let spec = match &args.source {
        Some(text) => RunSource::parse(text)?,
        None => globals.loaded()?.config.source,
    };
    let out_path = globals.out_file()?;
    let seq = load_sequence(&args.events)?;
    let mut source = RunSource::open(&spec, transport)?;
    let sh = fisher_yates(seq.len(), &mut source)?;
    let out = apply_permutation(&seq, &sh.permutation)?;
    save_sequence(&out, out_path)?;
    let report = ShuffleReport {
        source: source.info(),
        events: seq.len(),
        draws: sh.draws,
        permutation: sh.permutation.mapping().to_vec(),
    };
    let report_path = sidecar_path(out_path);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&report_path, json + "\n")?;
    println!(
        "{} events shuffled with {} draws into {}",
        seq.len(),
        sh.draws,
        out_path.display()
    );
    Ok(())
}

/// `<out>.meta.json` next to the shuffled file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct LagEntry {
    lag: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient: Option<f64>,
    status: &'static str,
}

#[derive(Serialize)]
struct AnalyzeReport {
    input: String,
    format: String,
    n: usize,
    correlations: Vec<LagEntry>,
    longest_repeat: usize,
}

fn parse_text_stream(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("not a finite number: {t:?}")))
        })
        .collect()
}

fn analyze(globals: &Globals, args: &AnalyzeArgs) -> Result<(), CliError> {
    if args.max_lag == 0 {
        return Err(CliError::Config("--max-lag must be >= 1".into()));
    }
    let raw = fs::read(&args.input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.input.display())))?;
    let (stream, repeat) = match args.format.as_str() {
        "bytes" => {
            let stream: Vec<f64> = raw.iter().map(|&b| b as f64).collect();
            (stream, longest_repeat(&raw))
        }
        "text" => {
            let text = String::from_utf8(raw)
                .map_err(|_| CliError::Config(format!("{} is not UTF-8 text", args.input.display())))?;
            let stream = parse_text_stream(&text)?;
            // +0.0 and -0.0 compare equal as values, so normalize before keying.
            let keys: Vec<u64> = stream.iter().map(|v| (v + 0.0).to_bits()).collect();
            let repeat = longest_repeat(&keys);
            (stream, repeat)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown format {other:?}; expected bytes or text"
            )))
        }
    };
    let correlations = (1..=args.max_lag)
        .map(|lag| match serial_correlation(&stream, lag) {
            Ok(r) => LagEntry {
                lag,
                coefficient: Some(r.coefficient),
                status: "ok",
            },
            Err(StatsError::ZeroVariance { .. }) => LagEntry {
                lag,
                coefficient: None,
                status: "zero_variance",
            },
            Err(_) => LagEntry {
                lag,
                coefficient: None,
                status: "too_short",
            },
        })
        .collect();
    let report = AnalyzeReport {
        input: args.input.display().to_string(),
        format: args.format.clone(),
        n: stream.len(),
        correlations,
        longest_repeat: repeat,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &globals.out {
        Some(path) => write_file(path, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn fetch_qrng(globals: &Globals, args: &FetchArgs, transport: &mut dyn Transport) -> Result<(), CliError> {
    let out = globals.out_file()?;
    let mut config = match &args.url {
        Some(url) => QrngEndpointConfig::with_url(url.clone()),
        None => QrngEndpointConfig::default(),
    };
    if let Some(b) = args.block_size {
        config.block_size = b;
    }
    if let Some(r) = args.retries {
        config.retries = r;
    }
    if let Some(t) = args.timeout {
        config.timeout_secs = t;
    }
    let bytes = fetch_random_bytes(transport, &config, args.count)?;
    cache_bytes(&bytes, out)?;
    println!(
        "{} bytes written to {} (sha256 {})",
        bytes.len(),
        out.display(),
        sha256_hex(&bytes)
    );
    Ok(())
}

fn render(globals: &Globals, args: &RenderArgs) -> Result<(), CliError> {
    let out = globals.out_file()?;
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        sample_rate: args.sr,
        crossfade: args.crossfade.unwrap_or(defaults.crossfade),
        master_gain: args.gain.unwrap_or(defaults.master_gain),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let events = read_events_json(&args.events).map_err(|e| CliError::Config(e.to_string()))?;
    let pcm = render_additive(&events, &spec).map_err(CliError::runtime)?;
    let clamped = write_wav(&pcm, out).map_err(CliError::runtime)?;
    if clamped > 0 {
        eprintln!("warning: {clamped} samples clipped to full scale");
    }
    println!("{:.3} s rendered to {}", pcm.duration(), out.display());
    Ok(())
}

fn sonogram(globals: &Globals, args: &SonogramArgs) -> Result<(), CliError> {
    let out = globals.out_file()?;
    if !args.window.is_power_of_two() || args.window < 2 || args.hop == 0 || args.hop > args.window {
        return Err(CliError::Config(format!(
            "window {} must be a power of two >= 2 and hop {} in 1..=window",
            args.window, args.hop
        )));
    }
    let pcm = read_wav(&args.input).map_err(|e| CliError::Config(e.to_string()))?;
    let grid = stft(&pcm, args.window, args.hop).map_err(CliError::runtime)?;
    export_sonogram_csv(&grid, out).map_err(CliError::runtime)?;
    println!(
        "{} frames x {} bins written to {}",
        grid.frame_times.len(),
        grid.bin_freqs.len(),
        out.display()
    );
    Ok(())
}
