//! `evc`: command-line front end for the event-guided codec.

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evc_core::counters;
use evc_core::event_sim::{decimate_keyframes, read_csv, read_evt1, simulate_events, write_evt1, SimConfig, EVT_MAGIC};
use evc_core::metrics::{gop_summaries, MetricsReport};
use evc_core::pgm::{read_sequence, write_sequence};
use evc_core::pipeline::{encode_sequence, run_compare, AlphaMode, EncoderConfig};
use evc_core::rate::{RateControlConfig, RateMode};
use evc_core::stream::{decode_stream, parse_bitstream_bytes};
use evc_core::{Error, EventStream, Frame};

const DEFAULT_FRAME_US: u64 = 33_333;

#[derive(Parser)]
#[command(name = "evc", version, about = "Event-guided video codec with motion-only intermediate frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an event sensor over a high-rate PGM sequence; writes the
    /// event file and the decimated keyframes.
    SimulateEvents(SimulateArgs),
    /// Encode keyframes plus events into an .evc stream.
    Encode(EncodeArgs),
    /// Decode an .evc stream to a PGM sequence in display order.
    Decode(DecodeArgs),
    /// Per-frame bits and PSNR of a stream against reference frames.
    Metrics(MetricsArgs),
    /// Run the coupled encoder and the interpolate-then-encode baseline
    /// side by side on a ground-truth sequence.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory of ground-truth frames (frame_%06d.pgm).
    #[arg(long)]
    frames: PathBuf,
    /// Output directory; receives events.evt and keyframes/.
    #[arg(long)]
    out: PathBuf,
    /// Write the events here instead of <out>/events.evt (.csv selects text).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Log-intensity contrast threshold.
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    /// Keep every K-th frame as a keyframe.
    #[arg(long, default_value_t = 4)]
    decimation: usize,
    /// Duration of one input frame in microseconds.
    #[arg(long, default_value_t = DEFAULT_FRAME_US)]
    frame_us: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RcArg {
    #[value(name = "constant_qp")]
    ConstantQp,
    Coupled,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaArg {
    Events,
    Linear,
}

#[derive(Args)]
struct CodecArgs {
    /// Intermediate frames per keyframe interval.
    #[arg(long, default_value_t = 3)]
    interp: usize,
    /// Keyframes per GOP (one I frame followed by P frames).
    #[arg(long, default_value_t = 4)]
    gop: usize,
    /// Quantization parameter (base qp under coupled rate control).
    #[arg(long, default_value_t = 22)]
    qp: u8,
    /// Target bitrate in bits per second; required by --rc coupled.
    #[arg(long)]
    bitrate: Option<f64>,
    #[arg(long, value_enum, default_value = "constant_qp")]
    rc: RcArg,
    /// Full-search range in pixels.
    #[arg(long, default_value_t = 24)]
    search_range: u32,
    /// How intermediate frames split the keyframe motion.
    #[arg(long, value_enum, default_value = "events")]
    alpha: AlphaArg,
}

#[derive(Args)]
struct EncodeArgs {
    /// Directory of keyframes (frame_%06d.pgm).
    #[arg(long)]
    frames: PathBuf,
    /// Event file, EVT1 binary or CSV (t_us,x,y,p).
    #[arg(long)]
    events: PathBuf,
    /// Output stream path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    /// Capture frames between consecutive keyframes; defaults to interp + 1.
    #[arg(long)]
    decimation: Option<usize>,
    /// Duration of one capture frame in microseconds.
    #[arg(long, default_value_t = DEFAULT_FRAME_US)]
    frame_us: u64,
    /// Write a JSON metrics report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-block intermediate motion fields here.
    #[arg(long)]
    dump_motion: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Stream to decode.
    input: PathBuf,
    /// Output directory for frame_%06d.pgm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Stream to measure.
    input: PathBuf,
    /// Reference frames, indexed by POC.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of ground-truth frames.
    #[arg(long)]
    frames: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_FRAME_US)]
    frame_us: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

type CliResult<T> = std::result::Result<T, String>;

fn fail<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> String {
    move |e| format!("{context}: {e}")
}

impl CodecArgs {
    /// `key_us` is the keyframe period, used to turn a bitrate into a
    /// per-GOP budget.
    fn encoder_config(&self, key_us: u64) -> CliResult<EncoderConfig> {
        let rate = match self.rc {
            RcArg::ConstantQp => RateControlConfig::constant(self.qp),
            RcArg::Coupled => {
                let bps = self.bitrate.ok_or("--rc coupled needs --bitrate")?;
                let gop_seconds = self.gop as f64 * key_us as f64 / 1e6;
                RateControlConfig::coupled(self.qp, bps * gop_seconds)
            }
        };
        if self.bitrate.is_some() && rate.mode == RateMode::ConstantQp {
            return Err("--bitrate only applies with --rc coupled".into());
        }
        rate.validate().map_err(|e| e.to_string())?;
        Ok(EncoderConfig {
            interp_factor: self.interp,
            gop_length: self.gop,
            search_range: self.search_range,
            rate,
            alpha_mode: match self.alpha {
                AlphaArg::Events => AlphaMode::Events,
                AlphaArg::Linear => AlphaMode::Linear,
            },
            ..EncoderConfig::default()
        })
    }
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())? + "\n";
    match path {
        Some(p) => fs::write(p, text).map_err(fail(p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load_events(path: &Path, width: usize, height: usize) -> CliResult<EventStream> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(fail(path.display()))?;
    let events = if bytes.starts_with(EVT_MAGIC) {
        read_evt1(&mut bytes.as_slice()).map(|(s, _)| s)
    } else {
        read_csv(BufReader::new(bytes.as_slice()), width, height)
    }
    .map_err(fail(path.display()))?;
    if (events.width, events.height) != (width, height) {
        return Err(format!("{}: {}", path.display(), Error::GeometryMismatch));
    }
    Ok(events)
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg = SimConfig { contrast_threshold: a.threshold, decimation: a.decimation, ..SimConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let gt = read_sequence(&a.frames, a.frame_us).map_err(fail(a.frames.display()))?;
    let events = simulate_events(&gt, &cfg).map_err(|e| e.to_string())?;
    let keys = decimate_keyframes(&gt, a.decimation).map_err(|e| e.to_string())?;
    fs::create_dir_all(&a.out).map_err(fail(a.out.display()))?;
    let ev_path = a.events.clone().unwrap_or_else(|| a.out.join("events.evt"));
    let mut buf = Vec::new();
    if is_csv(&ev_path) {
        evc_core::event_sim::write_csv(&events, &mut buf)
    } else {
        write_evt1(&events, a.threshold as f32, &mut buf)
    }
    .map_err(|e| e.to_string())?;
    fs::write(&ev_path, buf).map_err(fail(ev_path.display()))?;
    let key_dir = a.out.join("keyframes");
    write_sequence(&key_dir, &keys).map_err(fail(key_dir.display()))?;
    eprintln!("{} events, {} keyframes -> {}", events.len(), keys.len(), a.out.display());
    Ok(())
}

fn encode(a: &EncodeArgs) -> CliResult<()> {
    let decimation = a.decimation.unwrap_or(a.codec.interp + 1);
    if decimation == 0 {
        return Err("--decimation must be at least 1".into());
    }
    let key_us = decimation as u64 * a.frame_us;
    let cfg = a.codec.encoder_config(key_us)?;
    let keys = read_sequence(&a.frames, key_us).map_err(fail(a.frames.display()))?;
    let events = load_events(&a.events, keys[0].width(), keys[0].height())?;
    counters::reset();
    let out = encode_sequence(&keys, &events, &cfg).map_err(|e| e.to_string())?;
    let bytes = out.bitstream.to_bytes();
    fs::write(&a.out, &bytes).map_err(fail(a.out.display()))?;
    if let Some(p) = &a.dump_motion {
        let text: String = out.motion_dump().into_iter().map(|(_, s)| s).collect();
        fs::write(p, text).map_err(fail(p.display()))?;
    }
    if let Some(p) = &a.report {
        let config = json!({
            "command": "encode",
            "frames": a.frames,
            "events": a.events,
            "decimation": decimation,
            "frame_us": a.frame_us,
            "encoder": cfg,
        });
        let report = MetricsReport::from_stream(&out.bitstream, None, None, out.ledger.gops().to_vec(), out.ops, config)
            .map_err(|e| e.to_string())?;
        write_json(Some(p), &serde_json::to_value(&report).map_err(|e| e.to_string())?)?;
    }
    eprintln!("{} frames, {} bytes -> {}", out.schedule.len(), bytes.len(), a.out.display());
    Ok(())
}

fn load_stream(path: &Path) -> CliResult<evc_core::stream::Bitstream> {
    let bytes = fs::read(path).map_err(fail(path.display()))?;
    parse_bitstream_bytes(&bytes).map_err(fail(path.display()))
}

fn decode(a: &DecodeArgs) -> CliResult<()> {
    let bs = load_stream(&a.input)?;
    let frames = decode_stream(&bs).map_err(fail(a.input.display()))?;
    write_sequence(&a.out, &frames).map_err(fail(a.out.display()))?;
    eprintln!("{} frames -> {}", frames.len(), a.out.display());
    Ok(())
}

fn metrics(a: &MetricsArgs) -> CliResult<()> {
    let bs = load_stream(&a.input)?;
    counters::reset();
    let decoded = decode_stream(&bs).map_err(fail(a.input.display()))?;
    let ops = counters::snapshot();
    let reference: Option<Vec<Frame>> = match &a.frames {
        Some(dir) => Some(read_sequence(dir, 0).map_err(fail(dir.display()))?),
        None => None,
    };
    let gops = gop_summaries(&bs).map_err(|e| e.to_string())?;
    let config = json!({
        "command": "metrics",
        "input": a.input,
        "reference": a.frames,
        "header": {
            "width": bs.header.width,
            "height": bs.header.height,
            "interp_factor": bs.header.interp_factor,
            "gop_length": bs.header.gop_length,
            "base_qp": bs.header.base_qp,
        },
    });
    let report = MetricsReport::from_stream(&bs, Some(&decoded), reference.as_deref(), gops, ops, config)
        .map_err(|e| e.to_string())?;
    write_json(a.report.as_deref(), &serde_json::to_value(&report).map_err(|e| e.to_string())?)
}

fn compare(a: &CompareArgs) -> CliResult<()> {
    let key_us = (a.codec.interp as u64 + 1) * a.frame_us;
    let cfg = a.codec.encoder_config(key_us)?;
    let sim = SimConfig { contrast_threshold: a.threshold, ..SimConfig::default() };
    sim.validate().map_err(|e| e.to_string())?;
    let gt = read_sequence(&a.frames, a.frame_us).map_err(fail(a.frames.display()))?;
    let report = run_compare(&gt, &sim, &cfg).map_err(|e| e.to_string())?;
    let mut value = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    value["config"] = json!({
        "command": "compare",
        "frames": a.frames,
        "frame_us": a.frame_us,
        "encoder": report.config,
        "contrast_threshold": report.contrast_threshold,
        "decimation": report.decimation,
    });
    write_json(a.report.as_deref(), &value)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SimulateEvents(a) => simulate(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Metrics(a) => metrics(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("evc: {}", msg.lines().next().unwrap_or("error"));
            ExitCode::FAILURE
        }
    }
}
