use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ssvep_core::calibration::{self, Calibrated, CalibrationSession, Recording, ThresholdFile};
use ssvep_core::classifier::{MatchMode, ThresholdVector};
use ssvep_core::stimulus::{self, F_INTERRUPT};
use ssvep_core::synth::{SubjectModel, SubjectProfile};
use ssvep_runtime::{
    run_scenario, serve_telemetry, subject_for, ControlLoop, EventLog, LoopConfig, ScenarioScript,
    ServeOptions,
};

#[derive(Parser)]
#[command(name = "ssvep-chair", version, about = "Simulated SSVEP-controlled wheelchair")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the closed loop, a gaze scenario, or the telemetry service.
    Run(RunArgs),
    /// Derive one threshold level from a calibration recording.
    Calibrate(CalibrateArgs),
    /// Write a synthetic calibration recording (rest, then focus on one stimulus).
    SynthRecording(SynthRecordingArgs),
    /// Emulate the stimulus firmware's tick scheduler.
    EmuStimulus(EmuArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Analysis window in seconds (1, 2 or 4).
    #[arg(long, default_value_t = 2.0)]
    window: f64,
    /// Six stimulus frequencies (Hz) in command order.
    #[arg(long, num_args = 1..=6, value_delimiter = ',')]
    freqs: Option<Vec<u32>>,
    /// Six levels, or a thresholds file written by `calibrate`.
    #[arg(long, num_args = 1..=6, value_delimiter = ',')]
    thresholds: Option<Vec<String>>,
    /// Preset name (good, weak, none, clean) or a TOML profile file.
    #[arg(long, default_value = "good")]
    subject: String,
    /// Scenario file (JSON), or the built-in `trial1` / `trial2`.
    #[arg(long)]
    scenario: Option<String>,
    /// Serve telemetry on this address, e.g. 127.0.0.1:8765.
    #[arg(long)]
    serve: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Event log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_parser = parse_compat, default_value = "strict")]
    compat: MatchMode,
    /// Pace hops by the wall clock.
    #[arg(long)]
    realtime: bool,
    /// Initial gaze target (0..5) for plain runs.
    #[arg(long)]
    gaze: Option<usize>,
    /// Simulated seconds for plain runs; with --serve, stop after this long.
    #[arg(long)]
    duration: Option<f64>,
    /// Write the delay report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    #[arg(long)]
    recording: PathBuf,
    /// Stimulus frequency gazed at during the focus period (Hz).
    #[arg(long)]
    target: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, num_args = 1..=6, value_delimiter = ',')]
    freqs: Option<Vec<u32>>,
    /// Existing thresholds file whose other levels are kept.
    #[arg(long)]
    base: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SynthRecordingArgs {
    #[arg(long, default_value = "good")]
    subject: String,
    /// Stimulus frequency gazed at during the focus period (Hz).
    #[arg(long)]
    target: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, num_args = 1..=6, value_delimiter = ',')]
    freqs: Option<Vec<u32>>,
}

#[derive(clap::Args)]
struct EmuArgs {
    #[arg(long, num_args = 1..=6, value_delimiter = ',')]
    freqs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2500)]
    ticks: u64,
    /// Level trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// DAC word dump, one hex word per line.
    #[arg(long)]
    words: Option<PathBuf>,
}

fn parse_compat(s: &str) -> Result<MatchMode, String> {
    match s {
        "strict" => Ok(MatchMode::Strict),
        "paper" => Ok(MatchMode::Paper),
        other => Err(format!("unknown mode {other} (strict or paper)")),
    }
}

fn six<T: Copy>(values: &[T], what: &str) -> Result<[T; 6]> {
    values
        .try_into()
        .map_err(|_| anyhow::anyhow!("{what} needs exactly 6 values, got {}", values.len()))
}

fn load_profile(spec: &str) -> Result<SubjectProfile> {
    if let Some(p) = SubjectProfile::preset(spec) {
        return Ok(p);
    }
    SubjectProfile::load(Path::new(spec)).with_context(|| format!("subject profile {spec}"))
}

fn load_thresholds(values: &[String]) -> Result<ThresholdVector> {
    if let [single] = values {
        if single.parse::<f64>().is_err() {
            let file = ThresholdFile::load(Path::new(single)).with_context(|| format!("thresholds {single}"))?;
            return Ok(file.to_thresholds()?);
        }
    }
    let levels: Vec<f64> = values
        .iter()
        .map(|v| v.parse().with_context(|| format!("threshold {v}")))
        .collect::<Result<_>>()?;
    Ok(ThresholdVector::new(six(&levels, "--thresholds")?)?)
}

fn loop_config(args: &RunArgs) -> Result<LoopConfig> {
    let mut cfg = LoopConfig { window_s: args.window, seed: args.seed, compat: args.compat, ..LoopConfig::default() };
    if let Some(f) = &args.freqs {
        cfg.flicker_freqs = six(f, "--freqs")?;
    }
    if let Some(t) = &args.thresholds {
        cfg.thresholds = load_thresholds(t)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_log(log: &EventLog, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.write_csv(BufWriter::new(f))?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = loop_config(&args)?;
    let profile = load_profile(&args.subject)?;
    let mut lp = ControlLoop::with_profile(cfg.clone(), profile)?;
    lp.set_gaze(args.gaze)?;

    if let Some(addr) = &args.serve {
        if args.scenario.is_some() {
            bail!("--scenario and --serve cannot be combined");
        }
        let runtime = tokio::runtime::Runtime::new()?;
        return runtime.block_on(async {
            let options = ServeOptions { until: args.duration, ..ServeOptions::realtime(&cfg) };
            let handle = serve_telemetry(lp, addr, options).await?;
            println!("telemetry on ws://{}/ws", handle.local_addr);
            tokio::select! {
                r = handle.wait() => r?,
                _ = tokio::signal::ctrl_c() => {}
            }
            Ok(())
        });
    }

    if let Some(name) = &args.scenario {
        let script = match name.as_str() {
            "trial1" => ScenarioScript::trial1(),
            "trial2" => ScenarioScript::trial2(),
            path => ScenarioScript::load(Path::new(path))?,
        };
        if args.realtime {
            log::warn!("--realtime is ignored for scenarios");
        }
        let (report, log) = run_scenario(&mut lp, &script)?;
        println!("{report}");
        if let Some(path) = &args.report {
            std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        }
        if let Some(path) = &args.log {
            write_log(&log, path)?;
        }
        return Ok(());
    }

    let until = args.duration.unwrap_or(30.0);
    let hops = (until / cfg.hop_s).round() as u64;
    let mut log = EventLog::default();
    for _ in 0..hops {
        let r = lp.hop()?;
        if args.realtime {
            std::thread::sleep(Duration::from_secs_f64(cfg.hop_s).saturating_sub(r.processing));
        }
        log.records.push(r);
    }
    let fired: Vec<usize> = (0..=6u8)
        .map(|c| log.records.iter().filter(|r| r.command_code == c).count())
        .collect();
    let end = lp.chair();
    println!("{} hops; command counts (0..6) {fired:?}", log.records.len());
    println!("chair at x={:.3} y={:.3} heading={:.3}", end.x, end.y, end.heading);
    if let Some(path) = &args.log {
        write_log(&log, path)?;
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let freqs = match &args.freqs {
        Some(f) => six(f, "--freqs")?,
        None => LoopConfig::default().flicker_freqs,
    };
    let index = freqs
        .iter()
        .position(|&f| f == args.target)
        .with_context(|| format!("{} Hz is not one of {freqs:?}", args.target))?;
    let recording = Recording::load(&args.recording)?;
    let result = calibration::calibrate_threshold(&CalibrationSession::new(recording, args.target), freqs)?;
    let Calibrated::Level(level) = result.level else {
        bail!("{} Hz scored no better than chance during the focus period; no level written", args.target);
    };
    let mut levels = match &args.base {
        Some(p) => ThresholdFile::load(p)?.levels(),
        None => ThresholdVector::DEFAULT,
    };
    levels[index] = level;
    std::fs::write(&args.out, ThresholdFile::from_levels(&levels).to_toml())?;
    println!(
        "{} Hz: median points {:.3} over {} windows, level {:.3}",
        args.target,
        result.median_points,
        result.window_points.len(),
        level
    );
    Ok(())
}

fn synth_recording(args: SynthRecordingArgs) -> Result<()> {
    let freqs = match &args.freqs {
        Some(f) => six(f, "--freqs")?,
        None => LoopConfig::default().flicker_freqs,
    };
    let index = freqs
        .iter()
        .position(|&f| f == args.target)
        .with_context(|| format!("{} Hz is not one of {freqs:?}", args.target))?;
    let cfg = LoopConfig { flicker_freqs: freqs, seed: args.seed, ..LoopConfig::default() };
    let mut subject: SubjectModel = subject_for(&cfg, load_profile(&args.subject)?)?;
    let session = CalibrationSession::new(Recording { fs: cfg.fs, channels: Default::default() }, args.target);
    let rest = subject.generate_samples((session.rest_s * cfg.fs).round() as usize);
    subject.set_gaze(Some(index))?;
    let focus = subject.generate_samples((session.focus_s * cfg.fs).round() as usize);
    let channels: [Vec<f64>; 3] = std::array::from_fn(|e| [rest[e].as_slice(), focus[e].as_slice()].concat());
    let rec = Recording { fs: cfg.fs, channels };
    rec.write_csv(BufWriter::new(File::create(&args.out)?))?;
    println!("wrote {:.1} s to {}", rec.duration(), args.out.display());
    Ok(())
}

fn emu_stimulus(args: EmuArgs) -> Result<()> {
    let freqs = match &args.freqs {
        Some(f) => six(f, "--freqs")?,
        None => LoopConfig::default().flicker_hz(),
    };
    let sched = stimulus::make_scheduler(freqs, F_INTERRUPT)?;
    for (i, f) in freqs.iter().enumerate() {
        println!(
            "stimulus {i}: requested {f} Hz, counter top {}, realized {:.4} Hz, duty {:.3}",
            sched.max_counter[i],
            sched.realized_frequency(i),
            sched.duty_cycle(i)
        );
    }
    if let Some(path) = &args.trace {
        sched.clone().write_trace(args.ticks, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.words {
        let mut s = sched.clone();
        let frames: Vec<_> = (0..args.ticks).flat_map(|_| s.tick_with_words()).collect();
        stimulus::write_word_dump(&frames, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Cmd::Run(a) => run(a),
        Cmd::Calibrate(a) => calibrate(a),
        Cmd::SynthRecording(a) => synth_recording(a),
        Cmd::EmuStimulus(a) => emu_stimulus(a),
    }
}
