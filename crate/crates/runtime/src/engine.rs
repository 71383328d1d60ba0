//! The closed loop: subject, classifier side, byte link, controller side.

use std::collections::VecDeque;
use std::io::Write;
use std::time::{Duration, Instant};

use thiserror::Error;

use ssvep_core::classifier::{
    self, ClassifierError, CommandMap, HarmonicSearchPlan, PointsVector, WindowAnalysis, STIMULI,
};
use ssvep_core::dsp::{Electrode, FilterCoefficients, SignalWindow};
use ssvep_core::panel::{Menu, Mode, PanelState};
use ssvep_core::protocol::{self, DecoderState};
use ssvep_core::synth::{SubjectModel, SubjectProfile, SynthError};
use ssvep_core::wheelchair::{
    self, JoystickChannels, JoystickConfig, ManualDirection, WheelchairState,
};

use crate::config::{ConfigError, LoopConfig, MAX_WINDOW_S};
use crate::ring::SampleRing;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Subject(#[from] SynthError),
    #[error("subject samples at {subject} Hz but the loop runs at {config} Hz")]
    SampleRate { subject: f64, config: f64 },
    #[error("subject stimulus frequencies {subject:?} differ from the loop's {config:?}")]
    Frequencies { subject: [f64; STIMULI], config: [f64; STIMULI] },
    #[error("gaze target {0} outside 0..6")]
    Gaze(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// In-process stand-in for the serial cable between host and controller.
#[derive(Debug, Default, Clone)]
pub struct ByteLink {
    queue: VecDeque<u8>,
}

impl ByteLink {
    pub fn send(&mut self, bytes: &[u8]) {
        self.queue.extend(bytes);
    }

    pub fn drain(&mut self) -> Vec<u8> {
        self.queue.drain(..).collect()
    }
}

/// What happened at one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopRecord {
    pub t: f64,
    pub gaze: Option<usize>,
    /// False while the ring still holds less than one window.
    pub window_full: bool,
    pub points: [f64; STIMULI],
    pub winner: Option<usize>,
    pub command_code: u8,
    /// Codes recovered by the controller-side decoder during this hop.
    pub decoded: Vec<u8>,
    pub channels: JoystickChannels,
    pub chair: WheelchairState,
    /// Wall time spent classifying and emitting.
    pub processing: Duration,
}

/// Build the subject for a loop; the loop seed replaces the profile's.
pub fn subject_for(config: &LoopConfig, profile: SubjectProfile) -> Result<SubjectModel, SynthError> {
    let profile = SubjectProfile { seed: config.seed, ..profile };
    SubjectModel::new(profile, config.flicker_hz(), config.fs)
}

pub struct ControlLoop {
    config: LoopConfig,
    plan: HarmonicSearchPlan,
    filter: FilterCoefficients,
    map: CommandMap,
    subject: SubjectModel,
    rings: [SampleRing; 3],
    link: ByteLink,
    decoder: DecoderState,
    panel: PanelState,
    joystick: JoystickConfig,
    channels: JoystickChannels,
    manual: ManualDirection,
    chair: WheelchairState,
    hops: u64,
    last_analysis: Option<WindowAnalysis>,
}

impl ControlLoop {
    pub fn new(config: LoopConfig, subject: SubjectModel) -> Result<Self, LoopError> {
        config.validate()?;
        if subject.fs != config.fs {
            return Err(LoopError::SampleRate { subject: subject.fs, config: config.fs });
        }
        if subject.flicker_freqs != config.flicker_hz() {
            return Err(LoopError::Frequencies {
                subject: subject.flicker_freqs,
                config: config.flicker_hz(),
            });
        }
        let capacity = (MAX_WINDOW_S * config.fs).round() as usize;
        let joystick = JoystickConfig::default();
        Ok(Self {
            plan: config.plan()?,
            filter: config.filter().map_err(ConfigError::from)?,
            map: CommandMap::default(),
            subject,
            rings: std::array::from_fn(|_| SampleRing::new(capacity)),
            link: ByteLink::default(),
            decoder: DecoderState::new(),
            panel: PanelState::wheelchair(),
            channels: JoystickChannels::stable(&joystick),
            joystick,
            manual: ManualDirection::None,
            chair: WheelchairState::default(),
            hops: 0,
            last_analysis: None,
            config,
        })
    }

    pub fn with_profile(config: LoopConfig, profile: SubjectProfile) -> Result<Self, LoopError> {
        let subject = subject_for(&config, profile)?;
        Self::new(config, subject)
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn plan(&self) -> &HarmonicSearchPlan {
        &self.plan
    }

    pub fn command_map(&self) -> &CommandMap {
        &self.map
    }

    /// Simulated time of the last completed hop.
    pub fn time(&self) -> f64 {
        self.hops as f64 * self.config.hop_s
    }

    pub fn hops(&self) -> u64 {
        self.hops
    }

    pub fn subject(&self) -> &SubjectModel {
        &self.subject
    }

    pub fn panel(&self) -> &PanelState {
        &self.panel
    }

    pub fn chair(&self) -> &WheelchairState {
        &self.chair
    }

    pub fn decoder(&self) -> &DecoderState {
        &self.decoder
    }

    pub fn last_analysis(&self) -> Option<&WindowAnalysis> {
        self.last_analysis.as_ref()
    }

    /// The samples the next analysis would use, if a full window is held.
    pub fn current_window(&self) -> Option<[Vec<f64>; 3]> {
        let n = self.config.window_len();
        let [a, b, c] = &self.rings;
        Some([a.latest(n)?, b.latest(n)?, c.latest(n)?])
    }

    pub fn set_gaze(&mut self, target: Option<usize>) -> Result<(), LoopError> {
        if let Some(t) = target {
            if t >= STIMULI {
                return Err(LoopError::Gaze(t));
            }
        }
        self.subject.set_gaze(target)?;
        Ok(())
    }

    pub fn set_threshold(&mut self, index: usize, value: f64) -> Result<(), LoopError> {
        self.config.thresholds.set(index, value)?;
        Ok(())
    }

    /// Re-window the analysis; the ring already holds enough history for any window.
    pub fn set_window(&mut self, window_s: f64) -> Result<(), LoopError> {
        let next = LoopConfig { window_s, ..self.config.clone() };
        next.validate()?;
        self.plan = next.plan()?;
        self.config = next;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.panel = self.panel.set_mode(mode);
    }

    pub fn set_manual(&mut self, direction: ManualDirection) {
        self.manual = direction;
    }

    pub fn manual(&self) -> ManualDirection {
        self.manual
    }

    fn decide(&mut self) -> Result<(bool, PointsVector, Option<usize>, u8), LoopError> {
        let Some(samples) = self.current_window() else {
            self.last_analysis = None;
            return Ok((false, PointsVector([0.0; STIMULI]), None, 0));
        };
        let n = self.config.window_len() as u64;
        let t0 = (self.subject.samples_generated() - n) as f64 / self.config.fs;
        let fs = self.config.fs;
        let mut samples = samples.into_iter();
        let windows: [SignalWindow; 3] = std::array::from_fn(|e| SignalWindow {
            samples: samples.next().expect("three electrodes"),
            fs,
            electrode: Electrode::ALL[e],
            t0,
        });
        let analysis = classifier::analyze(&windows, &self.filter, &self.plan)?;
        let d = classifier::decide(&analysis.points, &self.config.thresholds, &self.map);
        self.last_analysis = Some(analysis);
        Ok((true, d.points, d.winner, d.command_code))
    }

    fn controller(&mut self) -> Vec<u8> {
        let codes = self.decoder.decode_push(&self.link.drain());
        for &code in &codes {
            self.panel = self.panel.apply_command(code);
            if self.panel.mode == Mode::Auto && self.panel.menu == Menu::Wheelchair {
                if let Ok((a, b)) = wheelchair::command_to_channels(code) {
                    self.channels = JoystickChannels::new(a, b, &self.joystick);
                }
            }
        }
        let (a, b) = match (self.panel.mode, self.panel.menu) {
            (Mode::Manual, _) => self.manual.channels(),
            (Mode::Auto, Menu::Wheelchair) => (self.channels.code_a, self.channels.code_b),
            (Mode::Auto, _) => (wheelchair::STABLE_CODE, wheelchair::STABLE_CODE),
        };
        self.channels = JoystickChannels::new(a, b, &self.joystick);
        codes
    }

    /// Advance one hop of simulated time.
    pub fn hop(&mut self) -> Result<HopRecord, LoopError> {
        let next = self.hops + 1;
        let t = next as f64 * self.config.hop_s;
        let target = (t * self.config.fs).round() as u64;
        let n = target.saturating_sub(self.subject.samples_generated()) as usize;
        let gaze = self.subject.gaze();
        let fresh = self.subject.generate_samples(n);
        for (ring, s) in self.rings.iter_mut().zip(&fresh) {
            ring.extend(s);
        }

        let started = Instant::now();
        let (window_full, points, winner, command_code) = self.decide()?;
        let frame = protocol::encode(command_code).expect("decisions map to valid codes");
        self.link.send(&frame);
        let processing = started.elapsed();

        let decoded = self.controller();
        let (v, omega) = wheelchair::channels_to_velocity(&self.channels, &self.joystick);
        self.chair = self.chair.step(v, omega, self.config.hop_s);
        self.hops = next;

        Ok(HopRecord {
            t,
            gaze,
            window_full,
            points: points.0,
            winner,
            command_code,
            decoded,
            channels: self.channels,
            chair: self.chair,
            processing,
        })
    }
}

/// Every hop of a run, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<HopRecord>,
}

impl EventLog {
    pub const HEADER: [&'static str; 12] = [
        "t", "gaze", "points0", "points1", "points2", "points3", "points4", "points5",
        "command_code", "x", "y", "heading",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LoopError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER).map_err(csv_io)?;
        for r in &self.records {
            let mut row = vec![
                format!("{:.3}", r.t),
                r.gaze.map_or_else(|| "none".to_string(), |g| g.to_string()),
            ];
            row.extend(r.points.iter().map(|p| format!("{p:.6}")));
            row.push(r.command_code.to_string());
            row.push(format!("{:.6}", r.chair.x));
            row.push(format!("{:.6}", r.chair.y));
            row.push(format!("{:.6}", r.chair.heading));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn csv_io(e: csv::Error) -> LoopError {
    LoopError::Io(std::io::Error::other(e))
}

/// Run with the subject's current gaze for `until` seconds of simulated time.
pub fn run_loop(config: LoopConfig, subject: SubjectModel, until: f64) -> Result<EventLog, LoopError> {
    let mut lp = ControlLoop::new(config, subject)?;
    let hops = (until / lp.config().hop_s).round() as u64;
    let mut log = EventLog::default();
    for _ in 0..hops {
        log.records.push(lp.hop()?);
    }
    Ok(log)
}
