//! Per-subject threshold calibration and online fine tuning.
//!
//! A calibration recording holds a rest period followed by a focus period in
//! which the subject gazes at one stimulus. The focus period is scanned with
//! overlapping analysis windows; the level is a fixed fraction of the median
//! score the target earns there.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, ThresholdVector, STIMULI};
use crate::dsp::{self, Electrode, SignalWindow};

pub const FINE_TUNE_FACTOR: f64 = 0.9;
pub const MIN_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("recording has {have} s, rest + focus needs {need} s")]
    NoFocusSegment { have: f64, need: f64 },
    #[error("target {0} Hz is not one of the stimulus frequencies")]
    UnknownTarget(u32),
    #[error("recording: {0}")]
    Format(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thresholds file: {0}")]
    Toml(String),
}

/// Three-electrode recording (µV).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub fs: f64,
    /// O1, Oz, O2.
    pub channels: [Vec<f64>; 3],
}

impl Recording {
    pub fn duration(&self) -> f64 {
        self.channels[0].len() as f64 / self.fs
    }

    pub fn scaled(&self, c: f64) -> Recording {
        Recording {
            fs: self.fs,
            channels: self.channels.clone().map(|ch| ch.into_iter().map(|v| v * c).collect()),
        }
    }

    /// Parse `# fs=<Hz>` followed by a `t,O1,Oz,O2` table.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CalibrationError> {
        let mut reader = BufReader::new(reader);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let fs: f64 = first
            .trim()
            .strip_prefix('#')
            .and_then(|s| s.trim().strip_prefix("fs="))
            .ok_or_else(|| CalibrationError::Format("first line must be `# fs=<Hz>`".into()))?
            .trim()
            .parse()
            .map_err(|e| CalibrationError::Format(format!("bad sample rate: {e}")))?;
        if !(fs > 0.0) {
            return Err(CalibrationError::Format("sample rate must be positive".into()));
        }

        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = csv.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CalibrationError::Format(format!("missing column {name}")))
        };
        let idx = [col("O1")?, col("Oz")?, col("O2")?];
        let mut channels: [Vec<f64>; 3] = Default::default();
        for (row, rec) in csv.records().enumerate() {
            let rec = rec?;
            for (ch, &i) in channels.iter_mut().zip(&idx) {
                let v: f64 = rec
                    .get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|e| CalibrationError::Format(format!("row {}: {e}", row + 1)))?;
                ch.push(v);
            }
        }
        Ok(Recording { fs, channels })
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CalibrationError> {
        writeln!(out, "# fs={}", self.fs)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "O1", "Oz", "O2"])?;
        for i in 0..self.channels[0].len() {
            w.write_record([
                (i as f64 / self.fs).to_string(),
                self.channels[0][i].to_string(),
                self.channels[1][i].to_string(),
                self.channels[2][i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSession {
    pub recording: Recording,
    pub rest_s: f64,
    pub focus_s: f64,
    pub target_hz: u32,
    pub window_s: f64,
    pub band: (f64, f64),
    pub hop_s: f64,
    /// Fraction of the median focus score used as the level.
    pub factor: f64,
}

impl CalibrationSession {
    pub fn new(recording: Recording, target_hz: u32) -> Self {
        Self {
            recording,
            rest_s: 10.0,
            focus_s: 20.0,
            target_hz,
            window_s: 4.0,
            band: (3.0, 60.0),
            hop_s: 0.1,
            factor: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibrated {
    Level(f64),
    /// The focus period scored no better than chance: the level would fall
    /// below the floor, which includes the all-zero case.
    Uncalibratable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub level: Calibrated,
    pub median_points: f64,
    /// Target score for each analysis window.
    pub window_points: Vec<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn calibrate_threshold(
    session: &CalibrationSession,
    plan_freqs: [u32; STIMULI],
) -> Result<CalibrationResult, CalibrationError> {
    let target = plan_freqs
        .iter()
        .position(|&f| f == session.target_hz)
        .ok_or(CalibrationError::UnknownTarget(session.target_hz))?;
    let rec = &session.recording;
    let fs = rec.fs;
    let need = session.rest_s + session.focus_s;
    if rec.duration() + 1e-9 < need || session.focus_s < session.window_s {
        return Err(CalibrationError::NoFocusSegment { have: rec.duration(), need });
    }

    let plan = classifier::build_plan(plan_freqs, session.window_s, fs)?;
    let filter = dsp::design_bandpass(3, session.band.0, session.band.1, fs)
        .map_err(ClassifierError::from)?;
    let win = (session.window_s * fs).round() as usize;
    let focus_end = (need * fs).round() as usize;

    let mut window_points = Vec::new();
    for k in 0.. {
        let start = ((session.rest_s + k as f64 * session.hop_s) * fs).round() as usize;
        if start + win > focus_end {
            break;
        }
        let windows: [SignalWindow; 3] = std::array::from_fn(|e| SignalWindow {
            samples: rec.channels[e][start..start + win].to_vec(),
            fs,
            electrode: Electrode::ALL[e],
            t0: start as f64 / fs,
        });
        let analysis = classifier::analyze(&windows, &filter, &plan)?;
        window_points.push(analysis.points.0[target]);
    }

    let median_points = median(&window_points);
    let raw = session.factor * median_points;
    let level = if raw < MIN_THRESHOLD {
        Calibrated::Uncalibratable
    } else {
        Calibrated::Level(raw.min(1.0))
    };
    Ok(CalibrationResult { level, median_points, window_points })
}

/// Lower the level by 10% when movement was not continuous; never below 0.05.
pub fn fine_tune(threshold: f64, continuous: bool) -> f64 {
    if continuous {
        threshold
    } else {
        (threshold * FINE_TUNE_FACTOR).max(MIN_THRESHOLD)
    }
}

/// Six labeled decision levels as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdFile {
    pub forward: f64,
    pub reverse: f64,
    pub rot_ccw: f64,
    pub rot_cw: f64,
    pub led_on: f64,
    pub led_off: f64,
}

impl ThresholdFile {
    pub fn from_levels(l: &[f64; STIMULI]) -> Self {
        Self { forward: l[0], reverse: l[1], rot_ccw: l[2], rot_cw: l[3], led_on: l[4], led_off: l[5] }
    }

    pub fn levels(&self) -> [f64; STIMULI] {
        [self.forward, self.reverse, self.rot_ccw, self.rot_cw, self.led_on, self.led_off]
    }

    pub fn to_thresholds(&self) -> Result<ThresholdVector, ClassifierError> {
        ThresholdVector::new(self.levels())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain table serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, CalibrationError> {
        toml::from_str(s).map_err(|e| CalibrationError::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
