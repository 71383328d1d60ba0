//! Harmonic-points classification.
//!
//! Each stimulus frequency `f` partitions the spectrum into intervals
//! `[f(j - 1/2), f(j + 1/2)]`. The peak bin of every interval whose lower
//! border is under the frequency cap is located on each electrode; a peak
//! that lands on a harmonic of `f` scores a point. The score is normalized by
//! `3 * floor(cap / f)`, the number of harmonics below the cap across the
//! three electrodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError, FilterCoefficients, SignalWindow, SpectrumFrame};

/// Number of stimuli on the panel.
pub const STIMULI: usize = 6;
/// Search-space borders per stimulus.
pub const BORDERS: usize = 10;
/// Intervals scanned per stimulus.
pub const INTERVALS: usize = BORDERS - 1;

pub const DEFAULT_FREQ_CAP: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("duplicate stimulus frequency {0} Hz")]
    DuplicateFrequency(u32),
    #[error("stimulus frequency {freq} Hz outside [5, {max}] Hz")]
    FrequencyOutOfRange { freq: u32, max: f64 },
    #[error("stimulus frequency {freq} Hz does not fall on a spectrum bin (resolution {resolution} Hz)")]
    BinMisaligned { freq: u32, resolution: f64 },
    #[error("unsupported window length {0} s (expected 1, 2 or 4)")]
    UnsupportedWindow(f64),
    #[error("spectrum (nfft {spec_nfft}, fs {spec_fs}) does not match plan (nfft {plan_nfft}, fs {plan_fs})")]
    PlanMismatch {
        spec_nfft: usize,
        spec_fs: f64,
        plan_nfft: usize,
        plan_fs: f64,
    },
    #[error("threshold {value} at index {index} outside (0, 1]")]
    InvalidThreshold { index: usize, value: f64 },
    #[error("command map must assign codes 1..=6, got {0:?}")]
    InvalidCommandMap([u8; STIMULI]),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// How peaks above the frequency cap are treated when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Only harmonics at or below the cap score; points stay within [0, 1].
    #[default]
    Strict,
    /// Any of the ten harmonics scores, including those reached through an
    /// interval whose lower border sits exactly at or just under the cap.
    Paper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSearchPlan {
    pub flicker_freqs: [u32; STIMULI],
    /// Interval borders `f * (j + 1/2)` for 0-based `j` (Hz).
    pub search_space: [[f64; BORDERS]; STIMULI],
    /// Harmonic targets `f * (j + 1)` (Hz).
    pub harmonics: [[f64; BORDERS]; STIMULI],
    /// Border positions as 0-based spectrum bins.
    pub search_points: [[usize; BORDERS]; STIMULI],
    pub harmonic_bins: [[usize; BORDERS]; STIMULI],
    pub window_s: f64,
    pub fs: f64,
    pub nfft: usize,
    pub freq_cap: f64,
    pub mode: MatchMode,
}

/// Build the search plan for six stimulus frequencies.
pub fn build_plan(
    flicker_freqs: [u32; STIMULI],
    window_s: f64,
    fs: f64,
) -> Result<HarmonicSearchPlan, ClassifierError> {
    if ![1.0, 2.0, 4.0].contains(&window_s) {
        return Err(ClassifierError::UnsupportedWindow(window_s));
    }
    for (i, &f) in flicker_freqs.iter().enumerate() {
        if flicker_freqs[..i].contains(&f) {
            return Err(ClassifierError::DuplicateFrequency(f));
        }
        if f < 5 || f as f64 > fs / 2.0 {
            return Err(ClassifierError::FrequencyOutOfRange { freq: f, max: fs / 2.0 });
        }
    }
    let len = (fs * window_s).round() as usize;
    let nfft = len.next_power_of_two();
    let bins_per_hz = nfft as f64 / fs;
    for &f in &flicker_freqs {
        let pos = f as f64 * bins_per_hz;
        if (pos - pos.round()).abs() > 1e-9 {
            return Err(ClassifierError::BinMisaligned { freq: f, resolution: 1.0 / bins_per_hz });
        }
    }

    let last_bin = nfft / 2;
    let mut search_space = [[0.0; BORDERS]; STIMULI];
    let mut harmonics = [[0.0; BORDERS]; STIMULI];
    let mut search_points = [[0usize; BORDERS]; STIMULI];
    let mut harmonic_bins = [[0usize; BORDERS]; STIMULI];
    for (i, &f) in flicker_freqs.iter().enumerate() {
        let f = f as f64;
        for j in 0..BORDERS {
            let border = f * (j as f64 + 0.5);
            let target = f * (j + 1) as f64;
            search_space[i][j] = border;
            harmonics[i][j] = target;
            // f64::round is half-away-from-zero, like the reference `round`.
            search_points[i][j] = ((border * bins_per_hz).round() as usize).min(last_bin);
            harmonic_bins[i][j] = (target * bins_per_hz).round() as usize;
        }
    }

    Ok(HarmonicSearchPlan {
        flicker_freqs,
        search_space,
        harmonics,
        search_points,
        harmonic_bins,
        window_s,
        fs,
        nfft,
        freq_cap: DEFAULT_FREQ_CAP,
        mode: MatchMode::Strict,
    })
}

impl HarmonicSearchPlan {
    pub fn with_mode(mut self, mode: MatchMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_freq_cap(mut self, cap: f64) -> Self {
        self.freq_cap = cap;
        self
    }

    /// Count of harmonics below the cap for stimulus `i` (per electrode).
    pub fn harmonics_below_cap(&self, i: usize) -> u32 {
        (self.freq_cap / self.flicker_freqs[i] as f64).floor() as u32
    }

    /// Whether interval `j` of stimulus `i` is scanned.
    pub fn interval_active(&self, i: usize, j: usize) -> bool {
        self.search_space[i][j] <= self.freq_cap
    }

    fn bin_to_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.fs / self.nfft as f64
    }

    fn is_harmonic(&self, i: usize, bin: usize) -> bool {
        (0..BORDERS).any(|k| {
            self.harmonic_bins[i][k] == bin
                && (self.mode == MatchMode::Paper || self.harmonics[i][k] <= self.freq_cap)
        })
    }
}

/// Per-interval peak locations for one electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakMatrix {
    /// Peak bin per interval, `None` where the interval was skipped.
    pub peak_bins: [[Option<usize>; INTERVALS]; STIMULI],
    /// Peak frequency (Hz); 0.0 marks a skipped interval.
    pub peak_freqs: [[f64; INTERVALS]; STIMULI],
}

/// Locate the largest magnitude inside every active interval. Borders are
/// inclusive on both sides and ties resolve to the lowest bin.
pub fn peak_frequencies(
    spectrum: &SpectrumFrame,
    plan: &HarmonicSearchPlan,
) -> Result<PeakMatrix, ClassifierError> {
    if spectrum.nfft != plan.nfft || spectrum.fs != plan.fs {
        return Err(ClassifierError::PlanMismatch {
            spec_nfft: spectrum.nfft,
            spec_fs: spectrum.fs,
            plan_nfft: plan.nfft,
            plan_fs: plan.fs,
        });
    }
    let mut peak_bins = [[None; INTERVALS]; STIMULI];
    let mut peak_freqs = [[0.0; INTERVALS]; STIMULI];
    for i in 0..STIMULI {
        for j in 0..INTERVALS {
            if !plan.interval_active(i, j) {
                continue;
            }
            let lo = plan.search_points[i][j];
            let hi = plan.search_points[i][j + 1];
            let mut best = lo;
            for k in lo + 1..=hi {
                if spectrum.mags[k] > spectrum.mags[best] {
                    best = k;
                }
            }
            peak_bins[i][j] = Some(best);
            peak_freqs[i][j] = plan.bin_to_hz(best);
        }
    }
    Ok(PeakMatrix { peak_bins, peak_freqs })
}

/// Normalized harmonic scores, one per stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointsVector(pub [f64; STIMULI]);

impl PointsVector {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..STIMULI {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Raw match counts per stimulus across the three electrodes.
pub fn harmonic_counts(peaks: [&PeakMatrix; 3], plan: &HarmonicSearchPlan) -> [u32; STIMULI] {
    let mut counts = [0u32; STIMULI];
    for (i, count) in counts.iter_mut().enumerate() {
        for electrode in peaks {
            *count += electrode.peak_bins[i]
                .iter()
                .flatten()
                .filter(|&&bin| plan.is_harmonic(i, bin))
                .count() as u32;
        }
    }
    counts
}

pub fn harmonic_points(
    peaks_o1: &PeakMatrix,
    peaks_oz: &PeakMatrix,
    peaks_o2: &PeakMatrix,
    plan: &HarmonicSearchPlan,
) -> PointsVector {
    let counts = harmonic_counts([peaks_o1, peaks_oz, peaks_o2], plan);
    let mut points = [0.0; STIMULI];
    for i in 0..STIMULI {
        let norm = 3 * plan.harmonics_below_cap(i);
        points[i] = if norm == 0 { 0.0 } else { counts[i] as f64 / norm as f64 };
    }
    PointsVector(points)
}

/// Per-stimulus decision levels, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector([f64; STIMULI]);

impl ThresholdVector {
    pub const DEFAULT: [f64; STIMULI] = [0.26, 0.26, 0.25, 0.22, 1.0, 1.0];

    pub fn new(levels: [f64; STIMULI]) -> Result<Self, ClassifierError> {
        for (index, &value) in levels.iter().enumerate() {
            check_threshold(index, value)?;
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[f64; STIMULI] {
        &self.0
    }

    pub fn set(&mut self, index: usize, value: f64) -> Result<(), ClassifierError> {
        if index >= STIMULI {
            return Err(ClassifierError::InvalidThreshold { index, value });
        }
        check_threshold(index, value)?;
        self.0[index] = value;
        Ok(())
    }
}

fn check_threshold(index: usize, value: f64) -> Result<(), ClassifierError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(ClassifierError::InvalidThreshold { index, value })
    }
}

impl Default for ThresholdVector {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// Stimulus index to command code assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandMap([u8; STIMULI]);

impl CommandMap {
    pub fn new(codes: [u8; STIMULI]) -> Result<Self, ClassifierError> {
        let mut sorted = codes;
        sorted.sort_unstable();
        if sorted != [1, 2, 3, 4, 5, 6] {
            return Err(ClassifierError::InvalidCommandMap(codes));
        }
        Ok(Self(codes))
    }

    pub fn code(&self, index: usize) -> u8 {
        self.0[index]
    }
}

impl Default for CommandMap {
    fn default() -> Self {
        Self([1, 2, 3, 4, 5, 6])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandDecision {
    pub winner: Option<usize>,
    pub points: PointsVector,
    /// 0 is Stop.
    pub command_code: u8,
}

/// Strongest stimulus wins if it strictly exceeds its own threshold.
pub fn decide(points: &PointsVector, thresholds: &ThresholdVector, map: &CommandMap) -> CommandDecision {
    let best = points.argmax();
    if points.0[best] > thresholds.0[best] {
        CommandDecision { winner: Some(best), points: *points, command_code: map.code(best) }
    } else {
        CommandDecision { winner: None, points: *points, command_code: 0 }
    }
}

/// Everything computed for one set of electrode windows.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub spectra: [SpectrumFrame; 3],
    pub peaks: [PeakMatrix; 3],
    pub points: PointsVector,
}

/// Demean, zero-phase filter, transform and score the O1/Oz/O2 windows.
pub fn analyze(
    windows: &[SignalWindow; 3],
    filter: &FilterCoefficients,
    plan: &HarmonicSearchPlan,
) -> Result<WindowAnalysis, ClassifierError> {
    let mut spectra = Vec::with_capacity(3);
    let mut peaks = Vec::with_capacity(3);
    for w in windows {
        let filtered = dsp::zero_phase_filter(filter, &w.demeaned())?;
        let spectrum = dsp::magnitude_spectrum(&filtered)?;
        peaks.push(peak_frequencies(&spectrum, plan)?);
        spectra.push(spectrum);
    }
    let points = harmonic_points(&peaks[0], &peaks[1], &peaks[2], plan);
    let spectra: [SpectrumFrame; 3] = spectra.try_into().expect("three spectra");
    let peaks: [PeakMatrix; 3] = peaks.try_into().expect("three peak matrices");
    Ok(WindowAnalysis { spectra, peaks, points })
}
