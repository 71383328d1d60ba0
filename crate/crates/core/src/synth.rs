//! Synthetic occipital EEG with steady-state visual evoked responses.
//!
//! While the subject gazes at a stimulus of frequency `f`, every electrode
//! carries `gain * sum_k amp * decay^(k-1) * sin(2 pi k f t)` on top of a
//! 10 Hz alpha rhythm and white Gaussian noise. Tones start at zero phase on
//! gaze onset and stay phase-continuous across consecutive windows.

use std::f64::consts::TAU;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::STIMULI;
use crate::dsp::{Electrode, SignalWindow};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("gaze target {0} outside 0..6")]
    InvalidGaze(usize),
    #[error("duration {duration} s at {fs} Hz is not a whole number of samples")]
    FractionalDuration { duration: f64, fs: f64 },
    #[error("invalid subject profile: {0}")]
    InvalidProfile(String),
    #[error("reading profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing profile: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Static description of a synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectProfile {
    pub name: String,
    /// Fundamental amplitude (µV).
    pub ssvep_amp: f64,
    /// Amplitude ratio between consecutive harmonics, in (0, 1].
    pub harmonic_decay: f64,
    /// Number of harmonics generated; all below Nyquist when absent.
    pub n_harmonics: Option<usize>,
    /// O1, Oz, O2 gains.
    pub electrode_gain: [f64; 3],
    /// White-noise standard deviation (µV).
    pub noise_sigma: f64,
    /// 10 Hz background amplitude (µV).
    pub alpha_amp: f64,
    pub alpha_freq: f64,
    pub seed: u64,
}

impl Default for SubjectProfile {
    fn default() -> Self {
        Self::good()
    }
}

impl SubjectProfile {
    /// Clear responder; the reference subject for closed-loop checks.
    pub fn good() -> Self {
        Self {
            name: "good".into(),
            ssvep_amp: 2.0,
            harmonic_decay: 0.5,
            n_harmonics: None,
            electrode_gain: [1.0, 0.8, 1.0],
            noise_sigma: 1.0,
            alpha_amp: 0.5,
            alpha_freq: 10.0,
            seed: 1,
        }
    }

    /// Weak responder whose scores hover around the default thresholds.
    pub fn weak() -> Self {
        Self {
            name: "weak".into(),
            ssvep_amp: 1.0,
            noise_sigma: 2.5,
            ..Self::good()
        }
    }

    /// No evoked response at all; engagement always fails.
    pub fn non_responder() -> Self {
        Self {
            name: "none".into(),
            ssvep_amp: 0.0,
            ..Self::good()
        }
    }

    /// Noise-free responder without alpha.
    pub fn clean() -> Self {
        Self {
            name: "clean".into(),
            noise_sigma: 0.0,
            alpha_amp: 0.0,
            ..Self::good()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "good" => Some(Self::good()),
            "weak" => Some(Self::weak()),
            "none" => Some(Self::non_responder()),
            "clean" => Some(Self::clean()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(m.to_string()));
        if !(self.harmonic_decay > 0.0 && self.harmonic_decay <= 1.0) {
            return bad("harmonic_decay must lie in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if self.electrode_gain.iter().any(|g| !(*g > 0.0)) {
            return bad("electrode gains must be positive");
        }
        if !(self.ssvep_amp >= 0.0 && self.alpha_amp >= 0.0) {
            return bad("amplitudes must be non-negative");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let p: SubjectProfile = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// A running synthetic subject. Owns its random stream and sample clock.
#[derive(Debug, Clone)]
pub struct SubjectModel {
    pub profile: SubjectProfile,
    pub flicker_freqs: [f64; STIMULI],
    pub fs: f64,
    gaze: Option<usize>,
    /// Sample index at which the current gaze started.
    onset: u64,
    /// Samples generated so far.
    clock: u64,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl SubjectModel {
    pub fn new(profile: SubjectProfile, flicker_freqs: [f64; STIMULI], fs: f64) -> Result<Self, SynthError> {
        profile.validate()?;
        let noise = Normal::new(0.0, profile.noise_sigma)
            .map_err(|e| SynthError::InvalidProfile(e.to_string()))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            profile,
            flicker_freqs,
            fs,
            gaze: None,
            onset: 0,
            clock: 0,
            noise,
        })
    }

    pub fn gaze(&self) -> Option<usize> {
        self.gaze
    }

    /// Seconds of signal generated so far.
    pub fn elapsed(&self) -> f64 {
        self.clock as f64 / self.fs
    }

    pub fn samples_generated(&self) -> u64 {
        self.clock
    }

    /// Change the gazed stimulus. Re-selecting the current target keeps phase.
    pub fn set_gaze(&mut self, target: Option<usize>) -> Result<(), SynthError> {
        if let Some(t) = target {
            if t >= STIMULI {
                return Err(SynthError::InvalidGaze(t));
            }
        }
        if target != self.gaze {
            self.gaze = target;
            self.onset = self.clock;
        }
        Ok(())
    }

    fn tones(&self) -> Vec<(f64, f64)> {
        let Some(g) = self.gaze else { return Vec::new() };
        let f = self.flicker_freqs[g];
        if self.profile.ssvep_amp == 0.0 || f <= 0.0 {
            return Vec::new();
        }
        let below_nyquist = ((self.fs / 2.0) / f).ceil() as usize - 1;
        let n = self.profile.n_harmonics.unwrap_or(below_nyquist).min(below_nyquist);
        (1..=n)
            .map(|k| {
                let amp = self.profile.ssvep_amp * self.profile.harmonic_decay.powi(k as i32 - 1);
                (k as f64 * f, amp)
            })
            .collect()
    }

    /// Generate the next `n` samples on each of O1, Oz, O2.
    pub fn generate_samples(&mut self, n: usize) -> [Vec<f64>; 3] {
        let tones = self.tones();
        let gains = self.profile.electrode_gain;
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
        for _ in 0..n {
            let since_onset = (self.clock - self.onset) as f64;
            let evoked: f64 = tones
                .iter()
                .map(|&(freq, amp)| amp * (TAU * (freq * since_onset / self.fs).fract()).sin())
                .sum();
            let alpha = self.profile.alpha_amp
                * (TAU * (self.profile.alpha_freq * self.clock as f64 / self.fs).fract()).sin();
            for (e, samples) in out.iter_mut().enumerate() {
                let noise = self.noise.sample(&mut self.rng);
                samples.push(gains[e] * evoked + alpha + noise);
            }
            self.clock += 1;
        }
        out
    }

    /// Next `duration` seconds as three electrode windows.
    pub fn generate_window(&mut self, duration: f64) -> Result<[SignalWindow; 3], SynthError> {
        let n = duration * self.fs;
        if (n - n.round()).abs() > 1e-9 || n < 0.0 {
            return Err(SynthError::FractionalDuration { duration, fs: self.fs });
        }
        let t0 = self.elapsed();
        let fs = self.fs;
        let [o1, oz, o2] = self.generate_samples(n.round() as usize);
        let mk = |s: Vec<f64>, e| SignalWindow { samples: s, fs, electrode: e, t0 };
        Ok([mk(o1, Electrode::O1), mk(oz, Electrode::Oz), mk(o2, Electrode::O2)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::magnitude_spectrum;

    const FREQS: [f64; 6] = [7.0, 11.0, 9.0, 8.0, 20.0, 12.0];

    fn clean(decay: f64, amp: f64) -> SubjectModel {
        let p = SubjectProfile {
            ssvep_amp: amp,
            harmonic_decay: decay,
            noise_sigma: 0.0,
            alpha_amp: 0.0,
            electrode_gain: [1.0, 0.5, 1.0],
            ..SubjectProfile::good()
        };
        SubjectModel::new(p, FREQS, 256.0).unwrap()
    }

    #[test]
    fn harmonic_amplitudes_follow_decay() {
        let mut m = clean(0.5, 2.0);
        m.set_gaze(Some(3)).unwrap();
        let w = m.generate_window(2.0).unwrap();
        let s = magnitude_spectrum(&w[0]).unwrap();
        for (k, expected) in [(16, 2.0), (32, 1.0), (48, 0.5), (64, 0.25)] {
            assert!((s.mags[k] - expected).abs() < 1e-9, "bin {k}: {}", s.mags[k]);
        }
        let oz = magnitude_spectrum(&w[1]).unwrap();
        assert!((oz.mags[16] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_output() {
        let mk = || {
            let mut m = SubjectModel::new(SubjectProfile::good(), FREQS, 256.0).unwrap();
            m.set_gaze(Some(1)).unwrap();
            m.generate_window(2.0).unwrap()
        };
        assert_eq!(mk(), mk());
    }

    #[test]
    fn gaze_changes() {
        let mut m = clean(0.5, 1.0);
        let w = m.generate_window(1.0).unwrap();
        assert!(w[0].samples.iter().all(|&v| v == 0.0));
        m.set_gaze(Some(3)).unwrap();
        let w = m.generate_window(2.0).unwrap();
        let s = magnitude_spectrum(&w[0]).unwrap();
        assert!((s.mags[16] - 1.0).abs() < 1e-9);
        m.set_gaze(None).unwrap();
        let w = m.generate_window(1.0).unwrap();
        assert!(w[0].samples.iter().all(|&v| v == 0.0));
        assert!(m.set_gaze(Some(6)).is_err());
    }

    #[test]
    fn reselecting_target_keeps_phase() {
        let mut a = clean(0.5, 1.0);
        let mut b = clean(0.5, 1.0);
        a.set_gaze(Some(2)).unwrap();
        b.set_gaze(Some(2)).unwrap();
        let mut wa = a.generate_samples(300)[0].clone();
        wa.extend(a.generate_samples(212)[0].clone());
        let mut wb = b.generate_samples(300)[0].clone();
        b.set_gaze(Some(2)).unwrap();
        wb.extend(b.generate_samples(212)[0].clone());
        assert_eq!(wa, wb);
    }

    #[test]
    fn fractional_duration_is_rejected() {
        let mut m = clean(0.5, 1.0);
        assert!(matches!(m.generate_window(0.1), Err(SynthError::FractionalDuration { .. })));
    }

    #[test]
    fn profile_from_toml() {
        let p = SubjectProfile::from_toml_str(
            "name = \"s5\"\nssvep_amp = 1.5\nharmonic_decay = 0.6\nelectrode_gain = [1.0, 0.7, 1.0]\nnoise_sigma = 2.0\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(p.ssvep_amp, 1.5);
        assert_eq!(p.electrode_gain[1], 0.7);
        assert_eq!(p.alpha_freq, 10.0);
        assert!(SubjectProfile::from_toml_str("harmonic_decay = 0.0").is_err());
        assert!(SubjectProfile::from_toml_str("bogus = 1").is_err());
    }
}
