use serde::{Deserialize, Serialize};
use thiserror::Error;

use ssvep_core::classifier::{self, ClassifierError, MatchMode, ThresholdVector, STIMULI};
use ssvep_core::dsp::{self, DspError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("hop {hop_s} s must be positive and no longer than the window {window_s} s")]
    Hop { hop_s: f64, window_s: f64 },
    #[error("window {window_s} s at {fs} Hz is not a whole number of samples")]
    Window { window_s: f64, fs: f64 },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Closed-loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub fs: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub band: (f64, f64),
    /// Stimulus frequencies in command order: forward, reverse, left, right, LED on, LED off.
    pub flicker_freqs: [u32; STIMULI],
    pub thresholds: ThresholdVector,
    pub seed: u64,
    pub compat: MatchMode,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            fs: 256.0,
            window_s: 2.0,
            hop_s: 0.1,
            band: (3.0, 50.0),
            flicker_freqs: [7, 11, 9, 8, 20, 12],
            thresholds: ThresholdVector::default(),
            seed: 1,
            compat: MatchMode::Strict,
        }
    }
}

/// Capacity of the sample ring, enough for the longest selectable window.
pub const MAX_WINDOW_S: f64 = 4.0;

impl LoopConfig {
    pub fn window_len(&self) -> usize {
        (self.window_s * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.hop_s > 0.0 && self.hop_s <= self.window_s) {
            return Err(ConfigError::Hop { hop_s: self.hop_s, window_s: self.window_s });
        }
        let n = self.window_s * self.fs;
        if (n - n.round()).abs() > 1e-9 {
            return Err(ConfigError::Window { window_s: self.window_s, fs: self.fs });
        }
        ThresholdVector::new(*self.thresholds.levels())?;
        self.plan()?;
        self.filter()?;
        Ok(())
    }

    pub fn plan(&self) -> Result<classifier::HarmonicSearchPlan, ClassifierError> {
        Ok(classifier::build_plan(self.flicker_freqs, self.window_s, self.fs)?.with_mode(self.compat))
    }

    pub fn filter(&self) -> Result<dsp::FilterCoefficients, DspError> {
        dsp::design_bandpass(3, self.band.0, self.band.1, self.fs)
    }

    pub fn flicker_hz(&self) -> [f64; STIMULI] {
        self.flicker_freqs.map(|f| f as f64)
    }
}
