//! Butterworth bandpass design, forward-backward (zero-phase) IIR filtering
//! and the single-sided magnitude spectrum used for feature extraction.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid cutoff: need 0 < f_low ({f_low}) < f_high ({f_high}) < fs/2 ({nyquist})")]
    InvalidCutoff { f_low: f64, f_high: f64, nyquist: f64 },
    #[error("design order must be at least 1")]
    InvalidOrder,
    #[error("unstable design: pole magnitude {0} >= 1")]
    UnstableDesign(f64),
    #[error("window too short for zero-phase filtering: {len} samples, need more than {min}")]
    WindowTooShort { len: usize, min: usize },
    #[error("empty window")]
    EmptyWindow,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Occipital electrode sites used by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Electrode {
    O1,
    Oz,
    O2,
}

impl Electrode {
    pub const ALL: [Electrode; 3] = [Electrode::O1, Electrode::Oz, Electrode::O2];

    pub fn index(self) -> usize {
        match self {
            Electrode::O1 => 0,
            Electrode::Oz => 1,
            Electrode::O2 => 2,
        }
    }
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Electrode::O1 => "O1",
            Electrode::Oz => "Oz",
            Electrode::O2 => "O2",
        };
        f.write_str(s)
    }
}

/// A block of samples (µV) from one electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub electrode: Electrode,
    /// Start time of the first sample (s).
    pub t0: f64,
}

impl SignalWindow {
    pub fn new(samples: Vec<f64>, fs: f64, electrode: Electrode, t0: f64) -> Result<Self, DspError> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { samples, fs, electrode, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy with the window mean removed.
    pub fn demeaned(&self) -> SignalWindow {
        let mean = if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        };
        SignalWindow {
            samples: self.samples.iter().map(|v| v - mean).collect(),
            ..self.clone()
        }
    }
}

/// Transfer function coefficients in descending powers of z, `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    /// Effective order (twice the design order for a bandpass).
    pub order: usize,
    pub f_low: f64,
    pub f_high: f64,
    pub fs: f64,
    poles: Vec<Complex64>,
}

impl FilterCoefficients {
    /// Evaluate H(z) on the unit circle at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        // z^-1 = e^{-jw}
        let zinv = Complex64::from_polar(1.0, -w);
        let eval = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * zinv + ck)
        };
        eval(&self.b) / eval(&self.a)
    }

    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        self.response_at(freq_hz).norm()
    }

    /// Poles of the design (z-plane), as computed by the bilinear mapping.
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c
}

/// Digital Butterworth bandpass of effective order `2 * design_order`.
///
/// Analog prototype poles are moved to the band with the lowpass-to-bandpass
/// substitution at pre-warped edges, then mapped through the bilinear
/// transform. Zeros land at z = 1 and z = -1 (`design_order` of each).
pub fn design_bandpass(
    design_order: usize,
    f_low: f64,
    f_high: f64,
    fs: f64,
) -> Result<FilterCoefficients, DspError> {
    if design_order == 0 {
        return Err(DspError::InvalidOrder);
    }
    let nyquist = fs / 2.0;
    if !(f_low > 0.0 && f_low < f_high && f_high < nyquist && fs.is_finite()) {
        return Err(DspError::InvalidCutoff { f_low, f_high, nyquist });
    }
    let n = design_order;
    let fs2 = 2.0 * fs;
    let u1 = fs2 * (PI * f_low / fs).tan();
    let u2 = fs2 * (PI * f_high / fs).tan();
    let bw = u2 - u1;
    let wo2 = u1 * u2;

    let mut analog_poles = Vec::with_capacity(2 * n);
    for k in 1..=n {
        let theta = PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * (bw / 2.0);
        let disc = (half * half - wo2).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }

    let poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|&s| (fs2 + s) / (fs2 - s))
        .collect();
    let max_mag = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(max_mag < 1.0) {
        return Err(DspError::UnstableDesign(max_mag));
    }

    let mut zeros = vec![Complex64::new(1.0, 0.0); n];
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), n));

    // Prototype gain is 1; the bandpass substitution scales it by bw^n.
    let denom: Complex64 = analog_poles.iter().map(|&p| fs2 - p).product();
    let gain = (Complex64::new((bw * fs2).powi(n as i32), 0.0) / denom).re;

    let b: Vec<f64> = poly_from_roots(&zeros).iter().map(|c| c.re * gain).collect();
    let a: Vec<f64> = poly_from_roots(&poles).iter().map(|c| c.re).collect();

    Ok(FilterCoefficients {
        b,
        a,
        order: 2 * n,
        f_low,
        f_high,
        fs,
        poles,
    })
}

/// Steady-state initial conditions of the transposed direct form for a unit step.
fn step_initial_state(b: &[f64], a: &[f64]) -> Vec<f64> {
    let m = a.len() - 1;
    if m == 0 {
        return Vec::new();
    }
    // (I - A^T) zi = b[1..] - a[1..] * b[0], A the companion matrix of a.
    let mut lhs = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        lhs[(i, 0)] += a[i + 1];
        if i + 1 < m {
            lhs[(i, i + 1)] -= 1.0;
        }
    }
    let rhs = DVector::from_iterator(m, (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]));
    lhs.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; m])
}

/// Transposed direct-form II difference equation with initial state `zi`.
fn lfilter(b: &[f64], a: &[f64], x: &[f64], zi: &[f64]) -> Vec<f64> {
    let m = a.len() - 1;
    let mut z = zi.to_vec();
    let mut y = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = b[0] * xn + z.first().copied().unwrap_or(0.0);
        for i in 0..m {
            let next = if i + 1 < m { z[i + 1] } else { 0.0 };
            z[i] = b[i + 1] * xn + next - a[i + 1] * yn;
        }
        y.push(yn);
    }
    y
}

/// Forward-backward filtering. The window is padded at both ends by
/// odd-symmetric reflection of `3 * order` samples, and each pass starts from
/// the steady state matching its first sample.
pub fn zero_phase_filter(
    coeffs: &FilterCoefficients,
    w: &SignalWindow,
) -> Result<SignalWindow, DspError> {
    let pad = 3 * coeffs.order;
    let x = &w.samples;
    let len = x.len();
    if len <= pad {
        return Err(DspError::WindowTooShort { len, min: pad });
    }

    let first = x[0];
    let last = x[len - 1];
    let mut ext = Vec::with_capacity(len + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[len - 1 - i]));

    let zi = step_initial_state(&coeffs.b, &coeffs.a);
    let scaled = |s: f64| zi.iter().map(|z| z * s).collect::<Vec<_>>();

    let mut y = lfilter(&coeffs.b, &coeffs.a, &ext, &scaled(ext[0]));
    y.reverse();
    let mut y = lfilter(&coeffs.b, &coeffs.a, &y, &scaled(y[0]));
    y.reverse();

    Ok(SignalWindow {
        samples: y[pad..pad + len].to_vec(),
        ..w.clone()
    })
}

/// Single-sided magnitude spectrum of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    pub freqs: Vec<f64>,
    pub mags: Vec<f64>,
    pub nfft: usize,
    pub fs: f64,
}

impl SpectrumFrame {
    pub fn resolution(&self) -> f64 {
        self.fs / self.nfft as f64
    }

    /// Bin index nearest to `freq_hz`.
    pub fn bin_of(&self, freq_hz: f64) -> usize {
        (freq_hz * self.nfft as f64 / self.fs).round() as usize
    }
}

/// Zero-pads to the next power of two, scales the transform by `1/L` and
/// doubles the first `nfft/2 + 1` bins, DC and Nyquist included.
pub fn magnitude_spectrum(w: &SignalWindow) -> Result<SpectrumFrame, DspError> {
    let len = w.samples.len();
    if len == 0 {
        return Err(DspError::EmptyWindow);
    }
    let nfft = len.next_power_of_two();
    let mut buf: Vec<Complex64> = w
        .samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(nfft).process(&mut buf);

    let half = nfft / 2 + 1;
    let scale = 2.0 / len as f64;
    let mags = buf[..half].iter().map(|c| c.norm() * scale).collect();
    let freqs = (0..half).map(|k| k as f64 * w.fs / nfft as f64).collect();
    Ok(SpectrumFrame { freqs, mags, nfft, fs: w.fs })
}
