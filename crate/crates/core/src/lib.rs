//! Core of a simulated SSVEP brain-computer-interface wheelchair controller.
//!
//! - [`dsp`]: bandpass design, zero-phase filtering, magnitude spectrum
//! - [`classifier`]: harmonic-points scoring and command decision
//! - [`synth`]: synthetic three-electrode subject
//! - [`protocol`]: five-byte command frames
//! - [`stimulus`]: flicker scheduler and DAC word emulation
//! - [`panel`]: stimulus panel menus and LCD text
//! - [`wheelchair`]: joystick voltages and chair kinematics
//! - [`calibration`]: threshold calibration and fine tuning

pub mod calibration;
pub mod classifier;
pub mod dsp;
pub mod panel;
pub mod protocol;
pub mod stimulus;
pub mod synth;
pub mod wheelchair;
