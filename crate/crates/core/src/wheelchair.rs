//! Joystick emulation and planar kinematics of the simulated chair.
//!
//! Channel A drives forward/reverse and channel B left/right. Each channel is
//! an 8-bit DAC code scaled to the joystick terminal voltage; motion is a
//! memoryless function of the terminal deviation from its neutral voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STABLE_CODE: u8 = 128;
pub const INCREASE_CODE: u8 = 175;
pub const DECREASE_CODE: u8 = 80;
pub const RIGHT_CODE: u8 = 185;
pub const LEFT_CODE: u8 = 70;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WheelchairError {
    #[error("no joystick mapping for command code {0}")]
    InvalidCode(u8),
}

/// DAC codes for a drive command: 0 stop, 1 forward, 2 reverse, 3 left, 4 right.
pub fn command_to_channels(code: u8) -> Result<(u8, u8), WheelchairError> {
    match code {
        0 => Ok((STABLE_CODE, STABLE_CODE)),
        1 => Ok((INCREASE_CODE, STABLE_CODE)),
        2 => Ok((DECREASE_CODE, STABLE_CODE)),
        3 => Ok((STABLE_CODE, LEFT_CODE)),
        4 => Ok((STABLE_CODE, RIGHT_CODE)),
        other => Err(WheelchairError::InvalidCode(other)),
    }
}

/// Push-button direction in manual mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManualDirection {
    Forward,
    Backward,
    Left,
    Right,
    #[default]
    None,
}

impl ManualDirection {
    /// Same channel pairs as the automatic commands.
    pub fn channels(self) -> (u8, u8) {
        let code = match self {
            ManualDirection::None => 0,
            ManualDirection::Forward => 1,
            ManualDirection::Backward => 2,
            ManualDirection::Left => 3,
            ManualDirection::Right => 4,
        };
        command_to_channels(code).expect("drive codes are mapped")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JoystickConfig {
    /// Full-scale DAC voltage (V).
    pub v_ref: f64,
    /// Terminal voltages at which the chair is stationary (V).
    pub neutral_a: f64,
    pub neutral_b: f64,
    /// Deviations within ± this (V) are treated as zero.
    pub deadband: f64,
    /// Speed gain (m/s per V).
    pub k_v: f64,
    /// Yaw gain (rad/s per V).
    pub k_w: f64,
    /// Flip the sign convention of channel B (default: lower voltage turns left).
    pub flip_turn: bool,
}

impl Default for JoystickConfig {
    fn default() -> Self {
        Self {
            v_ref: 5.0,
            neutral_a: 2.55,
            neutral_b: 2.56,
            deadband: 0.06,
            k_v: 0.5,
            k_w: 0.8,
            flip_turn: false,
        }
    }
}

impl JoystickConfig {
    pub fn code_to_volts(&self, code: u8) -> f64 {
        code as f64 / 255.0 * self.v_ref
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoystickChannels {
    pub code_a: u8,
    pub code_b: u8,
    pub v_a: f64,
    pub v_b: f64,
}

impl JoystickChannels {
    pub fn new(code_a: u8, code_b: u8, cfg: &JoystickConfig) -> Self {
        Self {
            code_a,
            code_b,
            v_a: cfg.code_to_volts(code_a),
            v_b: cfg.code_to_volts(code_b),
        }
    }

    pub fn stable(cfg: &JoystickConfig) -> Self {
        Self::new(STABLE_CODE, STABLE_CODE, cfg)
    }
}

fn dead(x: f64, band: f64) -> f64 {
    if x.abs() <= band {
        0.0
    } else {
        x
    }
}

/// Linear speed and yaw rate (left turns positive) for the given terminals.
pub fn channels_to_velocity(ch: &JoystickChannels, cfg: &JoystickConfig) -> (f64, f64) {
    let v = cfg.k_v * dead(ch.v_a - cfg.neutral_a, cfg.deadband);
    let turn = dead(cfg.neutral_b - ch.v_b, cfg.deadband);
    let omega = if cfg.flip_turn { -cfg.k_w * turn } else { cfg.k_w * turn };
    (v, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelchairState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
}

impl WheelchairState {
    /// Unicycle step; heading is advanced before the position.
    pub fn step(&self, v: f64, omega: f64, dt: f64) -> WheelchairState {
        let heading = self.heading + omega * dt;
        WheelchairState {
            x: self.x + v * heading.cos() * dt,
            y: self.y + v * heading.sin() * dt,
            heading,
            v,
            omega,
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.v == 0.0 && self.omega == 0.0
    }
}
