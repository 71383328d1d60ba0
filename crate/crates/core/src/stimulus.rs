//! Stimulus panel firmware emulation: the tick-driven square-wave scheduler,
//! DAC command words for the daisy-chained converters, timer arithmetic and
//! the LED driver power budget.

use std::io::{self, Write};

use thiserror::Error;

/// Default tick rate, one interrupt every 0.4 ms.
pub const F_INTERRUPT: u32 = 2500;
/// Level written while a stimulus is lit.
pub const LEVEL_HIGH: u8 = 15;
pub const LEVEL_LOW: u8 = 0;
/// Maximum SCLK of the DAC serial interface (Hz). Recorded, not simulated.
pub const SCLK_MAX_HZ: u32 = 30_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StimulusError {
    #[error("frequency {freq} Hz must lie in (0, {max}) Hz")]
    FrequencyOutOfRange { freq: f64, max: f64 },
    #[error("interrupt rate must be positive")]
    InvalidInterruptRate,
    #[error("period {period} s at clock {clock} Hz is shorter than one cycle")]
    PeriodTooShort { period: f64, clock: f64 },
    #[error("op-amp model out of domain: {0}")]
    Domain(&'static str),
}

/// Six independent square-wave generators advanced by a common tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickScheduler {
    pub f_interrupt: u32,
    pub freqs: [f64; 6],
    pub max_counter: [u32; 6],
    pub half_counter: [u32; 6],
    pub counters: [u32; 6],
    pub levels: [u8; 6],
    ticks: u64,
}

pub fn make_scheduler(freqs: [f64; 6], f_interrupt: u32) -> Result<TickScheduler, StimulusError> {
    if f_interrupt == 0 {
        return Err(StimulusError::InvalidInterruptRate);
    }
    let fi = f_interrupt as f64;
    let mut max_counter = [0; 6];
    let mut half_counter = [0; 6];
    for (i, &f) in freqs.iter().enumerate() {
        if !(f > 0.0 && f < fi / 2.0) {
            return Err(StimulusError::FrequencyOutOfRange { freq: f, max: fi / 2.0 });
        }
        // f64::round rounds half away from zero: 312.5 -> 313.
        max_counter[i] = (fi / f).round() as u32;
        half_counter[i] = (fi / f / 2.0).round() as u32;
    }
    Ok(TickScheduler {
        f_interrupt,
        freqs,
        max_counter,
        half_counter,
        counters: [0; 6],
        levels: [LEVEL_LOW; 6],
        ticks: 0,
    })
}

impl TickScheduler {
    /// One interrupt: advance every counter and recompute the output levels.
    pub fn tick(&mut self) -> [u8; 6] {
        for i in 0..6 {
            let remainder = (self.counters[i] + 1) % self.max_counter[i];
            self.counters[i] = remainder;
            self.levels[i] = if remainder < self.half_counter[i] { LEVEL_HIGH } else { LEVEL_LOW };
        }
        self.ticks += 1;
        self.levels
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Frequency actually produced by channel `i` (Hz).
    pub fn realized_frequency(&self, i: usize) -> f64 {
        self.f_interrupt as f64 / self.max_counter[i] as f64
    }

    /// High fraction of one period for channel `i`.
    pub fn duty_cycle(&self, i: usize) -> f64 {
        self.half_counter[i] as f64 / self.max_counter[i] as f64
    }

    /// DAC frames the firmware writes around one tick: the previous levels are
    /// latched with the channel-A update-all write, then the new levels are
    /// staged on B and C (stimuli 1-3) and E, F, G (stimuli 4-6).
    pub fn tick_with_words(&mut self) -> Vec<DaisyFrame> {
        let prev = self.levels;
        let mut frames = vec![daisy_sequence([prev[0], prev[1], prev[2]], DacKind::UpdateAllA)];
        let next = self.tick();
        let low = [next[0], next[1], next[2]];
        let high = [next[3], next[4], next[5]];
        frames.push(daisy_sequence(low, DacKind::B));
        frames.push(daisy_sequence(low, DacKind::C));
        frames.push(daisy_sequence(high, DacKind::E));
        frames.push(daisy_sequence(high, DacKind::F));
        frames.push(daisy_sequence(high, DacKind::G));
        frames
    }

    /// Run `ticks` interrupts, writing `tick,level0..level5` CSV rows.
    pub fn write_trace<W: Write>(&mut self, ticks: u64, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "level0", "level1", "level2", "level3", "level4", "level5"])?;
        for _ in 0..ticks {
            let levels = self.tick();
            let mut row = vec![self.ticks.to_string()];
            row.extend(levels.iter().map(|l| l.to_string()));
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Target of a 16-bit DAC write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DacKind {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    /// Channel A write that also latches every staged channel.
    UpdateAllA,
    /// Switch the converter to write-through mode.
    WtmSelect,
}

impl DacKind {
    pub const ALL: [DacKind; 10] = [
        DacKind::A,
        DacKind::B,
        DacKind::C,
        DacKind::D,
        DacKind::E,
        DacKind::F,
        DacKind::G,
        DacKind::H,
        DacKind::UpdateAllA,
        DacKind::WtmSelect,
    ];

    pub fn base(self) -> u16 {
        match self {
            DacKind::A => 0x0000,
            DacKind::B => 0x1000,
            DacKind::C => 0x2000,
            DacKind::D => 0x3000,
            DacKind::E => 0x4000,
            DacKind::F => 0x5000,
            DacKind::G => 0x6000,
            DacKind::H => 0x7000,
            DacKind::UpdateAllA => 0xB000,
            DacKind::WtmSelect => 0x9000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DacWord {
    pub word: u16,
    pub kind: DacKind,
}

/// Command nibble in bits 15..12, 8-bit value in bits 11..4.
/// The write-through select is a fixed word and ignores `value`.
pub fn dac_word(kind: DacKind, value: u8) -> DacWord {
    let word = match kind {
        DacKind::WtmSelect => kind.base(),
        _ => kind.base() | ((value as u16) << 4),
    };
    DacWord { word, kind }
}

/// One SPI transaction on the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiEvent {
    SyncLow,
    Word(u16),
    SyncHigh,
}

/// Three words shifted through the chain under one sync-low window.
/// `words[0]` is for DAC3 (farthest), `words[2]` for DAC1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaisyFrame {
    pub words: [DacWord; 3],
}

impl DaisyFrame {
    pub fn events(&self) -> Vec<SpiEvent> {
        let mut ev = vec![SpiEvent::SyncLow];
        ev.extend(self.words.iter().map(|w| SpiEvent::Word(w.word)));
        ev.push(SpiEvent::SyncHigh);
        ev
    }

    /// Falling SCLK edges needed for the frame (16 per device).
    pub fn clock_edges(&self) -> usize {
        16 * self.words.len()
    }
}

/// `values` are for DAC1..DAC3; words go out DAC3 first.
pub fn daisy_sequence(values: [u8; 3], kind: DacKind) -> DaisyFrame {
    DaisyFrame {
        words: [dac_word(kind, values[2]), dac_word(kind, values[1]), dac_word(kind, values[0])],
    }
}

/// Write `frames` as one hex word per line, sync edges as `SYNC_LOW`/`SYNC_HIGH`.
pub fn write_word_dump<W: Write>(frames: &[DaisyFrame], mut out: W) -> io::Result<()> {
    for frame in frames {
        for ev in frame.events() {
            match ev {
                SpiEvent::SyncLow => writeln!(out, "SYNC_LOW")?,
                SpiEvent::Word(w) => writeln!(out, "{w:04X}")?,
                SpiEvent::SyncHigh => writeln!(out, "SYNC_HIGH")?,
            }
        }
    }
    Ok(())
}

/// Timer TOP value for an overflow every `period` seconds: `(n + 1) / clock = period`.
pub fn interrupt_top(period: f64, clock: f64) -> Result<u32, StimulusError> {
    let cycles = (period * clock).round();
    if !(cycles >= 1.0) {
        return Err(StimulusError::PeriodTooShort { period, clock });
    }
    Ok(cycles as u32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerRounding {
    #[default]
    Exact,
    /// The current term uses the input voltage rounded to whole volts, which
    /// is how the hand calculation arrives at 0.53 W.
    WholeVoltCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpampPower {
    pub watts: f64,
    /// Input voltage maximizing dissipation, `(vcc - vf) / 2`.
    pub vin_at_max: f64,
}

/// Dissipation of the op-amp current source: `P = (vcc - (vin + vf)) * vin / r`.
pub fn opamp_power(vcc: f64, vf: f64, r: f64, vin: f64) -> Result<OpampPower, StimulusError> {
    opamp_power_with(vcc, vf, r, vin, PowerRounding::Exact)
}

pub fn opamp_power_with(
    vcc: f64,
    vf: f64,
    r: f64,
    vin: f64,
    rounding: PowerRounding,
) -> Result<OpampPower, StimulusError> {
    if !(r > 0.0) {
        return Err(StimulusError::Domain("resistance must be positive"));
    }
    if !(vin >= 0.0 && vin <= vcc - vf) {
        return Err(StimulusError::Domain("vin must lie in [0, vcc - vf]"));
    }
    let current_v = match rounding {
        PowerRounding::Exact => vin,
        PowerRounding::WholeVoltCurrent => vin.round(),
    };
    Ok(OpampPower {
        watts: (vcc - (vin + vf)) * (current_v / r),
        vin_at_max: (vcc - vf) / 2.0,
    })
}

/// Worst-case dissipation at `vin = (vcc - vf) / 2`.
pub fn opamp_max_power(
    vcc: f64,
    vf: f64,
    r: f64,
    rounding: PowerRounding,
) -> Result<OpampPower, StimulusError> {
    opamp_power_with(vcc, vf, r, (vcc - vf) / 2.0, rounding)
}

/// Adjustable regulator output `1.25 * (1 + r2 / r1)`.
pub fn regulator_output(r1: f64, r2: f64) -> f64 {
    1.25 * (1.0 + r2 / r1)
}

/// Junction temperature as computed in the original power budget:
/// `P * theta_ja + theta_jc`. Adding a thermal resistance (°C/W) to a
/// temperature is dimensionally inconsistent; kept for comparison only.
pub fn junction_temperature_as_published(power: f64, theta_ja: f64, theta_jc: f64) -> f64 {
    power * theta_ja + theta_jc
}
