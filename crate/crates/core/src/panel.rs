//! Stimulus panel menu state machine and the text shown on its six 8x2 LCDs.
//!
//! The wheelchair menu reproduces the firmware's latch behavior exactly:
//! codes 1..=4 mark the matching display "selected" and restore the other
//! direction labels, code 0 clears the latch. The other menus follow the
//! panel layout, with the sixth stimulus acting as off/back everywhere;
//! their device actions are recorded but have no further effect.

use serde::{Deserialize, Serialize};

pub const LCD_COUNT: usize = 6;
pub const LCD_COLUMNS: usize = 8;
pub const SELECTED: &str = "selected";
pub const MANUAL: &str = "manual";

const DIRECTIONS: [&str; 4] = ["forward", "backward", "left", "right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Menu {
    TurnOn,
    Main,
    Wheelchair,
    #[serde(rename = "TV")]
    Tv,
    AirConditioner,
    Light,
}

impl Menu {
    pub const ALL: [Menu; 6] =
        [Menu::TurnOn, Menu::Main, Menu::Wheelchair, Menu::Tv, Menu::AirConditioner, Menu::Light];

    /// First-line labels for each display.
    pub fn labels(self) -> [&'static str; LCD_COUNT] {
        match self {
            Menu::TurnOn => ["", "", "", "", "", "on"],
            Menu::Main => ["chair", "TV", "aircon", "light", "", "off"],
            Menu::Wheelchair => [DIRECTIONS[0], DIRECTIONS[1], DIRECTIONS[2], DIRECTIONS[3], "", ""],
            Menu::Tv => ["on", "ch up", "ch down", "vol up", "vol down", "off"],
            Menu::AirConditioner => ["on", "temp up", "temp dn", "fan up", "fan down", "off"],
            Menu::Light => ["on", "", "", "", "", "off"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Manual,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Device {
    Wheelchair,
    Tv,
    AirConditioner,
    Light,
    Indicator,
}

/// A device request raised by a menu; no device model consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceAction {
    pub device: Device,
    pub action: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PanelState {
    pub menu: Menu,
    pub lcds: [[String; 2]; LCD_COUNT],
    /// Wheelchair latch, 0 = none, 1..=4 = direction.
    pub selection: u8,
    pub mode: Mode,
    /// LED indicator driven by the LED on/off commands.
    pub indicator: bool,
    /// Last command applied; navigation only reacts to a change of code.
    pub last_code: Option<u8>,
    pub last_action: Option<DeviceAction>,
    pub ignored_codes: u32,
}

fn lines(menu: Menu) -> [[String; 2]; LCD_COUNT] {
    menu.labels().map(|l| [l.to_string(), String::new()])
}

impl PanelState {
    pub fn new(menu: Menu) -> Self {
        Self {
            menu,
            lcds: lines(menu),
            selection: 0,
            mode: Mode::Auto,
            indicator: false,
            last_code: None,
            last_action: None,
            ignored_codes: 0,
        }
    }

    /// Panel as the controller shows it after power-up in automatic mode.
    pub fn wheelchair() -> Self {
        Self::new(Menu::Wheelchair)
    }

    pub fn lcd_text(&self) -> [[&str; 2]; LCD_COUNT] {
        std::array::from_fn(|i| [self.lcds[i][0].as_str(), self.lcds[i][1].as_str()])
    }

    fn enter(&mut self, menu: Menu) {
        self.menu = menu;
        self.lcds = lines(menu);
        self.selection = 0;
    }

    fn act(&mut self, device: Device, action: &'static str) {
        self.last_action = Some(DeviceAction { device, action });
    }

    fn wheelchair_code(&mut self, code: u8) {
        match code {
            1..=4 => {
                if self.selection == code {
                    return;
                }
                let k = (code - 1) as usize;
                for (i, label) in DIRECTIONS.iter().enumerate() {
                    if i != k {
                        self.lcds[i] = [label.to_string(), String::new()];
                    }
                }
                self.lcds[k][1] = SELECTED.to_string();
                self.selection = code;
            }
            0 => {
                if self.selection != 0 {
                    let k = (self.selection - 1) as usize;
                    self.lcds[k] = [DIRECTIONS[k].to_string(), String::new()];
                    self.selection = 0;
                }
            }
            5 => {
                self.indicator = true;
                self.act(Device::Indicator, "on");
            }
            6 => {
                self.indicator = false;
                self.act(Device::Wheelchair, "off");
                self.enter(Menu::Main);
            }
            _ => unreachable!(),
        }
    }

    fn device_code(&mut self, device: Device, code: u8) {
        let idx = (code - 1) as usize;
        let label = self.menu.labels()[idx];
        if code == 6 {
            self.act(device, "off");
            self.enter(Menu::Main);
        } else if !label.is_empty() {
            self.act(device, label);
        }
    }

    /// Apply one decoded command. Unknown codes are counted and ignored, and
    /// nothing happens outside automatic mode.
    pub fn apply_command(&self, code: u8) -> PanelState {
        let mut next = self.clone();
        if code > 6 {
            next.ignored_codes += 1;
            return next;
        }
        if self.mode != Mode::Auto || self.last_code == Some(code) {
            return next;
        }
        next.last_code = Some(code);
        match (self.menu, code) {
            (Menu::Wheelchair, c) => next.wheelchair_code(c),
            (_, 0) => {}
            (Menu::TurnOn, 6) => next.enter(Menu::Main),
            (Menu::TurnOn, _) => {}
            (Menu::Main, 1) => next.enter(Menu::Wheelchair),
            (Menu::Main, 2) => next.enter(Menu::Tv),
            (Menu::Main, 3) => next.enter(Menu::AirConditioner),
            (Menu::Main, 4) => next.enter(Menu::Light),
            (Menu::Main, 6) => next.enter(Menu::TurnOn),
            (Menu::Main, _) => {}
            (Menu::Tv, c) => next.device_code(Device::Tv, c),
            (Menu::AirConditioner, c) => next.device_code(Device::AirConditioner, c),
            (Menu::Light, c) => next.device_code(Device::Light, c),
        }
        next
    }

    /// Manual shows "manual" on every display; returning to automatic
    /// restores the current menu's labels with no latched selection.
    pub fn set_mode(&self, mode: Mode) -> PanelState {
        let mut next = self.clone();
        if mode == self.mode {
            return next;
        }
        next.mode = mode;
        next.last_code = None;
        match mode {
            Mode::Manual => {
                next.lcds = std::array::from_fn(|_| [MANUAL.to_string(), String::new()]);
                next.selection = 0;
            }
            Mode::Auto => next.enter(self.menu),
        }
        next
    }

    pub fn lines_fit(&self) -> bool {
        self.lcds.iter().flatten().all(|l| l.chars().count() <= LCD_COLUMNS)
    }
}

impl Default for PanelState {
    fn default() -> Self {
        Self::wheelchair()
    }
}
