//! Scripted gaze sequences and the delays they produce.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::engine::{ControlLoop, EventLog, LoopError};

/// Consecutive matching hops that count as the chair engaging; shorter
/// bursts are noise twitches, not movement.
pub const ENGAGE_HOPS: usize = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("step {index}: hold {hold_s} s must be positive")]
    Hold { index: usize, hold_s: f64 },
    #[error("step {index}: gaze target {target} outside 0..6")]
    Gaze { index: usize, target: usize },
    #[error("scenario has no steps")]
    Empty,
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    pub gaze: Option<usize>,
    pub hold_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default)]
    pub name: String,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Steps(Vec<ScenarioStep>),
    Named(ScenarioScript),
}

fn step(gaze: Option<usize>, hold_s: f64) -> ScenarioStep {
    ScenarioStep { gaze, hold_s }
}

impl ScenarioScript {
    /// Forward, left, right, reverse; each held 5 s and followed by 5 s of rest.
    pub fn trial1() -> Self {
        Self::drive_sequence("trial-1", &[0, 2, 3, 1])
    }

    /// Left, forward, reverse, right.
    pub fn trial2() -> Self {
        Self::drive_sequence("trial-2", &[2, 0, 1, 3])
    }

    fn drive_sequence(name: &str, targets: &[usize]) -> Self {
        let mut steps = vec![step(None, 5.0)];
        for &t in targets {
            steps.push(step(Some(t), 5.0));
            steps.push(step(None, 5.0));
        }
        Self { name: name.into(), steps }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.steps.is_empty() {
            return Err(ScenarioError::Empty);
        }
        for (index, s) in self.steps.iter().enumerate() {
            if !(s.hold_s > 0.0 && s.hold_s.is_finite()) {
                return Err(ScenarioError::Hold { index, hold_s: s.hold_s });
            }
            if let Some(target) = s.gaze.filter(|&t| t >= 6) {
                return Err(ScenarioError::Gaze { index, target });
            }
        }
        Ok(())
    }

    /// Accepts either a bare list of steps or `{name, steps}`.
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let script = match serde_json::from_str(s)? {
            ScriptFile::Steps(steps) => ScenarioScript { name: String::new(), steps },
            ScriptFile::Named(script) => script,
        };
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.hold_s).sum()
    }
}

/// One delay measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Measured(f64),
    /// The event never happened within the allotted time.
    Fail,
    /// Not defined for this step.
    NotApplicable,
}

impl Delay {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Delay::Measured(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Measured(s) => write!(f, "{s:.1}"),
            Delay::Fail => f.write_str("Fail"),
            Delay::NotApplicable => f.write_str("-"),
        }
    }
}

impl Serialize for Delay {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Delay::Measured(v) => s.serialize_f64(*v),
            Delay::Fail => s.serialize_str("Fail"),
            Delay::NotApplicable => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDelay {
    pub gaze: Option<usize>,
    pub start_s: f64,
    pub hold_s: f64,
    /// Gaze-on to the first of [`ENGAGE_HOPS`] consecutive hops emitting the target's command.
    pub engage: Delay,
    /// Gaze-off to the first hop at which the chair is stationary.
    pub stop: Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub name: String,
    pub window_s: f64,
    pub steps: Vec<StepDelay>,
    pub mean_engage_s: Option<f64>,
    pub mean_stop_s: Option<f64>,
    pub failures: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl fmt::Display for DelayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (window {} s)", self.name, self.window_s)?;
        writeln!(f, "{:>8} {:>6} {:>8} {:>8}", "start", "gaze", "engage", "stop")?;
        for s in &self.steps {
            let gaze = s.gaze.map_or_else(|| "none".to_string(), |g| g.to_string());
            writeln!(f, "{:>8.1} {:>6} {:>8} {:>8}", s.start_s, gaze, s.engage, s.stop)?;
        }
        let show = |m: Option<f64>| m.map_or_else(|| "Fail".to_string(), |v| format!("{v:.2}"));
        writeln!(f, "mean engage {} s, mean stop {} s", show(self.mean_engage_s), show(self.mean_stop_s))?;
        write!(f, "failures {}", self.failures)
    }
}

/// Hop ranges `(first, last]` covered by each step, in hop indices.
fn step_bounds(script: &ScenarioScript, hop_s: f64) -> Vec<(usize, usize)> {
    let mut at = 0;
    script
        .steps
        .iter()
        .map(|s| {
            let n = ((s.hold_s / hop_s).round() as usize).max(1);
            let b = (at, at + n);
            at += n;
            b
        })
        .collect()
}

/// Drive the loop through the script, then read the delays off the log.
pub fn run_scenario(lp: &mut ControlLoop, script: &ScenarioScript) -> Result<(DelayReport, EventLog), ScenarioError> {
    script.validate()?;
    let hop_s = lp.config().hop_s;
    let base = lp.hops() as usize;
    let bounds = step_bounds(script, hop_s);
    let mut log = EventLog::default();
    for (s, &(from, to)) in script.steps.iter().zip(&bounds) {
        lp.set_gaze(s.gaze)?;
        for _ in from..to {
            log.records.push(lp.hop()?);
        }
    }

    let map = *lp.command_map();
    let at = |hop: usize| (base + hop) as f64 * hop_s;
    let steps: Vec<StepDelay> = script
        .steps
        .iter()
        .zip(&bounds)
        .enumerate()
        .map(|(i, (s, &(from, to)))| {
            let Some(g) = s.gaze else {
                return StepDelay {
                    gaze: None,
                    start_s: at(from),
                    hold_s: s.hold_s,
                    engage: Delay::NotApplicable,
                    stop: Delay::NotApplicable,
                };
            };
            // Record index k holds the hop ending at hop number k + 1.
            let code = map.code(g);
            let held = &log.records[from..to];
            let engaged = (0..held.len().saturating_sub(ENGAGE_HOPS - 1))
                .find(|&k| held[k..k + ENGAGE_HOPS].iter().all(|r| r.command_code == code));
            let engage = engaged.map_or(Delay::Fail, |k| Delay::Measured((k + 1) as f64 * hop_s));

            let rest_end = bounds[i + 1..]
                .iter()
                .zip(&script.steps[i + 1..])
                .take_while(|(_, st)| st.gaze.is_none())
                .last()
                .map(|(b, _)| b.1);
            let stop = match (engaged, rest_end) {
                (_, None) => Delay::NotApplicable,
                (None, Some(_)) => Delay::Fail,
                (Some(_), Some(end)) => log.records[to - 1..end]
                    .iter()
                    .position(|r| r.chair.is_stationary())
                    .map_or(Delay::Fail, |k| Delay::Measured(k as f64 * hop_s)),
            };
            StepDelay { gaze: Some(g), start_s: at(from), hold_s: s.hold_s, engage, stop }
        })
        .collect();

    let failures = steps
        .iter()
        .filter(|s| s.engage == Delay::Fail || s.stop == Delay::Fail)
        .count();
    let report = DelayReport {
        name: script.name.clone(),
        window_s: lp.config().window_s,
        mean_engage_s: mean(steps.iter().filter_map(|s| s.engage.seconds())),
        mean_stop_s: mean(steps.iter().filter_map(|s| s.stop.seconds())),
        steps,
        failures,
    };
    Ok((report, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LoopConfig;
    use ssvep_core::synth::SubjectProfile;

    #[test]
    fn trial_scripts() {
        let t = ScenarioScript::trial1();
        assert_eq!(t.steps.len(), 9);
        let gazes: Vec<_> = t.steps.iter().filter_map(|s| s.gaze).collect();
        assert_eq!(gazes, vec![0, 2, 3, 1]);
        assert_eq!(t.duration(), 45.0);
        let gazes: Vec<_> = ScenarioScript::trial2().steps.iter().filter_map(|s| s.gaze).collect();
        assert_eq!(gazes, vec![2, 0, 1, 3]);
    }

    #[test]
    fn parse_both_file_shapes() {
        let bare = ScenarioScript::from_json_str(r#"[{"gaze":0,"hold_s":2},{"gaze":null,"hold_s":3}]"#).unwrap();
        assert_eq!(bare.steps, vec![step(Some(0), 2.0), step(None, 3.0)]);
        let named = ScenarioScript::from_json_str(r#"{"name":"x","steps":[{"gaze":1,"hold_s":1.5}]}"#).unwrap();
        assert_eq!(named.name, "x");
        assert!(ScenarioScript::from_json_str(r#"[{"gaze":0,"hold_s":0}]"#).is_err());
        assert!(ScenarioScript::from_json_str(r#"[{"gaze":6,"hold_s":1}]"#).is_err());
        assert!(ScenarioScript::from_json_str("[]").is_err());
    }

    #[test]
    fn non_responder_fails_to_engage() {
        let mut lp = ControlLoop::with_profile(LoopConfig::default(), SubjectProfile::non_responder()).unwrap();
        let (report, _) = run_scenario(&mut lp, &ScenarioScript::trial1()).unwrap();
        let driven: Vec<_> = report.steps.iter().filter(|s| s.gaze.is_some()).collect();
        assert!(driven.iter().all(|s| s.engage == Delay::Fail && s.stop == Delay::Fail));
        assert_eq!(report.failures, 4);
        assert_eq!(report.mean_stop_s, None);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["steps"][1]["engage"], "Fail");
        assert!(json["steps"][0]["engage"].is_null());
    }

    #[test]
    fn clean_subject_delays() {
        let mut lp = ControlLoop::with_profile(LoopConfig::default(), SubjectProfile::clean()).unwrap();
        let (report, log) = run_scenario(&mut lp, &ScenarioScript::trial1()).unwrap();
        assert_eq!(log.records.len(), 450);
        assert_eq!(report.failures, 0);
        for s in report.steps.iter().filter(|s| s.gaze.is_some()) {
            let stop = s.stop.seconds().unwrap();
            assert!(stop > 0.0 && stop <= 2.0 + 0.2, "{stop}");
            let engage = s.engage.seconds().unwrap();
            assert!(engage > 0.0 && engage <= 2.0, "{engage}");
        }
    }
}
