//! Run configuration: a flat, sectioned key = value text format chosen for
//! hand-editing and diffing.
//!
//! ```text
//! [medium]
//! alpha = 2.0
//! length = 1.0
//! inhom_width = 1.0
//! lineshape = flat          # flat | gaussian
//! # t2_optical = 100.0      # optional; omit for the ideal medium
//!
//! [grid]
//! n_z = 96
//! n_delta = 161
//! delta_span = 3.0
//! dt = 0.0333
//! t_end = 82.0
//! # seed = 7                # optional detuning-node jitter
//!
//! [schedule]
//! protocol = cdr            # two-pulse-echo | double-rephasing | cdr |
//!                           # controlled-single-rephasing
//! control_order = after     # after | between (cdr only)
//! t_d = 10.0
//! t_r1 = 22.0
//! t_r2 = 48.0
//! t_c1 = 50.0
//! t_c2 = 58.0
//! d_area = 0.02
//! d_duration = 2.0
//! k_d = 1
//! k_r1 = -1
//! k_r2 = -1
//! k_c1 = 1
//! k_c2 = -1
//!
//! [output]
//! dir = out
//! ```
//!
//! Pulse areas default to π (rephasing and controls); `r_duration` and
//! `c_duration` select time-resolved pulses when positive (default 0,
//! impulsive). `#` starts a comment. Unknown keys are rejected.

use echomem::bloch::PulseArea;
use echomem::ensemble::{LineShape, MediumConfig, SimGrid};
use echomem::phasematch::WaveVectorIndex;
use echomem::protocol::{ControlOrder, ProtocolKind, ScheduleParams};
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub medium: MediumConfig,
    pub grid: SimGrid,
    pub protocol: ProtocolKind,
    pub params: ScheduleParams,
    pub out_dir: PathBuf,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: key `{key}` appears outside any [section]")]
    NoSection { line: usize, key: String },
    #[error("line {line}: unknown section `[{name}]`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: could not parse `{value}` for `{key}`: {expected}")]
    BadValue { line: usize, key: String, value: String, expected: &'static str },
    #[error("missing required key `{key}` in [{section}]")]
    Missing { section: &'static str, key: &'static str },
}

#[derive(Default)]
struct Raw {
    entries: Vec<(String, String, String, usize)>, // (section, key, value, line)
}

impl Raw {
    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let idx = self
            .entries
            .iter()
            .position(|(s, k, _, _)| s == section && k == key)?;
        let (_, _, v, line) = self.entries.remove(idx);
        Some((v, line))
    }
}

fn parse_raw(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::default();
    let mut section: Option<String> = None;
    for (n, full_line) in text.lines().enumerate() {
        let line = n + 1;
        let stripped = match full_line.find('#') {
            Some(i) => &full_line[..i],
            None => full_line,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !["medium", "grid", "schedule", "output"].contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { line, name });
            }
            section = Some(name);
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line,
            text: stripped.to_string(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let section = section.clone().ok_or_else(|| ConfigError::NoSection {
            line,
            key: key.clone(),
        })?;
        raw.entries.push((section, key, value, line));
    }
    Ok(raw)
}

fn value<T: std::str::FromStr>(
    raw: &mut Raw,
    section: &'static str,
    key: &'static str,
    expected: &'static str,
) -> Result<Option<T>, ConfigError> {
    match raw.take(section, key) {
        None => Ok(None),
        Some((v, line)) => v.parse::<T>().map(Some).map_err(|_| ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: v,
            expected,
        }),
    }
}

fn require<T>(
    opt: Option<T>,
    section: &'static str,
    key: &'static str,
) -> Result<T, ConfigError> {
    opt.ok_or(ConfigError::Missing { section, key })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = parse_raw(text)?;

        let alpha = require(value::<f64>(&mut raw, "medium", "alpha", "a number")?, "medium", "alpha")?;
        let length =
            require(value::<f64>(&mut raw, "medium", "length", "a number")?, "medium", "length")?;
        let inhom_width = require(
            value::<f64>(&mut raw, "medium", "inhom_width", "a number")?,
            "medium",
            "inhom_width",
        )?;
        let t2_optical = value::<f64>(&mut raw, "medium", "t2_optical", "a number")?;
        let lineshape = match raw.take("medium", "lineshape") {
            None => LineShape::Gaussian,
            Some((v, line)) => match v.as_str() {
                "gaussian" => LineShape::Gaussian,
                "flat" => LineShape::FlatWindow,
                _ => {
                    return Err(ConfigError::BadValue {
                        line,
                        key: "lineshape".into(),
                        value: v,
                        expected: "`gaussian` or `flat`",
                    })
                }
            },
        };
        let medium = MediumConfig { alpha, length, inhom_width, t2_optical, lineshape };

        let grid = SimGrid {
            n_z: require(value::<usize>(&mut raw, "grid", "n_z", "an integer")?, "grid", "n_z")?,
            n_delta: require(
                value::<usize>(&mut raw, "grid", "n_delta", "an integer")?,
                "grid",
                "n_delta",
            )?,
            delta_span: require(
                value::<f64>(&mut raw, "grid", "delta_span", "a number")?,
                "grid",
                "delta_span",
            )?,
            dt: require(value::<f64>(&mut raw, "grid", "dt", "a number")?, "grid", "dt")?,
            t_end: require(value::<f64>(&mut raw, "grid", "t_end", "a number")?, "grid", "t_end")?,
            seed: value::<u64>(&mut raw, "grid", "seed", "an integer")?,
        };

        let protocol = match raw.take("schedule", "protocol") {
            None => return Err(ConfigError::Missing { section: "schedule", key: "protocol" }),
            Some((v, line)) => match v.as_str() {
                "two-pulse-echo" => ProtocolKind::TwoPulseEcho,
                "double-rephasing" => ProtocolKind::DoubleRephasing,
                "cdr" => ProtocolKind::Cdr,
                "controlled-single-rephasing" => ProtocolKind::ControlledSingleRephasing,
                _ => {
                    return Err(ConfigError::BadValue {
                        line,
                        key: "protocol".into(),
                        value: v,
                        expected: "two-pulse-echo | double-rephasing | cdr | controlled-single-rephasing",
                    })
                }
            },
        };
        let control_order = match raw.take("schedule", "control_order") {
            None => ControlOrder::AfterSecondRephasing,
            Some((v, line)) => match v.as_str() {
                "after" => ControlOrder::AfterSecondRephasing,
                "between" => ControlOrder::BetweenRephasings,
                _ => {
                    return Err(ConfigError::BadValue {
                        line,
                        key: "control_order".into(),
                        value: v,
                        expected: "`after` or `between`",
                    })
                }
            },
        };

        let defaults = ScheduleParams::default();
        let area = |raw: &mut Raw, key: &'static str, dflt: PulseArea| -> Result<PulseArea, ConfigError> {
            Ok(value::<f64>(raw, "schedule", key, "a number")?.map(PulseArea).unwrap_or(dflt))
        };
        let kvec = |raw: &mut Raw, key: &'static str, dflt: WaveVectorIndex| -> Result<WaveVectorIndex, ConfigError> {
            Ok(value::<i32>(raw, "schedule", key, "an integer")?.map(WaveVectorIndex).unwrap_or(dflt))
        };
        let params = ScheduleParams {
            t_d: require(value::<f64>(&mut raw, "schedule", "t_d", "a number")?, "schedule", "t_d")?,
            t_r1: value::<f64>(&mut raw, "schedule", "t_r1", "a number")?,
            t_r2: value::<f64>(&mut raw, "schedule", "t_r2", "a number")?,
            t_c1: value::<f64>(&mut raw, "schedule", "t_c1", "a number")?,
            t_c2: value::<f64>(&mut raw, "schedule", "t_c2", "a number")?,
            d_area: area(&mut raw, "d_area", defaults.d_area)?,
            d_duration: value::<f64>(&mut raw, "schedule", "d_duration", "a number")?
                .unwrap_or(1.0 / inhom_width),
            r1_area: area(&mut raw, "r1_area", defaults.r1_area)?,
            r2_area: area(&mut raw, "r2_area", defaults.r2_area)?,
            c1_area: area(&mut raw, "c1_area", defaults.c1_area)?,
            c2_area: area(&mut raw, "c2_area", defaults.c2_area)?,
            r_duration: value::<f64>(&mut raw, "schedule", "r_duration", "a number")?.unwrap_or(0.0),
            c_duration: value::<f64>(&mut raw, "schedule", "c_duration", "a number")?.unwrap_or(0.0),
            k_d: kvec(&mut raw, "k_d", defaults.k_d)?,
            k_r1: kvec(&mut raw, "k_r1", defaults.k_r1)?,
            k_r2: kvec(&mut raw, "k_r2", defaults.k_r2)?,
            k_c1: kvec(&mut raw, "k_c1", defaults.k_c1)?,
            k_c2: kvec(&mut raw, "k_c2", defaults.k_c2)?,
            control_order,
        };

        let out_dir = PathBuf::from(
            raw.take("output", "dir").map(|(v, _)| v).unwrap_or_else(|| "out".to_string()),
        );

        if let Some((section, key, _, line)) = raw.entries.first() {
            return Err(ConfigError::UnknownKey {
                line: *line,
                section: section.clone(),
                key: key.clone(),
            });
        }
        Ok(RunConfig { medium, grid, protocol, params, out_dir })
    }

    /// Canonical text form; `parse` of the result reproduces the config
    /// exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "[medium]").unwrap();
        writeln!(s, "alpha = {}", self.medium.alpha).unwrap();
        writeln!(s, "length = {}", self.medium.length).unwrap();
        writeln!(s, "inhom_width = {}", self.medium.inhom_width).unwrap();
        if let Some(t2) = self.medium.t2_optical {
            writeln!(s, "t2_optical = {t2}").unwrap();
        }
        let shape = match self.medium.lineshape {
            LineShape::Gaussian => "gaussian",
            LineShape::FlatWindow => "flat",
        };
        writeln!(s, "lineshape = {shape}").unwrap();

        writeln!(s, "\n[grid]").unwrap();
        writeln!(s, "n_z = {}", self.grid.n_z).unwrap();
        writeln!(s, "n_delta = {}", self.grid.n_delta).unwrap();
        writeln!(s, "delta_span = {}", self.grid.delta_span).unwrap();
        writeln!(s, "dt = {}", self.grid.dt).unwrap();
        writeln!(s, "t_end = {}", self.grid.t_end).unwrap();
        if let Some(seed) = self.grid.seed {
            writeln!(s, "seed = {seed}").unwrap();
        }

        writeln!(s, "\n[schedule]").unwrap();
        writeln!(s, "protocol = {}", self.protocol).unwrap();
        writeln!(s, "control_order = {}", self.params.control_order).unwrap();
        writeln!(s, "t_d = {}", self.params.t_d).unwrap();
        for (key, t) in [
            ("t_r1", self.params.t_r1),
            ("t_r2", self.params.t_r2),
            ("t_c1", self.params.t_c1),
            ("t_c2", self.params.t_c2),
        ] {
            if let Some(t) = t {
                writeln!(s, "{key} = {t}").unwrap();
            }
        }
        writeln!(s, "d_area = {}", self.params.d_area.0).unwrap();
        writeln!(s, "d_duration = {}", self.params.d_duration).unwrap();
        writeln!(s, "r1_area = {}", self.params.r1_area.0).unwrap();
        writeln!(s, "r2_area = {}", self.params.r2_area.0).unwrap();
        writeln!(s, "c1_area = {}", self.params.c1_area.0).unwrap();
        writeln!(s, "c2_area = {}", self.params.c2_area.0).unwrap();
        writeln!(s, "r_duration = {}", self.params.r_duration).unwrap();
        writeln!(s, "c_duration = {}", self.params.c_duration).unwrap();
        writeln!(s, "k_d = {}", self.params.k_d.0).unwrap();
        writeln!(s, "k_r1 = {}", self.params.k_r1.0).unwrap();
        writeln!(s, "k_r2 = {}", self.params.k_r2.0).unwrap();
        writeln!(s, "k_c1 = {}", self.params.k_c1.0).unwrap();
        writeln!(s, "k_c2 = {}", self.params.k_c2.0).unwrap();

        writeln!(s, "\n[output]").unwrap();
        writeln!(s, "dir = {}", self.out_dir.display()).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# backward CDR retrieval
[medium]
alpha = 2.0
length = 1.0
inhom_width = 1.0
lineshape = flat

[grid]
n_z = 96
n_delta = 161
delta_span = 3.0
dt = 0.03333333333333333
t_end = 82.0

[schedule]
protocol = cdr
control_order = after
t_d = 10.0
t_r1 = 22.0
t_r2 = 48.0
t_c1 = 50.0
t_c2 = 58.0
d_area = 0.02
d_duration = 2.0

[output]
dir = out
"#;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.protocol, ProtocolKind::Cdr);
        assert_eq!(cfg.medium.alpha, 2.0);
        assert_eq!(cfg.grid.n_delta, 161);
        assert_eq!(cfg.params.t_c2, Some(58.0));
        assert_eq!(cfg.params.k_c2, WaveVectorIndex(-1)); // default
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let text = cfg.to_config_string();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, again);
        // and the canonical form is a fixed point
        assert_eq!(text, again.to_config_string());
    }

    #[test]
    fn round_trips_awkward_floats() {
        let mut cfg = RunConfig::parse(SAMPLE).unwrap();
        cfg.grid.dt = 1.0 / 30.0;
        cfg.medium.alpha = 0.1 + 0.2;
        cfg.medium.t2_optical = Some(1e-12);
        cfg.grid.seed = Some(u64::MAX);
        let again = RunConfig::parse(&cfg.to_config_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("alpha = 2.0", "alpha = fast");
        match RunConfig::parse(&bad) {
            Err(ConfigError::BadValue { line, key, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(key, "alpha");
            }
            other => panic!("expected BadValue, got {other:?}"),
        }
        let bad = SAMPLE.replace("[grid]", "[grids]");
        assert!(matches!(RunConfig::parse(&bad), Err(ConfigError::UnknownSection { .. })));
        // a typo that loses a required key is reported as missing
        let bad = SAMPLE.replace("n_z = 96", "nz = 96");
        assert!(matches!(
            RunConfig::parse(&bad),
            Err(ConfigError::Missing { section: "grid", key: "n_z" })
        ));
        // an extra key is rejected outright
        let bad = SAMPLE.replace("length = 1.0", "length = 1.0\nwidth = 3.0");
        assert!(matches!(RunConfig::parse(&bad), Err(ConfigError::UnknownKey { .. })));
        let bad = SAMPLE.replace("protocol = cdr", "");
        assert_eq!(
            RunConfig::parse(&bad),
            Err(ConfigError::Missing { section: "schedule", key: "protocol" })
        );
    }
}
