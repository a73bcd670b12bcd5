//! Protocol catalog and schedule builder for the rephasing sequences.
//!
//! Four protocols are supported:
//!
//! * **Two-pulse echo** — data pulse D, one rephasing pulse R₁; the echo
//!   forms at 2t_R1 - t_D in an inverted medium.
//! * **Double rephasing** — D, R₁, R₂; the final coherence is absorptive,
//!   so the echo at 2(t_R2 - t_R1) + t_D is not radiated.
//! * **Controlled double rephasing (CDR)** — double rephasing plus a
//!   control pair C₁, C₂ on the |2⟩–|3⟩ transition that flips the
//!   coherence sign (emissive echo), steers the emission direction via
//!   k_E2 = k_C1 + k_C2 - k_D, and leaves no population inversion.
//! * **Controlled single rephasing** — D, R₁, C₁, C₂ with no R₂; with a
//!   π–π control pair the final coherence is absorptive, with π–3π it is
//!   emissive. (This sequence stands in for comb-prepared single-rephasing
//!   memories; it leaves the medium inverted, so it is not a complete
//!   memory by itself.)
//!
//! The control pair can sit between the rephasing pulses or after the
//! second one. The placement matters for the echo time: a rephasing pulse
//! applied after the pair conjugates the stored phase offset, so the
//! storage interval t_C2 - t_C1 *advances* the echo in the between
//! placement and *delays* it in the after placement. Only the after
//! placement realizes the storage-time extension
//! t_E2 = t_C2 - t_C1 + 2(t_R2 - t_R1) + t_D, and it is the default.
//!
//! Schedule validation is total: every malformed input maps to a specific
//! [`ScheduleError`], and a successfully built schedule always carries its
//! analytic echo predictions.

use crate::analytic::{self, CoherenceSign};
use crate::bloch::PulseArea;
use crate::phasematch::{self, WaveVectorIndex};
use std::f64::consts::PI;
use thiserror::Error;

/// Role of a pulse in the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    Data,
    Rephase,
    Control,
}

/// Which transition the pulse drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Optical |1⟩–|2⟩ transition (data and rephasing pulses).
    Opt12,
    /// Control |2⟩–|3⟩ transition.
    Ctl23,
}

/// One pulse of a schedule. `duration = 0` means the pulse is applied as an
/// impulsive rotation; a positive duration selects time-resolved
/// integration with a Gaussian envelope of that standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub kind: PulseKind,
    pub transition: Transition,
    pub area: PulseArea,
    pub arrival: f64,
    pub duration: f64,
    pub k: WaveVectorIndex,
}

/// Supported protocol kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    TwoPulseEcho,
    DoubleRephasing,
    Cdr,
    ControlledSingleRephasing,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ProtocolKind::TwoPulseEcho => "two-pulse-echo",
            ProtocolKind::DoubleRephasing => "double-rephasing",
            ProtocolKind::Cdr => "cdr",
            ProtocolKind::ControlledSingleRephasing => "controlled-single-rephasing",
        };
        write!(f, "{name}")
    }
}

/// Placement of the control pair in a CDR sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlOrder {
    /// D, R₁, R₂, C₁, C₂ — the storage interval extends the echo time.
    #[default]
    AfterSecondRephasing,
    /// D, R₁, C₁, C₂, R₂ — the later R₂ conjugates the stored offset, so
    /// the storage interval advances the echo instead.
    BetweenRephasings,
}

impl std::fmt::Display for ControlOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlOrder::AfterSecondRephasing => write!(f, "after"),
            ControlOrder::BetweenRephasings => write!(f, "between"),
        }
    }
}

/// Timing, area, and geometry inputs for [`build_schedule`].
///
/// Defaults: weak data pulse (area 0.02 rad, duration 1/Δ′ in grid units),
/// π rephasing pulses counter-propagating to the data pulse (silent first
/// echo), and a counter-propagating π–π control pair (backward retrieval).
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub t_d: f64,
    pub t_r1: Option<f64>,
    pub t_r2: Option<f64>,
    pub t_c1: Option<f64>,
    pub t_c2: Option<f64>,
    pub d_area: PulseArea,
    pub d_duration: f64,
    pub r1_area: PulseArea,
    pub r2_area: PulseArea,
    pub c1_area: PulseArea,
    pub c2_area: PulseArea,
    /// Durations for the rephasing/control pulses; zero = impulsive.
    pub r_duration: f64,
    pub c_duration: f64,
    pub k_d: WaveVectorIndex,
    pub k_r1: WaveVectorIndex,
    pub k_r2: WaveVectorIndex,
    pub k_c1: WaveVectorIndex,
    pub k_c2: WaveVectorIndex,
    pub control_order: ControlOrder,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            t_d: 0.0,
            t_r1: None,
            t_r2: None,
            t_c1: None,
            t_c2: None,
            d_area: PulseArea(0.02),
            d_duration: 1.0,
            r1_area: PulseArea(PI),
            r2_area: PulseArea(PI),
            c1_area: PulseArea(PI),
            c2_area: PulseArea(PI),
            r_duration: 0.0,
            c_duration: 0.0,
            k_d: WaveVectorIndex(1),
            k_r1: WaveVectorIndex(-1),
            k_r2: WaveVectorIndex(-1),
            k_c1: WaveVectorIndex(1),
            k_c2: WaveVectorIndex(-1),
            control_order: ControlOrder::default(),
        }
    }
}

/// Which echo a prediction refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoLabel {
    E1,
    E2,
}

impl std::fmt::Display for EchoLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EchoLabel::E1 => write!(f, "E1"),
            EchoLabel::E2 => write!(f, "E2"),
        }
    }
}

/// Analytic prediction attached to a built schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoPrediction {
    pub label: EchoLabel,
    pub time: f64,
    pub k: WaveVectorIndex,
    pub silent: bool,
    pub sign: CoherenceSign,
}

impl EchoPrediction {
    /// True when this echo actually leaves the medium: phase matched and
    /// emissive.
    pub fn radiates(&self) -> bool {
        !self.silent && self.sign == CoherenceSign::Emissive
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("{first} at t = {t1} must arrive strictly before {second} at t = {t2}")]
    OrderingViolation {
        first: &'static str,
        t1: f64,
        second: &'static str,
        t2: f64,
    },
    #[error("protocol {kind} requires a {what} pulse time")]
    MissingPulse { kind: ProtocolKind, what: &'static str },
    #[error("protocol {kind} does not use a {what} pulse")]
    UnexpectedPulse { kind: ProtocolKind, what: &'static str },
    #[error("control pulses must appear as a pair or not at all")]
    ControlPairMismatch,
    #[error("pulse area of {what} must be non-negative, got {area}")]
    NegativeArea { what: &'static str, area: f64 },
    #[error("data pulse area must stay in the weak-field regime (<= 0.1 rad), got {0}")]
    DataAreaTooLarge(f64),
    #[error("pulse durations must be non-negative, got {0}")]
    NegativeDuration(f64),
    #[error("schedule times must be finite")]
    NonFiniteTime,
    #[error(
        "predicted echo at t = {echo:.6} would form before the last pulse at t = {last_pulse:.6}"
    )]
    EchoBeforeSequenceEnd { echo: f64, last_pulse: f64 },
    #[error("a rephasing pulse cannot act while the coherence is spin-locked")]
    RephaseWhileLocked,
    #[error("schedule has no control pair, so no storage interval is defined")]
    NoControlPair,
    #[error("input pulses must propagate along the axis: k index of {what} must be +1 or -1, got {k}")]
    InvalidWaveVector { what: &'static str, k: i32 },
}

/// A validated pulse sequence with its analytic echo predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    kind: Option<ProtocolKind>,
    control_order: Option<ControlOrder>,
    pulses: Vec<Pulse>,
    predictions: Vec<EchoPrediction>,
}

impl PulseSchedule {
    /// A bare schedule containing only the data pulse (used for
    /// transmission studies; no echo is predicted or detected).
    pub fn data_only(
        t_d: f64,
        area: PulseArea,
        duration: f64,
        k: WaveVectorIndex,
    ) -> Result<Self, ScheduleError> {
        validate_data_pulse(area, duration)?;
        if !t_d.is_finite() {
            return Err(ScheduleError::NonFiniteTime);
        }
        if k.0.abs() != 1 {
            return Err(ScheduleError::InvalidWaveVector { what: "D", k: k.0 });
        }
        Ok(PulseSchedule {
            kind: None,
            control_order: None,
            pulses: vec![Pulse {
                kind: PulseKind::Data,
                transition: Transition::Opt12,
                area,
                arrival: t_d,
                duration,
                k,
            }],
            predictions: Vec::new(),
        })
    }

    pub fn kind(&self) -> Option<ProtocolKind> {
        self.kind
    }

    pub fn control_order(&self) -> Option<ControlOrder> {
        self.control_order
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn predictions(&self) -> &[EchoPrediction] {
        &self.predictions
    }

    pub fn prediction(&self, label: EchoLabel) -> Option<&EchoPrediction> {
        self.predictions.iter().find(|p| p.label == label)
    }

    fn nth(&self, kind: PulseKind, n: usize) -> Option<&Pulse> {
        self.pulses.iter().filter(|p| p.kind == kind).nth(n)
    }

    pub fn data_pulse(&self) -> Option<&Pulse> {
        self.nth(PulseKind::Data, 0)
    }

    pub fn t_d(&self) -> Option<f64> {
        self.data_pulse().map(|p| p.arrival)
    }

    pub fn t_r1(&self) -> Option<f64> {
        self.nth(PulseKind::Rephase, 0).map(|p| p.arrival)
    }

    pub fn t_r2(&self) -> Option<f64> {
        self.nth(PulseKind::Rephase, 1).map(|p| p.arrival)
    }

    pub fn t_c1(&self) -> Option<f64> {
        self.nth(PulseKind::Control, 0).map(|p| p.arrival)
    }

    pub fn t_c2(&self) -> Option<f64> {
        self.nth(PulseKind::Control, 1).map(|p| p.arrival)
    }

    /// Delay of the first rephasing pulse after the data pulse.
    pub fn rephasing_delay(&self) -> Option<f64> {
        Some(self.t_r1()? - self.t_d()?)
    }

    /// The extendable spin-storage interval t_C2 - t_C1.
    pub fn storage_time(&self) -> Result<f64, ScheduleError> {
        match (self.t_c1(), self.t_c2()) {
            (Some(c1), Some(c2)) => Ok(c2 - c1),
            _ => Err(ScheduleError::NoControlPair),
        }
    }

    pub fn last_arrival(&self) -> f64 {
        self.pulses.iter().map(|p| p.arrival).fold(f64::MIN, f64::max)
    }

    /// Largest Rabi envelope of any finite-duration pulse, used by the grid
    /// stability bound.
    pub fn max_field_amplitude(&self) -> f64 {
        self.pulses
            .iter()
            .map(|p| {
                if p.duration > 0.0 {
                    gaussian_peak(p.area.0, p.duration)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Peak Rabi envelope of a Gaussian pulse of the given area and standard
/// deviation: area = 2·∫ε dt = 2·ε₀·τ·√(2π).
pub fn gaussian_peak(area: f64, tau: f64) -> f64 {
    area / (2.0 * tau * (2.0 * PI).sqrt())
}

/// The extendable spin-storage interval of a schedule (t_C2 - t_C1).
pub fn storage_time(schedule: &PulseSchedule) -> Result<f64, ScheduleError> {
    schedule.storage_time()
}

fn validate_data_pulse(area: PulseArea, duration: f64) -> Result<(), ScheduleError> {
    if area.0 < 0.0 {
        return Err(ScheduleError::NegativeArea { what: "D", area: area.0 });
    }
    if area.0 > 0.1 {
        return Err(ScheduleError::DataAreaTooLarge(area.0));
    }
    if duration < 0.0 || !duration.is_finite() {
        return Err(ScheduleError::NegativeDuration(duration));
    }
    Ok(())
}

fn require(
    kind: ProtocolKind,
    what: &'static str,
    t: Option<f64>,
) -> Result<f64, ScheduleError> {
    t.ok_or(ScheduleError::MissingPulse { kind, what })
}

fn forbid(kind: ProtocolKind, what: &'static str, t: Option<f64>) -> Result<(), ScheduleError> {
    if t.is_some() {
        Err(ScheduleError::UnexpectedPulse { kind, what })
    } else {
        Ok(())
    }
}

fn check_area(what: &'static str, area: PulseArea) -> Result<(), ScheduleError> {
    if area.0 < 0.0 || !area.0.is_finite() {
        Err(ScheduleError::NegativeArea { what, area: area.0 })
    } else {
        Ok(())
    }
}

/// Build and validate a schedule for the given protocol.
///
/// Rephasing areas default to π, the control pair to π–π; set `c2_area` to
/// 3π to flip a controlled-single-rephasing echo from absorptive to
/// emissive. On success the schedule carries the predicted echo times,
/// wavevector indices, silent flags, and coherence signs.
pub fn build_schedule(
    kind: ProtocolKind,
    params: ScheduleParams,
) -> Result<PulseSchedule, ScheduleError> {
    validate_data_pulse(params.d_area, params.d_duration)?;
    check_area("R1", params.r1_area)?;
    check_area("R2", params.r2_area)?;
    check_area("C1", params.c1_area)?;
    check_area("C2", params.c2_area)?;
    if params.r_duration < 0.0 {
        return Err(ScheduleError::NegativeDuration(params.r_duration));
    }
    if params.c_duration < 0.0 {
        return Err(ScheduleError::NegativeDuration(params.c_duration));
    }
    if (params.t_c1.is_some()) != (params.t_c2.is_some()) {
        return Err(ScheduleError::ControlPairMismatch);
    }
    for (what, k) in [
        ("D", params.k_d),
        ("R1", params.k_r1),
        ("R2", params.k_r2),
        ("C1", params.k_c1),
        ("C2", params.k_c2),
    ] {
        if k.0.abs() != 1 {
            return Err(ScheduleError::InvalidWaveVector { what, k: k.0 });
        }
    }

    let data = Pulse {
        kind: PulseKind::Data,
        transition: Transition::Opt12,
        area: params.d_area,
        arrival: params.t_d,
        duration: params.d_duration,
        k: params.k_d,
    };
    let rephase = |t: f64, area: PulseArea, k: WaveVectorIndex| Pulse {
        kind: PulseKind::Rephase,
        transition: Transition::Opt12,
        area,
        arrival: t,
        duration: params.r_duration,
        k,
    };
    let control = |t: f64, area: PulseArea, k: WaveVectorIndex| Pulse {
        kind: PulseKind::Control,
        transition: Transition::Ctl23,
        area,
        arrival: t,
        duration: params.c_duration,
        k,
    };

    let mut named: Vec<(&'static str, Pulse)> = vec![("D", data)];
    let mut control_order = None;
    match kind {
        ProtocolKind::TwoPulseEcho => {
            let t_r1 = require(kind, "R1", params.t_r1)?;
            forbid(kind, "R2", params.t_r2)?;
            forbid(kind, "C1", params.t_c1)?;
            named.push(("R1", rephase(t_r1, params.r1_area, params.k_r1)));
        }
        ProtocolKind::DoubleRephasing => {
            let t_r1 = require(kind, "R1", params.t_r1)?;
            let t_r2 = require(kind, "R2", params.t_r2)?;
            forbid(kind, "C1", params.t_c1)?;
            named.push(("R1", rephase(t_r1, params.r1_area, params.k_r1)));
            named.push(("R2", rephase(t_r2, params.r2_area, params.k_r2)));
        }
        ProtocolKind::Cdr => {
            let t_r1 = require(kind, "R1", params.t_r1)?;
            let t_r2 = require(kind, "R2", params.t_r2)?;
            let t_c1 = require(kind, "C1", params.t_c1)?;
            let t_c2 = require(kind, "C2", params.t_c2)?;
            control_order = Some(params.control_order);
            named.push(("R1", rephase(t_r1, params.r1_area, params.k_r1)));
            match params.control_order {
                ControlOrder::AfterSecondRephasing => {
                    named.push(("R2", rephase(t_r2, params.r2_area, params.k_r2)));
                    named.push(("C1", control(t_c1, params.c1_area, params.k_c1)));
                    named.push(("C2", control(t_c2, params.c2_area, params.k_c2)));
                }
                ControlOrder::BetweenRephasings => {
                    named.push(("C1", control(t_c1, params.c1_area, params.k_c1)));
                    named.push(("C2", control(t_c2, params.c2_area, params.k_c2)));
                    named.push(("R2", rephase(t_r2, params.r2_area, params.k_r2)));
                }
            }
        }
        ProtocolKind::ControlledSingleRephasing => {
            let t_r1 = require(kind, "R1", params.t_r1)?;
            forbid(kind, "R2", params.t_r2)?;
            let t_c1 = require(kind, "C1", params.t_c1)?;
            let t_c2 = require(kind, "C2", params.t_c2)?;
            named.push(("R1", rephase(t_r1, params.r1_area, params.k_r1)));
            named.push(("C1", control(t_c1, params.c1_area, params.k_c1)));
            named.push(("C2", control(t_c2, params.c2_area, params.k_c2)));
        }
    }

    for (name, p) in &named {
        if !p.arrival.is_finite() {
            return Err(ScheduleError::NonFiniteTime);
        }
        let _ = name;
    }
    for w in named.windows(2) {
        let (first, a) = w[0];
        let (second, b) = w[1];
        if b.arrival <= a.arrival {
            return Err(ScheduleError::OrderingViolation {
                first,
                t1: a.arrival,
                second,
                t2: b.arrival,
            });
        }
    }

    let mut schedule = PulseSchedule {
        kind: Some(kind),
        control_order,
        pulses: named.into_iter().map(|(_, p)| p).collect(),
        predictions: Vec::new(),
    };
    schedule.predictions = predictions_for(kind, &params, &schedule)?;

    if let Some(e2) = schedule.prediction(EchoLabel::E2) {
        let last = schedule.last_arrival();
        if e2.time <= last {
            return Err(ScheduleError::EchoBeforeSequenceEnd { echo: e2.time, last_pulse: last });
        }
    }
    Ok(schedule)
}

fn predictions_for(
    kind: ProtocolKind,
    params: &ScheduleParams,
    schedule: &PulseSchedule,
) -> Result<Vec<EchoPrediction>, ScheduleError> {
    let map_err = |e: analytic::OracleError| match e {
        analytic::OracleError::RephaseWhileLocked => ScheduleError::RephaseWhileLocked,
        // structurally excluded by construction above
        other => unreachable!("oracle error on a built schedule: {other}"),
    };

    let mut out = Vec::new();
    let k_e1 = phasematch::echo_k_two_pulse(params.k_r1, params.k_d);
    let e1_expr =
        analytic::coherence_after(schedule, analytic::StageMarker::AfterR1).map_err(map_err)?;
    out.push(EchoPrediction {
        label: EchoLabel::E1,
        time: analytic::first_echo_time(schedule).expect("schedule has D and R1"),
        k: k_e1,
        silent: phasematch::is_silent(k_e1),
        sign: e1_expr.prefactor_sign,
    });

    let final_expr = analytic::final_expression(schedule).map_err(map_err)?;
    let e2_k = match kind {
        ProtocolKind::TwoPulseEcho => None,
        ProtocolKind::DoubleRephasing => {
            Some(phasematch::echo_k_dr(params.k_r1, params.k_r2, params.k_d))
        }
        ProtocolKind::Cdr => Some(phasematch::echo_k_cdr(params.k_c1, params.k_c2, params.k_d)),
        // The control pair redirects the stored first-echo branch the same
        // way it redirects the data branch in CDR.
        ProtocolKind::ControlledSingleRephasing => {
            Some(WaveVectorIndex(params.k_c1.0 + params.k_c2.0 - k_e1.0))
        }
    };
    if let Some(k) = e2_k {
        out.push(EchoPrediction {
            label: EchoLabel::E2,
            time: final_expr.rephase_time(params.t_d),
            k,
            silent: phasematch::is_silent(k),
            sign: final_expr.prefactor_sign,
        });
    }
    Ok(out)
}
