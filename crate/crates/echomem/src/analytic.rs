//! Closed-form results for the rephasing protocols, used both as the fast
//! calculator behind the CLI and as ground truth for the simulator.
//!
//! # Coherence bookkeeping
//!
//! After the data pulse is absorbed, the ensemble coherence of a Δ-detuned
//! atom always has the shape
//!
//! ```text
//! σ₁₂(t, Δ) = s · i · e^{-iΔ(offset - t)} · S(Δ)
//! ```
//!
//! where s = ±1 is the prefactor sign (+1 absorptive, -1 emissive), S(Δ)
//! is the data-pulse spectrum either plain or conjugated, and `offset` is a
//! signed combination of the schedule times. Each pulse transforms the
//! triple (s, offset, S) by a simple rule:
//!
//! * an impulsive rephasing pulse at t_R conjugates the coherence:
//!   s → -s, offset → 2·t_R - offset, S → S†;
//! * a control pair (areas θ₁ at t_C1, θ₂ at t_C2) locks the coherence in
//!   the spin state for the storage interval and returns it with
//!   s → -s·sgn(sin θ₁/2 · sin θ₂/2), offset → offset + (t_C2 - t_C1).
//!
//! The ensemble rephases — and an echo can form — at the time where the
//! Δ-dependence of the total phase vanishes: t = offset + t_D for a plain
//! spectrum, t = offset - t_D for a conjugated one. Note that a rephasing
//! pulse applied *after* a control pair conjugates the stored offset, so
//! the storage interval then shifts the echo the other way; the two
//! supported control-pair placements therefore predict different echo
//! times, and [`echo_time`] accounts for the order.
//!
//! Emission itself is a separate question: absorptive coherence (s = +1)
//! is reabsorbed by the medium rather than radiated, so only emissive
//! stages with a phase-matched wavevector produce an echo field.
//!
//! # Efficiencies
//!
//! For the controlled double-rephasing memory the retrieval efficiency has
//! the closed forms (αL the dimensionless optical depth)
//!
//! ```text
//! backward:  η = (1 - e^{-αL})²            → 1 for αL ≫ 1
//! forward:   η = (αL)² e^{-αL}             → max 4e⁻² ≈ 0.541 at αL = 2
//! ```
//!
//! and the conventional two-pulse echo in the inverted medium is amplified
//! by 4·sinh²(αz/2). The data pulse itself obeys Beer's law, decaying as
//! e^{-αz/2} in amplitude.

use crate::protocol::{Pulse, PulseKind, PulseSchedule};
use thiserror::Error;

/// Sign of the ensemble coherence relative to the absorption convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherenceSign {
    /// Same sign as freshly absorbed coherence; reabsorbed, not radiated.
    Absorptive,
    /// Opposite sign; radiates a macroscopic field when phase matched.
    Emissive,
}

impl CoherenceSign {
    pub fn value(self) -> i8 {
        match self {
            CoherenceSign::Absorptive => 1,
            CoherenceSign::Emissive => -1,
        }
    }

    fn flipped(self) -> Self {
        match self {
            CoherenceSign::Absorptive => CoherenceSign::Emissive,
            CoherenceSign::Emissive => CoherenceSign::Absorptive,
        }
    }
}

impl std::fmt::Display for CoherenceSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoherenceSign::Absorptive => write!(f, "absorptive"),
            CoherenceSign::Emissive => write!(f, "emissive"),
        }
    }
}

/// Whether the stage expression carries the plain or conjugated data
/// spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceSpectrum {
    Plain,
    Conjugated,
}

impl SourceSpectrum {
    fn flipped(self) -> Self {
        match self {
            SourceSpectrum::Plain => SourceSpectrum::Conjugated,
            SourceSpectrum::Conjugated => SourceSpectrum::Plain,
        }
    }
}

/// Leading data-sourced coherence term at one stage of a schedule.
///
/// Rephasing-field source terms are dropped here exactly as the closed
/// forms drop them; the simulator keeps everything and thereby measures
/// what the dropped terms contribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceExpression {
    pub prefactor_sign: CoherenceSign,
    /// Accumulated deterministic offset inside e^{-iΔ(offset - t)}.
    pub phase_offset: f64,
    pub source_spectrum: SourceSpectrum,
    /// True while the coherence sits in the spin state between the two
    /// control pulses (no optical coherence to radiate or conjugate).
    pub locked: bool,
}

impl CoherenceExpression {
    /// Time at which the ensemble phase realigns for this expression.
    pub fn rephase_time(&self, t_d: f64) -> f64 {
        match self.source_spectrum {
            SourceSpectrum::Plain => self.phase_offset + t_d,
            SourceSpectrum::Conjugated => self.phase_offset - t_d,
        }
    }
}

/// Pulse boundaries at which a stage expression can be requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageMarker {
    AfterD,
    AfterR1,
    AfterR2,
    AfterC1,
    AfterC2,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("stage marker {0:?} names a pulse the schedule does not contain")]
    StageNotInSchedule(StageMarker),
    #[error("schedule applies a rephasing pulse while the coherence is spin-locked")]
    RephaseWhileLocked,
    #[error("schedule has no data pulse")]
    NoDataPulse,
}

/// Leading D-sourced coherence expression after the pulse named by `stage`.
pub fn coherence_after(
    schedule: &PulseSchedule,
    stage: StageMarker,
) -> Result<CoherenceExpression, OracleError> {
    let mut expr: Option<CoherenceExpression> = None;
    let mut lock_start: Option<f64> = None;
    let mut pair_sin_product = 1.0_f64;
    let mut seen = (0usize, 0usize); // (rephase, control) pulses applied

    for pulse in schedule.pulses() {
        match pulse.kind {
            PulseKind::Data => {
                expr = Some(CoherenceExpression {
                    prefactor_sign: CoherenceSign::Absorptive,
                    phase_offset: 0.0,
                    source_spectrum: SourceSpectrum::Plain,
                    locked: false,
                });
                if stage == StageMarker::AfterD {
                    return expr.ok_or(OracleError::NoDataPulse);
                }
            }
            PulseKind::Rephase => {
                let e = expr.as_mut().ok_or(OracleError::NoDataPulse)?;
                if e.locked {
                    return Err(OracleError::RephaseWhileLocked);
                }
                e.prefactor_sign = e.prefactor_sign.flipped();
                e.phase_offset = 2.0 * pulse.arrival - e.phase_offset;
                e.source_spectrum = e.source_spectrum.flipped();
                seen.0 += 1;
                match (seen.0, stage) {
                    (1, StageMarker::AfterR1) | (2, StageMarker::AfterR2) => return Ok(*e),
                    _ => {}
                }
            }
            PulseKind::Control => {
                let e = expr.as_mut().ok_or(OracleError::NoDataPulse)?;
                seen.1 += 1;
                let transfer = (pulse.area.0 / 2.0).sin();
                if seen.1 % 2 == 1 {
                    // first of a pair: optical → spin, phase locks
                    lock_start = Some(pulse.arrival);
                    pair_sin_product = transfer;
                    e.locked = true;
                } else {
                    // second of a pair: spin → optical, net sign flip
                    // scaled by the transfer amplitudes of both pulses
                    pair_sin_product *= transfer;
                    let start = lock_start.take().expect("pair bookkeeping");
                    e.phase_offset += pulse.arrival - start;
                    e.locked = false;
                    e.prefactor_sign = if pair_sin_product > 0.0 {
                        e.prefactor_sign.flipped()
                    } else {
                        e.prefactor_sign
                    };
                }
                match (seen.1, stage) {
                    (1, StageMarker::AfterC1) | (2, StageMarker::AfterC2) => return Ok(*e),
                    _ => {}
                }
            }
        }
    }
    Err(OracleError::StageNotInSchedule(stage))
}

/// Expression after the last pulse of the schedule.
pub fn final_expression(schedule: &PulseSchedule) -> Result<CoherenceExpression, OracleError> {
    let last = last_marker(schedule.pulses()).ok_or(OracleError::NoDataPulse)?;
    coherence_after(schedule, last)
}

fn last_marker(pulses: &[Pulse]) -> Option<StageMarker> {
    let mut marker = None;
    let mut seen = (0usize, 0usize);
    for p in pulses {
        marker = Some(match p.kind {
            PulseKind::Data => StageMarker::AfterD,
            PulseKind::Rephase => {
                seen.0 += 1;
                if seen.0 == 1 { StageMarker::AfterR1 } else { StageMarker::AfterR2 }
            }
            PulseKind::Control => {
                seen.1 += 1;
                if seen.1 == 1 { StageMarker::AfterC1 } else { StageMarker::AfterC2 }
            }
        });
    }
    marker
}

/// Predicted emission time of the schedule's final echo.
///
/// This is the rephasing time of the final stage expression. For a
/// two-pulse sequence it reduces to 2t_R1 - t_D; for double rephasing to
/// 2(t_R2 - t_R1) + t_D; with a control pair after the second rephasing
/// pulse the storage interval adds on top:
/// t_E2 = t_C2 - t_C1 + 2(t_R2 - t_R1) + t_D.
pub fn echo_time(schedule: &PulseSchedule) -> Result<f64, OracleError> {
    let t_d = schedule.t_d().ok_or(OracleError::NoDataPulse)?;
    Ok(final_expression(schedule)?.rephase_time(t_d))
}

/// Predicted time of the first echo, 2t_R1 - t_D, if a rephasing pulse
/// exists.
pub fn first_echo_time(schedule: &PulseSchedule) -> Option<f64> {
    let t_d = schedule.t_d()?;
    let t_r1 = schedule.t_r1()?;
    Some(two_pulse_echo_time(t_d, t_r1))
}

/// Two-pulse echo time 2t_R1 - t_D as a plain formula.
pub fn two_pulse_echo_time(t_d: f64, t_r1: f64) -> f64 {
    2.0 * t_r1 - t_d
}

/// Storage-extended echo time t_C2 - t_C1 + 2(t_R2 - t_R1) + t_D as a
/// plain formula (the control pair after the second rephasing pulse).
pub fn cdr_echo_time(t_d: f64, t_r1: f64, t_r2: f64, t_c1: f64, t_c2: f64) -> f64 {
    (t_c2 - t_c1) + 2.0 * (t_r2 - t_r1) + t_d
}

/// Backward retrieval efficiency (1 - e^{-αL})².
pub fn efficiency_backward(alpha_l: f64) -> f64 {
    let a = 1.0 - (-alpha_l).exp();
    a * a
}

/// Forward retrieval efficiency (αL)²·e^{-αL}; maximal at αL = 2 where it
/// reaches 4e⁻² ≈ 0.541, then decays through reabsorption.
pub fn efficiency_forward(alpha_l: f64) -> f64 {
    alpha_l * alpha_l * (-alpha_l).exp()
}

/// Energy gain of the conventional two-pulse echo from an inverted medium,
/// 4·sinh²(αz/2); exceeds unity once αz > 2·asinh(1/2).
pub fn two_pulse_echo_gain(alpha_z: f64) -> f64 {
    let s = (alpha_z / 2.0).sinh();
    4.0 * s * s
}

/// Beer's-law amplitude transmission e^{-αz/2}.
pub fn beer_transmission(alpha_z: f64) -> f64 {
    (-alpha_z / 2.0).exp()
}

/// Beer's-law energy transmission e^{-αz}.
pub fn beer_energy(alpha_z: f64) -> f64 {
    (-alpha_z).exp()
}
