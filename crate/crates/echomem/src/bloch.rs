//! Single-atom density-matrix dynamics for a Λ-type three-level atom.
//!
//! The atom has two lower states |1⟩ (ground) and |3⟩ (spin) and one upper
//! state |2⟩. The optical field couples |1⟩–|2⟩, the control field couples
//! |2⟩–|3⟩, and Δ is the detuning of the atom's optical transition from
//! line center. The state is the set of six independent density-matrix
//! components
//!
//! ```text
//! σ = [ pop1   coh12  coh13 ]
//!     [  .     pop2   coh32†]
//!     [  .      .     pop3  ]
//! ```
//!
//! in the sign convention where the coherence driven by a weak resonant
//! optical pulse is +i·(area/2), i.e. absorptive coherence carries a
//! positive prefactor. The lower triangle is reconstructed by conjugation
//! and is never stored or integrated.
//!
//! In this convention the equations of motion are generated by the
//! Hermitian matrix
//!
//! ```text
//! H = [ 0    εl   0   ]
//!     [ εl*  Δ    εj* ]          σ̇ = -i [H, σ] - γ (optical coherences)
//!     [ 0    εj   0   ]
//! ```
//!
//! with εl the optical envelope and εj the control envelope (both complex
//! Rabi amplitudes). Because the generator is Hermitian, trace, hermiticity
//! and positivity are exact invariants of the continuous dynamics; the
//! integrator only adds its truncation error on top.
//!
//! Pulses can act in two modes. The impulsive mode applies the closed-form
//! rotation `exp(-i θ/2 X)` where X is the coupling matrix of the driven
//! transition and θ is the pulse area (the time integral of twice the Rabi
//! envelope, so θ = π swaps the two coupled populations). The integrated
//! mode steps the full six-component system with fourth-order Runge-Kutta,
//! which resolves the detuning phase accumulated during a finite pulse —
//! the effect the impulsive limit discards.

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Detuning of one atom's optical transition from line center (rad/time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detuning(pub f64);

/// Pulse area in radians: the time integral of twice the Rabi envelope.
///
/// θ = π fully swaps the populations of the driven two-level pair. On the
/// control transition the coherence transfer is 4π-periodic: a 2π control
/// pulse negates both `coh12` and `coh13` rather than restoring them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseArea(pub f64);

/// Six independent density-matrix components of one atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub pop1: f64,
    pub pop2: f64,
    pub pop3: f64,
    pub coh12: C64,
    pub coh13: C64,
    pub coh32: C64,
}

impl AtomState {
    /// All population in the ground state, no coherence.
    pub fn ground() -> Self {
        AtomState {
            pop1: 1.0,
            pop2: 0.0,
            pop3: 0.0,
            coh12: C64::new(0.0, 0.0),
            coh13: C64::new(0.0, 0.0),
            coh32: C64::new(0.0, 0.0),
        }
    }

    /// All population in the excited state |2⟩ (an inverted medium).
    pub fn inverted() -> Self {
        AtomState { pop1: 0.0, pop2: 1.0, ..Self::ground() }
    }

    pub fn trace(&self) -> f64 {
        self.pop1 + self.pop2 + self.pop3
    }

    /// Population, Hermiticity and positivity checks at tolerance `tol`.
    ///
    /// Positivity is the Cauchy-Schwarz bound |σᵢⱼ|² ≤ σᵢᵢ σⱼⱼ applied to
    /// each stored coherence.
    pub fn is_physical(&self, tol: f64) -> bool {
        let pops_ok = [self.pop1, self.pop2, self.pop3]
            .iter()
            .all(|&p| p >= -tol && p <= 1.0 + tol);
        let trace_ok = (self.trace() - 1.0).abs() <= tol;
        let pos_ok = self.coh12.norm_sqr() <= self.pop1 * self.pop2 + tol
            && self.coh13.norm_sqr() <= self.pop1 * self.pop3 + tol
            && self.coh32.norm_sqr() <= self.pop3 * self.pop2 + tol;
        pops_ok && trace_ok && pos_ok
    }

    /// Purity tr(σ²); at most 1 for any physical state, conserved by the
    /// exact dynamics.
    pub fn purity(&self) -> f64 {
        self.pop1 * self.pop1
            + self.pop2 * self.pop2
            + self.pop3 * self.pop3
            + 2.0 * (self.coh12.norm_sqr() + self.coh13.norm_sqr() + self.coh32.norm_sqr())
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.pop1.is_finite()
            && self.pop2.is_finite()
            && self.pop3.is_finite()
            && self.coh12.is_finite()
            && self.coh13.is_finite()
            && self.coh32.is_finite()
    }
}

/// Time derivative of an [`AtomState`]; only used by the integrators.
#[derive(Debug, Clone, Copy)]
pub struct AtomDeriv {
    pub pop1: f64,
    pub pop2: f64,
    pub pop3: f64,
    pub coh12: C64,
    pub coh13: C64,
    pub coh32: C64,
}

/// Right-hand side of the six-component Bloch system.
///
/// `eps_l` is the optical envelope at the atom's position, `eps_j` the
/// control envelope, `gamma` the homogeneous decay rate of the optical
/// coherences (zero in the ideal medium).
#[inline]
pub fn derivative(
    s: &AtomState,
    eps_l: C64,
    eps_j: C64,
    delta: Detuning,
    gamma: f64,
) -> AtomDeriv {
    let i = C64::new(0.0, 1.0);
    let d = delta.0;
    // population flow: Im(ε* σ) pumped by each field
    let opt_pump = (eps_l.conj() * s.coh12).im;
    let ctl_pump = (eps_j.conj() * s.coh32).im;
    AtomDeriv {
        pop1: -2.0 * opt_pump,
        pop2: 2.0 * opt_pump + 2.0 * ctl_pump,
        pop3: -2.0 * ctl_pump,
        coh12: i * (d * s.coh12 + eps_l * (s.pop1 - s.pop2) + eps_j * s.coh13)
            - gamma * s.coh12,
        coh32: i * (d * s.coh32 + eps_j * (s.pop3 - s.pop2) + eps_l * s.coh13.conj())
            - gamma * s.coh32,
        coh13: i * (eps_j.conj() * s.coh12 - eps_l * s.coh32.conj()),
    }
}

#[inline]
fn add_scaled(s: &AtomState, d: &AtomDeriv, h: f64) -> AtomState {
    AtomState {
        pop1: s.pop1 + h * d.pop1,
        pop2: s.pop2 + h * d.pop2,
        pop3: s.pop3 + h * d.pop3,
        coh12: s.coh12 + h * d.coh12,
        coh13: s.coh13 + h * d.coh13,
        coh32: s.coh32 + h * d.coh32,
    }
}

#[inline]
pub(crate) fn rk4_combine(s: &AtomState, k: [&AtomDeriv; 4], dt: f64) -> AtomState {
    let h = dt / 6.0;
    AtomState {
        pop1: s.pop1 + h * (k[0].pop1 + 2.0 * k[1].pop1 + 2.0 * k[2].pop1 + k[3].pop1),
        pop2: s.pop2 + h * (k[0].pop2 + 2.0 * k[1].pop2 + 2.0 * k[2].pop2 + k[3].pop2),
        pop3: s.pop3 + h * (k[0].pop3 + 2.0 * k[1].pop3 + 2.0 * k[2].pop3 + k[3].pop3),
        coh12: s.coh12 + h * (k[0].coh12 + 2.0 * k[1].coh12 + 2.0 * k[2].coh12 + k[3].coh12),
        coh13: s.coh13 + h * (k[0].coh13 + 2.0 * k[1].coh13 + 2.0 * k[2].coh13 + k[3].coh13),
        coh32: s.coh32 + h * (k[0].coh32 + 2.0 * k[1].coh32 + 2.0 * k[2].coh32 + k[3].coh32),
    }
}

/// Errors reported by the time-resolved integrator.
#[derive(Debug, Error)]
pub enum BlochError {
    /// Trace drifted by more than 1e-6 in a single step, which means the
    /// step size violates the stability bound for the given fields.
    #[error("trace drifted by {drift:.3e} in one step of dt = {dt:.3e}; reduce the step")]
    StepTooLarge { drift: f64, dt: f64 },
    #[error("state became non-finite during integration")]
    NonFinite,
}

/// Free evolution for a time `dt` with no fields applied.
///
/// The optical coherences rotate as e^{iΔ·dt}; the spin coherence `coh13`
/// accumulates no detuning phase in this model, and populations are
/// constant.
pub fn free_evolve(state: &AtomState, delta: Detuning, dt: f64) -> AtomState {
    free_evolve_decaying(state, delta, dt, 0.0)
}

/// [`free_evolve`] with a homogeneous decay rate γ = 1/T₂ damping the
/// optical coherences.
pub fn free_evolve_decaying(state: &AtomState, delta: Detuning, dt: f64, gamma: f64) -> AtomState {
    let phase = C64::from_polar((-gamma * dt).exp(), delta.0 * dt);
    AtomState {
        coh12: state.coh12 * phase,
        coh32: state.coh32 * phase,
        ..*state
    }
}

/// Impulsive rotation of area θ on the optical |1⟩–|2⟩ transition.
///
/// Applies the resonant two-level unitary to the full density matrix, so
/// the |3⟩-row coherences are carried along: for θ = π, populations 1 and 2
/// swap, `coh12` conjugates, and `coh13`/`coh32` exchange (up to the fixed
/// phase convention of the rotation).
pub fn apply_optical_rotation(state: &AtomState, area: PulseArea) -> AtomState {
    let (s, c) = (area.0 / 2.0).sin_cos();
    let i = C64::new(0.0, 1.0);
    let cross = 2.0 * c * s * state.coh12.im;
    AtomState {
        pop1: c * c * state.pop1 + s * s * state.pop2 - cross,
        pop2: s * s * state.pop1 + c * c * state.pop2 + cross,
        pop3: state.pop3,
        coh12: c * c * state.coh12 + s * s * state.coh12.conj()
            + i * c * s * (state.pop1 - state.pop2),
        coh13: c * state.coh13 - i * s * state.coh32.conj(),
        coh32: i * s * state.coh13.conj() + c * state.coh32,
    }
}

/// Impulsive rotation of area θ on the control |2⟩–|3⟩ transition.
///
/// The |1⟩-row coherences transfer into each other:
/// `coh12 → cos(θ/2)·coh12 + i·sin(θ/2)·coh13` and symmetrically for
/// `coh13`, so a π pulse moves the optical coherence into the spin
/// coherence with a factor of i. Populations 2 and 3 rotate as a two-level
/// pair. The transfer is 4π-periodic: θ = 2π negates both coherences.
pub fn apply_control_rotation(state: &AtomState, area: PulseArea) -> AtomState {
    let (s, c) = (area.0 / 2.0).sin_cos();
    let i = C64::new(0.0, 1.0);
    let cross = 2.0 * c * s * state.coh32.im;
    AtomState {
        pop1: state.pop1,
        pop2: c * c * state.pop2 + s * s * state.pop3 + cross,
        pop3: s * s * state.pop2 + c * c * state.pop3 - cross,
        coh12: c * state.coh12 + i * s * state.coh13,
        coh13: i * s * state.coh12 + c * state.coh13,
        coh32: c * c * state.coh32 + s * s * state.coh32.conj()
            + i * c * s * (state.pop3 - state.pop2),
    }
}

/// One fourth-order Runge-Kutta step of the full Bloch system.
///
/// The fields are the envelope values at the atom's position, held constant
/// over the step, so `dt` must satisfy the stability bound
/// max(|Δ|, |ε|)·dt ≤ 0.1. A violation shows up as trace drift and is
/// reported as [`BlochError::StepTooLarge`].
pub fn integrate_bloch(
    state: &AtomState,
    optical_field: C64,
    control_field: C64,
    delta: Detuning,
    dt: f64,
) -> Result<AtomState, BlochError> {
    integrate_bloch_decaying(state, optical_field, control_field, delta, dt, 0.0)
}

/// [`integrate_bloch`] with a homogeneous optical-coherence decay rate.
pub fn integrate_bloch_decaying(
    state: &AtomState,
    optical_field: C64,
    control_field: C64,
    delta: Detuning,
    dt: f64,
    gamma: f64,
) -> Result<AtomState, BlochError> {
    let k1 = derivative(state, optical_field, control_field, delta, gamma);
    let k2 = derivative(
        &add_scaled(state, &k1, dt / 2.0),
        optical_field,
        control_field,
        delta,
        gamma,
    );
    let k3 = derivative(
        &add_scaled(state, &k2, dt / 2.0),
        optical_field,
        control_field,
        delta,
        gamma,
    );
    let k4 = derivative(
        &add_scaled(state, &k3, dt),
        optical_field,
        control_field,
        delta,
        gamma,
    );
    let next = rk4_combine(state, [&k1, &k2, &k3, &k4], dt);
    if !next.is_finite() {
        return Err(BlochError::NonFinite);
    }
    // The commutator structure keeps the trace exact even for absurd
    // steps, so runaway integration is caught through the purity instead
    // (conserved by the true flow, inflated by an unstable step).
    let drift = (next.trace() - state.trace())
        .abs()
        .max((next.purity() - state.purity().max(1.0)).max(0.0));
    if drift > 1e-6 {
        return Err(BlochError::StepTooLarge { drift, dt });
    }
    Ok(next)
}
